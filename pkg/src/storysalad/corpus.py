"""Corpus ingestion and vocabulary construction.

Documents arrive pre-tokenized (and ideally pre-lemmatized) as JSONL; the only
normalisation performed here is lowercasing.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

UNK = "<unk>"
UNK_ID = 0


class CorpusError(ValueError):
    """Raised for malformed corpus input."""


@dataclass
class Document:
    id: str
    group_key: str
    paragraphs: list[list[list[str]]]

    def __post_init__(self):
        if not self.paragraphs:
            raise CorpusError(f"document {self.id} has no paragraphs")
        for para in self.paragraphs:
            for sent in para:
                if not sent:
                    raise CorpusError(f"document {self.id} contains an empty sentence")
                if any(not tok for tok in sent):
                    raise CorpusError(f"document {self.id} contains an empty token")

    @property
    def sentences(self) -> list[list[str]]:
        return [s for para in self.paragraphs for s in para]

    @property
    def n_sentences(self) -> int:
        return sum(len(p) for p in self.paragraphs)

    def to_json(self) -> dict:
        return {"id": self.id, "group_key": self.group_key, "paragraphs": self.paragraphs}


def _parse_document(obj: dict) -> Document:
    if not isinstance(obj, dict):
        raise CorpusError("expected a JSON object")
    try:
        doc_id = obj["id"]
        paragraphs = obj["paragraphs"]
    except KeyError as exc:
        raise CorpusError(f"missing field {exc.args[0]!r}") from None
    if not isinstance(doc_id, str):
        raise CorpusError("field 'id' must be a string")
    group_key = obj.get("group_key", "")
    if not isinstance(group_key, str):
        raise CorpusError("field 'group_key' must be a string")
    if not isinstance(paragraphs, list):
        raise CorpusError("field 'paragraphs' must be a list")
    paras = []
    for para in paragraphs:
        if not isinstance(para, list):
            raise CorpusError("each paragraph must be a list of sentences")
        sents = []
        for sent in para:
            if not isinstance(sent, list) or not all(isinstance(t, str) for t in sent):
                raise CorpusError("each sentence must be a list of token strings")
            sents.append([t.lower() for t in sent])
        paras.append(sents)
    return Document(id=doc_id, group_key=group_key, paragraphs=paras)


def load_corpus(path: str | Path) -> list[Document]:
    """Read a corpus JSONL file, one document per line, preserving file order."""
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = _parse_document(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            except CorpusError as exc:
                raise CorpusError(f"line {lineno}: {exc}") from None
            if doc.id in seen:
                raise CorpusError(f"duplicate document id {doc.id}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


def write_corpus(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False) + "\n")


@dataclass
class Vocabulary:
    """Frequency-cut token map. Id 0 is always the unknown token."""

    size_limit: int = 100_000
    token_to_id: dict[str, int] = field(default_factory=lambda: {UNK: UNK_ID})

    def __post_init__(self):
        if self.token_to_id.get(UNK) != UNK_ID:
            raise ValueError("vocabulary must map the unknown token to id 0")
        self.id_to_token = [None] * len(self.token_to_id)
        for tok, idx in self.token_to_id.items():
            self.id_to_token[idx] = tok
        if any(t is None for t in self.id_to_token):
            raise ValueError("vocabulary ids must be dense")

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.token_to_id

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token.lower(), UNK_ID)

    @property
    def tokens(self) -> list[str]:
        return list(self.id_to_token)

    @classmethod
    def from_tokens(cls, tokens: Sequence[str], size_limit: int | None = None) -> "Vocabulary":
        """Rebuild from an id-ordered token list (as stored in checkpoints)."""
        if not tokens or tokens[0] != UNK:
            raise ValueError("token list must start with the unknown token")
        return cls(size_limit=size_limit or len(tokens) - 1,
                   token_to_id={t: i for i, t in enumerate(tokens)})


def build_vocabulary_from_sentences(sentences: Iterable[Sequence[str]], limit: int = 100_000,
                                    reserved: Sequence[str] = ()) -> Vocabulary:
    """Keep the ``limit`` most frequent tokens; ties go to the lexicographically smaller token.

    ``reserved`` tokens get ids directly after UNK and do not count against the limit.
    """
    if limit < 1:
        raise ValueError("vocabulary limit must be at least 1")
    counts: Counter[str] = Counter()
    for sent in sentences:
        counts.update(t.lower() for t in sent)
    mapping = {UNK: UNK_ID}
    for tok in reserved:
        mapping.setdefault(tok, len(mapping))
    for tok in reserved:
        counts.pop(tok, None)
    counts.pop(UNK, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    for tok, _ in ranked[:limit]:
        mapping[tok] = len(mapping)
    return Vocabulary(size_limit=limit, token_to_id=mapping)


def build_vocabulary(docs: Sequence[Document], limit: int = 100_000) -> Vocabulary:
    return build_vocabulary_from_sentences((s for d in docs for s in d.sentences), limit)


def encode_sentence(sentence: Sequence[str], vocab: Vocabulary) -> list[int]:
    return [vocab.lookup(t) for t in sentence]
