"""Word-vector tables, average-embedding document vectors and topic similarity."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class EmbeddingError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    unk_vector: np.ndarray | None = None

    def __post_init__(self):
        if self.dim <= 0:
            raise EmbeddingError("embedding dimension must be positive")
        if self.unk_vector is None:
            self.unk_vector = np.zeros(self.dim)
        for tok, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise EmbeddingError(f"vector for {tok!r} has length {vec.shape}, expected {self.dim}")

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.vectors

    def lookup(self, token: str) -> np.ndarray:
        return self.vectors.get(token.lower(), self.unk_vector)


def load_embeddings(path: str | Path, unk_token: str = "<unk>") -> EmbeddingTable:
    """Parse a ``token v1 ... vdim`` text file. The first line fixes ``dim``.

    A row named ``unk_token`` (if present) becomes the fallback vector.
    """
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            tok, values = parts[0].lower(), parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise EmbeddingError(f"line {lineno}: no vector values")
            elif len(values) != dim:
                raise EmbeddingError(
                    f"line {lineno}: dimension {len(values)} does not match {dim}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise EmbeddingError(f"line {lineno}: non-numeric vector value") from None
            vectors.setdefault(tok, vec)
    if dim is None:
        raise EmbeddingError(f"{path}: empty embedding file")
    unk = vectors.pop(unk_token, None)
    return EmbeddingTable(dim=dim, vectors=vectors, unk_vector=unk)


def write_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tok, vec in table.vectors.items():
            fh.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def average_embedding(tokens: Sequence[str], table: EmbeddingTable) -> np.ndarray:
    if len(tokens) == 0:
        raise EmbeddingError("cannot average zero tokens")
    return np.mean([table.lookup(t) for t in tokens], axis=0)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; zero-norm inputs score 0.0."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise EmbeddingError(f"shape mismatch {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def narrative_similarity(narrative_a: Iterable[Sequence[str]], narrative_b: Iterable[Sequence[str]],
                         table: EmbeddingTable) -> float:
    """Cosine between the average embeddings of two token bags (all sentences pooled)."""
    bag_a = [t for s in narrative_a for t in s]
    bag_b = [t for s in narrative_b for t in s]
    if not bag_a or not bag_b:
        raise EmbeddingError("narrative has no tokens")
    return cosine(average_embedding(bag_a, table), average_embedding(bag_b, table))


def topic_similarity(salad, table: EmbeddingTable) -> float:
    """Topic similarity of a salad's two gold narratives (or of a ``(doc_a, doc_b)`` pair)."""
    if isinstance(salad, tuple):
        doc_a, doc_b = salad
        return narrative_similarity(doc_a.sentences, doc_b.sentences, table)
    groups = salad.narratives()
    return narrative_similarity(groups["A"], groups["B"], table)
