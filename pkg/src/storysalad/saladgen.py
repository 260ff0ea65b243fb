"""Story salad construction: content pulling, seeded mixing and pairing policies."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Document
from .embedding import EmbeddingTable, topic_similarity

log = logging.getLogger(__name__)

MIN_SENTENCES = 8
LABELS = ("A", "B")
PAIRING_MODES = ("random", "group_key", "category_filter")


class SaladError(ValueError):
    pass


@dataclass
class SaladItem:
    tokens: list[str]
    gold: str
    source_id: str = ""
    # Event-tuple view of the sentence; None for plain text salads.
    events: list | None = None

    def to_json(self) -> dict:
        out = {"tokens": self.tokens, "gold": self.gold, "source_id": self.source_id}
        if self.events is not None:
            out["events"] = [e.to_json() for e in self.events]
        return out


@dataclass
class Salad:
    id: str
    items: list[SaladItem]
    source_a: str = ""
    source_b: str = ""
    seed: int = 0

    def __post_init__(self):
        labels = {it.gold for it in self.items}
        if labels - set(LABELS):
            raise SaladError(f"salad {self.id}: gold labels must be A or B, got {sorted(labels)}")
        if labels != set(LABELS):
            raise SaladError(f"salad {self.id}: both narratives A and B must be present")
        if self.source_a and self.source_b:
            expected = {"A": self.source_a, "B": self.source_b}
            for it in self.items:
                if it.source_id and it.source_id != expected[it.gold]:
                    raise SaladError(f"salad {self.id}: item source {it.source_id} "
                                     f"inconsistent with gold label {it.gold}")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def gold(self) -> list[str]:
        return [it.gold for it in self.items]

    @property
    def sentences(self) -> list[list[str]]:
        return [it.tokens for it in self.items]

    @property
    def is_event_salad(self) -> bool:
        return all(it.events is not None for it in self.items)

    def narratives(self) -> dict[str, list[list[str]]]:
        out: dict[str, list[list[str]]] = {"A": [], "B": []}
        for it in self.items:
            out[it.gold].append(it.tokens)
        return out

    def to_json(self) -> dict:
        return {"id": self.id, "source_a": self.source_a, "source_b": self.source_b,
                "seed": self.seed, "items": [it.to_json() for it in self.items]}


@dataclass
class PairingPolicy:
    mode: str = "random"
    filter_words: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in PAIRING_MODES:
            raise SaladError(f"unknown pairing mode {self.mode!r}")
        if self.mode == "category_filter" and not self.filter_words:
            raise SaladError("category_filter mode requires at least one filter word")

    def describe(self) -> str:
        if self.mode == "category_filter":
            return f"category_filter({','.join(self.filter_words)})"
        return self.mode


def pull_content(doc: Document) -> list[list[str]]:
    """Shortest whole-paragraph prefix holding at least eight sentences."""
    if doc.n_sentences < MIN_SENTENCES:
        raise SaladError(f"ineligible source document {doc.id}: "
                         f"{doc.n_sentences} sentences, need {MIN_SENTENCES}")
    pulled: list[list[str]] = []
    for para in doc.paragraphs:
        pulled.extend(para)
        if len(pulled) >= MIN_SENTENCES:
            break
    return pulled


def make_salad(doc_a: Document, doc_b: Document, seed: int, salad_id: str | None = None) -> Salad:
    if doc_a.id == doc_b.id:
        raise SaladError(f"cannot mix document {doc_a.id} with itself")
    items = [SaladItem(list(s), "A", doc_a.id) for s in pull_content(doc_a)]
    items += [SaladItem(list(s), "B", doc_b.id) for s in pull_content(doc_b)]
    order = np.random.default_rng(seed).permutation(len(items))
    return Salad(id=salad_id or f"{doc_a.id}+{doc_b.id}", items=[items[i] for i in order],
                 source_a=doc_a.id, source_b=doc_b.id, seed=int(seed))


def derive_seed(seed: int, index: int) -> int:
    """Per-item seed, independent of processing order."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _eligible_groups(docs: Sequence[Document], policy: PairingPolicy) -> list[list[int]]:
    eligible = [i for i, d in enumerate(docs) if d.n_sentences >= MIN_SENTENCES]
    if policy.mode == "random":
        groups = [eligible]
    else:
        if policy.mode == "category_filter":
            words = [w.lower() for w in policy.filter_words]
            eligible = [i for i in eligible if any(w in docs[i].group_key.lower() for w in words)]
        by_key: dict[str, list[int]] = {}
        for i in eligible:
            by_key.setdefault(docs[i].group_key, []).append(i)
        groups = [by_key[k] for k in sorted(by_key)]
    return [g for g in groups if len(g) >= 2]


class _PairSampler:
    """Uniform sampling over eligible unordered pairs.

    Draws without replacement until the pair space is exhausted, then with replacement.
    """

    # Below this size the whole pair space is enumerated and shuffled.
    ENUMERATE_LIMIT = 200_000

    def __init__(self, groups: list[list[int]], rng: np.random.Generator):
        self.groups = groups
        self.rng = rng
        self.sizes = np.array([math.comb(len(g), 2) for g in groups], dtype=float)
        self.total = int(self.sizes.sum())
        self.used: set[tuple[int, int]] = set()
        self.queue: list[tuple[int, int]] | None = None
        if self.total <= self.ENUMERATE_LIMIT:
            pairs = [(g[i], g[j]) for g in groups for i in range(len(g)) for j in range(i + 1, len(g))]
            self.queue = [pairs[k] for k in rng.permutation(len(pairs))]

    def _uniform(self) -> tuple[int, int]:
        g = self.groups[self.rng.choice(len(self.groups), p=self.sizes / self.sizes.sum())]
        i, j = self.rng.choice(len(g), size=2, replace=False)
        a, b = g[i], g[j]
        return (a, b) if a < b else (b, a)

    def draw(self) -> tuple[int, int]:
        if self.queue is not None:
            if self.queue:
                return self.queue.pop()
            return self._uniform()
        if len(self.used) < self.total:
            while True:
                pair = self._uniform()
                if pair not in self.used:
                    self.used.add(pair)
                    return pair
        return self._uniform()


def _build_one(args) -> Salad:
    doc_a, doc_b, seed, salad_id = args
    return make_salad(doc_a, doc_b, seed, salad_id)


def generate_dataset(docs: Sequence[Document], policy: PairingPolicy, n: int, seed: int,
                     jobs: int = 1, id_prefix: str = "salad") -> list[Salad]:
    """Sample ``n`` salads from ``docs`` under ``policy``.

    Pair selection and A/B orientation come from the dataset seed; each salad's shuffle
    uses a seed derived from (dataset seed, salad index), so ``jobs`` does not affect output.
    """
    groups = _eligible_groups(docs, policy)
    if not groups:
        raise SaladError(f"no eligible document pair under policy {policy.describe()}")
    rng = np.random.default_rng(seed)
    sampler = _PairSampler(groups, rng)
    tasks = []
    for index in range(n):
        a, b = sampler.draw()
        if rng.random() < 0.5:
            a, b = b, a
        tasks.append((docs[a], docs[b], derive_seed(seed, index), f"{id_prefix}-{index:06d}"))
    if jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_build_one, tasks, chunksize=max(1, n // (4 * jobs))))
    return [_build_one(t) for t in tasks]


def select_hard(salads: Sequence[Salad], table: EmbeddingTable, k: int) -> list[tuple[Salad, float]]:
    """The ``k`` most topically similar salads, descending, ties by id. Returns (salad, tsim)."""
    if k < 0 or k > len(salads):
        raise SaladError(f"cannot select {k} salads from {len(salads)}")
    scored = [(s, topic_similarity(s, table)) for s in salads]
    scored.sort(key=lambda st: (-st[1], st[0].id))
    return scored[:k]


def parse_salad(obj: dict) -> Salad:
    from .events import parse_event  # event items are optional

    items = []
    for it in obj["items"]:
        events = None
        if "events" in it:
            events = [parse_event(e) for e in it["events"]]
        tokens = it.get("tokens")
        if tokens is None:
            if events is None:
                raise SaladError("item needs tokens or events")
            tokens = [w for e in events for w in e.words()]
        items.append(SaladItem(tokens=[t.lower() for t in tokens], gold=it["gold"],
                               source_id=it.get("source_id", ""), events=events))
    return Salad(id=obj["id"], items=items, source_a=obj.get("source_a", ""),
                 source_b=obj.get("source_b", ""), seed=int(obj.get("seed", 0)))


def load_salads(path: str | Path) -> list[Salad]:
    salads = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                salads.append(parse_salad(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                raise SaladError(f"line {lineno}: {exc}") from None
    return salads


def dump_salad(salad: Salad) -> str:
    return json.dumps(salad.to_json(), ensure_ascii=False)


def write_salads(salads: Iterable[Salad], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in salads:
            fh.write(dump_salad(s) + "\n")
