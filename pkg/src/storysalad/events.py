"""Event-tuple salads, the event feed-forward embedder and co-occurrence pretraining.

Events are <verb, subj, dobj, (prep, pobj)*> records extracted upstream. An event is
embedded as tanh([verb; subj; dobj; mean over pps of (prep; pobj)] W + b); absent subject
or object slots use a dedicated learned NONE token.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Vocabulary, build_vocabulary_from_sentences
from .embedding import cosine
from .neural.layers import event_ffnn_backward, event_ffnn_forward, sigmoid, softplus, xavier
from .neural.model import NONE_TOKEN
from .neural.train import Adam
from .saladgen import Salad, SaladError, derive_seed, parse_salad

log = logging.getLogger(__name__)


class EventError(ValueError):
    pass


@dataclass(frozen=True)
class EventTuple:
    verb: str
    subj: str | None = None
    dobj: str | None = None
    pps: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.verb:
            raise EventError("event tuple needs a verb")
        pps = tuple(tuple(pp) for pp in self.pps)
        for pp in pps:
            if len(pp) != 2 or not pp[0] or not pp[1]:
                raise EventError(f"incomplete prepositional pair {list(pp)}")
        object.__setattr__(self, "pps", pps)

    def words(self) -> list[str]:
        out = [self.verb]
        out += [w for w in (self.subj, self.dobj) if w is not None]
        out += [w for pp in self.pps for w in pp]
        return out

    def to_json(self) -> dict:
        return {"verb": self.verb, "subj": self.subj, "dobj": self.dobj,
                "pps": [list(pp) for pp in self.pps]}


def parse_event(obj: dict) -> EventTuple:
    if not isinstance(obj, dict) or not obj.get("verb"):
        raise EventError("event tuple missing verb")
    pps = obj.get("pps") or []
    for pp in pps:
        if not isinstance(pp, (list, tuple)) or len(pp) != 2 or not all(pp):
            raise EventError(f"prepositional pair must be [prep, pobj], got {pp!r}")
    lower = lambda w: None if w is None else str(w).lower()  # noqa: E731
    return EventTuple(str(obj["verb"]).lower(), lower(obj.get("subj")), lower(obj.get("dobj")),
                      tuple((str(p).lower(), str(o).lower()) for p, o in pps))


def load_event_salads(path: str | Path) -> list[Salad]:
    """Event salad JSONL. Items whose sentence produced no events are dropped."""
    salads = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                items = []
                for it in obj["items"]:
                    if "events" not in it:
                        raise EventError("item without an events list")
                    if not it["events"]:
                        log.warning("line %d: dropping sentence without events", lineno)
                        continue
                    items.append(it)
                obj = dict(obj, items=items)
                salads.append(parse_salad(obj))
            except EventError as exc:
                raise EventError(f"line {lineno}: {exc}") from None
            except (KeyError, TypeError, ValueError, SaladError) as exc:
                raise EventError(f"line {lineno}: malformed event salad ({exc})") from None
    return salads


def write_event_salads(salads: Sequence[Salad], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in salads:
            obj = {"id": s.id, "source_a": s.source_a, "source_b": s.source_b, "seed": s.seed,
                   "items": [{"events": [e.to_json() for e in it.events], "gold": it.gold,
                              "source_id": it.source_id} for it in s.items]}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def event_vocabulary(narratives_or_salads, limit: int = 100_000) -> Vocabulary:
    words = []
    for x in narratives_or_salads:
        if isinstance(x, Salad):
            words.extend(e.words() for it in x.items for e in it.events)
        else:
            words.extend(e.words() for sent in x for e in sent)
    return build_vocabulary_from_sentences(words, limit, reserved=(NONE_TOKEN,))


@dataclass
class EventEncoder:
    """Word vectors plus the feed-forward layer mapping a tuple to an event embedding."""

    vocab: Vocabulary
    params: dict[str, np.ndarray]

    @classmethod
    def initialise(cls, vocab: Vocabulary, word_dim: int, event_dim: int, seed: int) -> "EventEncoder":
        rng = np.random.default_rng(seed)
        return cls(vocab, {"word_embed": xavier(rng, len(vocab), word_dim),
                           "event_W": xavier(rng, 5 * word_dim, event_dim),
                           "event_b": np.zeros(event_dim)})

    def _arrays(self, events: Sequence[EventTuple]):
        v = self.vocab
        none_id = v.lookup(NONE_TOKEN)
        slots = np.array([[v.lookup(e.verb),
                           none_id if e.subj is None else v.lookup(e.subj),
                           none_id if e.dobj is None else v.lookup(e.dobj)] for e in events],
                         dtype=int).reshape(-1, 3)
        pp_ids, pp_event = [], []
        for k, e in enumerate(events):
            for p, o in e.pps:
                pp_ids.append((v.lookup(p), v.lookup(o)))
                pp_event.append(k)
        return slots, np.array(pp_ids, dtype=int).reshape(-1, 2), np.array(pp_event, dtype=int)

    def forward(self, events: Sequence[EventTuple]):
        slots, pp_ids, pp_event = self._arrays(events)
        p = self.params
        return event_ffnn_forward(p["word_embed"], slots, pp_ids, pp_event, len(events),
                                  p["event_W"], p["event_b"])

    def embed(self, events: Sequence[EventTuple]) -> np.ndarray:
        return self.forward(events)[0]


def embed_event(event: EventTuple, encoder: EventEncoder) -> np.ndarray:
    return encoder.embed([event])[0]


@dataclass
class PretrainConfig:
    word_dim: int = 50
    event_dim: int = 50
    negatives: int = 5
    batch_size: int = 64
    steps: int = 500
    learning_rate: float = 1e-2
    seed: int = 0


@dataclass
class PretrainResult:
    encoder: EventEncoder
    losses: list[float] = field(default_factory=list)


def _narratives(data) -> list[list[EventTuple]]:
    """Flatten salads (split by gold label) or nested sentence lists into event narratives."""
    out = []
    for x in data:
        if isinstance(x, Salad):
            for label in ("A", "B"):
                out.append([e for it in x.items if it.gold == label for e in it.events])
        else:
            out.append([e for sent in x for e in sent])
    return [n for n in out if n]


def sgns_loss(encoder: EventEncoder, anchors, positives, negatives, grads=None) -> float:
    """Mean over anchors of -log s(a.p) - sum_k log s(-a.n_k); gradients added into ``grads``."""
    b, k = len(anchors), len(negatives[0]) if negatives else 0
    flat = list(anchors) + list(positives) + [e for row in negatives for e in row]
    h, cache = encoder.forward(flat)
    a, p = h[:b], h[b:2 * b]
    n = h[2 * b:].reshape(b, k, -1)
    pos = np.einsum("bd,bd->b", a, p)
    neg = np.einsum("bd,bkd->bk", a, n)
    loss = float(np.mean(softplus(-pos) + softplus(neg).sum(axis=1)))
    if grads is not None:
        dpos = -sigmoid(-pos) / b
        dneg = sigmoid(neg) / b
        dh = np.zeros_like(h)
        dh[:b] = dpos[:, None] * p + np.einsum("bk,bkd->bd", dneg, n)
        dh[b:2 * b] = dpos[:, None] * a
        dh[2 * b:] = (dneg[:, :, None] * a[:, None, :]).reshape(b * k, -1)
        dE, dW, db = event_ffnn_backward(dh, cache, len(encoder.vocab))
        grads["word_embed"] += dE
        grads["event_W"] += dW
        grads["event_b"] += db
    return loss


class PairSampler:
    """Positive pairs from one narrative, negatives uniformly from the other narratives."""

    def __init__(self, narratives: list[list[EventTuple]], seed: int):
        self.narratives = [n for n in narratives if n]
        eligible = [i for i, n in enumerate(self.narratives) if len(n) >= 2]
        if len(self.narratives) < 2:
            raise EventError("pretraining needs at least two narratives")
        if not eligible:
            raise EventError("pretraining needs a narrative with at least two events")
        self.eligible = eligible
        self.owner = np.concatenate([[i] * len(n) for i, n in enumerate(self.narratives)])
        self.pool = [e for n in self.narratives for e in n]
        self.rng = np.random.default_rng(seed)

    def batch(self, size: int, negatives: int):
        anchors, positives, negs = [], [], []
        for _ in range(size):
            i = self.eligible[int(self.rng.integers(len(self.eligible)))]
            nar = self.narratives[i]
            a, p = self.rng.choice(len(nar), size=2, replace=False)
            row = []
            while len(row) < negatives:
                j = int(self.rng.integers(len(self.pool)))
                if self.owner[j] != i:
                    row.append(self.pool[j])
            anchors.append(nar[a])
            positives.append(nar[p])
            negs.append(row)
        return anchors, positives, negs


def pretrain_event_embeddings(data, config: PretrainConfig | None = None,
                              vocab: Vocabulary | None = None) -> PretrainResult:
    """Skip-gram with negative sampling over events; the window is the whole narrative."""
    config = config or PretrainConfig()
    narratives = _narratives(data)
    sampler = PairSampler(narratives, derive_seed(config.seed, 0))
    if vocab is None:
        vocab = build_vocabulary_from_sentences((e.words() for n in narratives for e in n),
                                                reserved=(NONE_TOKEN,))
    encoder = EventEncoder.initialise(vocab, config.word_dim, config.event_dim,
                                      derive_seed(config.seed, 1))
    opt = Adam(encoder.params, config.learning_rate)
    result = PretrainResult(encoder)
    for step in range(config.steps):
        grads = {k: np.zeros_like(v) for k, v in encoder.params.items()}
        loss = sgns_loss(encoder, *sampler.batch(config.batch_size, config.negatives), grads=grads)
        if not np.isfinite(loss):
            raise EventError(f"non-finite pretraining loss at step {step + 1}")
        opt.step(grads)
        result.losses.append(loss)
    return result


def narrative_cosines(encoder: EventEncoder, narratives) -> tuple[float, float]:
    """Mean pairwise cosine of event embeddings within and across narratives."""
    narratives = _narratives(narratives)
    embs = [encoder.embed(n) for n in narratives]
    within, across = [], []
    for i, ei in enumerate(embs):
        for a in range(len(ei)):
            for b in range(a + 1, len(ei)):
                within.append(cosine(ei[a], ei[b]))
        for j in range(i + 1, len(embs)):
            for u in ei:
                for v in embs[j]:
                    across.append(cosine(u, v))
    return float(np.mean(within)), float(np.mean(across))


def sentence_event_matrix(salad: Salad, encoder: EventEncoder) -> np.ndarray:
    """Mean event embedding per sentence."""
    return np.array([encoder.embed(it.events).mean(axis=0) for it in salad.items])


def event_cosine_distance_matrix(salad: Salad, encoder: EventEncoder) -> np.ndarray:
    vecs = sentence_event_matrix(salad, encoder)
    n = len(vecs)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = float(np.clip(1.0 - cosine(vecs[i], vecs[j]), 0.0, 2.0))
    return d


def cluster_event_salad(salad: Salad, *, encoder: EventEncoder | None = None, model=None,
                        restarts: int = 10, seed: int = 0) -> list[int]:
    """Cluster an event salad with the event classifier, or with event-embedding cosine."""
    from .clustering import k_medoids, learned_distance_matrix

    if not salad.is_event_salad:
        raise EventError(f"salad {salad.id} has no event tuples")
    if model is not None:
        d = learned_distance_matrix(salad, model)
    elif encoder is not None:
        d = event_cosine_distance_matrix(salad, encoder)
    else:
        raise EventError("need either a trained event model or an event encoder")
    return k_medoids(d, k=2, restarts=restarts, seed=seed)


def encoder_init(encoder: EventEncoder) -> dict[str, np.ndarray]:
    """Tensors to seed an event pair classifier with pretrained weights."""
    return {k: v.copy() for k, v in encoder.params.items()}
