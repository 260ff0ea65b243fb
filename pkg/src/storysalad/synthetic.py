"""Synthetic corpora with known structure, for smoke runs and directional checks.

``separable_corpus``
    Two topic families with disjoint vocabularies; every salad mixes one document of each.
``contrast_corpus``
    In "hard" mixtures both narratives draw on the same topic vocabulary (in easy ones
    they do not) and can only be told apart by style tokens. Each mixture uses three of
    four styles; which two form one narrative depends on which style is absent, so no
    fixed pairwise similarity resolves every mixture but a reader of the whole mixture can.
``event_corpus``
    Event-tuple narratives drawn from disjoint "scripts" of verbs over a shared pool of
    arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document
from .embedding import EmbeddingTable
from .saladgen import MIN_SENTENCES, PairingPolicy, Salad, SaladItem, generate_dataset

# absent style -> (styles of narrative A, style of narrative B)
CONTRAST_RULES = {
    3: ((0, 1), 2),
    2: ((1, 3), 0),
    0: ((2, 3), 1),
    1: ((0, 2), 3),
}

FILLER = [f"filler{i}" for i in range(6)]


def _paragraphs(sentences: list[list[str]], rng: np.random.Generator) -> list[list[list[str]]]:
    """Split into 2-3 paragraphs, preserving order."""
    n = len(sentences)
    cuts = sorted(rng.choice(np.arange(1, n), size=min(2, n - 1), replace=False).tolist())
    bounds = [0] + cuts + [n]
    return [sentences[a:b] for a, b in zip(bounds, bounds[1:]) if b > a]


def _structured_table(groups: dict[str, list[str]], dim: int, rng, spread: float = 0.5) -> EmbeddingTable:
    """Vectors = group centroid + isotropic noise, so same-group words are similar."""
    vectors = {}
    for words in groups.values():
        centroid = rng.normal(size=dim)
        for w in words:
            vectors[w] = centroid + spread * rng.normal(size=dim)
    return EmbeddingTable(dim=dim, vectors=vectors)


def separable_corpus(n_pairs: int, seed: int, vocab_per_family: int = 30,
                     sentence_len: tuple[int, int] = (4, 8), dim: int = 16):
    rng = np.random.default_rng(seed)
    families = {f: [f"fam{f}_w{i}" for i in range(vocab_per_family)] for f in (0, 1)}
    docs = []
    for k in range(n_pairs):
        for f in (0, 1):
            n_sent = int(rng.integers(MIN_SENTENCES, MIN_SENTENCES + 3))
            sents = [list(rng.choice(families[f], size=int(rng.integers(*sentence_len))))
                     for _ in range(n_sent)]
            docs.append(Document(id=f"d{k:05d}-{f}", group_key=f"pair-{k:05d}",
                                 paragraphs=_paragraphs(sents, rng)))
    table = _structured_table({str(f): w for f, w in families.items()}, dim, rng)
    return docs, table


def separable_salads(n: int, seed: int, **kw) -> tuple[list[Salad], EmbeddingTable]:
    docs, table = separable_corpus(n, seed, **kw)
    return generate_dataset(docs, PairingPolicy("group_key"), n, seed), table


@dataclass
class ContrastSpec:
    n_topics: int = 8
    topic_vocab: int = 10
    words_per_sentence: tuple[int, int] = (3, 5)
    per_style_a: int = 4
    sentences_b: int = 8
    # probability that a sentence is uninformative filler (no topic or style words)
    drop_style: float = 0.08
    # probability that narrative B reuses narrative A's topic
    hard_fraction: float = 0.5


def contrast_corpus(n_pairs: int, seed: int, spec: ContrastSpec | None = None, dim: int = 16):
    """Documents for the contrast task, paired through shared group keys."""
    spec = spec or ContrastSpec()
    rng = np.random.default_rng(seed)
    topics = {t: [f"topic{t}_w{i}" for i in range(spec.topic_vocab)] for t in range(spec.n_topics)}
    styles = [f"style{s}" for s in range(4)]

    def sentence(style: int, topic: int) -> list[str]:
        n_words = int(rng.integers(spec.words_per_sentence[0], spec.words_per_sentence[1] + 1))
        if rng.random() < spec.drop_style:
            return [str(w) for w in rng.choice(FILLER, size=n_words + 1)]
        words = [str(w) for w in rng.choice(topics[topic], size=n_words)]
        words.insert(int(rng.integers(0, len(words) + 1)), styles[style])
        return words

    docs = []
    for k in range(n_pairs):
        absent = int(rng.integers(0, 4))
        (sa1, sa2), sb = CONTRAST_RULES[absent]
        topic_a, topic_b = (int(t) for t in rng.choice(spec.n_topics, size=2, replace=False))
        if rng.random() < spec.hard_fraction:
            topic_b = topic_a
        a_styles = [sa1] * spec.per_style_a + [sa2] * spec.per_style_a
        rng.shuffle(a_styles)
        sents_a = [sentence(s, topic_a) for s in a_styles]
        sents_b = [sentence(sb, topic_b) for _ in range(spec.sentences_b)]
        key = f"pair-{k:05d}"
        docs.append(Document(id=f"c{k:05d}-a", group_key=key, paragraphs=_paragraphs(sents_a, rng)))
        docs.append(Document(id=f"c{k:05d}-b", group_key=key, paragraphs=_paragraphs(sents_b, rng)))
    groups = {f"t{t}": w for t, w in topics.items()}
    groups.update({s: [s] for s in styles})
    groups["filler"] = FILLER
    table = _structured_table(groups, dim, rng)
    return docs, table


def contrast_salads(n: int, seed: int, spec: ContrastSpec | None = None,
                    dim: int = 16) -> tuple[list[Salad], EmbeddingTable]:
    docs, table = contrast_corpus(n, seed, spec, dim)
    return generate_dataset(docs, PairingPolicy("group_key"), n, seed), table


@dataclass
class EventSpec:
    n_scripts: int = 6
    verbs_per_script: int = 4
    n_arguments: int = 12
    n_preps: int = 3
    events_per_sentence: tuple[int, int] = (1, 2)
    sentences_per_narrative: int = 8
    null_subject: float = 0.2
    pp_rate: float = 0.4


def event_narrative(script: int, rng: np.random.Generator, spec: EventSpec):
    from .events import EventTuple

    verbs = [f"s{script}_v{i}" for i in range(spec.verbs_per_script)]
    args = [f"arg{i}" for i in range(spec.n_arguments)]
    preps = [f"prep{i}" for i in range(spec.n_preps)]
    sentences = []
    for _ in range(spec.sentences_per_narrative):
        n_ev = int(rng.integers(spec.events_per_sentence[0], spec.events_per_sentence[1] + 1))
        evs = []
        for _ in range(n_ev):
            subj = None if rng.random() < spec.null_subject else str(rng.choice(args))
            pps = [(str(rng.choice(preps)), str(rng.choice(args)))] if rng.random() < spec.pp_rate else []
            evs.append(EventTuple(str(rng.choice(verbs)), subj, str(rng.choice(args)), pps))
        sentences.append(evs)
    return sentences


def event_salads(n: int, seed: int, spec: EventSpec | None = None) -> list[Salad]:
    """Event salads mixing narratives from two different scripts."""
    spec = spec or EventSpec()
    rng = np.random.default_rng(seed)
    salads = []
    for k in range(n):
        sa, sb = (int(s) for s in rng.choice(spec.n_scripts, size=2, replace=False))
        items = [SaladItem([w for e in evs for w in e.words()], "A", f"e{k:05d}-a", evs)
                 for evs in event_narrative(sa, rng, spec)]
        items += [SaladItem([w for e in evs for w in e.words()], "B", f"e{k:05d}-b", evs)
                  for evs in event_narrative(sb, rng, spec)]
        order = rng.permutation(len(items))
        salads.append(Salad(id=f"event-{k:06d}", items=[items[i] for i in order],
                            source_a=f"e{k:05d}-a", source_b=f"e{k:05d}-b", seed=seed))
    return salads
