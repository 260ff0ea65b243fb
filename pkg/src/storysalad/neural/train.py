"""Pair sampling and the Adam training loop for the pair classifier."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..corpus import Vocabulary, build_vocabulary_from_sentences
from ..saladgen import derive_seed
from .config import ModelConfig, TrainConfig
from .model import NONE_TOKEN, PairClassifier

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            self.params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def sample_training_pairs(salads: Sequence, n_per_salad: int, seed: int) -> list[tuple[int, int, int, int]]:
    """Balanced (i, j, label, salad_index) pairs; label 1 = same narrative.

    Same pairs alternate A-A / B-B and different pairs alternate A-B / B-A. Salads with
    fewer than two sentences in either narrative are skipped.
    """
    half = n_per_salad // 2
    out = []
    for k, salad in enumerate(salads):
        idx = {"A": [], "B": []}
        for i, it in enumerate(salad.items):
            idx[it.gold].append(i)
        if len(idx["A"]) < 2 or len(idx["B"]) < 2:
            log.warning("salad %s too small to sample balanced pairs, skipped", salad.id)
            continue
        rng = np.random.default_rng(derive_seed(seed, k))
        for r in range(half):
            group = idx["AB"[r % 2]]
            i, j = rng.choice(group, size=2, replace=False)
            out.append((int(i), int(j), 1, k))
        for r in range(half):
            i = rng.choice(idx["A"])
            j = rng.choice(idx["B"])
            if r % 2:
                i, j = j, i
            out.append((int(i), int(j), 0, k))
    return out


def vocabulary_for(salads: Sequence, config: ModelConfig, limit: int = 100_000) -> Vocabulary:
    if config.use_events:
        sentences = ([w for e in it.events for w in e.words()] for s in salads for it in s.items)
        return build_vocabulary_from_sentences(sentences, limit, reserved=(NONE_TOKEN,))
    return build_vocabulary_from_sentences((it.tokens for s in salads for it in s.items), limit)


def pretrained_embedding(vocab: Vocabulary, table, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    """Embedding matrix for ``vocab`` with rows taken from ``table`` where available.

    Rows are rescaled so the mean known-row norm equals ``scale``; unknown tokens get
    small Gaussian rows.
    """
    rng = np.random.default_rng(seed)
    tokens = vocab.tokens
    out = rng.normal(scale=0.1 * scale / np.sqrt(table.dim), size=(len(tokens), table.dim))
    known = [i for i, t in enumerate(tokens) if t in table]
    if known:
        rows = np.stack([table.lookup(tokens[i]) for i in known])
        norm = np.linalg.norm(rows, axis=1).mean()
        out[known] = rows * (scale / norm if norm > 0 else 1.0)
    return out


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    @property
    def best_val_acc(self) -> float:
        return max((r.val_acc for r in self.records), default=0.0)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_acc"])
            for r in self.records:
                w.writerow([r.epoch, f"{r.train_loss:.10g}", f"{r.val_acc:.10g}"])


def pair_accuracy(model: PairClassifier, pairs, salads, chunk: int = 256) -> float:
    if not pairs:
        return 0.0
    correct = 0
    for start in range(0, len(pairs), chunk):
        part = pairs[start:start + chunk]
        batch = model.make_batch([(i, j, k) for i, j, _, k in part], salads)
        prob = model.predict(batch)
        labels = np.array([lab for _, _, lab, _ in part])
        correct += int(((prob >= 0.5) == (labels == 1)).sum())
    return correct / len(pairs)


def split_salads(salads: Sequence, fraction: float, seed: int):
    if len(salads) < 2:
        raise ValueError("training needs at least two salads")
    order = np.random.default_rng(seed).permutation(len(salads))
    n_val = min(len(salads) - 1, max(1, int(round(fraction * len(salads)))))
    val = [salads[i] for i in sorted(order[:n_val])]
    train = [salads[i] for i in sorted(order[n_val:])]
    return train, val


def train(salads: Sequence, model_config: ModelConfig, train_config: TrainConfig,
          vocab: Vocabulary | None = None, init: dict[str, np.ndarray] | None = None,
          vocab_limit: int = 100_000,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[PairClassifier, TrainHistory]:
    """Fit a classifier on balanced pairs; returns the best-validation model and its history.

    A held-out fraction of salads (not pairs) is used for validation. ``init`` overrides
    freshly initialised tensors by name (used for pretrained event encoders).
    """
    tc = train_config
    train_salads, val_salads = split_salads(salads, tc.validation_fraction, derive_seed(tc.seed, 0))
    if vocab is None:
        vocab = vocabulary_for(train_salads, model_config, vocab_limit)
    model = PairClassifier(model_config, vocab, seed=derive_seed(tc.seed, 1))
    if init:
        for name, value in init.items():
            if model.params[name].shape != value.shape:
                raise ValueError(f"initial tensor {name} has shape {value.shape}, "
                                 f"expected {model.params[name].shape}")
            model.params[name] = np.array(value, dtype=float)
    opt = Adam(model.params, tc.learning_rate, tc.beta1, tc.beta2, tc.eps)
    dropout_rng = np.random.default_rng(derive_seed(tc.seed, 2))
    val_pairs = sample_training_pairs(val_salads, tc.pairs_per_salad, derive_seed(tc.seed, 3))
    history = TrainHistory()
    best_acc = -np.inf
    best_params = {k: v.copy() for k, v in model.params.items()}
    stale = 0
    for epoch in range(1, tc.max_epochs + 1):
        pairs = sample_training_pairs(train_salads, tc.pairs_per_salad, derive_seed(tc.seed, 100 + epoch))
        order = np.random.default_rng(derive_seed(tc.seed, 10_000 + epoch)).permutation(len(pairs))
        losses = []
        for b, start in enumerate(range(0, len(order), tc.batch_size), start=1):
            part = [pairs[i] for i in order[start:start + tc.batch_size]]
            batch = model.make_batch([(i, j, k) for i, j, _, k in part], train_salads)
            labels = [lab for _, _, lab, _ in part]
            loss, grads = model.loss_and_grads(batch, labels, rng=dropout_rng)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NumericalError(f"non-finite loss or gradient at epoch {epoch}, batch {b} "
                                     f"(loss={loss})")
            opt.step(grads)
            losses.append(loss)
        val_acc = pair_accuracy(model, val_pairs, val_salads)
        rec = EpochRecord(epoch, float(np.mean(losses)) if losses else float("nan"), val_acc)
        history.records.append(rec)
        log.info("epoch %d train_loss %.5f val_acc %.5f", epoch, rec.train_loss, val_acc)
        if on_epoch:
            on_epoch(rec)
        if val_acc > best_acc + tc.stop_threshold:
            best_acc = val_acc
            best_params = {k: v.copy() for k, v in model.params.items()}
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
        if epoch >= tc.min_epochs and stale >= tc.patience:
            history.stop_reason = "validation accuracy stopped improving"
            break
    else:
        history.stop_reason = "max_epochs reached"
    model.params.update(best_params)
    return model, history
