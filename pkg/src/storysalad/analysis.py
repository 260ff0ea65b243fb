"""Post-hoc analyses: CA/topic-similarity correlation and accuracy-bracket movement."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .metrics import spearman_rho

LABELS = ("b", "m", "g")


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class BracketScheme:
    """Half-open brackets BAD [lo, m), MEDIUM [m, g), GOOD [g, 1]."""
    lower: float = 0.5
    medium: float = 0.65
    good: float = 0.8

    def __post_init__(self):
        if not (self.lower < self.medium < self.good <= 1.0):
            raise AnalysisError("bracket boundaries must be increasing and at most 1.0")

    def bracket(self, ca: float) -> int:
        # anything under `lower` is clamped into BAD
        if ca >= self.good:
            return 2
        if ca >= self.medium:
            return 1
        return 0


DEFAULT_SCHEME = BracketScheme()


def bracket(ca: float, scheme: BracketScheme = DEFAULT_SCHEME) -> str:
    return LABELS[scheme.bracket(ca)]


def correlation_report(results: Sequence[Mapping[str, float]]) -> dict:
    """Spearman rho of CA against tsim, with n and the raw pairs for audit."""
    ca = [float(r["ca"]) for r in results]
    tsim = [float(r["tsim"]) for r in results]
    return {
        "rho": spearman_rho(ca, tsim),
        "n": len(ca),
        "pairs": [[c, t] for c, t in zip(ca, tsim)],
        "p_note": "p-value not computed; use a permutation test over the raw pairs",
    }


def bin_movement(run_a: Mapping[str, float], run_b: Mapping[str, float],
                 scheme: BracketScheme = DEFAULT_SCHEME) -> np.ndarray:
    """Row i, column j: fraction of run_a's bracket-i salads that run_b places in bracket j."""
    if set(run_a) != set(run_b):
        diff = sorted(set(run_a) ^ set(run_b))
        raise AnalysisError(f"runs cover different salads: {', '.join(diff)}")
    counts = np.zeros((3, 3))
    for sid, ca in run_a.items():
        counts[scheme.bracket(ca), scheme.bracket(run_b[sid])] += 1
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def format_movement(matrix: np.ndarray) -> str:
    lines = ["     " + "".join(f"{lab:>7}" for lab in LABELS)]
    for lab, row in zip(LABELS, matrix):
        lines.append(f"{lab:>5}" + "".join(f"{v:7.3f}" for v in row))
    return "\n".join(lines)


def movement_csv(matrix: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["from", *LABELS])
    for lab, row in zip(LABELS, matrix):
        w.writerow([lab, *(f"{v:.6f}" for v in row)])
    return buf.getvalue()
