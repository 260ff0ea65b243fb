"""Two-way k-medoids over pairwise sentence distances."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .embedding import EmbeddingError, EmbeddingTable, average_embedding


class ClusteringError(ValueError):
    pass


def check_distance_matrix(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ClusteringError(f"distance matrix must be square, got {d.shape}")
    if not np.all(np.isfinite(d)) or (d < 0).any():
        raise ClusteringError("distances must be finite and non-negative")
    if not np.array_equal(d, d.T):
        raise ClusteringError("distance matrix must be symmetric")
    if np.any(np.diag(d) != 0):
        raise ClusteringError("distance matrix must have a zero diagonal")
    return d


def cosine_distance_matrix(salad, table: EmbeddingTable) -> np.ndarray:
    try:
        vecs = np.array([average_embedding(s, table) for s in salad.sentences])
    except EmbeddingError:
        raise ClusteringError(f"salad {salad.id} contains an empty sentence") from None
    norms = np.linalg.norm(vecs, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    unit = vecs / safe[:, None]
    sim = unit @ unit.T
    sim[norms == 0, :] = 0.0
    sim[:, norms == 0] = 0.0
    d = np.clip(1.0 - sim, 0.0, 2.0)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def learned_distance_matrix(salad, model) -> np.ndarray:
    """1 - P(same), averaged over both pair orderings."""
    p = np.asarray(model.probability_matrix(salad), dtype=float)
    return distance_from_probabilities(p)


def distance_from_probabilities(p: np.ndarray) -> np.ndarray:
    d = 1.0 - 0.5 * (p + p.T)
    d = np.clip(d, 0.0, 1.0)
    np.fill_diagonal(d, 0.0)
    return d


def medoid_cost(d: np.ndarray, medoids) -> float:
    return float(d[:, list(medoids)].min(axis=1).sum())


def _assign(d: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    # argmin takes the first minimum; medoids are kept sorted, so ties go to the lower index
    return np.argmin(d[:, medoids], axis=1)


def _refine(d: np.ndarray, medoids: np.ndarray, max_iter: int) -> tuple[np.ndarray, np.ndarray, list[float]]:
    medoids = np.sort(medoids)
    trace = [medoid_cost(d, medoids)]
    for _ in range(max_iter):
        labels = _assign(d, medoids)
        new = medoids.copy()
        for c in range(len(medoids)):
            members = np.flatnonzero(labels == c)
            if members.size == 0:
                continue
            within = d[np.ix_(members, members)].sum(axis=1)
            best = within.min()
            current = d[medoids[c], members].sum()
            # keep the current medoid on ties so the loop terminates
            if best < current:
                new[c] = members[np.argmin(within)]
        new = np.sort(new)
        if np.array_equal(new, medoids) or len(set(new)) < len(new):
            break
        new_cost = medoid_cost(d, new)
        if new_cost > trace[-1]:
            break
        medoids = new
        trace.append(new_cost)
    return medoids, _assign(d, medoids), trace


@dataclass
class KMedoidsResult:
    labels: np.ndarray
    medoids: np.ndarray
    cost: float
    trace: list[float]


def k_medoids_fit(d: np.ndarray, k: int = 2, restarts: int = 10, seed: int = 0,
                  init: str = "random", max_iter: int = 100) -> KMedoidsResult:
    """Alternating k-medoids with several initialisations; keeps the lowest total cost.

    ``init="exhaustive"`` starts once from every k-subset of points instead of random draws.
    """
    d = check_distance_matrix(d)
    n = d.shape[0]
    if k < 1 or k > n:
        raise ClusteringError(f"cannot form {k} clusters from {n} points")
    if restarts < 1:
        raise ClusteringError("restarts must be at least 1")
    if init == "exhaustive":
        starts = [np.array(c) for c in combinations(range(n), k)]
    elif init == "random":
        rng = np.random.default_rng(seed)
        starts = [rng.choice(n, size=k, replace=False) for _ in range(restarts)]
    else:
        raise ClusteringError(f"unknown init {init!r}")
    best = None
    for start in starts:
        medoids, labels, trace = _refine(d, start, max_iter)
        cost = medoid_cost(d, medoids)
        if best is None or cost < best.cost:
            best = KMedoidsResult(labels=labels, medoids=medoids, cost=cost, trace=trace)
    return best


def k_medoids(d: np.ndarray, k: int = 2, restarts: int = 10, seed: int = 0,
              init: str = "random", max_iter: int = 100) -> list[int]:
    return k_medoids_fit(d, k, restarts, seed, init, max_iter).labels.tolist()


def cluster_salad(salad, distance_source: str = "cosine", *, table: EmbeddingTable | None = None,
                  model=None, restarts: int = 10, seed: int = 0) -> list[int]:
    if distance_source == "cosine":
        if table is None:
            raise ClusteringError("cosine distances need an embedding table")
        d = cosine_distance_matrix(salad, table)
    elif distance_source == "learned":
        if model is None:
            raise ClusteringError("learned distances need a trained model")
        d = learned_distance_matrix(salad, model)
    else:
        raise ClusteringError(f"unknown distance source {distance_source!r}")
    return k_medoids(d, k=2, restarts=restarts, seed=seed)
