"""Export of mutual-attention weights for one sentence pair, as JSON and a greyscale image."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import ModelError, PairClassifier


def _labels(item, use_events: bool) -> list[str]:
    if use_events:
        return [e.verb for e in item.events]
    return list(item.tokens)


def export_heatmap(model: PairClassifier, salad, i: int, j: int) -> dict:
    """Attention of sentence i over j's tokens and of j over i's, each as a 1 x n matrix."""
    if not model.config.use_attention:
        raise ModelError(f"{model.variant} has no attention to export")
    n = len(salad.items)
    for idx in (i, j):
        if not 0 <= idx < n:
            raise ModelError(f"sentence index {idx} out of range for salad of {n} items")
    a_ij, a_ji = model.attention(i, j, salad)
    cap = model.config.max_sentence_len
    tok_i = _labels(salad.items[i], model.config.use_events)[:cap]
    tok_j = _labels(salad.items[j], model.config.use_events)[:cap]
    return {
        "salad_id": salad.id,
        "s1": i,
        "s2": j,
        "tokens_s1": tok_i,
        "tokens_s2": tok_j,
        "alpha_1_to_2": [a_ij.tolist()],
        "alpha_2_to_1": [a_ji.tolist()],
    }


def write_heatmap_json(export: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(export, indent=2) + "\n")


def read_heatmap_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def render_heatmap(export: dict, path: str | Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    panels = [("s1 -> s2", export["alpha_1_to_2"], export["tokens_s2"]),
              ("s2 -> s1", export["alpha_2_to_1"], export["tokens_s1"])]
    width = max(4.0, 0.45 * max(len(export["tokens_s1"]), len(export["tokens_s2"])))
    fig, axes = plt.subplots(2, 1, figsize=(width, 2.6))
    for ax, (title, alpha, tokens) in zip(axes, panels):
        # grey colormap maps higher weight to lighter cells
        ax.imshow(np.asarray(alpha), cmap="gray", vmin=0.0, vmax=1.0, aspect="auto")
        ax.set_title(title, fontsize=8)
        ax.set_yticks([])
        ax.set_xticks(range(len(tokens)))
        ax.set_xticklabels(tokens, rotation=60, ha="right", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
