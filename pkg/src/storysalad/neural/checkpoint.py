"""Parameter checkpoints: one ``.npz`` holding a JSON header plus named float64 tensors."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..corpus import Vocabulary
from .config import ModelConfig
from .model import ModelError, PairClassifier

FORMAT = "storysalad-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: PairClassifier, path: str | Path, extra: dict | None = None) -> None:
    header = {
        "format": FORMAT,
        "version": VERSION,
        "variant": model.variant,
        "model_config": model.config.to_dict(),
        "vocab": model.vocab.tokens,
        "vocab_limit": model.vocab.size_limit,
        "shapes": {k: list(v.shape) for k, v in model.params.items()},
        "extra": extra or {},
    }
    arrays = {f"param:{k}": np.asarray(v, dtype=np.float64) for k, v in model.params.items()}
    # np.savez appends .npz to bare names; write through a handle to keep the path as given
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), **arrays)


def read_header(path: str | Path) -> dict:
    with _open(path) as data:
        return _header(data, path)


def load_checkpoint(path: str | Path) -> PairClassifier:
    with _open(path) as data:
        header = _header(data, path)
        params = {}
        for name, shape in header["shapes"].items():
            key = f"param:{name}"
            if key not in data:
                raise CheckpointError(f"{path}: tensor {name} listed in header but missing")
            arr = np.array(data[key], dtype=np.float64)
            if list(arr.shape) != shape:
                raise CheckpointError(f"{path}: tensor {name} has shape {arr.shape}, header says {shape}")
            params[name] = arr
    config = ModelConfig.from_dict(header["model_config"])
    vocab = Vocabulary.from_tokens(header["vocab"], size_limit=header.get("vocab_limit"))
    try:
        return PairClassifier(config, vocab, params=params)
    except ModelError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc


def _open(path):
    try:
        return np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc


def _header(data, path) -> dict:
    if "header" not in data:
        raise CheckpointError(f"{path}: not a checkpoint (no header)")
    header = json.loads(str(data["header"]))
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unknown format {header.get('format')!r}")
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    return header
