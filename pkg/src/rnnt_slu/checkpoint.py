"""Model checkpoints: JSON with base64 little-endian float32 parameter blobs.

A load(save(model)) round trip is bit-identical. Provenance records the
producing plan stage, the seed, and the SHA-256 of the parent checkpoint
file, so a curriculum can be reconstructed from the hash chain.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import Model, ModelConfig
from .vocab import Vocab

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Provenance:
    stage: str | None = None
    seed: int | None = None
    parent_hash: str | None = None

    def to_dict(self) -> dict:
        return {"stage": self.stage, "seed": self.seed, "parent_hash": self.parent_hash}


def checkpoint_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_checkpoint(model: Model, path, provenance: Provenance | None = None) -> str:
    """Write the model; returns the file's SHA-256 for provenance chaining."""
    if model.config.dtype != "float32":
        raise CheckpointError("only float32 models are checkpointed")
    cfg = model.config
    payload = {
        "format_version": FORMAT_VERSION,
        "config": {
            "feature_dim": cfg.feature_dim,
            "enc_layers": cfg.enc_layers,
            "enc_cells": cfg.enc_cells,
            "pred_embed_dim": cfg.pred_embed_dim,
            "pred_cells": cfg.pred_cells,
            "joint_dim": cfg.joint_dim,
        },
        "vocab": list(cfg.vocab.symbols),
        "params": {
            name: {
                "dims": list(arr.shape),
                "data": base64.b64encode(
                    np.ascontiguousarray(arr, dtype="<f4").tobytes()
                ).decode("ascii"),
            }
            for name, arr in model.params.items()
        },
        "provenance": (provenance or Provenance()).to_dict(),
    }
    path = Path(path)
    path.write_text(json.dumps(payload, sort_keys=True, indent=0), encoding="utf-8")
    return checkpoint_hash(path)


def load_checkpoint(path) -> tuple[Model, Provenance]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version!r}")
    cfg = ModelConfig(vocab=Vocab(tuple(payload["vocab"])), **payload["config"])
    params = {}
    for name, entry in payload["params"].items():
        raw = base64.b64decode(entry["data"])
        arr = np.frombuffer(raw, dtype="<f4").reshape(entry["dims"]).copy()
        params[name] = arr
    prov = payload.get("provenance", {})
    return Model(config=cfg, params=params), Provenance(
        stage=prov.get("stage"), seed=prov.get("seed"), parent_hash=prov.get("parent_hash"))
