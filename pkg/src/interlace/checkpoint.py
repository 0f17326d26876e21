"""Versioned checkpoint files shared by the forward and inverse models.

A checkpoint is one ``torch.save`` archive holding a format tag, version,
model kind, the full config, its fingerprint, a sha256 over the parameter
bytes, the parameters themselves, the spectrum normalisation and any extra
training metadata.
"""
from __future__ import annotations

import hashlib
import os
from pathlib import Path

import torch

from .errors import CheckpointError
from .forward_net import ForwardConfig, ForwardModel, SpectrumNorm
from .inverse_net import InverseConfig, InverseModel

FORMAT = "interlace-checkpoint"
VERSION = 1
_KINDS = {"forward": (ForwardConfig, ForwardModel), "inverse": (InverseConfig, InverseModel)}


def _kind_of(model) -> str:
    for kind, (_, cls) in _KINDS.items():
        if isinstance(model, cls):
            return kind
    raise CheckpointError(f"unsupported model type {type(model).__name__}")


def state_digest(state: dict) -> str:
    h = hashlib.sha256()
    for name in sorted(state):
        t = state[name].detach().cpu().contiguous()
        h.update(name.encode())
        h.update(str(t.dtype).encode())
        h.update(str(tuple(t.shape)).encode())
        h.update(t.numpy().tobytes())
    return h.hexdigest()


def save_checkpoint(path, model, norm: SpectrumNorm | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}
    norm = norm or getattr(model, "norm", None) or SpectrumNorm()
    blob = {
        "format": FORMAT,
        "version": VERSION,
        "kind": _kind_of(model),
        "config": model.cfg.to_dict(),
        "fingerprint": model.cfg.fingerprint(),
        "digest": state_digest(state),
        "state_dict": state,
        "norm": norm.to_dict(),
        "extra": dict(extra or {}),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(blob, tmp)
    os.replace(tmp, path)
    return path


def read_checkpoint(path) -> dict:
    """Load and integrity-check the raw archive."""
    try:
        blob = torch.load(Path(path), map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(blob, dict) or blob.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not an interlace checkpoint")
    if blob.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {blob.get('version')}")
    if blob.get("kind") not in _KINDS:
        raise CheckpointError(f"unknown model kind {blob.get('kind')!r}")
    if state_digest(blob["state_dict"]) != blob["digest"]:
        raise CheckpointError(f"parameter digest mismatch in {path} (corrupt file)")
    return blob


def load_checkpoint(path, expected_config=None, kind: str | None = None):
    """Rebuild the model; returns ``(model, blob)``.

    ``expected_config`` (a config instance) must match the stored fingerprint.
    """
    blob = read_checkpoint(path)
    if kind is not None and blob["kind"] != kind:
        raise CheckpointError(f"expected a {kind} checkpoint, found {blob['kind']}")
    cfg_cls, model_cls = _KINDS[blob["kind"]]
    try:
        cfg = cfg_cls(**blob["config"])
    except Exception as exc:
        raise CheckpointError(f"stored config is invalid: {exc}") from exc
    if cfg.fingerprint() != blob["fingerprint"]:
        raise CheckpointError("stored config does not match its fingerprint")
    if expected_config is not None and expected_config.fingerprint() != blob["fingerprint"]:
        raise CheckpointError("config fingerprint mismatch: checkpoint was trained with a different config")
    model = model_cls(cfg)
    dtype = next(iter(blob["state_dict"].values())).dtype
    model.to(dtype)
    model.load_state_dict(blob["state_dict"])
    if hasattr(model, "norm"):
        model.norm = SpectrumNorm(**blob["norm"])
    model.eval()
    return model, blob
