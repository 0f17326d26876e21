"""Splitting, the two-phase tandem training protocol, and evaluation."""
from __future__ import annotations

import csv
import logging
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses
from .checkpoint import save_checkpoint
from .errors import NumericalError, ValidationError
from .forward_net import ForwardConfig, ForwardModel
from .inverse_net import InverseConfig, InverseModel

log = logging.getLogger(__name__)

FORWARD_LOG_FIELDS = ("epoch", "loss", "mse", "ssl", "mmd", "lr", "val_loss")
INVERSE_LOG_FIELDS = ("epoch", "loss", "mse", "ssl", "mmd", "lr", "val_loss", "val_similarity")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr0: float = 1e-3
    lr_min: float = 1e-5
    batch_size: int = 4
    train_fraction: float = 0.9
    seed: int = 0
    deterministic: bool = True
    grad_checkpoint: bool = True
    weights: losses.LossWeights = field(default_factory=losses.LossWeights)

    def __post_init__(self):
        if not 0 < self.lr_min < self.lr0:
            raise ValidationError("need 0 < lr_min < lr0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("epochs and batch_size must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ValidationError("train_fraction must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("weights"), dict):
            d["weights"] = losses.LossWeights(**d["weights"])
        return cls(**d)


def seed_everything(seed: int, deterministic: bool = True) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def cosine_lr(t: int, total: int, lr0: float, lr_min: float) -> float:
    """lr_min + (lr0 - lr_min)(1 + cos(pi t / T)) / 2, with T = total."""
    if total <= 0:
        return lr0
    t = min(max(t, 0), total)
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * t / total))


def split_dataset(n_or_data, seed: int = 0, train_fraction: float = 0.9):
    """Deterministic shuffled partition -> (train indices, validation indices)."""
    n = n_or_data if isinstance(n_or_data, int) else len(n_or_data)
    if n < 2:
        raise ValidationError("need at least two samples to split")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = min(max(int(round(train_fraction * n)), 1), n - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _check_finite(value: float, what: str, epoch: int):
    if not math.isfinite(value):
        raise NumericalError(f"{what} became non-finite at epoch {epoch}; lower lr0 or check the data")


class CsvLog:
    def __init__(self, path, fields):
        self.path = Path(path)
        self.fields = fields
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(fields)

    def write(self, row: dict):
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(
                ["" if row.get(k) is None else (repr(row[k]) if isinstance(row[k], float) else row[k])
                 for k in self.fields])


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _batches(idx, batch_size, gen):
    order = idx[torch.randperm(len(idx), generator=gen).numpy()]
    for k in range(0, len(order), batch_size):
        yield order[k:k + batch_size]


def _tensors(data, idx):
    r = torch.from_numpy(data.rasters[idx][:, None])
    s = torch.from_numpy(data.spectra_norm[idx].astype(np.float32))
    m = torch.from_numpy(data.materials[idx].astype(np.float32))
    return r, s, m


@torch.no_grad()
def forward_mse(model, data, idx, batch_size=8) -> np.ndarray:
    """Per-sample MSE (normalised units) of ``model`` on ``idx``."""
    model.eval()
    out = []
    for k in range(0, len(idx), batch_size):
        r, s, m = _tensors(data, idx[k:k + batch_size])
        out.append(((model(r, m) - s) ** 2).mean(dim=1).numpy())
    return np.concatenate(out) if out else np.zeros(0)


def train_forward(cfg: TrainConfig, data, run_dir, model_cfg: ForwardConfig = ForwardConfig(),
                  split=None) -> dict:
    """Phase 1: MSE regression of spectra from rasters. Returns a summary dict."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    seed_everything(cfg.seed, cfg.deterministic)
    train_idx, val_idx = split if split is not None else split_dataset(len(data), cfg.seed, cfg.train_fraction)
    model = ForwardModel(model_cfg)
    model.norm = data.norm
    model.grad_checkpoint = cfg.grad_checkpoint
    opt = torch.optim.NAdam(model.parameters(), lr=cfg.lr0)
    gen = torch.Generator().manual_seed(cfg.seed)
    logf = CsvLog(run_dir / "forward_log.csv", FORWARD_LOG_FIELDS)
    best = math.inf
    last = None
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs - 1, cfg.lr0, cfg.lr_min)
        for g in opt.param_groups:
            g["lr"] = lr
        model.train()
        total, count = 0.0, 0
        for b in _batches(train_idx, cfg.batch_size, gen):
            r, s, m = _tensors(data, b)
            opt.zero_grad()
            loss = losses.mse(model(r, m), s)
            _check_finite(loss.item(), "forward training loss", epoch)
            loss.backward()
            opt.step()
            total += loss.item() * len(b)
            count += len(b)
        train_loss = total / max(count, 1)
        val = float(forward_mse(model, data, val_idx).mean())
        _check_finite(val, "forward validation loss", epoch)
        logf.write({"epoch": epoch, "loss": train_loss, "mse": train_loss, "lr": lr, "val_loss": val})
        log.info("forward epoch %d loss %.5f val %.5f lr %.2e", epoch, train_loss, val, lr)
        if val <= best:
            best = val
            save_checkpoint(run_dir / "forward_best.pt", model,
                            extra={"epoch": epoch, "val_loss": val, "train": cfg.to_dict()})
        last = train_loss
    save_checkpoint(run_dir / "forward_last.pt", model, extra={"epoch": cfg.epochs - 1, "train": cfg.to_dict()})
    return {"best_val_loss": best, "final_train_loss": last, "train_size": len(train_idx),
            "val_size": len(val_idx), "checkpoint": str(run_dir / "forward_best.pt")}


def freeze(model: torch.nn.Module) -> torch.nn.Module:
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def _inverse_step_losses(inv, fwd, r, s, m, w):
    x_pred = inv(s)
    t_pred = fwd(x_pred, m)
    return losses.composite(t_pred, s, x_pred, r, w)


def train_inverse(cfg: TrainConfig, data, forward_model: ForwardModel, run_dir,
                  model_cfg: InverseConfig = InverseConfig(), split=None) -> dict:
    """Phase 2: tandem training through the frozen forward surrogate."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    seed_everything(cfg.seed, cfg.deterministic)
    train_idx, val_idx = split if split is not None else split_dataset(len(data), cfg.seed, cfg.train_fraction)
    fwd = freeze(forward_model)
    fwd.grad_checkpoint = False
    inv = InverseModel(model_cfg)
    opt = torch.optim.NAdam(inv.parameters(), lr=cfg.lr0)
    gen = torch.Generator().manual_seed(cfg.seed)
    logf = CsvLog(run_dir / "inverse_log.csv", INVERSE_LOG_FIELDS)
    best = math.inf
    last = None
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs - 1, cfg.lr0, cfg.lr_min)
        for g in opt.param_groups:
            g["lr"] = lr
        inv.train()
        sums = {"loss": 0.0, "mse": 0.0, "ssl": 0.0, "mmd": 0.0}
        count = 0
        for b in _batches(train_idx, cfg.batch_size, gen):
            r, s, m = _tensors(data, b)
            opt.zero_grad()
            parts = _inverse_step_losses(inv, fwd, r, s, m, cfg.weights)
            _check_finite(parts["loss"].item(), "inverse training loss", epoch)
            parts["loss"].backward()
            opt.step()
            for k in sums:
                sums[k] += parts[k].item() * len(b)
            count += len(b)
        row = {k: v / max(count, 1) for k, v in sums.items()}
        # logged total is recomputed from the logged components so the identity holds per row
        row["loss"] = row["mse"] + cfg.weights.beta1 * row["ssl"] + cfg.weights.beta2 * row["mmd"]
        val, sim = _inverse_validation(inv, fwd, data, val_idx, cfg.weights)
        _check_finite(val, "inverse validation loss", epoch)
        logf.write({"epoch": epoch, **row, "lr": lr, "val_loss": val, "val_similarity": sim})
        log.info("inverse epoch %d loss %.5f val %.5f sim %.4f", epoch, row["loss"], val, sim)
        if val <= best:
            best = val
            save_checkpoint(run_dir / "inverse_best.pt", inv, norm=data.norm,
                            extra={"epoch": epoch, "val_loss": val, "train": cfg.to_dict()})
        last = row["loss"]
    save_checkpoint(run_dir / "inverse_last.pt", inv, norm=data.norm,
                    extra={"epoch": cfg.epochs - 1, "train": cfg.to_dict()})
    return {"best_val_loss": best, "final_train_loss": last, "checkpoint": str(run_dir / "inverse_best.pt")}


@torch.no_grad()
def _inverse_validation(inv, fwd, data, idx, w, batch_size=4):
    from .analysis import denoise

    inv.eval()
    tot, sims = 0.0, []
    for k in range(0, len(idx), batch_size):
        r, s, m = _tensors(data, idx[k:k + batch_size])
        parts = _inverse_step_losses(inv, fwd, r, s, m, w)
        tot += parts["loss"].item() * len(r)
        x_pred = inv(s)
        for j in range(len(r)):
            clean = torch.from_numpy(denoise(x_pred[j, 0].numpy()))
            sims.append(losses.similarity_score(clean, r[j, 0]).item())
    return tot / max(len(idx), 1), float(np.mean(sims)) if sims else float("nan")


@torch.no_grad()
def evaluate(forward_model: ForwardModel, inverse_model: InverseModel, data, idx,
             use_fem_oracle: bool = False, fem_kwargs: dict | None = None) -> list[dict]:
    """Per-sample similarity and the three spectrum MSEs (normalised units)."""
    from .analysis import denoise, fem_spectrum_of_raster

    fwd = freeze(forward_model)
    inverse_model.eval()
    rows = []
    for i in np.asarray(idx):
        r, s, m = _tensors(data, np.array([i]))
        gen = inverse_model(s)
        clean = torch.from_numpy(denoise(gen[0, 0].numpy()))[None, None]
        row = {
            "index": int(i),
            "spec_hash": data.manifest["samples"][int(i)]["spec_hash"],
            "similarity": losses.similarity_score(clean[0, 0], r[0, 0]).item(),
            "mse_forward_original": losses.mse(fwd(r, m), s).item(),
            "mse_forward_generated": losses.mse(fwd(clean, m), s).item(),
            "mse_fem_generated": None,
        }
        if use_fem_oracle:
            try:
                fem_db = fem_spectrum_of_raster(clean[0, 0].numpy(), **(fem_kwargs or {}))
                row["mse_fem_generated"] = float(np.mean((data.norm.forward(fem_db) - s[0].numpy()) ** 2))
            except Exception as exc:  # generated geometry may not be a valid structure
                log.warning("femlite check failed for sample %d: %s", i, exc)
        rows.append(row)
    return rows


def summarize(rows: list[dict]) -> dict:
    out = {"n": len(rows)}
    for k in ("similarity", "mse_forward_original", "mse_forward_generated", "mse_fem_generated"):
        vals = [r[k] for r in rows if r.get(k) is not None]
        out[f"mean_{k}"] = float(np.mean(vals)) if vals else None
    return out
