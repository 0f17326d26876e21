"""Forward surrogate: geometry raster + material -> 1000-bin transmissibility.

Stem convolution, a stack of geometric-feature-extraction blocks built from
multi-kernel spatial-attention heads, then a small regression head that also
receives the (normalised) material properties.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
from torch.utils.checkpoint import checkpoint

from .errors import ValidationError

MATERIAL_KEYS = ("E", "rho", "nu", "d")
MATERIAL_SCALE = {"E": 1e-9, "rho": 1e-3, "nu": 1.0, "d": 1e3}


@dataclass(frozen=True)
class FsaHeadConfig:
    alpha: int = 3
    beta: int = 7
    channels: int = 16

    def __post_init__(self):
        if self.alpha % 2 != 1 or self.alpha < 1:
            raise ValidationError("alpha must be a positive odd kernel size")
        if self.beta != 7:
            raise ValidationError("attention kernel size is fixed at 7")


@dataclass(frozen=True)
class ForwardConfig:
    gfe_blocks: int = 12
    heads: int = 8
    head_alphas: tuple = (1, 1, 1, 3, 3, 3, 5, 5)
    channels: int = 16
    dropout: float = 0.1
    pooled_grid: tuple = (8, 16)
    hidden: int = 512
    out_bins: int = 1000
    in_shape: tuple = (128, 256)

    def __post_init__(self):
        object.__setattr__(self, "head_alphas", tuple(int(a) for a in self.head_alphas))
        object.__setattr__(self, "pooled_grid", tuple(int(a) for a in self.pooled_grid))
        object.__setattr__(self, "in_shape", tuple(int(a) for a in self.in_shape))
        if len(self.head_alphas) != self.heads:
            raise ValidationError("need one alpha per head")
        if self.out_bins != 1000:
            raise ValidationError("output must have 1000 bins")

    def to_dict(self):
        return asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class SpectrumNorm:
    """Global affine map of dB values onto [-1, 1] (corpus min/max)."""

    lo: float = -100.0
    hi: float = 40.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValidationError("normalisation needs hi > lo")

    def forward(self, db):
        return 2.0 * (db - self.lo) / (self.hi - self.lo) - 1.0

    def inverse(self, z):
        return (z + 1.0) * 0.5 * (self.hi - self.lo) + self.lo

    def to_dict(self):
        return {"lo": float(self.lo), "hi": float(self.hi)}


class FsaHead(nn.Module):
    """alpha x alpha convolution gated by a learnable avg/max spatial-attention map."""

    def __init__(self, cfg: FsaHeadConfig):
        super().__init__()
        c = cfg.channels
        self.alpha = cfg.alpha
        # bias-free so that a zero input stays exactly zero through the gate
        self.conv = nn.Conv2d(c, c, cfg.alpha, padding=cfg.alpha // 2, bias=False)
        self.w1 = nn.Parameter(torch.ones(()))
        self.w2 = nn.Parameter(torch.ones(()))
        self.att = nn.Conv2d(2, 1, cfg.beta, padding=cfg.beta // 2)

    def attention(self, xf):
        avg = xf.mean(dim=1, keepdim=True)
        mx = xf.amax(dim=1, keepdim=True)
        return self.att(torch.cat([self.w1 * avg, self.w2 * mx], dim=1))

    def forward(self, x):
        xf = self.conv(x)
        return xf * torch.sigmoid(self.attention(xf))


class GeometricAttention(nn.Module):
    def __init__(self, channels: int, alphas):
        super().__init__()
        self.heads = nn.ModuleList(FsaHead(FsaHeadConfig(a, 7, channels)) for a in alphas)
        self.proj = nn.Conv2d(channels * len(alphas), channels, 1)

    def forward(self, x):
        return self.proj(torch.cat([h(x) for h in self.heads], dim=1))


class GFEBlock(nn.Module):
    """y = LN2(x + Dropout(GA(LN1(x)))); LN normalises over (C, H, W)."""

    def __init__(self, channels: int, alphas, dropout: float):
        super().__init__()
        self.ln1 = nn.GroupNorm(1, channels)
        self.ga = GeometricAttention(channels, alphas)
        self.drop = nn.Dropout(dropout)
        self.ln2 = nn.GroupNorm(1, channels)

    def forward(self, x):
        return self.ln2(x + self.drop(self.ga(self.ln1(x))))


def normalize_material(mat, order=MATERIAL_KEYS) -> torch.Tensor:
    """Columns of ``mat`` (B, 4) are named by ``order``; returns canonical scaled order."""
    mat = torch.as_tensor(mat)
    if mat.dim() == 1:
        mat = mat[None]
    if sorted(order) != sorted(MATERIAL_KEYS) or mat.shape[-1] != 4:
        raise ValidationError(f"material columns must be a permutation of {MATERIAL_KEYS}")
    idx = [list(order).index(k) for k in MATERIAL_KEYS]
    scale = torch.tensor([MATERIAL_SCALE[k] for k in MATERIAL_KEYS], dtype=mat.dtype)
    return mat[:, idx] * scale


class ForwardModel(nn.Module):
    def __init__(self, cfg: ForwardConfig = ForwardConfig()):
        super().__init__()
        self.cfg = cfg
        c = cfg.channels
        self.stem = nn.Conv2d(1, c, 3, padding=1)
        self.blocks = nn.ModuleList(GFEBlock(c, cfg.head_alphas, cfg.dropout) for _ in range(cfg.gfe_blocks))
        self.pool = nn.AdaptiveAvgPool2d(cfg.pooled_grid)
        n_flat = c * cfg.pooled_grid[0] * cfg.pooled_grid[1]
        self.fc1 = nn.Linear(n_flat, cfg.hidden)
        self.act1 = nn.PReLU()
        self.fc2 = nn.Linear(cfg.hidden + len(MATERIAL_KEYS), cfg.hidden)
        self.act2 = nn.PReLU()
        self.ln = nn.LayerNorm(cfg.hidden)
        self.fc3 = nn.Linear(cfg.hidden, cfg.out_bins)
        self.norm = SpectrumNorm()
        # recompute block activations in backward; trades ~30% time for memory
        self.grad_checkpoint = False

    def features(self, raster):
        x = self.stem(raster)
        for blk in self.blocks:
            if self.grad_checkpoint and self.training and torch.is_grad_enabled():
                x = checkpoint(blk, x, use_reentrant=False)
            else:
                x = blk(x)
        return x

    def forward(self, raster, material, material_order=MATERIAL_KEYS):
        """raster (B,1,H,W) in [-1,1]; material (B,4) raw SI values -> (B,1000) normalised."""
        if raster.dim() == 3:
            raster = raster[:, None]
        if raster.dim() != 4 or raster.shape[1] != 1 or tuple(raster.shape[-2:]) != self.cfg.in_shape:
            raise ValidationError(f"raster must be (B,1,{self.cfg.in_shape[0]},{self.cfg.in_shape[1]})")
        h = self.pool(self.features(raster)).flatten(1)
        h = self.act1(self.fc1(h))
        m = normalize_material(material, material_order).to(h.dtype)
        h = self.act2(self.fc2(torch.cat([h, m], dim=1)))
        return self.fc3(self.ln(h))

    @torch.no_grad()
    def predict(self, raster: np.ndarray, mat) -> np.ndarray:
        """Single raster (H, W) + MaterialProps -> 1000 normalised values."""
        was = self.training
        self.eval()
        dtype = next(self.parameters()).dtype
        r = torch.as_tensor(np.asarray(raster), dtype=dtype)
        if r.dim() == 2:
            r = r[None, None]
        m = torch.as_tensor(np.asarray(mat.as_vector()), dtype=dtype)[None]
        out = self(r, m)[0].numpy().copy()
        self.train(was)
        return out

