"""Training objectives for the spectrum/geometry models.

All functions accept a single image ``(H, W)`` or a batch ``(B, H, W)`` /
``(B, 1, H, W)`` and return a scalar tensor (batch mean).
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ValidationError


@dataclass(frozen=True)
class LossWeights:
    beta1: float = 0.1
    beta2: float = 0.6
    c0: float = 1e-4
    mmd_bandwidth: float | None = None  # None -> median heuristic
    ssl_window: int = 11
    mmd_patch: int = 8

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValidationError("loss weights must be non-negative")
        if not self.c0 > 0:
            raise ValidationError("c0 must be positive")
        if self.mmd_bandwidth is not None and not self.mmd_bandwidth > 0:
            raise ValidationError("fixed MMD bandwidth must be positive")


DEFAULT_WEIGHTS = LossWeights()


def _as_batch(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 2:
        return x[None, None]
    if x.dim() == 3:
        return x[:, None]
    if x.dim() == 4 and x.shape[1] == 1:
        return x
    raise ValidationError(f"expected (H,W), (B,H,W) or (B,1,H,W) raster, got {tuple(x.shape)}")


def _check_same(a, b):
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _check_same(a, b)
    return torch.mean((a - b) ** 2)


def _local_moments(X, Y, window):
    k = min(window, X.shape[-2], X.shape[-1])
    mx = F.avg_pool2d(X, k, stride=1)
    my = F.avg_pool2d(Y, k, stride=1)
    vx = (F.avg_pool2d(X * X, k, stride=1) - mx * mx).clamp_min(0.0)
    vy = (F.avg_pool2d(Y * Y, k, stride=1) - my * my).clamp_min(0.0)
    cxy = F.avg_pool2d(X * Y, k, stride=1) - mx * my
    return vx, vy, cxy


def _safe_sqrt(v):
    # sqrt has an infinite slope at 0; constant windows must not poison gradients
    tiny = torch.finfo(v.dtype).tiny
    return torch.where(v > tiny, v, torch.full_like(v, tiny)).sqrt()


def ssl_map(X: torch.Tensor, Y: torch.Tensor, w: LossWeights = DEFAULT_WEIGHTS) -> torch.Tensor:
    """Per-window structural agreement ``cov / (std_x std_y + c0)``, shape (B,1,h,w)."""
    _check_same(X, Y)
    X, Y = _as_batch(X), _as_batch(Y)
    vx, vy, cxy = _local_moments(X, Y, w.ssl_window)
    return cxy / (_safe_sqrt(vx) * _safe_sqrt(vy) + w.c0)


def ssl(X: torch.Tensor, Y: torch.Tensor, w: LossWeights = DEFAULT_WEIGHTS) -> torch.Tensor:
    """1 - mean windowed covariance agreement (11x11 uniform windows)."""
    return 1.0 - ssl_map(X, Y, w).mean()


def similarity_score(X: torch.Tensor, Y: torch.Tensor, w: LossWeights = DEFAULT_WEIGHTS) -> torch.Tensor:
    return 1.0 - ssl(X, Y, w)


def _patches(X, p):
    B, _, H, W = X.shape
    if H % p or W % p:
        raise ValidationError(f"raster {H}x{W} is not divisible into {p}x{p} patches")
    return F.unfold(X, p, stride=p).transpose(1, 2)  # (B, n_patches, p*p)


def _mmd_single(x, y, bandwidth):
    z = torch.cat([x, y], dim=0)
    d2 = torch.cdist(z, z, compute_mode="donot_use_mm_for_euclid_dist") ** 2
    if bandwidth is None:
        n = z.shape[0]
        off = ~torch.eye(n, dtype=torch.bool, device=z.device)
        sigma = torch.median(d2[off].clamp_min(0.0).sqrt())
        if not sigma > 0:
            sigma = torch.ones((), dtype=z.dtype, device=z.device)
    else:
        sigma = torch.as_tensor(bandwidth, dtype=z.dtype, device=z.device)
    k = torch.exp(-d2 / (2.0 * sigma * sigma))
    m = x.shape[0]
    kxx = k[:m, :m].mean()
    kyy = k[m:, m:].mean()
    kxy = k[:m, m:].mean()
    return (kxx + kyy - 2.0 * kxy).clamp_min(0.0)


def mmd(X: torch.Tensor, Y: torch.Tensor, w: LossWeights = DEFAULT_WEIGHTS) -> torch.Tensor:
    """Biased MMD^2 between the 8x8 patch populations of two rasters, Gaussian kernel."""
    _check_same(X, Y)
    px = _patches(_as_batch(X), w.mmd_patch)
    py = _patches(_as_batch(Y), w.mmd_patch)
    vals = [_mmd_single(px[b], py[b], w.mmd_bandwidth) for b in range(px.shape[0])]
    return torch.stack(vals).mean()


def composite(t_pred, t_true, X_pred, X_true, w: LossWeights = DEFAULT_WEIGHTS) -> dict:
    """Tandem objective; returns the total and every component (all tensors)."""
    parts = {"mse": mse(t_pred, t_true), "ssl": ssl(X_pred, X_true, w), "mmd": mmd(X_pred, X_true, w)}
    parts["loss"] = parts["mse"] + w.beta1 * parts["ssl"] + w.beta2 * parts["mmd"]
    return parts
