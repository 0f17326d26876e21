"""Inverse model: 1000-bin transmissibility -> geometry raster.

The spectrum is embedded per bin, given a learnable Gaussian position
encoding and passed through multi-head self-attention. A rectified latent
image is then refined, mixed at three kernel scales and decoded with tanh.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ValidationError

PE_INITS = ("literal", "log_midpoint")


@dataclass(frozen=True)
class InverseConfig:
    seq_len: int = 1000
    d_model: int = 64
    attn_heads: int = 4
    latent_shape: tuple = (3, 128, 256)
    latent_rank: int = 64
    refine_channels: int = 32
    msrn_kernels: tuple = (1, 3, 5)
    decode_channels: tuple = (16, 8, 4)
    pe_init: str = "literal"

    def __post_init__(self):
        for name in ("latent_shape", "msrn_kernels", "decode_channels"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.seq_len != 1000:
            raise ValidationError("spectra have 1000 bins")
        if self.latent_shape[0] != 3:
            raise ValidationError("latent must have 3 channels")
        if self.msrn_kernels != (1, 3, 5):
            raise ValidationError("multiscale block uses kernels (1, 3, 5)")
        if self.pe_init not in PE_INITS:
            raise ValidationError(f"pe_init must be one of {PE_INITS}")
        if self.d_model % self.attn_heads:
            raise ValidationError("d_model must be divisible by attn_heads")

    def to_dict(self):
        return asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def gaussian_pe(mu0: torch.Tensor, sigma0: torch.Tensor, length: int = 1000) -> torch.Tensor:
    """PE[2p] = sin(g_p), PE[2p+1] = cos(g_p), g_p = exp(-(log(p+1) - mu0)^2 / (2 sigma0^2))."""
    p = torch.arange((length + 1) // 2, dtype=mu0.dtype, device=mu0.device)
    g = torch.exp(-((torch.log(p + 1.0) - mu0) ** 2) / (2.0 * sigma0**2))
    return torch.stack([torch.sin(g), torch.cos(g)], dim=1).reshape(-1)[:length]


class GaussianPE(nn.Module):
    """Learnable mu0 and sigma0 (positive through softplus)."""

    def __init__(self, length: int = 1000, init: str = "literal"):
        super().__init__()
        self.length = length
        mu = length / 2 if init == "literal" else math.log(length / 2)
        self.mu0 = nn.Parameter(torch.tensor(float(mu)))
        # softplus(raw) = 1 at init
        self.sigma_raw = nn.Parameter(torch.tensor(math.log(math.e - 1.0)))

    @property
    def sigma0(self):
        return F.softplus(self.sigma_raw)

    def forward(self):
        return gaussian_pe(self.mu0, self.sigma0, self.length)


class SpectrumAttention(nn.Module):
    def __init__(self, cfg: InverseConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Linear(1, cfg.d_model)
        self.pe = GaussianPE(cfg.seq_len, cfg.pe_init)
        self.attn = nn.MultiheadAttention(cfg.d_model, cfg.attn_heads, batch_first=True)
        n_latent = int(np.prod(cfg.latent_shape))
        # low-rank stand-in for the (1000*64 -> 98304) dense map
        self.down = nn.Linear(cfg.seq_len * cfg.d_model, cfg.latent_rank)
        self.up = nn.Linear(cfg.latent_rank, n_latent)

    def tokens(self, s):
        if s.dim() == 1:
            s = s[None]
        if s.shape[-1] != self.cfg.seq_len:
            raise ValidationError(f"spectrum must have {self.cfg.seq_len} bins, got {s.shape[-1]}")
        return self.embed(s[..., None]) + self.pe().to(s.dtype)[None, :, None]

    def forward(self, s, return_weights: bool = False):
        x = self.tokens(s)
        h, w = self.attn(x, x, x, need_weights=return_weights, average_attn_weights=False)
        z = F.relu(self.up(self.down(h.flatten(1))))
        z = z.view(-1, *self.cfg.latent_shape)
        return (z, w) if return_weights else z


class Refine(nn.Module):
    """Reflection pad 3 px, then three valid 3x3 convolutions with ReLU."""

    def __init__(self, cin: int = 3, c: int = 32):
        super().__init__()
        self.pad = nn.ReflectionPad2d(3)
        self.convs = nn.ModuleList([nn.Conv2d(cin, c, 3), nn.Conv2d(c, c, 3), nn.Conv2d(c, c, 3)])

    def forward(self, x):
        x = self.pad(x)
        for conv in self.convs:
            x = F.relu(conv(x))
        return x


class MSRN(nn.Module):
    """Parallel 1/3/5 convolutions, 1x1 fusion, residual add."""

    def __init__(self, c: int = 32, kernels=(1, 3, 5)):
        super().__init__()
        self.kernels = tuple(kernels)
        self.paths = nn.ModuleList(nn.Conv2d(c, c, k, padding=k // 2) for k in kernels)
        self.fuse = nn.Conv2d(c * len(kernels), c, 1)

    def forward(self, x):
        return x + self.fuse(torch.cat([F.relu(p(x)) for p in self.paths], dim=1))


class Decoder(nn.Module):
    def __init__(self, cin: int = 32, channels=(16, 8, 4)):
        super().__init__()
        chans = (cin, *channels)
        self.deconvs = nn.ModuleList(
            nn.ConvTranspose2d(a, b, 3, stride=1, padding=1) for a, b in zip(chans[:-1], chans[1:]))
        self.out = nn.Conv2d(chans[-1], 1, 3, padding=1)

    def forward(self, x):
        for d in self.deconvs:
            x = F.relu(d(x))
        return torch.tanh(self.out(x))


class InverseModel(nn.Module):
    def __init__(self, cfg: InverseConfig = InverseConfig()):
        super().__init__()
        self.cfg = cfg
        c = cfg.refine_channels
        self.encoder = SpectrumAttention(cfg)
        self.refine = Refine(cfg.latent_shape[0], c)
        self.msrn = MSRN(c, cfg.msrn_kernels)
        self.decoder = Decoder(c, cfg.decode_channels)

    def forward(self, s):
        """(B, 1000) normalised spectra -> (B, 1, 128, 256) rasters in [-1, 1]."""
        return self.decoder(self.msrn(self.refine(self.encoder(s))))

    @torch.no_grad()
    def design(self, spectrum_norm: np.ndarray) -> np.ndarray:
        """One normalised spectrum -> raster (H, W) float32."""
        was = self.training
        self.eval()
        dtype = next(self.parameters()).dtype
        s = torch.as_tensor(np.asarray(spectrum_norm), dtype=dtype)
        out = self(s if s.dim() == 2 else s[None])[0, 0].float().numpy().copy()
        self.train(was)
        return out
