import numpy as np
import pytest
import torch


def fd_relative_error(fn, params, eps=1e-6):
    """Max relative error between autograd and central differences over ``params``.

    ``fn`` returns a scalar tensor; ``params`` are float64 leaf tensors.
    """
    worst = 0.0
    for p in params:
        for q in params:
            q.grad = None
        fn().backward()
        analytic = p.grad.detach().clone().reshape(-1)
        numeric = torch.zeros_like(analytic)
        flat = p.data.reshape(-1)
        for i in range(flat.numel()):
            old = flat[i].item()
            flat[i] = old + eps
            with torch.no_grad():
                fp = fn().item()
            flat[i] = old - eps
            with torch.no_grad():
                fm = fn().item()
            flat[i] = old
            numeric[i] = (fp - fm) / (2 * eps)
        denom = max(analytic.norm().item(), numeric.norm().item(), 1e-12)
        worst = max(worst, (analytic - numeric).norm().item() / denom)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)


TINY_FORWARD = {"gfe_blocks": 1, "heads": 2, "head_alphas": (1, 3), "channels": 4, "hidden": 32}
TINY_INVERSE = {"d_model": 8, "attn_heads": 2, "latent_rank": 4, "refine_channels": 4, "decode_channels": (4, 4, 4)}


def synthetic_dataset(n=6, seed=0):
    """In-memory stand-in for a loaded corpus: random bar rasters and smooth spectra."""
    from pathlib import Path

    from interlace.dataset import Dataset
    from interlace.forward_net import SpectrumNorm

    r = np.random.default_rng(seed)
    rasters = -np.ones((n, 128, 256), np.float32)
    for i in range(n):
        for _ in range(6):
            y, x = r.integers(0, 120), r.integers(0, 200)
            rasters[i, y:y + 4, x:x + 50] = 1.0
    f = np.linspace(0, 1, 1000)
    spectra = np.array([-30 * np.sin(np.pi * f * (1 + i)) ** 2 for i in range(n)])
    mats = np.tile([3.5e9, 1.25e-6, 0.35, 0.001], (n, 1))
    manifest = {"samples": [{"spec_hash": f"{i:064x}"} for i in range(n)],
                "normalization": {"spectrum_mean_db": list(spectra.mean(0))}}
    return Dataset(Path("."), manifest, rasters, spectra, mats, SpectrumNorm())


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Three real samples through the full generator (about 25 s)."""
    from interlace.dataset import generate_dataset

    out = tmp_path_factory.mktemp("corpus")
    generate_dataset(out, n=3, seed=0)
    return out


_ACCEPTANCE = []


@pytest.fixture
def accept():
    """``accept(criterion, ok, detail)`` records a line for the acceptance summary."""

    def record(criterion, ok, detail):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        _ACCEPTANCE.append(f"criterion {criterion:>2}: {status}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
