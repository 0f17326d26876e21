import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from conftest import TINY_FORWARD, TINY_INVERSE, synthetic_dataset
from interlace import trainer as T
from interlace.checkpoint import load_checkpoint
from interlace.errors import NumericalError, ValidationError
from interlace.forward_net import ForwardConfig
from interlace.inverse_net import InverseConfig

FCFG = ForwardConfig(**TINY_FORWARD)
ICFG = InverseConfig(**TINY_INVERSE)


def _cfg(**kw):
    kw.setdefault("epochs", 3)
    kw.setdefault("batch_size", 2)
    return T.TrainConfig(**kw)


@pytest.fixture(scope="module")
def data():
    return synthetic_dataset(6)


def test_default_split_sizes():
    tr, va = T.split_dataset(720, seed=0)
    assert len(tr) == 648 and len(va) == 72
    assert not set(tr) & set(va) and len(set(tr) | set(va)) == 720
    np.testing.assert_array_equal(tr, T.split_dataset(720, seed=0)[0])
    assert not np.array_equal(tr, T.split_dataset(720, seed=1)[0])


def test_split_errors():
    with pytest.raises(ValidationError):
        T.split_dataset(1)
    tr, va = T.split_dataset(2, train_fraction=0.99)
    assert len(tr) == len(va) == 1


def test_cosine_endpoints():
    assert T.cosine_lr(0, 299, 1e-3, 1e-5) == 1e-3
    assert T.cosine_lr(299, 299, 1e-3, 1e-5) == pytest.approx(1e-5, abs=1e-18)
    assert T.cosine_lr(150, 300, 1e-3, 1e-5) == pytest.approx(0.5 * (1e-3 + 1e-5))


@given(st.integers(2, 500))
def test_cosine_monotone(total):
    lrs = [T.cosine_lr(t, total, 1e-3, 1e-5) for t in range(total + 1)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert min(lrs) >= 1e-5 and max(lrs) <= 1e-3


def test_train_config_validation_and_roundtrip():
    for kw in ({"lr0": 1e-5, "lr_min": 1e-3}, {"epochs": 0}, {"batch_size": 0}, {"train_fraction": 1.0}):
        with pytest.raises(ValidationError):
            T.TrainConfig(**kw)
    c = T.TrainConfig(epochs=7)
    assert T.TrainConfig.from_dict(c.to_dict()) == c


def test_train_forward_logs_and_best_checkpoint(data, tmp_path):
    summary = T.train_forward(_cfg(), data, tmp_path, FCFG)
    rows = T.read_log(tmp_path / "forward_log.csv")
    assert [int(r["epoch"]) for r in rows] == [0, 1, 2]
    assert list(rows[0]) == list(T.FORWARD_LOG_FIELDS)
    assert float(rows[0]["lr"]) == 1e-3 and float(rows[-1]["lr"]) == pytest.approx(1e-5)
    vals = [float(r["val_loss"]) for r in rows]
    assert summary["best_val_loss"] == min(vals)
    model, blob = load_checkpoint(tmp_path / "forward_best.pt", FCFG, kind="forward")
    assert blob["extra"]["val_loss"] == min(vals)
    _, va = T.split_dataset(len(data), 0, 0.9)
    assert T.forward_mse(model, data, va).mean() == pytest.approx(min(vals), rel=1e-6)
    assert (tmp_path / "forward_last.pt").is_file()


def test_train_forward_reduces_loss(data, tmp_path):
    T.train_forward(_cfg(epochs=8, lr0=3e-3), data, tmp_path, FCFG)
    rows = T.read_log(tmp_path / "forward_log.csv")
    assert float(rows[-1]["loss"]) < float(rows[0]["loss"])


def test_train_forward_nan_is_numerical_error(data, tmp_path):
    bad = synthetic_dataset(4)
    bad.spectra_db[0, 0] = np.nan
    with pytest.raises(NumericalError):
        T.train_forward(_cfg(epochs=1, batch_size=4), bad, tmp_path, FCFG)


def test_forward_training_deterministic(data, tmp_path):
    a = T.train_forward(_cfg(), data, tmp_path / "a", FCFG)
    b = T.train_forward(_cfg(), data, tmp_path / "b", FCFG)
    assert a["final_train_loss"] == b["final_train_loss"]
    assert (tmp_path / "a/forward_log.csv").read_text() == (tmp_path / "b/forward_log.csv").read_text()


@pytest.fixture(scope="module")
def forward(data, tmp_path_factory):
    d = tmp_path_factory.mktemp("fwd")
    T.train_forward(_cfg(epochs=2), data, d, FCFG)
    return load_checkpoint(d / "forward_best.pt", kind="forward")[0]


def test_train_inverse_keeps_forward_frozen(data, forward, tmp_path):
    before = {k: v.clone() for k, v in forward.state_dict().items()}
    T.train_inverse(_cfg(epochs=2), data, forward, tmp_path, ICFG)
    after = forward.state_dict()
    assert all(torch.equal(before[k], after[k]) for k in before)
    assert not any(p.requires_grad for p in forward.parameters())


def test_inverse_log_composite_identity(data, forward, tmp_path):
    cfg = _cfg()
    summary = T.train_inverse(cfg, data, forward, tmp_path, ICFG)
    rows = T.read_log(tmp_path / "inverse_log.csv")
    assert list(rows[0]) == list(T.INVERSE_LOG_FIELDS)
    assert len(rows) == cfg.epochs
    for r in rows:
        mse, ssl, mmd = (float(r[k]) for k in ("mse", "ssl", "mmd"))
        assert float(r["loss"]) == mse + 0.1 * ssl + 0.6 * mmd
        assert 0.0 <= float(r["val_similarity"]) <= 1.0
    assert summary["best_val_loss"] == min(float(r["val_loss"]) for r in rows)
    inv, blob = load_checkpoint(tmp_path / "inverse_best.pt", ICFG, kind="inverse")
    assert blob["norm"] is not None


def test_evaluate_and_summarize(data, forward, tmp_path):
    T.train_inverse(_cfg(epochs=1), data, forward, tmp_path, ICFG)
    inv = load_checkpoint(tmp_path / "inverse_best.pt", kind="inverse")[0]
    rows = T.evaluate(forward, inv, data, np.array([0, 3]))
    assert [r["index"] for r in rows] == [0, 3]
    assert rows[1]["spec_hash"] == data.manifest["samples"][3]["spec_hash"]
    for r in rows:
        assert 0.0 <= r["similarity"] <= 1.0
        assert r["mse_forward_original"] >= 0 and r["mse_forward_generated"] >= 0
        assert r["mse_fem_generated"] is None
    s = T.summarize(rows)
    assert s["n"] == 2
    assert s["mean_similarity"] == pytest.approx(np.mean([r["similarity"] for r in rows]))
    assert s["mean_mse_fem_generated"] is None
    assert math.isfinite(s["mean_mse_forward_generated"])
