import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from conftest import fd_relative_error
from interlace import forward_net as FN
from interlace.checkpoint import load_checkpoint, save_checkpoint
from interlace.errors import CheckpointError, ValidationError
from interlace.femlite import PLA, MaterialProps

TINY = FN.ForwardConfig(gfe_blocks=2, channels=4, hidden=32)


def _mat(b=1):
    return torch.tensor([[3.5e9, 1240.0, 0.35, 0.001]] * b)


def test_fsa_head_shape_and_init():
    head = FN.FsaHead(FN.FsaHeadConfig(alpha=3, channels=16))
    x = torch.randn(1, 16, 128, 256)
    assert head(x).shape == x.shape
    assert head.w1.item() == 1.0 and head.w2.item() == 1.0


def test_fsa_gate_bound():
    head = FN.FsaHead(FN.FsaHeadConfig(alpha=5, channels=4))
    x = torch.randn(2, 4, 20, 24)
    with torch.no_grad():
        xf = head.conv(x)
        xo = head(x)
    assert torch.all(xo.abs() <= xf.abs())


def test_fsa_config_validation():
    with pytest.raises(ValidationError):
        FN.FsaHeadConfig(alpha=2)
    with pytest.raises(ValidationError):
        FN.FsaHeadConfig(beta=5)
    with pytest.raises(ValidationError):
        FN.ForwardConfig(heads=3)


def test_geometric_attention_channels_and_kernels():
    cfg = FN.ForwardConfig()
    ga = FN.GeometricAttention(4, cfg.head_alphas)
    assert sorted(h.alpha for h in ga.heads) == [1, 1, 1, 3, 3, 3, 5, 5]
    x = torch.randn(1, 4, 16, 16)
    assert ga(x).shape == x.shape


def test_geometric_attention_zero_input_is_bias():
    ga = FN.GeometricAttention(4, (1, 3, 5))
    with torch.no_grad():
        out = ga(torch.zeros(1, 4, 12, 14))
    expected = ga.proj.bias.detach()[None, :, None, None].expand_as(out)
    assert torch.equal(out, expected)


@settings(max_examples=10, deadline=None)
@given(st.integers(7, 20), st.integers(7, 20))
def test_gfe_block_preserves_shape(h, w):
    blk = FN.GFEBlock(3, (1, 3, 5), 0.1)
    assert blk(torch.randn(2, 3, h, w)).shape == (2, 3, h, w)


def test_gfe_block_eval_deterministic_and_residual_identity():
    blk = FN.GFEBlock(4, (1, 3), 0.1).eval()
    x = torch.randn(1, 4, 16, 16)
    with torch.no_grad():
        assert torch.equal(blk(x), blk(x))
        blk.ga.proj.weight.zero_()
        blk.ga.proj.bias.zero_()
        assert torch.equal(blk(x), blk.ln2(x))


def test_predict_shape_and_determinism():
    model = FN.ForwardModel(TINY)
    r = np.random.default_rng(0).uniform(-1, 1, (128, 256)).astype(np.float32)
    a = model.predict(r, PLA)
    b = model.predict(r, PLA)
    assert a.shape == (1000,)
    assert np.array_equal(a, b)


def test_wrong_raster_shape():
    model = FN.ForwardModel(TINY)
    with pytest.raises(ValidationError):
        model(torch.zeros(1, 1, 64, 64), _mat())


def test_material_permutation_wiring():
    model = FN.ForwardModel(TINY).eval()
    r = torch.randn(2, 1, 128, 256)
    mat = torch.tensor([[3.5e9, 1240.0, 0.35, 0.001], [2.0e9, 1100.0, 0.3, 0.01]])
    perm = [2, 0, 3, 1]
    order = tuple(FN.MATERIAL_KEYS[i] for i in perm)
    with torch.no_grad():
        assert torch.equal(model(r, mat), model(r, mat[:, perm], material_order=order))


def test_material_changes_prediction():
    model = FN.ForwardModel(TINY).eval()
    r = np.zeros((128, 256), np.float32)
    assert not np.array_equal(model.predict(r, PLA), model.predict(r, MaterialProps(E=2e9)))


def test_spectrum_norm_roundtrip():
    n = FN.SpectrumNorm(-80.0, 20.0)
    x = np.linspace(-80, 20, 11)
    np.testing.assert_allclose(n.forward(x)[[0, -1]], [-1, 1])
    np.testing.assert_allclose(n.inverse(n.forward(x)), x)
    with pytest.raises(ValidationError):
        FN.SpectrumNorm(1.0, 1.0)


def test_checkpoint_roundtrip(tmp_path):
    model = FN.ForwardModel(TINY)
    model.norm = FN.SpectrumNorm(-90.0, 30.0)
    r = np.random.default_rng(1).uniform(-1, 1, (128, 256)).astype(np.float32)
    before = model.predict(r, PLA)
    path = save_checkpoint(tmp_path / "f.pt", model, extra={"epoch": 3})
    loaded, blob = load_checkpoint(path, expected_config=TINY)
    assert np.array_equal(loaded.predict(r, PLA), before)
    for k, v in model.state_dict().items():
        assert torch.equal(v, loaded.state_dict()[k])
    assert blob["norm"] == {"lo": -90.0, "hi": 30.0}
    assert loaded.norm == model.norm
    assert blob["extra"]["epoch"] == 3 and blob["version"] == 1


def test_checkpoint_fingerprint_mismatch(tmp_path):
    path = save_checkpoint(tmp_path / "f.pt", FN.ForwardModel(TINY))
    other = FN.ForwardConfig(gfe_blocks=2, channels=8, hidden=32)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_config=other)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, kind="inverse")


def test_checkpoint_corrupt(tmp_path):
    path = tmp_path / "bad.pt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    good = save_checkpoint(tmp_path / "g.pt", FN.ForwardModel(TINY))
    blob = torch.load(good, weights_only=True)
    blob["state_dict"]["fc3.bias"][0] += 1.0
    torch.save(blob, good)
    with pytest.raises(CheckpointError):
        load_checkpoint(good)


def test_fsa_gradients_match_finite_differences():
    head = FN.FsaHead(FN.FsaHeadConfig(alpha=3, channels=1)).double()
    with torch.no_grad():
        head.w1.fill_(0.7)
        head.w2.fill_(1.3)
    x = torch.randn(1, 1, 8, 8, dtype=torch.float64)
    wts = torch.randn(1, 1, 8, 8, dtype=torch.float64)
    params = [head.w1, head.w2, head.conv.weight, head.att.weight, head.att.bias]
    assert fd_relative_error(lambda: (head(x) * wts).sum(), params) < 1e-4
