import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage as ndi
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from interlace import analysis as A
from interlace import io
from interlace import lattice as L
from interlace.errors import ValidationError
from interlace.femlite import FREQ_HZ, Bandgap, Spectrum, detect_bandgaps

LS1 = L.LatticeSpec(interlace=(L.InterlaceLevel("secondary", "honeycomb", "all"),))


@pytest.fixture(scope="module")
def ls1_raster():
    return L.rasterize(L.build_panel(LS1))


# --- denoise ----------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(arrays(np.float32, (24, 40), elements=st.floats(-1, 1, width=32)))
def test_denoise_idempotent_and_binary(r):
    once = A.denoise(r)
    assert set(np.unique(once)) <= {-1.0, 1.0}
    np.testing.assert_array_equal(A.denoise(once), once)


def test_denoise_keeps_clean_raster(ls1_raster):
    out = A.denoise(ls1_raster)
    changed = np.mean(out != np.where(ls1_raster > 0, 1.0, -1.0))
    assert changed < 0.01


def test_denoise_removes_salt_and_pepper(ls1_raster, rng):
    clean = A.denoise(ls1_raster)
    noisy = clean.copy()
    flip = rng.random(noisy.shape) < 0.01
    noisy[flip] *= -1
    out = A.denoise(noisy)
    assert np.mean(out != clean) < 0.5 * np.mean(noisy != clean)
    # every isolated speck in the background is gone; residual errors hug real struts
    near = ndi.binary_dilation(clean > 0, iterations=2)
    assert not np.any((out > 0) & ~near)


def test_denoise_empty_and_full():
    assert np.all(A.denoise(-np.ones((16, 16))) == -1)
    assert np.all(A.denoise(np.ones((16, 16))) == 1)


# --- vectorize ----------------------------------------------------------------

def test_vectorize_ls1(ls1_raster):
    g = A.vectorize(ls1_raster)
    n = len(g.nodes)
    adj = coo_matrix((np.ones(len(g.edges)), (g.edges[:, 0], g.edges[:, 1])), shape=(n, n))
    assert connected_components(adj, directed=False)[0] == 1
    assert len(g.clamped_nodes) and len(g.tip_nodes)
    assert not set(g.clamped_nodes) & set(g.tip_nodes)
    ref = L.build_panel(LS1).nodes
    span, ref_span = np.ptp(g.nodes, axis=0), np.ptp(ref, axis=0)
    np.testing.assert_allclose(span, ref_span, rtol=0.05)
    assert np.all(g.widths > 0)


def test_vectorize_keeps_largest_piece():
    r = -np.ones((32, 64), np.float32)
    r[10:14, 2:60] = 1
    r[25:27, 5:9] = 1
    g = A.vectorize(r, px_per_mm=1.0)
    assert g.nodes[:, 1].min() > 32 - 1 - 15


def test_vectorize_empty():
    with pytest.raises(ValidationError, match="no material"):
        A.vectorize(-np.ones((8, 8)))


# --- notches ----------------------------------------------------------------

def test_notch_parse_and_validation():
    assert A.NotchSpec.parse("6000:7000:-40") == A.NotchSpec(6000.0, 7000.0, -40.0)
    for bad in ("6000:7000", "a:b:c"):
        with pytest.raises(ValidationError):
            A.NotchSpec.parse(bad)
    for kw in ({"f_lo": 7000, "f_hi": 6000}, {"f_lo": 5, "f_hi": 100}, {"f_lo": 1, "f_hi": 2, "depth_db": 3},
               {"f_lo": 100, "f_hi": 200, "edge_width_hz": -1}):
        with pytest.raises(ValidationError):
            A.NotchSpec(**kw)


def test_notch_profile_shape():
    n = A.NotchSpec(6000, 7000)
    p = n.profile()
    at = dict(zip(FREQ_HZ, p))
    assert at[6000.0] == pytest.approx(0.5) and at[7000.0] == pytest.approx(0.5)
    assert at[6500.0] == 1.0 and at[5900.0] == 0.0 and at[7100.0] == 0.0
    rising = p[(FREQ_HZ >= 5960) & (FREQ_HZ <= 6040)]
    assert np.all(np.diff(rising) > 0)
    hard = A.NotchSpec(6000, 7000, edge_width_hz=0).profile()
    np.testing.assert_array_equal(hard, ((FREQ_HZ >= 6000) & (FREQ_HZ <= 7000)).astype(float))


def test_single_notch_target_crosses_threshold_at_edges():
    t = A.synthesize_target("flat", [A.NotchSpec(6000, 7000, -40)])
    assert t.amp_db.min() == -40.0
    assert t.amp_db[FREQ_HZ == 6000][0] == pytest.approx(-20.0)
    assert np.all(t.amp_db[(FREQ_HZ < 5950) | (FREQ_HZ > 7050)] == 0)
    (gap,) = detect_bandgaps(t)
    assert abs(gap.f_lo - 6000) <= 10 and abs(gap.f_hi - 7000) <= 10
    assert t.meta["notches"] == [[6000, 7000, -40]]


def test_three_notch_round_trip():
    notches = [A.NotchSpec(1000, 1500, -40), A.NotchSpec(4000, 4600, -30), A.NotchSpec(8000, 9000, -50)]
    t = A.synthesize_target("flat", notches[::-1])
    gaps = detect_bandgaps(t)
    assert len(gaps) == 3
    for g, n in zip(gaps, notches):
        # the -20 dB crossing sits where depth * (1 + sin(pi u)) / 2 = -20 inside the taper
        u = np.arcsin(2 * 20 / -n.depth_db - 1) / np.pi
        assert abs(g.f_lo - (n.f_lo + u * n.edge_width_hz)) <= 10
        assert abs(g.f_hi - (n.f_hi - u * n.edge_width_hz)) <= 10
        assert A.band_attenuation(t.amp_db, n.f_lo, n.f_hi) == pytest.approx(-n.depth_db)
    ideal = [Bandgap(n.f_lo, n.f_hi, n.depth_db) for n in notches]
    assert A.gap_iou(gaps, ideal) > 0.97


def test_target_baselines(rng):
    mean = rng.normal(-10, 3, 1000)
    t = A.synthesize_target("corpus_mean", [A.NotchSpec(2000, 3000)], mean)
    far = (FREQ_HZ < 1900) | (FREQ_HZ > 3100)
    np.testing.assert_array_equal(t.amp_db[far], mean[far])
    custom = A.synthesize_target(mean, [])
    np.testing.assert_array_equal(custom.amp_db, mean)
    assert custom.meta["baseline"] == "custom"
    with pytest.raises(ValidationError):
        A.synthesize_target("corpus_mean", [])
    with pytest.raises(ValidationError):
        A.synthesize_target("pink")
    with pytest.raises(ValidationError, match="overlap"):
        A.synthesize_target("flat", [A.NotchSpec(1000, 2000), A.NotchSpec(2000, 2500)])


# --- comparison ----------------------------------------------------------------

def test_gap_iou_oracle():
    a, b = [Bandgap(100, 200, -30)], [Bandgap(150, 250, -30)]
    # bins 100..200 and 150..250 (11 each) share 150..200 (6) -> 6 / 16
    assert A.gap_iou(a, b) == pytest.approx(6 / 16)
    assert A.gap_iou(a, a) == 1.0
    assert A.gap_iou([], []) == 1.0
    assert A.gap_iou(a, []) == 0.0
    assert A.gap_iou(a, [Bandgap(5000, 6000, -30)]) == 0.0


@given(st.lists(st.tuples(st.integers(1, 900), st.integers(1, 50)), max_size=4),
       st.lists(st.tuples(st.integers(1, 900), st.integers(1, 50)), max_size=4))
def test_gap_iou_symmetric_bounded(x, y):
    a = [Bandgap(10.0 * s, 10.0 * (s + w), -30) for s, w in x]
    b = [Bandgap(10.0 * s, 10.0 * (s + w), -30) for s, w in y]
    v = A.gap_iou(a, b)
    assert 0.0 <= v <= 1.0 and v == A.gap_iou(b, a)


def test_band_attenuation():
    flat = np.zeros(1000)
    assert A.band_attenuation(flat, 6000, 7000) == 0.0
    ramp = np.linspace(0, -10, 1000)
    assert A.band_attenuation(ramp, 4000, 5000) > 0
    with pytest.raises(ValidationError):
        A.band_attenuation(flat, 20000, 30000)


def test_compare_spectra():
    t = A.synthesize_target("flat", [A.NotchSpec(6000, 7000)])
    same = A.compare_spectra(t, t.amp_db)
    assert same["mse"] == 0 and same["max_abs_db"] == 0 and same["gap_iou"] == 1.0
    diff = A.compare_spectra(t, np.zeros(1000))
    assert diff["gap_iou"] == 0.0 and diff["max_abs_db"] == 40.0 and diff["gaps_b"] == []


# --- plots ----------------------------------------------------------------

def _run_dir(path, rng):
    path.mkdir()
    t = A.synthesize_target("flat", [A.NotchSpec(6000, 7000)])
    io.write_spectrum_csv(path / "spectra.csv", t.amp_db, {"forward_db": t.amp_db + rng.normal(0, 1, 1000)})
    io.write_raster(path, np.clip(rng.normal(0, 1, (16, 32)), -1, 1), "raster_raw")
    (path / "forward_log.csv").write_text("epoch,loss,mse,ssl,mmd,lr,val_loss\n0,1.0,1.0,,,0.001,0.9\n"
                                          "1,0.5,0.5,,,1e-05,0.6\n")
    return path


def test_emit_plots_names_and_byte_identical(tmp_path, rng):
    run = _run_dir(tmp_path / "run", rng)
    a = A.emit_plots(run, tmp_path / "a")
    b = A.emit_plots(run, tmp_path / "b")
    assert sorted(p.name for p in a) == ["plot_raster_raw.png", "spectra.svg", "training_forward.svg"]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    assert "<svg" in (tmp_path / "a/spectra.svg").read_text()


def test_emit_plots_errors(tmp_path):
    with pytest.raises(ValidationError):
        A.emit_plots(tmp_path / "missing")
    with pytest.raises(ValidationError, match="plottable"):
        A.emit_plots(tmp_path)
