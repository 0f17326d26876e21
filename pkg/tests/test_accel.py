import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from interlace import _accel as A
from interlace import lattice as L

pytestmark = pytest.mark.skipif(not A.HAVE_NUMBA, reason="numba not installed")

LS1 = L.LatticeSpec(interlace=(L.InterlaceLevel("secondary", "honeycomb", "all"),))


def test_frame_elements_backends_agree():
    g = L.build_panel(LS1)
    xy = g.nodes * 1e-3
    w = g.widths * 1e-3
    args = (xy, g.edges.astype(np.int64), 3.5e9 * w * 5e-3, 3.5e9 * 5e-3 * w**3 / 12, 1240 * w * 5e-3)
    kn, mn = A.frame_elements_np(*args)
    kb, mb = A.frame_elements_nb(*args)
    np.testing.assert_allclose(kb, kn, rtol=1e-12, atol=1e-9 * np.abs(kn).max())
    np.testing.assert_allclose(mb, mn, rtol=1e-12, atol=1e-12 * np.abs(mn).max())


def test_element_matrices_symmetric():
    g = L.build_unit_cell("star", 9.5)
    k, m = A.frame_elements(g.nodes * 1e-3, g.edges, np.ones(g.n_edges), np.ones(g.n_edges), np.ones(g.n_edges))
    np.testing.assert_array_equal(k, np.transpose(k, (0, 2, 1)))
    np.testing.assert_array_equal(m, np.transpose(m, (0, 2, 1)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_points_on_segments_backends_agree(seed):
    rng = np.random.default_rng(seed)
    grid = np.stack(np.meshgrid(np.arange(6.0), np.arange(6.0)), -1).reshape(-1, 2)
    xy = grid[rng.permutation(36)[:30]]
    edges = rng.integers(0, 30, size=(20, 2))
    edges = edges[edges[:, 0] != edges[:, 1]].astype(np.int64)
    a = A.points_on_segments_np(xy, edges, 1e-6)
    b = A.points_on_segments_nb(xy, edges, 1e-6)
    key = lambda r: sorted(zip(r[0].tolist(), r[1].tolist()))  # noqa: E731
    assert key(a) == key(b)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_raster_backends_agree(seed):
    rng = np.random.default_rng(seed)
    p0 = rng.uniform(-5, 60, size=(15, 2))
    p1 = rng.uniform(-5, 60, size=(15, 2))
    hw = rng.uniform(0.5, 3, size=15)
    np.testing.assert_array_equal(A.raster_segments_np(p0, p1, hw, 40, 50),
                                  A.raster_segments_nb(p0, p1, hw, 40, 50))


def test_modal_response_backends_agree():
    rng = np.random.default_rng(1)
    coef = rng.normal(size=80)
    wn = np.sort(rng.uniform(100, 8e4, size=80))
    w = 2 * np.pi * np.arange(10, 10001, 10.0)
    np.testing.assert_allclose(A.modal_response_nb(coef, wn, 1e-3, w),
                               A.modal_response_np(coef, wn, 1e-3, w), rtol=1e-10)


def test_env_flag_selects_numpy():
    code = "import interlace._accel as a; print(a.BACKEND)"
    env = dict(os.environ, INTERLACE_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
