"""Hot numeric kernels with an optional numba path.

Every kernel exists twice: a pure-numpy version (``*_np``) and a numba
``@njit`` version (``*_nb``). The public name is bound to one of them at
import time. Set ``INTERLACE_NO_NUMBA=1`` to force the numpy path; it is also
used automatically when numba cannot be imported.
"""
from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("INTERLACE_NO_NUMBA", "0") not in ("1", "true", "yes")
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# planar frame element matrices
# ---------------------------------------------------------------------------

def frame_elements_np(xy, edges, EA, EI, rhoA):
    """Global-frame 6x6 stiffness and consistent-mass matrices per element.

    ``xy`` in metres, ``EA`` [N], ``EI`` [N m^2], ``rhoA`` [kg/m].
    DOF order per element: u1, v1, th1, u2, v2, th2.
    """
    d = xy[edges[:, 1]] - xy[edges[:, 0]]
    L = np.hypot(d[:, 0], d[:, 1])
    c = d[:, 0] / L
    s = d[:, 1] / L
    n = len(L)

    k = np.zeros((n, 6, 6))
    a = EA / L
    b1 = 12.0 * EI / L**3
    b2 = 6.0 * EI / L**2
    b3 = 4.0 * EI / L
    b4 = 2.0 * EI / L
    k[:, 0, 0] = k[:, 3, 3] = a
    k[:, 0, 3] = k[:, 3, 0] = -a
    k[:, 1, 1] = k[:, 4, 4] = b1
    k[:, 1, 4] = k[:, 4, 1] = -b1
    k[:, 1, 2] = k[:, 2, 1] = k[:, 1, 5] = k[:, 5, 1] = b2
    k[:, 2, 4] = k[:, 4, 2] = k[:, 4, 5] = k[:, 5, 4] = -b2
    k[:, 2, 2] = k[:, 5, 5] = b3
    k[:, 2, 5] = k[:, 5, 2] = b4

    m = np.zeros((n, 6, 6))
    ma = rhoA * L / 6.0
    m[:, 0, 0] = m[:, 3, 3] = 2.0 * ma
    m[:, 0, 3] = m[:, 3, 0] = ma
    mb = rhoA * L / 420.0
    L2 = L * L
    m[:, 1, 1] = m[:, 4, 4] = 156.0 * mb
    m[:, 1, 4] = m[:, 4, 1] = 54.0 * mb
    m[:, 1, 2] = m[:, 2, 1] = 22.0 * L * mb
    m[:, 4, 5] = m[:, 5, 4] = -22.0 * L * mb
    m[:, 1, 5] = m[:, 5, 1] = -13.0 * L * mb
    m[:, 2, 4] = m[:, 4, 2] = 13.0 * L * mb
    m[:, 2, 2] = m[:, 5, 5] = 4.0 * L2 * mb
    m[:, 2, 5] = m[:, 5, 2] = -3.0 * L2 * mb

    T = np.zeros((n, 6, 6))
    for o in (0, 3):
        T[:, o, o] = c
        T[:, o, o + 1] = s
        T[:, o + 1, o] = -s
        T[:, o + 1, o + 1] = c
        T[:, o + 2, o + 2] = 1.0
    Tt = np.transpose(T, (0, 2, 1))
    kg = Tt @ k @ T
    mg = Tt @ m @ T
    # exact symmetry: the triple product leaves ~1 ulp asymmetry
    kg = 0.5 * (kg + np.transpose(kg, (0, 2, 1)))
    mg = 0.5 * (mg + np.transpose(mg, (0, 2, 1)))
    return kg, mg


def _frame_elements_loop(xy, edges, EA, EI, rhoA):
    n = edges.shape[0]
    kg = np.zeros((n, 6, 6))
    mg = np.zeros((n, 6, 6))
    k = np.zeros((6, 6))
    m = np.zeros((6, 6))
    T = np.zeros((6, 6))
    for e in range(n):
        i = edges[e, 0]
        j = edges[e, 1]
        dx = xy[j, 0] - xy[i, 0]
        dy = xy[j, 1] - xy[i, 1]
        L = np.sqrt(dx * dx + dy * dy)
        c = dx / L
        s = dy / L
        k[:, :] = 0.0
        m[:, :] = 0.0
        T[:, :] = 0.0
        a = EA[e] / L
        b1 = 12.0 * EI[e] / L**3
        b2 = 6.0 * EI[e] / L**2
        b3 = 4.0 * EI[e] / L
        b4 = 2.0 * EI[e] / L
        k[0, 0] = a
        k[3, 3] = a
        k[0, 3] = -a
        k[3, 0] = -a
        k[1, 1] = b1
        k[4, 4] = b1
        k[1, 4] = -b1
        k[4, 1] = -b1
        k[1, 2] = b2
        k[2, 1] = b2
        k[1, 5] = b2
        k[5, 1] = b2
        k[2, 4] = -b2
        k[4, 2] = -b2
        k[4, 5] = -b2
        k[5, 4] = -b2
        k[2, 2] = b3
        k[5, 5] = b3
        k[2, 5] = b4
        k[5, 2] = b4
        ma = rhoA[e] * L / 6.0
        mb = rhoA[e] * L / 420.0
        m[0, 0] = 2.0 * ma
        m[3, 3] = 2.0 * ma
        m[0, 3] = ma
        m[3, 0] = ma
        m[1, 1] = 156.0 * mb
        m[4, 4] = 156.0 * mb
        m[1, 4] = 54.0 * mb
        m[4, 1] = 54.0 * mb
        m[1, 2] = 22.0 * L * mb
        m[2, 1] = 22.0 * L * mb
        m[4, 5] = -22.0 * L * mb
        m[5, 4] = -22.0 * L * mb
        m[1, 5] = -13.0 * L * mb
        m[5, 1] = -13.0 * L * mb
        m[2, 4] = 13.0 * L * mb
        m[4, 2] = 13.0 * L * mb
        m[2, 2] = 4.0 * L * L * mb
        m[5, 5] = 4.0 * L * L * mb
        m[2, 5] = -3.0 * L * L * mb
        m[5, 2] = -3.0 * L * L * mb
        for o in (0, 3):
            T[o, o] = c
            T[o, o + 1] = s
            T[o + 1, o] = -s
            T[o + 1, o + 1] = c
            T[o + 2, o + 2] = 1.0
        ke = T.T @ k @ T
        me = T.T @ m @ T
        for p in range(6):
            for q in range(6):
                kg[e, p, q] = 0.5 * (ke[p, q] + ke[q, p])
                mg[e, p, q] = 0.5 * (me[p, q] + me[q, p])
    return kg, mg


# ---------------------------------------------------------------------------
# nodes lying in the interior of segments (T-junction splitting)
# ---------------------------------------------------------------------------

def points_on_segments_np(xy, edges, tol):
    """Return (edge, node, t) triples for nodes strictly inside an edge."""
    out_e, out_n, out_t = [], [], []
    for e, (i, j) in enumerate(edges):
        a = xy[i]
        d = xy[j] - a
        L2 = d @ d
        rel = xy - a
        t = rel @ d / L2
        perp = rel - t[:, None] * d
        dist = np.hypot(perp[:, 0], perp[:, 1])
        L = np.sqrt(L2)
        hit = (dist < tol) & (t * L > tol) & ((1.0 - t) * L > tol)
        idx = np.nonzero(hit)[0]
        out_e.extend([e] * len(idx))
        out_n.extend(idx.tolist())
        out_t.extend(t[idx].tolist())
    return (np.asarray(out_e, dtype=np.int64), np.asarray(out_n, dtype=np.int64),
            np.asarray(out_t, dtype=np.float64))


def _points_on_segments_loop(xy, edges, tol):
    cap = 16
    oe = np.empty(cap, np.int64)
    on = np.empty(cap, np.int64)
    ot = np.empty(cap, np.float64)
    cnt = 0
    nn = xy.shape[0]
    for e in range(edges.shape[0]):
        i = edges[e, 0]
        j = edges[e, 1]
        ax = xy[i, 0]
        ay = xy[i, 1]
        dx = xy[j, 0] - ax
        dy = xy[j, 1] - ay
        L2 = dx * dx + dy * dy
        L = np.sqrt(L2)
        xlo = min(ax, ax + dx) - tol
        xhi = max(ax, ax + dx) + tol
        ylo = min(ay, ay + dy) - tol
        yhi = max(ay, ay + dy) + tol
        for k in range(nn):
            px = xy[k, 0]
            py = xy[k, 1]
            if px < xlo or px > xhi or py < ylo or py > yhi:
                continue
            rx = px - ax
            ry = py - ay
            t = (rx * dx + ry * dy) / L2
            qx = rx - t * dx
            qy = ry - t * dy
            if np.sqrt(qx * qx + qy * qy) < tol and t * L > tol and (1.0 - t) * L > tol:
                if cnt == cap:
                    cap *= 2
                    oe2 = np.empty(cap, np.int64)
                    on2 = np.empty(cap, np.int64)
                    ot2 = np.empty(cap, np.float64)
                    oe2[:cnt] = oe[:cnt]
                    on2[:cnt] = on[:cnt]
                    ot2[:cnt] = ot[:cnt]
                    oe, on, ot = oe2, on2, ot2
                oe[cnt] = e
                on[cnt] = k
                ot[cnt] = t
                cnt += 1
    return oe[:cnt], on[:cnt], ot[:cnt]


# ---------------------------------------------------------------------------
# thick-segment rasterization
# ---------------------------------------------------------------------------

def _seg_dist(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        t = 0.0 * px
    else:
        t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = np.minimum(np.maximum(t, 0.0), 1.0)
    qx = px - (ax + t * dx)
    qy = py - (ay + t * dy)
    return np.sqrt(qx * qx + qy * qy)


def raster_segments_np(p0, p1, halfwidth, height, width):
    """Boolean mask of pixels whose centres lie within ``halfwidth`` of a segment.

    Pixel (r, c) has centre (c, r) in the same units as ``p0``/``p1``.
    """
    mask = np.zeros((height, width), dtype=np.bool_)
    for e in range(len(p0)):
        ax, ay = p0[e]
        bx, by = p1[e]
        hw = halfwidth[e]
        c0 = max(int(np.floor(min(ax, bx) - hw)), 0)
        c1 = min(int(np.ceil(max(ax, bx) + hw)), width - 1)
        r0 = max(int(np.floor(min(ay, by) - hw)), 0)
        r1 = min(int(np.ceil(max(ay, by) + hw)), height - 1)
        if c1 < c0 or r1 < r0:
            continue
        cc, rr = np.meshgrid(np.arange(c0, c1 + 1, dtype=np.float64),
                             np.arange(r0, r1 + 1, dtype=np.float64))
        d = _seg_dist(cc, rr, ax, ay, bx, by)
        mask[r0:r1 + 1, c0:c1 + 1] |= d <= hw + 1e-9
    return mask


def _raster_segments_loop(p0, p1, halfwidth, height, width):
    mask = np.zeros((height, width), dtype=np.bool_)
    for e in range(p0.shape[0]):
        ax = p0[e, 0]
        ay = p0[e, 1]
        bx = p1[e, 0]
        by = p1[e, 1]
        hw = halfwidth[e]
        c0 = max(int(np.floor(min(ax, bx) - hw)), 0)
        c1 = min(int(np.ceil(max(ax, bx) + hw)), width - 1)
        r0 = max(int(np.floor(min(ay, by) - hw)), 0)
        r1 = min(int(np.ceil(max(ay, by) + hw)), height - 1)
        dx = bx - ax
        dy = by - ay
        L2 = dx * dx + dy * dy
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                if L2 == 0.0:
                    t = 0.0
                else:
                    t = ((c - ax) * dx + (r - ay) * dy) / L2
                    t = min(max(t, 0.0), 1.0)
                qx = c - (ax + t * dx)
                qy = r - (ay + t * dy)
                if np.sqrt(qx * qx + qy * qy) <= hw + 1e-9:
                    mask[r, c] = True
    return mask


# ---------------------------------------------------------------------------
# modal superposition of the relative response
# ---------------------------------------------------------------------------

def modal_response_np(coef, omega_n, zeta, omega):
    """sum_i coef_i * w^2 / (w_i^2 - w^2 + 2 i zeta w_i w) for every w."""
    w = omega[:, None]
    den = omega_n[None, :] ** 2 - w**2 + 2j * zeta * omega_n[None, :] * w
    return (coef[None, :] * w**2 / den).sum(axis=1)


def _modal_response_loop(coef, omega_n, zeta, omega):
    out = np.zeros(omega.shape[0], dtype=np.complex128)
    for f in range(omega.shape[0]):
        w = omega[f]
        acc = 0.0 + 0.0j
        for i in range(omega_n.shape[0]):
            wn = omega_n[i]
            acc += coef[i] * w * w / complex(wn * wn - w * w, 2.0 * zeta * wn * w)
        out[f] = acc
    return out


if HAVE_NUMBA:
    frame_elements_nb = njit(cache=True)(_frame_elements_loop)
    points_on_segments_nb = njit(cache=True)(_points_on_segments_loop)
    raster_segments_nb = njit(cache=True)(_raster_segments_loop)
    modal_response_nb = njit(cache=True)(_modal_response_loop)
else:  # pragma: no cover
    frame_elements_nb = frame_elements_np
    points_on_segments_nb = points_on_segments_np
    raster_segments_nb = raster_segments_np
    modal_response_nb = modal_response_np


def frame_elements(xy, edges, EA, EI, rhoA):
    args = (np.ascontiguousarray(xy, dtype=np.float64), np.ascontiguousarray(edges, dtype=np.int64),
            np.ascontiguousarray(EA, dtype=np.float64), np.ascontiguousarray(EI, dtype=np.float64),
            np.ascontiguousarray(rhoA, dtype=np.float64))
    return frame_elements_nb(*args) if USE_NUMBA else frame_elements_np(*args)


def points_on_segments(xy, edges, tol):
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    edges = np.ascontiguousarray(edges, dtype=np.int64)
    if len(edges) == 0:
        z = np.zeros(0, np.int64)
        return z, z.copy(), np.zeros(0)
    return points_on_segments_nb(xy, edges, float(tol)) if USE_NUMBA else points_on_segments_np(xy, edges, tol)


def raster_segments(p0, p1, halfwidth, height, width):
    p0 = np.ascontiguousarray(p0, dtype=np.float64).reshape(-1, 2)
    p1 = np.ascontiguousarray(p1, dtype=np.float64).reshape(-1, 2)
    hw = np.ascontiguousarray(halfwidth, dtype=np.float64)
    if USE_NUMBA:
        return raster_segments_nb(p0, p1, hw, int(height), int(width))
    return raster_segments_np(p0, p1, hw, int(height), int(width))


def modal_response(coef, omega_n, zeta, omega):
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    omega_n = np.ascontiguousarray(omega_n, dtype=np.float64)
    omega = np.ascontiguousarray(omega, dtype=np.float64)
    if USE_NUMBA:
        return modal_response_nb(coef, omega_n, float(zeta), omega)
    return modal_response_np(coef, omega_n, zeta, omega)
