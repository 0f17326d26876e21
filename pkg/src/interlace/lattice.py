"""Interlaced metastructure geometry: unit cells, interlacing, panels, rasters.

Lengths are millimetres throughout. Hexagonal cells are flat-topped and
tiled in offset columns, so a 3 x 12 panel of 9.5 mm cells with 15 mm end
frames is roughly 206 mm x 58 mm.
"""
from __future__ import annotations

import copy
import hashlib
import itertools
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import _accel
from .errors import ConfigurationError, ConsistencyError, ValidationError

FAMILIES = ("honeycomb", "star", "circle", "auxetic", "hierarchical_honeycomb")
MERGE_TOL_MM = 1e-6

# node level tags
PRIMARY, SECONDARY, TERTIARY = 0, 1, 2
CONNECTOR, FRAME, INSERT = 9, 10, 11

RASTER_SHAPE = (128, 256)


@dataclass
class Cell:
    row: int
    col: int
    center: tuple[float, float]
    inner_nodes: np.ndarray  # secondary-level vertices of this cell (may be empty)


@dataclass
class BeamGraph:
    """Planar strut skeleton with section data and boundary node sets."""

    nodes: np.ndarray
    edges: np.ndarray
    widths: np.ndarray
    thickness: np.ndarray
    node_level: np.ndarray
    lumped_masses: list[tuple[int, float]] = field(default_factory=list)
    clamped_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    base_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    tip_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    cells: list[Cell] = field(default_factory=list)
    rows: int = 0
    cols: int = 0
    side_mm: float = 0.0
    length_scale: float = 1.0

    @classmethod
    def empty(cls) -> "BeamGraph":
        return cls(np.zeros((0, 2)), np.zeros((0, 2), np.int64), np.zeros(0), np.zeros(0),
                   np.zeros(0, np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def copy(self) -> "BeamGraph":
        return copy.deepcopy(self)

    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.nodes.min(axis=0)
        hi = self.nodes.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def n_components(self) -> int:
        if self.n_nodes == 0:
            return 0
        n = self.n_nodes
        adj = coo_matrix((np.ones(self.n_edges), (self.edges[:, 0], self.edges[:, 1])), shape=(n, n))
        return int(connected_components(adj, directed=False)[0])

    def edge_lengths(self) -> np.ndarray:
        d = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])


def _polygon(points, strut_mm, thickness_mm, level=PRIMARY, side_mm=0.0) -> BeamGraph:
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    edges = np.array([(i, (i + 1) % n) for i in range(n)], dtype=np.int64)
    return BeamGraph(pts, edges, np.full(n, strut_mm), np.full(n, thickness_mm),
                     np.full(n, level, np.int64), side_mm=side_mm)


def _union(a: BeamGraph, b: BeamGraph) -> BeamGraph:
    off = a.n_nodes
    out = a.copy()
    out.nodes = np.vstack([a.nodes, b.nodes])
    out.edges = np.vstack([a.edges, b.edges + off]).astype(np.int64)
    out.widths = np.concatenate([a.widths, b.widths])
    out.thickness = np.concatenate([a.thickness, b.thickness])
    out.node_level = np.concatenate([a.node_level, b.node_level])
    out.lumped_masses = a.lumped_masses + [(n + off, m) for n, m in b.lumped_masses]
    return out


def _refine_hierarchical(g: BeamGraph, r: float) -> BeamGraph:
    """Replace every node by a flat-top hexagon of side ``r``.

    Each incident edge is re-attached to the small-hexagon vertex that points
    along it, so edge directions must be multiples of 60 degrees.
    """
    n = g.n_nodes
    ang = np.deg2rad(60.0 * np.arange(6))
    ring = r * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    nodes = (g.nodes[:, None, :] + ring[None, :, :]).reshape(-1, 2)
    hex_edges = np.array([(k, (k + 1) % 6) for k in range(6)])
    edges = [(6 * v + hex_edges).tolist() for v in range(n)]
    edges = [tuple(e) for block in edges for e in block]
    hw, ht = [], []
    for v in range(n):
        # small hexagon inherits the section of the first incident edge
        inc = np.nonzero((g.edges[:, 0] == v) | (g.edges[:, 1] == v))[0]
        e0 = inc[0] if len(inc) else 0
        hw.extend([g.widths[e0]] * 6)
        ht.extend([g.thickness[e0]] * 6)
    for e, (i, j) in enumerate(g.edges):
        d = g.nodes[j] - g.nodes[i]
        a = math.degrees(math.atan2(d[1], d[0])) % 360.0
        k = int(round(a / 60.0)) % 6
        if abs(((a - 60.0 * k) + 180.0) % 360.0 - 180.0) > 1e-6:
            raise ValidationError("hierarchical refinement needs edges at multiples of 60 degrees")
        edges.append((6 * i + k, 6 * j + (k + 3) % 6))
        hw.append(g.widths[e])
        ht.append(g.thickness[e])
    level = np.repeat(g.node_level, 6)
    return BeamGraph(nodes, np.asarray(edges, np.int64), np.asarray(hw, float), np.asarray(ht, float),
                     level, side_mm=g.side_mm)


def build_unit_cell(family: str, side_mm: float, fractal_order: int = 0, strut_mm: float = 1.2,
                    thickness_mm: float = 5.0) -> BeamGraph:
    """Closed cell skeleton of ``family`` centred at the origin.

    ``side_mm`` is the circumradius of the cell (the hexagon side for
    honeycombs). Hierarchical cells replace every junction by a hexagon of
    ``side_mm / 3**k`` at refinement step ``k``.
    """
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown cell family {family!r}")
    if side_mm <= 0:
        raise ValidationError("side_mm must be positive")
    if fractal_order < 0:
        raise ValidationError("fractal_order must be >= 0")
    if fractal_order > 0 and family != "hierarchical_honeycomb":
        raise ValidationError(f"fractal_order > 0 is only defined for hierarchical_honeycomb, not {family}")
    s = float(side_mm)
    if family in ("honeycomb", "hierarchical_honeycomb"):
        a = np.deg2rad(60.0 * np.arange(6))
        pts = s * np.stack([np.cos(a), np.sin(a)], axis=1)
    elif family == "star":
        k = 6
        a = np.deg2rad(90.0 + 30.0 * np.arange(2 * k))
        rad = np.where(np.arange(2 * k) % 2 == 0, s, 0.5 * s)
        pts = np.stack([rad * np.cos(a), rad * np.sin(a)], axis=1)
    elif family == "circle":
        a = np.deg2rad(90.0 + 22.5 * np.arange(16))
        pts = s * np.stack([np.cos(a), np.sin(a)], axis=1)
    else:  # auxetic re-entrant hexagon
        w, h, c = 0.8 * s, 0.6 * s, 0.3 * s
        pts = [(-w, h), (0.0, h - c), (w, h), (w, -h), (0.0, -h + c), (-w, -h)]
    g = _polygon(pts, strut_mm, thickness_mm, side_mm=s)
    for k in range(1, fractal_order + 1):
        g = _refine_hierarchical(g, s / 3.0**k)
    return g


def _seg_dist(p, a, b):
    d = b - a
    t = np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0)
    return float(np.hypot(*(p - a - t * d)))


def inradius(g: BeamGraph) -> float:
    """Smallest distance from the origin to any edge of ``g``."""
    o = np.zeros(2)
    return min(_seg_dist(o, g.nodes[i], g.nodes[j]) for i, j in g.edges)


def _extreme_vertex(g: BeamGraph, sign: float) -> int:
    y = sign * g.nodes[:, 1]
    tol = 1e-9 * max(1.0, np.abs(g.nodes).max())
    cand = np.nonzero(y >= y.max() - tol)[0]
    order = sorted(cand, key=lambda i: (round(abs(g.nodes[i, 0]), 9), g.nodes[i, 0]))
    return int(order[0])


def interlace(outer: BeamGraph, inner: BeamGraph | None, fit: float | None = 0.6,
              strut_mm: float | None = None) -> BeamGraph:
    """Nest ``inner`` concentrically in ``outer`` and tie it with two connectors.

    ``fit`` scales ``inner`` so its circumradius is ``fit`` times the inradius
    of ``outer``; ``fit=None`` keeps ``inner`` as given. Each connector runs
    from the top (bottom) vertex of ``inner`` to the nearest edge midpoint of
    ``outer`` and carries one intermediate node, so the result has
    ``outer + inner + 4`` nodes.
    """
    if inner is None or inner.n_nodes == 0:
        return outer.copy()
    r_out = inradius(outer)
    inner = inner.copy()
    r_in = float(np.hypot(inner.nodes[:, 0], inner.nodes[:, 1]).max())
    if fit is not None:
        if fit <= 0:
            raise ValidationError("fit must be positive")
        inner.nodes = inner.nodes * (fit * r_out / r_in)
        r_in = fit * r_out
    if r_in >= r_out * (1.0 - 1e-9):
        raise ValidationError(f"inner cell (radius {r_in:.3f} mm) does not fit inside outer inradius {r_out:.3f} mm")
    inner.node_level = np.minimum(inner.node_level + 1, TERTIARY)
    out = _union(outer, inner)
    off = outer.n_nodes
    cw = float(strut_mm if strut_mm is not None else inner.widths.min())
    ct = float(inner.thickness.min())
    split: set[int] = set()
    nodes = [out.nodes]
    edges = [out.edges]
    widths = [out.widths]
    thick = [out.thickness]
    levels = [out.node_level]
    n_next = out.n_nodes
    keep = np.ones(out.n_edges, bool)
    for sign in (1.0, -1.0):
        p_idx = off + _extreme_vertex(inner, sign)
        p = out.nodes[p_idx]
        mids = 0.5 * (outer.nodes[outer.edges[:, 0]] + outer.nodes[outer.edges[:, 1]])
        dist = np.hypot(*(mids - p).T)
        e = int(np.argmin(np.round(dist, 9)))
        if e in split:
            raise ConsistencyError("both connectors target the same outer edge")
        split.add(e)
        i, j = outer.edges[e]
        q_idx, m_idx = n_next, n_next + 1
        n_next += 2
        q = mids[e]
        nodes.append(np.array([q, 0.5 * (p + q)]))
        levels.append(np.array([outer.node_level[i], CONNECTOR], np.int64))
        keep[e] = False
        edges.append(np.array([(i, q_idx), (q_idx, j), (p_idx, m_idx), (m_idx, q_idx)], np.int64))
        widths.append(np.array([outer.widths[e], outer.widths[e], cw, cw]))
        thick.append(np.array([outer.thickness[e], outer.thickness[e], ct, ct]))
    keep_full = np.concatenate([keep, np.ones(sum(len(x) for x in edges[1:]), bool)])
    out.nodes = np.vstack(nodes)
    out.edges = np.vstack(edges)[keep_full]
    out.widths = np.concatenate(widths)[keep_full]
    out.thickness = np.concatenate(thick)[keep_full]
    out.node_level = np.concatenate(levels)
    return out


def _merge_nodes(nodes, tol):
    n = len(nodes)
    pairs = cKDTree(nodes).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return np.arange(n), np.arange(n)
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, lab = connected_components(adj, directed=False)
    # representative = first occurrence, new ids in order of first appearance
    first = np.full(lab.max() + 1, -1)
    for i in range(n):
        if first[lab[i]] < 0:
            first[lab[i]] = i
    reps = np.unique(first)
    new_of_rep = np.full(n, -1)
    new_of_rep[reps] = np.arange(len(reps))
    return new_of_rep[first[lab]], reps


def _clean(g: BeamGraph) -> BeamGraph:
    """Merge coincident nodes, split T-junctions and drop duplicate edges."""
    remap, reps = _merge_nodes(g.nodes, MERGE_TOL_MM)
    nodes = g.nodes[reps]
    level = np.full(len(reps), 99, np.int64)
    np.minimum.at(level, remap, g.node_level)
    edges = remap[g.edges]
    widths, thick = g.widths, g.thickness
    ok = edges[:, 0] != edges[:, 1]
    edges, widths, thick = edges[ok], widths[ok], thick[ok]

    e_idx, n_idx, t = _accel.points_on_segments(nodes, edges, MERGE_TOL_MM)
    if len(e_idx):
        new_e, new_w, new_t = [], [], []
        drop = np.zeros(len(edges), bool)
        for e in np.unique(e_idx):
            sel = e_idx == e
            chain = [edges[e, 0]] + list(n_idx[sel][np.argsort(t[sel])]) + [edges[e, 1]]
            drop[e] = True
            for a, b in zip(chain[:-1], chain[1:]):
                new_e.append((a, b))
                new_w.append(widths[e])
                new_t.append(thick[e])
        edges = np.vstack([edges[~drop], np.asarray(new_e, np.int64)])
        widths = np.concatenate([widths[~drop], new_w])
        thick = np.concatenate([thick[~drop], new_t])

    key = np.sort(edges, axis=1)
    order = np.lexsort((-widths, key[:, 1], key[:, 0]))
    key, widths, thick = key[order], widths[order], thick[order]
    first = np.ones(len(key), bool)
    first[1:] = np.any(key[1:] != key[:-1], axis=1)
    out = g.copy()
    out.nodes, out.edges, out.widths, out.thickness = nodes, key[first], widths[first], thick[first]
    out.node_level = level
    out.lumped_masses = [(int(remap[n]), m) for n, m in g.lumped_masses]
    out._remap = remap  # consumed by tessellate
    return out


def _add_frame(g: BeamGraph, side: str, frame_mm: float, thickness_mm: float) -> np.ndarray:
    x = g.nodes[:, 0]
    lattice = g.node_level != FRAME
    if side == "left":
        x_edge = x[lattice].min()
        xc = x_edge - frame_mm / 2.0
    else:
        x_edge = x[lattice].max()
        xc = x_edge + frame_mm / 2.0
    tips = np.nonzero(lattice & (np.abs(x - x_edge) < MERGE_TOL_MM))[0]
    ys = g.nodes[lattice, 1]
    yy = np.unique(np.round(np.concatenate([g.nodes[tips, 1], [ys.min(), ys.max()]]), 9))
    base = g.n_nodes
    fnodes = np.stack([np.full(len(yy), xc), yy], axis=1)
    idx = base + np.arange(len(yy))
    new_edges = [(idx[k], idx[k + 1]) for k in range(len(yy) - 1)]
    for tnode in tips:
        k = int(np.argmin(np.abs(yy - g.nodes[tnode, 1])))
        new_edges.append((idx[k], tnode))
    g.nodes = np.vstack([g.nodes, fnodes])
    g.node_level = np.concatenate([g.node_level, np.full(len(yy), FRAME, np.int64)])
    g.edges = np.vstack([g.edges, np.asarray(new_edges, np.int64)])
    g.widths = np.concatenate([g.widths, np.full(len(new_edges), float(frame_mm))])
    g.thickness = np.concatenate([g.thickness, np.full(len(new_edges), float(thickness_mm))])
    return idx


def cell_center(row: int, col: int, rows: int, side_mm: float) -> tuple[float, float]:
    h = math.sqrt(3.0) * side_mm
    return 1.5 * side_mm * col, (rows - 1 - row) * h + (col % 2) * h / 2.0


def tessellate(cell: BeamGraph | Callable[[int, int], BeamGraph] | Sequence[Sequence[BeamGraph]],
               rows: int, cols: int, frame_mm: float = 15.0, allow_small: bool = False) -> BeamGraph:
    """Tile cells on the flat-top hexagonal grid and append end frames.

    ``cell`` is one fragment, a ``(row, col) -> fragment`` callable or a
    rows x cols nested sequence. Row 0 is the top row. With ``frame_mm > 0``
    two solid frames run along the short (left/right) edges: the left one is
    clamped and driven, the right one carries the response.
    """
    if rows < 1 or cols < 1:
        raise ValidationError("rows and cols must be >= 1")
    if cols < 7 and not allow_small:
        raise ValidationError("panels need more than 7 units along the length (cols >= 7); pass allow_small=True to override")
    if isinstance(cell, BeamGraph):
        get = lambda r, c: cell  # noqa: E731
    elif callable(cell):
        get = cell
    else:
        get = lambda r, c: cell[r][c]  # noqa: E731
    frags = [[get(r, c) for c in range(cols)] for r in range(rows)]
    side = frags[0][0].side_mm
    if side <= 0:
        raise ValidationError("cell fragment has no primary side length")

    g = BeamGraph.empty()
    g.side_mm = side
    spans = []
    for r in range(rows):
        for c in range(cols):
            f = frags[r][c].copy()
            cx, cy = cell_center(r, c, rows, side)
            f.nodes = f.nodes + np.array([cx, cy])
            start = g.n_nodes
            g = _union(g, f)
            inner = start + np.nonzero(f.node_level == SECONDARY)[0]
            spans.append((r, c, (cx, cy), inner))
    g = _clean(g)
    remap = g._remap
    del g._remap
    g.cells = [Cell(r, c, ctr, np.unique(remap[inner])) for r, c, ctr, inner in spans]
    g.rows, g.cols, g.side_mm = rows, cols, side

    if frame_mm > 0:
        t = float(np.median(g.thickness))
        left = _add_frame(g, "left", frame_mm, t)
        right = _add_frame(g, "right", frame_mm, t)
        g.clamped_nodes = left.astype(np.int64)
        g.base_nodes = left.astype(np.int64)
        g.tip_nodes = right.astype(np.int64)

    if len(cKDTree(g.nodes).query_pairs(MERGE_TOL_MM)):
        raise ConsistencyError("duplicate nodes survived merging")
    if g.n_components() != 1:
        raise ConsistencyError(f"tessellated graph has {g.n_components()} components")
    return g


def scale_graph(g: BeamGraph, s: float) -> BeamGraph:
    """Multiply every coordinate by ``s``; sections and topology are kept."""
    if not s > 0:
        raise ValidationError("scale must be positive")
    out = g.copy()
    out.nodes = out.nodes * s
    out.side_mm = g.side_mm * s
    out.length_scale = g.length_scale * s
    for cl in out.cells:
        cl.center = (cl.center[0] * s, cl.center[1] * s)
    return out


# ---------------------------------------------------------------------------
# mass-insert patterns (3-row panels)
# ---------------------------------------------------------------------------

INSERT_PATTERNS = tuple("abcdefghi")


def insert_mask(pattern: str, cols: int, rows: int = 3) -> np.ndarray:
    """Named insert layout as a rows x cols boolean mask (row 0 on top)."""
    if pattern not in INSERT_PATTERNS:
        raise ConfigurationError(f"unknown insert pattern {pattern!r}")
    if rows != 3:
        raise ValidationError("named insert patterns are defined for 3-row panels")
    c = np.arange(cols)
    full = np.ones(cols, bool)
    empty = np.zeros(cols, bool)
    even = c % 2 == 0
    odd = ~even
    third = c % 3 == 0
    if pattern == "a":
        top, mid, bot = empty, empty, empty
    elif pattern == "b":  # diamond with broken symmetry
        top, mid, bot = even, full, odd
    elif pattern == "c":  # cross
        top, mid, bot = full, even, full
    elif pattern == "d":  # forward arrow
        head = (c >= (2 * cols) // 3) & (c <= cols - 2)
        top, mid, bot = head, full, head
    elif pattern == "e":  # diamond
        top, mid, bot = even, full, even
    elif pattern == "f":
        top, mid, bot = full, empty, full
    elif pattern == "g":
        top, mid, bot = full, third, full
    elif pattern == "h":  # upward arrow
        inner = (c > 0) & (c < cols - 1)
        top, mid, bot = odd, inner, even
    else:  # "i"
        top, mid, bot = even, third, even
    return np.stack([top, mid, bot])


def apply_insert_pattern(g: BeamGraph, pattern: str | np.ndarray, mass_g: float = 2.0,
                         spoke_mm: float = 3.0) -> BeamGraph:
    """Attach a lumped insert mass at the centroid of every flagged inner cell.

    The centroid node is tied to the cell's secondary vertices with stiff
    spokes that stand in for the rigid steel insert.
    """
    if isinstance(pattern, str):
        mask = insert_mask(pattern, g.cols, g.rows)
    else:
        mask = np.asarray(pattern, bool)
        if mask.shape != (g.rows, g.cols):
            raise ValidationError(f"insert mask shape {mask.shape} != panel {(g.rows, g.cols)}")
    out = g.copy()
    by_rc = {(cl.row, cl.col): cl for cl in out.cells}
    thick = float(np.median(g.thickness)) if g.n_edges else 5.0
    for r, c in zip(*np.nonzero(mask)):
        cl = by_rc[(int(r), int(c))]
        if len(cl.inner_nodes) == 0:
            raise ValidationError(f"cell ({r}, {c}) has no inner cell to hold an insert")
        k = out.n_nodes
        out.nodes = np.vstack([out.nodes, np.asarray(cl.center)[None, :]])
        out.node_level = np.append(out.node_level, INSERT)
        spokes = np.array([(k, v) for v in cl.inner_nodes], np.int64)
        out.edges = np.vstack([out.edges, spokes])
        out.widths = np.concatenate([out.widths, np.full(len(spokes), spoke_mm)])
        out.thickness = np.concatenate([out.thickness, np.full(len(spokes), thick)])
        out.lumped_masses = out.lumped_masses + [(k, mass_g * 1e-3)]
    return out


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------

def fit_scale(g: BeamGraph, height: int = RASTER_SHAPE[0], width: int = RASTER_SHAPE[1],
              margin_px: int = 1) -> float:
    """Pixels per (graph) millimetre used by the auto-fit in :func:`rasterize`."""
    x0, y0, x1, y1 = g.bbox()
    pad = 0.5 * (g.widths * g.length_scale).max()
    bw, bh = (x1 - x0) + 2 * pad, (y1 - y0) + 2 * pad
    return min((width - 2 * margin_px - 1) / bw, (height - 2 * margin_px - 1) / bh)


def rasterize(g: BeamGraph, height: int = RASTER_SHAPE[0], width: int = RASTER_SHAPE[1],
              px_per_mm: float | None = None, margin_px: int = 1) -> np.ndarray:
    """Render ``g`` to a float32 image, +1 material and -1 void.

    With ``px_per_mm=None`` the graph is fitted into the image with a uniform
    scale and centred; stroke widths are then taken in the graph's unscaled
    frame (strut width times ``g.length_scale``), which makes the auto-fitted
    raster independent of :func:`scale_graph`. A fixed ``px_per_mm`` renders
    at physical size instead.
    """
    out = np.full((height, width), -1.0, dtype=np.float32)
    if g.n_nodes == 0 or g.n_edges == 0:
        warnings.warn("rasterizing an empty graph", RuntimeWarning, stacklevel=2)
        return out
    x0, y0, x1, y1 = g.bbox()
    if px_per_mm is None:
        ppm = fit_scale(g, height, width, margin_px)
        hw_ppm = ppm * g.length_scale
    else:
        ppm = float(px_per_mm)
        hw_ppm = ppm
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    px = np.round((g.nodes[:, 0] - cx) * ppm + (width - 1) / 2.0, 9)
    py = np.round((height - 1) / 2.0 - (g.nodes[:, 1] - cy) * ppm, 9)
    pts = np.stack([px, py], axis=1)
    hw = np.maximum(np.round(g.widths * hw_ppm / 2.0), 1.0)
    mask = _accel.raster_segments(pts[g.edges[:, 0]], pts[g.edges[:, 1]], hw, height, width)
    out[mask] = 1.0
    return out


# ---------------------------------------------------------------------------
# declarative specs and the corpus
# ---------------------------------------------------------------------------

PLACEMENTS = ("all", "checker_even", "checker_odd", "cols_even", "middle_row", "outer_rows",
              "left_half", "every_third")


def placement_mask(placement, rows: int, cols: int) -> np.ndarray:
    if not isinstance(placement, str):
        m = np.asarray(placement, bool)
        if m.shape != (rows, cols):
            raise ValidationError(f"placement mask shape {m.shape} != {(rows, cols)}")
        return m
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    table = {
        "all": np.ones((rows, cols), bool),
        "checker_even": (r + c) % 2 == 0,
        "checker_odd": (r + c) % 2 == 1,
        "cols_even": c % 2 == 0,
        "middle_row": r == rows // 2,
        "outer_rows": (r == 0) | (r == rows - 1),
        "left_half": c < (cols + 1) // 2,
        "every_third": c % 3 == 0,
    }
    if placement not in table:
        raise ConfigurationError(f"unknown placement template {placement!r}")
    return table[placement]


@dataclass(frozen=True)
class InterlaceLevel:
    level: str  # "secondary" | "tertiary"
    family: str
    placement: object = "all"  # template name or rows x cols 0/1 nested tuple


@dataclass(frozen=True)
class LatticeSpec:
    primary_family: str = "honeycomb"
    interlace: tuple[InterlaceLevel, ...] = ()
    scale: float = 1.0
    fractal_order: int = 0
    rows: int = 3
    cols: int = 12
    frame_mm: float = 15.0
    insert_pattern: str = "a"
    insert_mask: tuple | None = None
    strut_mm: float = 1.2
    side_mm: float = 9.5
    thickness_mm: float = 5.0
    insert_mass_g: float = 2.0
    allow_small: bool = False

    def __post_init__(self):
        if self.primary_family != "honeycomb":
            raise ConfigurationError("primary family must be honeycomb")
        if self.cols < 7 and not self.allow_small:
            raise ValidationError("cols must be >= 7")
        if not self.scale > 0:
            raise ValidationError("scale must be positive")
        if self.fractal_order < 0:
            raise ValidationError("fractal_order must be >= 0")
        levels = [lv.level for lv in self.interlace]
        if levels not in ([], ["secondary"], ["secondary", "tertiary"]):
            raise ValidationError(f"interlace levels must be secondary[, tertiary], got {levels}")
        for lv in self.interlace:
            if lv.family not in FAMILIES:
                raise ConfigurationError(f"unknown family {lv.family!r}")
            placement_mask(lv.placement, self.rows, self.cols)
        if self.insert_pattern == "custom":
            if self.insert_mask is None or np.asarray(self.insert_mask).shape != (self.rows, self.cols):
                raise ValidationError("custom insert pattern needs a rows x cols insert_mask")
        elif self.insert_pattern not in INSERT_PATTERNS:
            raise ConfigurationError(f"unknown insert pattern {self.insert_pattern!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["interlace"] = [asdict(lv) for lv in self.interlace]
        for lv in d["interlace"]:
            if not isinstance(lv["placement"], str):
                lv["placement"] = [[int(v) for v in row] for row in lv["placement"]]
        if d["insert_mask"] is not None:
            d["insert_mask"] = [[int(v) for v in row] for row in d["insert_mask"]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeSpec":
        d = dict(d)
        levels = []
        for lv in d.pop("interlace", []):
            p = lv.get("placement", "all")
            if not isinstance(p, str):
                p = tuple(tuple(int(v) for v in row) for row in p)
            levels.append(InterlaceLevel(lv["level"], lv["family"], p))
        if d.get("insert_mask") is not None:
            d["insert_mask"] = tuple(tuple(int(v) for v in row) for row in d["insert_mask"])
        return cls(interlace=tuple(levels), **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def canonical_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


SECONDARY_FIT = 0.6
TERTIARY_FIT = 0.5


def _inner_cell(spec: LatticeSpec, family: str) -> BeamGraph:
    order = spec.fractal_order if family == "hierarchical_honeycomb" else 0
    return build_unit_cell(family, spec.side_mm, order, spec.strut_mm, spec.thickness_mm)


def build_panel(spec: LatticeSpec) -> BeamGraph:
    """Beam graph of a full panel described by ``spec``."""
    masks = {lv.level: (lv, placement_mask(lv.placement, spec.rows, spec.cols)) for lv in spec.interlace}
    cache: dict[tuple[bool, bool], BeamGraph] = {}

    def cell(r, c):
        has2 = "secondary" in masks and masks["secondary"][1][r, c]
        has3 = has2 and "tertiary" in masks and masks["tertiary"][1][r, c]
        key = (bool(has2), bool(has3))
        if key not in cache:
            outer = build_unit_cell("honeycomb", spec.side_mm, 0, spec.strut_mm, spec.thickness_mm)
            if has2:
                inner = _inner_cell(spec, masks["secondary"][0].family)
                if has3:
                    inner = interlace(inner, _inner_cell(spec, masks["tertiary"][0].family), TERTIARY_FIT)
                outer = interlace(outer, inner, SECONDARY_FIT)
            cache[key] = outer
        return cache[key]

    g = tessellate(cell, spec.rows, spec.cols, spec.frame_mm, allow_small=spec.allow_small)
    if spec.scale != 1.0:
        g = scale_graph(g, spec.scale)
    pattern = np.asarray(spec.insert_mask, bool) if spec.insert_pattern == "custom" else spec.insert_pattern
    if spec.insert_pattern != "a":
        g = apply_insert_pattern(g, pattern, spec.insert_mass_g)
    return g


CORPUS_SCALES = (1.0, 1.5, 2.0)
CORPUS_VARIANTS = 6
TERTIARY_VARIANTS = ("honeycomb", "star", "circle", "auxetic")


def _grid_spec(family: str, placement: str, scale: float, variant: int, strut_mm: float = 1.2) -> LatticeSpec:
    levels = [InterlaceLevel("secondary", family, placement)]
    order = 1 if family == "hierarchical_honeycomb" else 0
    if 1 <= variant <= 4:
        levels.append(InterlaceLevel("tertiary", TERTIARY_VARIANTS[variant - 1], placement))
    elif variant == 5:
        if family == "hierarchical_honeycomb":
            order = 2
        else:
            levels.append(InterlaceLevel("tertiary", "hierarchical_honeycomb", placement))
            order = 1
    return LatticeSpec(interlace=tuple(levels), scale=scale, fractal_order=order, strut_mm=strut_mm)


def enumerate_dataset(seed: int = 0, n: int = 720) -> list[LatticeSpec]:
    """Deterministic list of ``n`` distinct corpus specs.

    The base grid is family x placement x scale x variant (5 x 8 x 3 x 6 =
    720). Beyond 720 the grid is cycled with strut widths perturbed by a
    seeded generator.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    grid = list(itertools.product(FAMILIES, PLACEMENTS, CORPUS_SCALES, range(CORPUS_VARIANTS)))
    specs = [_grid_spec(*p) for p in grid[:n]]
    seen = {s.canonical_hash() for s in specs}
    rng = np.random.default_rng(seed)
    k = 0
    while len(specs) < n:
        p = grid[k % len(grid)]
        k += 1
        strut = round(1.2 * (1.0 + rng.uniform(-0.25, 0.25)), 4)
        s = _grid_spec(*p, strut_mm=strut)
        h = s.canonical_hash()
        if h not in seen:
            seen.add(h)
            specs.append(s)
    return specs
