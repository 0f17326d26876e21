"""Planar frame-element structural dynamics.

Euler-Bernoulli frame elements (axial + bending, 3 DOFs per node: u, v,
theta) with consistent mass, modal analysis by shift-invert Lanczos,
base-driven transmissibility by modal superposition, static compression and
a few spectrum post-processing helpers (bandgaps, half-power damping).

Geometry comes in millimetres; everything in here is SI.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _accel
from .errors import EstimationError, ModelingError, ValidationError
from .lattice import BeamGraph

log = logging.getLogger(__name__)

FREQ_HZ = np.arange(10.0, 10000.0 + 1e-9, 10.0)
N_BINS = len(FREQ_HZ)
FORCE_AMPLITUDE_N = 10.0
DENSE_LIMIT = 900


@dataclass(frozen=True)
class MaterialProps:
    """Isotropic material with a uniform modal damping ratio (PLA defaults)."""

    E: float = 3.5e9
    rho: float = 1240.0
    nu: float = 0.35
    d: float = 0.001

    def __post_init__(self):
        if not self.E > 0 or not self.rho > 0:
            raise ValidationError("E and rho must be positive")
        if not 0 <= self.nu < 0.5:
            raise ValidationError("Poisson ratio must lie in [0, 0.5)")
        if not 0 <= self.d < 1:
            raise ValidationError("damping ratio must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)

    def as_vector(self):
        return np.array([self.E, self.rho, self.nu, self.d])


PLA = MaterialProps()


@dataclass
class SystemMatrices:
    K: sp.csr_matrix
    M: sp.csr_matrix
    xy: np.ndarray  # all mesh nodes (graph nodes first), metres
    dof_map: np.ndarray  # (n_mesh_nodes, 3)
    constrained: np.ndarray  # constrained DOF indices
    free: np.ndarray
    base_nodes: np.ndarray
    tip_nodes: np.ndarray

    @property
    def n_dof(self) -> int:
        return self.K.shape[0]

    def influence(self) -> np.ndarray:
        """Rigid unit translation along x of every node."""
        r = np.zeros(self.n_dof)
        r[self.dof_map[:, 0]] = 1.0
        return r


@dataclass
class Modes:
    frequencies_hz: np.ndarray
    shapes: np.ndarray  # (n_free, m), mass-normalised
    participation: np.ndarray  # (m,)
    free: np.ndarray
    n_dof: int
    f_max: float
    tip_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * np.pi * self.frequencies_hz

    def __len__(self):
        return len(self.frequencies_hz)


@dataclass
class Spectrum:
    amp_db: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.amp_db = np.asarray(self.amp_db, dtype=np.float64)
        if self.amp_db.shape != (N_BINS,):
            raise ValidationError(f"spectrum must have {N_BINS} bins, got {self.amp_db.shape}")
        if not np.all(np.isfinite(self.amp_db)):
            raise ValidationError("spectrum contains non-finite values")

    @property
    def freq_hz(self) -> np.ndarray:
        return FREQ_HZ


@dataclass(frozen=True)
class Bandgap:
    f_lo: float
    f_hi: float
    depth_db: float

    @property
    def width(self) -> float:
        return self.f_hi - self.f_lo


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _mesh(g: BeamGraph, elements_per_edge: int):
    """Subdivide every edge; returns mesh coords (mm), element pairs and owner edge."""
    n = g.n_nodes
    k = int(elements_per_edge)
    if k == 1:
        return g.nodes.copy(), g.edges.copy(), np.arange(g.n_edges)
    a = g.nodes[g.edges[:, 0]]
    b = g.nodes[g.edges[:, 1]]
    t = np.arange(1, k) / k
    inner = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    xy = np.vstack([g.nodes, inner.reshape(-1, 2)])
    ids = n + np.arange(g.n_edges * (k - 1)).reshape(g.n_edges, k - 1)
    chain = np.concatenate([g.edges[:, :1], ids, g.edges[:, 1:]], axis=1)
    elems = np.stack([chain[:, :-1], chain[:, 1:]], axis=2).reshape(-1, 2)
    owner = np.repeat(np.arange(g.n_edges), k)
    return xy, elems, owner


def _symmetric_sum(vals, rows, cols, n):
    # accumulate the upper triangle once and mirror it, so K == K.T bit for bit
    keep = rows <= cols
    U = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    return (U + sp.triu(U, k=1, format="csr").T).tocsr()


def assemble(g: BeamGraph, mat: MaterialProps = PLA, elements_per_edge: int = 2) -> SystemMatrices:
    """Global stiffness and consistent mass of the frame model of ``g``."""
    if g.n_edges == 0:
        raise ValidationError("graph has no edges")
    if np.any(g.edge_lengths() <= 1e-9):
        raise ValidationError("zero-length edge")
    if np.any(g.widths <= 0) or np.any(g.thickness <= 0):
        raise ValidationError("section dimensions must be positive")
    if g.n_components() != 1:
        raise ValidationError("graph is not connected")
    xy_mm, elems, owner = _mesh(g, elements_per_edge)
    xy = xy_mm * 1e-3
    w = g.widths[owner] * 1e-3
    t = g.thickness[owner] * 1e-3
    A = w * t
    I = t * w**3 / 12.0
    ke, me = _accel.frame_elements(xy, elems, mat.E * A, mat.E * I, mat.rho * A)

    nn = len(xy)
    dof_map = np.arange(3 * nn).reshape(nn, 3)
    edofs = np.concatenate([dof_map[elems[:, 0]], dof_map[elems[:, 1]]], axis=1)
    rows = np.repeat(edofs, 6, axis=1).ravel()
    cols = np.tile(edofs, (1, 6)).ravel()
    K = _symmetric_sum(ke.ravel(), rows, cols, 3 * nn)
    M = _symmetric_sum(me.ravel(), rows, cols, 3 * nn)
    if g.lumped_masses:
        extra = np.zeros(3 * nn)
        for node, m in g.lumped_masses:
            extra[dof_map[node, 0]] += m
            extra[dof_map[node, 1]] += m
        M = (M + sp.diags(extra)).tocsr()
    K.sort_indices()
    M.sort_indices()

    clamped = np.asarray(g.clamped_nodes, np.int64)
    constrained = dof_map[clamped].ravel() if len(clamped) else np.zeros(0, np.int64)
    free = np.setdiff1d(np.arange(3 * nn), constrained)
    return SystemMatrices(K, M, xy, dof_map, np.sort(constrained), free,
                          np.asarray(g.base_nodes, np.int64), np.asarray(g.tip_nodes, np.int64))


# ---------------------------------------------------------------------------
# modal analysis
# ---------------------------------------------------------------------------

def _mechanism_scale(K, M):
    return float(np.abs(K.diagonal()).max() / max(np.abs(M.diagonal()).max(), 1e-300))


def _check_mechanism(Kff, lam, vecs, scale):
    """Raise if a near-zero eigenvalue belongs to a true zero-energy mode.

    Candidates are confirmed with the Jacobi-scaled stiffness Rayleigh
    quotient, which separates roundoff-level energy from genuinely soft modes.
    """
    dk = np.abs(Kff.diagonal())
    for i in np.nonzero(lam < 1e-8 * scale)[0]:
        v = vecs[:, i]
        q = float(v @ (Kff @ v)) / max(float(dk @ (v * v)), 1e-300)
        if q < 1e-11:
            raise ModelingError("constrained stiffness is singular (zero-energy mode)",
                                null_vector=v.copy())


def _dense_eigh(Kff, Mff):
    # symmetric diagonal scaling tames the spread between translational and
    # rotational inertia before the Cholesky-based solve
    d = np.sqrt(np.maximum(np.abs(Mff.diagonal()), 1e-300))
    s = 1.0 / d
    Ks = (s[:, None] * Kff.toarray()) * s[None, :]
    Ms = (s[:, None] * Mff.toarray()) * s[None, :]
    lam, y = sla.eigh(0.5 * (Ks + Ks.T), 0.5 * (Ms + Ms.T))
    return lam, s[:, None] * y


def _rayleigh_ritz(Kff, Mff, phi):
    kr = phi.T @ (Kff @ phi)
    mr = phi.T @ (Mff @ phi)
    kr = 0.5 * (kr + kr.T)
    mr = 0.5 * (mr + mr.T)
    lam, y = sla.eigh(kr, mr)
    return lam, phi @ y


def modal(sys: SystemMatrices, f_max: float = 10_000.0, spillover: float = 0.2) -> Modes:
    """Mass-normalised eigenpairs with f <= f_max * (1 + spillover), ascending.

    ``f_max=np.inf`` returns every mode (dense solve; small systems only).
    """
    free = sys.free
    cap = f_max * (1.0 + spillover)
    tip_dofs = sys.dof_map[sys.tip_nodes, 0] if len(sys.tip_nodes) else np.zeros(0, np.int64)
    if len(free) == 0:
        return Modes(np.zeros(0), np.zeros((0, 0)), np.zeros(0), free, sys.n_dof, cap, tip_dofs)
    Kff = sys.K[free][:, free].tocsc()
    Mff = sys.M[free][:, free].tocsc()
    scale = _mechanism_scale(Kff, Mff)
    n = len(free)

    if n <= DENSE_LIMIT or not np.isfinite(cap):
        lam, phi = _dense_eigh(Kff, Mff)
        _check_mechanism(Kff, lam, phi, scale)
    else:
        lam_cap = (2 * np.pi * cap) ** 2
        shift = -1e-6 * lam_cap
        k = min(n - 2, 64)
        # fixed start vector: ARPACK's default is random, which breaks byte-level reproducibility
        v0 = np.random.default_rng(0).standard_normal(n)
        while True:
            lam, phi = spla.eigsh(Kff, k=k, M=Mff, sigma=shift, which="LM", tol=1e-9, v0=v0)
            order = np.argsort(lam)
            lam, phi = lam[order], phi[:, order]
            _check_mechanism(Kff, lam, phi, scale)
            if lam[-1] > lam_cap or k >= n - 2:
                break
            k = min(n - 2, 2 * k)
        lam, phi = _rayleigh_ritz(Kff, Mff, phi)

    lam = np.clip(lam, 0.0, None)
    f = np.sqrt(lam) / (2.0 * np.pi)
    keep = f <= cap
    f, phi = f[keep], phi[:, keep]
    # explicit mass normalisation
    mnorm = np.sqrt(np.einsum("ij,ij->j", phi, Mff @ phi))
    phi = phi / mnorm
    r = sys.M @ sys.influence()
    gamma = phi.T @ r[free]
    return Modes(f, phi, gamma, free, sys.n_dof, cap, tip_dofs)


# ---------------------------------------------------------------------------
# harmonic response
# ---------------------------------------------------------------------------

def _tip_row(modes: Modes) -> np.ndarray:
    pos = np.searchsorted(modes.free, modes.tip_dofs)
    if len(pos) == 0 or np.any(modes.free[np.minimum(pos, len(modes.free) - 1)] != modes.tip_dofs):
        raise ValidationError("tip nodes must be free and non-empty")
    return modes.shapes[pos].mean(axis=0)


def transmissibility(modes: Modes, d: float = 0.001, g: BeamGraph | None = None,
                     freq_hz: np.ndarray = FREQ_HZ) -> Spectrum:
    """Tip-over-base displacement ratio (dB) under harmonic base motion along x.

    The clamped frame moves rigidly with unit amplitude; the relative response
    is summed over the retained modes with uniform modal damping ``d``.
    ``g`` is accepted for interface symmetry and only used for metadata.
    """
    if len(modes) == 0:
        raise ValidationError("no modes retained")
    a = _tip_row(modes)
    # M w'' + C w' + K w = -M r x_b''  =>  w = sum_i phi_i gamma_i w^2 / (wn^2 - w^2 + 2i zeta wn w)
    coef = a * modes.participation
    omega = 2.0 * np.pi * np.asarray(freq_hz, float)
    rel = _accel.modal_response(coef, modes.omega, d, omega)
    T = np.abs(1.0 + rel)
    meta = {"damping_ratio": float(d), "force_amplitude_n": FORCE_AMPLITUDE_N,
            "n_modes": int(len(modes)), "f_cap_hz": float(modes.f_max)}
    if g is not None:
        meta["n_tip_nodes"] = int(len(g.tip_nodes))
    return Spectrum(20.0 * np.log10(np.maximum(T, 1e-300)), meta)


def direct_transmissibility(sys: SystemMatrices, modes_all: Modes, d: float = 0.001,
                            freq_hz: np.ndarray = FREQ_HZ) -> Spectrum:
    """Dense harmonic solve (K + i w C - w^2 M) with the modal damping matrix.

    Brute-force reference for small systems; ``modes_all`` must hold every mode.
    """
    free = sys.free
    Kff = sys.K[free][:, free].toarray()
    Mff = sys.M[free][:, free].toarray()
    if modes_all.shapes.shape[1] != len(free):
        raise ValidationError("direct solve needs the complete modal basis")
    MP = Mff @ modes_all.shapes
    r = (sys.M @ sys.influence())[free]
    pos = np.searchsorted(free, modes_all.tip_dofs)
    C = (MP * (2.0 * d * modes_all.omega)) @ MP.T
    amp = np.empty(len(freq_hz))
    for k, f in enumerate(freq_hz):
        w = 2.0 * np.pi * f
        A = Kff + 1j * w * C - w * w * Mff
        rel = np.linalg.solve(A, w * w * r)
        amp[k] = abs(1.0 + rel[pos].mean())
    return Spectrum(20.0 * np.log10(amp), {"damping_ratio": float(d), "solver": "direct"})


# ---------------------------------------------------------------------------
# statics
# ---------------------------------------------------------------------------

def static_force_deflection(g: BeamGraph, mat: MaterialProps = PLA, delta_mm: float = 5.0,
                            elements_per_edge: int = 2) -> float:
    """Reaction force (N) for a prescribed compression of the panel height.

    Bottom-most nodes are fully fixed; top-most nodes move down by
    ``delta_mm`` with u and theta held. Linear small-strain solve.
    """
    sys = assemble(g.copy() if len(g.clamped_nodes) == 0 else _strip_bc(g), mat, elements_per_edge)
    y = sys.xy[:, 1]
    tol = 1e-9
    bottom = np.nonzero(y <= y.min() + tol)[0]
    top = np.nonzero(y >= y.max() - tol)[0]
    fixed = np.concatenate([sys.dof_map[bottom].ravel(), sys.dof_map[top].ravel()])
    up = np.zeros(sys.n_dof)
    up[sys.dof_map[top, 1]] = -delta_mm * 1e-3
    free = np.setdiff1d(np.arange(sys.n_dof), fixed)
    K = sys.K.tocsr()
    Kff = K[free][:, free].tocsc()
    rhs = -(K[free][:, fixed] @ up[fixed])
    try:
        lu = spla.splu(Kff)
    except RuntimeError as exc:
        raise ModelingError(f"static system is singular: {exc}", _null_vector(Kff)) from exc
    uf = lu.solve(rhs)
    if not np.all(np.isfinite(uf)):
        raise ModelingError("static solve produced non-finite displacements", _null_vector(Kff))
    u = up.copy()
    u[free] = uf
    f = K @ u
    return float(-f[sys.dof_map[top, 1]].sum())


def _strip_bc(g: BeamGraph) -> BeamGraph:
    out = g.copy()
    out.clamped_nodes = np.zeros(0, np.int64)
    return out


def _null_vector(Kff):
    try:
        n = Kff.shape[0]
        if n <= DENSE_LIMIT:
            lam, v = sla.eigh(Kff.toarray())
            return v[:, 0]
        lam, v = spla.eigsh(Kff, k=1, sigma=-1e-8 * abs(Kff.diagonal()).max())
        return v[:, 0]
    except Exception:  # pragma: no cover - diagnostic only
        return None


# ---------------------------------------------------------------------------
# spectrum post-processing
# ---------------------------------------------------------------------------

def detect_bandgaps(s: Spectrum, threshold_db: float = -20.0, min_width_hz: float = 50.0) -> list[Bandgap]:
    """Maximal runs of bins at or below ``threshold_db`` at least ``min_width_hz`` wide."""
    amp = s.amp_db
    below = amp <= threshold_db
    gaps = []
    edges = np.diff(np.concatenate([[0], below.astype(np.int8), [0]]))
    starts = np.nonzero(edges == 1)[0]
    stops = np.nonzero(edges == -1)[0] - 1
    for a, b in zip(starts, stops):
        f_lo, f_hi = FREQ_HZ[a], FREQ_HZ[b]
        if f_hi - f_lo >= min_width_hz - 1e-9:
            gaps.append(Bandgap(float(f_lo), float(f_hi), float(amp[a:b + 1].min())))
    return gaps


def half_power_band(s: Spectrum, peak_bin: int) -> tuple[float, float]:
    """Interpolated -3 dB crossings (f1, f2) on either side of ``peak_bin``."""
    amp = s.amp_db
    f = FREQ_HZ
    k = int(peak_bin)
    if not 0 < k < N_BINS - 1 or amp[k] < amp[k - 1] or amp[k] < amp[k + 1]:
        raise EstimationError("peak_bin is not an interior local maximum")
    level = amp[k] - 10.0 * math.log10(2.0)
    i = k
    while i > 0 and amp[i] > level:
        i -= 1
    if amp[i] > level:
        raise EstimationError("lower half-power crossing lies outside the axis")
    j = k
    while j < N_BINS - 1 and amp[j] > level:
        j += 1
    if amp[j] > level:
        raise EstimationError("upper half-power crossing lies outside the axis")
    f1 = f[i] + (level - amp[i]) * (f[i + 1] - f[i]) / (amp[i + 1] - amp[i])
    f2 = f[j - 1] + (level - amp[j - 1]) * (f[j] - f[j - 1]) / (amp[j] - amp[j - 1])
    return float(f1), float(f2)


def half_power_damping(s: Spectrum, peak_bin: int) -> float:
    """Damping ratio from the -3 dB bandwidth around ``peak_bin``."""
    f1, f2 = half_power_band(s, peak_bin)
    return (f2 - f1) / (2.0 * FREQ_HZ[int(peak_bin)])


def bg_ratio(gap: Bandgap) -> float:
    """Gap width over centre frequency."""
    return (gap.f_hi - gap.f_lo) / (0.5 * (gap.f_hi + gap.f_lo))


def simulate(g: BeamGraph, mat: MaterialProps = PLA, elements_per_edge: int = 2,
             f_max: float = 10_000.0) -> Spectrum:
    """assemble -> modal -> transmissibility for one structure."""
    sys = assemble(g, mat, elements_per_edge)
    modes = modal(sys, f_max)
    return transmissibility(modes, mat.d, g)
