"""Post-processing and the design workflow.

Raster clean-up, raster -> beam graph conversion for re-simulation, target
spectra with tailored notches, spectrum comparison and plot emission.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi

from . import femlite, io
from .errors import ValidationError
from .femlite import FREQ_HZ, N_BINS, Bandgap, Spectrum, detect_bandgaps
from .forward_net import SpectrumNorm
from .lattice import BeamGraph, InterlaceLevel, LatticeSpec, build_panel, fit_scale

log = logging.getLogger(__name__)

_SQUARE = np.ones((3, 3), bool)


# ---------------------------------------------------------------------------
# denoising
# ---------------------------------------------------------------------------

def _open_by_reconstruction(b):
    seed = ndi.binary_erosion(b, _SQUARE, border_value=0)
    return ndi.binary_propagation(seed, structure=_SQUARE, mask=b)


def _fill_small_voids(b, min_size):
    # closing by reconstruction, restricted to void pockets below min_size
    void = ~b
    kept = ndi.binary_propagation(ndi.binary_erosion(void, _SQUARE, border_value=1), structure=_SQUARE, mask=void)
    lab, n = ndi.label(void & ~kept)
    if n == 0:
        return b
    sizes = np.bincount(lab.ravel())
    small = sizes < min_size
    small[0] = False
    return b | small[lab]


def _drop_small_material(b, min_size):
    lab, n = ndi.label(b, structure=_SQUARE)
    if n == 0:
        return b
    sizes = np.bincount(lab.ravel())
    keep = sizes >= min_size
    keep[0] = False
    return keep[lab]


def denoise(r: np.ndarray, min_size: int = 20, max_iter: int = 10) -> np.ndarray:
    """Binarise at 0, 3x3 opening/closing by reconstruction, drop specks < ``min_size`` px.

    Iterated to a fixed point, so ``denoise(denoise(x)) == denoise(x)``.
    """
    b = np.asarray(r) > 0
    for _ in range(max_iter):
        nb = _open_by_reconstruction(b)
        nb = _fill_small_voids(nb, min_size)
        nb = _drop_small_material(nb, min_size)
        if np.array_equal(nb, b):
            break
        b = nb
    return np.where(b, 1.0, -1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# raster -> beam graph
# ---------------------------------------------------------------------------

def nominal_px_per_mm() -> float:
    """Auto-fit scale of the default panel (3x12 cells, scale 1)."""
    spec = LatticeSpec(interlace=(InterlaceLevel("secondary", "honeycomb", "all"),))
    return fit_scale(build_panel(spec))


def vectorize(raster: np.ndarray, px_per_mm: float | None = None, thickness_mm: float = 5.0,
              edge_band_px: float = 3.0) -> BeamGraph:
    """Skeletonise the material phase into a beam graph.

    Skeleton pixels become nodes joined to their 8-neighbours (diagonals that
    duplicate an orthogonal path are dropped); strut width comes from the
    distance transform. Nodes within ``edge_band_px`` of the leftmost /
    rightmost skeleton column are clamped base / tip nodes. Only the largest
    connected piece is kept.
    """
    from skimage.morphology import skeletonize

    ppm = nominal_px_per_mm() if px_per_mm is None else float(px_per_mm)
    b = np.asarray(raster) > 0
    H = b.shape[0]
    lab, n = ndi.label(b, structure=_SQUARE)
    if n == 0:
        raise ValidationError("raster contains no material")
    biggest = np.argmax(np.bincount(lab.ravel())[1:]) + 1
    b = lab == biggest
    sk = skeletonize(b)
    rr, cc = np.nonzero(sk)
    if len(rr) < 2:
        raise ValidationError("skeleton too small to form a structure")
    index = -np.ones(b.shape, np.int64)
    index[rr, cc] = np.arange(len(rr))
    edges = []
    for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
        r2, c2 = rr + dr, cc + dc
        ok = (r2 >= 0) & (r2 < b.shape[0]) & (c2 >= 0) & (c2 < b.shape[1])
        ok[ok] = sk[r2[ok], c2[ok]]
        for i in np.nonzero(ok)[0]:
            if dr and dc and (sk[rr[i], cc[i] + dc] or sk[rr[i] + dr, cc[i]]):
                continue
            edges.append((index[rr[i], cc[i]], index[r2[i], c2[i]]))
    edges = np.array(edges, np.int64).reshape(-1, 2)
    dt = ndi.distance_transform_edt(b)
    wpx = np.maximum(2.0 * dt[rr, cc] - 1.0, 1.0)
    widths = 0.5 * (wpx[edges[:, 0]] + wpx[edges[:, 1]]) / ppm
    nodes = np.stack([cc / ppm, (H - 1 - rr) / ppm], axis=1).astype(float)
    g = BeamGraph(nodes, edges, widths, np.full(len(edges), float(thickness_mm)), np.zeros(len(nodes), np.int64))
    x = cc.astype(float)
    g.clamped_nodes = np.nonzero(x <= x.min() + edge_band_px)[0]
    g.base_nodes = g.clamped_nodes.copy()
    g.tip_nodes = np.nonzero(x >= x.max() - edge_band_px)[0]
    return g


def fem_spectrum_of_raster(raster: np.ndarray, mat: femlite.MaterialProps = femlite.PLA,
                           px_per_mm: float | None = None) -> np.ndarray:
    """femlite transmissibility (dB) of a raster design via :func:`vectorize`."""
    g = vectorize(raster, px_per_mm)
    return femlite.simulate(g, mat, elements_per_edge=1).amp_db


# ---------------------------------------------------------------------------
# target spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NotchSpec:
    f_lo: float
    f_hi: float
    depth_db: float = -40.0
    edge_width_hz: float = 100.0

    def __post_init__(self):
        if not 10 <= self.f_lo < self.f_hi <= 10000:
            raise ValidationError("notch needs 10 <= f_lo < f_hi <= 10000")
        if not self.depth_db < 0:
            raise ValidationError("notch depth must be negative")
        if self.edge_width_hz < 0:
            raise ValidationError("edge width must be non-negative")

    @classmethod
    def parse(cls, text: str) -> NotchSpec:
        """``f_lo:f_hi:depth_db`` as used on the command line."""
        try:
            lo, hi, depth = (float(v) for v in text.split(":"))
        except ValueError as exc:
            raise ValidationError(f"malformed notch {text!r}; expected f_lo:f_hi:depth_db") from exc
        return cls(lo, hi, depth)

    def profile(self, f=FREQ_HZ) -> np.ndarray:
        """Fraction of full depth per bin: 1 inside, raised-cosine taper centred on each edge.

        The taper passes exactly 1/2 at f_lo and f_hi.
        """
        f = np.asarray(f, float)
        w = np.where((f >= self.f_lo) & (f <= self.f_hi), 1.0, 0.0)
        e = self.edge_width_hz
        if e > 0:
            for edge, sign in ((self.f_lo, 1.0), (self.f_hi, -1.0)):
                u = sign * (f - edge) / e
                band = np.abs(u) <= 0.5
                w[band] = 0.5 + 0.5 * np.sin(math.pi * u[band])
        return w


def synthesize_target(baseline="flat", notches=(), mean_spectrum_db=None) -> Spectrum:
    """Baseline (0 dB or the corpus mean) with cosine-tapered notches cut in."""
    if isinstance(baseline, str):
        if baseline == "flat":
            base = np.zeros(N_BINS)
        elif baseline == "corpus_mean":
            if mean_spectrum_db is None:
                raise ValidationError("corpus_mean baseline needs the corpus mean spectrum")
            base = np.asarray(mean_spectrum_db, float).copy()
        else:
            raise ValidationError(f"unknown baseline {baseline!r}")
    else:
        base = np.asarray(baseline, float).copy()
    if base.shape != (N_BINS,):
        raise ValidationError("baseline must have 1000 bins")
    ordered = sorted(notches, key=lambda n: n.f_lo)
    for a, b in zip(ordered, ordered[1:]):
        if b.f_lo <= a.f_hi:
            raise ValidationError(f"notches overlap: [{a.f_lo}, {a.f_hi}] and [{b.f_lo}, {b.f_hi}]")
    cut = np.zeros(N_BINS)
    for n in ordered:
        cut = np.minimum(cut, n.depth_db * n.profile())
    return Spectrum(base + cut, {"baseline": baseline if isinstance(baseline, str) else "custom",
                                 "notches": [[n.f_lo, n.f_hi, n.depth_db] for n in ordered]})


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

def _gap_mask(gaps: list[Bandgap]) -> np.ndarray:
    m = np.zeros(N_BINS, bool)
    for g in gaps:
        m |= (FREQ_HZ >= g.f_lo) & (FREQ_HZ <= g.f_hi)
    return m


def gap_iou(a: list[Bandgap], b: list[Bandgap]) -> float:
    """Intersection over union of the frequency bins covered by two gap sets."""
    ma, mb = _gap_mask(a), _gap_mask(b)
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 1.0
    return np.count_nonzero(ma & mb) / union


def band_attenuation(amp_db, f_lo: float, f_hi: float) -> float:
    """Drop (dB) of the in-band minimum below the median of the two adjacent flanks.

    Each flank is as wide as the band itself (clipped to the axis).
    """
    amp = np.asarray(amp_db, float)
    width = f_hi - f_lo
    inside = (FREQ_HZ >= f_lo) & (FREQ_HZ <= f_hi)
    flank = ((FREQ_HZ >= f_lo - width) & (FREQ_HZ < f_lo)) | ((FREQ_HZ > f_hi) & (FREQ_HZ <= f_hi + width))
    if not inside.any() or not flank.any():
        raise ValidationError("band or its flanks fall outside the axis")
    return float(np.median(amp[flank]) - amp[inside].min())


def compare_spectra(a, b, norm: SpectrumNorm | None = None, threshold_db: float = -20.0,
                    min_width_hz: float = 50.0) -> dict:
    """Normalised-unit MSE, max |dB| deviation and bandgap IoU."""
    sa = a if isinstance(a, Spectrum) else Spectrum(a)
    sb = b if isinstance(b, Spectrum) else Spectrum(b)
    norm = norm or SpectrumNorm()
    ga = detect_bandgaps(sa, threshold_db, min_width_hz)
    gb = detect_bandgaps(sb, threshold_db, min_width_hz)
    return {
        "mse": float(np.mean((norm.forward(sa.amp_db) - norm.forward(sb.amp_db)) ** 2)),
        "max_abs_db": float(np.max(np.abs(sa.amp_db - sb.amp_db))),
        "gap_iou": float(gap_iou(ga, gb)),
        "gaps_a": [[g.f_lo, g.f_hi] for g in ga],
        "gaps_b": [[g.f_lo, g.f_hi] for g in gb],
    }


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

def _mpl():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "interlace"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def plot_spectra(path, columns: dict, threshold_db: float = -20.0, min_width_hz: float = 50.0):
    """Overlay of named dB curves; detected gaps of the first curve are shaded."""
    plt = _mpl()
    fig, ax = plt.subplots(figsize=(8, 3.5))
    names = list(columns)
    for g in detect_bandgaps(Spectrum(columns[names[0]]), threshold_db, min_width_hz):
        ax.axvspan(g.f_lo, g.f_hi, color="0.85", lw=0)
    for name in names:
        ax.plot(FREQ_HZ, columns[name], lw=1.0, label=name)
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("transmissibility [dB]")
    ax.set_xlim(FREQ_HZ[0], FREQ_HZ[-1])
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_training(path, rows: list[dict], title: str):
    plt = _mpl()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ep = [int(r["epoch"]) for r in rows]
    for key in ("loss", "val_loss"):
        vals = [float(r[key]) if r.get(key) not in (None, "") else np.nan for r in rows]
        ax.plot(ep, vals, lw=1.2, label=key)
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_raster(path, raster: np.ndarray):
    from PIL import Image

    png = np.round((np.clip(raster, -1, 1) + 1.0) * 127.5).astype(np.uint8)
    Image.fromarray(png, mode="L").resize((png.shape[1] * 2, png.shape[0] * 2), Image.NEAREST).save(path)


def _read_columns(path) -> dict:
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != N_BINS:
        raise ValidationError(f"{path}: expected {N_BINS} rows")
    names = [k for k in rows[0] if k != "freq_hz"]
    return {k: np.array([float(r[k]) for r in rows]) for k in names}


def emit_plots(run_dir, out_dir=None) -> list[Path]:
    """Render every recognised artifact of ``run_dir`` into ``out_dir`` (default ``run_dir/plots``).

    Recognised inputs and the files they produce:

    ============================  ==================================
    ``forward_log.csv``           ``training_forward.svg``
    ``inverse_log.csv``           ``training_inverse.svg``
    ``spectra.csv``               ``spectra.svg``
    ``<stem>.f32`` + ``.png``     ``plot_<stem>.png``
    ============================  ==================================
    """
    from .trainer import read_log

    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ValidationError(f"{run_dir} does not exist")
    out = Path(out_dir) if out_dir is not None else run_dir / "plots"
    produced = []
    jobs = []
    for stem in ("forward", "inverse"):
        src = run_dir / f"{stem}_log.csv"
        if src.is_file():
            jobs.append((out / f"training_{stem}.svg", lambda p, s=src, t=stem: plot_training(p, read_log(s), t)))
    if (run_dir / "spectra.csv").is_file():
        cols = _read_columns(run_dir / "spectra.csv")
        jobs.append((out / "spectra.svg", lambda p, c=cols: plot_spectra(p, c)))
    for f32 in sorted(run_dir.glob("*.f32")):
        if f32.with_suffix(".png").is_file():
            jobs.append((out / f"plot_{f32.stem}.png",
                         lambda p, d=run_dir, s=f32.stem: plot_raster(p, io.read_raster(d, s))))
    if not jobs:
        raise ValidationError(f"{run_dir} contains no plottable artifacts")
    out.mkdir(parents=True, exist_ok=True)
    for path, fn in jobs:
        fn(path)
        produced.append(path)
    return produced
