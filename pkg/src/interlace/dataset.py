"""Corpus generation (resumable, one structure per worker) and loading."""
from __future__ import annotations

import hashlib
import logging
import os
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import femlite, io
from .errors import ValidationError
from .forward_net import SpectrumNorm
from .lattice import LatticeSpec, build_panel, enumerate_dataset, rasterize

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FORMAT = "interlace-dataset"
VERSION = 1


def _sample_name(index: int, spec: LatticeSpec) -> str:
    return f"{index:04d}_{spec.canonical_hash()[:12]}"


def _is_current(d: Path, spec: LatticeSpec, mat: femlite.MaterialProps) -> bool:
    if not io.sample_complete(d):
        return False
    try:
        same_spec = LatticeSpec.from_dict(io.read_json(d / "spec.json")).canonical_hash() == spec.canonical_hash()
        return same_spec and io.read_material(d / "material.json") == mat
    except Exception:
        return False


def simulate_sample(spec_dict: dict, mat_dict: dict, elements_per_edge: int, target: str) -> float:
    """Build, rasterise and simulate one structure into ``target`` (atomic rename)."""
    t0 = time.perf_counter()
    spec = LatticeSpec.from_dict(spec_dict)
    mat = femlite.MaterialProps(**mat_dict)
    g = build_panel(spec)
    raster = rasterize(g)
    spectrum = femlite.simulate(g, mat, elements_per_edge)
    target = Path(target)
    tmp = target.with_name(target.name + f".tmp-{os.getpid()}")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    io.write_json(tmp / "spec.json", spec.to_dict())
    io.write_material(tmp / "material.json", mat)
    io.write_raster(tmp, raster)
    io.write_spectrum_csv(tmp / "spectrum.csv", spectrum.amp_db)
    os.replace(tmp, target)
    return time.perf_counter() - t0


def _quarantine(root: Path, d: Path) -> None:
    q = root / "_quarantine"
    q.mkdir(exist_ok=True)
    k = 0
    while (q / f"{d.name}.{k}").exists():
        k += 1
    shutil.move(str(d), str(q / f"{d.name}.{k}"))
    log.warning("quarantined incomplete sample %s", d.name)


def generate_dataset(out, n: int = 720, seed: int = 0, material: femlite.MaterialProps = femlite.PLA,
                     jobs: int = 1, elements_per_edge: int = 2, config: dict | None = None) -> dict:
    """Write ``n`` sample directories plus ``manifest.json``; returns the manifest.

    Completed samples whose spec and material match are kept as they are;
    partial ones are moved to ``_quarantine/`` and regenerated.
    """
    root = Path(out)
    samples_dir = root / "samples"
    samples_dir.mkdir(parents=True, exist_ok=True)
    for stale in samples_dir.glob("*.tmp-*"):
        shutil.rmtree(stale, ignore_errors=True)
    specs = enumerate_dataset(seed, n)
    todo = []
    for i, spec in enumerate(specs):
        d = samples_dir / _sample_name(i, spec)
        if _is_current(d, spec, material):
            continue
        if d.exists():
            _quarantine(root, d)
        todo.append((i, spec, d))
    log.info("%d of %d samples to simulate", len(todo), n)

    args = [(s.to_dict(), material.to_dict(), elements_per_edge, str(d)) for _, s, d in todo]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for (i, _, _), dt in zip(todo, ex.map(simulate_sample, *zip(*args))):
                log.info("sample %d done in %.1fs", i, dt)
    else:
        for (i, _, _), a in zip(todo, args):
            dt = simulate_sample(*a)
            log.info("sample %d done in %.1fs", i, dt)

    manifest = build_manifest(root, specs, material, seed, elements_per_edge, config)
    io.write_json(root / MANIFEST, manifest)
    return manifest


def build_manifest(root: Path, specs, material, seed, elements_per_edge, config=None) -> dict:
    entries = []
    spectra = []
    fractions = []
    digest = hashlib.sha256()
    for i, spec in enumerate(specs):
        name = _sample_name(i, spec)
        d = root / "samples" / name
        files = io.sample_hashes(d)
        for f in io.SAMPLE_FILES:
            digest.update(files[f].encode())
        entries.append({"index": i, "dir": f"samples/{name}", "spec_hash": spec.canonical_hash(), "files": files})
        spectra.append(io.read_spectrum_csv(d / "spectrum.csv"))
        fractions.append(float(np.mean(io.read_raster(d) > 0)))
    S = np.array(spectra)
    return {
        "format": FORMAT,
        "version": VERSION,
        "n": len(specs),
        "seed": int(seed),
        "material": material.to_dict(),
        "elements_per_edge": int(elements_per_edge),
        "dataset_hash": digest.hexdigest(),
        "normalization": {
            "spectrum_lo": float(S.min()),
            "spectrum_hi": float(S.max()),
            "spectrum_mean_db": [float(v) for v in S.mean(axis=0)],
            "spectrum_std_db": [float(v) for v in S.std(axis=0)],
            "raster_material_fraction_mean": float(np.mean(fractions)),
        },
        "config": dict(config or {}),
        "samples": entries,
    }


@dataclass
class Dataset:
    root: Path
    manifest: dict
    rasters: np.ndarray  # (N, H, W) float32
    spectra_db: np.ndarray  # (N, 1000)
    materials: np.ndarray  # (N, 4) raw E, rho, nu, d
    norm: SpectrumNorm

    def __len__(self):
        return len(self.rasters)

    @property
    def spectra_norm(self) -> np.ndarray:
        return self.norm.forward(self.spectra_db)

    @property
    def mean_spectrum_db(self) -> np.ndarray:
        return np.asarray(self.manifest["normalization"]["spectrum_mean_db"])


def load_dataset(path) -> Dataset:
    root = Path(path)
    mpath = root / MANIFEST
    if not mpath.is_file():
        raise ValidationError(f"{root} has no {MANIFEST}; run gen-dataset first")
    manifest = io.read_json(mpath)
    if manifest.get("format") != FORMAT:
        raise ValidationError(f"{mpath} is not a dataset manifest")
    rasters, spectra, mats = [], [], []
    for e in manifest["samples"]:
        d = root / e["dir"]
        if not io.sample_complete(d):
            raise ValidationError(f"missing sample files in {d}")
        rasters.append(io.read_raster(d))
        spectra.append(io.read_spectrum_csv(d / "spectrum.csv"))
        mats.append(io.read_material(d / "material.json").as_vector())
    nrm = manifest["normalization"]
    return Dataset(root, manifest, np.array(rasters, np.float32), np.array(spectra), np.array(mats),
                   SpectrumNorm(nrm["spectrum_lo"], nrm["spectrum_hi"]))
