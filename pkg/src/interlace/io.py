"""On-disk formats: spectra, rasters, sample directories and manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError
from .femlite import FREQ_HZ, N_BINS, MaterialProps

SAMPLE_FILES = ("spec.json", "raster.png", "raster.f32", "spectrum.csv", "material.json")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_json(path):
    return json.loads(Path(path).read_text())


def write_spectrum_csv(path, amp_db, extra: dict | None = None) -> None:
    """``freq_hz,amp_db`` plus optional extra columns, one row per bin."""
    amp_db = np.asarray(amp_db, float)
    if amp_db.shape != (N_BINS,):
        raise ValidationError(f"spectrum must have {N_BINS} bins")
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz", "amp_db", *extra])
        cols = [np.asarray(v, float) for v in extra.values()]
        for k in range(N_BINS):
            w.writerow([f"{FREQ_HZ[k]:g}", repr(float(amp_db[k]))] + [repr(float(c[k])) for c in cols])


def read_spectrum_csv(path, column: str = "amp_db") -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != N_BINS or rows and ("freq_hz" not in rows[0] or column not in rows[0]):
        raise ValidationError(f"{path}: expected {N_BINS} rows with freq_hz,{column}")
    f = np.array([float(r["freq_hz"]) for r in rows])
    if not np.allclose(f, FREQ_HZ):
        raise ValidationError(f"{path}: frequency axis must be 10..10000 Hz in 10 Hz steps")
    amp = np.array([float(r[column]) for r in rows])
    if not np.all(np.isfinite(amp)):
        raise ValidationError(f"{path}: non-finite amplitudes")
    return amp


def write_raster(directory, raster: np.ndarray, stem: str = "raster") -> None:
    """8-bit PNG (0 <-> -1, 255 <-> +1) and the exact little-endian float32 sidecar."""
    r = np.asarray(raster, np.float32)
    if r.ndim != 2 or not np.all(np.isfinite(r)) or r.min() < -1 or r.max() > 1:
        raise ValidationError("raster must be a finite 2-D array within [-1, 1]")
    directory = Path(directory)
    png = np.round((r + 1.0) * 127.5).astype(np.uint8)
    Image.fromarray(png, mode="L").save(directory / f"{stem}.png", optimize=False)
    r.astype("<f4").tofile(directory / f"{stem}.f32")


def read_raster(directory, stem: str = "raster") -> np.ndarray:
    directory = Path(directory)
    with Image.open(directory / f"{stem}.png") as im:
        w, h = im.size
    data = np.fromfile(directory / f"{stem}.f32", dtype="<f4")
    if data.size != h * w:
        raise ValidationError(f"{directory}: raster sidecar size {data.size} != {h}x{w}")
    return data.reshape(h, w).astype(np.float32)


def write_material(path, mat: MaterialProps) -> None:
    write_json(path, mat.to_dict())


def read_material(path) -> MaterialProps:
    return MaterialProps(**read_json(path))


def sample_complete(directory) -> bool:
    d = Path(directory)
    return d.is_dir() and all((d / f).is_file() and (d / f).stat().st_size > 0 for f in SAMPLE_FILES)


def sample_hashes(directory) -> dict:
    return {f: sha256_file(Path(directory) / f) for f in SAMPLE_FILES}
