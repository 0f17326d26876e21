"""Command-line entry point.

    interlace gen-dataset   --n 720 --out data/
    interlace train-forward --data data/ --out runs/fwd
    interlace train-inverse --data data/ --forward-ckpt runs/fwd/forward_best.pt --out runs/inv
    interlace design        --notch 6000:7000:-40 --inverse-ckpt ... --forward-ckpt ... --out runs/design
    interlace eval          --data data/ --forward-ckpt ... --inverse-ckpt ... --out runs/eval
    interlace analyze       --run runs/design --out runs/design_plots

Exit codes: 0 success, 1 validation/configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, io
from .errors import (CheckpointError, ConfigurationError, InterlaceError, ModelingError, NumericalError,
                     ValidationError)
from .femlite import PLA, MaterialProps

log = logging.getLogger("interlace")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError("config file must hold a JSON object")
    return cfg


def _material(args, cfg) -> MaterialProps:
    if getattr(args, "material", None):
        return io.read_material(args.material)
    if "material" in cfg:
        return MaterialProps(**cfg["material"])
    return PLA


def _train_config(args, cfg):
    from .losses import LossWeights
    from .trainer import TrainConfig

    d = dict(cfg.get("train", {}))
    for key in ("epochs", "batch_size", "lr0", "lr_min"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    d["seed"] = args.seed
    d["deterministic"] = bool(args.deterministic or d.get("deterministic", False))
    if isinstance(d.get("weights"), dict):
        d["weights"] = LossWeights(**d["weights"])
    return TrainConfig(**d)


def _write_resolved(out: Path, command: str, args, extra: dict) -> None:
    resolved = {"command": command, "version": __version__,
                "args": {k: v for k, v in vars(args).items() if k != "func"}, **extra}
    io.write_json(out / "config.json", json.loads(json.dumps(resolved, default=_jsonable)))


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_dataset(args, cfg) -> int:
    from .dataset import generate_dataset

    out = Path(args.out)
    mat = _material(args, cfg)
    resolved = {"n": args.n, "seed": args.seed, "jobs": args.jobs,
                "elements_per_edge": args.elements_per_edge, "material": mat.to_dict()}
    manifest = generate_dataset(out, args.n, args.seed, mat, args.jobs, args.elements_per_edge, resolved)
    _write_resolved(out, "gen-dataset", args, {"material": mat, "dataset_hash": manifest["dataset_hash"]})
    print(f"dataset {out}: {manifest['n']} samples, hash {manifest['dataset_hash'][:16]}")
    return EXIT_OK


def cmd_train_forward(args, cfg) -> int:
    from .dataset import load_dataset
    from .forward_net import ForwardConfig
    from .trainer import seed_everything, train_forward

    tcfg = _train_config(args, cfg)
    seed_everything(tcfg.seed, tcfg.deterministic)
    mcfg = ForwardConfig(**cfg.get("forward_model", {}))
    data = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_resolved(out, "train-forward", args, {"train": tcfg, "forward_model": mcfg,
                                                 "dataset_hash": data.manifest["dataset_hash"]})
    summary = train_forward(tcfg, data, out, mcfg)
    io.write_json(out / "summary.json", summary)
    print(f"forward: best validation MSE {summary['best_val_loss']:.5f}")
    return EXIT_OK


def cmd_train_inverse(args, cfg) -> int:
    from .checkpoint import load_checkpoint
    from .dataset import load_dataset
    from .inverse_net import InverseConfig
    from .trainer import seed_everything, train_inverse

    tcfg = _train_config(args, cfg)
    seed_everything(tcfg.seed, tcfg.deterministic)
    icfg = dict(cfg.get("inverse_model", {}))
    if args.pe_init:
        icfg["pe_init"] = args.pe_init
    mcfg = InverseConfig(**icfg)
    fwd, _ = load_checkpoint(args.forward_ckpt, kind="forward")
    data = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_resolved(out, "train-inverse", args, {"train": tcfg, "inverse_model": mcfg,
                                                 "dataset_hash": data.manifest["dataset_hash"]})
    summary = train_inverse(tcfg, data, fwd, out, mcfg)
    io.write_json(out / "summary.json", summary)
    print(f"inverse: best validation loss {summary['best_val_loss']:.5f}")
    return EXIT_OK


def cmd_design(args, cfg) -> int:
    import torch

    from .checkpoint import load_checkpoint
    from .femlite import Spectrum

    if bool(args.spectrum) == bool(args.notch):
        raise ValidationError("give exactly one of --spectrum or --notch")
    inv, _ = load_checkpoint(args.inverse_ckpt, kind="inverse")
    fwd, _ = load_checkpoint(args.forward_ckpt, kind="forward")
    norm = fwd.norm
    mat = _material(args, cfg)
    notches = [analysis.NotchSpec.parse(t) for t in args.notch or []]
    if args.spectrum:
        target = Spectrum(io.read_spectrum_csv(args.spectrum))
    else:
        mean = None
        if args.baseline == "corpus_mean":
            if not args.data:
                raise ValidationError("--baseline corpus_mean needs --data")
            mean = io.read_json(Path(args.data) / "manifest.json")["normalization"]["spectrum_mean_db"]
        target = analysis.synthesize_target(args.baseline, notches, mean)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raw = inv.design(norm.forward(target.amp_db).astype(np.float32))
    clean = analysis.denoise(raw)
    io.write_raster(out, np.clip(raw, -1, 1), "raster_raw")
    io.write_raster(out, clean, "raster_denoised")
    with torch.no_grad():
        pred_norm = fwd.predict(clean, mat)
    pred_db = norm.inverse(pred_norm)
    columns = {"forward_db": pred_db}
    report = {"target_vs_forward": analysis.compare_spectra(target, pred_db, norm),
              "notches": [dataclasses.asdict(n) for n in notches]}
    fem_error = None
    if args.verify_fem:
        try:
            fem_db = analysis.fem_spectrum_of_raster(clean, mat)
        except InterlaceError as exc:
            fem_error = str(exc)
            report["fem_error"] = fem_error
        else:
            columns["fem_db"] = fem_db
            report["target_vs_fem"] = analysis.compare_spectra(target, fem_db, norm)
            report["fem_band_attenuation_db"] = [analysis.band_attenuation(fem_db, n.f_lo, n.f_hi)
                                                 for n in notches]
    if args.reference:
        ref = io.read_raster(args.reference)
        from .losses import similarity_score
        report["similarity_to_reference"] = similarity_score(torch.from_numpy(clean), torch.from_numpy(ref)).item()
    io.write_spectrum_csv(out / "spectra.csv", target.amp_db, columns)
    io.write_json(out / "report.json", report)
    _write_resolved(out, "design", args, {"material": mat})
    analysis.emit_plots(out, out / "plots")
    if fem_error is not None:
        raise ModelingError(f"design written to {out} but cannot be simulated: {fem_error}")
    iou = report.get("target_vs_fem", report["target_vs_forward"])["gap_iou"]
    print(f"design written to {out}; gap_iou {iou:.3f}")
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    from .checkpoint import load_checkpoint
    from .dataset import load_dataset
    from .forward_net import ForwardConfig
    from .inverse_net import InverseConfig
    from .trainer import seed_everything, split_dataset, summarize, evaluate

    seed_everything(args.seed, args.deterministic)
    exp_f = ForwardConfig(**cfg["forward_model"]) if "forward_model" in cfg else None
    exp_i = InverseConfig(**cfg["inverse_model"]) if "inverse_model" in cfg else None
    fwd, _ = load_checkpoint(args.forward_ckpt, exp_f, kind="forward")
    inv, _ = load_checkpoint(args.inverse_ckpt, exp_i, kind="inverse")
    data = load_dataset(args.data)
    tf = cfg.get("train", {}).get("train_fraction", 0.9)
    idx = np.arange(len(data)) if args.split == "all" else split_dataset(len(data), args.seed, tf)[1]
    rows = evaluate(fwd, inv, data, idx, use_fem_oracle=args.use_fem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fields = list(rows[0]) if rows else ["index"]
    with open(out / "eval.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
    summary = summarize(rows)
    io.write_json(out / "eval_summary.json", summary)
    _write_resolved(out, "eval", args, {})
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_analyze(args, cfg) -> int:
    out = Path(args.out)
    files = analysis.emit_plots(args.run, out)
    for f in files:
        print(f)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", required=True, help="output directory (created)")
    common.add_argument("--config", help="JSON config (sections: train, forward_model, inverse_model, material)")
    common.add_argument("--deterministic", action="store_true", help="single thread, deterministic kernels")
    common.add_argument("--log-level", default="INFO")

    p = argparse.ArgumentParser(prog="interlace", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", parents=[common], help="simulate the training corpus")
    g.add_argument("--n", type=int, default=720)
    g.add_argument("--material", help="material JSON (E, rho, nu, d)")
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--elements-per-edge", type=int, default=2)
    g.set_defaults(func=cmd_gen_dataset)

    for name, fn in (("train-forward", cmd_train_forward), ("train-inverse", cmd_train_inverse)):
        t = sub.add_parser(name, parents=[common])
        t.add_argument("--data", required=True)
        t.add_argument("--epochs", type=int, default=None, help="default 300")
        t.add_argument("--batch-size", type=int, default=None, help="default 4")
        t.add_argument("--lr0", type=float, default=None)
        t.add_argument("--lr-min", type=float, default=None)
        if name == "train-inverse":
            t.add_argument("--forward-ckpt", required=True)
            t.add_argument("--pe-init", choices=("literal", "log_midpoint"))
        t.set_defaults(func=fn)

    d = sub.add_parser("design", parents=[common], help="inverse-design a structure for a target spectrum")
    d.add_argument("--spectrum", help="target spectrum CSV (freq_hz,amp_db)")
    d.add_argument("--notch", action="append", help="f_lo:f_hi:depth_db, repeatable")
    d.add_argument("--baseline", choices=("flat", "corpus_mean"), default="flat")
    d.add_argument("--data", help="dataset directory (for the corpus_mean baseline)")
    d.add_argument("--inverse-ckpt", required=True)
    d.add_argument("--forward-ckpt", required=True)
    d.add_argument("--material")
    d.add_argument("--verify-fem", action="store_true", help="re-simulate the design with femlite")
    d.add_argument("--reference", help="sample directory whose raster is the ground truth")
    d.set_defaults(func=cmd_design)

    e = sub.add_parser("eval", parents=[common], help="per-sample evaluation report")
    e.add_argument("--data", required=True)
    e.add_argument("--forward-ckpt", required=True)
    e.add_argument("--inverse-ckpt", required=True)
    e.add_argument("--split", choices=("val", "all"), default="val")
    e.add_argument("--use-fem", action="store_true")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("analyze", parents=[common], help="render plots for a run directory")
    a.add_argument("--run", required=True)
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except (NumericalError, ModelingError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ConfigurationError, CheckpointError, FileNotFoundError, InterlaceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
