"""Command-line entry point: ``p2ptrack <command> [options]``.

Commands: gen-synthetic, train, track, eval, ablate, gradcheck, params, bench.
Configuration comes from an INI file (``--config``) with sections ``train``,
``model``, ``loss``, ``augment``, ``synthetic`` and ``eval``, plus
``--set section.key=value`` overrides. Values are Python literals; anything
that does not parse as one is taken as a string. Every run writes its outputs
and a ``manifest.json`` under ``--out`` (default ``$P2PTRACK_OUT`` or ``runs``).
``P2PTRACK_THREADS`` caps the BLAS thread pool.
"""
from __future__ import annotations

import os

if os.environ.get("P2PTRACK_THREADS"):
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["P2PTRACK_THREADS"])

import argparse
import ast
import configparser
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from p2ptrack import __version__

log = logging.getLogger("p2ptrack")

SECTIONS = ("train", "model", "loss", "augment", "synthetic", "eval")
PUBLISHED_COUNTS = {"p2p_point": (7.39e6, 1.38e9), "p2p_voxel": (32.00e6, 1.23e9)}
FIG2_VARIANTS = ("ablate_merged", "ablate_temporal", "ablate_dual_concat", "p2p_point")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config


def _literal(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def load_settings(path=None, overrides=()) -> dict:
    """section -> {key: value} from an optional INI file and ``section.key=value`` overrides."""
    settings = {s: {} for s in SECTIONS}
    if path:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        if not parser.read(path):
            raise UsageError(f"cannot read config file {path}")
        for section in parser.sections():
            if section not in settings:
                raise UsageError(f"unknown config section [{section}]; expected one of {SECTIONS}")
            settings[section].update({k: _literal(v) for k, v in parser[section].items()})
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or section not in settings or not name:
            raise UsageError(f"--set expects section.key=value with section in {SECTIONS}, got {item!r}")
        settings[section][name] = _literal(value.strip())
    return settings


def _apply(obj, values: dict, section: str):
    names = {f.name for f in fields(obj)}
    unknown = set(values) - names
    if unknown:
        raise UsageError(f"unknown key(s) in [{section}]: {sorted(unknown)}")
    try:
        return replace(obj, **values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[{section}]: {exc}") from None


def build_model_config(settings, variant=None):
    from p2ptrack.model import ModelConfig, desk_config, tiny_config

    values = dict(settings["model"])
    preset = values.pop("preset", "desk")
    variant = variant or values.pop("variant", "p2p_point")
    values.pop("variant", None)
    makers = {"desk": desk_config, "tiny": tiny_config, "full": lambda v: ModelConfig(variant=v)}
    if preset not in makers:
        raise UsageError(f"model.preset must be one of {sorted(makers)}, got {preset!r}")
    return _apply(makers[preset](variant), values, "model")


def build_train_config(settings, seed, variant=None):
    from p2ptrack.augment import AugmentConfig
    from p2ptrack.loss import LossConfig
    from p2ptrack.train import TrainConfig

    aug_values = dict(settings["augment"])
    enabled = aug_values.pop("enabled", True)
    augment = _apply(AugmentConfig(seed=seed), aug_values, "augment") if enabled else None
    loss = _apply(LossConfig(), settings["loss"], "loss")
    values = dict(settings["train"])
    values.pop("seed", None)
    try:
        base = TrainConfig(seed=seed, loss=loss, augment=augment, model=build_model_config(settings, variant))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = _apply(base, values, "train")
    cfg.__post_init__()
    return cfg


def build_synthetic_config(settings, seed, **kw):
    from p2ptrack.data import SyntheticSceneConfig

    values = {k: v for k, v in settings["synthetic"].items() if k not in ("n_train", "n_test", "n_val", "test_frames")}
    values.update({k: v for k, v in kw.items() if v is not None})
    return _apply(SyntheticSceneConfig(seed=seed), values, "synthetic")


# ---------------------------------------------------------------- manifest


def _hash_path(path: Path, h):
    if path.is_dir():
        for sub in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(str(sub.relative_to(path)).encode())
            h.update(sub.read_bytes())
    elif path.is_file():
        h.update(path.read_bytes())


def content_hash(command, config, seed, inputs) -> str:
    h = hashlib.sha256()
    h.update(json.dumps({"command": command, "config": config, "seed": seed}, sort_keys=True, default=str).encode())
    for p in inputs:
        if p:
            _hash_path(Path(p), h)
    return h.hexdigest()


def write_manifest(out: Path, command, argv, config, seed, inputs, outputs, started):
    manifest = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs if p],
        "input_hash": content_hash(command, config, seed, inputs),
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": sorted(str(p) for p in outputs),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return manifest


# ---------------------------------------------------------------- helpers


def _load_tracklets(path, category=None):
    from p2ptrack.data import read_kitti_dataset

    root = Path(path)
    if not (root / "label_02").is_dir():
        raise UsageError(f"{root} is not a KITTI tracking layout (no label_02/)")
    tracklets = read_kitti_dataset(root)
    if category:
        tracklets = [t for t in tracklets if t.category == category]
    if not tracklets:
        raise RuntimeError(f"no tracklets found under {root}")
    return tracklets


def _synthetic_split(settings, seed, category):
    from p2ptrack.data import gen_synthetic_dataset

    syn = settings["synthetic"]
    cfg = build_synthetic_config(settings, seed, category=category)
    train_set = gen_synthetic_dataset(cfg, int(syn.get("n_train", 200)), seed=seed)
    test_cfg = build_synthetic_config(settings, seed, category=category, n_frames=syn.get("test_frames", cfg.n_frames))
    test_set = gen_synthetic_dataset(test_cfg, int(syn.get("n_test", 50)), seed=seed + 10_000)
    return train_set, test_set


def _boxes_json(boxes):
    return [[float(v) for v in b.as_array()] for b in boxes]


def _trackers(args, settings, tracklets):
    from p2ptrack.evaluate import (
        constant_velocity_baseline,
        oracle_predictor,
        track_sequence,
        zero_motion_predictor,
    )
    from p2ptrack.geometry import Box3D

    fallback = settings["eval"].get("fallback", "carry")
    out = []
    if args.pred:
        preds = json.loads(Path(args.pred).read_text())
        missing = [t.id for t in tracklets if t.id not in preds]
        if missing:
            raise RuntimeError(f"{args.pred} has no boxes for {missing[:3]}")
        out.append(("pred", lambda t: [Box3D.from_array(b) for b in preds[t.id]]))
    if args.checkpoint:
        from p2ptrack.train import load_model

        model, tcfg, _ = load_model(args.checkpoint)
        out.append(("network", lambda t: track_sequence(model, t, fallback=fallback, category=tcfg.category)))
    for name in args.baseline or ():
        if name == "oracle":
            out.append((name, lambda t: track_sequence(oracle_predictor, t)))
        elif name == "zero":
            out.append((name, lambda t: track_sequence(zero_motion_predictor, t)))
        elif name == "cv":
            out.append((name, lambda t: constant_velocity_baseline(t)))
        elif name == "cv_warm":
            out.append((name, lambda t: constant_velocity_baseline(t, warm_start=True)))
    if not out:
        raise UsageError("eval needs --pred, --checkpoint or --baseline")
    return out


# ---------------------------------------------------------------- commands


def cmd_gen_synthetic(args, settings, out):
    from p2ptrack.data import gen_synthetic_dataset, write_kitti_sequence

    cfg = build_synthetic_config(settings, args.seed, category=args.category, n_frames=args.frames)
    tracklets = gen_synthetic_dataset(cfg, args.n, seed=args.seed)
    root = out / "data"
    for i, trk in enumerate(tracklets):
        write_kitti_sequence(root, i, [trk])
    print(f"wrote {len(tracklets)} sequences to {root}")
    return {"synthetic": cfg.__dict__, "n": args.n}, [root]


def cmd_train(args, settings, out):
    from p2ptrack.train import train

    from p2ptrack.data import gen_synthetic_dataset

    cfg = build_train_config(settings, args.seed, args.variant)
    if args.data:
        tracklets = _load_tracklets(args.data, cfg.category)
    else:
        tracklets, _ = _synthetic_split(settings, args.seed, cfg.category)
    val = None
    if args.val_data:
        val = _load_tracklets(args.val_data, cfg.category)
    elif int(settings["synthetic"].get("n_val", 0)) > 0:
        val_cfg = build_synthetic_config(settings, args.seed, category=cfg.category)
        val = gen_synthetic_dataset(val_cfg, int(settings["synthetic"]["n_val"]), seed=args.seed + 20_000)
    result = train(cfg, tracklets, out_dir=out, val_tracklets=val,
                   progress=lambda e, l: print(f"epoch {e} loss {l:.6f}", flush=True))
    print(f"trained {cfg.model.variant} for {cfg.epochs} epochs; best epoch {result.best_epoch}; skipped {result.skipped}")
    return cfg.to_dict(), [out / n for n in ("metrics.csv", "epochs.csv", "best.ckpt", "last.ckpt")]


def cmd_track(args, settings, out):
    from p2ptrack.evaluate import track_sequence
    from p2ptrack.train import load_model

    model, tcfg, _ = load_model(args.checkpoint)
    tracklets = _load_tracklets(args.data)
    fallback = settings["eval"].get("fallback", "carry")
    preds = {t.id: _boxes_json(track_sequence(model, t, fallback=fallback, category=tcfg.category)) for t in tracklets}
    path = out / "tracks.json"
    path.write_text(json.dumps(preds, indent=1, sort_keys=True))
    print(f"tracked {len(preds)} tracklets -> {path}")
    return {"checkpoint": str(args.checkpoint), "eval": settings["eval"]}, [path]


def cmd_eval(args, settings, out):
    from p2ptrack.evaluate import evaluate, write_report

    tracklets = _load_tracklets(args.data)
    reports = [evaluate(name, fn, tracklets) for name, fn in _trackers(args, settings, tracklets)]
    for rep in reports:
        print(f"{rep.method}: success {rep.overall.success:.2f} precision {rep.overall.precision:.2f}")
    write_report(out, reports)
    return {"eval": settings["eval"], "baseline": args.baseline}, [out / "summary.csv", out / "sparsity.csv"]


def cmd_ablate(args, settings, out):
    from p2ptrack.evaluate import evaluate, track_sequence
    from p2ptrack.train import train

    variants = args.variants.split(",")
    rows = []
    for i in range(args.seeds):
        seed = args.seed + i
        cfg0 = build_train_config(settings, seed)
        if args.data:
            train_set = _load_tracklets(args.data, cfg0.category)
            test_set = _load_tracklets(args.test_data or args.data, cfg0.category)
        else:
            train_set, test_set = _synthetic_split(settings, seed, cfg0.category)
        for variant in variants:
            cfg = build_train_config(settings, seed, variant)
            res = train(cfg, train_set, out_dir=out / f"{variant}_seed{seed}")
            rep = evaluate(variant, lambda t, m=res.model: track_sequence(m, t, category=cfg.category), test_set)
            rows.append((variant, seed, rep.overall.success, rep.overall.precision))
            print(f"{variant} seed {seed}: success {rep.overall.success:.2f} precision {rep.overall.precision:.2f}", flush=True)
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("variant", "seed", "success", "precision"))
        w.writerows((v, s, f"{a:.4f}", f"{b:.4f}") for v, s, a, b in rows)
    with open(out / "ablation_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("variant", "mean_success", "mean_precision", "n_seeds"))
        for v in variants:
            mine = [r for r in rows if r[0] == v]
            w.writerow((v, f"{np.mean([r[2] for r in mine]):.4f}", f"{np.mean([r[3] for r in mine]):.4f}", len(mine)))
    return {"variants": variants, "seeds": args.seeds, "settings": settings}, [out / "ablation.csv", out / "ablation_summary.csv"]


def cmd_gradcheck(args, settings, out):
    from p2ptrack.checks import gradcheck_model

    ok = True
    lines = []
    for variant in args.variant or ("p2p_point", "p2p_voxel"):
        rep = gradcheck_model(variant, tolerance=args.tolerance, max_coords=args.coords, seed=args.seed)
        ok &= rep.passed
        line = f"{variant}: max relative error {rep.worst:.3e} over {sum(rep.n_checked.values())} coordinates ({'ok' if rep.passed else 'FAIL'})"
        lines.append(line)
        print(line)
        for name, err in sorted(rep.failures().items()):
            print(f"  {name}: {err:.3e}")
    (out / "gradcheck.txt").write_text("\n".join(lines) + "\n")
    if not ok:
        raise RuntimeError("gradient check failed")
    return {"tolerance": args.tolerance, "coords": args.coords}, [out / "gradcheck.txt"]


def cmd_params(args, settings, out):
    from p2ptrack.model import ModelConfig, build_model, example_inputs
    from p2ptrack.nn import count_params_flops

    if args.preset != "full":
        settings = {**settings, "model": {**settings["model"], "preset": args.preset}}
    rows = []
    for variant in args.variant or ("p2p_point", "p2p_voxel"):
        cfg = ModelConfig(variant=variant) if args.preset == "full" else build_model_config(settings, variant)
        model = build_model(cfg, seed=args.seed)
        n, macs = count_params_flops(model, *example_inputs(cfg))
        ref = PUBLISHED_COUNTS.get(variant) if args.preset == "full" else None
        line = f"{variant}: {n / 1e6:.2f} M parameters, {macs / 1e9:.2f} G multiply-adds"
        if ref:
            line += f" (reference {ref[0] / 1e6:.2f} M, {ref[1] / 1e9:.2f} G FLOPs)"
        print(line)
        rows.append((variant, n, macs))
    with open(out / "params.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("variant", "parameters", "macs"))
        w.writerows(rows)
    return {"preset": args.preset}, [out / "params.csv"]


def cmd_bench(args, settings, out):
    from p2ptrack.bench import format_rows, run_benchmarks

    rows = run_benchmarks(repeat=args.repeat, seed=args.seed)
    print(format_rows(rows))
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("kernel", "backend", "size", "seconds"))
        w.writerows(r.as_tuple() for r in rows)
    return {"repeat": args.repeat}, [out / "bench.csv"]


# ---------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config value")
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    common.add_argument("--out", help="output directory (default $P2PTRACK_OUT or ./runs/<command>)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="p2ptrack", description="Part-to-part motion tracking on LiDAR point clouds.")
    p.add_argument("--version", action="version", version=f"p2ptrack {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-synthetic", parents=[common], help="write synthetic tracklets in KITTI layout")
    s.add_argument("--n", type=int, default=20, help="number of tracklets")
    s.add_argument("--frames", type=int, help="frames per tracklet")
    s.add_argument("--category", choices=("car", "human"))
    s.set_defaults(func=cmd_gen_synthetic)

    s = sub.add_parser("train", parents=[common], help="train a model")
    s.add_argument("--data", help="KITTI-layout directory (default: generate synthetic tracklets)")
    s.add_argument("--variant", help="model variant (overrides model.variant)")
    s.add_argument("--val-data", help="KITTI-layout validation data for checkpoint selection and early stopping")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("track", parents=[common], help="track every tracklet with a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("eval", parents=[common], help="Success/Precision of predictions or trackers")
    s.add_argument("--data", required=True, help="KITTI-layout directory with ground truth")
    s.add_argument("--pred", help="tracks.json from the track command")
    s.add_argument("--checkpoint", help="track with this checkpoint and evaluate")
    s.add_argument("--baseline", action="append", choices=("oracle", "zero", "cv", "cv_warm"))
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", parents=[common], help="train and evaluate fusion variants over seeds")
    s.add_argument("--variants", default=",".join(FIG2_VARIANTS))
    s.add_argument("--seeds", type=int, default=3)
    s.add_argument("--data", help="training data (default: synthetic)")
    s.add_argument("--test-data", help="held-out data (default: synthetic)")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference check at the tiny config")
    s.add_argument("--variant", action="append", choices=("p2p_point", "p2p_voxel"))
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.add_argument("--coords", type=int, default=20, help="coordinates probed per parameter tensor")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("params", parents=[common], help="parameter and multiply-add counts")
    s.add_argument("--variant", action="append", choices=("p2p_point", "p2p_voxel", *FIG2_VARIANTS[:3]))
    s.add_argument("--preset", choices=("full", "desk", "tiny"), default="full")
    s.set_defaults(func=cmd_params)

    s = sub.add_parser("bench", parents=[common], help="compiled vs numpy kernel timings")
    s.add_argument("--repeat", type=int, default=5)
    s.set_defaults(func=cmd_bench)
    return p


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out or os.environ.get("P2PTRACK_OUT") or Path("runs") / args.command)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    try:
        settings = load_settings(args.config, args.set)
        out.mkdir(parents=True, exist_ok=True)
        config, outputs = args.func(args, settings, out)
        inputs = [args.config] + [getattr(args, k, None) for k in ("data", "val_data", "test_data", "checkpoint", "pred")]
        write_manifest(out, args.command, argv, config, args.seed, inputs, outputs, started)
    except UsageError as exc:
        print(f"p2ptrack {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("failure", exc_info=True)
        print(f"p2ptrack {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
