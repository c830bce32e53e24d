"""``srpac`` command line.

Every artifact-producing command writes ``manifest.json`` next to its outputs;
``srpac replay <manifest>`` reruns it and checks the output digests.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .acquisition import PositioningModel, acquire_stack, add_noise, save_stack
from .bounds import NR, BoundsConfig, nd_map, plan, table1
from .fusion import decompose, fuse, hf_snr
from .images import ImageInputError, write_gray8, write_heatmap
from .montecarlo import (McExperiment, check_validity, p2_lower_bound_map, run, save_result,
                         snr_sweep, texture_overlap, unreliable_spatial)
from .scenes import Psf, apply_blur, load_scene, synth_power_law
from .spectral import DomainError

MANIFEST_SCHEMA = 1


class InputError(ValueError):
    """Bad command-line or config input."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


# ---------------------------------------------------------------------------
# helpers

def _default_seed() -> int:
    raw = os.environ.get("SRPAC_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"SRPAC_SEED must be an integer, got {raw!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def _scene(args):
    if args.scene in (None, "powerlaw"):
        return synth_power_law(args.r * args.N, args.eta, args.scene_seed)
    return load_scene(args.scene)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, config: dict, started: float) -> Path:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    man = {
        "schema": MANIFEST_SCHEMA, "tool": "srpac", "version": __version__,
        "command": command, "config": config, "seed": config.get("seed"),
        "outputs": {str(p.relative_to(out)): _digest(p) for p in files},
        "wall_time_s": round(time.time() - started, 3),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(man, indent=1))
    return path


def _config_of(args) -> dict:
    skip = {"func", "config", "out", "threads", "json", "command"}
    cfg = {}
    for k, v in vars(args).items():
        if k in skip:
            continue
        cfg[k] = list(v) if isinstance(v, tuple) else v
    return cfg


def _out_dir(args) -> Path:
    if not args.out:
        raise InputError("--out is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_freq_csv(path: Path, freq_map: np.ndarray, column: str):
    M = freq_map.shape[0]
    f = np.fft.fftfreq(M, 1.0 / M).astype(int)
    order = np.argsort(f)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k0", "k1", column])
        for i in order:
            for j in order:
                v = freq_map[i, j]
                if np.isfinite(v):
                    w.writerow([f[i], f[j], repr(float(v))])


def _bounds_config(args, scene=None) -> BoundsConfig:
    return BoundsConfig(r=args.r, epsilon=args.epsilon, p1=args.p1, P1=args.P1, p2=args.p2,
                        P2=args.P2, eta=args.eta, bias_norm=args.bias, psf=args.psf, N=args.N,
                        seconds_per_frame=args.sec_per_frame, strict=args.strict,
                        scene=scene).validate()


# ---------------------------------------------------------------------------
# commands

def cmd_plan(args) -> int:
    scene = load_scene(args.scene) if args.scene else None
    rep = plan(_bounds_config(args, scene))
    if args.json:
        print(rep.to_json())
    else:
        print(rep.summary())
    if args.out:
        started = time.time()
        out = _out_dir(args)
        (out / "report.json").write_text(rep.to_json())
        _write_manifest(out, "plan", _config_of(args), started)
    return 0


def cmd_table1(args) -> int:
    rows = table1(psf=args.psf, p=args.p, P=args.P, eta=args.eta, N=args.N)
    fields = ["r", "epsilon", "psf", "nd_approx", "nd_alias", "p0", "c2"]
    fmt = lambda v: NR if v is None else v  # noqa: E731
    if args.out:
        started = time.time()
        out = _out_dir(args)
        with (out / "table1.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            for row in rows:
                w.writerow({k: fmt(row[k]) for k in fields})
        _write_manifest(out, "table1", _config_of(args), started)
    print(f"{'r':>2} {'eps':>7} {'approx':>8} {'alias':>8}")
    for row in rows:
        print(f"{row['r']:>2} {row['epsilon']:>7g} {fmt(row['nd_approx'])!s:>8} "
              f"{fmt(row['nd_alias'])!s:>8}")
    return 0


def cmd_simulate(args) -> int:
    started = time.time()
    out = _out_dir(args)
    scene = _scene(args)
    psf = Psf.parse(args.psf, scene.side)
    model = PositioningModel(args.epsilon, args.law, args.sigma, tuple(args.bias_xy), args.seed)
    stack = acquire_stack(scene, psf, args.r, args.nd, model)
    if args.noise > 0:
        stack = add_noise(stack, args.noise, args.seed)
    save_stack(stack, out / "stack")
    fused = fuse(stack)
    z = apply_blur(scene, psf)
    dec = decompose(fused, z, stack)
    np.save(out / "fused.npy", fused.pixels)
    write_gray8(out / "fused.pgm", fused.pixels)
    write_gray8(out / "ground_truth.pgm", z.pixels)
    dec.to_csv(out / "decomposition.csv")
    dec.heatmaps(out / "maps")
    snr = hf_snr(fused, z, "hf")
    summary = {"max_rel_error": dec.max_rel_error(), "hf_snr_db": snr,
               "frames": len(stack), "r": args.r, "n_d": args.nd}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, default=str))
    _write_manifest(out, "simulate", _config_of(args), started)
    print(f"{len(stack)} frames, max relative spectral error {dec.max_rel_error():.3e}, "
          f"HF SNR {snr:.2f} dB")
    return 0


def cmd_verify(args) -> int:
    started = time.time()
    spec = json.loads(Path(args.spec).read_text())
    trials = int(spec.get("trials", 200))
    if trials < 1:
        raise InputError("trials must be >= 1")
    seed = int(spec.get("seed", args.seed))
    scale = float(spec.get("nd_scale", 1.0))
    cells = spec.get("cells")
    if not cells:
        raise InputError("spec needs a non-empty 'cells' list")
    results = []
    for c in cells:
        cell = check_validity(int(c["r"]), float(c["epsilon"]), float(c["p"]), float(c["P"]),
                              trials=trials, seed=seed, eta=float(c.get("eta", 0.0)),
                              N=int(c.get("N", 32)), nd_scale=float(c.get("nd_scale", scale)),
                              threads=args.threads)
        results.append(cell.to_dict())
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[cell.passed]
        emp = "-" if cell.empirical is None else f"{cell.empirical:.3f}+-{cell.stderr:.3f}"
        print(f"{status} r={cell.r} eps={cell.epsilon:g} p={cell.p:g} P={cell.P:g} "
              f"n_d={cell.n_d if cell.n_d is not None else NR} stated={cell.stated:.3f} "
              f"empirical={emp}")
    report = {"trials": trials, "seed": seed, "cells": results,
              "all_passed": all(r["passed"] is not False for r in results)}
    if args.out:
        out = _out_dir(args)
        (out / "verify.json").write_text(json.dumps(report, indent=1))
        cfg = _config_of(args)
        cfg["spec_content"] = spec
        _write_manifest(out, "verify", cfg, started)
    return 0


def cmd_maps(args) -> int:
    started = time.time()
    out = _out_dir(args)
    scene = _scene(args)
    p2 = p2_lower_bound_map(scene, args.epsilon, args.r, args.threshold, args.psf)
    write_heatmap(out / "p2_lower_bound", p2.p0)
    _write_freq_csv(out / "p2_lower_bound.csv", p2.p0, "p0")
    shown = np.where(p2.not_guaranteeable, 0.0, np.nan_to_num(p2.p0))
    write_heatmap(out / "p2_lower_bound_marked", shown)
    cfg = BoundsConfig(r=args.r, epsilon=args.epsilon, p1=args.p, P1=args.P, p2=args.p,
                       P2=args.P, psf=args.psf, scene=scene)
    nds = nd_map(cfg)
    write_heatmap(out / "nd_map", np.log10(nds))
    _write_freq_csv(out / "nd_map.csv", nds, "nd_min")
    info = {"fraction_above_threshold": p2.fraction, "threshold": p2.threshold}
    if args.mc_trials:
        exp = McExperiment(scene=args.scene or "powerlaw", eta=args.eta,
                           scene_seed=args.scene_seed, N=args.N, psf=args.psf, r=args.r,
                           epsilon=args.epsilon, n_d=args.nd, trials=args.mc_trials,
                           seed=args.seed, thresholds=(args.p,))
        res = run(exp, args.threads, scene=scene)
        paths = save_result(res, out / "mc")
        info["mc"] = {k: str(Path(v).relative_to(out)) for k, v in paths.items()}
    (out / "maps.json").write_text(json.dumps(info, indent=1))
    _write_manifest(out, "maps", _config_of(args), started)
    print(f"{100 * p2.fraction:.2f}% of frequencies have p0 > {args.threshold:g}")
    return 0


def cmd_snr(args) -> int:
    started = time.time()
    exp = McExperiment(scene=args.scene or "powerlaw", eta=args.eta, scene_seed=args.scene_seed,
                       N=args.N, psf=args.psf, r=args.r, epsilon=args.epsilon,
                       trials=args.trials, seed=args.seed, thresholds=())
    exp.validate()
    sw = snr_sweep(exp, args.nd, args.threads)
    if args.out:
        out = _out_dir(args)
        with (out / "snr.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n_d", "mean_db", "std_db"])
            for n, m, s in zip(sw.nds, sw.mean, sw.snr.std(axis=1)):
                w.writerow([n, repr(float(m)), repr(float(s))])
        (out / "snr.json").write_text(json.dumps(sw.to_dict(), indent=1))
        _write_manifest(out, "snr", _config_of(args), started)
    for n, m in zip(sw.nds, sw.mean):
        print(f"n_d={n:<5d} HF SNR {m:7.2f} dB")
    print(f"slope {sw.slope:.2f} dB/decade, K {sw.offset_K:.2f} dB")
    return 0


def cmd_localize(args) -> int:
    started = time.time()
    out = _out_dir(args)
    scene = _scene(args)
    band = unreliable_spatial(scene, args.epsilon, args.r, args.nd, args.p, args.prob_threshold,
                              args.mode, args.psf, args.trials, args.seed, args.threads)
    np.save(out / "band.npy", band.image)
    write_gray8(out / "band.pgm", np.clip(128 + band.image * (127 / max(1e-12, np.abs(band.image).max())), 0, 255))
    write_heatmap(out / "mask", band.mask.astype(float), 0.0, 1.0)
    info = {"weight_db": band.weight_db if math.isfinite(band.weight_db) else "-inf",
            "points": band.n_points, "mode": band.mode,
            "texture_overlap": texture_overlap(band.image, scene.pixels)}
    (out / "localize.json").write_text(json.dumps(info, indent=1))
    _write_manifest(out, "localize", _config_of(args), started)
    print(f"{band.n_points} unreliable frequencies, weight {band.weight_db:.2f} dB "
          f"relative to the super-resolved band")
    return 0


def cmd_replay(args) -> int:
    man = json.loads(Path(args.manifest).read_text())
    if man.get("schema") != MANIFEST_SCHEMA:
        raise InputError(f"unsupported manifest schema {man.get('schema')!r}")
    cfg = dict(man["config"])
    cfg.pop("spec_content", None)
    with tempfile.TemporaryDirectory() as tmp:
        argv = [man["command"]]
        for k, v in cfg.items():
            if v is None or v is False:
                continue
            flag = "--" + k.replace("_", "-")
            if v is True:
                argv.append(flag)
            elif isinstance(v, list):
                argv += [flag, ",".join(str(x) for x in v)]
            else:
                argv += [flag, str(v)]
        argv += ["--out", tmp, "--threads", str(args.threads)]
        with open(os.devnull, "w") as sink:
            saved, sys.stdout = sys.stdout, sink
            try:
                dispatch(argv)
            finally:
                sys.stdout = saved
        fresh = json.loads((Path(tmp) / "manifest.json").read_text())["outputs"]
    diffs = sorted(k for k in set(fresh) | set(man["outputs"])
                   if fresh.get(k) != man["outputs"].get(k))
    if diffs:
        print(f"replay differs in {len(diffs)} file(s): {', '.join(diffs[:5])}")
        return 1
    print(f"replay identical ({len(fresh)} files)")
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_common(p, seed=True):
    p.add_argument("--config", help="JSON file whose keys mirror the flags")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker cap (results do not change)")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="base seed (default: $SRPAC_SEED or 0)")


def _add_scene(p):
    p.add_argument("--scene", default=None, help="'powerlaw' or path to an 8-bit PGM/PNG")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--N", type=int, default=32, help="LR side for synthetic scenes")
    p.add_argument("--psf", default="dirac", help="'dirac' or 'gaussian:<sigma HR px>'")
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--epsilon", type=float, default=0.01, help="LR pixels")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="srpac", description="PAC bounds and simulation for interlace fusion")
    ap.add_argument("--version", action="version", version=f"srpac {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("plan", help="frame counts and feasibility for a target accuracy")
    _add_common(p, seed=False)
    _add_scene(p)
    for name, default in (("p1", 0.05), ("P1", 0.95), ("p2", 0.05), ("P2", 0.95)):
        p.add_argument(f"--{name}", type=float, default=default)
    p.add_argument("--bias", type=float, default=0.0, help="mean bias norm, HR pixels")
    p.add_argument("--sec-per-frame", type=float, default=None)
    p.add_argument("--strict", action="store_true", help="keep the cubic remainder")
    p.add_argument("--json", action="store_true", help="print the JSON report")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("table1", help="minimal n_d grid over r and epsilon")
    _add_common(p, seed=False)
    p.add_argument("--psf", default="dirac")
    p.add_argument("--p", type=float, default=0.05)
    p.add_argument("--P", type=float, default=0.95)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--N", type=int, default=32)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("simulate", help="acquire, fuse and decompose one stack")
    _add_common(p)
    _add_scene(p)
    p.add_argument("--nd", type=int, default=1)
    p.add_argument("--law", default="uniform", choices=["uniform", "truncated-gaussian"])
    p.add_argument("--sigma", type=float, default=None, help="truncated-gaussian sigma, HR px")
    p.add_argument("--bias-xy", type=_pair, default=(0.0, 0.0), help="mean error 'b0,b1', HR px")
    p.add_argument("--noise", type=float, default=0.0, help="additive noise sigma, gray levels")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="Monte-Carlo check of the plan guarantees")
    _add_common(p)
    p.add_argument("--spec", required=True, help="experiment spec JSON")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("maps", help="per-frequency p2 lower bound and n_d maps")
    _add_common(p)
    _add_scene(p)
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--P", type=float, default=0.95)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--nd", type=int, default=64)
    p.add_argument("--mc-trials", type=int, default=0, help="also render MC exceedance maps")
    p.set_defaults(func=cmd_maps)

    p = sub.add_parser("snr", help="HF SNR against n_d")
    _add_common(p)
    _add_scene(p)
    p.add_argument("--nd", type=_int_list, default=[1, 2, 4, 8, 16, 32, 64, 128, 256])
    p.add_argument("--trials", type=int, default=50)
    p.set_defaults(func=cmd_snr)

    p = sub.add_parser("localize", help="spatial image of the unreliable frequencies")
    _add_common(p)
    _add_scene(p)
    p.add_argument("--nd", type=int, default=256)
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--prob-threshold", type=float, default=0.1)
    p.add_argument("--mode", default="theory", choices=["theory", "mc"])
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("replay", help="rerun a manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_replay)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = ap.parse_args(argv)
    path = getattr(args, "config", None)
    if path:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        known = set(vars(args))
        unknown = set(cfg) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        sub = ap._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**cfg)
        args = ap.parse_args(argv)
    if hasattr(args, "seed") and args.seed is None:
        args.seed = _default_seed()
    if getattr(args, "threads", 1) < 1:
        raise InputError("--threads must be >= 1")
    return args


def dispatch(argv: list[str]) -> int:
    ap = build_parser()
    args = _apply_config(ap, argv)
    if not getattr(args, "func", None):
        ap.print_help()
        return 2
    return args.func(args)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return dispatch(argv)
    except (InputError, DomainError, ImageInputError, ValueError, OSError, KeyError) as exc:
        kind = type(exc).__name__
        msg = str(exc).replace("\n", " ")
        print(f"srpac: error: {kind}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
