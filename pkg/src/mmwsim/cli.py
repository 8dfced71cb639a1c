"""Command-line front end: `estimate`, `design` and `selftest` subcommands.

Every run resolves its configuration, writes a manifest first, then the
results CSV and a JSON mirror embedding the full config. Reruns with the
same seed produce byte-identical result files; a manifest file can be passed
back in place of a config to reproduce a run.
"""

import argparse
import json
import os
import sys
import time
from importlib import metadata
from pathlib import Path

from .config import ConfigError, SystemConfig, load_config
from .harness import (
    DESIGN_METHODS,
    ESTIMATION_METHODS,
    normalize_method,
    run_experiment,
)

EXIT_USAGE = 2

DEFAULT_SWEEPS = {
    "snr": [-10.0, -5.0, 0.0, 5.0],
    "frames": [20, 40, 60, 80],
}


def _tool_version():
    try:
        return metadata.version("mmwsim")
    except metadata.PackageNotFoundError:
        return "unknown"


def _out_dir(arg):
    base = arg or os.environ.get("MMWSIM_OUTDIR") or "results"
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve_config(path, seed=None, grid=None):
    """Load a config file, accepting a previously written manifest too."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if isinstance(raw, dict) and "config" in raw and "command" in raw:
        cfg = SystemConfig.from_dict(raw["config"])
    else:
        cfg = load_config(path)
    if seed is not None:
        cfg = cfg.with_(seed=seed)
    if grid is not None:
        cfg = cfg.with_(grid_mode="on_grid" if grid == "on" else "off_grid")
    return cfg


def _write_manifest(out_dir, name, payload):
    path = out_dir / name
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_results(out_dir, stem, result):
    csv_path = out_dir / f"{stem}.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.to_csv())
    json_path = out_dir / f"{stem}.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def _parse_values(text, sweep):
    if text is None:
        if sweep == "rfchains":
            raise ConfigError("--sweep rfchains needs explicit --values")
        return list(DEFAULT_SWEEPS[sweep])
    vals = [float(v) for v in text.split(",") if v]
    if sweep in ("frames", "rfchains"):
        vals = [int(v) for v in vals]
    return vals


def cmd_estimate(args):
    cfg = _resolve_config(args.config, args.seed, args.grid)
    cfg.check_estimation_grids()
    methods = {
        "ul": ["ul-nmse", "crlb-ul"],
        "dl": ["dl-nmse", "crlb-dl"],
        "both": ["ul-nmse", "dl-nmse", "crlb-ul", "crlb-dl"],
    }[args.mode]
    values = _parse_values(args.values, args.sweep)
    out_dir = _out_dir(args.out)
    started = time.time()
    manifest = {
        "command": "estimate",
        "config": cfg.to_dict(),
        "methods": methods,
        "sweep": {"var": args.sweep, "values": values},
        "trials": args.trials,
        "seed": cfg.seed,
        "outputs": {"csv": "estimate.csv", "json": "estimate.json"},
        "version": _tool_version(),
        "wall_clock_s": None,
    }
    _write_manifest(out_dir, "estimate_manifest.json", manifest)
    result = run_experiment(cfg, args.sweep, values, methods,
                            trials=args.trials, workers=args.workers)
    csv_path, _ = _write_results(out_dir, "estimate", result)
    manifest["wall_clock_s"] = round(time.time() - started, 3)
    _write_manifest(out_dir, "estimate_manifest.json", manifest)
    print(f"wrote {csv_path}")
    return 0


def cmd_design(args):
    cfg = _resolve_config(args.config, args.seed, args.grid)
    try:
        methods = [
            normalize_method(m.strip(), default_csi=args.csi)
            for m in args.methods.split(",") if m.strip()
        ]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not methods:
        raise ConfigError("--methods must name at least one method")
    if any(m.endswith(":estimated") for m in methods):
        cfg.check_estimation_grids()
    if args.sweep == "rfchains" and args.values is None:
        step = max(cfg.n_users * cfg.n_streams, 1)
        values = sorted({step, 2 * step, cfg.n_bs // 2, cfg.n_bs})
    else:
        values = _parse_values(args.values, args.sweep)
    out_dir = _out_dir(args.out)
    started = time.time()
    manifest = {
        "command": "design",
        "config": cfg.to_dict(),
        "methods": methods,
        "sweep": {"var": args.sweep, "values": values},
        "trials": args.trials,
        "seed": cfg.seed,
        "outputs": {"csv": "design.csv", "json": "design.json"},
        "version": _tool_version(),
        "wall_clock_s": None,
    }
    _write_manifest(out_dir, "design_manifest.json", manifest)
    result = run_experiment(cfg, args.sweep, values, methods,
                            trials=args.trials, workers=args.workers,
                            collect_traces=args.trace)
    csv_path, _ = _write_results(out_dir, "design", result)
    if args.trace:
        for (method, value), trace in sorted(result.traces.items()):
            name = f"trace_{method.replace(':', '_')}_{value}.csv"
            with open(out_dir / name, "w", encoding="utf-8") as fh:
                fh.write(trace.to_csv())
    manifest["wall_clock_s"] = round(time.time() - started, 3)
    _write_manifest(out_dir, "design_manifest.json", manifest)
    print(f"wrote {csv_path}")
    return 0


def cmd_selftest(_args):
    from .selftest import run_selftest

    failures = run_selftest()
    return 1 if failures else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmwsim",
        description="Multiuser mmWave MIMO estimation and hybrid design "
                    "experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="NMSE / CRLB estimation sweeps")
    est.add_argument("config", help="JSON config file (or a run manifest)")
    est.add_argument("--sweep", choices=["snr", "frames"], default="snr")
    est.add_argument("--mode", choices=["ul", "dl", "both"], default="both")
    est.add_argument("--grid", choices=["on", "off"], default=None)
    est.add_argument("--seed", type=int, default=None)
    est.add_argument("--out", default=None, help="output directory "
                     "(default $MMWSIM_OUTDIR or ./results)")
    est.add_argument("--trials", type=int, default=50)
    est.add_argument("--values", default=None,
                     help="comma-separated sweep values")
    est.add_argument("--workers", type=int, default=1)
    est.set_defaults(func=cmd_estimate)

    des = sub.add_parser("design", help="sum-rate sweeps for filter designs")
    des.add_argument("config", help="JSON config file (or a run manifest)")
    des.add_argument("--methods", required=True,
                     help="comma list from: " +
                     ", ".join(DESIGN_METHODS + ESTIMATION_METHODS))
    des.add_argument("--csi", choices=["perfect", "estimated"],
                     default="perfect")
    des.add_argument("--sweep", choices=["snr", "rfchains"], default="snr")
    des.add_argument("--grid", choices=["on", "off"], default=None)
    des.add_argument("--trace", action="store_true",
                     help="write factorization distortion traces")
    des.add_argument("--seed", type=int, default=None)
    des.add_argument("--out", default=None)
    des.add_argument("--trials", type=int, default=50)
    des.add_argument("--values", default=None)
    des.add_argument("--workers", type=int, default=1)
    des.set_defaults(func=cmd_design)

    st = sub.add_parser("selftest", help="run the fast invariant suite")
    st.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
