"""Command-line harness: one subcommand per experiment, CSV plus manifest output.

Exit codes: 0 success, 2 validation error, 3 numeric check failure, 130 interrupted.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from .experiments import (EXPERIMENTS, ConfigError, ExperimentConfig, ExperimentRecord, parse_float_list,
                          parse_int_list, run_experiment)

OUTPUT_ENV = "KACLAB_OUTPUT_DIR"
DEFAULT_OUT = "kaclab-out"
CORE_KEYS = {"seed", "N", "replicas", "times", "kernel", "f", "samples", "out"}


def format_field(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return format(x, ".17g")
    if hasattr(x, "dtype"):
        return format_field(x.item())
    return str(x)


def emit_csv(record: ExperimentRecord, path) -> Path:
    path = Path(path)
    lines = [",".join(record.header)]
    lines += [",".join(format_field(x) for x in row) for row in record.rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Parse a file written by emit_csv; numeric fields become floats (ints stay ints)."""
    with open(path, encoding="utf-8") as fh:
        header, *body = fh.read().splitlines()

    def conv(s):
        try:
            return int(s)
        except ValueError:
            try:
                return float(s)
            except ValueError:
                return s

    return header.split(","), [[conv(s) for s in line.split(",")] for line in body]


def write_manifest(path, cfg: ExperimentConfig, record: ExperimentRecord | None, wall: float, status: str,
                   argv) -> Path:
    path = Path(path)
    lines = [
        f"experiment = {cfg.name}",
        f"status = {status}",
        f"code_version = kaclab {__version__}",
        f"python = {sys.version.split()[0]}",
        f"wall_time_s = {wall:.3f}",
        f"argv = {' '.join(argv)}",
        f"seed = {cfg.seed}",
        f"N = {cfg.N}",
        f"replicas = {cfg.replicas}",
        f"times = {cfg.times}",
        f"kernel = {cfg.kernel}",
        f"f = {cfg.density}",
        f"samples = {cfg.samples}",
    ]
    lines += [f"param.{k} = {v}" for k, v in sorted(cfg.params.items())]
    if record is not None:
        lines += [f"check.{k} = {'pass' if v else 'FAIL'}" for k, v in record.checks.items()]
        lines += [f"note = {n}" for n in record.notes]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_config_file(path) -> dict:
    """Plain key = value lines; '#' starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        k, v = (x.strip() for x in line.split("=", 1))
        out[k] = v
    return out


def _epilog(name):
    return f"CSV columns: {EXPERIMENTS[name][1]}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kaclab", description="Kac walk experiments. Each subcommand writes "
                                "<out>/<name>.csv and <out>/<name>.manifest.txt.",
                                formatter_class=argparse.RawDescriptionHelpFormatter,
                                epilog="\n".join(f"{k}: {v[1]}" for k, v in EXPERIMENTS.items()))
    p.add_argument("--version", action="version", version=f"kaclab {__version__}")
    sub = p.add_subparsers(dest="experiment", metavar="EXPERIMENT")
    for name, (fn, _) in EXPERIMENTS.items():
        s = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else name,
                           description=fn.__doc__, epilog=_epilog(name))
        s.add_argument("--seed", type=int, help="master seed (required, here or in --config)")
        s.add_argument("--N", help="particle numbers: '3..8' or '100,500'")
        s.add_argument("--replicas", type=int)
        s.add_argument("--times", help="'0,0.5,1' or 'start:stop:step'")
        s.add_argument("--kernel", help="uniform | cos2 | one_plus_cos | bump:<c>:<w> | small_angle:<w>")
        s.add_argument("--f", dest="f", help="gaussian[:var] | fdelta:<delta> | bimodal:<var>")
        s.add_argument("--samples", type=int)
        s.add_argument("--out", help=f"output directory (overrides ${OUTPUT_ENV})")
        s.add_argument("--config", help="key = value file; command-line flags win")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="experiment parameter, e.g. eps=0.1, deltas=0.2,0.1, beta=0.1")
    return p


def resolve_config(args) -> tuple[ExperimentConfig, Path]:
    values = read_config_file(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    for k in CORE_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = str(v)
    if "seed" not in values:
        raise ConfigError("--seed is required")
    try:
        seed = int(values["seed"])
        cfg = ExperimentConfig(
            name=args.experiment,
            seed=seed,
            N=parse_int_list(values["N"]) if "N" in values else None,
            replicas=int(values["replicas"]) if "replicas" in values else None,
            times=parse_float_list(values["times"]) if "times" in values else None,
            kernel=values.get("kernel", "uniform"),
            density=values.get("f"),
            samples=int(values["samples"]) if "samples" in values else None,
            params={k: v for k, v in values.items() if k not in CORE_KEYS},
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    out = values.get("out") or os.environ.get(OUTPUT_ENV) or DEFAULT_OUT
    return cfg, Path(out)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.experiment is None:
        parser.print_help()
        return 2
    try:
        cfg, out = resolve_config(args)
    except ConfigError as exc:
        print(f"kaclab: error: {exc}", file=sys.stderr)
        return 2
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.name}.csv"
    man_path = out / f"{cfg.name}.manifest.txt"
    t0 = time.perf_counter()
    try:
        record = run_experiment(cfg)
    except ConfigError as exc:
        print(f"kaclab: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        header = EXPERIMENTS[cfg.name][1].split(" (")[0].split(",")
        partial = ExperimentRecord(cfg.name, header, list(cfg.partial_rows), {}, cfg)
        emit_csv(partial, csv_path)
        write_manifest(man_path, cfg, partial, time.perf_counter() - t0, "interrupted", argv)
        print(f"kaclab: interrupted; {len(partial.rows)} rows written to {csv_path}", file=sys.stderr)
        return 130
    wall = time.perf_counter() - t0
    emit_csv(record, csv_path)
    status = "pass" if record.passed else "check-failed"
    write_manifest(man_path, cfg, record, wall, status, argv)
    for k, v in record.checks.items():
        print(f"{cfg.name}: {k}: {'pass' if v else 'FAIL'}")
    for n in record.notes:
        print(f"{cfg.name}: {n}")
    print(f"{cfg.name}: wrote {csv_path} ({wall:.1f} s)")
    return 0 if record.passed else 3


if __name__ == "__main__":
    sys.exit(main())
