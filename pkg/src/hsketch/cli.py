"""Command-line driver: gen, lowrank, regress, eval.

Exit codes: 0 on success, 1 on validation errors (bad flags, malformed
input), 2 on runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .lowrank import FactorL, build_factor
from .regression import RegressionInstance, sample_schedule, solve
from .sampler import SamplerConfig, parse_provider, practical_config, read_config
from .stream_io import StreamFormatError, generate_synthetic, read_stream, save_stream
from .transform import TransformSpec

METRICS_VERSION = 1
METRIC_COLUMNS = [
    "version", "command", "n", "k", "s", "m", "epsilon", "seed",
    "passes", "space_fraction", "error_ratio", "wall_time_s",
]
SIZING_FLAGS = ("width0", "width", "reps", "groups", "budget", "j0", "population")


class ValidationError(Exception):
    pass


def _settings(args) -> dict:
    """Config file values, overridden by flags given on the command line."""
    out = {"epsilon": 0.1, "K": 1.0, "delta": 0.1, "seed": 0, "provider": "exact", "kappa": None}
    if getattr(args, "config", None):
        out.update(read_config(args.config))
    for key in ("epsilon", "seed", "provider", "K", "delta"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    name, kappa = parse_provider(out["provider"])
    if out["kappa"] is not None and name == "fixed_factor" and ":" not in out["provider"]:
        kappa = out["kappa"]
    out["provider_name"], out["kappa"] = name, kappa
    if out["K"] < kappa:
        out["K"] = kappa
    return out


def _sizing(args) -> dict:
    out = {}
    for name in SIZING_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            out["level_population" if name == "population" else name] = value
    return out


def _metrics_path(args, suffix: str) -> Path:
    if args.metrics:
        return Path(args.metrics)
    return Path(str(args.output) + suffix)


def _append_metrics(path: Path, row: dict) -> None:
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        if new:
            writer.writeheader()
        writer.writerow(row)


def cmd_gen(args) -> int:
    corpus = generate_synthetic(args.n, args.seed if args.seed is not None else 0, args.zipf)
    save_stream(corpus.stream, args.output)
    print(f"wrote {len(corpus.stream)} updates for a {args.n} x {args.n} matrix to {args.output}")
    return 0


def cmd_lowrank(args) -> int:
    opts = _settings(args)
    stream = read_stream(args.input)
    if stream.header.b_column:
        raise ValidationError("low-rank input must not carry a b column")
    n_items = stream.header.n_cols
    sizing = {"width0": min(n_items, 64), "reps": 3, "groups": 1, "budget": 256}
    sizing.update(_sizing(args))
    config = SamplerConfig(n=n_items, dim=stream.header.n, epsilon=opts["epsilon"], K=opts["K"], delta=opts["delta"], **sizing)
    run = build_factor(
        stream, config, args.s, args.k, m=args.m, seed=opts["seed"],
        provider=opts["provider_name"], kappa=opts["kappa"], passes=args.passes,
    )
    run.factor.to_csv(args.output)
    n, d = stream.shape
    ratio = float("nan")
    if n * d <= oracle.DENSE_LIMIT:
        ratio = oracle.error_ratio(run.factor.columns, stream.dense(), args.k, TransformSpec(eta=stream.eta)).ratio
    row = {
        "version": METRICS_VERSION, "command": "lowrank", "n": n, "k": args.k, "s": args.s,
        "m": args.m, "epsilon": opts["epsilon"], "seed": opts["seed"], "passes": args.passes,
        "space_fraction": repr(run.sketch_bytes / (8.0 * n * d)), "error_ratio": repr(ratio),
        "wall_time_s": f"{run.wall_time:.6f}",
    }
    _append_metrics(_metrics_path(args, ".metrics.csv"), row)
    print(f"e(L) = {ratio:.6f}  space fraction = {run.sketch_bytes / (8.0 * n * d):.4f}")
    return 0


def cmd_regress(args) -> int:
    opts = _settings(args)
    stream = read_stream(args.input)
    if not stream.header.b_column:
        raise ValidationError(f"{args.input}: header has no 'b' flag, so there is no regression target")
    instance = RegressionInstance(stream)
    a, b = instance.dense()
    transform = TransformSpec(eta=stream.eta)
    fa = transform.apply(a)
    sv = np.linalg.svd(fa, compute_uv=False)
    kappa = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    s = args.s
    if s is None:
        if not math.isfinite(kappa):
            raise ValidationError("f(A) is rank deficient; pass --s explicitly")
        s = sample_schedule(instance.d, max(kappa, 1.0), opts["epsilon"], opts["delta"])
    sampler_eps = min(opts["epsilon"], 0.1)
    config = practical_config(
        instance.n, dim=instance.d + 1, epsilon=sampler_eps, K=opts["K"], delta=opts["delta"], **_sizing(args)
    )
    sol = solve(instance, config, s, seed=opts["seed"], m=args.m, provider=opts["provider_name"], kappa=opts["kappa"])
    np.savetxt(args.output, sol.x, fmt="%.17g")
    _, opt = oracle.exact_least_squares(a, b, transform)
    metrics = {
        "sampled_residual": repr(sol.sampled_residual),
        "oracle_residual": repr(float(np.linalg.norm(fa @ sol.x - b))),
        "opt_residual": repr(opt),
        "epsilon": repr(opts["epsilon"]),
        "s": str(s),
        "kappa": repr(kappa),
        "degenerate": str(sol.degenerate).lower(),
    }
    with open(_metrics_path(args, ".metrics"), "w", encoding="utf-8") as fh:
        fh.writelines(f"{key}={value}\n" for key, value in metrics.items())
    print(" ".join(f"{key}={value}" for key, value in metrics.items()))
    return 0


def cmd_eval(args) -> int:
    factor = FactorL.from_csv(args.factor)
    if not factor.is_orthonormal():
        print("warning: factor columns are not orthonormal; applying Gram-Schmidt", file=sys.stderr)
        factor = factor.orthonormalized()
    stream = read_stream(args.input)
    a = stream.dense()
    if factor.n != a.shape[0]:
        raise ValidationError(f"factor has {factor.n} rows but the matrix has {a.shape[0]}")
    transform = TransformSpec(eta=stream.eta)
    best = oracle.best_rank_k(a, args.k, transform)
    er = oracle.error_ratio(factor.columns, a, args.k, transform, best=best)
    print(f"error_ratio={er.ratio!r}")
    print(f"numerator={er.numerator!r}")
    print(f"denominator={er.denominator!r}")
    print(f"best_rank_k_residual2={best.residual2!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsketch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        p.add_argument("--seed", type=int)
        p.add_argument("--config", help="key=value file (epsilon, K, delta, seed, provider, kappa)")
        if output:
            p.add_argument("--output", required=True)

    def sizing(p):
        for name in SIZING_FLAGS:
            kind = float if name == "population" else int
            p.add_argument(f"--{name}", type=kind, help="sampler sizing override")

    p = sub.add_parser("gen", help="write a synthetic co-occurrence stream")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--zipf", type=float, default=1.0)
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("lowrank", help="one- or two-pass rank-k factor")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--s", type=int, default=400)
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--passes", type=int, choices=(1, 2), default=1)
    p.add_argument("--provider", help="exact or fixed:<kappa>")
    p.add_argument("--metrics", help="metrics CSV (default: OUTPUT.metrics.csv, appended)")
    common(p)
    sizing(p)
    p.set_defaults(func=cmd_lowrank)

    p = sub.add_parser("regress", help="sampled least squares on a stream with a b column")
    p.add_argument("--input", required=True)
    p.add_argument("--s", type=int, help="sample count (default: schedule from the exact condition number)")
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--provider", help="exact or fixed:<kappa>")
    p.add_argument("--metrics", help="key=value metrics file (default: OUTPUT.metrics)")
    common(p)
    sizing(p)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("eval", help="error ratio of a factor against the exact matrix")
    p.add_argument("--factor", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (ValidationError, StreamFormatError, ValueError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report, do not crash with a traceback
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        if os.environ.get("HSKETCH_TRACEBACK"):
            raise
        return 2


if __name__ == "__main__":
    sys.exit(main())
