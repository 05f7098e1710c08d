"""Command-line entry point.

Exit codes: 0 when the target ratio is reached, 2 when it is not reached
within the budget, 1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import harness
from .maxcut import InstanceError
from .optimizer import DivergenceError, OptimizerConfig
from .schedule import sparsity_report

EXIT_REACHED = 0
EXIT_ERROR = 1
EXIT_UNREACHED = 2

log = logging.getLogger("qaoa_depth")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _range(text: str) -> tuple[float, float]:
    vals = _float_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH, got {text!r}")
    return vals


def _tol(text: str) -> float:
    val = float(text)
    if math.isnan(val):
        raise argparse.ArgumentTypeError("tol must be a number")
    return val


def read_config_file(path) -> list[str]:
    """Turn ``key=value`` lines into ``--key value`` tokens. ``#`` starts a comment."""
    tokens = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise harness.ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-")
        if value.lower() in ("true", "yes", "on"):
            tokens.append(f"--{key}")
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            tokens += [f"--{key}", value]
    return tokens


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--instance", required=True, help="instance file, or a builtin name (7node, 10node)")
    p.add_argument("--p", type=int, default=7, help="number of layer pairs (depth is 2p)")
    p.add_argument("--eta", type=float, default=0.006)
    lam = p.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float, default=None)
    lam.add_argument("--lambda-grid", type=_float_list, default=None)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--tol", type=_tol, default=1e-6, help="0 disables early stopping")
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--r-star", type=float, default=0.9)
    p.add_argument("--algorithm", choices=("pg", "apg", "gd"), default="apg")
    init = p.add_mutually_exclusive_group()
    init.add_argument("--init", type=float, default=0.3)
    init.add_argument("--init-range", type=_range, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--grad", choices=("fd", "exact"), default="fd")
    p.add_argument("--phase2-total", type=int, default=None)
    p.add_argument("--switch-at", type=int, default=None,
                   help="two-phase: fixed phase-1 length instead of switching at r-star")
    p.add_argument("--allow-unreached", action="store_true",
                   help="two-phase: continue to phase 2 even if phase 1 misses r-star")
    p.add_argument("--allow-revival", action="store_true",
                   help="let coordinates zeroed by the threshold become nonzero again")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qaoa-depth",
        description="L1-regularized control-depth selection for QAOA on weighted Max-Cut.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "single regularized run"),
        ("two-phase", "regularized run, then fixed-support gradient descent"),
        ("sweep", "decreasing lambda grid; select the first lambda reaching r-star"),
        ("ensemble", "random-initialization replicas"),
        ("depth-scan", "final statistics versus initial depth"),
    ):
        sp = sub.add_parser(name, help=help_)
        _common(sp)
        if name == "depth-scan":
            sp.add_argument("--depths", type=_int_list, required=True, help="comma-separated even depths")
    op = sub.add_parser("oracle", help="exhaustive spectrum of an instance")
    op.add_argument("--config")
    op.add_argument("--instance", required=True)
    op.add_argument("-v", "--verbose", action="store_true")
    return parser


def _expand_config(argv: list[str]) -> list[str]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or not argv:
        return argv
    return argv[:1] + read_config_file(known.config) + argv[1:]


def spec_from_args(args) -> harness.ExperimentSpec:
    lam = args.lam if args.lam is not None else 0.0
    config = OptimizerConfig(
        eta=args.eta,
        lam=lam,
        epsilon=args.epsilon,
        tol=args.tol,
        q=args.q,
        max_iters=args.max_iters,
        algorithm=args.algorithm,
        r_star=args.r_star,
        gradient=args.grad,
        freeze_zeros=not args.allow_revival,
    )
    return harness.ExperimentSpec(
        instance=args.instance,
        config=config,
        p=args.p,
        lambda_grid=args.lambda_grid,
        init=args.init,
        init_range=args.init_range,
        seed=args.seed,
        replicas=args.replicas,
        phase2_total_iters=args.phase2_total,
        switch_at=args.switch_at,
        allow_unreached=args.allow_unreached,
        workers=args.workers,
        out=args.out,
        fmt=args.fmt,
    )


def _summary_line(label: str, result) -> str:
    rep = sparsity_report(result.schedule)
    return (
        f"{label}: iterations={result.final.k} final_r={result.final.r:.6f} "
        f"active_depth={rep.active_depth} op_count={rep.op_count} l1_length={rep.l1_length:.6f} "
        f"first_hit={result.first_hit_iteration}"
    )


def _cmd_solve(spec) -> int:
    result = harness.run_single(spec)
    print(_summary_line(f"{spec.config.algorithm.value} lambda={spec.config.lam:g}", result))
    return EXIT_REACHED if result.reached_target else EXIT_UNREACHED


def _cmd_two_phase(spec) -> int:
    try:
        res = harness.run_two_phase(spec)
    except harness.PhaseOneUnreached as exc:
        print(f"phase 1 missed the target: {exc}", file=sys.stderr)
        if spec.out is not None:
            harness.write_trace(spec.out, exc.phase1.trace, spec.fmt)
        return EXIT_UNREACHED
    rep = sparsity_report(res.schedule)
    print(
        f"switch at iteration {res.switch_iteration}; final iteration {res.final.k} "
        f"r={res.final.r:.6f} active_depth={rep.active_depth} op_count={rep.op_count} "
        f"l1_length={rep.l1_length:.6f}"
    )
    return EXIT_REACHED if res.final.r >= spec.config.r_star else EXIT_UNREACHED


def _cmd_sweep(spec) -> int:
    report = harness.run_sweep(spec)
    for lam, res in report.rejected:
        print(_summary_line(f"rejected lambda={lam:g}", res))
    if not report.found:
        print("no lambda in the grid reached the target")
        return EXIT_UNREACHED
    print(_summary_line(f"selected lambda={report.selected_lambda:g}", report.selected))
    return EXIT_REACHED


def _cmd_ensemble(spec) -> int:
    if spec.init_range is None:
        raise harness.ConfigError("ensemble needs --init-range LOW,HIGH")
    summary = harness.run_random_init_ensemble(spec)
    last = len(summary.mean_r) - 1
    print(
        f"replicas={summary.replicas} failed={summary.failed} "
        f"iteration {last}: mean_r={summary.mean_r[-1]:.6f} std_r={summary.std_r[-1]:.6f}"
    )
    return EXIT_REACHED if summary.mean_r[-1] >= spec.config.r_star else EXIT_UNREACHED


def _cmd_depth_scan(spec, depths) -> int:
    rows = harness.run_depth_scan(spec, depths)
    print("initial_depth lambda final_r final_depth final_length hit_iter hit_depth hit_length")
    for r in rows:
        hit_len = "-" if r.hit_length is None else f"{r.hit_length:.5f}"
        print(
            f"{r.initial_depth} {r.lam:g} {r.final_r:.4f} {r.final_depth} {r.final_length:.5f} "
            f"{'-' if r.hit_iteration is None else r.hit_iteration} "
            f"{'-' if r.hit_depth is None else r.hit_depth} {hit_len}"
        )
    return EXIT_REACHED if all(r.hit_iteration is not None for r in rows) else EXIT_UNREACHED


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _expand_config(argv)
    except (OSError, harness.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_REACHED
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "oracle":
            graph, spectrum = harness.oracle(args.instance)
            print(harness.format_oracle(graph, spectrum))
            return EXIT_REACHED
        spec = spec_from_args(args)
        if args.command == "solve":
            return _cmd_solve(spec)
        if args.command == "two-phase":
            return _cmd_two_phase(spec)
        if args.command == "sweep":
            return _cmd_sweep(spec)
        if args.command == "ensemble":
            return _cmd_ensemble(spec)
        if args.command == "depth-scan":
            return _cmd_depth_scan(spec, args.depths)
    except DivergenceError as exc:
        print(f"error: run diverged: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, InstanceError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
