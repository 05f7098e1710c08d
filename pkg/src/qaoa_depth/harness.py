"""Experiment drivers and trace files.

Trace CSV columns are fixed::

    iter,phase,f,F,r,active_depth,l1_length,evals,accepted_extrapolation

Floats are written with ``repr`` so a trace parses back to identical records.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .maxcut import SpectrumSummary, WeightedGraph, brute_force_extrema, diagonal_energies, load_instance
from .maxcut import BUILTIN_INSTANCES, builtin_instance_path
from .optimizer import (
    DivergenceError,
    EnergyEvaluator,
    IterateRecord,
    OptimizerConfig,
    RunResult,
    SweepReport,
    lambda_sweep,
    refine_fixed_support,
    run_algorithm,
)
from .schedule import ControlSchedule, merged_operations, sparsity_report

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "iter",
    "phase",
    "f",
    "F",
    "r",
    "active_depth",
    "l1_length",
    "evals",
    "accepted_extrapolation",
)


class ConfigError(ValueError):
    pass


class PhaseOneUnreached(RuntimeError):
    def __init__(self, message: str, phase1: RunResult):
        super().__init__(message)
        self.phase1 = phase1


# ----------------------------------------------------------------- traces


def record_to_row(rec: IterateRecord) -> list[str]:
    return [
        str(rec.k),
        str(rec.phase),
        repr(rec.f),
        repr(rec.F),
        repr(rec.r),
        str(rec.active_depth),
        repr(rec.l1_length),
        str(rec.evals),
        "1" if rec.accepted_extrapolation else "0",
    ]


def row_to_record(row: dict) -> IterateRecord:
    return IterateRecord(
        k=int(row["iter"]),
        f=float(row["f"]),
        F=float(row["F"]),
        r=float(row["r"]),
        active_depth=int(row["active_depth"]),
        l1_length=float(row["l1_length"]),
        evals=int(row["evals"]),
        accepted_extrapolation=row["accepted_extrapolation"] in ("1", "true", "True"),
        phase=int(row["phase"]),
    )


def record_to_dict(rec: IterateRecord) -> dict:
    return {
        "iter": rec.k,
        "phase": rec.phase,
        "f": rec.f,
        "F": rec.F,
        "r": rec.r,
        "active_depth": rec.active_depth,
        "l1_length": rec.l1_length,
        "evals": rec.evals,
        "accepted_extrapolation": rec.accepted_extrapolation,
    }


def dict_to_record(d: dict) -> IterateRecord:
    return IterateRecord(
        k=int(d["iter"]),
        f=float(d["f"]),
        F=float(d["F"]),
        r=float(d["r"]),
        active_depth=int(d["active_depth"]),
        l1_length=float(d["l1_length"]),
        evals=int(d["evals"]),
        accepted_extrapolation=bool(d["accepted_extrapolation"]),
        phase=int(d["phase"]),
    )


class TraceWriter:
    """Append-only CSV trace; every record is flushed as it arrives."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(TRACE_COLUMNS)
        self._fh.flush()

    def __call__(self, rec: IterateRecord) -> None:
        self._w.writerow(record_to_row(rec))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def trace_to_csv(trace: Sequence[IterateRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for rec in trace:
        w.writerow(record_to_row(rec))
    return buf.getvalue()


def parse_trace_csv(text: str) -> list[IterateRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace header {reader.fieldnames}")
    return [row_to_record(row) for row in reader]


def write_trace(path, trace: Sequence[IterateRecord], fmt: str = "csv", extra: dict | None = None) -> None:
    path = Path(path)
    if fmt == "csv":
        path.write_text(trace_to_csv(trace), encoding="utf-8")
    elif fmt == "json":
        doc = dict(extra or {})
        doc["trace"] = [record_to_dict(r) for r in trace]
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    else:
        raise ConfigError(f"unknown output format {fmt!r}")


def read_trace(path) -> list[IterateRecord]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return [dict_to_record(d) for d in json.loads(text)["trace"]]
    return parse_trace_csv(text)


# ------------------------------------------------------------ experiments


@dataclass(frozen=True)
class ExperimentSpec:
    instance: str
    config: OptimizerConfig = field(default_factory=OptimizerConfig)
    p: int = 7
    lambda_grid: tuple[float, ...] | None = None
    init: float = 0.3
    init_range: tuple[float, float] | None = None
    seed: int = 0
    replicas: int | None = None
    phase2_total_iters: int | None = None
    switch_at: int | None = None
    allow_unreached: bool = False
    workers: int = 1
    out: str | None = None
    fmt: str = "csv"

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError(f"p must be >= 1, got {self.p}")
        if self.replicas is not None and self.replicas < 1:
            raise ConfigError(f"replicas must be >= 1, got {self.replicas}")
        if self.lambda_grid is not None and len(self.lambda_grid) == 0:
            raise ConfigError("lambda grid is empty")
        if self.init_range is not None and not self.init_range[0] <= self.init_range[1]:
            raise ConfigError(f"init range low > high: {self.init_range}")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.fmt!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    def with_(self, **changes) -> "ExperimentSpec":
        return replace(self, **changes)


def resolve_instance(name_or_path) -> WeightedGraph:
    path = Path(name_or_path)
    if not path.exists() and str(name_or_path) in BUILTIN_INSTANCES:
        path = builtin_instance_path(str(name_or_path))
    return load_instance(path)


def make_evaluator(spec: ExperimentSpec) -> EnergyEvaluator:
    return EnergyEvaluator(diagonal_energies(resolve_instance(spec.instance)))


def initial_vector(spec: ExperimentSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    if spec.init_range is None:
        return np.full(2 * spec.p, float(spec.init))
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    low, high = spec.init_range
    return rng.uniform(low, high, size=2 * spec.p)


def _run_meta(spec: ExperimentSpec, result: RunResult) -> dict:
    report = sparsity_report(result.schedule)
    return {
        "instance": str(spec.instance),
        "algorithm": result.algorithm.value,
        "lambda": result.lam,
        "r_star": result.r_star,
        "first_hit_iteration": result.first_hit_iteration,
        "converged_early": result.converged_early,
        "final_active_depth": report.active_depth,
        "final_op_count": report.op_count,
        "final_l1_length": report.l1_length,
        "max_abs_angle": report.max_abs,
        "schedule": result.schedule.to_dict(),
    }


def run_single(spec: ExperimentSpec) -> RunResult:
    """One optimization run. Streams CSV rows to ``spec.out`` when set.

    On divergence the partial trace stays on disk and the error propagates.
    """
    ev = make_evaluator(spec)
    x0 = initial_vector(spec)
    if spec.out is not None and spec.fmt == "csv":
        with TraceWriter(spec.out) as writer:
            return run_algorithm(spec.config, ev, x0, on_record=writer)
    try:
        result = run_algorithm(spec.config, ev, x0)
    except DivergenceError as exc:
        if spec.out is not None:
            write_trace(spec.out, exc.partial.trace, spec.fmt)
        raise
    if spec.out is not None:
        write_trace(spec.out, result.trace, spec.fmt, extra=_run_meta(spec, result))
    return result


@dataclass
class TwoPhaseResult:
    phase1: RunResult
    phase2: RunResult | None
    trace: list[IterateRecord]
    schedule: ControlSchedule
    switch_iteration: int

    @property
    def final(self) -> IterateRecord:
        return self.trace[-1]

    @property
    def first_hit_iteration(self):
        return self.phase1.first_hit_iteration


def run_two_phase(spec: ExperimentSpec, evaluator: EnergyEvaluator | None = None) -> TwoPhaseResult:
    """Regularized phase followed by fixed-support gradient descent.

    Phase 1 stops at the first record with ``r >= r_star`` or, when
    ``spec.switch_at`` is set, after exactly that many iterations. Phase 2
    runs until ``phase2_total_iters`` iterations in total.
    """
    if spec.phase2_total_iters is None:
        raise ConfigError("two-phase runs need phase2_total_iters")
    total = spec.phase2_total_iters
    ev = evaluator if evaluator is not None else make_evaluator(spec)
    x0 = initial_vector(spec)
    if spec.switch_at is not None:
        cfg1 = spec.config.with_(max_iters=min(spec.switch_at, total), stop_on_target=False, tol=0.0)
    else:
        cfg1 = spec.config.with_(max_iters=min(spec.config.max_iters, total), stop_on_target=True)
    phase1 = run_algorithm(cfg1, ev, x0)
    if spec.switch_at is None and not phase1.reached_target and not spec.allow_unreached:
        raise PhaseOneUnreached(
            f"phase 1 did not reach r >= {cfg1.r_star} within {cfg1.max_iters} iterations "
            f"(best r = {max(t.r for t in phase1.trace):.6f})",
            phase1,
        )
    switch = phase1.final.k
    remaining = max(0, total - switch)
    ev_offset = phase1.final.evals
    trace = list(phase1.trace)
    phase2 = None
    schedule = phase1.schedule
    if remaining > 0:
        phase2 = refine_fixed_support(
            phase1.schedule.packed(), ev, spec.config.eta, remaining, spec.config, k_offset=switch
        )
        trace.extend(replace(rec, evals=rec.evals + ev_offset) for rec in phase2.trace[1:])
        schedule = phase2.schedule
    result = TwoPhaseResult(phase1, phase2, trace, schedule, switch)
    if spec.out is not None:
        write_trace(spec.out, trace, spec.fmt)
        sidecar = Path(spec.out).with_suffix(".schedule.json")
        sidecar.write_text(json.dumps(schedule_sidecar(schedule), indent=1) + "\n", encoding="utf-8")
    return result


def schedule_sidecar(schedule: ControlSchedule) -> dict:
    ops = merged_operations(schedule)
    report = sparsity_report(schedule)
    return {
        "schedule": schedule.to_dict(),
        "active_depth": report.active_depth,
        "op_count": report.op_count,
        "l1_length": report.l1_length,
        "operations": [
            {"generator": gen, "angle": angle, "length": abs(angle)} for gen, angle in ops
        ],
    }


@dataclass
class EnsembleSummary:
    mean_r: np.ndarray
    std_r: np.ndarray
    replicas: int
    failed: int = 0
    initial_vectors: np.ndarray | None = None
    r_traces: np.ndarray | None = None


def _replica_job(args):
    spec, x0 = args
    ev = make_evaluator(spec)
    try:
        res = run_algorithm(spec.config, ev, x0)
    except DivergenceError as exc:
        log.warning("replica diverged: %s", exc)
        return None
    return [rec.r for rec in res.trace]


def replica_initials(spec: ExperimentSpec, replica_seeds: Sequence[int] | None = None) -> np.ndarray:
    """Per-replica starting vectors from independent substreams of ``spec.seed``."""
    if spec.init_range is None:
        raise ConfigError("ensembles need an init range")
    if replica_seeds is None:
        streams = np.random.SeedSequence(spec.seed).spawn(spec.replicas)
    else:
        streams = [np.random.SeedSequence(s) for s in replica_seeds]
    low, high = spec.init_range
    return np.array([np.random.default_rng(s).uniform(low, high, size=2 * spec.p) for s in streams])


def run_random_init_ensemble(spec: ExperimentSpec, replica_seeds: Sequence[int] | None = None) -> EnsembleSummary:
    """Mean and (population) standard deviation of ``r`` over random restarts.

    Runs that stop early are padded with their last value so every replica
    contributes to every iteration.
    """
    n = len(replica_seeds) if replica_seeds is not None else spec.replicas
    if n is None or n < 2:
        raise ConfigError("an ensemble needs at least 2 replicas")
    spec = spec.with_(replicas=n)
    inits = replica_initials(spec, replica_seeds)
    jobs = [(spec, x0) for x0 in inits]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            outs = list(pool.map(_replica_job, jobs))
    else:
        outs = [_replica_job(j) for j in jobs]
    good = [o for o in outs if o is not None]
    failed = len(outs) - len(good)
    if not good:
        raise RuntimeError("every replica failed")
    length = max(len(o) for o in good)
    rs = np.array([o + [o[-1]] * (length - len(o)) for o in good])
    summary = EnsembleSummary(rs.mean(axis=0), rs.std(axis=0), len(good), failed, inits, rs)
    if spec.out is not None:
        write_ensemble(spec.out, summary, spec.fmt)
    return summary


def write_ensemble(path, summary: EnsembleSummary, fmt: str = "csv") -> None:
    path = Path(path)
    if fmt == "csv":
        lines = ["iter,mean_r,std_r"]
        lines += [f"{k},{m!r},{s!r}" for k, (m, s) in enumerate(zip(summary.mean_r.tolist(), summary.std_r.tolist()))]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        replicas_path = path.with_suffix(".replicas.csv")
        rows = ["replica," + ",".join(str(k) for k in range(summary.r_traces.shape[1]))]
        rows += [f"{i}," + ",".join(repr(v) for v in row.tolist()) for i, row in enumerate(summary.r_traces)]
        replicas_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    else:
        doc = {
            "replicas": summary.replicas,
            "failed": summary.failed,
            "mean_r": summary.mean_r.tolist(),
            "std_r": summary.std_r.tolist(),
            "r_traces": summary.r_traces.tolist(),
        }
        path.write_text(json.dumps(doc) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class DepthScanRow:
    initial_depth: int
    lam: float
    final_r: float
    final_depth: int
    final_length: float
    hit_iteration: int | None
    hit_depth: int | None
    hit_length: float | None

    def to_dict(self) -> dict:
        return {
            "initial_depth": self.initial_depth,
            "lambda": self.lam,
            "final_r": self.final_r,
            "final_depth": self.final_depth,
            "final_length": self.final_length,
            "hit_iteration": self.hit_iteration,
            "hit_depth": self.hit_depth,
            "hit_length": self.hit_length,
        }


DEPTH_SCAN_COLUMNS = tuple(DepthScanRow.__dataclass_fields__)


def run_depth_scan(spec: ExperimentSpec, depths: Sequence[int], lambdas: Sequence[float] | None = None,
                   evaluator: EnergyEvaluator | None = None) -> list[DepthScanRow]:
    """Final and at-threshold statistics for every (initial depth, lambda) cell."""
    if lambdas is None:
        lambdas = spec.lambda_grid if spec.lambda_grid is not None else (spec.config.lam,)
    for d in depths:
        if d < 2 or d % 2:
            raise ConfigError(f"initial depth must be even and >= 2, got {d}")
    ev = evaluator if evaluator is not None else make_evaluator(spec)
    rows = []
    for d in depths:
        for lam in lambdas:
            cell = spec.with_(p=d // 2)
            res = run_algorithm(spec.config.with_(lam=float(lam)), ev, initial_vector(cell))
            hit = res.first_hit_iteration
            at = res.trace[hit] if hit is not None else None
            rows.append(
                DepthScanRow(
                    initial_depth=d,
                    lam=float(lam),
                    final_r=res.final.r,
                    final_depth=res.final.active_depth,
                    final_length=res.final.l1_length,
                    hit_iteration=hit,
                    hit_depth=at.active_depth if at else None,
                    hit_length=at.l1_length if at else None,
                )
            )
            log.info("depth %d lambda %g -> r=%.4f depth=%d", d, lam, res.final.r, res.final.active_depth)
    if spec.out is not None:
        write_depth_scan(spec.out, rows, spec.fmt)
    return rows


def write_depth_scan(path, rows: Sequence[DepthScanRow], fmt: str = "csv") -> None:
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps([r.to_dict() for r in rows], indent=1) + "\n", encoding="utf-8")
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DEPTH_SCAN_COLUMNS)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r.to_dict().values()])
    path.write_text(buf.getvalue(), encoding="utf-8")


def run_sweep(spec: ExperimentSpec) -> SweepReport:
    if spec.lambda_grid is None:
        raise ConfigError("sweep needs a lambda grid")
    ev = make_evaluator(spec)
    report = lambda_sweep(spec.lambda_grid, spec.config, ev, initial_vector(spec))
    if spec.out is not None:
        out = Path(spec.out)
        runs = list(report.rejected)
        if report.found:
            runs.append((report.selected_lambda, report.selected))
        for lam, res in runs:
            write_trace(out.with_name(f"{out.stem}.lam{lam:g}{out.suffix or '.csv'}"), res.trace, spec.fmt)
        summary = {
            "grid": report.grid,
            "selected_lambda": report.selected_lambda,
            "runs": [
                {
                    "lambda": lam,
                    "first_hit_iteration": res.first_hit_iteration,
                    "final_r": res.final.r,
                    "final_active_depth": res.final.active_depth,
                    "final_l1_length": res.final.l1_length,
                }
                for lam, res in runs
            ],
        }
        if report.found:
            summary["selected_schedule"] = schedule_sidecar(report.selected.schedule)
        out.with_name(f"{out.stem}.summary.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    return report


def oracle(instance) -> tuple[WeightedGraph, SpectrumSummary]:
    graph = resolve_instance(instance)
    return graph, brute_force_extrema(diagonal_energies(graph))


def format_oracle(graph: WeightedGraph, spectrum: SpectrumSummary) -> str:
    lines = [
        f"nodes {graph.num_nodes} edges {len(graph.edges)} total_weight {graph.total_weight!r}",
        f"c_min {spectrum.c_min!r}",
        f"c_max {spectrum.c_max!r}",
        f"minimizers {spectrum.minimizer_count}",
    ]
    lines += [f"  {b}" for b in spectrum.bitstrings(graph.num_nodes)]
    return "\n".join(lines)

