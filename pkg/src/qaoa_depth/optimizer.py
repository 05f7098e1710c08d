"""L1-regularized QAOA training: proximal gradient, non-convex APG, and depth selection.

The smooth part is ``f(x) = <psi(x)|H_o|psi(x)>``; the regularizer is
``g(x) = lam * ||x||_1``. Every driver records one :class:`IterateRecord`
per iteration, with record ``0`` being the starting point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .maxcut import SpectrumSummary, approximation_ratio, brute_force_extrema
from .schedule import ControlSchedule, active_depth, l1_length, soft_threshold
from .statevector import (
    DiagonalObservable,
    ParameterError,
    _mixer_kernel,
    _phase_kernel,
    evolve_packed,
    expectation_packed,
)

log = logging.getLogger(__name__)

DIVERGENCE_SLACK = 1e-6


class Algorithm(str, Enum):
    PG = "pg"
    APG = "apg"
    GD = "gd"


class GradientBackend(str, Enum):
    FD = "fd"
    EXACT = "exact"


class DivergenceError(RuntimeError):
    """Objective left the spectrum bounds or became non-finite.

    ``partial`` holds the :class:`RunResult` accumulated up to the failure.
    """

    def __init__(self, message: str, partial: "RunResult"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class OptimizerConfig:
    eta: float = 0.006
    lam: float = 0.0
    epsilon: float = 1e-3
    tol: float = 1e-6
    q: int = 2
    max_iters: int = 200
    algorithm: Algorithm = Algorithm.APG
    r_star: float = 0.9
    gradient: GradientBackend = GradientBackend.FD
    stop_on_target: bool = False
    # a coordinate zeroed by the proximal step is removed from the schedule
    # for the rest of the run; False lets later steps revive it
    freeze_zeros: bool = True

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "gradient", GradientBackend(self.gradient))
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        # tol == 0 disables early stopping (a strict '<' test can never fire)
        if not self.tol >= 0:
            raise ValueError(f"tol must be non-negative, got {self.tol}")
        if self.q < 0:
            raise ValueError(f"q must be >= 0, got {self.q}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if not 0 < self.r_star <= 1:
            raise ValueError(f"r_star must lie in (0, 1], got {self.r_star}")

    def with_(self, **changes) -> "OptimizerConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class IterateRecord:
    k: int
    f: float
    F: float
    r: float
    active_depth: int
    l1_length: float
    evals: int
    accepted_extrapolation: bool = False
    phase: int = 1


@dataclass
class ExtrapolationCheck:
    """Decision data for one APG iteration."""

    k: int
    F_y: float
    F_window: float
    accepted: bool


@dataclass
class RunResult:
    schedule: ControlSchedule
    trace: list[IterateRecord]
    r_star: float
    lam: float
    algorithm: Algorithm
    first_hit_iteration: int | None = None
    converged_early: bool = False
    checks: list[ExtrapolationCheck] = field(default_factory=list)
    # full iterate history, row k is the parameter vector of trace[k]
    iterates: np.ndarray | None = None

    @property
    def final(self) -> IterateRecord:
        return self.trace[-1]

    @property
    def reached_target(self) -> bool:
        return self.first_hit_iteration is not None

    def record_at(self, k: int) -> IterateRecord:
        return self.trace[k]


class EnergyEvaluator:
    """Counts objective evaluations against one observable.

    One call to :meth:`__call__` or one row of :meth:`batch` counts as one
    evaluation.
    """

    def __init__(self, obs: DiagonalObservable, spectrum: SpectrumSummary | None = None):
        self.obs = obs
        self.spectrum = spectrum if spectrum is not None else brute_force_extrema(obs)
        self.evals = 0

    def __call__(self, x) -> float:
        self.evals += 1
        psi = evolve_packed(x, self.obs)
        return float(expectation_packed(psi, self.obs.energies))

    def batch(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        self.evals += xs.shape[0]
        psi = evolve_packed(xs, self.obs)
        return expectation_packed(psi, self.obs.energies)

    def ratio(self, f_value):
        return approximation_ratio(f_value, self.spectrum)


def objective(x, obs: DiagonalObservable) -> float:
    """Energy expectation of the circuit with packed parameters ``x``."""
    psi = evolve_packed(x, obs)
    return float(expectation_packed(psi, obs.energies))


def regularized_objective(x, obs: DiagonalObservable, lam: float) -> float:
    if not lam >= 0:
        raise ParameterError(f"lambda must be non-negative, got {lam}")
    return objective(x, obs) + lam * l1_length(x)


def central_difference(func: Callable[[np.ndarray], float], x, epsilon: float) -> np.ndarray:
    """Generic two-sided difference for a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += epsilon
        xm[i] -= epsilon
        g[i] = (func(xp) - func(xm)) / (2 * epsilon)
    return g


def _fd_gradient(evaluator: EnergyEvaluator, x: np.ndarray, epsilon: float, coords=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    idx = np.arange(x.size) if coords is None else np.asarray(coords, dtype=np.intp)
    grad = np.zeros_like(x)
    if idx.size == 0:
        return grad
    m = idx.size
    shifted = np.repeat(x[None, :], 2 * m, axis=0)
    rows = np.arange(m)
    shifted[rows, idx] += epsilon
    shifted[m + rows, idx] -= epsilon
    vals = evaluator.batch(shifted)
    grad[idx] = (vals[:m] - vals[m:]) / (2 * epsilon)
    return grad


def grad_central_difference(x, obs_or_evaluator, epsilon: float) -> np.ndarray:
    """Two-sided finite-difference gradient; costs ``2 * len(x)`` evaluations."""
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    ev = obs_or_evaluator
    if isinstance(ev, DiagonalObservable):
        ev = EnergyEvaluator(ev)
    return _fd_gradient(ev, x, epsilon)


def exact_gradient(x, obs: DiagonalObservable) -> np.ndarray:
    """Analytic gradient by a reverse (adjoint) sweep through the layers."""
    x = np.asarray(x, dtype=np.float64)
    p = x.size // 2
    n = obs.num_qubits
    energies = obs.energies
    phi = evolve_packed(x, obs)
    lam = energies * phi
    grad = np.zeros_like(x)

    def sum_x(v):
        out = np.zeros_like(v)
        for q in range(n):
            out += v.reshape(-1, 2, 1 << q)[:, ::-1, :].reshape(-1)
        return out

    for layer in range(p - 1, -1, -1):
        beta = x[layer]
        gamma = x[p + layer]
        # d/dtheta of exp(-i theta G) contributes 2 Im <lam|G|phi>
        grad[layer] = 2.0 * np.vdot(lam, sum_x(phi)).imag
        phi = _mixer_kernel(phi, -beta, n)
        lam = _mixer_kernel(lam, -beta, n)
        grad[p + layer] = 2.0 * np.vdot(lam, energies * phi).imag
        phi = _phase_kernel(phi, energies, -gamma)
        lam = _phase_kernel(lam, energies, -gamma)
    return grad


def pg_step(x, grad, eta: float, lam: float) -> np.ndarray:
    """One proximal step: soft-threshold ``x - eta * grad`` at ``lam * eta``."""
    if not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    if not lam >= 0:
        raise ParameterError(f"lambda must be non-negative, got {lam}")
    return soft_threshold(np.asarray(x) - eta * np.asarray(grad), lam * eta)


class _Runner:
    """Shared bookkeeping for the iterative drivers."""

    def __init__(self, config: OptimizerConfig, evaluator: EnergyEvaluator, lam: float, phase: int = 1,
                 on_record=None):
        self.config = config
        self.on_record = on_record
        self.ev = evaluator
        self.lam = lam
        self.phase = phase
        self.trace: list[IterateRecord] = []
        self.iterates: list[np.ndarray] = []
        self.first_hit: int | None = None
        self.eval_base = evaluator.evals
        self.c_min, self.c_max = evaluator.spectrum.c_min, evaluator.spectrum.c_max
        self.removed: np.ndarray | None = None

    def prox(self, v: np.ndarray, grad: np.ndarray) -> np.ndarray:
        x_next = pg_step(v, grad, self.config.eta, self.lam)
        if self.config.freeze_zeros and self.lam > 0:
            if self.removed is None:
                self.removed = np.zeros(x_next.size, dtype=bool)
            x_next[self.removed] = 0.0
            self.removed |= x_next == 0
        return x_next

    def mask(self, y: np.ndarray) -> np.ndarray:
        if self.removed is not None and self.removed.any():
            y = y.copy()
            y[self.removed] = 0.0
        return y

    def gradient(self, x: np.ndarray, coords=None) -> np.ndarray:
        if self.config.gradient is GradientBackend.EXACT:
            self.ev.evals += 1
            g = exact_gradient(x, self.ev.obs)
            if coords is not None:
                mask = np.zeros(x.size, dtype=bool)
                mask[np.asarray(coords, dtype=np.intp)] = True
                g = np.where(mask, g, 0.0)
            return g
        return _fd_gradient(self.ev, x, self.config.epsilon, coords)

    def composite(self, x: np.ndarray, f: float) -> float:
        return f + self.lam * l1_length(x)

    def record(self, k: int, x: np.ndarray, f: float, accepted: bool = False, k_offset: int = 0) -> IterateRecord:
        if not math.isfinite(f) or f < self.c_min - DIVERGENCE_SLACK or f > self.c_max + DIVERGENCE_SLACK:
            raise DivergenceError(
                f"objective {f!r} outside spectrum [{self.c_min}, {self.c_max}] at iteration {k}",
                self.result(x, converged=False),
            )
        rec = IterateRecord(
            k=k + k_offset,
            f=f,
            F=self.composite(x, f),
            r=self.ev.ratio(f),
            active_depth=active_depth(x),
            l1_length=l1_length(x),
            evals=self.ev.evals - self.eval_base,
            accepted_extrapolation=accepted,
            phase=self.phase,
        )
        self.trace.append(rec)
        self.iterates.append(x.copy())
        if self.on_record is not None:
            self.on_record(rec)
        if self.first_hit is None and rec.r >= self.config.r_star:
            self.first_hit = rec.k
        return rec

    def hit_target(self) -> bool:
        return self.config.stop_on_target and self.first_hit is not None

    def result(self, x: np.ndarray, converged: bool, checks=None) -> RunResult:
        return RunResult(
            schedule=ControlSchedule.from_packed(x),
            trace=list(self.trace),
            r_star=self.config.r_star,
            lam=self.lam,
            algorithm=self.config.algorithm,
            first_hit_iteration=self.first_hit,
            converged_early=converged,
            checks=list(checks or []),
            iterates=np.array(self.iterates) if self.iterates else None,
        )


def _as_vector(x_init) -> np.ndarray:
    if isinstance(x_init, ControlSchedule):
        return x_init.packed()
    x = np.array(x_init, dtype=np.float64)
    if x.ndim != 1 or x.size == 0 or x.size % 2:
        raise ParameterError(f"initial vector must be 1-D with even positive length, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("initial vector must be finite")
    return x


def _make_evaluator(obs) -> EnergyEvaluator:
    return obs if isinstance(obs, EnergyEvaluator) else EnergyEvaluator(obs)


def pg_run(config: OptimizerConfig, obs, x_init, on_record=None) -> RunResult:
    """Iterate the proximal-gradient update for ``config.max_iters`` steps.

    Stops early when ``|F(x_{k+1}) - F(x_k)| < tol``. With ``algorithm=GD``
    the threshold is forced to zero, which gives plain gradient descent.
    With ``freeze_zeros`` a coordinate that the threshold sets to zero is
    dropped for the remainder of the run.
    The starting-point evaluation is not billed in ``evals``, so after ``k``
    iterations with the finite-difference backend ``evals == k * (4p + 1)``.
    """
    ev = _make_evaluator(obs)
    lam = 0.0 if config.algorithm is Algorithm.GD else config.lam
    x = _as_vector(x_init)
    f = ev(x)
    run = _Runner(config, ev, lam, on_record=on_record)
    run.eval_base = ev.evals
    run.record(0, x, f)
    F_prev = run.trace[-1].F
    converged = False
    for k in range(1, config.max_iters + 1):
        if run.hit_target():
            break
        grad = run.gradient(x)
        x = run.prox(x, grad)
        f = ev(x)
        rec = run.record(k, x, f)
        if abs(rec.F - F_prev) < config.tol:
            converged = True
            break
        F_prev = rec.F
    return run.result(x, converged)


def apg_run(config: OptimizerConfig, obs, x_init, on_record=None) -> RunResult:
    """Non-convex accelerated proximal gradient with a ``q``-window monitor.

    Iteration ``k`` extrapolates ``y_k = x_k + (k-1)/(k+2) (x_k - x_{k-1})``
    and keeps it only if ``F(y_k)`` does not exceed the largest composite
    value among ``x_max(1,k-q) .. x_k``. The proximal step is taken from the
    kept point. On early stop the returned schedule is ``x_k``, the iterate
    preceding the converged one; the trace still ends with ``x_{k+1}``.
    """
    ev = _make_evaluator(obs)
    lam = config.lam
    q = config.q
    x_cur = _as_vector(x_init)
    x_prev = x_cur.copy()
    f = ev(x_cur)
    run = _Runner(config, ev, lam, on_record=on_record)
    run.eval_base = ev.evals
    run.record(0, x_cur, f)
    # composite[t - 1] holds F(x_t)
    composite = [run.trace[-1].F]
    checks: list[ExtrapolationCheck] = []
    converged = False
    result_x = x_cur
    for k in range(1, config.max_iters + 1):
        if run.hit_target():
            break
        y = run.mask(x_cur + ((k - 1) / (k + 2)) * (x_cur - x_prev))
        F_window = max(composite[max(1, k - q) - 1 : k])
        if np.array_equal(y, x_cur):
            F_y = composite[k - 1]
        else:
            F_y = run.composite(y, ev(y))
        accepted = F_y <= F_window
        checks.append(ExtrapolationCheck(k, F_y, F_window, accepted))
        v = y if accepted else x_cur
        grad = run.gradient(v)
        x_next = run.prox(v, grad)
        f_next = ev(x_next)
        rec = run.record(k, x_next, f_next, accepted=accepted)
        composite.append(rec.F)
        x_prev, x_cur = x_cur, x_next
        result_x = x_cur
        if abs(rec.F - F_window) < config.tol:
            converged = True
            result_x = x_prev
            break
    return run.result(result_x, converged, checks)


def refine_fixed_support(x, obs, eta: float, iters: int, config: OptimizerConfig | None = None,
                         k_offset: int = 0, on_record=None) -> RunResult:
    """Unregularized gradient descent restricted to the nonzero coordinates of ``x``.

    Zero coordinates stay exactly zero. Record ``0`` is the handoff point;
    iteration numbers are shifted by ``k_offset`` so traces can be concatenated.
    """
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    cfg = (config or OptimizerConfig()).with_(eta=eta, lam=0.0, algorithm=Algorithm.GD)
    ev = _make_evaluator(obs)
    x = _as_vector(x)
    support = np.flatnonzero(x)
    f = ev(x)
    run = _Runner(cfg, ev, 0.0, phase=2, on_record=on_record)
    run.eval_base = ev.evals
    run.record(0, x, f, k_offset=k_offset)
    for k in range(1, iters + 1):
        if support.size == 0:
            run.record(k, x, f, k_offset=k_offset)
            continue
        grad = run.gradient(x, coords=support)
        x = x.copy()
        x[support] = x[support] - eta * grad[support]
        f = ev(x)
        run.record(k, x, f, k_offset=k_offset)
    return run.result(x, converged=False)


def run_algorithm(config: OptimizerConfig, obs, x_init, on_record=None) -> RunResult:
    if config.algorithm is Algorithm.APG:
        return apg_run(config, obs, x_init, on_record)
    return pg_run(config, obs, x_init, on_record)


@dataclass
class SweepReport:
    grid: list[float]
    selected_lambda: float | None
    selected: RunResult | None
    rejected: list[tuple[float, RunResult]]

    @property
    def found(self) -> bool:
        return self.selected_lambda is not None


def lambda_sweep(grid: Sequence[float], config: OptimizerConfig, obs, x_init) -> SweepReport:
    """Try ``lambda`` values from largest to smallest; keep the first that reaches ``r_star``."""
    grid = [float(v) for v in grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"lambda grid must be strictly decreasing, got {grid}")
    evaluator = _make_evaluator(obs)
    rejected = []
    for lam in grid:
        result = run_algorithm(config.with_(lam=lam), evaluator, x_init)
        log.info("lambda=%g first_hit=%s final r=%.4f depth=%d", lam, result.first_hit_iteration,
                 result.final.r, result.final.active_depth)
        if result.reached_target:
            return SweepReport(grid, lam, result, rejected)
        rejected.append((lam, result))
    return SweepReport(grid, None, None, rejected)
