"""Control schedules, soft-thresholding, and depth/length accounting.

The packed parameter vector is always ``x = (beta_1..beta_p, gamma_1..gamma_p)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .statevector import ParameterError


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    betas: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        b = np.array(self.betas, dtype=np.float64).reshape(-1)
        g = np.array(self.gammas, dtype=np.float64).reshape(-1)
        if b.size == 0 or b.size != g.size:
            raise ParameterError(f"need p >= 1 betas and gammas of equal length, got {b.size} and {g.size}")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(g))):
            raise ParameterError("schedule entries must be finite")
        b.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "betas", b)
        object.__setattr__(self, "gammas", g)

    @property
    def layers(self) -> int:
        return self.betas.size

    def packed(self) -> np.ndarray:
        return np.concatenate([self.betas, self.gammas])

    @classmethod
    def from_packed(cls, x) -> "ControlSchedule":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.size % 2:
            raise ParameterError(f"packed vector must be 1-D with even length, got shape {x.shape}")
        p = x.size // 2
        return cls(x[:p], x[p:])

    @classmethod
    def constant(cls, p: int, value: float) -> "ControlSchedule":
        return cls(np.full(p, value), np.full(p, value))

    def __eq__(self, other):
        if not isinstance(other, ControlSchedule):
            return NotImplemented
        return np.array_equal(self.betas, other.betas) and np.array_equal(self.gammas, other.gammas)

    def to_dict(self) -> dict:
        return {"p": self.layers, "betas": self.betas.tolist(), "gammas": self.gammas.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlSchedule":
        sched = cls(d["betas"], d["gammas"])
        if "p" in d and int(d["p"]) != sched.layers:
            raise ParameterError(f"record says p={d['p']} but carries {sched.layers} layers")
        return sched

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ControlSchedule":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SparsityReport:
    active_depth: int
    op_count: int
    l1_length: float
    max_abs: float


def soft_threshold(x, tau: float) -> np.ndarray:
    """Shrink every entry toward zero by ``tau``; entries with ``|x| <= tau`` become 0."""
    if not tau >= 0:
        raise ParameterError(f"threshold must be non-negative, got {tau!r}")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > tau, x - tau, np.where(x < -tau, x + tau, 0.0))
    # -0.0 would break odd-symmetry checks done with array_equal on signs
    out[out == 0] = 0.0
    return out


def l1_length(x) -> float:
    return math.fsum(abs(float(v)) for v in np.ravel(x))


def active_depth(x, zero_tol: float = 0.0) -> int:
    return int(np.count_nonzero(np.abs(np.asarray(x)) > zero_tol))


def merged_operations(schedule: ControlSchedule, zero_tol: float = 0.0) -> list[tuple[str, float]]:
    """Interleave ``gamma_1, beta_1, ..., gamma_p, beta_p``, drop zeros, merge neighbours.

    Returns ``(generator, angle)`` pairs with generator ``"H_o"`` for phase
    angles and ``"H_c"`` for mixer angles. Merged angles are summed.
    """
    ops: list[tuple[str, float]] = []
    for beta, gamma in zip(schedule.betas, schedule.gammas):
        for gen, angle in (("H_o", float(gamma)), ("H_c", float(beta))):
            if abs(angle) <= zero_tol:
                continue
            if ops and ops[-1][0] == gen:
                ops[-1] = (gen, ops[-1][1] + angle)
            else:
                ops.append((gen, angle))
    return ops


def control_op_count(schedule: ControlSchedule, zero_tol: float = 0.0) -> int:
    return len(merged_operations(schedule, zero_tol))


def sparsity_report(schedule: ControlSchedule, zero_tol: float = 0.0) -> SparsityReport:
    x = schedule.packed()
    return SparsityReport(
        active_depth=active_depth(x, zero_tol),
        op_count=control_op_count(schedule, zero_tol),
        l1_length=l1_length(x),
        max_abs=float(np.max(np.abs(x))),
    )


def wrap_angles(x) -> np.ndarray:
    """Map angles into ``(-pi, pi]``. For display only."""
    x = np.asarray(x, dtype=np.float64)
    wrapped = np.pi - np.mod(np.pi - x, 2 * np.pi)
    return wrapped
