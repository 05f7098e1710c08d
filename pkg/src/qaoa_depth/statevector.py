"""Dense statevector simulation of the alternating-operator QAOA circuit.

Basis convention: qubit ``n`` is bit ``n`` of the amplitude index
(little-endian). Bit value 0 carries spin +1, bit value 1 carries spin -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_QUBITS = 24
NORM_TOL = 1e-10


class SizeError(ValueError):
    """Qubit count outside the supported range."""


class ShapeError(ValueError):
    """State and observable dimensions disagree."""


class ParameterError(ValueError):
    """Non-finite or otherwise invalid control parameter."""


def _check_num_qubits(num_qubits: int) -> None:
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise SizeError(f"num_qubits must lie in [1, {MAX_QUBITS}], got {num_qubits}")


@dataclass(frozen=True, eq=False)
class QubitState:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_num_qubits(self.num_qubits)
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.num_qubits,):
            raise ShapeError(
                f"expected {1 << self.num_qubits} amplitudes, got shape {amps.shape}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm drifted to {norm!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @classmethod
    def basis(cls, num_qubits: int, index: int) -> "QubitState":
        _check_num_qubits(num_qubits)
        amps = np.zeros(1 << num_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(num_qubits, amps)


@dataclass(frozen=True, eq=False)
class DiagonalObservable:
    """Real diagonal of an observable in the computational basis."""

    num_qubits: int
    energies: np.ndarray

    def __post_init__(self):
        _check_num_qubits(self.num_qubits)
        e = np.asarray(self.energies, dtype=np.float64)
        if e.shape != (1 << self.num_qubits,):
            raise ShapeError(
                f"expected {1 << self.num_qubits} energies, got shape {e.shape}"
            )
        if not np.all(np.isfinite(e)):
            raise ValueError("observable energies must be finite")
        e.setflags(write=False)
        object.__setattr__(self, "energies", e)

    @property
    def bounds(self) -> tuple[float, float]:
        return float(self.energies.min()), float(self.energies.max())


def _check_match(state: QubitState, obs: DiagonalObservable) -> None:
    if state.num_qubits != obs.num_qubits:
        raise ShapeError(
            f"state has {state.num_qubits} qubits, observable has {obs.num_qubits}"
        )


def plus_state(num_qubits: int) -> QubitState:
    """Uniform superposition over all ``2**num_qubits`` basis states."""
    _check_num_qubits(num_qubits)
    dim = 1 << num_qubits
    return QubitState(num_qubits, np.full(dim, 2.0 ** (-num_qubits / 2), dtype=np.complex128))


# Raw-array kernels. ``psi`` has shape (..., 2**n); angle arrays broadcast
# against the leading batch axes. Callers own the buffers.


def _phase_kernel(psi: np.ndarray, energies: np.ndarray, gamma) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=np.float64)
    return psi * np.exp(-1j * gamma[..., None] * energies)


def _mixer_kernel(psi: np.ndarray, beta, num_qubits: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    lead = psi.shape[:-1]
    c = np.reshape(np.cos(beta), lead + (1, 1, 1))
    s = np.reshape(np.sin(beta), lead + (1, 1, 1)) * -1j
    out = psi
    for n in range(num_qubits):
        # pair (a, b) differing in bit n maps to (c a + s b, c b + s a)
        view = out.reshape(lead + (-1, 2, 1 << n))
        nxt = c * view
        nxt += s * view[..., ::-1, :]
        out = nxt.reshape(psi.shape)
    return out


def apply_phase_layer(state: QubitState, obs: DiagonalObservable, gamma: float) -> QubitState:
    """Multiply amplitude ``z`` by ``exp(-i * gamma * E(z))``."""
    _check_match(state, obs)
    if not np.isfinite(gamma):
        raise ParameterError(f"non-finite gamma {gamma!r}")
    if gamma == 0:
        return state
    return QubitState(state.num_qubits, _phase_kernel(state.amplitudes, obs.energies, gamma))


def apply_mixer_layer(state: QubitState, beta: float) -> QubitState:
    """Apply ``exp(-i * beta * sum_n X_n)`` as one x-rotation per qubit."""
    if not np.isfinite(beta):
        raise ParameterError(f"non-finite beta {beta!r}")
    if beta == 0:
        return state
    return QubitState(state.num_qubits, _mixer_kernel(state.amplitudes, beta, state.num_qubits))


def evolve_packed(x: np.ndarray, obs: DiagonalObservable) -> np.ndarray:
    """Evolve ``|+...+>`` under packed parameters ``x = (betas, gammas)``.

    ``x`` may carry leading batch axes; the result has shape
    ``x.shape[:-1] + (2**N,)``. No validation beyond finiteness.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 2 or x.shape[-1] == 0:
        raise ParameterError(f"packed vector length must be even and positive, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("non-finite control parameter")
    p = x.shape[-1] // 2
    n = obs.num_qubits
    psi = np.full(x.shape[:-1] + (1 << n,), 2.0 ** (-n / 2), dtype=np.complex128)
    for layer in range(p):
        psi = _phase_kernel(psi, obs.energies, x[..., p + layer])
        psi = _mixer_kernel(psi, x[..., layer], n)
    return psi


def evolve(schedule, obs: DiagonalObservable) -> QubitState:
    """Run the full circuit for a :class:`~qaoa_depth.schedule.ControlSchedule`."""
    psi = evolve_packed(schedule.packed(), obs)
    return QubitState(obs.num_qubits, psi)


def expectation_packed(psi: np.ndarray, energies: np.ndarray) -> np.ndarray:
    probs = psi.real**2 + psi.imag**2
    return probs @ energies


def expectation(state: QubitState, obs: DiagonalObservable) -> float:
    """Exact ``<psi|H|psi>`` for a diagonal observable."""
    _check_match(state, obs)
    return float(expectation_packed(state.amplitudes, obs.energies))
