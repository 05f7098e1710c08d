"""Weighted Max-Cut instances, their ZZ Hamiltonian, and the approximation ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .statevector import MAX_QUBITS, DiagonalObservable, SizeError

MAX_LISTED_MINIMIZERS = 64


class InstanceError(ValueError):
    """Invalid graph definition."""


class InstanceParseError(InstanceError):
    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = f"{path}:" if path is not None else ""
        where += f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class MetricUndefinedError(ValueError):
    """Approximation ratio requested on a flat spectrum."""


@dataclass(frozen=True)
class WeightedGraph:
    num_nodes: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.num_nodes < 2:
            raise InstanceError(f"need at least 2 nodes, got {self.num_nodes}")
        seen = set()
        norm = []
        for i, j, w in self.edges:
            i, j, w = int(i), int(j), float(w)
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise InstanceError(f"edge ({i}, {j}) out of range for {self.num_nodes} nodes")
            if i == j:
                raise InstanceError(f"self-loop on node {i}")
            if i > j:
                i, j = j, i
            if (i, j) in seen:
                raise InstanceError(f"duplicate edge ({i}, {j})")
            if not math.isfinite(w):
                raise InstanceError(f"non-finite weight on edge ({i}, {j})")
            seen.add((i, j))
            norm.append((i, j, w))
        object.__setattr__(self, "edges", tuple(norm))

    @property
    def total_weight(self) -> float:
        return math.fsum(w for _, _, w in self.edges)


@dataclass(frozen=True)
class SpectrumSummary:
    c_min: float
    c_max: float
    minimizers: tuple[int, ...]
    minimizer_count: int = field(default=0)

    def bitstrings(self, num_nodes: int) -> list[str]:
        """Minimizers as strings, node 0 first."""
        return ["".join(str((z >> n) & 1) for n in range(num_nodes)) for z in self.minimizers]


def spin_patterns(num_nodes: int) -> np.ndarray:
    """Row ``n`` holds ``s_n(z)`` for every basis index ``z``."""
    idx = np.arange(1 << num_nodes, dtype=np.int64)
    bits = (idx[None, :] >> np.arange(num_nodes)[:, None]) & 1
    return (1 - 2 * bits).astype(np.int8)


def diagonal_energies(graph: WeightedGraph) -> DiagonalObservable:
    """``E(z) = sum_ij w_ij s_i(z) s_j(z)`` for every bitstring ``z``."""
    n = graph.num_nodes
    if n > MAX_QUBITS:
        raise SizeError(f"{n} nodes exceeds the {MAX_QUBITS}-qubit limit")
    spins = spin_patterns(n)
    energies = np.zeros(1 << n)
    for i, j, w in graph.edges:
        energies += w * (spins[i] * spins[j])
    return DiagonalObservable(n, energies)


def brute_force_extrema(obs: DiagonalObservable) -> SpectrumSummary:
    if obs.num_qubits > MAX_QUBITS:
        raise SizeError(f"{obs.num_qubits} qubits exceeds the {MAX_QUBITS}-qubit limit")
    e = obs.energies
    c_min = float(e.min())
    c_max = float(e.max())
    hits = np.flatnonzero(e == c_min)
    return SpectrumSummary(
        c_min=c_min,
        c_max=c_max,
        minimizers=tuple(int(z) for z in hits[:MAX_LISTED_MINIMIZERS]),
        minimizer_count=int(hits.size),
    )


def approximation_ratio(f_value, spectrum: SpectrumSummary):
    """``1 - (f - c_min) / (c_max - c_min)``; vectorizes over ``f_value``."""
    span = spectrum.c_max - spectrum.c_min
    if not span > 0:
        raise MetricUndefinedError("c_max equals c_min; approximation ratio is undefined")
    r = 1.0 - (np.asarray(f_value, dtype=np.float64) - spectrum.c_min) / span
    return float(r) if r.ndim == 0 else r


def parse_instance(text: str, path=None) -> WeightedGraph:
    """Parse the ``nodes``/``edge`` line format. ``#`` starts a comment."""
    num_nodes = None
    edges = []
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if num_nodes is None:
            if tokens[0] != "nodes" or len(tokens) != 2:
                raise InstanceParseError("expected 'nodes <N>' as the first entry", lineno, path)
            try:
                num_nodes = int(tokens[1])
            except ValueError:
                raise InstanceParseError(f"bad node count {tokens[1]!r}", lineno, path) from None
            if num_nodes < 2:
                raise InstanceParseError(f"need at least 2 nodes, got {num_nodes}", lineno, path)
            continue
        if tokens[0] != "edge" or len(tokens) != 4:
            raise InstanceParseError(f"expected 'edge <i> <j> <weight>', got {line!r}", lineno, path)
        try:
            i, j = int(tokens[1]), int(tokens[2])
            w = float(tokens[3])
        except ValueError:
            raise InstanceParseError(f"malformed edge {line!r}", lineno, path) from None
        if not math.isfinite(w):
            raise InstanceParseError(f"non-finite weight {tokens[3]!r}", lineno, path)
        if not (0 <= i < num_nodes and 0 <= j < num_nodes) or i == j:
            raise InstanceParseError(f"edge ({i}, {j}) invalid for {num_nodes} nodes", lineno, path)
        key = (min(i, j), max(i, j))
        if key in seen:
            raise InstanceParseError(
                f"duplicate edge {key} (first on line {seen[key]})", lineno, path
            )
        seen[key] = lineno
        edges.append((key[0], key[1], w))
    if num_nodes is None:
        raise InstanceParseError("missing 'nodes <N>' line", None, path)
    if not edges:
        raise InstanceParseError("instance has no edges", None, path)
    return WeightedGraph(num_nodes, tuple(edges))


def load_instance(path) -> WeightedGraph:
    path = Path(path)
    return parse_instance(path.read_text(encoding="utf-8"), path=path)


BUILTIN_INSTANCES = {"7node": "maxcut_7node.txt", "10node": "maxcut_10node.txt"}


def builtin_instance_path(name: str) -> Path:
    """Filesystem path of a shipped instance (``7node`` or ``10node``)."""
    try:
        fname = BUILTIN_INSTANCES[name]
    except KeyError:
        raise KeyError(f"unknown builtin instance {name!r}; choose from {sorted(BUILTIN_INSTANCES)}") from None
    return Path(str(resources.files("qaoa_depth").joinpath("data").joinpath(fname)))


def load_builtin(name: str) -> WeightedGraph:
    return load_instance(builtin_instance_path(name))


def random_graph(num_nodes: int, edge_prob: float, seed: int, low=0.1, high=1.0) -> WeightedGraph:
    """Erdos-Renyi graph with uniform weights; guarantees at least one edge."""
    rng = np.random.default_rng(seed)
    edges = []
    for i in range(num_nodes):
        for j in range(i + 1, num_nodes):
            if rng.random() < edge_prob:
                edges.append((i, j, float(rng.uniform(low, high))))
    if not edges:
        edges.append((0, 1, float(rng.uniform(low, high))))
    return WeightedGraph(num_nodes, tuple(edges))
