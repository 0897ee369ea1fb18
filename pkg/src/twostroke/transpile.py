"""Lowering to the ``{RZ, X, SQRT_X, CNOT}`` basis on a coupling graph.

The pipeline is: greedy shortest-path SWAP routing, gate-by-gate lowering of
single-qubit gates to ``RZ . SQRT_X . RZ . SQRT_X . RZ``, then merging of
adjacent ``RZ`` on the same qubit. Correctness is checked with
:func:`verify_equivalence`, a phase-invariant unitary distance.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from twostroke.circuits import (
    CNOT,
    RZ,
    SQRT_X,
    X,
    Circuit,
    Gate,
    GateKind,
    circuit_unitary,
)
from twostroke.qmath import dagger

BASIS = frozenset({GateKind.RZ, GateKind.X, GateKind.SQRT_X, GateKind.CNOT})
PASS_THROUGH = frozenset({GateKind.RESET, GateKind.BARRIER})
_DEGENERATE = 1e-12
_ZERO_ANGLE = 1e-12


class RoutingError(ValueError):
    """Two qubits that must interact are not connected in the topology."""


@dataclass(frozen=True)
class Topology:
    n_qubits: int
    edges: frozenset[tuple[int, int]]

    def __init__(self, n_qubits: int, edges):
        norm = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop on qubit {a}")
            if not (0 <= a < n_qubits and 0 <= b < n_qubits):
                raise ValueError(f"edge ({a}, {b}) outside a {n_qubits}-qubit device")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "n_qubits", int(n_qubits))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def line(cls, n: int) -> "Topology":
        return cls(n, [(k, k + 1) for k in range(n - 1)])

    def adjacent(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def neighbours(self, q: int) -> list[int]:
        return sorted({b for a, b in self.edges if a == q} | {a for a, b in self.edges if b == q})

    def shortest_path(self, src: int, dst: int) -> list[int]:
        prev = {src: None}
        queue = deque([src])
        while queue:
            q = queue.popleft()
            if q == dst:
                break
            for nb in self.neighbours(q):
                if nb not in prev:
                    prev[nb] = q
                    queue.append(nb)
        if dst not in prev:
            raise RoutingError(f"no path between physical qubits {src} and {dst}")
        path = [dst]
        while prev[path[-1]] is not None:
            path.append(prev[path[-1]])
        return path[::-1]


class Routed(NamedTuple):
    circuit: Circuit
    initial_layout: tuple[int, ...]
    final_layout: tuple[int, ...]
    swap_count: int


@dataclass(frozen=True)
class TranspiledCircuit:
    circuit: Circuit
    initial_layout: tuple[int, ...]
    layout: tuple[int, ...]  # logical -> physical after routing
    swap_count: int


def _wrap(angle: float) -> float:
    """Map an angle into ``(-pi, pi]``; ``RZ`` differs only by a global phase."""
    a = math.remainder(angle, 2 * math.pi)
    return math.pi if a == -math.pi else a


def _rz_if_nonzero(q: int, angle: float) -> list[Gate]:
    a = _wrap(angle)
    return [] if abs(a) < _ZERO_ANGLE else [RZ(q, a)]


def decompose_single_qubit(u, qubit: int = 0) -> list[Gate]:
    """Native gates equal to ``u`` up to global phase.

    Uses ``u ~ RZ(phi) RY(theta) RZ(lam)`` and
    ``RY(theta) ~ RZ(pi) SQRT_X RZ(theta + pi) SQRT_X`` absorbed into the
    outer rotations. Diagonal and anti-diagonal inputs drop the middle
    rotation.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or not np.allclose(u @ dagger(u), np.eye(2), atol=1e-10, rtol=0):
        raise ValueError("expected a 2x2 unitary")
    v = u / np.sqrt(np.linalg.det(u))
    c, s = abs(v[0, 0]), abs(v[1, 0])
    if s < _DEGENERATE:
        return _rz_if_nonzero(qubit, 2 * np.angle(v[1, 1]))
    if c < _DEGENERATE:
        # v = X diag(v10, v01) ~ X RZ(arg v01 - arg v10)
        return _rz_if_nonzero(qubit, np.angle(v[0, 1]) - np.angle(v[1, 0])) + [X(qubit)]
    theta = 2 * math.atan2(s, c)
    total = 2 * np.angle(v[1, 1])  # phi + lam
    diff = 2 * np.angle(v[1, 0])  # phi - lam
    phi, lam = 0.5 * (total + diff), 0.5 * (total - diff)
    return (
        _rz_if_nonzero(qubit, lam)
        + [SQRT_X(qubit)]
        + _rz_if_nonzero(qubit, theta + math.pi)
        + [SQRT_X(qubit)]
        + _rz_if_nonzero(qubit, phi + math.pi)
    )


def _normalise_layout(layout, n_logical: int, n_physical: int) -> list[int]:
    if layout is None:
        layout = list(range(n_logical))
    elif isinstance(layout, Mapping):
        layout = [layout[i] for i in range(n_logical)]
    layout = [int(p) for p in layout]
    if len(layout) < n_logical:
        raise ValueError(f"layout covers {len(layout)} of {n_logical} logical qubits")
    if len(set(layout)) != len(layout):
        raise ValueError("layout is not injective")
    if any(not 0 <= p < n_physical for p in layout):
        raise ValueError(f"layout {layout} references qubits outside the device")
    # idle physical qubits get dummy logical labels so the layout is a permutation
    free = [p for p in range(n_physical) if p not in layout]
    return layout + free


def _swap_gates(a: int, b: int) -> list[Gate]:
    return [CNOT(a, b), CNOT(b, a), CNOT(a, b)]


def route(circuit: Circuit, topo: Topology, layout=None) -> Routed:
    """Place ``circuit`` on ``topo`` and insert SWAPs so every CNOT is adjacent.

    The returned circuit acts on physical qubits. ``final_layout[i]`` is the
    physical home of logical qubit ``i`` at the end of the circuit.
    """
    if circuit.width > topo.n_qubits:
        raise ValueError(f"circuit needs {circuit.width} qubits, device has {topo.n_qubits}")
    l2p = _normalise_layout(layout, circuit.width, topo.n_qubits)
    initial = tuple(l2p)
    p2l = {p: lq for lq, p in enumerate(l2p)}
    out: list[Gate] = []
    swaps = 0
    for gate in circuit.gates:
        if len(gate.targets) == 2:
            a, b = gate.targets
            pa, pb = l2p[a], l2p[b]
            if not topo.adjacent(pa, pb):
                path = topo.shortest_path(pa, pb)
                # walk the first operand toward the second
                for x, y in zip(path[:-2], path[1:-1]):
                    out += _swap_gates(x, y)
                    swaps += 1
                    lx, ly = p2l[x], p2l[y]
                    l2p[lx], l2p[ly] = y, x
                    p2l[x], p2l[y] = ly, lx
        out.append(Gate(gate.kind, tuple(l2p[q] for q in gate.targets), gate.angle))
    return Routed(Circuit(topo.n_qubits, out), initial, tuple(l2p), swaps)


def lower_to_basis(circuit: Circuit) -> Circuit:
    out: list[Gate] = []
    for gate in circuit.gates:
        if gate.kind in BASIS or gate.kind in PASS_THROUGH:
            out.append(gate)
        else:
            out += decompose_single_qubit(gate.matrix(), gate.targets[0])
    return Circuit(circuit.width, out)


def merge_rz(circuit: Circuit) -> Circuit:
    """Fuse runs of ``RZ`` on a qubit and drop rotations that are a global phase."""
    gates = list(circuit.gates)
    changed = True
    while changed:
        changed = False
        out: list[Gate | None] = []
        last: dict[int, int] = {}
        for gate in gates:
            if gate.kind is GateKind.RZ:
                q = gate.targets[0]
                k = last.get(q)
                if k is not None and out[k] is not None and out[k].kind is GateKind.RZ:
                    angle = _wrap(out[k].angle + gate.angle)
                    out[k] = RZ(q, angle) if abs(angle) >= _ZERO_ANGLE else None
                    changed = True
                    continue
                if abs(_wrap(gate.angle)) < _ZERO_ANGLE:
                    changed = True
                    continue
            touched = gate.targets if gate.targets else range(circuit.width)
            out.append(gate)
            for q in touched:
                last[q] = len(out) - 1
        gates = [g for g in out if g is not None]
    return Circuit(circuit.width, gates)


def transpile(circuit: Circuit, topo: Topology, layout=None) -> TranspiledCircuit:
    routed = route(circuit, topo, layout)
    lowered = merge_rz(lower_to_basis(routed.circuit))
    return TranspiledCircuit(lowered, routed.initial_layout, routed.final_layout, routed.swap_count)


def permutation_matrix(layout: Sequence[int]) -> np.ndarray:
    """Operator sending logical qubit ``i`` to physical position ``layout[i]``."""
    n = len(layout)
    dim = 2**n
    p = np.zeros((dim, dim))
    for x in range(dim):
        bits = [(x >> (n - 1 - i)) & 1 for i in range(n)]
        y = 0
        for i, bit in enumerate(bits):
            y |= bit << (n - 1 - layout[i])
        p[y, x] = 1.0
    return p


def phase_invariant_distance(u: np.ndarray, v: np.ndarray) -> float:
    """``min_phi ||u - exp(i phi) v||_F`` with the optimal phase in closed form."""
    if u.shape != v.shape:
        raise ValueError(f"unitary shapes differ: {u.shape} vs {v.shape}")
    overlap = np.trace(dagger(u) @ v)
    phase = np.exp(-1j * np.angle(overlap)) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(u - phase * v, "fro"))


def verify_equivalence(a: Circuit, b: Circuit, final_layout=None, initial_layout=None) -> float:
    """Phase-invariant distance between logical ``a`` and physical ``b``.

    ``b`` is compared as ``P_final^dagger U_b P_initial``; both layouts
    default to the identity. When layouts are given, ``a`` is padded with idle
    qubits up to the width of ``b``.
    """
    if final_layout is None and initial_layout is None:
        if a.width != b.width:
            raise ValueError(f"circuit widths differ: {a.width} vs {b.width}")
        return phase_invariant_distance(circuit_unitary(a), circuit_unitary(b))
    if a.width > b.width:
        raise ValueError(f"logical circuit ({a.width}) is wider than physical ({b.width})")
    init = _normalise_layout(initial_layout, a.width, b.width)
    final = _normalise_layout(final_layout if final_layout is not None else init, a.width, b.width)
    ua = circuit_unitary(Circuit(b.width, a.gates))
    ub = circuit_unitary(b)
    mapped = permutation_matrix(final).T @ ub @ permutation_matrix(init)
    return phase_invariant_distance(ua, mapped)


def two_qubit_count(circuit: Circuit) -> int:
    return sum(len(g.targets) == 2 for g in circuit.gates)
