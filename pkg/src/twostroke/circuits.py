"""Gate-level circuits, density-matrix execution and shot emulation.

Qubit 0 is the leftmost tensor factor. On the heat-stroke register this is the
cold bath, followed by the chain sites and finally the hot bath.

``RZ(theta) = exp(-i theta Z / 2)`` and likewise for ``RX``/``RY``. A pair
block ``exp(-i theta (XX + YY) / 2)`` is lowered as an ``XX`` factor (Hadamard
conjugated ``CNOT . RZ . CNOT``) followed by a ``YY`` factor (``S^dagger H``
conjugated), the same template used for both strokes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from twostroke.model import ChainSpec
from twostroke.qmath import DensityMatrix, dagger


class GateKind(str, Enum):
    RZ = "RZ"
    RX = "RX"
    RY = "RY"
    X = "X"
    SQRT_X = "SQRT_X"
    H = "H"
    S = "S"
    S_DAGGER = "S_DAGGER"
    CNOT = "CNOT"
    RESET = "RESET"
    BARRIER = "BARRIER"


ROTATIONS = {GateKind.RZ, GateKind.RX, GateKind.RY}
TWO_QUBIT = {GateKind.CNOT}
NON_UNITARY = {GateKind.RESET}

_SQ2 = 1 / math.sqrt(2)
_FIXED = {
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.SQRT_X: 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]]),
    GateKind.H: _SQ2 * np.array([[1, 1], [1, -1]], dtype=complex),
    GateKind.S: np.diag([1, 1j]),
    GateKind.S_DAGGER: np.diag([1, -1j]),
    GateKind.CNOT: np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
}


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        targets = tuple(int(q) for q in self.targets)
        object.__setattr__(self, "targets", targets)
        arity = 2 if kind in TWO_QUBIT else 1
        if kind is not GateKind.BARRIER and len(targets) != arity:
            raise ValueError(f"{kind.value} acts on {arity} qubit(s), got {targets}")
        if len(set(targets)) != len(targets):
            raise ValueError(f"{kind.value} targets must be distinct, got {targets}")
        if any(q < 0 for q in targets):
            raise ValueError(f"negative qubit index in {targets}")
        if kind in ROTATIONS:
            if self.angle is None or not math.isfinite(self.angle):
                raise ValueError(f"{kind.value} needs a finite angle")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise ValueError(f"{kind.value} takes no angle")

    def matrix(self) -> np.ndarray:
        if self.kind is GateKind.RZ:
            return rz(self.angle)
        if self.kind is GateKind.RX:
            return rx(self.angle)
        if self.kind is GateKind.RY:
            return ry(self.angle)
        try:
            return _FIXED[self.kind]
        except KeyError:
            raise ValueError(f"{self.kind.value} has no unitary matrix") from None

    def inverse(self) -> "Gate":
        if self.kind in ROTATIONS:
            return Gate(self.kind, self.targets, -self.angle)
        if self.kind is GateKind.S:
            return Gate(GateKind.S_DAGGER, self.targets)
        if self.kind is GateKind.S_DAGGER:
            return Gate(GateKind.S, self.targets)
        if self.kind is GateKind.SQRT_X:
            # sqrt(X)^dagger = RX(-pi/2) up to a global phase
            return Gate(GateKind.RX, self.targets, -math.pi / 2)
        if self.kind in NON_UNITARY:
            raise ValueError("RESET has no inverse")
        return self

    def to_line(self) -> str:
        parts = [self.kind.value, *map(str, self.targets)]
        if self.angle is not None:
            parts.append(repr(self.angle))
        return " ".join(parts)


# shorthand constructors, used heavily by the builders
def RZ(q, theta): return Gate(GateKind.RZ, (q,), theta)  # noqa: E704
def RX(q, theta): return Gate(GateKind.RX, (q,), theta)  # noqa: E704
def RY(q, theta): return Gate(GateKind.RY, (q,), theta)  # noqa: E704
def X(q): return Gate(GateKind.X, (q,))  # noqa: E704
def SQRT_X(q): return Gate(GateKind.SQRT_X, (q,))  # noqa: E704
def H(q): return Gate(GateKind.H, (q,))  # noqa: E704
def S(q): return Gate(GateKind.S, (q,))  # noqa: E704
def S_DAGGER(q): return Gate(GateKind.S_DAGGER, (q,))  # noqa: E704
def CNOT(c, t): return Gate(GateKind.CNOT, (c, t))  # noqa: E704
def RESET(q): return Gate(GateKind.RESET, (q,))  # noqa: E704


@dataclass(frozen=True)
class Circuit:
    width: int
    gates: tuple[Gate, ...] = field(default=())

    def __post_init__(self):
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        if self.width < 0:
            raise ValueError("circuit width must be non-negative")
        for g in gates:
            if any(q >= self.width for q in g.targets):
                raise ValueError(f"gate {g.to_line()!r} exceeds circuit width {self.width}")

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.width != self.width:
            raise ValueError("cannot concatenate circuits of different width")
        return Circuit(self.width, self.gates + other.gates)

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        return Circuit(self.width, self.gates + tuple(gates))

    def inverse(self) -> "Circuit":
        return Circuit(self.width, tuple(g.inverse() for g in reversed(self.gates)))

    @property
    def has_reset(self) -> bool:
        return any(g.kind is GateKind.RESET for g in self.gates)

    def count(self, kind: GateKind | str) -> int:
        kind = GateKind(kind)
        return sum(g.kind is kind for g in self.gates)

    def kinds(self) -> set[GateKind]:
        return {g.kind for g in self.gates}

    def dumps(self) -> str:
        lines = [f"QUBITS {self.width}"] + [g.to_line() for g in self.gates]
        return "\n".join(lines) + "\n"


def dumps(circuit: Circuit) -> str:
    return circuit.dumps()


class CircuitParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def loads(text: str, width: int | None = None) -> Circuit:
    """Parse the line format ``GATE q0 [q1] [angle]``.

    Blank lines and ``#`` comments are ignored. An optional ``QUBITS n`` line
    fixes the width; otherwise it is one past the largest qubit index.
    """
    gates: list[Gate] = []
    declared = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0].upper()
        if head == "QUBITS":
            if len(tokens) != 2 or declared is not None:
                raise CircuitParseError("malformed QUBITS directive", lineno)
            try:
                declared = int(tokens[1])
            except ValueError:
                raise CircuitParseError(f"bad qubit count {tokens[1]!r}", lineno) from None
            continue
        try:
            kind = GateKind(head)
        except ValueError:
            raise CircuitParseError(f"unknown gate {tokens[0]!r}", lineno) from None
        arity = 2 if kind in TWO_QUBIT else 1
        args = tokens[1:]
        if kind is GateKind.BARRIER:
            arity = len(args)
        want = arity + (1 if kind in ROTATIONS else 0)
        if len(args) != want:
            raise CircuitParseError(f"{kind.value} expects {want} argument(s), got {len(args)}", lineno)
        try:
            qubits = tuple(int(a) for a in args[:arity])
            angle = float(args[arity]) if kind in ROTATIONS else None
            gates.append(Gate(kind, qubits, angle))
        except ValueError as exc:
            raise CircuitParseError(str(exc), lineno) from None
    inferred = 1 + max((q for g in gates for q in g.targets), default=-1)
    if width is None:
        width = declared if declared is not None else inferred
    if inferred > width:
        raise CircuitParseError(f"circuit uses qubit {inferred - 1} but width is {width}")
    return Circuit(width, gates)


def _apply_left(op: np.ndarray, targets: Sequence[int], m: np.ndarray, n: int) -> np.ndarray:
    """Left-multiply ``m`` (rows indexed by ``n`` qubits) by ``op`` on ``targets``."""
    k = len(targets)
    cols = m.shape[1]
    t = m.reshape((2,) * n + (cols,))
    opt = op.reshape((2,) * (2 * k))
    t = np.tensordot(opt, t, axes=(list(range(k, 2 * k)), list(targets)))
    # tensordot puts the op's output axes first; move them back into place
    rest = [q for q in range(n) if q not in targets]
    order = list(targets) + rest + [n]
    inv = np.argsort(order)
    return t.transpose(inv).reshape(2**n, cols)


def _conjugate(op: np.ndarray, targets, rho: np.ndarray, n: int) -> np.ndarray:
    left = _apply_left(op, targets, rho, n)
    return dagger(_apply_left(op, targets, dagger(left), n))


_K0 = np.array([[1, 0], [0, 0]], dtype=complex)
_K1 = np.array([[0, 1], [0, 0]], dtype=complex)


def apply_circuit(rho: DensityMatrix, circuit: Circuit) -> DensityMatrix:
    """Run ``circuit`` on ``rho``; RESET is the trace-preserving channel to ``|0>``."""
    n = circuit.width
    if rho.dim != 2**n:
        raise ValueError(f"state of dimension {rho.dim} does not fit a {n}-qubit circuit")
    m = rho.matrix
    for gate in circuit.gates:
        if gate.kind is GateKind.BARRIER:
            continue
        if gate.kind is GateKind.RESET:
            m = _conjugate(_K0, gate.targets, m, n) + _conjugate(_K1, gate.targets, m, n)
        else:
            m = _conjugate(gate.matrix(), gate.targets, m, n)
    return DensityMatrix((m + dagger(m)) / 2, rho.dims, check=False)


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    if circuit.has_reset:
        raise NotImplementedError("a circuit containing RESET has no unitary")
    n = circuit.width
    u = np.eye(2**n, dtype=complex)
    for gate in circuit.gates:
        if gate.kind is GateKind.BARRIER:
            continue
        u = _apply_left(gate.matrix(), gate.targets, u, n)
    return u


def xx_block(a: int, b: int, theta: float) -> list[Gate]:
    """Gates for ``exp(-i theta X_a X_b / 2)``."""
    return [H(a), H(b), CNOT(a, b), RZ(b, theta), CNOT(a, b), H(a), H(b)]


def yy_block(a: int, b: int, theta: float) -> list[Gate]:
    """Gates for ``exp(-i theta Y_a Y_b / 2)``."""
    return [
        S_DAGGER(a), S_DAGGER(b), H(a), H(b),
        CNOT(a, b), RZ(b, theta), CNOT(a, b),
        H(a), H(b), S(a), S(b),
    ]  # fmt: skip


def hopping_block(a: int, b: int, theta: float) -> list[Gate]:
    """Gates for ``exp(-i theta (XX + YY) / 2)``; the two factors commute."""
    return xx_block(a, b, theta) + yy_block(a, b, theta)


def _trotter_slices(local_angles, pairs, steps: int) -> list[Gate]:
    gates: list[Gate] = []
    for _ in range(steps):
        gates += [RZ(q, angle / steps) for q, angle in local_angles]
        gates += [g for a, b, theta in pairs for g in xx_block(a, b, theta / steps)]
        gates += [g for a, b, theta in pairs for g in yy_block(a, b, theta / steps)]
    return gates


def build_heat_stroke_circuit(spec: ChainSpec, tau_q: float, steps: int = 1) -> Circuit:
    """Heat stroke on ``(C, 1..N, H)``: local ``RZ`` layer, then ``XX``, then ``YY``.

    One step is exact whenever the baths are resonant with their sites;
    otherwise ``steps`` controls the first-order Trotter slicing.
    """
    if tau_q < 0 or not math.isfinite(tau_q):
        raise ValueError(f"stroke duration must be finite and >= 0, got {tau_q}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n = spec.n_sites
    freqs = [spec.omega_c, *spec.omegas, spec.omega_h]
    local = [(q, w * tau_q) for q, w in enumerate(freqs)]
    pairs = [(0, 1, spec.g_c * tau_q), (n, n + 1, spec.g_h * tau_q)]
    return Circuit(n + 2, _trotter_slices(local, pairs, steps))


def _exact_pair_exchange(w1: float, w2: float, g: float, tau: float) -> list[Gate]:
    """Exact ``exp(-i tau [(w1 Z1 + w2 Z2)/2 + g(XX+YY)/2])`` on qubits (0, 1).

    The generator splits into a part proportional to ``Z1 + Z2`` that commutes
    with everything else, and an su(2) block on ``span{|01>, |10>}`` spanned
    by ``(Z1 - Z2)/2`` and ``(XX + YY)/2``. The block rotation is written in
    symmetric Euler form ``exp(-i a tz) exp(-i b tx) exp(-i a tz)``, each factor
    of which is a native layer: ``RZ(a), RZ(-a)`` or a hopping block.
    """
    delta = w1 - w2
    mean = 0.5 * (w1 + w2)
    omega = math.hypot(0.5 * delta, g)
    if omega == 0.0:
        return [RZ(0, mean * tau), RZ(1, mean * tau)]
    c, s = math.cos(omega * tau), math.sin(omega * tau)
    u00 = complex(c, -s * 0.5 * delta / omega)
    b = math.asin(max(-1.0, min(1.0, s * g / omega)))
    a = -0.5 * math.atan2(u00.imag, u00.real) if abs(u00) > 1e-15 else 0.0
    return [
        RZ(0, mean * tau + a), RZ(1, mean * tau - a),
        *hopping_block(0, 1, b),
        RZ(0, a), RZ(1, -a),
    ]  # fmt: skip


def build_work_stroke_circuit(spec: ChainSpec, tau_w: float, steps: int | None = None) -> Circuit:
    """Work stroke on the chain ``(1..N)``.

    With ``steps=None`` a two-site chain gets an exact lowering in the same
    gate template (``RZ`` layer, hopping block, ``RZ`` layer). An integer
    ``steps`` gives first-order Trotter slices of the local layer followed by
    the ``XX`` and ``YY`` factors on every bond; a single slice is exact only
    for a resonant chain.
    """
    if tau_w < 0 or not math.isfinite(tau_w):
        raise ValueError(f"stroke duration must be finite and >= 0, got {tau_w}")
    n = spec.n_sites
    if steps is None:
        if n != 2:
            raise ValueError("exact work-stroke lowering needs N = 2; pass an explicit steps count")
        w1, w2 = spec.omegas
        return Circuit(2, _exact_pair_exchange(w1, w2, spec.g_work[0], tau_w))
    if steps < 1:
        raise ValueError("steps must be >= 1")
    local = [(q, w * tau_w) for q, w in enumerate(spec.omegas)]
    pairs = [(k, k + 1, g * tau_w) for k, g in enumerate(spec.g_work)]
    return Circuit(n, _trotter_slices(local, pairs, steps))


@dataclass(frozen=True)
class ShotEstimate:
    mean: float
    std_error: float
    shots: int
    seed: int | None

    def __post_init__(self):
        if self.shots <= 0:
            raise ValueError("shots must be positive")
        if abs(self.mean) > 1 + 1e-12 or self.std_error < 0:
            raise ValueError("invalid sigma_z estimate")


def z_population(rho: DensityMatrix, qubit: int) -> float:
    """Probability of measuring ``|0>`` on ``qubit``."""
    n = rho.n_subsystems
    if not 0 <= qubit < n:
        raise ValueError(f"qubit {qubit} out of range for {n} subsystems")
    diag = np.real(np.diag(rho.matrix)).reshape(rho.dims)
    p0 = float(np.take(diag, 0, axis=qubit).sum())
    return min(max(p0, 0.0), 1.0)


def sample_sigma_z(rho: DensityMatrix, qubit: int, shots: int, seed=None) -> ShotEstimate:
    """Estimate ``<sigma_z>`` on ``qubit`` from ``shots`` projective measurements.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``; integer
    seeds make the draw reproducible.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p0 = z_population(rho, qubit)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n0 = int(rng.binomial(shots, p0))
    p_hat = n0 / shots
    mean = (2 * n0 - shots) / shots
    std_error = 2.0 * math.sqrt(p_hat * (1 - p_hat) / shots)
    return ShotEstimate(mean, std_error, shots, seed if isinstance(seed, int) else None)
