"""Variational thermalizer for single-qubit bath states.

A sigmoid latent distribution ``p(theta)`` over ``{|0>, |1>}`` is rotated by
the native ansatz ``RZ(phi1), SQRT_X, RZ(phi2), SQRT_X, RZ(phi3)`` (gate
order). The loss is the dimensionless free energy ``beta <H> - S(p)``, whose
minimum ``-ln Z`` is reached exactly at the Gibbs state. Only the energy needs
to be measured; the entropy follows from ``theta`` because unitaries do not
change it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from twostroke.circuits import (
    H,
    RZ,
    S_DAGGER,
    SQRT_X,
    X,
    Circuit,
    Gate,
    apply_circuit,
    circuit_unitary,
    sample_sigma_z,
)
from twostroke.model import ChainSpec, gibbs_state, local_hamiltonian
from twostroke.qmath import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DensityMatrix,
    as_matrix,
    dagger,
    is_hermitian,
    shannon_entropy,
    tensor,
    trace_distance,
    von_neumann_entropy,
)

DEFAULT_PHI = (0.1, 0.1, 0.1)
CONVERGED_GAP = 1e-3


def sigmoid(theta: float) -> float:
    return float(expit(theta))


@dataclass(frozen=True)
class LatentDistribution:
    theta: float

    @property
    def probabilities(self) -> np.ndarray:
        p = sigmoid(self.theta)
        return np.array([p, 1.0 - p])

    def entropy(self) -> float:
        return shannon_entropy(self.probabilities)


def latent_state(dist: LatentDistribution | float) -> DensityMatrix:
    """``diag(p, 1 - p)`` with ``p = 1/(1 + exp(-theta))``."""
    if not isinstance(dist, LatentDistribution):
        dist = LatentDistribution(float(dist))
    return DensityMatrix(np.diag(dist.probabilities).astype(complex), (2,), check=False)


def ansatz_gates(phi, qubit: int = 0) -> list[Gate]:
    phi = tuple(float(a) for a in phi)
    if len(phi) != 3:
        raise ValueError(f"the ansatz takes exactly 3 angles, got {len(phi)}")
    return [RZ(qubit, phi[0]), SQRT_X(qubit), RZ(qubit, phi[1]), SQRT_X(qubit), RZ(qubit, phi[2])]


def ansatz_unitary(phi) -> np.ndarray:
    return circuit_unitary(Circuit(1, ansatz_gates(phi)))


def prepared_state(theta: float, phi) -> DensityMatrix:
    """``U(phi) rho_theta U(phi)^dagger``."""
    return latent_state(theta).evolve(ansatz_unitary(phi))


def pauli_coefficients(h) -> dict[str, float]:
    """Real coefficients of ``h = c_I I + c_X X + c_Y Y + c_Z Z``."""
    h = as_matrix(h)
    paulis = {"I": np.eye(2), "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}
    return {k: float(np.trace(p @ h).real / 2) for k, p in paulis.items()}


# rotations taking the Pauli eigenbasis onto the computational basis
_MEASURE_BASIS = {"X": [H(0)], "Y": [S_DAGGER(0), H(0)], "Z": []}


class ExactEnergy:
    """Evaluate ``<k| U^dagger h U |k>`` exactly."""

    def branch_energies(self, phi, h) -> np.ndarray:
        u = ansatz_unitary(phi)
        rotated = dagger(u) @ h @ u
        return np.real(np.diag(rotated))

    def __repr__(self) -> str:
        return "ExactEnergy()"


@dataclass
class ShotEnergy:
    """Estimate branch energies from ``shots`` measurements per Pauli term.

    Each call draws from a generator seeded with ``(seed, call_index)``, so a
    whole optimization run is reproducible.
    """

    shots: int = 8192
    seed: int = 0
    calls: int = field(default=0, init=False)

    def branch_energies(self, phi, h) -> np.ndarray:
        rng = np.random.default_rng([self.seed, self.calls])
        self.calls += 1
        coeffs = pauli_coefficients(h)
        out = []
        for k in (0, 1):
            start = [X(0)] if k else []
            energy = coeffs["I"]
            for name in ("X", "Y", "Z"):
                if abs(coeffs[name]) < 1e-15:
                    continue
                circ = Circuit(1, start + ansatz_gates(phi) + _MEASURE_BASIS[name])
                rho = apply_circuit(DensityMatrix.basis(0, (2,)), circ)
                energy += coeffs[name] * sample_sigma_z(rho, 0, self.shots, rng).mean
            out.append(energy)
        return np.array(out)


def free_energy_floor(h, beta: float) -> float:
    """``-ln Z_beta``, the minimum of the loss."""
    evals = np.linalg.eigvalsh(as_matrix(h))
    x = -beta * evals
    top = x.max()
    return float(-(top + math.log(np.sum(np.exp(x - top)))))


def vqt_loss(theta: float, phi, h, beta: float, evaluator=None) -> float:
    """``beta * sum_k p_k <k|U^dagger h U|k> - S(p)``."""
    if not beta > 0:
        raise ValueError(f"inverse temperature must be positive, got {beta}")
    h = as_matrix(h)
    if h.shape != (2, 2) or not is_hermitian(h):
        raise ValueError("the thermalizer targets a 2x2 Hermitian Hamiltonian")
    evaluator = evaluator or ExactEnergy()
    dist = LatentDistribution(theta)
    energy = float(dist.probabilities @ evaluator.branch_energies(phi, h))
    return beta * energy - dist.entropy()


@dataclass
class VqtResult:
    theta_opt: float
    phi_opt: tuple[float, float, float]
    loss_trace: list[float]  # best loss so far, one entry per evaluation
    prepared_state: DensityMatrix
    iterations: int
    converged: bool
    beta: float
    floor: float  # -ln Z_beta
    final_loss: float
    trace_distance: float  # to the exact Gibbs state
    evaluations: list[float] = field(default_factory=list)

    @property
    def probabilities(self) -> np.ndarray:
        return LatentDistribution(self.theta_opt).probabilities

    def to_dict(self) -> dict:
        return {
            "theta_opt": self.theta_opt,
            "phi_opt": list(self.phi_opt),
            "iterations": self.iterations,
            "converged": self.converged,
            "beta": self.beta,
            "free_energy_floor": self.floor,
            "final_loss": self.final_loss,
            "loss_gap": self.final_loss - self.floor,
            "trace_distance_to_gibbs": self.trace_distance,
            "loss_trace": list(self.loss_trace),
        }


def optimize(
    h,
    beta: float,
    init=None,
    budget: int = 200,
    tol: float = 1e-9,
    evaluator=None,
    rhobeg: float = 0.5,
) -> VqtResult:
    """Minimise :func:`vqt_loss` over ``(theta, phi1, phi2, phi3)`` with COBYLA.

    ``budget`` caps loss evaluations. A zero budget evaluates the starting
    point only and is reported as not converged. ``converged`` compares the
    exact loss of the returned parameters with ``-ln Z_beta``.
    """
    h = as_matrix(h)
    evaluator = evaluator or ExactEnergy()
    x0 = np.array([0.0, *DEFAULT_PHI] if init is None else init, dtype=float)
    if x0.shape != (4,):
        raise ValueError("init must hold (theta, phi1, phi2, phi3)")
    if budget < 0:
        raise ValueError("budget must be non-negative")

    evaluations: list[float] = []
    best = {"loss": math.inf, "x": x0.copy()}

    def objective(x):
        value = vqt_loss(x[0], x[1:], h, beta, evaluator)
        evaluations.append(value)
        if value < best["loss"]:
            best["loss"], best["x"] = value, np.array(x, dtype=float)
        return value

    if budget == 0:
        objective(x0)
    else:
        minimize(
            objective,
            x0,
            method="COBYLA",
            options={"maxiter": budget, "rhobeg": rhobeg, "tol": tol},
        )
        evaluations = evaluations[:budget]

    x = best["x"]
    theta, phi = float(x[0]), tuple(float(a) for a in x[1:])
    rho = prepared_state(theta, phi)
    floor = free_energy_floor(h, beta)
    exact_loss = vqt_loss(theta, phi, h, beta)
    target = gibbs_state(h, 1.0 / beta)
    return VqtResult(
        theta_opt=theta,
        phi_opt=phi,
        loss_trace=list(np.minimum.accumulate(evaluations)),
        prepared_state=rho,
        iterations=len(evaluations),
        converged=budget > 0 and exact_loss - floor < CONVERGED_GAP,
        beta=beta,
        floor=floor,
        final_loss=exact_loss,
        trace_distance=trace_distance(rho, target),
        evaluations=evaluations,
    )


def train_bath(omega: float, temperature: float, **kwargs) -> VqtResult:
    """Thermalize one bath qubit with ``H = (omega/2) sigma_z``."""
    return optimize(local_hamiltonian(omega), 1.0 / temperature, **kwargs)


@dataclass(frozen=True)
class BathBranch:
    weight: float
    basis: tuple[int, int]  # latent basis state of (C, H)
    state: DensityMatrix


@dataclass(frozen=True)
class BathPair:
    state: DensityMatrix  # over (C, H)
    branches: tuple[BathBranch, ...]
    cold: tuple[float, tuple[float, float, float]]  # (theta, phi)
    hot: tuple[float, tuple[float, float, float]]


def prepare_bath_pair(spec: ChainSpec | None, cold: VqtResult, hot: VqtResult) -> BathPair:
    """Product of the two prepared bath states plus its four pure branches.

    Branch ``(i, j)`` is ``U_C|i> (x) U_H|j>`` with weight ``p_C(i) p_H(j)``;
    the weighted sum of branch projectors equals ``state``.
    """
    if spec is not None:
        for name, res, temp in (("cold", cold, spec.t_cold), ("hot", hot, spec.t_hot)):
            if not math.isclose(res.beta, 1.0 / temp, rel_tol=1e-9):
                raise ValueError(f"{name} bath result was trained at T={1 / res.beta:g}, spec has T={temp:g}")
    pc, ph = cold.probabilities, hot.probabilities
    uc, uh = ansatz_unitary(cold.phi_opt), ansatz_unitary(hot.phi_opt)
    branches = []
    for i, j in itertools.product((0, 1), repeat=2):
        rc = DensityMatrix.basis(i, (2,)).evolve(uc)
        rh = DensityMatrix.basis(j, (2,)).evolve(uh)
        branches.append(BathBranch(float(pc[i] * ph[j]), (i, j), tensor(rc, rh)))
    state = tensor(cold.prepared_state, hot.prepared_state)
    return BathPair(state, tuple(branches), (cold.theta_opt, cold.phi_opt), (hot.theta_opt, hot.phi_opt))


def entropy_consistency(result: VqtResult) -> float:
    """Gap between ``S(p(theta))`` and the entropy of the prepared state."""
    return abs(LatentDistribution(result.theta_opt).entropy() - von_neumann_entropy(result.prepared_state))
