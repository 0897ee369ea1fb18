"""Chain specification, stroke Hamiltonians and thermal states.

Register order is fixed to ``(C, 1, ..., N, H)`` for the heat stroke and
``(1, ..., N)`` for the work stroke. Local terms are ``(omega/2) sigma_z`` and
every interaction is the excitation-conserving hopping
``(g/2)(XX + YY) = g(s+ s- + s- s+)`` with ``s+- = (X +- iY)/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from twostroke.qmath import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DensityMatrix,
    as_matrix,
    commutator,
    embed,
    embed_pair,
    frobenius,
    herm_function,
    is_hermitian,
    kron,
)


@dataclass(frozen=True)
class ChainSpec:
    """Frequencies, couplings and bath temperatures of the machine.

    ``omegas`` and ``g_work`` are per site and per bond; ``omega_c`` and
    ``omega_h`` default to the frequencies of the boundary sites (resonant
    baths), ``g_c`` and ``g_h`` default to the first internal coupling.
    """

    omegas: tuple[float, ...]
    g_work: tuple[float, ...]
    t_cold: float
    t_hot: float
    omega_c: float | None = None
    omega_h: float | None = None
    g_c: float | None = None
    g_h: float | None = None

    def __post_init__(self):
        omegas = tuple(float(w) for w in self.omegas)
        g_work = tuple(float(g) for g in self.g_work)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "g_work", g_work)
        if len(omegas) < 2:
            raise ValueError("a chain needs at least two sites")
        if len(g_work) != len(omegas) - 1:
            raise ValueError(f"expected {len(omegas) - 1} internal couplings, got {len(g_work)}")
        default_g = g_work[0]
        for name, value in (
            ("omega_c", omegas[0]),
            ("omega_h", omegas[-1]),
            ("g_c", default_g),
            ("g_h", default_g),
        ):
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
            else:
                object.__setattr__(self, name, float(getattr(self, name)))
        if min(omegas + (self.omega_c, self.omega_h)) <= 0:
            raise ValueError("all frequencies must be positive")
        if self.t_cold <= 0 or self.t_hot <= 0:
            raise ValueError("temperatures must be positive")
        if self.t_cold > self.t_hot:
            raise ValueError(f"t_cold={self.t_cold} exceeds t_hot={self.t_hot}")
        if not all(np.isfinite(v) for v in g_work + (self.g_c, self.g_h)):
            raise ValueError("couplings must be finite")

    @classmethod
    def two_site(
        cls,
        omega1: float,
        omega2: float,
        g: float,
        t_cold: float,
        t_hot: float,
        **overrides,
    ) -> "ChainSpec":
        """The two-qubit machine with resonant baths and one common coupling."""
        return cls(omegas=(omega1, omega2), g_work=(g,), t_cold=t_cold, t_hot=t_hot, **overrides)

    @property
    def n_sites(self) -> int:
        return len(self.omegas)

    @property
    def n_qubits(self) -> int:
        return self.n_sites + 2

    @property
    def is_resonant(self) -> bool:
        return self.omega_c == self.omegas[0] and self.omega_h == self.omegas[-1]

    @property
    def heat_dims(self) -> tuple[int, ...]:
        return (2,) * self.n_qubits

    @property
    def chain_dims(self) -> tuple[int, ...]:
        return (2,) * self.n_sites

    def to_dict(self) -> dict:
        d = asdict(self)
        d["omegas"] = list(self.omegas)
        d["g_work"] = list(self.g_work)
        return d


@dataclass(frozen=True)
class StrokeHamiltonians:
    """All operators of one machine.

    ``h_q`` acts on ``(C, 1..N, H)``, ``h_w`` on ``(1..N)``. Local and
    interaction pieces are kept in the same registers so energetics can be
    evaluated term by term.
    """

    h_q: np.ndarray
    h_w: np.ndarray
    h_locals: tuple[np.ndarray, ...]  # per site 1..N on the chain register
    h_cold: np.ndarray  # H_C on the heat register
    h_hot: np.ndarray  # H_H on the heat register
    v_cold: np.ndarray  # V_C on the heat register
    v_hot: np.ndarray  # V_H on the heat register
    v_chain: np.ndarray  # V_S on the chain register
    heat_locals: tuple[np.ndarray, ...] = field(default=())  # H_i on the heat register


def local_hamiltonian(omega: float) -> np.ndarray:
    """``(omega/2) sigma_z``."""
    if not omega > 0:
        raise ValueError(f"frequency must be positive, got {omega}")
    return 0.5 * omega * SIGMA_Z


def hopping_interaction(g: float) -> np.ndarray:
    """Two-qubit hopping ``(g/2)(XX + YY)``; couples only ``|01>`` and ``|10>``."""
    return 0.5 * g * (kron(SIGMA_X, SIGMA_X) + kron(SIGMA_Y, SIGMA_Y))


def _pair_hopping(g: float, i: int, j: int, dims) -> np.ndarray:
    return 0.5 * g * (embed_pair(SIGMA_X, SIGMA_X, i, j, dims) + embed_pair(SIGMA_Y, SIGMA_Y, i, j, dims))


def stroke_hamiltonians(spec: ChainSpec) -> StrokeHamiltonians:
    n = spec.n_sites
    heat = spec.heat_dims
    chain = spec.chain_dims
    h_cold = embed(local_hamiltonian(spec.omega_c), 0, heat)
    h_hot = embed(local_hamiltonian(spec.omega_h), n + 1, heat)
    heat_locals = tuple(embed(local_hamiltonian(w), k + 1, heat) for k, w in enumerate(spec.omegas))
    v_cold = _pair_hopping(spec.g_c, 0, 1, heat)
    v_hot = _pair_hopping(spec.g_h, n, n + 1, heat)
    h_q = sum(heat_locals) + h_cold + h_hot + v_cold + v_hot

    h_locals = tuple(embed(local_hamiltonian(w), k, chain) for k, w in enumerate(spec.omegas))
    v_chain = sum(_pair_hopping(g, k, k + 1, chain) for k, g in enumerate(spec.g_work))
    h_w = sum(h_locals) + v_chain
    return StrokeHamiltonians(
        h_q=h_q,
        h_w=h_w,
        h_locals=h_locals,
        h_cold=h_cold,
        h_hot=h_hot,
        v_cold=v_cold,
        v_hot=v_hot,
        v_chain=v_chain,
        heat_locals=heat_locals,
    )


def strict_energy_conservation_residual(spec: ChainSpec) -> tuple[float, float]:
    """Frobenius norms of ``[V_C, H_1 + H_C]`` and ``[V_H, H_N + H_H]``."""
    hs = stroke_hamiltonians(spec)
    cold = commutator(hs.v_cold, hs.heat_locals[0] + hs.h_cold)
    hot = commutator(hs.v_hot, hs.heat_locals[-1] + hs.h_hot)
    return frobenius(cold), frobenius(hot)


def gibbs_state(h, temperature: float, dims=None) -> DensityMatrix:
    """Thermal state ``exp(-h/T)/Z``.

    The spectrum is shifted by its minimum before exponentiating so that low
    temperatures do not overflow.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    h = as_matrix(h)
    if not is_hermitian(h):
        raise ValueError("Gibbs state requires a Hermitian Hamiltonian")
    e_min = np.linalg.eigvalsh(h).min()
    unnorm = herm_function(h, lambda e: np.exp(-(e - e_min) / temperature))
    rho = unnorm / np.trace(unnorm).real
    return DensityMatrix((rho + rho.conj().T) / 2, dims)


def partition_function(h, temperature: float) -> float:
    evals = np.linalg.eigvalsh(as_matrix(h))
    return float(np.sum(np.exp(-evals / temperature)))


def bath_states(spec: ChainSpec) -> tuple[DensityMatrix, DensityMatrix]:
    """Exact Gibbs states of the cold and hot bath qubits."""
    return (
        gibbs_state(local_hamiltonian(spec.omega_c), spec.t_cold),
        gibbs_state(local_hamiltonian(spec.omega_h), spec.t_hot),
    )


def ground_state(spec: ChainSpec) -> DensityMatrix:
    """Chain ground state: every site in ``|1>`` (``sigma_z = -1``)."""
    n = spec.n_sites
    return DensityMatrix.basis(2**n - 1, spec.chain_dims)
