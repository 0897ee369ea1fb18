"""Dense linear algebra for few-qubit systems.

Operators are plain complex ``numpy`` arrays. States are wrapped in
:class:`DensityMatrix`, which carries the subsystem dimensions so that partial
traces and embeddings know the tensor structure.

Entropies are in nats (natural logarithm, ``k_B = 1``) and ``hbar = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_ATOL = 1e-10
EIGEN_CLAMP = 1e-10

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def allclose(a, b, atol: float = 1e-12) -> bool:
    """Elementwise absolute-tolerance equality (no relative term)."""
    a, b = np.asarray(a), np.asarray(b)
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= atol))


def is_hermitian(m, atol: float = HERMITIAN_ATOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and allclose(m, m.conj().T, atol)


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix over ``dims``.

    Construction validates the state to ``1e-10``; pass ``check=False`` only
    for intermediate values that are known to be valid by construction.
    """

    matrix: np.ndarray
    dims: tuple[int, ...]

    def __init__(self, matrix, dims: Sequence[int] | None = None, check: bool = True):
        m = np.array(as_matrix(matrix), copy=True)
        if dims is None:
            n = int(round(np.log2(m.shape[0]))) if m.shape[0] > 1 else 0
            if 2**n != m.shape[0] or n == 0:
                raise ValueError("dims must be given for non-qubit registers")
            dims = (2,) * n
        dims = tuple(int(d) for d in dims)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)
        if check:
            self.validate()
        m.setflags(write=False)

    def validate(self, atol: float = HERMITIAN_ATOL) -> None:
        m = self.matrix
        if any(d < 2 for d in self.dims):
            raise ValueError(f"subsystem dimensions must be >= 2, got {self.dims}")
        if m.shape[0] != m.shape[1] or m.shape[0] != int(np.prod(self.dims)):
            raise ValueError(f"matrix shape {m.shape} does not match dims {self.dims}")
        if not is_hermitian(m, atol):
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1.0) > atol:
            raise ValueError(f"density matrix trace is {tr.real:.3g}, expected 1")
        if np.linalg.eigvalsh(m).min() < -atol:
            raise ValueError("density matrix has negative eigenvalues")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_subsystems(self) -> int:
        return len(self.dims)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def evolve(self, u: np.ndarray) -> "DensityMatrix":
        """Return ``U rho U^dagger``."""
        return DensityMatrix(u @ self.matrix @ dagger(u), self.dims, check=False)

    def __matmul__(self, other: "DensityMatrix") -> "DensityMatrix":
        return tensor(self, other)

    def __repr__(self) -> str:
        return f"DensityMatrix(dims={self.dims})"

    @classmethod
    def pure(cls, ket, dims: Sequence[int] | None = None) -> "DensityMatrix":
        v = np.asarray(ket, dtype=complex).reshape(-1)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()), dims)

    @classmethod
    def basis(cls, index: int, dims: Sequence[int]) -> "DensityMatrix":
        v = np.zeros(int(np.prod(dims)), dtype=complex)
        v[index] = 1.0
        return cls(np.outer(v, v), dims, check=False)

    @classmethod
    def maximally_mixed(cls, dims: Sequence[int]) -> "DensityMatrix":
        d = int(np.prod(dims))
        return cls(np.eye(d, dtype=complex) / d, dims, check=False)


def kron(a, b) -> np.ndarray:
    """Tensor product ``a (x) b``."""
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(ops: Iterable) -> np.ndarray:
    return reduce(np.kron, [as_matrix(o) for o in ops], np.eye(1, dtype=complex))


def tensor(*states: DensityMatrix) -> DensityMatrix:
    matrix = kron_all(s.matrix for s in states)
    dims = tuple(d for s in states for d in s.dims)
    return DensityMatrix(matrix, dims, check=False)


def embed(op, site: int, dims: Sequence[int]) -> np.ndarray:
    """Place a single-subsystem operator at ``site`` of a register."""
    if not 0 <= site < len(dims):
        raise ValueError(f"site {site} out of range for {len(dims)} subsystems")
    return kron_all(op if k == site else np.eye(d) for k, d in enumerate(dims))


def embed_pair(a, b, i: int, j: int, dims: Sequence[int]) -> np.ndarray:
    """Return ``a_i b_j`` on the full register (``i != j``)."""
    if i == j:
        raise ValueError("pair sites must differ")
    return embed(a, i, dims) @ embed(b, j, dims)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Trace out every subsystem not in ``keep``; kept order is preserved."""
    keep = sorted(set(int(k) for k in keep))
    n = rho.n_subsystems
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"subsystem indices {keep} invalid for {n} subsystems")
    if len(keep) == n:
        return rho
    dims = rho.dims
    t = rho.matrix.reshape(dims + dims)
    traced = [k for k in range(n) if k not in keep]
    # contract bra/ket indices of traced subsystems, highest first so axes stay valid
    for k in reversed(traced):
        cur = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + cur)
    kept_dims = tuple(dims[k] for k in keep)
    d = int(np.prod(kept_dims))
    return DensityMatrix(t.reshape(d, d), kept_dims, check=False)


def herm_propagator(h, t: float) -> np.ndarray:
    """``exp(-i h t)`` of a Hermitian ``h`` via its eigendecomposition."""
    h = as_matrix(h)
    if not is_hermitian(h):
        raise ValueError("propagator requires a Hermitian generator")
    evals, evecs = np.linalg.eigh((h + dagger(h)) / 2)
    return (evecs * np.exp(-1j * evals * t)) @ dagger(evecs)


def herm_function(h, fn) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix spectrally."""
    h = as_matrix(h)
    if not is_hermitian(h):
        raise ValueError("matrix function requires a Hermitian argument")
    evals, evecs = np.linalg.eigh((h + dagger(h)) / 2)
    return (evecs * fn(evals)) @ dagger(evecs)


def shannon_entropy(probs) -> float:
    """``-sum p ln p`` in nats, with ``0 ln 0 = 0``."""
    p = np.asarray(probs, dtype=float)
    p = np.where(p < EIGEN_CLAMP, 0.0, p)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Von Neumann entropy in nats. Eigenvalues below 1e-10 count as zero."""
    return max(shannon_entropy(rho.eigenvalues()), 0.0)


def expectation(rho: DensityMatrix, obs, atol: float = HERMITIAN_ATOL) -> float:
    obs = as_matrix(obs)
    if obs.shape != rho.matrix.shape:
        raise ValueError(f"observable shape {obs.shape} does not match state {rho.matrix.shape}")
    value = np.trace(obs @ rho.matrix)
    if abs(value.imag) > atol:
        raise ValueError(f"expectation has imaginary part {value.imag:.3g}; observable not Hermitian?")
    return float(value.real)


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    if rho.dims != sigma.dims:
        raise ValueError(f"dimension mismatch: {rho.dims} vs {sigma.dims}")
    diff = rho.matrix - sigma.matrix
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh((diff + dagger(diff)) / 2))))


def frobenius(a) -> float:
    return float(np.linalg.norm(np.asarray(a), "fro"))
