import math

import numpy as np
import pytest

from twostroke.model import ChainSpec

HEAT_ENGINE = ChainSpec.two_site(0.75, 1.0, 0.8, 0.4, 0.8)
REFRIGERATOR = ChainSpec.two_site(0.5, 2.0, 0.8, 1.0, 1.2)
ACCELERATOR = ChainSpec.two_site(2.0, 0.5, 0.8, 1.0, 1.2)
REFERENCE_SETS = {"heat_engine": HEAT_ENGINE, "refrigerator": REFRIGERATOR, "accelerator": ACCELERATOR}

FULL_SWAP = math.pi / 2


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hermitian(rng, dim, scale=1.0):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (a + a.conj().T) / 2


def random_unitary(rng, dim):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(rng, dim, rank=None):
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = a @ a.conj().T
    return m / np.trace(m)


def taylor_expm(a, terms=30):
    """Independent propagator oracle: truncated power series of exp(a)."""
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out
