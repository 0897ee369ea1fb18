import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twostroke.circuits import (
    CNOT,
    RESET,
    RZ,
    SQRT_X,
    H,
    X,
    Circuit,
    CircuitParseError,
    Gate,
    GateKind,
    apply_circuit,
    build_heat_stroke_circuit,
    build_work_stroke_circuit,
    circuit_unitary,
    dumps,
    hopping_block,
    loads,
    sample_sigma_z,
    xx_block,
    yy_block,
)
from twostroke.model import ChainSpec, bath_states, ground_state, stroke_hamiltonians
from twostroke.qmath import SIGMA_X, SIGMA_Y, DensityMatrix, herm_propagator, kron, partial_trace, tensor

from conftest import REFERENCE_SETS, HEAT_ENGINE, REFRIGERATOR, random_density, taylor_expm

SINGLE = [GateKind.RZ, GateKind.RX, GateKind.RY, GateKind.X, GateKind.SQRT_X, GateKind.H, GateKind.S, GateKind.S_DAGGER]


def random_circuit(rng, width, depth, allow_reset=False):
    gates = []
    for _ in range(depth):
        r = rng.random()
        if width > 1 and r < 0.3:
            a, b = rng.choice(width, size=2, replace=False)
            gates.append(CNOT(a, b))
        elif allow_reset and r < 0.4:
            gates.append(RESET(int(rng.integers(width))))
        else:
            kind = SINGLE[rng.integers(len(SINGLE))]
            angle = float(rng.uniform(-math.pi, math.pi)) if kind in (GateKind.RZ, GateKind.RX, GateKind.RY) else None
            gates.append(Gate(kind, (int(rng.integers(width)),), angle))
    return Circuit(width, gates)


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate(GateKind.RZ, (0,))
    with pytest.raises(ValueError):
        Gate(GateKind.H, (0,), 0.3)
    with pytest.raises(ValueError):
        CNOT(1, 1)
    with pytest.raises(ValueError):
        Gate(GateKind.CNOT, (0,))
    with pytest.raises(ValueError):
        Circuit(2, [X(2)])


def test_fixed_gate_matrices():
    assert np.allclose(SQRT_X(0).matrix() @ SQRT_X(0).matrix(), SIGMA_X)
    assert np.allclose(RZ(0, 0.4).matrix(), np.diag(np.exp([-0.2j, 0.2j])))


def test_apply_circuit_examples():
    rho = DensityMatrix.maximally_mixed((2, 2))
    assert np.allclose(apply_circuit(rho, Circuit(2)).matrix, rho.matrix)
    flipped = apply_circuit(DensityMatrix.basis(0, (2,)), Circuit(1, [X(0)]))
    assert np.allclose(flipped.matrix, np.diag([0, 1]))
    reset = apply_circuit(DensityMatrix.maximally_mixed((2,)), Circuit(1, [RESET(0)]))
    assert np.allclose(reset.matrix, np.diag([1, 0]))


def test_reset_acts_only_on_its_qubit():
    rng = np.random.default_rng(5)
    a, b = DensityMatrix(random_density(rng, 2)), DensityMatrix(random_density(rng, 2))
    out = apply_circuit(tensor(a, b), Circuit(2, [RESET(1)]))
    assert np.allclose(out.matrix, tensor(a, DensityMatrix.basis(0, (2,))).matrix, atol=1e-12)


def test_circuit_unitary_examples():
    assert np.allclose(circuit_unitary(Circuit(1, [H(0), H(0)])), np.eye(2), atol=1e-12)
    assert np.allclose(circuit_unitary(Circuit(2, [CNOT(0, 1), CNOT(0, 1)])), np.eye(4), atol=1e-12)
    cnot = circuit_unitary(Circuit(2, [CNOT(0, 1)]))
    assert np.allclose(cnot, np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]))
    with pytest.raises(NotImplementedError):
        circuit_unitary(Circuit(1, [RESET(0)]))


def test_qubit_zero_is_leftmost_factor():
    u = circuit_unitary(Circuit(3, [X(0)]))
    assert np.allclose(u, kron(SIGMA_X, np.eye(4)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), width=st.integers(1, 4), depth=st.integers(0, 20))
def test_circuit_then_inverse_is_identity(seed, width, depth):
    c = random_circuit(np.random.default_rng(seed), width, depth)
    u = circuit_unitary(c + c.inverse())
    phase = u[0, 0] / abs(u[0, 0])
    assert np.allclose(u, phase * np.eye(2**width), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), width=st.integers(1, 3))
def test_apply_circuit_keeps_states_valid(seed, width):
    rng = np.random.default_rng(seed)
    c = random_circuit(rng, width, 15, allow_reset=True)
    rho = DensityMatrix(random_density(rng, 2**width))
    out = apply_circuit(rho, c)
    assert abs(np.trace(out.matrix) - 1) < 1e-10
    assert np.allclose(out.matrix, out.matrix.conj().T, atol=1e-10)
    assert np.linalg.eigvalsh(out.matrix).min() > -1e-10


def test_apply_circuit_matches_unitary_conjugation():
    rng = np.random.default_rng(9)
    c = random_circuit(rng, 3, 20)
    rho = DensityMatrix(random_density(rng, 8))
    u = circuit_unitary(c)
    assert np.allclose(apply_circuit(rho, c).matrix, u @ rho.matrix @ u.conj().T, atol=1e-12)


@pytest.mark.parametrize("theta", [0.0, 0.3, -1.1, math.pi])
def test_two_qubit_blocks_match_power_series(theta):
    xx, yy = kron(SIGMA_X, SIGMA_X), kron(SIGMA_Y, SIGMA_Y)
    assert np.allclose(circuit_unitary(Circuit(2, xx_block(0, 1, theta))), taylor_expm(-0.5j * theta * xx, 40), atol=1e-10)
    assert np.allclose(circuit_unitary(Circuit(2, yy_block(0, 1, theta))), taylor_expm(-0.5j * theta * yy, 40), atol=1e-10)
    assert np.allclose(
        circuit_unitary(Circuit(2, hopping_block(0, 1, theta))), taylor_expm(-0.5j * theta * (xx + yy), 40), atol=1e-10
    )


def test_heat_stroke_zero_duration_is_identity():
    u = circuit_unitary(build_heat_stroke_circuit(HEAT_ENGINE, 0.0))
    assert np.allclose(u, np.eye(16), atol=1e-12)


@pytest.mark.parametrize("name", sorted(REFERENCE_SETS))
@pytest.mark.parametrize("g_tau", [0.3, 0.8, math.pi / 2, 2.9])
def test_heat_stroke_is_exact_under_resonance(name, g_tau):
    spec = REFERENCE_SETS[name]
    tau = g_tau / spec.g_c
    u = circuit_unitary(build_heat_stroke_circuit(spec, tau))
    exact = herm_propagator(stroke_hamiltonians(spec).h_q, tau)
    assert np.linalg.norm(u - exact) < 1e-10


def test_heat_stroke_full_swap_moves_bath_into_site():
    spec = HEAT_ENGINE
    rc, rh = bath_states(spec)
    start = tensor(rc, ground_state(spec), rh)
    out = apply_circuit(start, build_heat_stroke_circuit(spec, math.pi / 2 / spec.g_c))
    assert np.allclose(partial_trace(out, [1]).matrix, rc.matrix, atol=1e-10)
    assert np.allclose(partial_trace(out, [2]).matrix, rh.matrix, atol=1e-10)


def test_detuned_heat_stroke_is_not_exact():
    spec = ChainSpec.two_site(0.75, 1.0, 0.8, 0.4, 0.8, omega_c=0.85)
    tau = 0.5 / 0.8
    u = circuit_unitary(build_heat_stroke_circuit(spec, tau))
    exact = herm_propagator(stroke_hamiltonians(spec).h_q, tau)
    assert np.linalg.norm(u - exact) > 1e-6
    fine = circuit_unitary(build_heat_stroke_circuit(spec, tau, steps=200))
    assert np.linalg.norm(fine - exact) < np.linalg.norm(u - exact)


def test_work_stroke_examples():
    spec = REFRIGERATOR
    assert np.allclose(circuit_unitary(build_work_stroke_circuit(spec, 0.0)), np.eye(4), atol=1e-12)
    for tau in (0.2, 1.0, math.pi / 2 / 0.8, 3.7):
        u = circuit_unitary(build_work_stroke_circuit(spec, tau))
        assert np.linalg.norm(u - herm_propagator(stroke_hamiltonians(spec).h_w, tau)) < 1e-10


def test_work_stroke_full_swap_on_resonant_chain_exchanges_populations():
    spec = ChainSpec.two_site(1.0, 1.0, 0.8, 0.4, 0.8)
    out = apply_circuit(DensityMatrix.basis(2, (2, 2)), build_work_stroke_circuit(spec, math.pi / 2 / 0.8))
    assert out.matrix[1, 1].real == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(w1=st.floats(0.1, 3.0), w2=st.floats(0.1, 3.0), g=st.floats(0.01, 2.0), gt=st.floats(0.0, math.pi))
def test_exact_work_lowering_matches_propagator(w1, w2, g, gt):
    spec = ChainSpec.two_site(w1, w2, g, 0.5, 1.0)
    tau = gt / g
    u = circuit_unitary(build_work_stroke_circuit(spec, tau))
    assert np.linalg.norm(u - herm_propagator(stroke_hamiltonians(spec).h_w, tau)) < 1e-10


def test_single_trotter_slice_is_exact_only_for_resonant_chain():
    tau = 1.0
    resonant = ChainSpec.two_site(1.0, 1.0, 0.8, 0.4, 0.8)
    u = circuit_unitary(build_work_stroke_circuit(resonant, tau, steps=1))
    assert np.linalg.norm(u - herm_propagator(stroke_hamiltonians(resonant).h_w, tau)) < 1e-10
    u = circuit_unitary(build_work_stroke_circuit(HEAT_ENGINE, tau, steps=1))
    assert np.linalg.norm(u - herm_propagator(stroke_hamiltonians(HEAT_ENGINE).h_w, tau)) > 1e-3


def test_longer_chains_need_explicit_slicing():
    spec = ChainSpec((1.0, 1.0, 1.0), (0.5, 0.5), 0.4, 0.8)
    with pytest.raises(ValueError):
        build_work_stroke_circuit(spec, 1.0)
    u = circuit_unitary(build_work_stroke_circuit(spec, 1.0, steps=400))
    assert np.linalg.norm(u - herm_propagator(stroke_hamiltonians(spec).h_w, 1.0)) < 1e-2


def test_text_format_round_trip():
    c = Circuit(3, [H(0), CNOT(0, 2), RZ(1, 0.123456789), RESET(2), X(1)])
    text = dumps(c)
    assert text.splitlines()[0] == "QUBITS 3"
    assert "RZ 1 0.123456789" in text
    assert loads(text) == c


def test_parser_reports_line_numbers():
    with pytest.raises(CircuitParseError) as err:
        loads("H 0\n# comment\nRZ 1\n")
    assert err.value.line == 3
    with pytest.raises(CircuitParseError) as err:
        loads("H 0\nBOGUS 1\n")
    assert err.value.line == 2
    with pytest.raises(CircuitParseError):
        loads("QUBITS 2\nCNOT 0 4\n")
    assert loads("") == Circuit(0)
    assert loads("h 0   # lower case is accepted\n").gates == (H(0),)


def test_sample_sigma_z_examples():
    est = sample_sigma_z(DensityMatrix.basis(0, (2,)), 0, 1000, seed=1)
    assert (est.mean, est.std_error) == (1.0, 0.0)
    one = sample_sigma_z(DensityMatrix.maximally_mixed((2,)), 0, 1, seed=3)
    assert one.mean in (-1.0, 1.0)
    again = sample_sigma_z(DensityMatrix.maximally_mixed((2,)), 0, 8192, seed=42)
    assert again == sample_sigma_z(DensityMatrix.maximally_mixed((2,)), 0, 8192, seed=42)
    with pytest.raises(ValueError):
        sample_sigma_z(DensityMatrix.maximally_mixed((2,)), 0, 0)


def test_sample_sigma_z_reads_requested_qubit():
    rho = tensor(DensityMatrix.basis(0, (2,)), DensityMatrix.basis(1, (2,)))
    assert sample_sigma_z(rho, 0, 50, seed=0).mean == 1.0
    assert sample_sigma_z(rho, 1, 50, seed=0).mean == -1.0


def test_sample_sigma_z_concentrates_for_mixed_state():
    rho = DensityMatrix.maximally_mixed((2,))
    sigma = 1 / math.sqrt(8192)
    inside = sum(abs(sample_sigma_z(rho, 0, 8192, seed=s).mean) <= 3 * sigma for s in range(1000))
    assert inside >= 990
