import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcbtafqmc.errors import CapacityError, CircuitError, DegeneratePairError, DimensionError
from qcbtafqmc.exactdiag import CIVector, Determinant, fci_ground_state
from qcbtafqmc.qsim import (MAX_QUBITS, Gate, Statevector, apply_circuit, build_interference_circuit,
                            from_civector, hamming, read_circuit, sample_basis, write_circuit)


def random_state(n_qubits, rng):
    amps = rng.normal(size=1 << n_qubits) + 1j * rng.normal(size=1 << n_qubits)
    return Statevector(n_qubits, amps / np.linalg.norm(amps))


def closed_form(m, n, n_qubits, variant):
    amps = np.zeros(1 << n_qubits, dtype=complex)
    amps[m] = 1 / np.sqrt(2)
    amps[n] = (1 if variant == "U" else -1j) / np.sqrt(2)
    return amps


def prepare(m, n, n_qubits, variant):
    circ = build_interference_circuit(m, n, n_qubits, variant)
    return apply_circuit(circ.inverse(), Statevector.basis_state(n_qubits, 0)).amps


# ---------------------------------------------------------------- embedding

def test_single_determinant_embedding():
    sv = from_civector(CIVector([Determinant(1, 1)], [1.0]), 4)
    assert sv.amps[3] == 1.0 and np.count_nonzero(sv.amps) == 1


def test_two_determinant_embedding():
    sv = from_civector(CIVector([Determinant(1, 1), Determinant(2, 2)], [2 ** -0.5, 2 ** -0.5]), 4)
    assert np.count_nonzero(sv.amps) == 2
    assert abs(sv.norm() - 1) <= 1e-12


def test_h2_ground_state_embedding(h2):
    gs = fci_ground_state(h2)
    sv = from_civector(gs, 4)
    assert abs(sv.norm() - 1) <= 1e-12
    assert sv.amps[0b0011] == gs.as_dict()[Determinant(1, 1)]


def test_embedding_capacity():
    with pytest.raises(CapacityError):
        from_civector(CIVector([Determinant(3, 3)], [1.0]), 2)
    with pytest.raises(CapacityError):
        Statevector(MAX_QUBITS + 1, np.zeros(2))
    with pytest.raises(DimensionError):
        Statevector(2, np.zeros(3))


# ---------------------------------------------------------------- sampling

def test_basis_state_sampling():
    assert sample_basis(Statevector.basis_state(3, 5), 1000, seed=1) == {5: 1000}


def test_uniform_sampling_statistics():
    shots = 10**6
    hist = sample_basis(Statevector(2, np.full(4, 0.5)), shots, seed=7)
    sigma = np.sqrt(0.25 * 0.75 / shots)
    for k in range(4):
        assert abs(hist[k] / shots - 0.25) <= 5 * sigma
    assert sum(hist.values()) == shots


def test_sampling_determinism():
    sv = random_state(5, np.random.default_rng(0))
    assert sample_basis(sv, 5000, 42) == sample_basis(sv, 5000, 42)
    assert sample_basis(sv, 5000, 42) != sample_basis(sv, 5000, 43)


# ---------------------------------------------------------------- circuits

def test_reference_pair():
    c = build_interference_circuit(1, 14, 4, "U")
    assert c.flag_qubit == 2
    assert c.cnot_count == 3
    assert [g for g in c.gates if g.name == "CNOT"] == [Gate("CNOT", (2, t)) for t in (0, 1, 3)]
    assert Gate("X", (3,)) in c.gates
    assert c.gates[-1] == Gate("H", (2,))
    v = build_interference_circuit(1, 14, 4, "V")
    assert Gate("S", (2,)) in v.gates and v.cnot_count == 3
    assert [g for g in v.gates if g.name != "S"] == c.gates


def test_hamming_one_pair():
    c = build_interference_circuit(0b0101, 0b0111, 4, "U")
    assert c.cnot_count == 0
    assert {g.name for g in c.gates} <= {"H", "X"}
    assert sum(g.name == "H" for g in c.gates) == 1
    np.testing.assert_allclose(prepare(0b0101, 0b0111, 4, "U"), closed_form(0b0101, 0b0111, 4, "U"), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12).flatmap(lambda q: st.tuples(
    st.just(q), st.integers(0, (1 << q) - 1), st.integers(0, (1 << q) - 1))),
    st.sampled_from(["U", "V"]))
def test_circuit_prepares_closed_form(qmn, variant):
    q, m, n = qmn
    if m == n:
        return
    c = build_interference_circuit(m, n, q, variant)
    np.testing.assert_allclose(prepare(m, n, q, variant), closed_form(m, n, q, variant), atol=1e-12)
    assert c.cnot_count == hamming(m, n) - 1
    assert c.cnot_count <= q
    assert {g.name for g in c.gates} <= {"H", "X", "S", "CNOT"}


def test_interference_probabilities_match_amplitudes():
    rng = np.random.default_rng(3)
    for _ in range(50):
        q = int(rng.integers(2, 9))
        sv = random_state(q, rng)
        m, n = rng.choice(1 << q, size=2, replace=False)
        pu = abs(apply_circuit(build_interference_circuit(n, m, q, "U"), sv).amps[0]) ** 2
        pv = abs(apply_circuit(build_interference_circuit(n, m, q, "V"), sv).amps[0]) ** 2
        an, am = sv.amps[n], sv.amps[m]
        assert abs(pu - abs(an + am) ** 2 / 2) <= 1e-12
        assert abs(pv - abs(an + 1j * am) ** 2 / 2) <= 1e-12


def test_unitarity_and_norm():
    rng = np.random.default_rng(4)
    for _ in range(20):
        sv = random_state(8, rng)
        m, n = rng.choice(256, size=2, replace=False)
        for variant in "UV":
            c = build_interference_circuit(int(m), int(n), 8, variant)
            out = apply_circuit(c, sv)
            assert abs(out.norm() - 1) <= 1e-12
            np.testing.assert_allclose(apply_circuit(c.inverse(), out).amps, sv.amps, atol=1e-12)


def test_single_hadamard():
    from qcbtafqmc.qsim import InterferenceCircuit
    c = InterferenceCircuit(0, 1, 3, 2, "U", [Gate("H", (2,))])
    out = apply_circuit(c, Statevector.basis_state(3, 0)).amps
    np.testing.assert_allclose(out[[0, 1]], [2 ** -0.5, 2 ** -0.5], atol=1e-15)


def test_basis_state_gives_half_probability():
    sv = Statevector.basis_state(6, 37)
    amp = apply_circuit(build_interference_circuit(37, 12, 6, "U"), sv).amps[0]
    assert abs(abs(amp) - 2 ** -0.5) <= 1e-12


def test_circuit_errors():
    with pytest.raises(DegeneratePairError):
        build_interference_circuit(3, 3, 4)
    with pytest.raises(CircuitError):
        build_interference_circuit(1, 16, 4)
    c = build_interference_circuit(1, 2, 2)
    with pytest.raises(CircuitError):
        apply_circuit(c, Statevector.basis_state(3, 0))
    from qcbtafqmc.qsim import InterferenceCircuit
    bad = InterferenceCircuit(0, 1, 2, 0, "U", [Gate("H", (5,))])
    with pytest.raises(CircuitError):
        apply_circuit(bad, Statevector.basis_state(2, 0))


def test_circuit_file_round_trip(tmp_path):
    c = build_interference_circuit(1, 14, 4, "V")
    write_circuit(c, tmp_path / "c.txt")
    assert read_circuit((tmp_path / "c.txt").read_text()) == c.gates
