import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import fock
from conftest import bundled, random_hamiltonian
from qcbtafqmc.errors import CapacityError, DimensionError, ParseError
from qcbtafqmc.exactdiag import (CIVector, Determinant, apply_hamiltonian, ci_basis, ci_dimension,
                                 fci_ground_state, hamiltonian_matrix, hf_determinant,
                                 read_civector, write_civector)
from qcbtafqmc.hamio import Hamiltonian, determinant_energy


def _basis_vector(h, det):
    basis = ci_basis(h.n_orb, h.n_alpha, h.n_beta)
    amps = np.zeros(len(basis), dtype=complex)
    amps[basis.index(det)] = 1.0
    return CIVector(basis, amps)


def test_one_orbital_closed_shell():
    h = Hamiltonian(1, 2, 0, 0.0, [[-1.0]], np.full((1, 1, 1, 1), 0.5))
    gs = fci_ground_state(h)
    assert gs.energy == pytest.approx(-1.5, abs=1e-14)
    assert gs.basis == [Determinant(1, 1)]
    assert gs.amplitudes[0] == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["h2_sto3g", "h2_631g", "h4_sto3g", "h4_631g"])
def test_matches_external_fci(name, refs):
    gs = fci_ground_state(bundled(name))
    assert abs(gs.energy - refs[name]["e_fci"]) <= 1e-8
    assert abs(gs.norm() - 1.0) <= 1e-12


@pytest.mark.parametrize("n_orb, n_alpha, n_beta", [(2, 1, 1), (3, 2, 1), (4, 2, 2), (4, 1, 0)])
def test_matrix_matches_fock_space_oracle(n_orb, n_alpha, n_beta):
    h = random_hamiltonian(n_orb, n_alpha + n_beta, seed=n_orb * 10 + n_alpha, ms2=n_alpha - n_beta)
    ours = hamiltonian_matrix(h)
    full = fock.hamiltonian(h).toarray()
    idx = [fock.det_index(d.alpha_occ, d.beta_occ, n_orb) for d in ci_basis(n_orb, n_alpha, n_beta)]
    np.testing.assert_allclose(ours, full[np.ix_(idx, idx)], atol=1e-12)
    # the sector is closed under H, so its spectrum is the oracle's restricted spectrum
    sec = fock.sector(h, n_alpha, n_beta)
    assert sorted(sec) == sorted(idx)
    np.testing.assert_allclose(np.linalg.eigvalsh(ours), np.linalg.eigvalsh(full[np.ix_(sec, sec)]),
                               atol=1e-10)


def test_slater_condon_double_excitation():
    h = random_hamiltonian(2, 2, seed=3)
    hf = hf_determinant(1, 1)
    out = apply_hamiltonian(h, _basis_vector(h, hf)).as_dict()
    # <1a 1b|H|0a 0b> = (1a 0a|1b 0b) = (10|10)
    assert out[Determinant(0b10, 0b10)] == pytest.approx(h.v[1, 0, 1, 0], abs=1e-14)
    assert out[hf] == pytest.approx(determinant_energy(h, [0], [0]), abs=1e-12)


def test_zero_vector():
    h = bundled("h4_sto3g")
    basis = ci_basis(h.n_orb, h.n_alpha, h.n_beta)
    out = apply_hamiltonian(h, CIVector(basis, np.zeros(len(basis))))
    assert not np.any(out.amplitudes)


def test_basis_mismatch():
    h = bundled("h2_sto3g")
    with pytest.raises(DimensionError):
        apply_hamiltonian(h, CIVector([Determinant(1, 1)], [1.0]))
    with pytest.raises(DimensionError):
        CIVector([Determinant(1, 1)], [1.0, 0.0])


@pytest.mark.parametrize("name", ["h2_sto3g", "h4_sto3g", "h4_631g"])
def test_eigen_residual(name):
    h = bundled(name)
    gs = fci_ground_state(h)
    hv = apply_hamiltonian(h, gs).amplitudes
    assert np.linalg.norm(hv - gs.energy * gs.amplitudes) <= 1e-8


def test_iterative_solver_agrees_with_dense():
    h = random_hamiltonian(7, 6, seed=11)  # 1225 determinants
    assert ci_dimension(h) == 1225
    dense = fci_ground_state(h)
    import qcbtafqmc.exactdiag as ed
    old = ed.DENSE_LIMIT
    try:
        ed.DENSE_LIMIT = 100
        lanczos = fci_ground_state(h)
    finally:
        ed.DENSE_LIMIT = old
    assert abs(dense.energy - lanczos.energy) <= 1e-9
    assert abs(abs(np.vdot(dense.amplitudes, lanczos.amplitudes)) - 1) <= 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_hermiticity(seed):
    h = random_hamiltonian(4, 4, seed)
    rng = np.random.default_rng(seed)
    basis = ci_basis(4, 2, 2)
    u = CIVector(basis, rng.normal(size=36) + 1j * rng.normal(size=36))
    v = CIVector(basis, rng.normal(size=36) + 1j * rng.normal(size=36))
    lhs = np.vdot(u.amplitudes, apply_hamiltonian(h, v).amplitudes)
    rhs = np.conj(np.vdot(v.amplitudes, apply_hamiltonian(h, u).amplitudes))
    assert abs(lhs - rhs) <= 1e-10


def test_variational_bound_six_orbitals():
    h = random_hamiltonian(6, 6, seed=2)
    gs = fci_ground_state(h)
    assert gs.energy <= determinant_energy(h, [0, 1, 2], [0, 1, 2]) + 1e-12


def test_capacity_error(h4):
    with pytest.raises(CapacityError):
        fci_ground_state(h4, dim_cap=10)


def test_phase_convention(h2):
    gs = fci_ground_state(h2)
    k = int(np.argmax(np.abs(gs.amplitudes)))
    assert gs.amplitudes[k].imag == 0.0 and gs.amplitudes[k].real > 0


def test_index_convention():
    # alpha on even bits, beta on odd bits
    d = Determinant(0b01, 0b01)
    assert d.to_index() == 0b0011
    assert Determinant.from_index(0b1001, 2) == Determinant(0b01, 0b10)
    with pytest.raises(DimensionError):
        Determinant.from_index(1 << 4, 2)


def test_civector_file_round_trip(h4):
    gs = fci_ground_state(h4)
    text = write_civector(gs, h4.n_orb)
    back, n_orb = read_civector(text)
    assert n_orb == h4.n_orb
    assert back.basis == gs.basis
    np.testing.assert_array_equal(back.amplitudes, gs.amplitudes)


def test_h2_state_file(h2):
    lines = write_civector(fci_ground_state(h2), 2).splitlines()
    assert len(lines) == 4
    assert lines[0].split()[0] == "0011"


@pytest.mark.parametrize("text", ["0011 1.0\n", "001 1.0 0.0\n", "0011 1.0 0.0\n01 1.0 0.0\n", "", "0021 1 0\n"])
def test_civector_parse_errors(text):
    with pytest.raises(ParseError):
        read_civector(text)
