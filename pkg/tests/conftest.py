import json
from importlib.resources import files

import numpy as np
import pytest

from qcbtafqmc.hamio import Hamiltonian, read_fcidump

DATA = files("qcbtafqmc") / "data"


def bundled(name: str) -> Hamiltonian:
    return read_fcidump(DATA / f"{name}.fcidump")


def reference_energies() -> dict:
    return json.loads((DATA / "reference_energies.json").read_text())


def random_hamiltonian(n_orb: int, n_elec: int, seed: int, ms2: int = 0, rank: int = 4,
                       scale: float = 0.3) -> Hamiltonian:
    """Random real Hamiltonian with a positive semidefinite two-electron tensor."""
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(n_orb, n_orb))
    h = 0.5 * (h + h.T) - 2.0 * np.eye(n_orb) * np.arange(1, n_orb + 1) / n_orb
    m = rng.normal(scale=scale, size=(rank, n_orb, n_orb))
    m = 0.5 * (m + m.transpose(0, 2, 1))
    v = np.einsum("kpq,krs->pqrs", m, m)
    return Hamiltonian(n_orb, n_elec, ms2, float(rng.normal()), h, v)


@pytest.fixture(scope="session")
def h2():
    return bundled("h2_sto3g")


@pytest.fixture(scope="session")
def h4():
    return bundled("h4_sto3g")


@pytest.fixture(scope="session")
def refs():
    return reference_energies()
