"""Full configuration interaction over a (small) orbital space.

Determinants are pairs of occupation bitmasks ``(alpha_occ, beta_occ)``;
bit ``p`` set means spatial orbital ``p`` is occupied. CI amplitudes use the
alpha-string-then-beta-string phase convention, so the amplitude of a
determinant is the coefficient of ``a+_{alpha...} a+_{beta...} |vac>`` with
each string created in ascending orbital order.

For qubit work the spin orbital ``(p, alpha)`` sits on bit ``2p`` of the
basis index and ``(p, beta)`` on bit ``2p + 1`` (interleaved). The qubit
label used in circuits is the position of that bit in the printed bitstring,
most significant first; see :mod:`qcbtafqmc.qsim`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import CapacityError, DimensionError, ParseError
from .hamio import Hamiltonian

DEFAULT_DIM_CAP = 10**6
DENSE_LIMIT = 2000


@dataclass(frozen=True, order=True)
class Determinant:
    alpha_occ: int
    beta_occ: int

    @property
    def alpha_list(self) -> list[int]:
        return occupied(self.alpha_occ)

    @property
    def beta_list(self) -> list[int]:
        return occupied(self.beta_occ)

    def to_index(self) -> int:
        """Basis-state index under the interleaved qubit convention."""
        return interleave(self.alpha_occ, self.beta_occ)

    @classmethod
    def from_index(cls, index: int, n_orb: int) -> "Determinant":
        a, b = deinterleave(index, n_orb)
        return cls(a, b)


@dataclass
class CIVector:
    basis: list
    amplitudes: np.ndarray
    energy: float | None = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if len(self.basis) != len(self.amplitudes):
            raise DimensionError("basis and amplitude lengths differ")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def as_dict(self) -> dict:
        return dict(zip(self.basis, self.amplitudes))


def occupied(mask: int) -> list[int]:
    out = []
    p = 0
    while mask:
        if mask & 1:
            out.append(p)
        mask >>= 1
        p += 1
    return out


def interleave(alpha: int, beta: int) -> int:
    idx = 0
    p = 0
    while alpha or beta:
        idx |= (alpha & 1) << (2 * p)
        idx |= (beta & 1) << (2 * p + 1)
        alpha >>= 1
        beta >>= 1
        p += 1
    return idx


def deinterleave(index: int, n_orb: int) -> tuple[int, int]:
    alpha = beta = 0
    for p in range(n_orb):
        alpha |= ((index >> (2 * p)) & 1) << p
        beta |= ((index >> (2 * p + 1)) & 1) << p
    if index >> (2 * n_orb):
        raise DimensionError(f"basis index {index} needs more than {n_orb} orbitals")
    return alpha, beta


@lru_cache(maxsize=None)
def strings(n_orb: int, n_el: int) -> tuple[int, ...]:
    """All occupation bitmasks with ``n_el`` bits set, ascending."""
    return tuple(sorted(sum(1 << p for p in c) for c in itertools.combinations(range(n_orb), n_el)))


def ci_basis(n_orb: int, n_alpha: int, n_beta: int) -> list[Determinant]:
    """Determinants ordered lexicographically on (alpha_occ, beta_occ)."""
    return [Determinant(a, b) for a in strings(n_orb, n_alpha) for b in strings(n_orb, n_beta)]


def ci_dimension(h: Hamiltonian) -> int:
    return len(strings(h.n_orb, h.n_alpha)) * len(strings(h.n_orb, h.n_beta))


def hf_determinant(n_alpha: int, n_beta: int) -> Determinant:
    return Determinant((1 << n_alpha) - 1, (1 << n_beta) - 1)


@lru_cache(maxsize=None)
def _excitation_operators(n_orb: int, n_el: int) -> tuple:
    """Sparse matrices of E_pq = a+_p a_q restricted to one spin's string space."""
    strs = strings(n_orb, n_el)
    index = {s: i for i, s in enumerate(strs)}
    dim = len(strs)
    ops = []
    for p in range(n_orb):
        row = []
        for q in range(n_orb):
            rows, cols, vals = [], [], []
            for i, s in enumerate(strs):
                if not (s >> q) & 1:
                    continue
                t = s ^ (1 << q)
                if (t >> p) & 1:
                    continue
                sign = (-1) ** (bin(s & ((1 << q) - 1)).count("1")
                                + bin(t & ((1 << p) - 1)).count("1"))
                rows.append(index[t | (1 << p)])
                cols.append(i)
                vals.append(sign)
            row.append(scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(dim, dim)))
        ops.append(row)
    return tuple(tuple(r) for r in ops)


class _HamiltonianOperator:
    """Matrix-free H acting on CI coefficient arrays shaped (n_a_str, n_b_str, k)."""

    def __init__(self, h: Hamiltonian):
        self.h = h
        n = h.n_orb
        self.na = len(strings(n, h.n_alpha))
        self.nb = len(strings(n, h.n_beta))
        self.ea = _excitation_operators(n, h.n_alpha)
        self.eb = _excitation_operators(n, h.n_beta)
        self.k1 = h.h - 0.5 * np.einsum("prrq->pq", h.v)
        self.v2 = h.v.reshape(n * n, n * n)

    def _e(self, p, q, c):
        na, nb, k = c.shape
        out = (self.ea[p][q] @ c.reshape(na, nb * k)).reshape(na, nb, k)
        cb = c.transpose(1, 0, 2).reshape(nb, na * k)
        out = out + (self.eb[p][q] @ cb).reshape(nb, na, k).transpose(1, 0, 2)
        return out

    def apply(self, c: np.ndarray) -> np.ndarray:
        n = self.h.n_orb
        d = np.array([[self._e(p, q, c) for q in range(n)] for p in range(n)])
        out = self.h.e_core * c + np.einsum("pq,pqijk->ijk", self.k1, d)
        t = np.tensordot(self.v2, d.reshape(n * n, *c.shape), axes=(1, 0)).reshape(d.shape)
        for p in range(n):
            for q in range(n):
                out = out + 0.5 * self._e(p, q, t[p, q])
        return out


def apply_hamiltonian(h: Hamiltonian, vec: CIVector) -> CIVector:
    """Return H|v> on the same determinant basis (unnormalized)."""
    basis = ci_basis(h.n_orb, h.n_alpha, h.n_beta)
    if list(vec.basis) != basis:
        raise DimensionError("CI vector basis does not match the Hamiltonian's determinant space")
    op = _HamiltonianOperator(h)
    c = vec.amplitudes.reshape(op.na, op.nb, 1)
    return CIVector(basis, op.apply(c).reshape(-1))


def hamiltonian_matrix(h: Hamiltonian) -> np.ndarray:
    """Dense CI matrix; only sensible for small spaces."""
    op = _HamiltonianOperator(h)
    dim = op.na * op.nb
    mat = np.empty((dim, dim))
    chunk = 128
    for start in range(0, dim, chunk):
        stop = min(start + chunk, dim)
        block = np.zeros((dim, stop - start))
        block[np.arange(start, stop), np.arange(stop - start)] = 1.0
        mat[:, start:stop] = op.apply(block.reshape(op.na, op.nb, -1)).reshape(dim, -1)
    return mat


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(vec)))
    return vec * (abs(vec[k]) / vec[k])


def fci_ground_state(h: Hamiltonian, dim_cap: int = DEFAULT_DIM_CAP, tol: float = 1e-12) -> CIVector:
    """Lowest eigenpair of the CI Hamiltonian.

    Dense diagonalization up to ``DENSE_LIMIT`` determinants, Lanczos (ARPACK)
    beyond. The phase is fixed so the largest amplitude is real positive.
    """
    dim = ci_dimension(h)
    if dim > dim_cap:
        raise CapacityError(f"CI dimension {dim} exceeds cap {dim_cap}")
    basis = ci_basis(h.n_orb, h.n_alpha, h.n_beta)
    if dim <= DENSE_LIMIT:
        mat = hamiltonian_matrix(h)
        mat = 0.5 * (mat + mat.T)
        w, u = scipy.linalg.eigh(mat, subset_by_index=(0, 0))
        energy, vec = float(w[0]), u[:, 0]
    else:
        op = _HamiltonianOperator(h)
        lin = scipy.sparse.linalg.LinearOperator(
            (dim, dim), matvec=lambda x: op.apply(x.reshape(op.na, op.nb, 1)).reshape(-1),
            dtype=float)
        # A symmetric start vector (e.g. HF plus a constant) would confine Lanczos
        # to one spin-flip sector; a fixed-seed generic vector reaches every sector.
        guess = np.random.default_rng(0).normal(size=dim) * 1e-2
        guess[0] += 1.0
        w, u = scipy.sparse.linalg.eigsh(lin, k=1, which="SA", v0=guess, tol=tol)
        energy, vec = float(w[0]), u[:, 0]
    vec = _fix_phase(vec.astype(complex) / np.linalg.norm(vec))
    return CIVector(basis, vec, energy)


# ---------------------------------------------------------------- text I/O

def format_bitstring(index: int, n_qubits: int) -> str:
    return format(index, f"0{n_qubits}b")


def write_civector(vec: CIVector, n_orb: int, path: str | Path | None = None) -> str:
    """``bitstring re im`` lines, most-significant qubit first."""
    n_qubits = 2 * n_orb
    lines = [f"{format_bitstring(d.to_index(), n_qubits)}  {float(a.real)!r}  {float(a.imag)!r}"
             for d, a in zip(vec.basis, vec.amplitudes)]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_civector(text: str) -> tuple[CIVector, int]:
    """Parse ``bitstring re im`` lines; returns the vector and orbital count."""
    basis, amps, width = [], [], None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 3 or set(parts[0]) - {"0", "1"}:
            raise ParseError(f"expected 'bitstring re im', got {s!r}", n)
        if width is None:
            width = len(parts[0])
        elif len(parts[0]) != width:
            raise ParseError("inconsistent bitstring width", n)
        if width % 2:
            raise ParseError("bitstring width must be even (two qubits per orbital)", n)
        try:
            amps.append(complex(float(parts[1]), float(parts[2])))
        except ValueError:
            raise ParseError(f"bad amplitude in {s!r}", n) from None
        basis.append(Determinant.from_index(int(parts[0], 2), width // 2))
    if width is None:
        raise ParseError("no amplitudes found", 1)
    return CIVector(basis, np.array(amps)), width // 2
