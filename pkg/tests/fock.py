"""Brute-force second-quantized oracle on the full Fock space.

Spin orbitals are laid out as all alpha modes (0..n-1) followed by all
beta modes (n..2n-1); Jordan-Wigner signs count occupied modes below the
target. With this layout a determinant a+_{alpha...} a+_{beta...}|0>
(ascending within each spin) is the bare Fock vector, so matrix elements
can be compared to the CI code entry by entry. Nothing here shares code
with the package.
"""

import numpy as np
import scipy.sparse as sp


def annihilator(mode: int, n_modes: int) -> sp.csr_matrix:
    dim = 1 << n_modes
    rows, cols, vals = [], [], []
    for x in range(dim):
        if (x >> mode) & 1:
            rows.append(x ^ (1 << mode))
            cols.append(x)
            vals.append((-1) ** bin(x & ((1 << mode) - 1)).count("1"))
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


def operators(n_orb: int):
    n_modes = 2 * n_orb
    a = [annihilator(j, n_modes) for j in range(n_modes)]
    return a, [op.T.tocsr() for op in a]


def hamiltonian(h) -> sp.csr_matrix:
    """Fock-space matrix of e_core + sum h_pq E_pq + 1/2 sum (pq|rs)(E_pq E_rs - d_qr E_ps)."""
    n = h.n_orb
    a, ad = operators(n)
    dim = 1 << (2 * n)
    e = [[(ad[p] @ a[q] + ad[n + p] @ a[n + q]).tocsr() for q in range(n)] for p in range(n)]
    out = sp.identity(dim, format="csr") * h.e_core
    for p in range(n):
        for q in range(n):
            out = out + h.h[p, q] * e[p][q]
            for r in range(n):
                for s in range(n):
                    c = h.v[p, q, r, s]
                    if c == 0.0:
                        continue
                    term = e[p][q] @ e[r][s]
                    if q == r:
                        term = term - e[p][s]
                    out = out + 0.5 * c * term
    return out.tocsr()


def det_index(alpha_occ: int, beta_occ: int, n_orb: int) -> int:
    return alpha_occ | (beta_occ << n_orb)


def slater_state(phi_a: np.ndarray, phi_b: np.ndarray) -> np.ndarray:
    """prod_j (sum_p phi_a[p,j] a+_p) prod_j (sum_p phi_b[p,j] a+_(n+p)) |0>, leftmost column first."""
    n = phi_a.shape[0]
    a, ad = operators(n)
    vec = np.zeros(1 << (2 * n), dtype=complex)
    vec[0] = 1.0
    cols = [(phi_b[:, j], n) for j in reversed(range(phi_b.shape[1]))]
    cols += [(phi_a[:, j], 0) for j in reversed(range(phi_a.shape[1]))]
    for col, off in cols:
        vec = sum(col[p] * (ad[off + p] @ vec) for p in range(n))
    return vec


def trial_state(trial) -> np.ndarray:
    n = trial.n_orb
    vec = np.zeros(1 << (2 * n), dtype=complex)
    for d, c in zip(trial.dets, trial.coeffs):
        vec[det_index(d.alpha_occ, d.beta_occ, n)] += c
    return vec


def sector(h, n_alpha: int, n_beta: int) -> np.ndarray:
    """Indices of Fock vectors with the given spin populations."""
    n = h.n_orb
    idx = [x for x in range(1 << (2 * n))
           if bin(x & ((1 << n) - 1)).count("1") == n_alpha and bin(x >> n).count("1") == n_beta]
    return np.array(idx)
