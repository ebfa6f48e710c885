"""Mixed estimators between a multi-determinant trial and determinant walkers.

Every quantity is evaluated as a numerator ``<D_k|O|phi>``, without
dividing by the per-determinant overlap. With the overlap matrix
``S = D_k^T phi = U diag(s) V^dagger`` and a half-rotated operator
``M = O[occ_k, :] phi`` (rotated to ``M' = U^dagger M V``)::

    <D_k|phi>               = det(U V^dagger) prod_j s_j
    <D_k|O|phi>             = det(U V^dagger) sum_j  c_j  M'_jj
    same-spin <D_k|O O|phi> = det(U V^dagger) sum_{j!=l} c_jl (M'_jj M'_ll - M'_jl M'_lj)

where ``c_j`` (``c_jl``) is the product of singular values leaving out
``j`` (``j`` and ``l``). These are polynomial in the walker orbitals and stay
finite when a trial determinant is orthogonal to the walker, which is
the situation right after initializing walkers on one trial determinant.

Determinant work is done once per distinct alpha or beta string and then
combined per trial determinant.
"""

from __future__ import annotations

import numpy as np

from ..exactdiag import occupied
from ..errors import DimensionError


def _leave_out_products(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Products of singular values omitting one index, and omitting two."""
    k = s.shape[-1]
    eye = np.eye(k, dtype=bool)
    one = np.prod(np.where(eye, 1.0, s[..., None, :]), axis=-1)
    mask2 = eye[:, None, :] | eye[None, :, :]
    two = np.prod(np.where(mask2, 1.0, s[..., None, None, :]), axis=-1)
    return one, two


# below this Hadamard ratio |det S| / prod(row norms) the overlap matrix is
# treated as singular and the SVD numerators are used
SINGULAR_RATIO = 1e-8


def _det(m: np.ndarray) -> np.ndarray:
    """Batched determinant, closed form for 1x1 and 2x2 blocks."""
    k = m.shape[-1]
    if k == 1:
        return m[..., 0, 0].copy()
    if k == 2:
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return np.linalg.det(m)


def _inv(m: np.ndarray, det: np.ndarray) -> np.ndarray:
    k = m.shape[-1]
    if k == 1:
        return 1.0 / m
    if k == 2:
        out = np.empty_like(m)
        out[..., 0, 0] = m[..., 1, 1]
        out[..., 1, 1] = m[..., 0, 0]
        out[..., 0, 1] = -m[..., 0, 1]
        out[..., 1, 0] = -m[..., 1, 0]
        return out / det[..., None, None]
    return np.linalg.inv(m)


def _svd_numerators(phi: np.ndarray, h_rows: np.ndarray, l_rows: np.ndarray, occ: np.ndarray):
    """Numerators for one string; finite for singular overlap matrices."""
    smat = phi[:, occ, :]  # (W, k, k)
    u, s, vh = np.linalg.svd(smat)
    phase = np.linalg.det(u) * np.linalg.det(vh)
    det = phase * np.prod(s, axis=-1)
    c1, c2 = _leave_out_products(s)
    uh = np.conj(np.swapaxes(u, -1, -2))
    v = np.conj(np.swapaxes(vh, -1, -2))
    mlp = uh[:, None] @ (l_rows[None] @ phi[:, None]) @ v[:, None]  # (W, nf, k, k)
    diag_l = np.diagonal(mlp, axis1=-2, axis2=-1)
    p1_l = phase[:, None] * np.einsum("wj,wij->wi", c1, diag_l)
    mhp = uh @ (h_rows[None] @ phi) @ v
    p1_h = phase * np.einsum("wj,wj->w", c1, np.diagonal(mhp, axis1=-2, axis2=-1))
    coul = diag_l[..., :, None] * diag_l[..., None, :]
    exch = mlp * np.swapaxes(mlp, -1, -2)
    pair = (coul - exch).sum(axis=1)
    off = ~np.eye(occ.shape[0], dtype=bool)
    p2 = phase * np.sum(np.where(off, c2 * pair, 0.0), axis=(-1, -2))
    return det, p1_h, p1_l, p2


class _SpinBlock:
    """Per-spin data: the distinct occupation strings of the trial."""

    def __init__(self, masks, n_orb: int, n_el: int, h1: np.ndarray, chol: np.ndarray):
        uniq = sorted(set(masks))
        self.index = np.array([uniq.index(m) for m in masks], dtype=int)
        self.n_el = n_el
        self.n_fields = chol.shape[0]
        self.occ = np.array([occupied(m) for m in uniq], dtype=int).reshape(len(uniq), n_el)
        # rows of the operators at the occupied orbitals of each string
        self.h_rows = h1[self.occ]  # (S, n_el, n)
        self.l_rows = np.ascontiguousarray(np.moveaxis(chol[:, self.occ], 0, 1))  # (S, nf, n_el, n)

    def evaluate(self, phi: np.ndarray, need_energy: bool = True):
        """Return det, one-body numerators and summed same-spin two-body numerators.

        ``phi`` has shape (W, n, n_el). Outputs are indexed by (W, S[, nf]).
        Well-conditioned overlap matrices go through the inverse (Green's
        function) route; near-singular ones through the SVD numerators.
        """
        w, n, k = phi.shape
        n_s, nf = self.occ.shape[0], self.n_fields
        det = np.ones((w, n_s), dtype=complex)
        p1_h = np.zeros((w, n_s), dtype=complex)
        p1_l = np.zeros((w, n_s, nf), dtype=complex)
        p2 = np.zeros((w, n_s), dtype=complex)
        if k == 0:
            return det, p1_h, p1_l, p2
        for s in range(n_s):
            occ = self.occ[s]
            smat = phi[:, occ, :]
            d = _det(smat)
            scale = np.prod(np.linalg.norm(smat, axis=-1), axis=-1)
            good = np.abs(d) > SINGULAR_RATIO * scale
            det[:, s] = d
            if np.any(good):
                dg = d[good]
                theta = phi[good] @ _inv(smat[good], dg)  # (G, n, k)
                tflat = np.moveaxis(theta, 1, 0).reshape(n, -1)  # (n, G*k)
                t = (self.l_rows[s].reshape(nf * k, n) @ tflat).reshape(nf, k, theta.shape[0], k)
                t = np.moveaxis(t, 2, 0)  # (G, nf, k, k)
                tr = np.trace(t, axis1=-2, axis2=-1)
                p1_l[good, s] = dg[:, None] * tr
                if need_energy:
                    th = np.einsum("ja,gaj->g", self.h_rows[s], theta)
                    p1_h[good, s] = dg * th
                    sq = (t * np.swapaxes(t, -1, -2)).sum(axis=(1, 2, 3))
                    p2[good, s] = dg * (np.einsum("gi,gi->g", tr, tr) - sq)
            if not np.all(good):
                bad = ~good
                db, hb, lb, pb = _svd_numerators(phi[bad], self.h_rows[s], self.l_rows[s], occ)
                det[bad, s] = db
                p1_l[bad, s] = lb
                p1_h[bad, s] = hb
                p2[bad, s] = pb
        if not need_energy:
            return det, None, p1_l, None
        return det, p1_h, p1_l, p2


class TrialAlgebra:
    """Precomputed trial data for overlaps, force bias and local energy."""

    def __init__(self, trial, h1: np.ndarray, chol: np.ndarray, e_core: float,
                 n_alpha: int, n_beta: int):
        n = h1.shape[0]
        if trial.n_orb != n:
            raise DimensionError(f"trial has {trial.n_orb} orbitals, Hamiltonian {n}")
        for d in trial.dets:
            if bin(d.alpha_occ).count("1") != n_alpha or bin(d.beta_occ).count("1") != n_beta:
                raise DimensionError("trial determinant has the wrong electron count")
            if max(d.alpha_occ, d.beta_occ) >> n:
                raise DimensionError("trial determinant occupies an orbital outside the space")
        chol = np.asarray(chol, dtype=float).reshape(-1, n, n)
        self.n_orb = n
        self.n_fields = chol.shape[0]
        self.e_core = float(e_core)
        self.coeffs_conj = np.conj(np.asarray(trial.coeffs, dtype=complex))
        self.alpha = _SpinBlock([d.alpha_occ for d in trial.dets], n, n_alpha, h1, chol)
        self.beta = _SpinBlock([d.beta_occ for d in trial.dets], n, n_beta, h1, chol)

    def overlap(self, phi_a: np.ndarray, phi_b: np.ndarray) -> np.ndarray:
        """<psi_T|phi> per walker."""
        da = self._det(self.alpha, phi_a)
        db = self._det(self.beta, phi_b)
        return (da[:, self.alpha.index] * db[:, self.beta.index]) @ self.coeffs_conj

    @staticmethod
    def _det(block, phi):
        if block.n_el == 0:
            return np.ones((phi.shape[0], block.occ.shape[0]), dtype=complex)
        return _det(phi[:, block.occ, :])

    def mixed(self, phi_a: np.ndarray, phi_b: np.ndarray, need_energy: bool = True):
        """Overlap, <v_i> mixed estimates and local energy for a batch of walkers.

        Returns ``(overlap, vbias, eloc)``; ``vbias[w, i]`` is
        ``<psi_T|sum_pq L^i_pq E_pq|phi_w> / <psi_T|phi_w>``. Walkers with
        zero overlap get ``nan`` entries.
        """
        da, h_a, l_a, p2_a = self.alpha.evaluate(phi_a, need_energy)
        db, h_b, l_b, p2_b = self.beta.evaluate(phi_b, need_energy)
        ia, ib = self.alpha.index, self.beta.index
        da, db = da[:, ia], db[:, ib]
        l_a, l_b = l_a[:, ia], l_b[:, ib]
        c = self.coeffs_conj
        ovlp = (da * db) @ c
        with np.errstate(divide="ignore", invalid="ignore"):
            vnum = np.einsum("wk,wki->wi", db * c, l_a) + np.einsum("wk,wki->wi", da * c, l_b)
            vbias = vnum / ovlp[:, None]
            eloc = None
            if need_energy:
                h_a, h_b, p2_a, p2_b = h_a[:, ia], h_b[:, ib], p2_a[:, ia], p2_b[:, ib]
                cross = np.einsum("wki,wki->wk", l_a, l_b)
                num = (self.e_core * da * db + db * h_a + da * h_b
                       + 0.5 * (db * p2_a + da * p2_b) + cross)
                eloc = (num @ c) / ovlp
        return ovlp, vbias, eloc
