"""Phaseless propagation of Slater-determinant walkers.

Writing ``v_i = sum_pq L^i_pq E_pq`` the Hamiltonian is split as::

    H = K + sum_i vbar_i v_i - 1/2 sum_i vbar_i^2 + 1/2 sum_i (v_i - vbar_i)^2
    K_pq = h_pq - 1/2 sum_r (pr|rq)

with ``vbar_i`` the trial expectation of ``v_i``. The auxiliary-field
operators are ``nu_i = i (v_i - vbar_i)``; the one-body step uses
``K + sum_i vbar_i L^i``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import DimensionError, LocalEnergyError
from ..hamio import CholeskyFactors, Hamiltonian
from .trial import TrialAlgebra

log = logging.getLogger(__name__)

TAYLOR_ORDER = 6
TAYLOR_TOL = 1e-10
TAYLOR_MAX_ORDER = 20
CHUNK_WALKERS = 160


@dataclass
class Propagator:
    dt: float
    h1_eff: np.ndarray
    h1_exp_half: np.ndarray
    chol: CholeskyFactors
    mean_field_shift: np.ndarray  # vbar_i, real
    e0_shift: float
    algebra: TrialAlgebra
    n_alpha: int
    n_beta: int
    force_bias_cap: float = 1.0
    walker_chunk: int = CHUNK_WALKERS

    @property
    def n_fields(self) -> int:
        return self.chol.n_vectors

    @property
    def vectors(self) -> np.ndarray:
        return self.chol.vectors


@dataclass
class Walker:
    phi_alpha: np.ndarray
    phi_beta: np.ndarray
    weight: float = 1.0
    overlap: complex = 0.0
    hybrid_phase: float = 0.0


class WalkerEnsemble:
    """Batched walker storage; arrays are indexed by walker first."""

    def __init__(self, phi_a: np.ndarray, phi_b: np.ndarray, weights=None):
        self.phi_a = np.asarray(phi_a, dtype=complex)
        self.phi_b = np.asarray(phi_b, dtype=complex)
        w = self.phi_a.shape[0]
        self.weights = np.ones(w) if weights is None else np.asarray(weights, dtype=float)
        self.overlap = np.zeros(w, dtype=complex)
        self.eloc = np.zeros(w, dtype=complex)
        self.phase = np.zeros(w)
        self.n_killed = 0

    def __len__(self):
        return self.phi_a.shape[0]

    @classmethod
    def from_walkers(cls, walkers) -> "WalkerEnsemble":
        ens = cls(np.array([w.phi_alpha for w in walkers]), np.array([w.phi_beta for w in walkers]),
                  [w.weight for w in walkers])
        ens.overlap = np.array([w.overlap for w in walkers], dtype=complex)
        ens.phase = np.array([w.hybrid_phase for w in walkers], dtype=float)
        return ens

    def walker(self, i: int) -> Walker:
        return Walker(self.phi_a[i].copy(), self.phi_b[i].copy(), float(self.weights[i]),
                      complex(self.overlap[i]), float(self.phase[i]))

    def take(self, index) -> None:
        """Replace the population by walkers at ``index`` (copies)."""
        self.phi_a = self.phi_a[index].copy()
        self.phi_b = self.phi_b[index].copy()
        self.overlap = self.overlap[index].copy()
        self.eloc = self.eloc[index].copy()
        self.phase = self.phase[index].copy()


def determinant_orbitals(det, n_orb: int) -> tuple[np.ndarray, np.ndarray]:
    eye = np.eye(n_orb, dtype=complex)
    return eye[:, det.alpha_list], eye[:, det.beta_list]


def one_rdm(trial) -> tuple[np.ndarray, np.ndarray]:
    """Spin-resolved <a+_p a_q> of the (normalized) trial wavefunction."""
    n = trial.n_orb
    rho = [np.zeros((n, n), dtype=complex), np.zeros((n, n), dtype=complex)]
    norm = float(np.vdot(trial.coeffs, trial.coeffs).real)
    dets, coeffs = trial.dets, trial.coeffs
    for k, dk in enumerate(dets):
        for l, dl in enumerate(dets):
            weight = np.conj(coeffs[k]) * coeffs[l]
            for spin, (bra, ket, other_bra, other_ket) in enumerate(
                    ((dk.alpha_occ, dl.alpha_occ, dk.beta_occ, dl.beta_occ),
                     (dk.beta_occ, dl.beta_occ, dk.alpha_occ, dl.alpha_occ))):
                if other_bra != other_ket:
                    continue
                diff = bra ^ ket
                if diff == 0:
                    for p in range(n):
                        if (ket >> p) & 1:
                            rho[spin][p, p] += weight
                elif bin(diff).count("1") == 2:
                    p = (bra & diff).bit_length() - 1  # created
                    q = (ket & diff).bit_length() - 1  # annihilated
                    t = ket ^ (1 << q)
                    sign = (-1) ** (bin(ket & ((1 << q) - 1)).count("1")
                                    + bin(t & ((1 << p) - 1)).count("1"))
                    rho[spin][p, q] += weight * sign
    return rho[0] / norm, rho[1] / norm


def build_propagator(h: Hamiltonian, chol: CholeskyFactors, trial, dt: float,
                     force_bias_cap: float = 1.0) -> Propagator:
    if dt <= 0:
        raise ValueError("time step must be positive")
    n = h.n_orb
    if chol.vectors.shape[1:] != (n, n):
        raise DimensionError("Cholesky vectors do not match the Hamiltonian orbital count")
    if trial.n_orb != n:
        raise DimensionError(f"trial has {trial.n_orb} orbitals, Hamiltonian {n}")
    lvec = chol.vectors
    rho_a, rho_b = one_rdm(trial)
    vbar = np.einsum("ipq,pq->i", lvec, (rho_a + rho_b)).real
    # one-body part from reordering (pq|rs) E_pq E_rs, built from the vectors
    k1 = h.h - 0.5 * np.einsum("ipr,irq->pq", lvec, lvec)
    h1_eff = k1 + np.einsum("i,ipq->pq", vbar, lvec)
    h1_exp_half = scipy.linalg.expm(-0.5 * dt * h1_eff)
    algebra = TrialAlgebra(trial, h.h, lvec, h.e_core, h.n_alpha, h.n_beta)
    return Propagator(dt, h1_eff, h1_exp_half, chol, vbar, 0.0, algebra,
                      h.n_alpha, h.n_beta, force_bias_cap)


def _cap_bias(xbar: np.ndarray, cap: float) -> np.ndarray:
    mag = np.abs(xbar)
    scale = np.where(mag > cap, cap / np.where(mag > 0, mag, 1.0), 1.0)
    return xbar * scale


def force_bias_from_vbias(prop: Propagator, vbias: np.ndarray) -> np.ndarray:
    """-sqrt(dt) (<nu_i>_walker - <nu_i>_trial) with nu_i = i v_i, magnitude capped."""
    xbar = -np.sqrt(prop.dt) * 1j * (vbias - prop.mean_field_shift[None, :])
    return _cap_bias(xbar, prop.force_bias_cap)


def _single(w: Walker):
    return w.phi_alpha[None], w.phi_beta[None]


def trial_overlap(algebra: TrialAlgebra, w: Walker) -> complex:
    return complex(algebra.overlap(*_single(w))[0])


def local_energy(algebra: TrialAlgebra, w: Walker) -> complex:
    ovlp, _, eloc = algebra.mixed(*_single(w))
    if ovlp[0] == 0:
        raise LocalEnergyError("walker has zero overlap with the trial")
    return complex(eloc[0])


def force_bias(prop: Propagator, w: Walker) -> np.ndarray:
    ovlp, vbias, _ = prop.algebra.mixed(*_single(w), need_energy=False)
    if ovlp[0] == 0:
        raise LocalEnergyError("force bias undefined for a walker with zero overlap")
    return force_bias_from_vbias(prop, vbias)[0]


def apply_exponential(op: np.ndarray, phi: np.ndarray, order: int = TAYLOR_ORDER) -> np.ndarray:
    """exp(op) @ phi by Taylor series; continues past ``order`` until terms drop below tolerance."""
    out = phi.copy()
    term = phi
    norm = np.linalg.norm(phi, axis=(-2, -1))
    norm = np.where(norm > 0, norm, 1.0)
    for k in range(1, TAYLOR_MAX_ORDER + 1):
        term = op @ term / k
        out = out + term
        if k >= order and np.all(np.linalg.norm(term, axis=(-2, -1)) / norm < TAYLOR_TOL):
            break
    return out


def _chunks(n: int, size: int = CHUNK_WALKERS):
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def _map_chunks(fn, n: int, threads: int, size: int = CHUNK_WALKERS):
    # Chunk boundaries never depend on the thread count: batched BLAS calls
    # may round differently for different batch shapes, so fixing the shapes
    # keeps results bit-identical however the chunks are scheduled.
    parts = _chunks(n, size)
    if threads <= 1 or len(parts) == 1:
        return [fn(p) for p in parts]
    with ThreadPoolExecutor(max_workers=min(threads, len(parts))) as pool:
        return list(pool.map(fn, parts))


def measure(prop: Propagator, ens: WalkerEnsemble, threads: int = 1):
    """Overlap, force-bias fields and local energy for every walker."""
    def work(sl):
        return prop.algebra.mixed(ens.phi_a[sl], ens.phi_b[sl])
    res = _map_chunks(work, len(ens), threads, prop.walker_chunk)
    return tuple(np.concatenate(parts) for parts in zip(*res))


def step_walkers(prop: Propagator, ens: WalkerEnsemble, rng: np.random.Generator,
                 threads: int = 1, energy_cap: float = 10.0,
                 measured=None) -> WalkerEnsemble:
    """Advance every walker by one time step (in place) and return the ensemble.

    ``measured`` may carry ``(overlap, vbias, eloc)`` already computed for
    the current walkers. Local energies before the step are stored in
    ``ens.eloc``.
    """
    dt = prop.dt
    w = len(ens)
    ovlp, vbias, eloc = measured if measured is not None else measure(prop, ens, threads)
    fields = rng.standard_normal((w, prop.n_fields))

    bad = ~np.isfinite(eloc) | (ovlp == 0) | ~np.all(np.isfinite(vbias), axis=1)
    if np.any(bad & (ens.weights > 0)):
        ens.n_killed += int(np.sum(bad & (ens.weights > 0)))
        log.debug("zeroing %d walkers with non-finite local energy", int(np.sum(bad)))
    ens.weights = np.where(bad, 0.0, ens.weights)
    eloc = np.where(bad, prop.e0_shift, eloc)
    vbias = np.where(bad[:, None], prop.mean_field_shift[None, :], vbias)
    ens.eloc = eloc
    ens.overlap = ovlp

    xbar = force_bias_from_vbias(prop, vbias)
    xshift = fields - xbar
    sqrt_dt = np.sqrt(dt)

    def propagate(sl):
        vhs = 1j * sqrt_dt * np.tensordot(xshift[sl], prop.vectors, axes=(1, 0))
        pa = prop.h1_exp_half @ ens.phi_a[sl]
        pb = prop.h1_exp_half @ ens.phi_b[sl]
        pa = apply_exponential(vhs, pa)
        pb = apply_exponential(vhs, pb)
        pa = prop.h1_exp_half @ pa
        pb = prop.h1_exp_half @ pb
        return pa, pb, prop.algebra.overlap(pa, pb)

    res = _map_chunks(propagate, w, threads, prop.walker_chunk)
    ens.phi_a = np.concatenate([r[0] for r in res])
    ens.phi_b = np.concatenate([r[1] for r in res])
    new_ovlp = np.concatenate([r[2] for r in res])

    # Importance function: overlap ratio times the scalar mean-field factor
    # exp(-i sqrt(dt) xshift.vbar) and the shifted-Gaussian ratio
    # exp(x.xbar - xbar.xbar/2). Only its phase enters the weight.
    log_scalar = -1j * sqrt_dt * (xshift @ prop.mean_field_shift)
    log_scalar += np.einsum("wi,wi->w", fields, xbar) - 0.5 * np.einsum("wi,wi->w", xbar, xbar)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = new_ovlp / ovlp * np.exp(1j * log_scalar.imag)
    dtheta = np.angle(ratio)
    cosine = np.where(np.isfinite(ratio), np.maximum(0.0, np.cos(dtheta)), 0.0)
    bound = energy_cap / sqrt_dt
    e_re = np.clip(eloc.real, prop.e0_shift - bound, prop.e0_shift + bound)
    ens.weights = ens.weights * np.exp(-dt * (e_re - prop.e0_shift)) * cosine
    ens.weights = np.where(np.isfinite(ens.weights), ens.weights, 0.0)
    ens.phase = ens.phase + np.where(np.isfinite(dtheta), dtheta, 0.0)
    ens.overlap = new_ovlp
    return ens


def reorthonormalize(ens: WalkerEnsemble) -> None:
    """QR-orthonormalize walker orbitals; the overlap cache absorbs det(R)."""
    qa, ra = np.linalg.qr(ens.phi_a)
    qb, rb = np.linalg.qr(ens.phi_b)
    scale = np.linalg.det(ra) * np.linalg.det(rb)
    ens.phi_a, ens.phi_b = qa, qb
    with np.errstate(divide="ignore", invalid="ignore"):
        ens.overlap = np.where(scale != 0, ens.overlap / scale, 0.0)
