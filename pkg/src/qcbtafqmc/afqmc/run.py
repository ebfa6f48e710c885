"""Driver: walker initialization, block loop, population control and blocking."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import WeightCollapseError
from ..hamio import CholeskyFactors, Hamiltonian, cholesky_factorize
from .propagation import (CHUNK_WALKERS, WalkerEnsemble, build_propagator, determinant_orbitals,
                          measure, reorthonormalize, step_walkers)

log = logging.getLogger(__name__)

THREADS_ENV = "QCBTAFQMC_THREADS"


@dataclass(frozen=True)
class AFQMCConfig:
    blocks: int = 2000
    steps_per_block: int = 10
    n_walkers: int = 480
    dt: float = 0.005
    seed: int = 0
    n_equilibration: int = 1000
    reortho_interval: int = 5
    init: str = "dominant"  # or "trial"
    threads: int | None = None
    chol_threshold: float = 1e-6
    energy_cap: float = 10.0
    force_bias_cap: float = 1.0
    walker_chunk: int = CHUNK_WALKERS  # fixed batch size; results never depend on threads

    def __post_init__(self):
        for name in ("blocks", "steps_per_block", "n_walkers", "reortho_interval", "walker_chunk"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.n_equilibration < self.blocks:
            raise ValueError("n_equilibration must be in [0, blocks)")
        if self.init not in ("dominant", "trial"):
            raise ValueError("init must be 'dominant' or 'trial'")

    def resolved_threads(self) -> int:
        limit = os.environ.get(THREADS_ENV)
        n = self.threads if self.threads is not None else (os.cpu_count() or 1)
        if limit:
            n = min(n, max(1, int(limit)))
        return max(1, n)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class BlockingResult:
    mean: float
    stderr: float
    block_size: int
    levels: list = field(default_factory=list)  # (block size, n blocks, stderr, stderr error)


def blocking_analysis(data) -> BlockingResult:
    """Flyvbjerg-Petersen reblocking with the optimal-level criterion ``B^3 > 2N (s_B/s_0)^4``."""
    x = np.asarray(data, dtype=float)
    n0 = len(x)
    if n0 == 0:
        raise ValueError("no samples to analyse")
    mean = float(x.mean())
    if n0 == 1:
        return BlockingResult(mean, 0.0, 1, [(1, 1, 0.0, 0.0)])
    levels = []
    size = 1
    while len(x) >= 2:
        n = len(x)
        err = float(np.std(x, ddof=1) / math.sqrt(n))
        levels.append((size, n, err, err / math.sqrt(2 * (n - 1))))
        if n % 2:
            x = x[:-1]
        x = 0.5 * (x[0::2] + x[1::2])
        size *= 2
    s0 = levels[0][2]
    if s0 == 0.0:
        return BlockingResult(mean, 0.0, 1, levels)
    chosen = None
    for size, n, err, _ in levels:
        if size ** 3 > 2 * n0 * (err / s0) ** 4:
            chosen = (size, err)
            break
    if chosen is None:
        # no plateau reached: report the largest-block estimate, conservatively
        chosen = max(((lvl[0], lvl[2]) for lvl in levels), key=lambda t: t[1])
    return BlockingResult(mean, chosen[1], chosen[0], levels)


@dataclass
class EnergyTrace:
    block_energies: np.ndarray
    block_weights: np.ndarray
    mean: float
    stderr: float
    n_equilibration: int
    config: dict = field(default_factory=dict)
    n_killed: int = 0
    blocking: BlockingResult | None = None

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["block", "total_weight", "block_energy"])
        for i, (w, e) in enumerate(zip(self.block_weights, self.block_energies)):
            wr.writerow([i, repr(float(w)), repr(float(e))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def summary(self) -> dict:
        return {
            "mean": self.mean, "stderr": self.stderr,
            "n_blocks": int(len(self.block_energies)), "n_equilibration": self.n_equilibration,
            "block_size": self.blocking.block_size if self.blocking else 1,
            "killed_walkers": self.n_killed, "seed": self.config.get("seed"),
            "config": self.config,
        }

    def write_summary(self, path: str | Path, **extra) -> None:
        Path(path).write_text(json.dumps({**self.summary(), **extra}, indent=2, sort_keys=True) + "\n")


def population_control(ens: WalkerEnsemble, rng: np.random.Generator) -> np.ndarray:
    """Pair branching: the heaviest walker is paired with the lightest.

    A pair (big, small) becomes two copies of one of them, chosen with
    probability proportional to weight, each carrying half the pair's
    weight. Repeats while the heaviest exceeds twice the mean and the
    lightest is below half of it. Total weight is conserved exactly.
    Returns the source index of every new walker.
    """
    w = ens.weights.copy()
    n = len(w)
    total = w.sum()
    if n < 2 or total <= 0:
        return np.arange(n)
    mean = total / n
    order = np.argsort(w, kind="stable")
    src = np.arange(n)
    lo, hi = 0, n - 1
    while lo < hi:
        small, big = order[lo], order[hi]
        if not (w[big] > 2.0 * mean and w[small] < 0.5 * mean):
            break
        pair = w[big] + w[small]
        if rng.random() < w[big] / pair:
            src[small] = src[big]
        else:
            src[big] = src[small]
        w[big] = w[small] = 0.5 * pair
        lo += 1
        hi -= 1
    ens.take(src)
    ens.weights = w
    return src


def _init_ensemble(trial, n_walkers: int, mode: str, n_orb: int) -> WalkerEnsemble:
    if mode == "dominant":
        pa, pb = determinant_orbitals(trial.dominant(), n_orb)
        return WalkerEnsemble(np.repeat(pa[None], n_walkers, 0), np.repeat(pb[None], n_walkers, 0))
    # cycle through trial determinants in proportion to |c_k|^2
    probs = np.abs(trial.coeffs) ** 2
    counts = np.floor(probs / probs.sum() * n_walkers).astype(int)
    order = np.argsort(-probs, kind="stable")
    counts[order[: n_walkers - counts.sum()]] += 1
    orbs = [determinant_orbitals(trial.dets[k], n_orb) for k in range(len(trial)) for _ in range(counts[k])]
    return WalkerEnsemble(np.array([o[0] for o in orbs]), np.array([o[1] for o in orbs]))


def canonical_trial(trial):
    """Normalize and fix the global phase so the dominant coefficient is real positive."""
    t = trial.normalized()
    k = int(np.argmax(np.abs(t.coeffs)))
    return t.scaled(abs(t.coeffs[k]) / t.coeffs[k])


def _weighted_energy(weights, eloc) -> tuple[float, float]:
    tw = float(weights.sum())
    return float(np.dot(weights, eloc.real)), tw


def run_afqmc(h: Hamiltonian, trial, cfg: AFQMCConfig,
              chol: CholeskyFactors | None = None) -> EnergyTrace:
    """Phaseless AFQMC; returns the per-block energies and the blocked mean."""
    if chol is None:
        chol = cholesky_factorize(h, cfg.chol_threshold)
    trial = canonical_trial(trial)
    prop = build_propagator(h, chol, trial, cfg.dt, cfg.force_bias_cap)
    prop.walker_chunk = cfg.walker_chunk
    threads = cfg.resolved_threads()
    ens = _init_ensemble(trial, cfg.n_walkers, cfg.init, h.n_orb)
    measured = measure(prop, ens, threads)
    num, tw = _weighted_energy(ens.weights, measured[2])
    prop.e0_shift = num / tw
    log.info("initial energy %.10f, %d fields, %d threads", prop.e0_shift, prop.n_fields, threads)

    energies, weights = [], []
    step_count = 0
    for block in range(cfg.blocks):
        e_num = w_sum = 0.0
        for step in range(cfg.steps_per_block):
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, 0, block, step])))
            step_walkers(prop, ens, rng, threads, cfg.energy_cap, measured)
            step_count += 1
            if step_count % cfg.reortho_interval == 0:
                reorthonormalize(ens)
            if ens.weights.sum() < 1e-10 * cfg.n_walkers:
                raise WeightCollapseError(
                    f"total walker weight collapsed to {ens.weights.sum():.3e} "
                    f"at block {block}, step {step} ({ens.n_killed} walkers killed)")
            # the next step's measurement doubles as this step's energy sample
            measured = measure(prop, ens, threads)
            bad = ~np.isfinite(measured[2])
            eloc = np.where(bad, 0.0, measured[2])
            wts = np.where(bad, 0.0, ens.weights)
            num, tw = _weighted_energy(wts, eloc)
            e_num += num
            w_sum += tw
        block_energy = e_num / w_sum
        energies.append(block_energy)
        weights.append(float(ens.weights.sum()))
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, 1, block])))
        src = population_control(ens, rng)
        ens.weights *= cfg.n_walkers / ens.weights.sum()
        measured = tuple(m[src] for m in measured)
        prop.e0_shift = block_energy

    energies = np.array(energies)
    post = energies[cfg.n_equilibration:]
    blk = blocking_analysis(post)
    return EnergyTrace(energies, np.array(weights), blk.mean, blk.stderr, cfg.n_equilibration,
                       cfg.as_dict(), ens.n_killed, blk)
