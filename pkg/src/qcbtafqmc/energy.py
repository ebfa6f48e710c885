"""Composite energy: exact active-space energy plus an AFQMC correction.

``total = e_act_ref + (E_full_AFQMC - E_act_AFQMC)``, where both AFQMC runs
use the same tomography-reconstructed trial (padded with the frozen core in
the full space).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .afqmc import AFQMCConfig, EnergyTrace, run_afqmc
from .cbt import CBTConfig, TrialWavefunction, reconstruct_trial
from .exactdiag import Determinant, fci_ground_state
from .hamio import ActiveSpaceSpec, Hamiltonian, extract_active_space
from .qsim import from_civector


@dataclass
class CompositeEnergy:
    e_act_ref: float
    e_full_afqmc: EnergyTrace
    e_act_afqmc: EnergyTrace
    total: float
    total_stderr: float
    trial: TrialWavefunction | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def assemble(cls, e_act_ref: float, full: EnergyTrace, act: EnergyTrace, **kw) -> "CompositeEnergy":
        total = e_act_ref + (full.mean - act.mean)
        return cls(e_act_ref, full, act, total, math.hypot(full.stderr, act.stderr), **kw)

    def to_dict(self) -> dict:
        return {
            "total": self.total, "total_stderr": self.total_stderr,
            "e_act_ref": self.e_act_ref,
            "e_full_afqmc": self.e_full_afqmc.mean, "e_full_afqmc_stderr": self.e_full_afqmc.stderr,
            "e_act_afqmc": self.e_act_afqmc.mean, "e_act_afqmc_stderr": self.e_act_afqmc.stderr,
            "full_afqmc_config": self.e_full_afqmc.config,
            "act_afqmc_config": self.e_act_afqmc.config,
            **self.meta,
        }

    def write_json(self, path: str | Path, **extra) -> None:
        Path(path).write_text(json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True) + "\n")


def _sort_parity(seq) -> int:
    """Sign of the permutation sorting ``seq`` (distinct entries)."""
    seq = list(seq)
    inversions = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return -1 if inversions % 2 else 1


def _embed_string(mask: int, frozen, active) -> tuple[int, int]:
    mapped = [active[p] for p in range(len(active)) if (mask >> p) & 1]
    orbs = list(frozen) + mapped
    return sum(1 << q for q in orbs), _sort_parity(orbs)


def pad_trial(trial: TrialWavefunction, frozen, active, n_orb_full: int) -> TrialWavefunction:
    """Express an active-space trial in the full orbital space.

    Frozen orbitals are doubly occupied in every determinant. Coefficients
    pick up the parity of reordering each spin string into ascending
    full-space order (active orbitals need not be contiguous or sorted).
    """
    dets, coeffs = [], []
    for d, c in zip(trial.dets, trial.coeffs):
        a, sa = _embed_string(d.alpha_occ, frozen, active)
        b, sb = _embed_string(d.beta_occ, frozen, active)
        dets.append(Determinant(a, b))
        coeffs.append(c * sa * sb)
    prov = dict(trial.provenance, padded_from_active=True)
    return TrialWavefunction(dets, np.array(coeffs), n_orb_full, prov)


def sub_seed(seed: int, stream: int) -> int:
    """Deterministic 32-bit child seed of ``seed`` for the given stream."""
    return int(np.random.SeedSequence([int(seed), 7, int(stream)]).generate_state(1)[0])


def composite_energy(h_full: Hamiltonian, spec: ActiveSpaceSpec, cbt_cfg: CBTConfig,
                     afqmc_cfg: AFQMCConfig) -> CompositeEnergy:
    frozen, active = spec.resolve(h_full)
    h_act = extract_active_space(h_full, spec)
    ground = fci_ground_state(h_act)
    sv = from_civector(ground, 2 * h_act.n_orb)
    trial_act = reconstruct_trial(sv, cbt_cfg, label="active-space exact ground state")
    trial_full = pad_trial(trial_act, frozen, active, h_full.n_orb)
    cfg_full = replace(afqmc_cfg, seed=sub_seed(afqmc_cfg.seed, 0))
    cfg_act = replace(afqmc_cfg, seed=sub_seed(afqmc_cfg.seed, 1))
    full = run_afqmc(h_full, trial_full, cfg_full)
    act = run_afqmc(h_act, trial_act, cfg_act)
    meta = {"cbt_seed": cbt_cfg.seed, "afqmc_seed": afqmc_cfg.seed,
            "trial_determinants": len(trial_act),
            "total_shots": trial_act.provenance["total_shots"],
            "frozen_orbitals": list(frozen), "active_orbitals": list(active)}
    return CompositeEnergy.assemble(ground.energy, full, act, trial=trial_act, meta=meta)
