"""Computational basis tomography of a prepared statevector.

Three measurement stages: basis sampling for magnitudes, then two
interference circuits per retained bitstring to pin its phase relative to
the most probable one. A shot count of ``None`` means infinitely many shots:
the exact outcome probability is used instead of a sampled frequency.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ProtocolError
from .exactdiag import CIVector, Determinant
from .qsim import Statevector, apply_circuit, build_interference_circuit, sample_basis


@dataclass(frozen=True)
class CBTConfig:
    n_f: int | None = 10**6
    n_a: int | None = 10**6
    n_b: int | None = 10**6
    r_max: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("n_f", "n_a", "n_b"):
            val = getattr(self, name)
            if val is not None and val < 1:
                raise ValueError(f"{name} must be a positive shot count or None")
        if self.r_max < 1:
            raise ValueError("r_max must be >= 1")

    @classmethod
    def uniform(cls, shots: int | None, r_max: int, seed: int = 0) -> "CBTConfig":
        return cls(shots, shots, shots, r_max, seed)

    @property
    def exact(self) -> bool:
        return self.n_f is None and self.n_a is None and self.n_b is None


def total_shots(cfg: CBTConfig, r: int) -> int | float:
    """Measurement count ``n_f + (R - 1)(n_a + n_b)``; ``inf`` in exact mode."""
    if None in (cfg.n_f, cfg.n_a, cfg.n_b):
        return math.inf
    return cfg.n_f + (r - 1) * (cfg.n_a + cfg.n_b)


@dataclass
class InterferenceEstimate:
    n: int
    m: int
    a: float
    b: float
    overlap: complex
    sigma: float = 0.0


@dataclass
class TrialWavefunction:
    """Multi-determinant trial state: determinants with complex coefficients."""

    dets: list
    coeffs: np.ndarray
    n_orb: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if len(self.dets) != len(self.coeffs) or not self.dets:
            raise ValueError("trial needs matching, non-empty determinant and coefficient lists")

    def __len__(self):
        return len(self.dets)

    def normalized(self) -> "TrialWavefunction":
        return TrialWavefunction(list(self.dets), self.coeffs / np.linalg.norm(self.coeffs),
                                 self.n_orb, dict(self.provenance))

    def scaled(self, factor: complex) -> "TrialWavefunction":
        return TrialWavefunction(list(self.dets), self.coeffs * factor, self.n_orb,
                                 dict(self.provenance))

    def dominant(self) -> Determinant:
        return self.dets[int(np.argmax(np.abs(self.coeffs)))]

    def to_statevector(self) -> Statevector:
        amps = np.zeros(1 << (2 * self.n_orb), dtype=complex)
        for d, c in zip(self.dets, self.coeffs):
            amps[d.to_index()] += c
        return Statevector(2 * self.n_orb, amps)

    @classmethod
    def from_civector(cls, vec: CIVector, n_orb: int, tol: float = 0.0, **provenance) -> "TrialWavefunction":
        keep = [(d, a) for d, a in zip(vec.basis, vec.amplitudes) if abs(a) > tol]
        dets, coeffs = zip(*keep)
        return cls(list(dets), np.array(coeffs), n_orb, provenance)


def fidelity(trial: TrialWavefunction, sv: Statevector) -> float:
    """|<psi_trial|psi>|^2 with both states normalized."""
    t = trial.to_statevector().amps
    return float(abs(np.vdot(t, sv.amps)) ** 2 / (np.vdot(t, t).real * np.vdot(sv.amps, sv.amps).real))


# ---------------------------------------------------------------- stages

def _stage_seed(seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), *path])


def estimate_magnitudes(sv: Statevector, n_f: int | None, seed: int = 0) -> list:
    """``[(bitstring, magnitude), ...]`` sorted by magnitude descending, then bitstring."""
    if n_f is None:
        probs = sv.probabilities()
        entries = [(int(k), float(np.sqrt(probs[k]))) for k in np.flatnonzero(probs > 0)]
    else:
        if n_f < 1:
            raise ValueError("n_f must be >= 1")
        hist = sample_basis(sv, n_f, _stage_seed(seed, 0))
        entries = [(k, math.sqrt(c / n_f)) for k, c in hist.items()]
    entries.sort(key=lambda e: (-e[1], e[0]))
    return entries


def select_top_r(entries: list, r_max: int) -> list:
    if not entries:
        raise ProtocolError("no bitstrings observed; cannot select determinants")
    return [k for k, _ in entries[:r_max]]


def _zero_probability(sv: Statevector, first: int, second: int, variant: str) -> float:
    circ = build_interference_circuit(first, second, sv.n_qubits, variant)
    amp0 = apply_circuit(circ, sv).amps[0]
    return float(min(max(abs(amp0) ** 2, 0.0), 1.0))


def estimate_interference(sv: Statevector, n: int, m: int, cfg: CBTConfig,
                          prob_n: float | None = None, prob_m: float | None = None,
                          seed: np.random.SeedSequence | int | None = None) -> InterferenceEstimate:
    """Estimate <n|psi><psi|m> from |0>-outcome frequencies of two Clifford circuits.

    ``prob_n`` and ``prob_m`` are the squared magnitudes from the basis
    sampling stage; the exact probabilities are used when omitted.
    """
    p_a = _zero_probability(sv, n, m, "U")  # |(<n| + <m|)psi|^2 / 2
    p_b = _zero_probability(sv, n, m, "V")  # |(<n| + i<m|)psi|^2 / 2
    if seed is None:
        seed = _stage_seed(cfg.seed, 1, n, m)
    rng = np.random.Generator(np.random.Philox(seed))
    # The |0> count of n_a i.i.d. basis measurements is Binomial(n_a, p0).
    a = p_a if cfg.n_a is None else rng.binomial(cfg.n_a, p_a) / cfg.n_a
    b = p_b if cfg.n_b is None else rng.binomial(cfg.n_b, p_b) / cfg.n_b
    probs = sv.probabilities()
    pn = probs[n] if prob_n is None else prob_n
    pm = probs[m] if prob_m is None else prob_m
    overlap = complex(a - 0.5 * (pn + pm), b - 0.5 * (pn + pm))
    var = 0.0
    if cfg.n_a is not None:
        var += a * (1 - a) / cfg.n_a
    if cfg.n_b is not None:
        var += b * (1 - b) / cfg.n_b
    return InterferenceEstimate(n, m, float(a), float(b), overlap, math.sqrt(var))


def reconstruct_trial(sv: Statevector, cfg: CBTConfig, label: str = "") -> TrialWavefunction:
    """Run the full protocol and return the renormalized trial wavefunction."""
    if sv.n_qubits % 2:
        raise ProtocolError("statevector must hold two qubits per spatial orbital")
    entries = estimate_magnitudes(sv, cfg.n_f, cfg.seed)
    kept = select_top_r(entries, cfg.r_max)
    mags = dict(entries)
    ref = kept[0]
    if mags[ref] <= 0.0:
        raise ProtocolError("reference bitstring has zero estimated magnitude")
    coeffs = [complex(mags[ref])]
    sigmas = [0.0]
    for i, k in enumerate(kept[1:], start=1):
        est = estimate_interference(sv, k, ref, cfg, mags[k] ** 2, mags[ref] ** 2,
                                    seed=_stage_seed(cfg.seed, 1, i))
        phase = np.angle(est.overlap)
        coeffs.append(mags[k] * np.exp(1j * phase))
        sigmas.append(est.sigma / abs(est.overlap) if est.overlap != 0 else math.inf)
    coeffs = np.array(coeffs)
    coeffs /= np.linalg.norm(coeffs)
    n_orb = sv.n_qubits // 2
    dets = [Determinant.from_index(k, n_orb) for k in kept]
    r = len(kept)
    shots = total_shots(cfg, r)
    provenance = {
        "n_f": cfg.n_f, "n_a": cfg.n_a, "n_b": cfg.n_b, "r_max": cfg.r_max,
        "seed": cfg.seed, "R": r, "total_shots": shots if math.isfinite(shots) else "inf",
        "source": label, "phase_sigma": sigmas,
    }
    return TrialWavefunction(dets, coeffs, n_orb, provenance)


def shot_sweep(sv: Statevector, shot_list, seeds, r_max: int, label: str = "") -> list:
    """Fidelity for each (shots, seed); ``None`` in ``shot_list`` is exact mode."""
    rows = []
    for shots in shot_list:
        for seed in seeds:
            trial = reconstruct_trial(sv, CBTConfig.uniform(shots, r_max, seed), label)
            rows.append({"shots": "inf" if shots is None else shots, "seed": seed,
                         "R": len(trial), "total_shots": trial.provenance["total_shots"],
                         "fidelity": fidelity(trial, sv)})
    return rows


# ---------------------------------------------------------------- file format

def write_trial(trial: TrialWavefunction, path: str | Path | None = None) -> str:
    """Provenance header (``# key: json``) followed by ``bitstring re im`` lines."""
    nq = 2 * trial.n_orb
    head = [f"# n_orb: {trial.n_orb}"]
    head += [f"# {k}: {json.dumps(v)}" for k, v in trial.provenance.items()]
    body = [f"{format(d.to_index(), f'0{nq}b')}  {float(c.real)!r}  {float(c.imag)!r}"
            for d, c in zip(trial.dets, trial.coeffs)]
    text = "\n".join(head + body) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_trial(text: str) -> TrialWavefunction:
    prov, dets, coeffs, n_orb = {}, [], [], None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, _, val = s[1:].partition(":")
            try:
                prov[key.strip()] = json.loads(val)
            except json.JSONDecodeError:
                raise ParseError(f"bad provenance value {val.strip()!r}", lineno) from None
            continue
        parts = s.split()
        if len(parts) != 3 or set(parts[0]) - {"0", "1"}:
            raise ParseError(f"expected 'bitstring re im', got {s!r}", lineno)
        width = len(parts[0])
        n_orb = prov.get("n_orb", width // 2)
        dets.append(Determinant.from_index(int(parts[0], 2), n_orb))
        coeffs.append(complex(float(parts[1]), float(parts[2])))
    if not dets:
        raise ParseError("trial file contains no determinants", 1)
    prov.pop("n_orb", None)
    return TrialWavefunction(dets, np.array(coeffs), n_orb, prov)
