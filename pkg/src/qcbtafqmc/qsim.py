"""Minimal statevector simulator for computational-basis tomography.

Basis index ``k`` has bit ``b`` as its ``2**b`` digit. Qubits are labelled
in printed-bitstring order: on an ``N``-qubit register qubit ``q`` is bit
``N - 1 - q``, so ``q0`` is the leftmost character of ``format(k, '0Nb')``.
This is the labelling of the interference-circuit figure in the CBT
literature, where the pair (1, 14) on four qubits is ``0001`` / ``1110``.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError, CircuitError, DegeneratePairError, DimensionError

MAX_QUBITS = 24

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)
_SDG = _S.conj().T
_SINGLE = {"H": _H, "X": _X, "S": _S, "SDG": _SDG}


@dataclass(frozen=True)
class Statevector:
    n_qubits: int
    amps: np.ndarray

    def __post_init__(self):
        if self.n_qubits > MAX_QUBITS:
            raise CapacityError(f"{self.n_qubits} qubits exceeds the {MAX_QUBITS}-qubit cap")
        amps = np.asarray(self.amps, dtype=complex)
        if amps.shape != (1 << self.n_qubits,):
            raise DimensionError("amplitude array length must be 2**n_qubits")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def basis_state(cls, n_qubits: int, index: int) -> "Statevector":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple

    def __str__(self):
        return " ".join([self.name] + [str(q) for q in self.qubits])


@dataclass
class InterferenceCircuit:
    """Clifford circuit C with C^dagger|0> = (|m> + |n>)/sqrt2 or (|m> - i|n>)/sqrt2.

    Gates are listed in application order (first gate acts first on the
    input state). Qubit labels follow the module convention.
    """

    m: int
    n: int
    n_qubits: int
    flag_qubit: int
    variant: str
    gates: list = field(default_factory=list)

    @property
    def cnot_count(self) -> int:
        return sum(1 for g in self.gates if g.name == "CNOT")

    def dump(self) -> str:
        return "\n".join(str(g) for g in self.gates) + "\n"

    def inverse(self) -> "InterferenceCircuit":
        inv = {"H": "H", "X": "X", "CNOT": "CNOT", "S": "SDG", "SDG": "S"}
        gates = [Gate(inv[g.name], g.qubits) for g in reversed(self.gates)]
        return InterferenceCircuit(self.m, self.n, self.n_qubits, self.flag_qubit,
                                   self.variant + "_dag", gates)


def qubit_of_bit(bit: int, n_qubits: int) -> int:
    return n_qubits - 1 - bit


def bit_of_qubit(qubit: int, n_qubits: int) -> int:
    return n_qubits - 1 - qubit


def hamming(a: int, b: int) -> int:
    return bin(a ^ b).count("1")


def from_civector(vec, n_qubits: int) -> Statevector:
    """Embed a :class:`~qcbtafqmc.exactdiag.CIVector` into a 2**n amplitude array."""
    if n_qubits > MAX_QUBITS:
        raise CapacityError(f"{n_qubits} qubits exceeds the {MAX_QUBITS}-qubit cap")
    amps = np.zeros(1 << n_qubits, dtype=complex)
    seen = set()
    for det, a in zip(vec.basis, vec.amplitudes):
        idx = det.to_index()
        if idx >= len(amps):
            raise CapacityError(f"determinant index {idx} does not fit in {n_qubits} qubits")
        if idx in seen:
            raise DimensionError(f"determinant index {idx} appears twice")
        seen.add(idx)
        amps[idx] = a
    return Statevector(n_qubits, amps)


def sample_basis(sv: Statevector, shots: int, seed: int | np.random.SeedSequence) -> dict:
    """Draw ``shots`` computational-basis outcomes; returns ``{index: count}``.

    Inverse-CDF sampling driven by a Philox (counter-based) generator, so the
    histogram is a pure function of the seed.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    cdf = np.cumsum(sv.probabilities())
    u = rng.random(shots) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, len(cdf) - 1)
    counts = np.bincount(idx, minlength=len(cdf))
    nz = np.flatnonzero(counts)
    return {int(k): int(counts[k]) for k in nz}


def build_interference_circuit(m: int, n: int, n_qubits: int, variant: str = "U") -> InterferenceCircuit:
    """Fan-out circuit preparing (|m> + |n>)/sqrt2 (``U``) or (|m> - i|n>)/sqrt2 (``V``) from |0>.

    The flag is the least significant bit where ``m`` has 0 and ``n`` has 1,
    falling back to the least significant differing bit. One CNOT per other
    differing bit, X gates on the ones of ``m``, and an S gate on the flag for
    ``V``.
    """
    if variant not in ("U", "V"):
        raise ValueError("variant must be 'U' or 'V'")
    m, n = operator.index(m), operator.index(n)
    if m == n:
        raise DegeneratePairError(f"interference pair needs m != n (got {m})")
    if max(m, n) >> n_qubits:
        raise CircuitError(f"bitstrings {m}, {n} do not fit in {n_qubits} qubits")
    diff = m ^ n
    preferred = n & ~m
    flag_bit = ((preferred & -preferred) if preferred else (diff & -diff)).bit_length() - 1
    flag = qubit_of_bit(flag_bit, n_qubits)
    gates = [Gate("X", (qubit_of_bit(b, n_qubits),))
             for b in sorted(range(n_qubits), key=lambda b: qubit_of_bit(b, n_qubits))
             if (m >> b) & 1]
    if (m >> flag_bit) & 1 == 0:
        # X gates commute with the fan-out when the flag bit of m is clear;
        # place them after it as in the reference figure.
        x_gates, gates = gates, []
    else:
        x_gates = []
    targets = sorted(qubit_of_bit(b, n_qubits) for b in range(n_qubits)
                     if (diff >> b) & 1 and b != flag_bit)
    gates += [Gate("CNOT", (flag, t)) for t in targets]
    gates += x_gates
    if variant == "V":
        gates.append(Gate("S", (flag,)))
    gates.append(Gate("H", (flag,)))
    return InterferenceCircuit(m, n, n_qubits, flag, variant, gates)


def _apply_single(psi: np.ndarray, n_qubits: int, qubit: int, mat: np.ndarray) -> np.ndarray:
    bit = bit_of_qubit(qubit, n_qubits)
    t = psi.reshape(1 << (n_qubits - 1 - bit), 2, 1 << bit)
    return np.einsum("ab,ibj->iaj", mat, t).reshape(-1)


def _apply_cnot(psi: np.ndarray, n_qubits: int, control: int, target: int) -> np.ndarray:
    cb, tb = bit_of_qubit(control, n_qubits), bit_of_qubit(target, n_qubits)
    idx = np.arange(len(psi))
    flipped = np.where((idx >> cb) & 1, idx ^ (1 << tb), idx)
    return psi[flipped]


def apply_circuit(c: InterferenceCircuit, sv: Statevector) -> Statevector:
    if c.n_qubits != sv.n_qubits:
        raise CircuitError(f"circuit on {c.n_qubits} qubits applied to a {sv.n_qubits}-qubit state")
    psi = np.array(sv.amps)
    nq = sv.n_qubits
    for g in c.gates:
        if any(not 0 <= q < nq for q in g.qubits):
            raise CircuitError(f"gate {g} addresses a qubit outside 0..{nq - 1}")
        if g.name == "CNOT":
            if g.qubits[0] == g.qubits[1]:
                raise CircuitError(f"CNOT with identical control and target: {g}")
            psi = _apply_cnot(psi, nq, *g.qubits)
        elif g.name in _SINGLE:
            psi = _apply_single(psi, nq, g.qubits[0], _SINGLE[g.name])
        else:
            raise CircuitError(f"unsupported gate {g.name}")
    return Statevector(nq, psi)


def read_circuit(text: str) -> list:
    gates = []
    for line in text.splitlines():
        parts = line.split()
        if parts:
            gates.append(Gate(parts[0], tuple(int(p) for p in parts[1:])))
    return gates


def write_circuit(c: InterferenceCircuit, path: str | Path) -> None:
    Path(path).write_text(c.dump())
