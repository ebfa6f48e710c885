"""FCIDUMP ingestion, frozen-core active spaces and Cholesky factorization.

Two-electron integrals are kept in chemists' notation, ``v[p, q, r, s] =
(pq|rs)``, as a dense ``n_orb**4`` array carrying all eight permutational
images. Cholesky vectors satisfy ``v[p, q, r, s] ~= sum_i L[i, p, q] L[i, r, s]``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConsistencyError, FactorizationError, ParseError, SpecError

#: Conflicting duplicate entries beyond this are rejected.
DUPLICATE_TOL = 1e-10
DEFAULT_CHOLESKY_THRESHOLD = 1e-6


@dataclass
class Hamiltonian:
    """Second-quantized electronic Hamiltonian over spatial orbitals."""

    n_orb: int
    n_elec: int
    ms2: int
    e_core: float
    h: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        n = self.n_orb
        if self.h.shape != (n, n) or self.v.shape != (n, n, n, n):
            raise ValueError("integral shapes do not match n_orb")
        if self.n_elec < 0 or abs(self.ms2) > self.n_elec or self.n_elec > 2 * n:
            raise ValueError(
                f"invalid electron count NELEC={self.n_elec}, MS2={self.ms2} for NORB={n}")
        if (self.n_elec + self.ms2) % 2:
            raise ValueError("NELEC and MS2 must have the same parity")

    @property
    def n_alpha(self) -> int:
        return (self.n_elec + self.ms2) // 2

    @property
    def n_beta(self) -> int:
        return (self.n_elec - self.ms2) // 2

    def copy(self) -> "Hamiltonian":
        return Hamiltonian(self.n_orb, self.n_elec, self.ms2, self.e_core,
                           self.h.copy(), self.v.copy())


@dataclass(frozen=True)
class ActiveSpaceSpec:
    """Frozen-core active space.

    ``active_orbitals`` defaults to the first ``n_active_orb`` orbitals that
    are not frozen; any orbital in neither list is discarded as an empty
    virtual.
    """

    n_active_orb: int
    n_active_elec: int
    frozen_orbitals: tuple = ()
    active_orbitals: tuple | None = None

    def resolve(self, h: Hamiltonian) -> tuple[list[int], list[int]]:
        """Validate against ``h`` and return ``(frozen, active)`` index lists."""
        frozen = [int(f) for f in self.frozen_orbitals]
        if len(set(frozen)) != len(frozen):
            raise SpecError("frozen orbitals contain duplicates")
        if self.active_orbitals is None:
            active = [p for p in range(h.n_orb) if p not in frozen][: self.n_active_orb]
        else:
            active = [int(p) for p in self.active_orbitals]
        if len(set(active)) != len(active):
            raise SpecError("active orbitals contain duplicates")
        overlap = set(frozen) & set(active)
        if overlap:
            raise SpecError(f"orbitals {sorted(overlap)} are both frozen and active")
        for p in frozen + active:
            if not 0 <= p < h.n_orb:
                raise SpecError(f"orbital index {p} outside 0..{h.n_orb - 1}")
        if len(active) != self.n_active_orb:
            raise SpecError(
                f"requested {self.n_active_orb} active orbitals, only {len(active)} available")
        if self.n_active_elec != h.n_elec - 2 * len(frozen):
            raise SpecError(
                f"n_active_elec={self.n_active_elec} but NELEC - 2*frozen = "
                f"{h.n_elec - 2 * len(frozen)}")
        if self.n_active_elec > 2 * self.n_active_orb or abs(h.ms2) > self.n_active_elec:
            raise SpecError("active electrons do not fit in the active orbitals")
        return frozen, active


@dataclass
class CholeskyFactors:
    vectors: np.ndarray  # (n_vec, n_orb, n_orb)
    threshold: float
    residual: float
    pivots: list = field(default_factory=list)

    @property
    def n_vectors(self) -> int:
        return self.vectors.shape[0]

    def reconstruct(self) -> np.ndarray:
        return np.einsum("ipq,irs->pqrs", self.vectors, self.vectors)


# ---------------------------------------------------------------- parsing

_KEY_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=")


def _symmetry_images(i, j, k, l):
    return {(i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
            (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i)}


def _canonical(i, j, k, l):
    return max((max(i, j), min(i, j), max(k, l), min(k, l)),
               (max(k, l), min(k, l), max(i, j), min(i, j)))


def _parse_namelist(text: str, lineno: int) -> dict:
    body = text.strip()
    if not body.upper().startswith("&FCI"):
        raise ParseError("header must start with '&FCI'", lineno)
    body = body[4:]
    keys = list(_KEY_RE.finditer(body))
    values = {}
    for idx, m in enumerate(keys):
        end = keys[idx + 1].start() if idx + 1 < len(keys) else len(body)
        raw = [t for t in re.split(r"[,\s]+", body[m.end():end]) if t]
        values[m.group(1).upper()] = raw
    return values


def _header_int(values, key, lineno, default=None):
    if key not in values:
        if default is not None:
            return default
        raise ParseError(f"header is missing {key}", lineno)
    raw = values[key]
    if len(raw) != 1:
        raise ParseError(f"{key} must be a single integer", lineno)
    try:
        return int(raw[0])
    except ValueError:
        raise ParseError(f"{key}={raw[0]!r} is not an integer", lineno) from None


def parse_fcidump(text: str | Iterable[str]) -> Hamiltonian:
    """Parse FCIDUMP text (a string or an iterable of lines).

    ORBSYM and ISYM are accepted and ignored. Orbital-energy lines
    (``e i 0 0 0``) are skipped.
    """
    lines = text.splitlines() if isinstance(text, str) else [l.rstrip("\n") for l in text]

    header_parts = []
    header_start = None
    body_start = None
    for n, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("!"):
            continue
        if header_start is None:
            header_start = n
        upper = stripped.upper()
        if "&END" in upper:
            header_parts.append(stripped[: upper.index("&END")])
            body_start = n
            break
        if stripped.endswith("/"):
            header_parts.append(stripped[:-1])
            body_start = n
            break
        header_parts.append(stripped)
    if header_start is None:
        raise ParseError("empty FCIDUMP", 1)
    if body_start is None:
        raise ParseError("header not terminated by '&END' or '/'", header_start)

    values = _parse_namelist(" ".join(header_parts), header_start)
    norb = _header_int(values, "NORB", header_start)
    nelec = _header_int(values, "NELEC", header_start)
    ms2 = _header_int(values, "MS2", header_start, default=0)
    if norb <= 0:
        raise ParseError(f"NORB={norb} must be positive", header_start)

    h = np.zeros((norb, norb))
    v = np.zeros((norb, norb, norb, norb))
    e_core = 0.0
    seen: dict = {}

    def record(key, value, lineno):
        if key in seen and abs(seen[key][0] - value) > DUPLICATE_TOL:
            raise ConsistencyError(
                f"line {lineno}: element {key} = {value!r} conflicts with "
                f"{seen[key][0]!r} from line {seen[key][1]}")
        seen[key] = (value, lineno)

    for n in range(body_start + 1, len(lines) + 1):
        stripped = lines[n - 1].strip()
        if not stripped or stripped.startswith("!"):
            continue
        fields = stripped.split()
        if len(fields) != 5:
            raise ParseError(f"expected 'value i j k l', got {stripped!r}", n)
        try:
            value = float(fields[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(f) for f in fields[1:])
        except ValueError:
            raise ParseError(f"cannot read integral line {stripped!r}", n) from None
        for idx in (i, j, k, l):
            if not 0 <= idx <= norb:
                raise ParseError(f"index {idx} outside [0, {norb}]", n)
        if i and j and k and l:
            i0, j0, k0, l0 = i - 1, j - 1, k - 1, l - 1
            record(("v",) + _canonical(i0, j0, k0, l0), value, n)
            for img in _symmetry_images(i0, j0, k0, l0):
                v[img] = value
        elif i and j and not k and not l:
            p, q = max(i, j) - 1, min(i, j) - 1
            record(("h", p, q), value, n)
            h[p, q] = h[q, p] = value
        elif not (i or j or k or l):
            record(("core",), value, n)
            e_core = value
        elif i and not j and not k and not l:
            continue
        else:
            raise ParseError(f"unrecognized index pattern {i} {j} {k} {l}", n)

    try:
        return Hamiltonian(norb, nelec, ms2, e_core, h, v)
    except ValueError as exc:
        raise ParseError(str(exc), header_start) from None


def read_fcidump(path: str | Path) -> Hamiltonian:
    with open(path) as fh:
        return parse_fcidump(fh.read())


def write_fcidump(h: Hamiltonian, tol: float = 0.0) -> str:
    """Serialize to FCIDUMP text; one line per symmetry-unique element."""
    n = h.n_orb
    out = [f" &FCI NORB={n},NELEC={h.n_elec},MS2={h.ms2},",
           "  ORBSYM=" + "1," * n, "  ISYM=1,", " &END"]
    for i in range(n):
        for j in range(i + 1):
            for k in range(n):
                for l in range(k + 1):
                    if (i, j) < (k, l):
                        continue
                    val = h.v[i, j, k, l]
                    if abs(val) > tol:
                        out.append(f"{float(val)!r} {i + 1} {j + 1} {k + 1} {l + 1}")
    for i in range(n):
        for j in range(i + 1):
            if abs(h.h[i, j]) > tol:
                out.append(f"{float(h.h[i, j])!r} {i + 1} {j + 1} 0 0")
    out.append(f"{float(h.e_core)!r} 0 0 0 0")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- active space

def determinant_energy(h: Hamiltonian, alpha_occ: Sequence[int], beta_occ: Sequence[int]) -> float:
    """Energy expectation value of a single determinant (Slater-Condon diagonal)."""
    a = list(alpha_occ)
    b = list(beta_occ)
    e = h.e_core + sum(h.h[p, p] for p in a) + sum(h.h[p, p] for p in b)
    for occ_x, occ_y, same in ((a, a, True), (b, b, True), (a, b, False), (b, a, False)):
        for p in occ_x:
            for q in occ_y:
                e += 0.5 * h.v[p, p, q, q]
                if same:
                    e -= 0.5 * h.v[p, q, q, p]
    return float(e)


def extract_active_space(h: Hamiltonian, spec: ActiveSpaceSpec) -> Hamiltonian:
    """Fold doubly occupied frozen orbitals into the core and keep the active block."""
    frozen, active = spec.resolve(h)
    a = np.asarray(active, dtype=int)
    h_act = h.h[np.ix_(a, a)].copy()
    v_act = h.v[np.ix_(a, a, a, a)].copy()
    e_core = h.e_core
    if frozen:
        f = np.asarray(frozen, dtype=int)
        coul = np.einsum("pqff->pq", h.v[np.ix_(a, a, f, f)])
        exch = np.einsum("pffq->pq", h.v[np.ix_(a, f, f, a)])
        h_act = h_act + 2.0 * coul - exch
        e_core = (e_core + 2.0 * np.trace(h.h[np.ix_(f, f)])
                  + 2.0 * np.einsum("ffgg->", h.v[np.ix_(f, f, f, f)])
                  - np.einsum("fggf->", h.v[np.ix_(f, f, f, f)]))
    return Hamiltonian(len(active), spec.n_active_elec, h.ms2, float(e_core), h_act, v_act)


# ---------------------------------------------------------------- Cholesky

def cholesky_factorize(h: Hamiltonian, threshold: float = DEFAULT_CHOLESKY_THRESHOLD) -> CholeskyFactors:
    """Pivoted modified Cholesky decomposition of the (pq),(rs) supermatrix.

    Stops once the largest remaining diagonal element drops to ``threshold``;
    every element of the residual tensor is then bounded by it as well.
    """
    n = h.n_orb
    m = h.v.reshape(n * n, n * n)
    diag = np.diag(m).copy()
    vectors: list[np.ndarray] = []
    pivots: list[int] = []
    while True:
        if diag.min() < -threshold:
            raise FactorizationError(
                f"negative pivot {diag.min():.3e}: two-electron integrals are not positive semidefinite")
        piv = int(np.argmax(diag))
        dmax = diag[piv]
        if dmax <= threshold or len(vectors) >= n * n:
            break
        col = m[:, piv].copy()
        for vec in vectors:
            col -= vec * vec[piv]
        vec = col / np.sqrt(dmax)
        vectors.append(vec)
        pivots.append(piv)
        diag -= vec * vec
    residual = float(max(diag.max(), 0.0))
    if vectors:
        arr = np.array(vectors).reshape(len(vectors), n, n)
        arr = 0.5 * (arr + arr.transpose(0, 2, 1))
    else:
        arr = np.zeros((0, n, n))
    return CholeskyFactors(arr, threshold, residual, pivots)
