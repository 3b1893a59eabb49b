"""Slater products, separated wavefunctions and the overlap / coincidence data
that every antisymmetric inner product is built from.

Orbital collections are stored as arrays of shape ``(N, Mtot)``; a separated
wavefunction keeps its coefficients ``s`` (r,) and orbitals ``(r, N, Mtot)``.
The 1/N! of the antisymmetrizer is dropped throughout.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import DEFAULT_ETA_REL, SNAP_TOL, PseudoBundle, compute_pseudo, nullspace_pairs, _sign_fix
from .space import ParticleSpace, gram


class ConsistencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class SlaterTerm:
    s: float
    orbitals: np.ndarray  # (N, Mtot)


@dataclass
class SeparatedWavefunction:
    s: np.ndarray  # (r,)
    orbitals: np.ndarray  # (r, N, Mtot)

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float).reshape(-1)
        self.orbitals = np.asarray(self.orbitals, dtype=float)
        if self.orbitals.ndim != 3 or self.orbitals.shape[0] != self.s.size:
            raise ValueError("orbitals must have shape (r, N, Mtot) matching s")
        if self.s.size < 1:
            raise ValueError("need at least one term")

    @property
    def r(self) -> int:
        return self.s.size

    @property
    def N(self) -> int:
        return self.orbitals.shape[1]

    @property
    def Mtot(self) -> int:
        return self.orbitals.shape[2]

    @property
    def terms(self) -> list:
        return [SlaterTerm(float(s), o) for s, o in zip(self.s, self.orbitals)]

    def copy(self) -> "SeparatedWavefunction":
        return SeparatedWavefunction(self.s.copy(), self.orbitals.copy())

    def scaled(self, factor: float) -> "SeparatedWavefunction":
        return SeparatedWavefunction(self.s * factor, self.orbitals.copy())


@dataclass(frozen=True)
class CoincidenceData:
    theta: np.ndarray  # (N, Mtot), rows of L^{-1} or L-ddagger applied to the bra
    L: np.ndarray
    bundle: PseudoBundle
    det_factor: float  # |L| when nonsingular, 1/det_mod in general
    pairs: list  # nullspace (u, v) pairs, empty when Q = 0 or Q > 3

    @property
    def rank_def(self) -> int:
        return self.bundle.rank_def


@dataclass(frozen=True)
class EData:
    E: np.ndarray
    d: np.ndarray
    tail: np.ndarray  # (N-1, N) overlaps of the bra tail with the ket
    bundle: PseudoBundle
    pairs: list

    @property
    def rank_def(self) -> int:
        return self.bundle.rank_def


def overlap_matrix(sp: ParticleSpace, bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
    bra, ket = np.atleast_2d(bra), np.atleast_2d(ket)
    if bra.shape[0] != ket.shape[0]:
        raise ValueError(f"orbital counts differ: {bra.shape[0]} vs {ket.shape[0]}")
    return gram(sp, bra, ket)


def overlap_scale(sp: ParticleSpace, F: np.ndarray, G: np.ndarray) -> float:
    """Bound on the entries of gram(F, G): largest row norm of F times that of G."""
    if F.shape[0] == 0 or G.shape[0] == 0:
        return 0.0
    w = sp.gamma_weights
    return float(np.sqrt(np.max((np.abs(F) ** 2) @ w) * np.max((np.abs(G) ** 2) @ w)))


def _pairs(bundle: PseudoBundle) -> list:
    q = bundle.rank_def
    if q == 0 or q > 3:
        return []
    if bundle.null_pairs is not None:
        return list(bundle.null_pairs)
    return nullspace_pairs(bundle)


def coincidence_from_L(L: np.ndarray, bra: np.ndarray, eta_rel: float = DEFAULT_ETA_REL,
                       bundle: PseudoBundle | None = None, scale: float = 0.0) -> CoincidenceData:
    if bundle is None:
        bundle = compute_pseudo(L, eta_rel, scale)
    theta = bundle.modinv @ bra
    return CoincidenceData(theta, L, bundle, 1.0 / bundle.det_mod, _pairs(bundle))


def max_coincidence(sp: ParticleSpace, bra: np.ndarray, ket: np.ndarray,
                    eta_rel: float = DEFAULT_ETA_REL) -> CoincidenceData:
    bra, ket = np.atleast_2d(bra), np.atleast_2d(ket)
    return coincidence_from_L(overlap_matrix(sp, bra, ket), bra, eta_rel,
                              scale=overlap_scale(sp, bra, ket))


def orthogonal_unit(Tm: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to the rows of an (N-1) x N matrix: the right
    singular vector of the smallest singular value, sign fixed.

    Entries at rounding level are set to zero: the SVD cannot resolve them,
    and leaving them in leaks exactly-zero structure (e.g. spin blocks).
    """
    _, _, Vh = np.linalg.svd(Tm)
    d = Vh[-1].conj()
    d = np.where(np.abs(d) <= SNAP_TOL, 0.0, d)
    _, d = _sign_fix(np.zeros(1), d)
    return d


def E_from_tail(Tm: np.ndarray, eta_rel: float = DEFAULT_ETA_REL, d: np.ndarray | None = None) -> EData:
    if d is None:
        d = orthogonal_unit(Tm)
    E = np.vstack([d.conj()[None, :], Tm])
    bundle = compute_pseudo(E, eta_rel)
    return EData(E, d, Tm, bundle, _pairs(bundle))


def build_E(sp: ParticleSpace, tail: np.ndarray, ket: np.ndarray,
            eta_rel: float = DEFAULT_ETA_REL) -> EData:
    tail, ket = np.atleast_2d(tail), np.atleast_2d(ket)
    if tail.shape[0] != ket.shape[0] - 1:
        raise ValueError("bra tail must hold N-1 orbitals")
    Tm = gram(sp, tail, ket) if tail.shape[0] else np.zeros((0, ket.shape[0]))
    return E_from_tail(Tm, eta_rel)


def lowdin_matrix(sp: ParticleSpace, psi: SeparatedWavefunction, phi: SeparatedWavefunction | None = None):
    """r x r' matrix of |L(Phi^l, Phi^m)|."""
    phi = psi if phi is None else phi
    out = np.empty((psi.r, phi.r))
    for l in range(psi.r):
        for m in range(phi.r):
            out[l, m] = np.linalg.det(overlap_matrix(sp, psi.orbitals[l], phi.orbitals[m]))
    return out


def inner_A(sp: ParticleSpace, psi: SeparatedWavefunction, phi: SeparatedWavefunction) -> float:
    return float(psi.s @ lowdin_matrix(sp, psi, phi) @ phi.s)


def norm_A(sp: ParticleSpace, psi: SeparatedWavefunction) -> float:
    n2 = inner_A(sp, psi, psi)
    scale = float(np.sum(np.abs(psi.s)) ** 2) or 1.0
    if n2 < -1e-10 * scale:
        raise ConsistencyError(f"negative squared pseudo-norm {n2}")
    return float(np.sqrt(max(n2, 0.0)))


# wavefunction file -----------------------------------------------------------

WF_MAGIC = "detsum-wf v1"


def dumps_wavefunction(psi: SeparatedWavefunction) -> str:
    buf = io.StringIO()
    buf.write(f"{WF_MAGIC} N={psi.N} r={psi.r} M={psi.Mtot}\n")
    for s, orbs in zip(psi.s, psi.orbitals):
        buf.write(f"s={s:.17g}\n")
        for row in orbs:
            buf.write(" ".join(f"{x:.17g}" for x in row) + "\n")
    return buf.getvalue()


def loads_wavefunction(text: str) -> SeparatedWavefunction:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(WF_MAGIC):
        raise ValueError("not a detsum wavefunction file")
    head = dict(tok.split("=") for tok in lines[0][len(WF_MAGIC):].split())
    n, r, m = int(head["N"]), int(head["r"]), int(head["M"])
    if len(lines) != 1 + r * (n + 1):
        raise ValueError(f"expected {1 + r * (n + 1)} lines, found {len(lines)}")
    s = np.empty(r)
    orbs = np.empty((r, n, m))
    pos = 1
    for l in range(r):
        if not lines[pos].startswith("s="):
            raise ValueError(f"line {pos + 1}: expected 's=<value>'")
        s[l] = float(lines[pos][2:])
        pos += 1
        for i in range(n):
            row = np.array(lines[pos].split(), dtype=float)
            if row.size != m:
                raise ValueError(f"line {pos + 1}: expected {m} values, found {row.size}")
            orbs[l, i] = row
            pos += 1
    return SeparatedWavefunction(s, orbs)


def write_wavefunction(path, psi: SeparatedWavefunction) -> None:
    Path(path).write_text(dumps_wavefunction(psi), encoding="utf-8")


def read_wavefunction(path) -> SeparatedWavefunction:
    return loads_wavefunction(Path(path).read_text(encoding="utf-8"))
