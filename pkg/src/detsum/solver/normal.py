"""Normal equations of the alternating least-squares fit for one direction.

Unknowns are r orbitals x(l) that replace direction k of each term.  With
the slot-k orbital moved to the front (the sign cancels on both sides), the
(l, l') block of the system is s~_l s~_l' K_ll', where K acts as

    K x = |D| (x - sum_ij y_i (D^-1)_ij <w_j, x>)        D nonsingular
    K x = -(sum_j v_j y_j) (sum_i u_i <w_i, x>) / |D-dd|   deficiency one
    K x = 0                                              deficiency > 1

with y the slot-free orbitals of term l', w those of term l and
D_ij = <w_i, y_j>.  Each kernel is stored as c0 * x + sum_q out_q <in_q, x>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..linalg import DEFAULT_ETA_REL, PseudoBundle, compute_pseudo
from ..space import ParticleSpace, gram
from ..wave import SeparatedWavefunction, _pairs, overlap_scale


@dataclass(frozen=True)
class KernelBlock:
    kind: str  # "full", "one" or "null"
    c0: float
    out: np.ndarray  # (q, Mtot)
    inn: np.ndarray  # (q, Mtot)
    bundle: PseudoBundle | None
    D: np.ndarray


@dataclass(frozen=True)
class NormalKernel:
    blocks: list  # r x r nested list of KernelBlock
    scale: np.ndarray  # s~_l s~_l'
    k: int

    @property
    def r(self) -> int:
        return len(self.blocks)


def tail_of(orbs: np.ndarray, k: int) -> np.ndarray:
    return np.delete(orbs, k, axis=0)


def tail_pseudo(sp: ParticleSpace, D: np.ndarray, bra_tail: np.ndarray, ket_tail: np.ndarray,
                eta_rel: float = DEFAULT_ETA_REL) -> PseudoBundle:
    return compute_pseudo(D, eta_rel, overlap_scale(sp, bra_tail, ket_tail))


def kernel_block(D: np.ndarray, bra_tail: np.ndarray, ket_tail: np.ndarray,
                 eta_rel: float = DEFAULT_ETA_REL, bundle: PseudoBundle | None = None,
                 sp: ParticleSpace | None = None) -> KernelBlock:
    M = ket_tail.shape[1]
    if D.shape[0] == 0:
        return KernelBlock("full", 1.0, np.zeros((0, M)), np.zeros((0, M)), None, D)
    if bundle is None:
        scale = overlap_scale(sp, bra_tail, ket_tail) if sp is not None else 0.0
        bundle = compute_pseudo(D, eta_rel, scale)
    q = bundle.rank_def
    if q == 0:
        det = 1.0 / bundle.det_mod
        return KernelBlock("full", det, -det * ket_tail,
                           bundle.pinv @ bra_tail, bundle, D)
    if q == 1:
        u, v = _pairs(bundle)[0]
        out = -(v @ ket_tail) / bundle.det_mod
        return KernelBlock("one", 0.0, out[None, :], (u @ bra_tail)[None, :], bundle, D)
    return KernelBlock("null", 0.0, np.zeros((0, M)), np.zeros((0, M)), bundle, D)


def build_normal_matrix(sp: ParticleSpace, psi_tilde: SeparatedWavefunction, k: int,
                        eta_rel: float = DEFAULT_ETA_REL, bundles=None) -> NormalKernel:
    """Kernels for direction k (0-based).  ``bundles`` optionally supplies the
    pseudo-inverse bundles of every D_ll' (used by the reuse fast path)."""
    r = psi_tilde.r
    if not 0 <= k < psi_tilde.N:
        raise ValueError(f"direction {k} out of range")
    tails = [tail_of(o, k) for o in psi_tilde.orbitals]
    blocks = []
    for l in range(r):
        row = []
        for lp in range(r):
            D = gram(sp, tails[l], tails[lp]) if tails[l].shape[0] else np.zeros((0, 0))
            b = None if bundles is None else bundles[l][lp]
            row.append(kernel_block(D, tails[l], tails[lp], eta_rel, b, sp))
        blocks.append(row)
    return NormalKernel(blocks, np.outer(psi_tilde.s, psi_tilde.s), k)


def apply_block(sp: ParticleSpace, blk: KernelBlock, x: np.ndarray) -> np.ndarray:
    out = blk.c0 * x
    if blk.out.shape[0]:
        out = out + (gram(sp, blk.inn, x[None, :])[:, 0]) @ blk.out
    return out


def apply_normal(sp: ParticleSpace, K: NormalKernel, x: np.ndarray) -> np.ndarray:
    """(A x)(l) = sum_l' s~_l s~_l' K_ll' x(l'), summed in ascending l'."""
    x = np.asarray(x)
    out = np.zeros_like(x, dtype=float)
    for l in range(K.r):
        for lp in range(K.r):
            if K.scale[l, lp] == 0.0:
                continue
            out[l] += K.scale[l, lp] * apply_block(sp, K.blocks[l][lp], x[lp])
    return out


def dense_normal_matrix(sp: ParticleSpace, K: NormalKernel) -> np.ndarray:
    """Matrix of A acting on the flattened (r * Mtot) coefficient vector."""
    n = K.r * sp.Mtot
    cols = np.eye(n).reshape(n, K.r, sp.Mtot)
    return np.stack([apply_normal(sp, K, c).ravel() for c in cols], axis=1)
