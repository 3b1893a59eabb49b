"""Reuse between consecutive directions of one ALS sweep.

Going from direction k-1 to k, the slot-free tail of every term changes in a
single position, q = k-1, which now holds the freshly fitted orbital.  So

* every D_ll' changes in row q and column q;
* every E (first row d, then the transformed-tail overlaps) changes in row
  q+1 and in its first row, because d is recomputed from the new tail.

Each pair of rank-one changes is applied at once as a rank-two update: taken
one at a time the intermediate matrix is often singular (the new tail row
tends to line up with the old d), which costs accuracy or forces a rebuild.
* theta~ = E-ddagger [0; F tail] and the exchange functions
  C_b = sum_a phi_a W[theta~_a phi_b] follow from the low-rank change of the
  modified inverse and the single changed tail row.

Only nonsingular matrices are updated; anything singular before or after is
rebuilt from scratch.  With ``verify=True`` every updated object is compared
against a fresh construction and the largest deviations are recorded.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from ..asym import _pair_potentials, exchange_combo, tilde_theta
from ..linalg import low_rank_update
from ..space import gram
from ..wave import EData, E_from_tail, orthogonal_unit
from .normal import NormalKernel, kernel_block, tail_of, tail_pseudo
from .rhs import fresh_delta_data


class FastPathError(RuntimeError):
    pass


def _rel(a, b) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def update_D(bundle, D_old: np.ndarray, D_mid: np.ndarray, D_new: np.ndarray, q: int):
    """Row q and column q together; None if either end is singular."""
    n = D_old.shape[0]
    e = np.zeros(n)
    e[q] = 1.0
    B = np.stack([e, D_new[:, q] - D_mid[:, q]], axis=1)
    C = np.stack([D_mid[q] - D_old[q], e], axis=1)
    out = low_rank_update(bundle, D_old, B, C)
    return None if out is None else out[0]


def update_E(ed: EData, Tm_new: np.ndarray, q: int):
    """Bundle of the new E plus the inverse change as (x, y) terms.

    Row q+1 takes the new tail overlaps and row 0 the recomputed d; both go
    in as one rank-two change.  None if either end is singular.
    """
    n = ed.E.shape[0]
    d_new = orthogonal_unit(Tm_new)
    B = np.zeros((n, 2))
    B[q + 1, 0] = B[0, 1] = 1.0
    C = np.stack([Tm_new[q] - ed.tail[q], d_new - ed.d], axis=1)
    out = low_rank_update(ed.bundle, ed.E, B, C)
    if out is None:
        return None
    E_new = np.vstack([d_new[None, :], Tm_new])
    return EData(E_new, d_new, Tm_new, out[0], []), out[1]


def update_theta(modinv_old: np.ndarray, theta_old: np.ndarray, tail_old: np.ndarray,
                 delta: np.ndarray, q: int, terms):
    """theta~ after the rank-one changes of E-ddagger and of tail row q.

    Returns the new theta and its change as a list of (coefficient vector,
    function) pairs, which the exchange update consumes.
    """
    pieces = [(modinv_old[:, q + 1], delta)]
    for x, y in terms:
        pieces.append((x, y[1:] @ tail_old + y[q + 1] * delta))
    theta = theta_old.copy()
    for a, f in pieces:
        theta += np.outer(a, f)
    return theta, pieces


def update_wp_combo(sp, pop, ket: np.ndarray, combo_old: np.ndarray, pieces) -> np.ndarray:
    """C_b += sum over pieces (alpha . Phi) W[f phi_b]."""
    combo = combo_old.copy()
    for a, f in pieces:
        combo += (a @ ket)[None, :] * _pair_potentials(sp, pop, f[None, :], ket)[0]
    return combo


class ReuseCache:
    """Per-sweep store of D and E artifacts; create one per Green iteration."""

    def __init__(self, model, rep, eta_rel: float = 1e-10, verify: bool = False, tol: float = 1e-10):
        self.model = model
        self.rep = rep
        self.eta_rel = eta_rel
        self.verify = verify
        self.tol = tol
        self.d_state = None  # (k, tails, D matrices, bundles)
        self.e_state = {}
        self.e_k = None
        self.stats = defaultdict(int)
        self.max_dev = defaultdict(float)

    # normal matrix ------------------------------------------------------------
    def normal_kernel(self, psi_tilde, k: int) -> NormalKernel:
        sp = self.model.space
        tails = [tail_of(o, k) for o in psi_tilde.orbitals]
        r = psi_tilde.r
        Ds = [[gram(sp, tails[l], tails[lp]) for lp in range(r)] for l in range(r)]
        prev = self.d_state
        bundles = None
        if prev is not None and prev[0] == k - 1 and tails[0].shape[0] > 0:
            q = k - 1
            _, old_tails, old_D, old_b = prev
            bundles = [[None] * r for _ in range(r)]
            for l in range(r):
                for lp in range(r):
                    ob = old_b[l][lp]
                    if ob.rank_def:
                        bundles[l][lp] = tail_pseudo(sp, Ds[l][lp], tails[l], tails[lp], self.eta_rel)
                        self.stats["D_fresh"] += 1
                        continue
                    mid_tail = old_tails[l].copy()
                    mid_tail[q] = tails[l][q]
                    D_mid = gram(sp, mid_tail, old_tails[lp])
                    nb = update_D(ob, old_D[l][lp], D_mid, Ds[l][lp], q)
                    fresh = (tail_pseudo(sp, Ds[l][lp], tails[l], tails[lp], self.eta_rel)
                             if (self.verify or nb is None) else None)
                    if self.verify and nb is not None and not fresh.rank_def:
                        self._dev("D_pinv", nb.pinv, fresh.pinv)
                        self._dev("D_det", np.array([nb.det_mod]), np.array([fresh.det_mod]))
                    if nb is None or fresh is not None and fresh.rank_def:
                        nb = fresh
                        self.stats["D_fresh"] += 1
                    else:
                        self.stats["D_updated"] += 1
                    bundles[l][lp] = nb
        if bundles is None:
            bundles = [[tail_pseudo(sp, Ds[l][lp], tails[l], tails[lp], self.eta_rel) if Ds[l][lp].size else None
                        for lp in range(r)] for l in range(r)]
        blocks = [[kernel_block(Ds[l][lp], tails[l], tails[lp], self.eta_rel, bundles[l][lp])
                   for lp in range(r)] for l in range(r)]
        self.d_state = (k, tails, Ds, bundles)
        return NormalKernel(blocks, np.outer(psi_tilde.s, psi_tilde.s), k)

    # right-hand side ----------------------------------------------------------
    def rhs_provider(self, psi_tilde, psi, k: int):
        prev_k = self.e_k
        self.e_k = k
        previous = self.e_state if prev_k is not None and prev_k == k - 1 else {}
        current = {}
        self.e_state = current

        def provide(l, p, m, tail, ket):
            data = None
            old = previous.get((l, p, m))
            if old is not None and tail.shape[0] > 0:
                data = self._update(old, tail, ket, k - 1)
            if data is None:
                data = fresh_delta_data(self.model, tail, ket, self.eta_rel)
                self.stats["E_fresh"] += 1
            else:
                self.stats["E_updated"] += 1
            current[(l, p, m)] = (tail.copy(),) + tuple(data)
            return data

        return provide

    def _update(self, old, tail, ket, q):
        sp, pop = self.model.space, self.model.pop
        old_tail, ed, theta, combo = old
        if ed.rank_def or theta is None or combo is None:
            return None
        Tm_new = ed.tail.copy()
        Tm_new[q] = gram(sp, tail[q:q + 1], ket)[0]
        upd = update_E(ed, Tm_new, q)
        if upd is None:
            return None
        new_ed, terms = upd
        delta = tail[q] - old_tail[q]
        theta_new, pieces = update_theta(ed.bundle.modinv, theta, old_tail, delta, q, terms)
        combo_new = update_wp_combo(sp, pop, ket, combo, pieces)
        if self.verify:
            fresh = E_from_tail(Tm_new, self.eta_rel)
            if fresh.rank_def:
                return None
            self._dev("E_pinv", new_ed.bundle.pinv, fresh.bundle.pinv)
            self._dev("E_det", np.array([new_ed.bundle.det_mod]), np.array([fresh.bundle.det_mod]))
            th = tilde_theta(fresh, tail)
            self._dev("theta", theta_new, th)
            self._dev("combo", combo_new, exchange_combo(sp, pop, ket, th))
        return new_ed, theta_new, combo_new

    def _dev(self, key, a, b):
        dev = _rel(a, b)
        self.max_dev[key] = max(self.max_dev[key], dev)
        if dev > self.tol:
            self.stats["verify_failures"] += 1


def cache_factory(verify: bool = False):
    def make(model, rep, cfg):
        return ReuseCache(model, rep, cfg.eta_rel, verify=verify)
    return make
