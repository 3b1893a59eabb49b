"""Right-hand side of the direction-k fit.

    b(l) = -s~_l (-1)^k sum_m s_m sum_p F^p [ dV(F^p tail_l, Phi^m) + dW(F^p tail_l, Phi^m) ]

where dV, dW are the delta-slot products with the potential and the pair
interaction (the kinetic part lives inside the Green's function) and the tail
is the term's orbitals without direction k.
"""

from __future__ import annotations

import numpy as np

from ..asym import exchange_combo, ip_delta_TV, ip_delta_W, tilde_theta
from ..greens import GreensRep, apply_F_all
from ..linalg import DEFAULT_ETA_REL
from ..space import GridModel
from ..wave import SeparatedWavefunction, build_E
from .normal import tail_of


def fresh_delta_data(model: GridModel, tail: np.ndarray, ket: np.ndarray, eta_rel: float):
    """(EData, theta, combo) built from scratch for one transformed tail."""
    ed = build_E(model.space, tail, ket, eta_rel)
    theta = combo = None
    if ed.rank_def <= 1:
        theta = tilde_theta(ed, tail)
    if ed.rank_def == 0 and ket.shape[0] >= 2:
        combo = exchange_combo(model.space, model.pop, ket, theta)
    return ed, theta, combo


def delta_VW(model: GridModel, tail, ket, ed, theta, combo, opV) -> np.ndarray:
    sp = model.space
    out = ip_delta_TV(sp, opV, tail, ket, edata=ed, theta=theta if ed.rank_def == 0 else None)
    if ket.shape[0] >= 2:
        out = out + ip_delta_W(sp, model.pop, tail, ket, edata=ed,
                               theta=theta if ed.rank_def <= 1 else None, combo=combo)
    return out


def build_rhs(model: GridModel, psi_tilde: SeparatedWavefunction, psi: SeparatedWavefunction,
              rep: GreensRep, k: int, eta_rel: float = DEFAULT_ETA_REL, provider=None) -> np.ndarray:
    """``provider(l, p, m, tail, ket)`` may supply the (EData, theta, combo)
    triple, e.g. from the reuse cache; by default everything is rebuilt."""
    sp = model.space
    opV = model.op.only_V()
    out = np.zeros((psi_tilde.r, sp.Mtot))
    sign = -1.0 if k % 2 else 1.0
    for l in range(psi_tilde.r):
        if psi_tilde.s[l] == 0.0:
            continue
        Ft = apply_F_all(sp, rep, tail_of(psi_tilde.orbitals[l], k))
        acc_l = np.zeros((2, sp.Ms))
        for p in range(rep.L):
            acc = np.zeros(sp.Mtot)
            for m in range(psi.r):
                ket = psi.orbitals[m]
                if provider is None:
                    data = fresh_delta_data(model, Ft[p], ket, eta_rel)
                else:
                    data = provider(l, p, m, Ft[p], ket)
                acc += psi.s[m] * delta_VW(model, Ft[p], ket, *data, opV)
            acc_l += acc.reshape(2, sp.Ms) @ rep.F[p].T
        out[l] = -psi_tilde.s[l] * sign * acc_l.ravel()
    return out
