"""Energies of separated wavefunctions through the closed-form products."""

from __future__ import annotations

import numpy as np

from ..asym import ip_TV, ip_W
from ..linalg import DEFAULT_ETA_REL
from ..space import GridModel, OneBodyOp
from ..wave import SeparatedWavefunction, inner_A, max_coincidence, norm_A


class DegenerateWavefunction(ValueError):
    pass


def matrix_element(model: GridModel, psi: SeparatedWavefunction, phi: SeparatedWavefunction,
                   op: OneBodyOp | None = None, pair: bool = True,
                   eta_rel: float = DEFAULT_ETA_REL) -> float:
    """sum_lm s_l s'_m <Phi^l, (op + W) Phi'^m>_A."""
    sp = model.space
    op = model.op if op is None else op
    total = 0.0
    for sl, bra in zip(psi.s, psi.orbitals):
        for sm, ket in zip(phi.s, phi.orbitals):
            if sl == 0.0 or sm == 0.0:
                continue
            coin = max_coincidence(sp, bra, ket, eta_rel)
            val = ip_TV(sp, op, bra, ket, coin=coin)
            if pair and psi.N >= 2:
                val += ip_W(sp, model.pop, bra, ket, coin=coin)
            total += sl * sm * val
    return total


def rayleigh(model: GridModel, psi: SeparatedWavefunction, eta_rel: float = DEFAULT_ETA_REL) -> float:
    n2 = inner_A(model.space, psi, psi)
    if not n2 > 0.0:
        raise DegenerateWavefunction("zero pseudo-norm")
    return matrix_element(model, psi, psi, eta_rel=eta_rel) / n2


def mu_newton(model: GridModel, psi: SeparatedWavefunction, psi_tilde: SeparatedWavefunction,
              mu: float, eta_rel: float = DEFAULT_ETA_REL) -> float:
    """mu - <(V + W) psi, psi - psi~>_A / ||psi~||_A^2 with the raw fit psi~."""
    nt2 = norm_A(model.space, psi_tilde) ** 2
    if not nt2 > 0.0:
        raise DegenerateWavefunction("zero pseudo-norm of the fitted wavefunction")
    opV = model.op.only_V()
    a = matrix_element(model, psi, psi, op=opV, eta_rel=eta_rel)
    b = matrix_element(model, psi, psi_tilde, op=opV, eta_rel=eta_rel)
    return mu - (a - b) / nt2


def normalized(model: GridModel, psi: SeparatedWavefunction) -> SeparatedWavefunction:
    n = norm_A(model.space, psi)
    if n == 0.0:
        raise DegenerateWavefunction("cannot normalize a null wavefunction")
    return psi.scaled(1.0 / n)
