"""Gradient of the Rayleigh quotient with respect to orbital values, and the
full and per-direction descent steps built on it."""

from __future__ import annotations

import numpy as np

from ..asym import ip_delta, ip_delta_TV, ip_delta_W
from ..linalg import DEFAULT_ETA_REL
from ..space import GridModel
from ..wave import SeparatedWavefunction, build_E, inner_A
from .energy import matrix_element, rayleigh
from .normal import tail_of


def gradient(model: GridModel, psi: SeparatedWavefunction, mu: float | None = None,
             eta_rel: float = DEFAULT_ETA_REL) -> np.ndarray:
    """g[l, j] = 2/<psi,psi> s_l sum_m s_m <delta x tail_j^l, (H - mu) Phi^m>_A.

    With mu the current Rayleigh quotient (the default), ``w * g`` is the
    derivative of the quotient with respect to the point values of phi_j^l.
    """
    sp = model.space
    if mu is None:
        mu = rayleigh(model, psi, eta_rel)
    n2 = inner_A(sp, psi, psi)
    g = np.zeros_like(psi.orbitals)
    for l in range(psi.r):
        for j in range(psi.N):
            tail = tail_of(psi.orbitals[l], j)
            acc = np.zeros(sp.Mtot)
            for m in range(psi.r):
                ket = psi.orbitals[m]
                ed = build_E(sp, tail, ket, eta_rel)
                val = ip_delta_TV(sp, model.op, tail, ket, edata=ed) - mu * ip_delta(sp, tail, ket, edata=ed)
                if psi.N >= 2:
                    val = val + ip_delta_W(sp, model.pop, tail, ket, edata=ed)
                acc += psi.s[m] * val
            g[l, j] = (2.0 / n2) * psi.s[l] * (-1.0) ** j * acc
    return g


def quotient_coefficients(model: GridModel, psi: SeparatedWavefunction, step: SeparatedWavefunction,
                          eta_rel: float = DEFAULT_ETA_REL):
    """(a, b, c, d, e, f) of (a - 2bt + ct^2) / (d - 2et + ft^2)."""
    sp = model.space
    a = matrix_element(model, psi, psi, eta_rel=eta_rel)
    b = matrix_element(model, psi, step, eta_rel=eta_rel)
    c = matrix_element(model, step, step, eta_rel=eta_rel)
    return a, b, c, inner_A(sp, psi, psi), inner_A(sp, psi, step), inner_A(sp, step, step)


def best_step(coeffs) -> float:
    """Exact minimizer of the quotient along the line, t = 0 included."""
    a, b, c, d, e, f = coeffs

    def q(t):
        den = d - 2 * e * t + f * t * t
        return (a - 2 * b * t + c * t * t) / den if den > 0 else np.inf

    roots = np.roots([b * f - c * e, c * d - a * f, a * e - b * d])
    cands = [0.0] + [float(t.real) for t in np.atleast_1d(roots) if abs(t.imag) <= 1e-12 * max(1.0, abs(t))]
    return min(cands, key=q)


def _absorb_norms(model: GridModel, psi: SeparatedWavefunction) -> SeparatedWavefunction:
    w = model.space.gamma_weights
    norms = np.sqrt((psi.orbitals**2) @ w)
    norms[norms == 0.0] = 1.0
    return SeparatedWavefunction(psi.s * np.prod(norms, axis=1), psi.orbitals / norms[..., None])


def grad_step(model: GridModel, psi: SeparatedWavefunction, mu: float | None = None,
              mode: str = "per-direction", eta_rel: float = DEFAULT_ETA_REL,
              max_halvings: int = 30) -> SeparatedWavefunction:
    """One descent step.  ``per-direction`` loops through the directions with
    an exact line minimization each; ``full`` moves every orbital at once."""
    if mode == "per-direction":
        for j in range(psi.N):
            psi = direction_step(model, psi, j, eta_rel)
        return psi
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    r0 = rayleigh(model, psi, eta_rel)
    g = gradient(model, psi, r0 if mu is None else mu, eta_rel)
    # first-order change of psi along -g, used only to pick the trial step
    lin_s = np.repeat(psi.s, psi.N)
    lin_orbs = np.repeat(psi.orbitals[:, None], psi.N, axis=1)
    for j in range(psi.N):
        lin_orbs[:, j, j] = g[:, j]
    lin = SeparatedWavefunction(lin_s, lin_orbs.reshape(-1, psi.N, psi.Mtot))
    t = best_step(quotient_coefficients(model, psi, lin, eta_rel))
    if t == 0.0:
        return psi
    for _ in range(max_halvings):
        trial = SeparatedWavefunction(psi.s, psi.orbitals - t * g)
        if rayleigh(model, trial, eta_rel) < r0:
            return _absorb_norms(model, trial)
        t *= 0.5
    return psi


def direction_step(model: GridModel, psi: SeparatedWavefunction, j: int,
                   eta_rel: float = DEFAULT_ETA_REL) -> SeparatedWavefunction:
    g = gradient(model, psi, None, eta_rel)
    step_orbs = psi.orbitals.copy()
    step_orbs[:, j] = g[:, j]
    step = SeparatedWavefunction(psi.s, step_orbs)
    coeffs = quotient_coefficients(model, psi, step, eta_rel)
    t = best_step(coeffs)
    if not np.isfinite(t):
        t = 0.0
    new = psi.orbitals.copy()
    new[:, j] -= t * g[:, j]
    return _absorb_norms(model, SeparatedWavefunction(psi.s, new))
