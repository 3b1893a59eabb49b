"""One alternating-least-squares direction solve and a full sweep."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..greens import GreensRep
from ..linalg import DEFAULT_ETA_REL
from ..space import GridModel
from ..wave import SeparatedWavefunction
from .cg import cg_solve
from .normal import apply_normal, build_normal_matrix, dense_normal_matrix
from .rhs import build_rhs


@dataclass
class DirectionResult:
    psi_tilde: SeparatedWavefunction
    residual: float
    steps: int


def solve_normal(model: GridModel, K, b: np.ndarray, x0: np.ndarray, S: int, tol: float,
                 method: str = "cg"):
    sp = model.space
    if method == "dense":
        A = dense_normal_matrix(sp, K)
        rhs = (b - apply_normal(sp, K, x0)).ravel()
        dx = np.linalg.lstsq(A, rhs, rcond=1e-13)[0]
        x = x0 + dx.reshape(x0.shape)
        res = b - apply_normal(sp, K, x)
        return x, float(np.sqrt(np.sum((res * res) @ sp.gamma_weights))), 1
    x, res, steps, _ = cg_solve(sp, lambda v: apply_normal(sp, K, v), b, x0, S, tol)
    return x, res, steps


LEAK_TOL = 1e-9


def _clean_channels(sp, old: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Zero a spin channel that was empty in ``old`` and is only rounding
    noise in ``x``.  Every operator is spin-diagonal or spin-summing, so a
    definite spin pattern survives exactly in exact arithmetic."""
    old2, x2 = old.reshape(2, sp.Ms), x.reshape(2, sp.Ms).copy()
    total = np.sqrt((x * x) @ sp.gamma_weights)
    for c in range(2):
        if not old2[c].any() and old2[1 - c].any():
            leak = np.sqrt((x2[c] ** 2) @ sp.weights)
            if leak <= LEAK_TOL * total:
                x2[c] = 0.0
    return x2.ravel()


def _renormalize(model: GridModel, psi_tilde: SeparatedWavefunction, k: int, x: np.ndarray,
                 rng: np.random.Generator) -> SeparatedWavefunction:
    sp = model.space
    out = psi_tilde.copy()
    norms = np.sqrt((x * x) @ sp.gamma_weights)
    cutoff = 1e-14 * max(float(np.max(norms)), 1e-300)
    for l in range(out.r):
        if norms[l] > cutoff and out.s[l] != 0.0:
            xl = _clean_channels(sp, psi_tilde.orbitals[l, k], x[l])
            norms[l] = np.sqrt((xl * xl) @ sp.gamma_weights)
            out.orbitals[l, k] = xl / norms[l]
            out.s[l] = out.s[l] * norms[l]
        else:
            # deactivate the term; keep the old support so spin patterns survive
            support = out.orbitals[l, k] != 0.0
            z = rng.standard_normal(sp.Mtot) * (support if support.any() else 1.0)
            out.orbitals[l, k] = z / np.sqrt((z * z) @ sp.gamma_weights)
            out.s[l] = 0.0
    return out


def als_direction_solve(model: GridModel, psi_tilde: SeparatedWavefunction, psi: SeparatedWavefunction,
                        rep: GreensRep, k: int, S: int = 100, cg_tol: float = 1e-10,
                        eta_rel: float = DEFAULT_ETA_REL, method: str = "cg",
                        rng: np.random.Generator | None = None, cache=None) -> DirectionResult:
    rng = np.random.default_rng(0) if rng is None else rng
    sp = model.space
    if cache is not None:
        K = cache.normal_kernel(psi_tilde, k)
        b = build_rhs(model, psi_tilde, psi, rep, k, eta_rel, provider=cache.rhs_provider(psi_tilde, psi, k))
    else:
        K = build_normal_matrix(sp, psi_tilde, k, eta_rel)
        b = build_rhs(model, psi_tilde, psi, rep, k, eta_rel)
    x0 = psi_tilde.orbitals[:, k, :].copy()
    x, res, steps = solve_normal(model, K, b, x0, S, cg_tol, method)
    return DirectionResult(_renormalize(model, psi_tilde, k, x, rng), res, steps)


def als_sweep(model: GridModel, psi_tilde: SeparatedWavefunction, psi: SeparatedWavefunction,
              rep: GreensRep, S: int = 100, cg_tol: float = 1e-10, eta_rel: float = DEFAULT_ETA_REL,
              method: str = "cg", rng: np.random.Generator | None = None, cache=None,
              callback=None):
    """Loop once over all directions; returns the fit and the largest residual."""
    worst = 0.0
    for k in range(psi_tilde.N):
        res = als_direction_solve(model, psi_tilde, psi, rep, k, S, cg_tol, eta_rel, method, rng, cache)
        psi_tilde = res.psi_tilde
        worst = max(worst, res.residual)
        if callback is not None:
            callback(k, psi_tilde)
    return psi_tilde, worst
