"""Conjugate gradients on the weighted inner product of r-tuples of orbitals."""

from __future__ import annotations

import numpy as np

from ..space import ParticleSpace


class SemidefinitenessError(RuntimeError):
    pass


def _dot(sp: ParticleSpace, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum((a * b) @ sp.gamma_weights))


def cg_solve(sp: ParticleSpace, apply_A, b: np.ndarray, x0: np.ndarray, S: int, tol: float):
    """Solve A x = b from the warm start x0.

    Returns ``(x, residual_norm, steps, history)`` where history lists the
    residual norm after every step.  Stops when ||r|| <= tol * ||b|| or after
    S steps.
    """
    x = np.array(x0, dtype=float, copy=True)
    r = b - apply_A(x)
    v = r.copy()
    c = _dot(sp, r, r)
    bnorm = np.sqrt(_dot(sp, b, b))
    history = [np.sqrt(c)]
    steps = 0
    for _ in range(S):
        if np.sqrt(c) <= tol * bnorm or c == 0.0:
            break
        z = apply_A(v)
        vz = _dot(sp, v, z)
        if vz <= 0.0:
            if vz < -1e-12 * max(_dot(sp, v, v), 1.0):
                raise SemidefinitenessError(f"<v, Av> = {vz} < 0")
            break
        t = c / vz
        x = x + t * v
        r = r - t * z
        d = _dot(sp, r, r)
        v = r + (d / c) * v
        c = d
        steps += 1
        history.append(np.sqrt(c))
    return x, float(np.sqrt(c)), steps, history
