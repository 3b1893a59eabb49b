"""Exponential-sum approximation of 1/t and the separated Green's function
(T_N - mu)^{-1} ~ sum_p prod_i F^p_i built from it.

The sum comes from the trapezoid rule applied to
    1/t = integral exp(-t e^x + x) dx  over the real line,
giving weights w_p = h e^{x_p} and exponents tau_p = e^{x_p}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .space import OneBodyOp, ParticleSpace, apply_matrix

CERT_POINTS = 2000
DENSE_POINTS = 20000
MIN_CAP = 10


class ExpSumError(RuntimeError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class ExpSum:
    w: np.ndarray
    tau: np.ndarray
    eps: float
    valid_upper: float
    certificate: float

    @property
    def L(self) -> int:
        return self.w.size

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-np.multiply.outer(t, self.tau)) @ self.w


def length_cap(eps: float) -> int:
    return max(int(4 * math.log(1 / eps) ** 2), MIN_CAP)


def certificate(w: np.ndarray, tau: np.ndarray, R: float, points: int = CERT_POINTS) -> float:
    """Maximum of |1/t - S(t)| * t over a log-spaced grid on [1, R]."""
    t = np.logspace(0.0, math.log10(R), points) if R > 1 else np.ones(1)
    with np.errstate(over="ignore"):
        S = np.exp(-np.multiply.outer(t, tau)) @ w
    return float(np.max(np.abs(1.0 - t * S)))


def _trapezoid(h: float, lo: float, hi: float):
    k0, k1 = math.floor(lo / h), math.ceil(hi / h)
    x = h * np.arange(k0, k1 + 1)
    return h * np.exp(x), np.exp(x)


def _certified(w, tau, eps, R) -> bool:
    return certificate(w, tau, R, DENSE_POINTS) <= eps and certificate(w, tau, R) <= eps


def _prune(w, tau, eps, R):
    # drop terms from either end while the certificate still holds
    lo, hi = 0, w.size
    while hi - lo > 1 and _certified(w[lo + 1:hi], tau[lo + 1:hi], eps, R):
        lo += 1
    while hi - lo > 1 and _certified(w[lo:hi - 1], tau[lo:hi - 1], eps, R):
        hi -= 1
    return w[lo:hi], tau[lo:hi]


def build_expsum(eps: float, R: float) -> ExpSum:
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if not R >= 1.0:
        raise ValueError("R must be at least 1")
    # truncation: each tail contributes at most a third of the budget
    lo = math.log(eps / (3.0 * R))
    hi = math.log(math.log(3.0 / eps))
    h0 = math.pi**2 / math.log(3.0 / eps)
    best = None
    tried = []
    for factor in np.arange(2.0, 0.45, -0.1):
        h = h0 * factor
        w, tau = _trapezoid(h, lo - h, hi + h)
        cert = certificate(w, tau, R, DENSE_POINTS)
        tried.append((h, w.size, cert))
        if cert > eps:
            continue
        w, tau = _prune(w, tau, eps, R)
        if best is None or w.size < best[0].size:
            best = (w, tau)
    if best is None:
        raise ExpSumError(f"no certified sum for eps={eps}, R={R}; tried (h, L, err) {tried}")
    w, tau = best
    cap = length_cap(eps)
    if w.size > cap:
        raise ExpSumError(f"certified sum has L={w.size} > cap {cap}")
    return ExpSum(w, tau, eps, float(R), certificate(w, tau, R))


@dataclass(frozen=True)
class GreensRep:
    mu: float
    N: int
    F: np.ndarray  # (L, M_s, M_s), symmetric positive definite
    scale: np.ndarray  # c_p^{1/N}
    expsum: ExpSum

    @property
    def L(self) -> int:
        return self.F.shape[0]


def required_upper(T: OneBodyOp, mu: float, N: int) -> float:
    lam_max = float(np.linalg.eigvalsh(T.Tmat)[-1])
    return (N * lam_max - mu) / (-mu)


def build_greens(es: ExpSum, mu: float, T: OneBodyOp, N: int) -> GreensRep:
    if not mu < 0:
        raise PreconditionError(f"mu must be negative, got {mu}")
    lam, Q = np.linalg.eigh(T.Tmat)
    need = (N * lam[-1] - mu) / (-mu)
    if need > es.valid_upper * (1 + 1e-12):
        raise PreconditionError(f"spectral range needs R >= {need:.6g}, exponential sum certified to {es.valid_upper:.6g}")
    c = (es.w / (-mu)) * np.exp(-es.tau)
    scale = c ** (1.0 / N)
    decay = np.exp(-np.multiply.outer(es.tau / (-mu), lam))  # (L, M_s)
    F = np.einsum("ik,pk,jk->pij", Q, scale[:, None] * decay, Q)
    return GreensRep(mu, N, F, scale, es)


def apply_F(sp: ParticleSpace, rep: GreensRep, p: int, f: np.ndarray) -> np.ndarray:
    return apply_matrix(sp, rep.F[p], f)


def apply_F_all(sp: ParticleSpace, rep: GreensRep, f: np.ndarray) -> np.ndarray:
    """F^p f for every p, shape (L,) + f.shape."""
    fs = f.reshape(f.shape[:-1] + (2, sp.Ms))
    out = np.einsum("pij,...sj->p...si", rep.F, fs)
    return out.reshape((rep.L,) + f.shape)
