"""Uniform real-space grid with two spin levels, plus the discretized one-body
and softened Coulomb-pair operators.

A single-particle function is a vector of length ``Mtot = 2*M_s`` indexed by
``gamma = spin*M_s + j`` (spin-major).  Spatial-only functions have length M_s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Geometry and physics of a grid model.

    ``n_points`` and ``spacing`` fix a uniform grid in ``dim`` dimensions,
    centred on ``center``.  ``nuclei`` is a sequence of ``(position, Z)``.
    """

    dim: int = 1
    n_points: int = 32
    spacing: float = 0.4
    center: tuple = ()
    nuclei: tuple = ()
    softening: float = 0.2
    boundary: str = "dirichlet"

    def validate(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ConfigError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n_points < 2:
            raise ConfigError("grid needs at least 2 points per dimension")
        if not self.spacing > 0:
            raise ConfigError("spacing must be positive")
        if not self.softening > 0:
            raise ConfigError("softening length must be positive")
        if self.boundary != "dirichlet":
            raise ConfigError(f"unsupported boundary {self.boundary!r}")
        if self.center and len(self.center) != self.dim:
            raise ConfigError("center has the wrong dimension")
        for pos, z in self.nuclei:
            if len(np.atleast_1d(pos)) != self.dim:
                raise ConfigError("nucleus position has the wrong dimension")
            if not z > 0:
                raise ConfigError("nuclear charge must be positive")


@dataclass(frozen=True, eq=False)
class ParticleSpace:
    dim: int
    points: np.ndarray  # (M_s, dim)
    weights: np.ndarray  # (M_s,)

    @property
    def Ms(self) -> int:
        return self.points.shape[0]

    @property
    def Mtot(self) -> int:
        return 2 * self.Ms

    @cached_property
    def gamma_weights(self) -> np.ndarray:
        return np.concatenate([self.weights, self.weights])

    def index(self, j: int, spin: int) -> int:
        return spin * self.Ms + j


@dataclass(frozen=True, eq=False)
class OneBodyOp:
    Tmat: np.ndarray
    Vmat: np.ndarray

    @cached_property
    def H1(self) -> np.ndarray:
        return self.Tmat + self.Vmat

    def only_V(self) -> "OneBodyOp":
        return OneBodyOp(np.zeros_like(self.Tmat), self.Vmat)

    def only_T(self) -> "OneBodyOp":
        return OneBodyOp(self.Tmat, np.zeros_like(self.Vmat))


@dataclass(frozen=True, eq=False)
class PoissonOp:
    Pmat: np.ndarray


@dataclass(frozen=True, eq=False)
class GridModel:
    space: ParticleSpace
    op: OneBodyOp
    pop: PoissonOp
    config: ModelConfig = field(default_factory=ModelConfig)


def _laplacian_1d(n: int, h: float) -> np.ndarray:
    return (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1)
            + np.diag(np.ones(n - 1), -1)) / h**2


def build_grid_model(cfg: ModelConfig) -> GridModel:
    cfg.validate()
    n, h, d = cfg.n_points, cfg.spacing, cfg.dim
    center = np.asarray(cfg.center if cfg.center else np.zeros(d), dtype=float)
    axis = (np.arange(n) - (n - 1) / 2.0) * h
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1) + center
    ms = points.shape[0]
    weights = np.full(ms, h**d)

    lap1 = _laplacian_1d(n, h)
    eye = np.eye(n)
    lap = np.zeros((ms, ms))
    for k in range(d):
        term = np.ones((1, 1))
        for i in range(d):
            term = np.kron(term, lap1 if i == k else eye)
        lap += term
    T = -0.5 * lap

    a2 = cfg.softening**2
    v = np.zeros(ms)
    for pos, z in cfg.nuclei:
        r2 = np.sum((points - np.atleast_1d(pos)) ** 2, axis=1)
        v -= z / np.sqrt(r2 + a2)
    diff = points[:, None, :] - points[None, :, :]
    P = 1.0 / np.sqrt(np.sum(diff**2, axis=2) + a2)
    return GridModel(ParticleSpace(d, points, weights), OneBodyOp(T, np.diag(v)), PoissonOp(P), cfg)


def _check(sp: ParticleSpace, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[-1] != sp.Mtot:
        raise ValueError(f"expected length {sp.Mtot}, got {f.shape[-1]}")
    return f


def integrate(sp: ParticleSpace, f) -> float:
    f = _check(sp, f)
    return f @ sp.gamma_weights


def inner(sp: ParticleSpace, f, g) -> float:
    f, g = _check(sp, f), _check(sp, g)
    return np.conj(f) @ (sp.gamma_weights * g)


def gram(sp: ParticleSpace, F: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Matrix of inner products between the rows of F and of G."""
    return np.conj(F) @ (G * sp.gamma_weights).T


def split_spin(sp: ParticleSpace, f: np.ndarray) -> np.ndarray:
    """View ``(..., Mtot)`` as ``(..., 2, M_s)``."""
    return np.asarray(f).reshape(f.shape[:-1] + (2, sp.Ms))


def apply_matrix(sp: ParticleSpace, M: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Apply a spatial matrix to each spin channel of (a stack of) functions."""
    f = _check(sp, f)
    g = split_spin(sp, f) @ M.T
    return g.reshape(f.shape)


def apply_TV(sp: ParticleSpace, op: OneBodyOp, f) -> np.ndarray:
    return apply_matrix(sp, op.H1, f)


def density(sp: ParticleSpace, f) -> np.ndarray:
    """Spin-summed spatial function."""
    return split_spin(sp, _check(sp, f)).sum(axis=-2)


def apply_WP(sp: ParticleSpace, pop: PoissonOp, f) -> np.ndarray:
    """Softened Coulomb potential of ``f`` summed over spin (spatial output)."""
    return (density(sp, f) * sp.weights) @ pop.Pmat.T


def broadcast_spin(sp: ParticleSpace, u: np.ndarray) -> np.ndarray:
    return np.concatenate([u, u], axis=-1)


def delta_vector(sp: ParticleSpace, gamma: int) -> np.ndarray:
    if not 0 <= gamma < sp.Mtot:
        raise IndexError(f"gamma {gamma} out of range [0, {sp.Mtot})")
    out = np.zeros(sp.Mtot)
    out[gamma] = 1.0 / sp.gamma_weights[gamma]
    return out
