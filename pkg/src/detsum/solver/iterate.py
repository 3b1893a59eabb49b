"""Green's-function iteration driver."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..config import SolveConfig
from ..greens import ExpSum, build_expsum, build_greens, required_upper
from ..space import GridModel
from ..wave import SeparatedWavefunction, norm_A
from .als import als_sweep
from .energy import mu_newton, normalized, rayleigh

TRACE_HEADER = "iter,mu,rayleigh,psiTildeNorm,maxCgResidual,seconds"


class PositiveMuError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class TraceRow:
    iter: int
    mu: float
    rayleigh: float
    psi_tilde_norm: float
    max_cg_residual: float
    seconds: float

    def csv(self) -> str:
        return (f"{self.iter},{self.mu:.17g},{self.rayleigh:.17g},{self.psi_tilde_norm:.17g},"
                f"{self.max_cg_residual:.17g},{self.seconds:.6f}")


@dataclass
class Trace:
    rows: list = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        if self.rows and row.iter <= self.rows[-1].iter:
            raise ValueError("trace rows must be appended in order")
        self.rows.append(row)

    def to_csv(self) -> str:
        return "\n".join([TRACE_HEADER] + [r.csv() for r in self.rows]) + "\n"

    @property
    def mus(self) -> list:
        return [r.mu for r in self.rows]

    @property
    def rayleighs(self) -> list:
        return [r.rayleigh for r in self.rows]


@dataclass
class SolveResult:
    psi: SeparatedWavefunction
    mu: float
    trace: Trace
    converged: bool
    mu0: float
    rayleigh0: float


def initial_guess(model: GridModel, cfg: SolveConfig) -> SeparatedWavefunction:
    """Lowest spatial eigenvectors of T + V with alternating spins, one noisy
    copy per term."""
    sp = model.space
    rng = np.random.default_rng(cfg.seed)
    N, r, Ms = cfg.N, cfg.r, sp.Ms
    if cfg.init_mode == "random":
        orbs = rng.standard_normal((r, N, sp.Mtot))
    else:
        _, Q = np.linalg.eigh(model.op.H1)
        base = np.zeros((N, sp.Mtot))
        for i in range(N):
            spin = i % 2
            base[i, spin * Ms:(spin + 1) * Ms] = Q[:, i // 2]
        orbs = np.empty((r, N, sp.Mtot))
        for l in range(r):
            noise = rng.standard_normal((N, sp.Mtot)) * (base != 0.0)
            orbs[l] = base + cfg.init_noise * noise
    orbs /= np.sqrt((orbs * orbs) @ sp.gamma_weights)[..., None]
    psi = SeparatedWavefunction(np.full(r, 1.0 / r), orbs)
    return normalized(model, psi)


def expsum_for(model: GridModel, cfg: SolveConfig, mu: float, current: ExpSum | None) -> ExpSum:
    need = required_upper(model.op, mu, cfg.N)
    if current is not None and need <= current.valid_upper:
        return current
    R = cfg.expsum_R if cfg.expsum_R > 0 else max(100.0, 10.0 * need)
    if R < need:
        raise ValueError(f"expsum_R = {R} is below the required {need:.6g}")
    return build_expsum(cfg.eps_expsum, R)


def greens_iterate(model: GridModel, cfg: SolveConfig, psi0: SeparatedWavefunction | None = None,
                   cache_factory=None, on_iteration=None) -> SolveResult:
    cfg.validate()
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed + 1)
    psi = initial_guess(model, cfg) if psi0 is None else normalized(model, psi0)
    if psi.N != cfg.N:
        raise ValueError(f"wavefunction has N={psi.N}, config N={cfg.N}")
    mu = rayleigh(model, psi, cfg.eta_rel)
    mu0 = ray0 = mu
    trace = Trace()
    if not mu < 0:
        raise PositiveMuError(f"initial mu = {mu} is not negative", trace)
    if cache_factory is None and cfg.fast_path:
        from .fastpath import cache_factory as reuse

        cache_factory = reuse()
    es = None
    converged = False
    for it in range(1, cfg.I + 1):
        es = expsum_for(model, cfg, mu, es)
        rep = build_greens(es, mu, model.op, cfg.N)
        cache = cache_factory(model, rep, cfg) if cache_factory is not None else None
        psi_tilde, worst = als_sweep(model, psi.copy(), psi, rep, cfg.S, cfg.cg_tol, cfg.eta_rel,
                                     cfg.normal_solver, rng, cache)
        nt = norm_A(model.space, psi_tilde)
        new_psi = normalized(model, psi_tilde)
        ray = rayleigh(model, new_psi, cfg.eta_rel)
        if cfg.mu_rule == "newton":
            new_mu = mu_newton(model, psi, psi_tilde, mu, cfg.eta_rel)
        else:
            new_mu = ray
        trace.append(TraceRow(it, new_mu, ray, nt, worst, time.perf_counter() - start))
        if on_iteration is not None:
            on_iteration(it, new_psi, new_mu)
        if not new_mu < 0:
            raise PositiveMuError(f"mu = {new_mu} became non-negative at iteration {it}", trace)
        done = abs(new_mu - mu) <= cfg.mu_tol
        psi, mu = new_psi, new_mu
        if done:
            converged = True
            break
    return SolveResult(psi, mu, trace, converged, mu0, ray0)
