"""Seeded randomized equivalence suites: closed-form formulas against dense
references (numpy determinants and SVDs, and the permutation-expansion
oracle).  Shared by ``detsum verify`` and the test suite.

Every check returns a scaled error; a case passes when the error is at most
``tol_scale`` times the family tolerance, so ``tol_scale`` doubles as a hook
for exercising the failure path.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import asym, oracle
from .linalg import _update_with_terms, compute_pseudo, det_perturbed_identity
from .space import ModelConfig, build_grid_model, gram
from .solver.normal import build_normal_matrix, dense_normal_matrix

TOL = {
    "det_identity": 1e-10,
    "update": 1e-8,
    "ip": 1e-8,
    "ip_abs": 1e-12,
    "delta": 1e-8,
    "orthogonality": 1e-10,
    "contraction": 1e-8,
    "kernel": 1e-8,
}


@dataclass
class SuiteReport:
    passed: dict = field(default_factory=lambda: defaultdict(int))
    failed: dict = field(default_factory=lambda: defaultdict(int))
    worst: dict = field(default_factory=lambda: defaultdict(float))

    def record(self, name: str, err: float, tol: float) -> bool:
        ok = bool(err <= tol)
        (self.passed if ok else self.failed)[name] += 1
        self.worst[name] = max(self.worst[name], float(err))
        return ok

    @property
    def ok(self) -> bool:
        return not any(self.failed.values())

    def names(self):
        return sorted(set(self.passed) | set(self.failed))

    def lines(self):
        out = []
        for name in self.names():
            p, f = self.passed[name], self.failed[name]
            out.append(f"{'PASS' if f == 0 else 'FAIL'} {name}: {p} passed, {f} failed, worst {self.worst[name]:.3e}")
        return out


# generators -------------------------------------------------------------------

def small_model(Ms: int, dim: int = 1):
    return build_grid_model(ModelConfig(dim=dim, n_points=Ms, spacing=0.7,
                                        nuclei=((0.0,) * dim + (1.5,),) if dim > 1 else ((0.0, 1.5),),
                                        softening=0.4))


def unit_rows(sp, X: np.ndarray) -> np.ndarray:
    n = np.sqrt((X * X) @ sp.gamma_weights)
    n[n == 0] = 1.0
    return X / n[:, None]


def deficient_rows(rng, sp, ket: np.ndarray, rows: int, q: int) -> np.ndarray:
    """Unit rows whose overlap matrix with ``ket`` has rank ``rows - q``.

    The part inside span(ket) goes through a rank-(rows - q) mixing matrix;
    a random part orthogonal to ket is added so the rows stay independent
    where the grid allows it.
    """
    n = ket.shape[0]
    comp = rng.standard_normal((rows, ket.shape[1]))
    G = gram(sp, ket, ket)
    comp = comp - (gram(sp, comp, ket) @ np.linalg.inv(G)) @ ket
    if rows - q > 0:
        mix = rng.standard_normal((rows, rows - q)) @ rng.standard_normal((rows - q, n))
    else:
        mix = np.zeros((rows, n))
    return unit_rows(sp, mix @ ket + 0.8 * rng.standard_normal((rows, rows)) @ comp)


def low_rank(rng, n: int, q: int) -> np.ndarray:
    return rng.standard_normal((n, n - q)) @ rng.standard_normal((n - q, n))


def update_vectors(rng, A: np.ndarray, P, case: int):
    """b, c putting ``A + b c^T`` into the requested update case."""
    n = A.shape[0]
    U, S, Vh = np.linalg.svd(A)
    r = int(np.count_nonzero(S > 1e-8 * S[0]))
    b = U[:, :r] @ rng.standard_normal(r)
    c = Vh[:r].T @ rng.standard_normal(r)
    if case in (4, 5):
        b = b + U[:, r:] @ rng.standard_normal(n - r)
    if case in (3, 5):
        c = c + Vh[r:].T @ rng.standard_normal(n - r)
    if case == 1:
        c = -c / (c @ P.pinv @ b)
    return b, c


# families ---------------------------------------------------------------------

def check_det_identity(rng, report: SuiteReport, cases: int, tol_scale: float) -> None:
    for _ in range(cases):
        n = int(rng.integers(1, 9))
        q = int(rng.integers(1, min(n, 4) + 1))
        U, V = rng.standard_normal((n, q)), rng.standard_normal((n, q))
        ref = np.linalg.det(np.eye(n) + U @ V.T)
        err = abs(det_perturbed_identity(U, V) - ref) / max(abs(ref), 1e-300)
        report.record("det_identity", err, TOL["det_identity"] * tol_scale)


def check_updates(rng, report: SuiteReport, cases: int, tol_scale: float) -> None:
    tol = TOL["update"] * tol_scale
    for case in range(1, 6):
        name = f"rank_one_update_case{case}"
        done = 0
        while done < cases:
            n = int(rng.integers(2, 7))
            if case in (1, 2):
                q = 0 if rng.random() < 0.5 else int(rng.integers(0, n - 1))
            else:
                q = int(rng.integers(1, n))
            A = low_rank(rng, n, q)
            P = compute_pseudo(A)
            b, c = update_vectors(rng, A, P, case)
            B, got, _ = _update_with_terms(P, A, b, c)
            A1 = A + np.outer(b, c)
            F = compute_pseudo(A1)
            scale = max(1.0, np.linalg.norm(F.pinv))
            e_pinv = np.linalg.norm(B.pinv - F.pinv) / scale
            e_null = max(np.linalg.norm(A1 @ B.nullproj), np.linalg.norm(B.nullproj @ A1)) / max(1.0, np.linalg.norm(A1))
            e_det = abs(B.det_mod - np.linalg.det(B.modinv)) / max(1.0, abs(B.det_mod))
            wrong = float(got != case or B.rank_def != F.rank_def)
            report.record(name, max(e_pinv, e_null, e_det) + wrong, tol)
            done += 1


def _ip_error(a: float, b: float, tol_scale: float):
    if abs(b) < 1e-4:
        return abs(a - b), TOL["ip_abs"] * tol_scale
    return abs(a - b) / abs(b), TOL["ip"] * tol_scale


# formula -> largest deficiency with a nonzero result
SCALAR_RANGE = {"ip_lowdin": 0, "ip_TV": 1, "ip_W": 2}
DELTA_RANGE = {"ip_delta": 0, "ip_delta_TV": 1, "ip_delta_W": 2}


def case_matrix(repeats: int):
    """(N, M_s, Q) cells: N in {2, 3}, Mtot in {4, 6, 8}, every feasible Q <= 3."""
    cells = [(N, Ms, q) for N in (2, 3) for Ms in (2, 3, 4) for q in range(0, N + 1)]
    return [c for c in cells for _ in range(repeats)]


def check_scalar_products(rng, report: SuiteReport, repeats: int, tol_scale: float) -> None:
    models = {}
    for N, Ms, q in case_matrix(repeats):
        m = models.setdefault(Ms, small_model(Ms))
        sp = m.space
        ket = unit_rows(sp, rng.standard_normal((N, sp.Mtot)))
        bra = deficient_rows(rng, sp, ket, N, q)
        got = {"ip_lowdin": asym.ip_lowdin(sp, bra, ket),
               "ip_TV": asym.ip_TV(sp, m.op, bra, ket),
               "ip_W": asym.ip_W(sp, m.pop, bra, ket)}
        ref = {"ip_lowdin": oracle.lowdin(m, bra, ket),
               "ip_TV": oracle.ip_TV(m, bra, ket),
               "ip_W": oracle.ip_W(m, bra, ket)}
        for name, val in got.items():
            err, tol = _ip_error(val, ref[name], tol_scale)
            report.record(name, err, tol)
            if q > SCALAR_RANGE[name]:
                report.record(name + "_zero_beyond_range", float(val != 0.0), 0.0)


def check_delta_products(rng, report: SuiteReport, repeats: int, tol_scale: float) -> None:
    models = {}
    for N, Ms, q in case_matrix(repeats):
        if q > N - 1:
            continue  # E has deficiency at most N - 1
        m = models.setdefault(Ms, small_model(Ms))
        sp = m.space
        ket = unit_rows(sp, rng.standard_normal((N, sp.Mtot)))
        tail = deficient_rows(rng, sp, ket, N - 1, q)
        g = rng.standard_normal(sp.Mtot)
        bra = np.vstack([g[None, :], tail])
        ops = {"ip_delta": ("id", asym.ip_delta(sp, tail, ket), oracle.lowdin(m, bra, ket)),
               "ip_delta_TV": ("TV", asym.ip_delta_TV(sp, m.op, tail, ket), oracle.ip_TV(m, bra, ket)),
               "ip_delta_W": ("W", asym.ip_delta_W(sp, m.pop, tail, ket), oracle.ip_W(m, bra, ket))}
        for name, (op, val, full) in ops.items():
            ref = oracle.dense_delta_ip(m, tail, ket, op)
            scale = max(1.0, float(np.max(np.abs(ref))))
            report.record(name, float(np.max(np.abs(val - ref))) / scale, TOL["delta"] * tol_scale)
            norm = np.sqrt(sp.gamma_weights @ (val * val))
            orth = max((abs(sp.gamma_weights @ (val * t)) for t in tail), default=0.0) / max(1.0, norm)
            report.record(name + "_orthogonality", orth, TOL["orthogonality"] * tol_scale)
            contracted = float(sp.gamma_weights @ (val * g))
            err, tol = _ip_error(contracted, full, tol_scale)
            report.record(name + "_contraction", err, max(tol, TOL["contraction"] * tol_scale) if abs(full) >= 1e-4 else tol)
            if q > DELTA_RANGE[name]:
                report.record(name + "_zero_beyond_range", float(np.any(val != 0.0)), 0.0)


def check_kernels(rng, report: SuiteReport, cases: int, tol_scale: float) -> None:
    """Normal-equation kernel against the entry-by-entry delta oracle."""
    from .wave import SeparatedWavefunction

    m = small_model(3)
    sp = m.space
    for t in range(cases):
        N = 2 + t % 2
        r = 1 + (t // 2) % 2
        k = int(rng.integers(0, N))
        orbs = np.stack([unit_rows(sp, rng.standard_normal((N, sp.Mtot))) for _ in range(r)])
        psi = SeparatedWavefunction(rng.standard_normal(r), orbs)
        K = dense_normal_matrix(sp, build_normal_matrix(sp, psi, k))
        ref = np.zeros_like(K)
        M = sp.Mtot
        for l in range(r):
            for lp in range(r):
                blk = oracle.dense_kernel(m, np.delete(orbs[l], k, 0), np.delete(orbs[lp], k, 0))
                ref[l * M:(l + 1) * M, lp * M:(lp + 1) * M] = psi.s[l] * psi.s[lp] * blk
        scale = max(1.0, float(np.max(np.abs(ref))))
        report.record("normal_kernel", float(np.max(np.abs(K - ref))) / scale, TOL["kernel"] * tol_scale)


def run_suite(seed: int = 0, tol_scale: float = 1.0, quick: bool = False) -> SuiteReport:
    """All families with one seeded generator; ``quick`` trims case counts."""
    rng = np.random.default_rng(seed)
    report = SuiteReport()
    check_det_identity(rng, report, 40 if quick else 200, tol_scale)
    check_updates(rng, report, 20 if quick else 100, tol_scale)
    check_scalar_products(rng, report, 4 if quick else 24, tol_scale)
    check_delta_products(rng, report, 3 if quick else 12, tol_scale)
    check_kernels(rng, report, 4 if quick else 12, tol_scale)
    return report
