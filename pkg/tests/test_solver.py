from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from detsum import oracle
from detsum.config import SolveConfig
from detsum.greens import build_expsum, build_greens, required_upper
from detsum.linalg import compute_pseudo
from detsum.space import ModelConfig, PoissonOp, build_grid_model
from detsum.suite import small_model, unit_rows
from detsum.solver.als import _clean_channels, _renormalize, als_direction_solve, als_sweep
from detsum.solver.cg import SemidefinitenessError, cg_solve
from detsum.solver.energy import DegenerateWavefunction, mu_newton, rayleigh
from detsum.solver.fastpath import ReuseCache, update_D
from detsum.solver.gradient import direction_step, gradient, grad_step
from detsum.solver.iterate import PositiveMuError, greens_iterate
from detsum.solver.normal import apply_normal, build_normal_matrix, dense_normal_matrix
from detsum.solver.rhs import build_rhs
from detsum.wave import SeparatedWavefunction, norm_A

MODEL = small_model(3)
SP = MODEL.space


def random_psi(sp, r, N, rng, s=None):
    orbs = np.stack([unit_rows(sp, rng.standard_normal((N, sp.Mtot))) for _ in range(r)])
    return SeparatedWavefunction(rng.standard_normal(r) if s is None else s, orbs)


def orthonormal(sp, n, rng):
    Q, _ = np.linalg.qr(rng.standard_normal((sp.Mtot, n)))
    return (Q / np.sqrt(sp.gamma_weights)[:, None]).T


def weighted_dot(sp, a, b):
    return float(np.sum((a * b) @ sp.gamma_weights))


def greens_for(model, mu, N, eps=1e-8):
    es = build_expsum(eps, 10 * required_upper(model.op, mu, N))
    return build_greens(es, mu, model.op, N)


def without_potentials(model):
    return replace(model, op=replace(model.op, Vmat=np.zeros_like(model.op.Vmat)),
                   pop=PoissonOp(np.zeros_like(model.pop.Pmat)))


# normal matrix -------------------------------------------------------------------

@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(2, 3))
def test_kernel_symmetric_psd(seed, r, N):
    rng = np.random.default_rng(seed)
    psi = random_psi(SP, r, N, rng)
    K = build_normal_matrix(SP, psi, int(rng.integers(0, N)))
    x, y = rng.standard_normal((r, SP.Mtot)), rng.standard_normal((r, SP.Mtot))
    lhs = weighted_dot(SP, x, apply_normal(SP, K, y))
    rhs = weighted_dot(SP, apply_normal(SP, K, x), y)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)
    assert weighted_dot(SP, x, apply_normal(SP, K, x)) >= -1e-10 * weighted_dot(SP, x, x)


def test_r1_orthonormal_projector(rng):
    phi = orthonormal(SP, 3, rng)
    psi = SeparatedWavefunction([1.0], phi[None])
    K = build_normal_matrix(SP, psi, 1)
    x = rng.standard_normal((1, SP.Mtot))
    Kx = apply_normal(SP, K, x)
    ref = x[0] - sum(weighted_dot(SP, p, x[0]) * p for p in phi[[0, 2]])
    assert np.allclose(Kx[0], ref, atol=1e-12)
    assert np.allclose(apply_normal(SP, K, Kx), Kx, atol=1e-12)


def test_deficient_kernel_matches_oracle(rng):
    f, g, h = unit_rows(SP, rng.standard_normal((3, SP.Mtot)))
    psi = SeparatedWavefunction([1.3], np.stack([h, f, f])[None])
    K = build_normal_matrix(SP, psi, 0)
    assert K.blocks[0][0].kind in ("one", "null")
    ref = 1.3**2 * oracle.dense_kernel(MODEL, psi.orbitals[0, 1:], psi.orbitals[0, 1:])
    assert np.allclose(dense_normal_matrix(SP, K), ref, atol=1e-8)
    # one repeated pair in the bra tail only: deficiency one, still nonzero
    psi2 = SeparatedWavefunction([1.0, 1.0], np.stack([np.stack([h, f, f]), np.stack([h, f, g])]))
    K2 = build_normal_matrix(SP, psi2, 0)
    assert K2.blocks[0][1].kind == "one"
    ref01 = oracle.dense_kernel(MODEL, psi2.orbitals[0, 1:], psi2.orbitals[1, 1:])
    M = SP.Mtot
    assert np.allclose(dense_normal_matrix(SP, K2)[:M, M:], ref01, atol=1e-8)


def test_null_kernel_contributes_zero(rng):
    psi = SeparatedWavefunction([1.0], np.concatenate([rng.standard_normal((1, SP.Mtot)),
                                                        np.zeros((2, SP.Mtot))])[None])
    K = build_normal_matrix(SP, psi, 0)
    assert K.blocks[0][0].kind == "null"
    assert np.all(apply_normal(SP, K, rng.standard_normal((1, SP.Mtot))) == 0.0)


def test_direction_out_of_range(rng):
    with pytest.raises(ValueError):
        build_normal_matrix(SP, random_psi(SP, 1, 2, rng), 2)


# right-hand side -----------------------------------------------------------------

def test_rhs_matches_dense(rng):
    eps = 1e-8
    m = build_grid_model(ModelConfig(n_points=3, spacing=0.8, nuclei=((0.0, 1.5),), softening=0.4))
    psi = random_psi(m.space, 1, 2, rng, s=[1.0])
    tilde = random_psi(m.space, 1, 2, rng, s=[0.8])
    mu = -1.2
    rep = greens_for(m, mu, 2, eps)
    for k in (0, 1):
        b = build_rhs(m, tilde, psi, rep, k)
        ref = oracle.dense_rhs(m, tilde, psi, mu, k)
        assert np.linalg.norm(b - ref) <= 5 * eps * np.linalg.norm(ref)


def test_rhs_orthogonal_to_tail(rng):
    m = small_model(4)
    psi, tilde = random_psi(m.space, 2, 3, rng), random_psi(m.space, 2, 3, rng)
    rep = greens_for(m, -1.0, 3, 1e-4)
    b = build_rhs(m, tilde, psi, rep, 1)
    for l in range(2):
        scale = np.sqrt(weighted_dot(m.space, b[l], b[l]))
        for i in (0, 2):
            assert abs(weighted_dot(m.space, b[l], tilde.orbitals[l, i])) <= 1e-8 * scale


def test_rhs_vanishes_without_potentials(rng):
    m = without_potentials(MODEL)
    psi, tilde = random_psi(SP, 2, 2, rng), random_psi(SP, 2, 2, rng)
    rep = greens_for(m, -1.0, 2, 1e-3)
    assert np.all(build_rhs(m, tilde, psi, rep, 0) == 0.0)


# conjugate gradients -------------------------------------------------------------

def test_cg_projector_one_step(rng):
    phi = orthonormal(SP, 2, rng)
    K = build_normal_matrix(SP, SeparatedWavefunction([1.0], phi[None]), 0)
    b = apply_normal(SP, K, rng.standard_normal((1, SP.Mtot)))
    x, res, steps, _ = cg_solve(SP, lambda v: apply_normal(SP, K, v), b, np.zeros_like(b), 10, 1e-12)
    assert steps == 1
    assert res <= 1e-12 * np.sqrt(weighted_dot(SP, b, b))


def test_cg_error_monotone_and_matches_dense(rng):
    m = small_model(4)
    sp = m.space
    psi = random_psi(sp, 2, 3, rng)
    K = build_normal_matrix(sp, psi, 0)
    A = dense_normal_matrix(sp, K)
    b = apply_normal(sp, K, rng.standard_normal((2, sp.Mtot)))
    x0 = rng.standard_normal((2, sp.Mtot))
    xs = []

    def apply(v):
        return apply_normal(sp, K, v)

    for S in range(0, 40):
        xs.append(cg_solve(sp, apply, b, x0, S, 1e-13)[0])
    x, res, steps, hist = cg_solve(sp, apply, b, x0, 200, 1e-12)
    assert res <= 1e-12 * np.sqrt(weighted_dot(sp, b, b))
    # A-norm of the error never grows (the residual norm itself may)
    errs = [weighted_dot(sp, e, apply(e)) for e in (xi - x for xi in xs)]
    assert all(b_ <= a_ * (1 + 1e-8) + 1e-20 for a_, b_ in zip(errs, errs[1:]))
    # same solution as the dense least-squares solve started from x0
    dx = np.linalg.lstsq(A, (b - apply(x0)).ravel(), rcond=1e-12)[0]
    assert np.allclose(x, x0 + dx.reshape(x0.shape), atol=1e-8)


def test_cg_detects_indefinite():
    sp = small_model(2).space
    with pytest.raises(SemidefinitenessError):
        cg_solve(sp, lambda v: -v, np.ones((1, sp.Mtot)), np.zeros((1, sp.Mtot)), 5, 1e-12)


# alternating least squares -------------------------------------------------------

def test_direction_solve_is_fixed_point(rng):
    psi, tilde = random_psi(SP, 1, 2, rng, s=[1.0]), random_psi(SP, 1, 2, rng, s=[1.0])
    rep = greens_for(MODEL, -1.0, 2, 1e-4)
    once = als_direction_solve(MODEL, tilde, psi, rep, 0, method="dense").psi_tilde
    twice = als_direction_solve(MODEL, once, psi, rep, 0, method="dense").psi_tilde
    a, b = once.orbitals[0, 0] * once.s[0], twice.orbitals[0, 0] * twice.s[0]
    assert np.allclose(a, b, atol=1e-8 * np.abs(a).max())


def test_direction_solves_do_not_increase_residual(rng):
    psi, tilde = random_psi(SP, 2, 2, rng), random_psi(SP, 2, 2, rng)
    mu = -1.0
    rep = greens_for(MODEL, mu, 2, 1e-8)
    last = oracle.fit_residual(MODEL, tilde, psi, mu)
    for _ in range(2):
        for k in range(2):
            tilde = als_direction_solve(MODEL, tilde, psi, rep, k, method="dense").psi_tilde
            now = oracle.fit_residual(MODEL, tilde, psi, mu)
            # the Green's function is exact to 1e-8, so allow that much slack
            assert now <= last + 1e-7 * last
            last = now


def test_zero_solution_deactivates_term(rng):
    tilde = random_psi(SP, 2, 2, rng, s=np.array([1.5, -0.5]))
    x = np.stack([rng.standard_normal(SP.Mtot), np.zeros(SP.Mtot)])
    out = _renormalize(MODEL, tilde, 1, x, np.random.default_rng(0))
    assert out.s[1] == 0.0 and out.s[0] != 0.0
    norms = np.sqrt((out.orbitals[:, 1] ** 2) @ SP.gamma_weights)
    assert np.allclose(norms, 1.0)
    assert np.array_equal(out.orbitals[:, 0], tilde.orbitals[:, 0])


def test_channel_cleanup_only_removes_rounding(rng):
    Ms = SP.Ms
    old = np.concatenate([rng.standard_normal(Ms), np.zeros(Ms)])
    x = np.concatenate([rng.standard_normal(Ms), 1e-14 * rng.standard_normal(Ms)])
    assert np.all(_clean_channels(SP, old, x)[Ms:] == 0.0)
    real = np.concatenate([x[:Ms], 1e-3 * np.ones(Ms)])
    assert np.array_equal(_clean_channels(SP, old, real), real)


# energies ------------------------------------------------------------------------

def test_rayleigh_single_orthonormal_without_pair(rng):
    m = replace(MODEL, pop=PoissonOp(np.zeros_like(MODEL.pop.Pmat)))
    phi = orthonormal(SP, 2, rng)
    H = oracle.gamma_matrix(SP, m.op.H1)
    ref = sum(weighted_dot(SP, p, H @ p) for p in phi)
    assert rayleigh(m, SeparatedWavefunction([2.0], phi[None])) == pytest.approx(ref, rel=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_rayleigh_matches_dense(seed):
    rng = np.random.default_rng(seed)
    psi = random_psi(SP, 2, 3, rng)
    assert rayleigh(MODEL, psi) == pytest.approx(oracle.dense_rayleigh(MODEL, psi), rel=1e-8)


def test_rayleigh_degenerate(rng):
    f = rng.standard_normal(SP.Mtot)
    with pytest.raises(DegenerateWavefunction):
        rayleigh(MODEL, SeparatedWavefunction([1.0], np.stack([f, f])[None]))


def test_mu_newton_unchanged_when_fit_is_input(rng):
    psi = random_psi(SP, 2, 2, rng)
    assert mu_newton(MODEL, psi, psi, -0.7) == pytest.approx(-0.7, abs=1e-12)


# gradient ------------------------------------------------------------------------

def test_gradient_matches_finite_differences(rng):
    psi = random_psi(SP, 2, 2, rng)
    g = gradient(MODEL, psi)
    h = 1e-5
    for l, j, gi in [(0, 0, 1), (1, 1, 4), (0, 1, 5)]:
        up, dn = psi.copy(), psi.copy()
        up.orbitals[l, j, gi] += h
        dn.orbitals[l, j, gi] -= h
        fd = (rayleigh(MODEL, up) - rayleigh(MODEL, dn)) / (2 * h)
        assert SP.gamma_weights[gi] * g[l, j, gi] == pytest.approx(fd, rel=1e-6)


def test_gradient_vanishes_at_eigenstate():
    m = replace(MODEL, pop=PoissonOp(np.zeros_like(MODEL.pop.Pmat)))
    _, Q = np.linalg.eigh(m.op.H1)
    Ms = SP.Ms
    up = np.concatenate([Q[:, 0], np.zeros(Ms)])
    dn = np.concatenate([np.zeros(Ms), Q[:, 0]])
    orbs = np.stack([up, dn]) / np.sqrt(SP.weights[0])
    g = gradient(m, SeparatedWavefunction([1.0], orbs[None]))
    assert np.linalg.norm(g) <= 1e-6


def test_descent_steps_do_not_increase(rng):
    psi = random_psi(SP, 2, 2, rng)
    before = rayleigh(MODEL, psi)
    for j in range(2):
        nxt = direction_step(MODEL, psi, j)
        assert rayleigh(MODEL, nxt) <= rayleigh(MODEL, psi) + 1e-12
        psi = nxt
    assert rayleigh(MODEL, grad_step(MODEL, psi, mode="full")) <= rayleigh(MODEL, psi) + 1e-12
    assert rayleigh(MODEL, psi) < before
    with pytest.raises(ValueError):
        grad_step(MODEL, psi, mode="sideways")


# fast path -----------------------------------------------------------------------

def test_update_D_no_change_is_exact(rng):
    A = rng.standard_normal((3, 3))
    P = compute_pseudo(A)
    nb = update_D(P, A, A, A, 1)
    assert np.allclose(nb.pinv, P.pinv, atol=1e-12)
    assert nb.det_mod == pytest.approx(P.det_mod, rel=1e-12)


@pytest.mark.parametrize("N,r", [(2, 2), (3, 2)])
def test_fast_sweep_matches_fresh(N, r, rng):
    m = small_model(4)
    psi, tilde = random_psi(m.space, r, N, rng), random_psi(m.space, r, N, rng)
    rep = greens_for(m, -1.5, N, 1e-4)
    plain, _ = als_sweep(m, tilde.copy(), psi, rep, rng=np.random.default_rng(0))
    cache = ReuseCache(m, rep, verify=True)
    fast, _ = als_sweep(m, tilde.copy(), psi, rep, rng=np.random.default_rng(0), cache=cache)
    assert cache.stats["verify_failures"] == 0, dict(cache.max_dev)
    assert cache.stats["D_updated"] > 0 and cache.stats["E_updated"] > 0
    assert np.allclose(fast.s, plain.s, rtol=1e-9)
    assert np.allclose(fast.orbitals, plain.orbitals, atol=1e-9)


# driver --------------------------------------------------------------------------

TOY = build_grid_model(ModelConfig(n_points=3, spacing=1.0, nuclei=((0.0, 2.0),), softening=0.2))
TOY_CFG = SolveConfig(r=1, N=2, I=3, eps_expsum=1e-6, mu_tol=0.0)


@pytest.mark.parametrize("N,r,fast", [(2, 1, False), (3, 2, False), (3, 2, True)])
def test_iterate_preserves_spin_support(N, r, fast):
    res = greens_iterate(TOY, replace(TOY_CFG, N=N, r=r, fast_path=fast))
    Ms = TOY.space.Ms
    orbs = res.psi.orbitals
    # eigen start alternates spins: even electrons up, odd electrons down
    for i in range(N):
        other = slice(Ms, 2 * Ms) if i % 2 == 0 else slice(0, Ms)
        assert np.all(orbs[:, i, other] == 0.0)


def test_iterate_deterministic_and_variational():
    a = greens_iterate(TOY, TOY_CFG)
    b = greens_iterate(TOY, TOY_CFG)
    assert a.trace.mus == b.trace.mus
    E0 = oracle.exact_ground(TOY, 2)[0]
    assert all(x >= E0 - 1e-10 for x in a.trace.rayleighs)
    assert norm_A(TOY.space, a.psi) == pytest.approx(1.0)


def test_iterate_newton_rule_runs():
    res = greens_iterate(TOY, replace(TOY_CFG, mu_rule="newton", I=2))
    assert len(res.trace.rows) == 2 and res.mu < 0


def test_iterate_rejects_positive_mu(rng):
    m = build_grid_model(ModelConfig(n_points=3, spacing=1.0))
    with pytest.raises(PositiveMuError):
        greens_iterate(m, TOY_CFG)


def test_eigenfunction_is_fixed_point():
    # the exact ground state of a one-term-representable model stays put
    m = without_potentials(TOY)
    m = replace(m, op=replace(m.op, Vmat=TOY.op.Vmat))
    _, Q = np.linalg.eigh(m.op.H1)
    Ms = m.space.Ms
    orbs = np.stack([np.concatenate([Q[:, 0], np.zeros(Ms)]),
                     np.concatenate([np.zeros(Ms), Q[:, 0]])]) / np.sqrt(m.space.weights[0])
    psi0 = SeparatedWavefunction([1.0], orbs[None])
    res = greens_iterate(m, replace(TOY_CFG, I=1), psi0=psi0)
    E = 2 * np.linalg.eigvalsh(m.op.H1)[0]
    assert res.mu == pytest.approx(E, abs=1e-8)
    overlaps = np.sum(res.psi.orbitals[0] * orbs * m.space.gamma_weights, axis=1)
    assert abs(abs(res.psi.s[0] * np.prod(overlaps)) - 1.0) <= 1e-6
