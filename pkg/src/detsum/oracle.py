"""Brute-force dense reference for N <= 3 electrons.

Everything here works on full tensors over ``(Mtot,)*N`` gamma indices and
expands the antisymmetrizer literally over all N! permutations, so it shares no
code path with the closed-form formulas it checks.  Test-only; never fast.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import eigsh

from .space import GridModel, ParticleSpace

MAX_ENTRIES = 10**6


class OracleSizeError(ValueError):
    pass


def _perm_sign(p) -> int:
    sign, seen = 1, list(p)
    for i in range(len(seen)):
        while seen[i] != i:
            j = seen[i]
            seen[i], seen[j] = seen[j], seen[i]
            sign = -sign
    return sign


def _check_size(mtot: int, n: int) -> None:
    if n > 3 or mtot**n > MAX_ENTRIES:
        raise OracleSizeError(f"dense state Mtot^N = {mtot}^{n} exceeds oracle limits (N <= 3, <= {MAX_ENTRIES})")


def product(orbs: np.ndarray) -> np.ndarray:
    orbs = np.atleast_2d(orbs)
    _check_size(orbs.shape[1], orbs.shape[0])
    out = orbs[0]
    for o in orbs[1:]:
        out = np.multiply.outer(out, o)
    return out


def antisymmetrize(tensor: np.ndarray) -> np.ndarray:
    """Sum over permutations of the tensor axes with permutation signs."""
    n = tensor.ndim
    out = np.zeros_like(tensor)
    for p in itertools.permutations(range(n)):
        out = out + _perm_sign(p) * np.transpose(tensor, p)
    return out


def dense_antisymmetrize(orbs: np.ndarray) -> np.ndarray:
    return antisymmetrize(product(orbs))


def weight_tensor(sp: ParticleSpace, n: int) -> np.ndarray:
    w = sp.gamma_weights
    out = w
    for _ in range(n - 1):
        out = np.multiply.outer(out, w)
    return out


def dense_ip(sp: ParticleSpace, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(weight_tensor(sp, a.ndim) * np.conj(a) * b))


def gamma_matrix(sp: ParticleSpace, M: np.ndarray) -> np.ndarray:
    """Spatial matrix acting identically on both spin channels, as Mtot x Mtot."""
    return np.kron(np.eye(2), M)


def apply_axis(tensor: np.ndarray, M: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(M, tensor, axes=([1], [axis])), 0, axis)


def pair_tensor(sp: ParticleSpace, Pmat: np.ndarray, n: int) -> np.ndarray:
    """Pointwise sum over pairs i<j of P(r_i, r_j)."""
    Pg = np.tile(Pmat, (2, 2))
    out = np.zeros((sp.Mtot,) * n)
    for i, j in itertools.combinations(range(n), 2):
        shape = [1] * n
        shape[i], shape[j] = sp.Mtot, sp.Mtot
        out = out + Pg.reshape(shape)
    return out


def dense_apply_H(model: GridModel, state: np.ndarray, T: bool = True, V: bool = True,
                  W: bool = True) -> np.ndarray:
    sp = model.space
    n = state.ndim
    M = np.zeros_like(model.op.Tmat)
    if T:
        M = M + model.op.Tmat
    if V:
        M = M + model.op.Vmat
    Mg = gamma_matrix(sp, M)
    out = np.zeros_like(state)
    if T or V:
        for ax in range(n):
            out = out + apply_axis(state, Mg, ax)
    if W and n >= 2:
        out = out + pair_tensor(sp, model.pop.Pmat, n) * state
    return out


def dense_matrix_element(model: GridModel, bra: np.ndarray, ket: np.ndarray, **ops) -> float:
    """<bra | X | A ket> with products of orbitals and the dropped 1/N!."""
    sp = model.space
    return dense_ip(sp, product(bra), dense_apply_H(model, dense_antisymmetrize(ket), **ops))


def lowdin(model: GridModel, bra, ket) -> float:
    return dense_ip(model.space, product(bra), dense_antisymmetrize(ket))


def ip_TV(model: GridModel, bra, ket) -> float:
    return dense_matrix_element(model, bra, ket, T=True, V=True, W=False)


def ip_W(model: GridModel, bra, ket) -> float:
    return dense_matrix_element(model, bra, ket, T=False, V=False, W=True)


def delta_contract(model: GridModel, tail: np.ndarray, tensor: np.ndarray) -> np.ndarray:
    """gamma -> <delta_gamma x tail, tensor>, contracting all but the first axis."""
    w = model.space.gamma_weights
    out = tensor
    # contract trailing axes against the weighted tail orbitals, last first
    for t in np.asarray(tail)[::-1]:
        out = out @ (w * np.conj(t))
    return out


def dense_delta_ip(model: GridModel, tail: np.ndarray, ket: np.ndarray, op: str = "id") -> np.ndarray:
    """gamma -> <delta_gamma x tail | X | A ket> for X in {id, TV, V, T, W}."""
    sp = model.space
    tail = np.atleast_2d(tail) if len(tail) else np.zeros((0, sp.Mtot))
    state = dense_antisymmetrize(ket)
    if op != "id":
        flags = {"TV": dict(T=True, V=True, W=False), "V": dict(T=False, V=True, W=False),
                 "T": dict(T=True, V=False, W=False), "W": dict(T=False, V=False, W=True)}[op]
        state = dense_apply_H(model, state, **flags)
    return delta_contract(model, tail, state)


def dense_kernel(model: GridModel, bra_tail: np.ndarray, ket_tail: np.ndarray) -> np.ndarray:
    """K[g, g'] = <delta_g x bra_tail, delta_g' x ket_tail>_A, entry by entry.

    Applied as (K x)(g) = sum_g' K[g, g'] w_g' x(g').
    """
    sp = model.space
    K = np.empty((sp.Mtot, sp.Mtot))
    for g in range(sp.Mtot):
        e = np.zeros(sp.Mtot)
        e[g] = 1.0 / sp.gamma_weights[g]
        ket = np.vstack([e[None, :], np.asarray(ket_tail).reshape(-1, sp.Mtot)])
        K[:, g] = dense_delta_ip(model, bra_tail, ket)
    return K * sp.gamma_weights[None, :]


def dense_rhs(model: GridModel, psi_tilde, psi, mu: float, k: int) -> np.ndarray:
    """Right-hand side b(l) of the direction-k fit, using the exact resolvent."""
    g = fit_target(model, psi, mu)
    out = []
    for s, orbs in zip(psi_tilde.s, psi_tilde.orbitals):
        tail = np.delete(orbs, k, axis=0)
        out.append(s * (-1) ** k * delta_contract(model, tail, g))
    return np.array(out)


def apply_F_dense(tensor: np.ndarray, Fg: np.ndarray) -> np.ndarray:
    out = tensor
    for ax in range(tensor.ndim):
        out = apply_axis(out, Fg, ax)
    return out


def separated_state(model: GridModel, psi) -> np.ndarray:
    out = 0.0
    for s, orbs in zip(psi.s, psi.orbitals):
        out = out + s * dense_antisymmetrize(orbs)
    return out


def resolvent(model: GridModel, tensor: np.ndarray, mu: float) -> np.ndarray:
    """(T_N - mu)^{-1} applied to a dense tensor, exactly."""
    lam, Q = np.linalg.eigh(model.op.Tmat)
    Qg = gamma_matrix(model.space, Q)
    lg = np.concatenate([lam, lam])
    n = tensor.ndim
    x = tensor
    for ax in range(n):
        x = apply_axis(x, Qg.T, ax)
    denom = -mu
    for ax in range(n):
        shape = [1] * n
        shape[ax] = lg.size
        denom = denom + lg.reshape(shape)
    x = x / denom
    for ax in range(n):
        x = apply_axis(x, Qg, ax)
    return x


def fit_target(model: GridModel, psi, mu: float) -> np.ndarray:
    """-G_mu (V + W) psi as a dense antisymmetric tensor."""
    state = separated_state(model, psi)
    return -resolvent(model, dense_apply_H(model, state, T=False, V=True, W=True), mu)


def fit_residual(model: GridModel, psi_tilde, psi, mu: float) -> float:
    """Pseudo-norm of psi_tilde minus the Green's-function image of psi."""
    diff = separated_state(model, psi_tilde) - fit_target(model, psi, mu)
    n = diff.ndim
    return math.sqrt(max(dense_ip(model.space, diff, diff), 0.0) / math.factorial(n))


def dense_rayleigh(model: GridModel, psi) -> float:
    state = separated_state(model, psi)
    return dense_ip(model.space, state, dense_apply_H(model, state)) / dense_ip(model.space, state, state)


def exact_ground(model: GridModel, n: int):
    """Lowest eigenpair of H restricted to antisymmetric tensors.

    Uses the basis of strictly increasing gamma tuples.  Returns the energy and
    the (weight-normalized) eigenvector lifted back to the full tensor.
    """
    sp = model.space
    m = sp.Mtot
    _check_size(m, n)
    tuples = list(itertools.combinations(range(m), n))
    perms = [(p, _perm_sign(p)) for p in itertools.permutations(range(n))]
    rows, cols, vals = [], [], []
    norm = 1.0 / math.sqrt(math.factorial(n))
    for k, t in enumerate(tuples):
        for p, sgn in perms:
            rows.append(np.ravel_multi_index(tuple(t[i] for i in p), (m,) * n))
            cols.append(k)
            vals.append(sgn * norm)
    B = sps.csr_matrix((vals, (rows, cols)), shape=(m**n, len(tuples)))
    H1 = sps.csr_matrix(gamma_matrix(sp, model.op.H1))
    eye = sps.identity(m, format="csr")
    H = sps.csr_matrix((m**n, m**n))
    for ax in range(n):
        term = sps.identity(1, format="csr")
        for i in range(n):
            term = sps.kron(term, H1 if i == ax else eye, format="csr")
        H = H + term
    if n >= 2:
        H = H + sps.diags(pair_tensor(sp, model.pop.Pmat, n).ravel())
    Has = (B.T @ H @ B).toarray()
    Has = 0.5 * (Has + Has.T)
    if Has.shape[0] <= 3000:
        w, v = np.linalg.eigh(Has)
        e0, c = w[0], v[:, 0]
    else:
        w, v = eigsh(Has, k=1, which="SA")
        e0, c = w[0], v[:, 0]
    state = (B @ c).reshape((m,) * n)
    state = state / math.sqrt(dense_ip(sp, state, state))
    return float(e0), state
