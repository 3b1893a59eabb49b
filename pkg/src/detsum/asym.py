"""Antisymmetric inner products between Slater products.

Scalar products (Loewdin, one-body, pair interaction) dispatch on the rank
deficiency Q of the overlap matrix L; the delta-function variants return a
function of gamma and dispatch on the deficiency of the completed matrix E
whose first row is the unit vector d orthogonal to the bra-tail overlaps.

Conventions: real orbitals, 1/N! dropped, ``bra`` and ``ket`` are (N, Mtot)
arrays.  The pair operator W_P acts on a gamma-function by summing over spin
and is broadcast back over both spin channels.

Transformed-bra mode: any delta op may be called with a tail that has already
been mapped by a self-adjoint F; applying F to the returned orbital then gives
the inner product with F acting on the delta slot as well.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from .linalg import DEFAULT_ETA_REL
from .space import OneBodyOp, ParticleSpace, PoissonOp, apply_TV, apply_WP, broadcast_spin
from .wave import CoincidenceData, EData, build_E, max_coincidence

#: counts of dispatch decisions taken with a singular value near the threshold
diagnostics: Counter = Counter()


def _note_borderline(data) -> None:
    b = data.bundle
    if b.svd is None or b.eta_abs == 0:
        return
    s = b.svd.S
    if np.any((s > b.eta_abs / 10) & (s < 10 * b.eta_abs)):
        diagnostics["borderline"] += 1


def _w(sp: ParticleSpace, pop: PoissonOp, f: np.ndarray) -> np.ndarray:
    """W_P of a gamma-function (or stack), broadcast back to gamma."""
    return broadcast_spin(sp, apply_WP(sp, pop, f))


def _int(sp: ParticleSpace, f: np.ndarray):
    return f @ sp.gamma_weights


def _pair_potentials(sp, pop, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """W[a_i b_j] for all i, j, shape (len(A), len(B), Mtot)."""
    return _w(sp, pop, A[:, None, :] * B[None, :, :])


def exchange_combo(sp, pop, ket: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """C_b = sum_a phi_a W[theta_a phi_b], the combined exchange functions."""
    return np.einsum("am,abm->bm", ket, _pair_potentials(sp, pop, theta, ket))


# scalar products -------------------------------------------------------------

def _coin(sp, bra, ket, eta_rel, coin):
    if bra.shape != ket.shape:
        raise ValueError(f"bra {bra.shape} and ket {ket.shape} differ in shape")
    if coin is None:
        coin = max_coincidence(sp, bra, ket, eta_rel)
    _note_borderline(coin)
    return coin


def ip_lowdin(sp: ParticleSpace, bra, ket, eta_rel: float = DEFAULT_ETA_REL,
              coin: CoincidenceData | None = None) -> float:
    coin = _coin(sp, np.atleast_2d(bra), np.atleast_2d(ket), eta_rel, coin)
    if coin.rank_def:
        return 0.0
    return float(coin.det_factor)


def ip_TV(sp: ParticleSpace, op: OneBodyOp, bra, ket, eta_rel: float = DEFAULT_ETA_REL,
          coin: CoincidenceData | None = None) -> float:
    bra, ket = np.atleast_2d(bra), np.atleast_2d(ket)
    coin = _coin(sp, bra, ket, eta_rel, coin)
    q = coin.rank_def
    if q == 0:
        hk = apply_TV(sp, op, ket)
        return float(coin.det_factor * np.sum(_int(sp, hk * coin.theta)))
    if q == 1:
        u, v = coin.pairs[0]
        return float(coin.det_factor * _int(sp, apply_TV(sp, op, v @ ket) * (u @ bra)))
    return 0.0


def ip_W(sp: ParticleSpace, pop: PoissonOp, bra, ket, eta_rel: float = DEFAULT_ETA_REL,
         coin: CoincidenceData | None = None) -> float:
    bra, ket = np.atleast_2d(bra), np.atleast_2d(ket)
    if ket.shape[0] < 2:
        raise ValueError("the pair interaction needs at least two electrons")
    coin = _coin(sp, bra, ket, eta_rel, coin)
    q = coin.rank_def
    if q > 2:
        return 0.0
    if q == 0:
        theta = coin.theta
        rho = np.sum(ket * theta, axis=0)
        C = exchange_combo(sp, pop, ket, theta)
        val = _int(sp, rho * _w(sp, pop, rho)) - np.sum(_int(sp, C * theta))
        return float(0.5 * coin.det_factor * val)
    if q == 1:
        u, v = coin.pairs[0]
        zeta, omega = v @ ket, u @ bra
        theta = coin.theta
        rho = np.sum(ket * theta, axis=0)
        ex = np.sum(_w(sp, pop, omega[None, :] * ket) * theta, axis=0)
        val = _int(sp, zeta * omega * _w(sp, pop, rho) - zeta * ex)
        return float(coin.det_factor * val)
    (u1, v1), (u2, v2) = coin.pairs[:2]
    z1, o1, z2, o2 = v1 @ ket, u1 @ bra, v2 @ ket, u2 @ bra
    val = _int(sp, z1 * o1 * _w(sp, pop, z2 * o2) - z1 * _w(sp, pop, z2 * o1) * o2)
    return float(coin.det_factor * val)


# delta-function products -----------------------------------------------------

def _edata(sp, tail, ket, eta_rel, edata):
    ket = np.atleast_2d(ket)
    tail = np.asarray(tail).reshape(ket.shape[0] - 1, ket.shape[1])
    if edata is None:
        edata = build_E(sp, tail, ket, eta_rel)
    _note_borderline(edata)
    return tail, ket, edata


def padded_bra(tail: np.ndarray) -> np.ndarray:
    """Bra with a zero placeholder in the delta slot."""
    return np.vstack([np.zeros((1, tail.shape[1])), tail])


def tilde_theta(edata: EData, tail: np.ndarray) -> np.ndarray:
    """E-ddagger applied to the padded bra (first row of the bra is unused)."""
    return edata.bundle.modinv[:, 1:] @ tail


def ip_delta(sp: ParticleSpace, tail, ket, eta_rel: float = DEFAULT_ETA_REL,
             edata: EData | None = None) -> np.ndarray:
    tail, ket, edata = _edata(sp, tail, ket, eta_rel, edata)
    if edata.rank_def:
        return np.zeros(ket.shape[1])
    return (1.0 / edata.bundle.det_mod) * (edata.d @ ket)


def ip_delta_TV(sp: ParticleSpace, op: OneBodyOp, tail, ket, eta_rel: float = DEFAULT_ETA_REL,
                edata: EData | None = None, theta: np.ndarray | None = None) -> np.ndarray:
    tail, ket, edata = _edata(sp, tail, ket, eta_rel, edata)
    q = edata.rank_def
    d = edata.d
    if q > 1:
        return np.zeros(ket.shape[1])
    chi = d @ ket
    hchi = apply_TV(sp, op, chi)
    if q == 0:
        th = tilde_theta(edata, tail) if theta is None else theta
        c1 = np.sum(_int(sp, apply_TV(sp, op, ket) * th))
        c2 = _int(sp, hchi[None, :] * th)
        return (1.0 / edata.bundle.det_mod) * ((d * c1 - c2) @ ket + hchi)
    u, v = edata.pairs[0]
    omega = u[1:] @ tail
    a1 = _int(sp, apply_TV(sp, op, v @ ket) * omega)
    a2 = _int(sp, hchi * omega)
    return (1.0 / edata.bundle.det_mod) * ((d * a1 - v * a2) @ ket)


def ip_delta_W(sp: ParticleSpace, pop: PoissonOp, tail, ket, eta_rel: float = DEFAULT_ETA_REL,
               edata: EData | None = None, theta: np.ndarray | None = None,
               combo: np.ndarray | None = None) -> np.ndarray:
    """Delta-slot pair-interaction product.

    ``theta`` and ``combo`` (the exchange functions C_b for that theta) may be
    supplied by a caller that maintains them incrementally.
    """
    tail, ket, edata = _edata(sp, tail, ket, eta_rel, edata)
    if ket.shape[0] < 2:
        raise ValueError("the pair interaction needs at least two electrons")
    q = edata.rank_def
    M = ket.shape[1]
    if q > 2:
        return np.zeros(M)
    d = edata.d
    chi = d @ ket
    scale = 1.0 / edata.bundle.det_mod
    if q == 0:
        th = tilde_theta(edata, tail) if theta is None else theta
        C = exchange_combo(sp, pop, ket, th) if combo is None else combo
        rho = np.sum(ket * th, axis=0)
        wrho = _w(sp, pop, rho)
        Cd = d @ C
        s1 = _int(sp, rho * wrho) - np.sum(_int(sp, C * th))
        v2 = _int(sp, th * (wrho * chi - Cd)[None, :])
        return 0.5 * scale * (2.0 * (chi * wrho - Cd) + (d * s1 - 2.0 * v2) @ ket)
    bra = padded_bra(tail)
    if q == 1:
        th = tilde_theta(edata, tail) if theta is None else theta
        u, v = edata.pairs[0]
        zeta, omega = v @ ket, u @ bra
        rho = np.sum(ket * th, axis=0)
        wrho = _w(sp, pop, rho)
        w_oc = _w(sp, pop, omega * chi)
        w_zo = _w(sp, pop, zeta * omega)
        ex = np.sum(_w(sp, pop, omega[None, :] * ket) * th, axis=0)  # W[omega Phi*] Theta
        point = chi * w_zo - zeta * w_oc
        a = _int(sp, zeta * (omega * wrho - ex))
        bvec = _int(sp, th * (zeta * w_oc - w_zo * chi)[None, :])
        c = _int(sp, chi * (omega * wrho - ex))
        return scale * (point + (d * a + bvec - v * c) @ ket)
    (u1, v1), (u2, v2) = edata.pairs[:2]
    z1, o1, z2, o2 = v1 @ ket, u1 @ bra, v2 @ ket, u2 @ bra
    a = _int(sp, z1 * o1 * _w(sp, pop, z2 * o2) - z2 * _w(sp, pop, o2 * z1) * o1)
    b = _int(sp, z2 * o2 * _w(sp, pop, chi * o1) - z2 * _w(sp, pop, o2 * chi) * o1)
    c = _int(sp, z1 * o1 * _w(sp, pop, chi * o2) - z1 * _w(sp, pop, o1 * chi) * o2)
    return scale * ((d * a - v1 * b - v2 * c) @ ket)
