"""Dense kernels: modified pseudo-inverse, low-rank determinant identity and
rank-one updates of the pseudo-inverse bundle.

All matrices are small (N x N with N the electron count), so everything here
is plain numpy.  The scalar field is real by default; conjugations are kept so
the formulas stay valid for complex input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_ETA_REL = 1e-10
# below this the nullspace images in a regaining update count as aligned
REFLECT_TOL = 1e-6
SNAP_TOL = 8 * np.finfo(float).eps


class DimensionError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


class UnsupportedDeficiency(ValueError):
    pass


@dataclass(frozen=True)
class SvdBundle:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    eta_abs: float


@dataclass(frozen=True)
class PseudoBundle:
    """Pseudo-inverse ``pinv``, nullspace map ``nullproj = sum v_i u_i^*``,
    modified inverse ``modinv = pinv + nullproj`` and its determinant.

    ``null_pairs`` holds the (u, v) singular pairs of the numerical nullspace,
    smallest singular value first.  Bundles produced by :func:`rank_one_update`
    carry no pairs; use :func:`nullspace_pairs` to extract them.
    """

    pinv: np.ndarray
    nullproj: np.ndarray
    det_mod: complex | float
    rank_def: int
    eta_abs: float
    eta_rel: float
    null_pairs: tuple | None = None
    svd: SvdBundle | None = field(default=None, repr=False)

    @property
    def modinv(self) -> np.ndarray:
        return self.pinv + self.nullproj

    @property
    def n(self) -> int:
        return self.pinv.shape[0]


def _sign_fix(u: np.ndarray, v: np.ndarray):
    """Flip the pair so the largest-magnitude entry of ``v`` is positive."""
    idx = int(np.argmax(np.abs(v)))
    phase = v[idx] / abs(v[idx]) if v[idx] != 0 else 1.0
    return u / phase, v / phase


def det_perturbed_identity(U: np.ndarray, V: np.ndarray):
    """|I + sum_q u_q v_q^*| as the Q x Q determinant |I + V^* U|."""
    U = np.atleast_2d(np.asarray(U))
    V = np.atleast_2d(np.asarray(V))
    if U.shape != V.shape:
        raise DimensionError(f"U {U.shape} and V {V.shape} differ in shape")
    q = U.shape[1]
    if q > U.shape[0]:
        raise DimensionError("more perturbation vectors than rows")
    if q == 0:
        return 1.0
    return np.linalg.det(np.eye(q) + V.conj().T @ U)


def svd_bundle(A: np.ndarray, eta_rel: float = DEFAULT_ETA_REL, scale: float = 0.0) -> SvdBundle:
    """SVD with threshold eta_rel * max(S[0], scale).

    ``scale`` lets a caller that knows the natural size of the entries (for
    an overlap matrix, the product of the orbital norms) keep a numerically
    zero matrix from counting as full rank.
    """
    U, S, Vh = np.linalg.svd(A)
    s_max = S[0] if S.size else 0.0
    return SvdBundle(U=U, S=S, V=Vh.conj().T, eta_abs=float(eta_rel * max(s_max, scale)))


def compute_pseudo(A: np.ndarray, eta_rel: float = DEFAULT_ETA_REL, scale: float = 0.0) -> PseudoBundle:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if not 0.0 < eta_rel < 1.0:
        raise ValueError("eta_rel must lie in (0, 1)")
    n = A.shape[0]
    sb = svd_bundle(A, eta_rel, scale)
    U, S, V = sb.U.copy(), sb.S, sb.V.copy()
    for i in range(n):
        U[:, i], V[:, i] = _sign_fix(U[:, i], V[:, i])
    # unit singular vectors: rounding-level entries are noise, and zeroing them
    # keeps exact block structure (spin channels) in everything derived below
    U[np.abs(U) <= SNAP_TOL] = 0.0
    V[np.abs(V) <= SNAP_TOL] = 0.0
    null = S <= sb.eta_abs
    q = int(np.count_nonzero(null))
    live = ~null
    pinv = (V[:, live] / S[live]) @ U[:, live].conj().T
    nullproj = V[:, null] @ U[:, null].conj().T
    det_uv = np.linalg.det(U).conj() * np.linalg.det(V)
    det_mod = det_uv / np.prod(S[live])
    if np.isrealobj(A):
        det_mod = float(np.real(det_mod))
    # nullspace re-indexed first: smallest singular value leads
    pairs = tuple((U[:, i], V[:, i]) for i in reversed(range(n)) if null[i])
    return PseudoBundle(
        pinv=pinv,
        nullproj=nullproj,
        det_mod=det_mod,
        rank_def=q,
        eta_abs=sb.eta_abs,
        eta_rel=eta_rel,
        null_pairs=pairs,
        svd=SvdBundle(U=U, S=S, V=V, eta_abs=sb.eta_abs),
    )


def nullspace_pairs(P: PseudoBundle, iterations: int = 3) -> list:
    """Extract (u, v) pairs with ``nullproj = sum v u^*`` by power iteration
    with deflation on ``nullproj nullproj^*``.

    Only deficiencies up to three are supported; callers short-circuit larger
    ones to zero before reaching this point.
    """
    q = P.rank_def
    if q > 3:
        raise UnsupportedDeficiency(f"nullspace of dimension {q} > 3")
    M = np.array(P.nullproj, copy=True)
    pairs = []
    for _ in range(q):
        G = M @ M.conj().T
        x = G[:, int(np.argmax(np.linalg.norm(G, axis=0)))]
        for _ in range(iterations):
            x = G @ x
            x = x / np.linalg.norm(x)
        v = x
        u = M.conj().T @ v
        u = u / np.linalg.norm(u)
        u, v = _sign_fix(u, v)
        pairs.append((u, v))
        M = M - np.outer(v, u.conj())
    return pairs


def check_bundle(P: PseudoBundle, A: np.ndarray, tol: float = 1e-8) -> None:
    scale = max(np.linalg.norm(A), 1.0)
    pscale = max(np.linalg.norm(P.pinv), 1.0)
    if np.linalg.norm(A @ P.pinv @ A - A) > tol * scale * scale * pscale:
        raise PreconditionError("bundle pinv is not a generalized inverse of A")
    if np.linalg.norm(A @ P.nullproj) > tol * scale or np.linalg.norm(P.nullproj @ A) > tol * scale:
        raise PreconditionError("bundle nullproj does not annihilate A")


def _phase(lam) -> complex | float:
    # lambda -> 0 taken as the right-hand limit of lambda/|lambda|
    a = abs(lam)
    return lam / a if a > 0 else 1.0


def _rank_one_update(P: PseudoBundle, A: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Classify and build the update for ``A + b c^*``.

    Returns ``(case, rank_def, det_mod, pinv_terms, null_terms)``; each term is
    a pair (x, y) contributing ``x y^*``, so the modified inverse changes by the
    sum over both lists.
    """
    Ap, An = P.pinv, P.nullproj
    n = Ap.shape[0]
    b = np.asarray(b).reshape(n)
    c = np.asarray(c).reshape(n)
    dv = Ap @ b
    ev = Ap.conj().T @ c
    fv = b - A @ dv
    gv = c - Ap @ (A @ c)
    d = float(np.real(np.vdot(dv, dv)))
    e = float(np.real(np.vdot(ev, ev)))
    f = float(np.real(np.vdot(fv, fv)))
    g = float(np.real(np.vdot(gv, gv)))
    lam = 1.0 + np.vdot(c, dv)
    real = np.isrealobj(A) and np.isrealobj(b) and np.isrealobj(c)
    if real:
        lam = float(np.real(lam))
    alam = abs(lam)

    thresh = P.eta_abs if P.eta_abs > 0 else P.eta_rel
    f_zero = np.sqrt(f) <= thresh
    g_zero = np.sqrt(g) <= thresh
    lam_zero = alam <= thresh
    pt, nt = [], []
    q = P.rank_def
    det_mod = P.det_mod

    if f_zero and g_zero and lam_zero:
        case = 1
        Ade = Ap @ ev
        pt.append((-dv / d, Ap.conj().T @ dv))
        pt.append(((-Ade + (np.vdot(dv, Ade) / d) * dv) / e, ev))
        nt.append((dv / np.sqrt(d * e), ev))
        det_mod = -det_mod / np.sqrt(d * e)
        q += 1
    elif f_zero and g_zero:
        case = 2
        pt.append((-dv / lam, ev))
        det_mod = det_mod / lam
    elif f_zero:
        case = 3
        mu = alam**2 + d * g
        smu = np.sqrt(mu)
        ph = _phase(lam)
        Apd = Ap.conj().T @ dv
        pt.append((-dv / mu, g * Apd + lam * ev))
        pt.append((gv / mu, -d * ev + np.conj(lam) * Apd))
        vec = ((smu - alam) / (g * smu)) * gv + (ph / smu) * dv
        nt.append((-vec, An.conj().T @ gv))
        if real:
            det_mod = det_mod * ph / smu
        else:
            lb = np.conj(lam)
            det_mod = det_mod * ((lb - lam) * alam**2 + lam * mu) / (mu * alam * smu)
    elif g_zero:
        case = 4
        nu = alam**2 + e * f
        snu = np.sqrt(nu)
        ph = _phase(lam)
        lb = np.conj(lam)
        Ape = Ap @ ev
        pt.append((-(f * Ape + lb * dv) / nu, ev))
        pt.append(((-e * dv + lam * Ape) / nu, fv))
        vec = ((snu - alam) / (f * snu)) * fv + (np.conj(ph) / snu) * ev
        nt.append((-(An @ fv), vec))
        if real:
            det_mod = det_mod * ph / snu
        else:
            det_mod = det_mod * ((lam - lb) * alam**2 + lb * nu) / (nu * alam * snu)
    else:
        case = 5
        fh, gh = fv / np.sqrt(f), gv / np.sqrt(g)
        # the closed form assumes nullproj maps f-hat onto g-hat; a reflection
        # inside the right nullspace makes that true and flips det_mod
        # When the two already agree up to rounding, w is noise and reflecting
        # along it would flip det_mod for nothing.  With a one-dimensional
        # nullspace they can only differ by a phase, so the sign decides.
        Anf = An @ fh
        w = Anf - gh
        aligned = np.linalg.norm(w) <= REFLECT_TOL or (real and q == 1 and np.vdot(gh, Anf) > 0)
        if not aligned:
            refl = (-2.0 * w / np.vdot(w, w), An.conj().T @ w)
            nt.append(refl)
            An = An + np.outer(refl[0], refl[1].conj())
            det_mod = -det_mod
        sgf = np.sqrt(g * f)
        pt.append((-dv / f, fv))
        pt.append((gv / g, -ev + (np.conj(lam) / f) * fv))
        nt.append((-gv / sgf, fv))
        det_mod = det_mod * (1.0 + (1.0 / (g * f) - 1.0 / sgf) * np.vdot(gv, An @ fv))
        q -= 1
    if real:
        det_mod = float(np.real(det_mod))
    return case, q, det_mod, pt, nt


def _update_with_terms(P: PseudoBundle, A, b, c):
    case, q, det_mod, pt, nt = _rank_one_update(P, A, b, c)
    pinv = np.array(P.pinv, copy=True, dtype=np.result_type(P.pinv, b, c))
    nullproj = np.array(P.nullproj, copy=True, dtype=pinv.dtype)
    for x, y in pt:
        pinv += np.outer(x, y.conj())
    for x, y in nt:
        nullproj += np.outer(x, y.conj())
    bundle = replace(P, pinv=pinv, nullproj=nullproj, det_mod=det_mod, rank_def=q,
                     null_pairs=None, svd=None)
    return bundle, case, pt + nt


def rank_one_update(P: PseudoBundle, A: np.ndarray, b: np.ndarray, c: np.ndarray,
                    check: bool = False) -> PseudoBundle:
    """Bundle for ``A + b c^*`` from the bundle of ``A`` in O(N^2)."""
    A = np.asarray(A)
    if A.shape != P.pinv.shape:
        raise DimensionError("bundle and matrix shapes differ")
    if check:
        check_bundle(P, A)
    bundle, _, _ = _update_with_terms(P, A, np.asarray(b), np.asarray(c))
    return bundle


def low_rank_update(P: PseudoBundle, A: np.ndarray, B: np.ndarray, C: np.ndarray):
    """Nonsingular bundle for ``A + B C^*`` with a few columns in B and C.

    Woodbury form of several simultaneous nonsingular rank-one updates; unlike
    applying them one at a time it never forms the intermediate matrices,
    which can be singular even when both ends are not.  Returns ``(bundle,
    terms)`` with the inverse change as (x, y) pairs, or None when either
    end is numerically singular.
    """
    if P.rank_def:
        return None
    A = np.asarray(A)
    B = np.atleast_2d(np.asarray(B).T).T
    C = np.atleast_2d(np.asarray(C).T).T
    Ainv = P.pinv
    AB = Ainv @ B
    CA = C.conj().T @ Ainv
    K = np.eye(B.shape[1]) + C.conj().T @ AB
    try:
        X = -np.linalg.solve(K.T, AB.T).T  # -A^-1 B K^-1
    except np.linalg.LinAlgError:
        return None
    pinv = Ainv + X @ CA
    A_new = A + B @ C.conj().T
    if np.linalg.norm(A_new) * np.linalg.norm(pinv) * P.eta_rel >= 1.0:
        return None
    det_mod = P.det_mod / np.linalg.det(K)
    if np.isrealobj(pinv):
        det_mod = float(np.real(det_mod))
    terms = [(X[:, i], CA[i].conj()) for i in range(B.shape[1])]
    bundle = replace(P, pinv=pinv, nullproj=np.zeros_like(pinv), det_mod=det_mod,
                     rank_def=0, null_pairs=None, svd=None)
    return bundle, terms
