"""Minimal five-point essential matrix solver and essential matrix decomposition.

The essential matrix is sought in the 4-dimensional nullspace of the
epipolar design matrix, ``E = x X + y Y + z Z + W``. The rank and trace
constraints give ten cubic equations in (x, y, z). Gauss-Jordan elimination
on the 10 x 20 coefficient matrix leaves three equations whose hidden
variable determinant is a degree-10 polynomial in z.
"""
import itertools

import numpy as np

from .errors import AmbiguousCheirality, DegenerateSample
from .geometry import CameraPose, homogeneous, skew
from .polyroots import real_roots
from .triangulation import midpoint_rays

RANK_TOL = 1e-10

# monomial exponents (x, y, z) in elimination order: the first ten columns are
# eliminated, the last ten remain linear in x and y with z as hidden variable
MONOMIALS = [
    (3, 0, 0), (0, 3, 0), (2, 1, 0), (1, 2, 0), (2, 0, 1),
    (2, 0, 0), (0, 2, 1), (0, 2, 0), (1, 1, 1), (1, 1, 0),
    (1, 0, 2), (1, 0, 1), (1, 0, 0), (0, 1, 2), (0, 1, 1),
    (0, 1, 0), (0, 0, 3), (0, 0, 2), (0, 0, 1), (0, 0, 0),
]
_COLUMN = {m: i for i, m in enumerate(MONOMIALS)}


def _triple_to_monomial():
    # basis index 0, 1, 2, 3 stands for x, y, z, 1
    P = np.zeros((64, 20))
    for n, (i, j, k) in enumerate(itertools.product(range(4), repeat=3)):
        e = [0, 0, 0, 0]
        for idx in (i, j, k):
            e[idx] += 1
        P[n, _COLUMN[tuple(e[:3])]] = 1.0
    return P


_TRIPLES = _triple_to_monomial()
_LEVI_CIVITA = np.zeros((3, 3, 3))
for _p in itertools.permutations(range(3)):
    _LEVI_CIVITA[_p] = np.linalg.det(np.eye(3)[list(_p)])


def epipolar_design_matrix(xa, xb):
    """Rows ``kron(b, a)`` so that ``A @ E.ravel() = b^T E a``."""
    a = homogeneous(xa)
    b = homogeneous(xb)
    return np.einsum("ni,nj->nij", b, a).reshape(len(a), 9)


def constraint_matrix(basis):
    """10 x 20 coefficients of the rank and trace constraints.

    ``basis`` is (4, 3, 3): the matrices multiplying x, y, z and 1.
    """
    N = basis
    det = np.einsum("pqr,ip,jq,kr->ijk", _LEVI_CIVITA, N[:, 0], N[:, 1], N[:, 2])
    EEt = np.einsum("iab,jcb->ijac", N, N)
    trace = np.einsum("ijaa->ij", EEt)
    cubic = 2.0 * np.einsum("ijac,kcd->ijkad", EEt, N) \
        - trace[:, :, None, None, None] * N[None, None]
    rows = np.vstack([det.reshape(1, 64), cubic.reshape(64, 9).T])
    return rows @ _TRIPLES


def _hidden_variable_matrix(G):
    """(3, 3, 5) coefficients, highest power first, of polynomials in z.

    Row r of ``G`` reads ``m_r + G[r] . [xz^2, xz, x, yz^2, yz, y, z^3, z^2, z, 1] = 0``;
    pairing rows (4, 5), (6, 7), (8, 9) as ``row_top - z row_low`` removes the
    remaining quadratic monomials.
    """
    B = np.zeros((3, 3, 5))
    for out, (top, low) in enumerate(((4, 5), (6, 7), (8, 9))):
        for col, sl in enumerate((slice(0, 3), slice(3, 6), slice(6, 10))):
            p, q = G[top, sl], G[low, sl]
            n = len(p)
            B[out, col, 5 - n:] += p
            B[out, col, 4 - n:4] -= q
    return B


def _poly_det3(B):
    c = np.convolve
    d = (c(B[0, 0], c(B[1, 1], B[2, 2]) - c(B[1, 2], B[2, 1]))
         - c(B[0, 1], c(B[1, 0], B[2, 2]) - c(B[1, 2], B[2, 0]))
         + c(B[0, 2], c(B[1, 0], B[2, 1]) - c(B[1, 1], B[2, 0])))
    # x and y columns have degree 3, the constant column degree 4
    return d[-11:]


_EXPONENTS = np.array(MONOMIALS, dtype=float)
_DERIV_EXP = [np.maximum(_EXPONENTS - np.eye(3)[k], 0.0) for k in range(3)]


def _monomials(xyz):
    return np.prod(xyz[:, None, :] ** _EXPONENTS, axis=2)


def _monomial_gradients(xyz):
    return np.stack([_EXPONENTS[:, k] * np.prod(xyz[:, None, :] ** _DERIV_EXP[k], axis=2)
                     for k in range(3)], axis=2)


def _refine(M, xyz, steps=15):
    """Gauss-Newton polish of each (x, y, z) row on the full cubic system.

    Stops once no row improves; clustered roots can need several steps.
    """
    r = _monomials(xyz) @ M.T
    cost = np.sum(r * r, axis=1)
    for _ in range(steps):
        J = np.einsum("ij,mjk->mik", M, _monomial_gradients(xyz))
        JtJ = np.einsum("mik,mil->mkl", J, J)
        Jtr = np.einsum("mik,mi->mk", J, r)
        try:
            step = np.linalg.solve(JtJ, Jtr[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        cand = xyz - step
        r_new = _monomials(cand) @ M.T
        cost_new = np.sum(r_new * r_new, axis=1)
        better = cost_new < cost
        if not np.any(better):
            break
        xyz = np.where(better[:, None], cand, xyz)
        r = np.where(better[:, None], r_new, r)
        cost = np.where(better, cost_new, cost)
    return xyz


def solve_essential_5pt(xa, xb):
    """All real essential matrices consistent with five correspondences.

    ``xa`` and ``xb`` are (5, 2) normalized points in images a and b; each
    returned E satisfies ``b^T E a = 0`` and has unit Frobenius norm.
    """
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)
    if xa.shape != (5, 2) or xb.shape != (5, 2):
        raise ValueError("expected five correspondences")
    A = epipolar_design_matrix(xa, xb)
    _, s, Vt = np.linalg.svd(A)
    if s[4] < RANK_TOL * s[0]:
        raise DegenerateSample("epipolar design matrix is rank deficient")
    basis = Vt[5:].reshape(4, 3, 3)

    M = constraint_matrix(basis)
    try:
        G = np.linalg.solve(M[:, :10], M[:, 10:])
    except np.linalg.LinAlgError:
        raise DegenerateSample("elimination template is singular") from None
    B = _hidden_variable_matrix(G)
    poly = _poly_det3(B)

    zs = real_roots(poly)
    if zs.size == 0:
        return []
    Bz = np.einsum("ijk,mk->mij", B, zs[:, None] ** np.arange(4.0, -1.0, -1.0))
    v = np.linalg.svd(Bz)[2][:, -1, :]
    ok = np.abs(v[:, 2]) > 1e-300
    if not np.any(ok):
        return []
    v, zs = v[ok], zs[ok]
    xyz = _refine(M, np.column_stack([v[:, 0] / v[:, 2], v[:, 1] / v[:, 2], zs]))
    Es = np.einsum("mk,kij->mij", np.column_stack([xyz, np.ones(len(xyz))]), basis)
    Es /= np.linalg.norm(Es, axis=(1, 2))[:, None, None]
    solutions = list(Es)
    return solutions


def essential_from_pose(pose):
    """E with ``b^T E a = 0`` for camera a at (I, 0) and camera b at ``pose``."""
    return skew(pose.t) @ pose.R


def sampson_error(E, xa, xb):
    """First-order squared geometric epipolar error (vectorized)."""
    a = homogeneous(xa)
    b = homogeneous(xb)
    Ea = a @ E.T
    Etb = b @ E
    num = np.einsum("...i,...i", b, Ea) ** 2
    den = Ea[..., 0] ** 2 + Ea[..., 1] ** 2 + Etb[..., 0] ** 2 + Etb[..., 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / den, np.where(num > 0, np.inf, 0.0))
    return out


_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def pose_candidates(E):
    """The four (R, T) factorizations of E; T is the unit camera-b centre."""
    U, _, Vt = np.linalg.svd(E)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    t = U[:, 2]
    out = []
    for R in (U @ _W @ Vt, U @ _W.T @ Vt):
        for sign in (1.0, -1.0):
            out.append(CameraPose(R, -sign * (R.T @ t)))
    return out


def cheirality_count(pose, xa, xb):
    """Number of correspondences triangulating in front of both cameras."""
    Da = homogeneous(xa)
    Db = homogeneous(xb) @ pose.R
    X, _ = midpoint_rays(np.zeros(3), Da, pose.T, Db)
    finite = np.isfinite(X).all(axis=-1)
    X = np.where(finite[..., None], X, 0.0)  # parallel rays never count
    za = X[..., 2]
    zb = ((X - pose.T) @ pose.R.T)[..., 2]
    ok = finite & (za > 0) & (zb > 0)
    return int(np.count_nonzero(ok))


def decompose_essential(E, xa, xb):
    """Relative pose of camera b (camera a at identity) passing the cheirality vote."""
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = np.atleast_2d(np.asarray(xb, dtype=float))
    if len(xa) < 1:
        raise ValueError("need at least one correspondence")
    n = len(xa)
    best, best_key = None, None
    for pose in pose_candidates(E):
        count = cheirality_count(pose, xa, xb)
        err = float(np.sum(sampson_error(essential_from_pose(pose), xa, xb)))
        key = (count, -err)
        if best_key is None or key > best_key:
            best, best_key = pose, key
    if not 2 * best_key[0] > n:
        raise AmbiguousCheirality("no factorization puts a majority of points in front")
    return best
