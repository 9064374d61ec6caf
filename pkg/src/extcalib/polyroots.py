"""Real roots of univariate polynomials via companion-matrix eigenvalues."""
import numpy as np


def companion_matrix(coeffs):
    """Frobenius companion matrix of a polynomial, highest degree first.

    The polynomial is made monic before the matrix is built.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "f")
    if c.size < 2:
        return np.zeros((0, 0))
    c = c / c[0]
    n = c.size - 1
    C = np.zeros((n, n))
    C[0, :] = -c[1:]
    C[np.arange(1, n), np.arange(n - 1)] = 1.0
    return C


def real_roots(coeffs, imag_tol=1e-8, polish=2):
    """Real roots of ``coeffs`` (highest degree first), ascending.

    A root counts as real when ``|imag| < imag_tol * (1 + |real|)``. Kept
    roots get ``polish`` Newton steps on the original polynomial.
    """
    C = companion_matrix(coeffs)
    if C.size == 0:
        return np.zeros(0)
    ev = np.linalg.eigvals(C)
    keep = np.abs(ev.imag) < imag_tol * (1.0 + np.abs(ev.real))
    roots = ev.real[keep]
    if polish and roots.size:
        p = np.asarray(coeffs, dtype=float)
        dp = np.polyder(p)
        for _ in range(polish):
            f = np.polyval(p, roots)
            d = np.polyval(dp, roots)
            ok = np.abs(d) > 1e-300
            step = np.zeros_like(roots)
            step[ok] = f[ok] / d[ok]
            # only accept steps that shrink the residual
            cand = roots - step
            better = np.abs(np.polyval(p, cand)) < np.abs(f)
            roots = np.where(better, cand, roots)
    return np.sort(roots)
