"""Small dense symmetric linear algebra used by the bandit learners.

Everything here works on plain ``numpy`` arrays of dimension at most a few
dozen. The routines are pure: random state is passed in explicitly.
"""

from __future__ import annotations

import math

import numpy as np

# Default identifiability gate for ols_solve, relative to trace(gram).
EPS_INV_REL = 1e-10
JITTER_REL = 1e-12


def _as_finite(a, name):
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _check_square(a, name):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")


def jacobi_eigenvalues(a, tol: float = 1e-12) -> list[float]:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps over every off-diagonal pair until the off-diagonal Frobenius mass
    drops below ``tol * max(1, ||a||_F / sqrt(n))``. By Weyl's inequality the
    diagonal then matches the spectrum to that accuracy, and since
    ``||a||_2 >= ||a||_F / sqrt(n)`` the error is within ``tol * max(1, ||a||_2)``.

    Works on nested Python lists: for the dimensions used here that is
    several times faster than issuing numpy calls per rotation.
    """
    arr = _as_finite(a, "matrix")
    _check_square(arr, "matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = arr.shape[0]
    m = (0.5 * (arr + arr.T)).tolist()
    if n == 1:
        return [m[0][0]]

    fro = math.sqrt(sum(v * v for row in m for v in row))
    target = tol * max(1.0, fro / math.sqrt(n))
    target_sq = target * target

    for _ in range(100):
        off = 0.0
        for p in range(n - 1):
            row = m[p]
            for q in range(p + 1, n):
                off += row[q] * row[q]
        if 2.0 * off <= target_sq:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p][q]
                if apq == 0.0:
                    continue
                app = m[p][p]
                aqq = m[q][q]
                theta = (aqq - app) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    if k == p or k == q:
                        continue
                    mk = m[k]
                    akp = mk[p]
                    akq = mk[q]
                    vp = c * akp - s * akq
                    vq = s * akp + c * akq
                    mk[p] = vp
                    mk[q] = vq
                    m[p][k] = vp
                    m[q][k] = vq
                m[p][p] = app - t * apq
                m[q][q] = aqq + t * apq
                m[p][q] = 0.0
                m[q][p] = 0.0
    else:  # pragma: no cover - Jacobi converges quadratically
        raise RuntimeError("Jacobi iteration did not converge")
    return [m[i][i] for i in range(n)]


def min_eigen_sym(a, tol: float = 1e-12) -> float:
    """Smallest eigenvalue of a symmetric matrix (cyclic Jacobi)."""
    return min(jacobi_eigenvalues(a, tol))


def gram_rank_one_update(gram, x) -> np.ndarray:
    """Return ``gram + x x^T`` as a new array."""
    g = np.asarray(gram, dtype=float)
    v = np.asarray(x, dtype=float)
    _check_square(g, "gram")
    if v.shape != (g.shape[0],):
        raise ValueError(f"dimension mismatch: gram {g.shape}, x {v.shape}")
    return g + np.outer(v, v)


def ols_solve(gram, moment, eps_inv: float) -> np.ndarray | None:
    """Solve the normal equations ``gram @ beta = moment`` by Cholesky.

    Returns ``None`` when the smallest eigenvalue of ``gram`` does not exceed
    ``eps_inv`` (the estimator is not identifiable).
    """
    g = _as_finite(gram, "gram")
    m = _as_finite(moment, "moment")
    _check_square(g, "gram")
    d = g.shape[0]
    if m.shape != (d,):
        raise ValueError(f"dimension mismatch: gram {g.shape}, moment {m.shape}")
    if eps_inv <= 0:
        raise ValueError("eps_inv must be positive")
    if d == 1:
        if g[0, 0] <= eps_inv:
            return None
        return m / g[0, 0]
    try:
        chol = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        return None
    chol_inv = np.linalg.inv(chol)
    # 1 / trace(gram^-1) is a cheap certified lower bound on lambda_min.
    if 1.0 / float(np.sum(chol_inv * chol_inv)) <= eps_inv:
        if min_eigen_sym(g) <= eps_inv:
            return None
    return chol_inv.T @ (chol_inv @ m)


def cholesky_psd(cov) -> np.ndarray:
    """Cholesky factor of a PSD matrix, with a jitter of 1e-12 * trace if needed."""
    c = _as_finite(cov, "cov")
    _check_square(c, "cov")
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_REL * float(np.trace(c))
    if jitter > 0:
        try:
            return np.linalg.cholesky(c + jitter * np.eye(c.shape[0]))
        except np.linalg.LinAlgError:
            pass
    raise ValueError("covariance is not positive semi-definite within jitter")


def gaussian_sample(mean, cov, rng: np.random.Generator) -> np.ndarray:
    """One draw from N(mean, cov) as ``mean + L z`` with ``L L^T = cov``."""
    mu = _as_finite(mean, "mean")
    c = _as_finite(cov, "cov")
    _check_square(c, "cov")
    if mu.shape != (c.shape[0],):
        raise ValueError(f"dimension mismatch: mean {mu.shape}, cov {c.shape}")
    if not np.any(c):
        return mu.copy()
    chol = cholesky_psd(c)
    return mu + chol @ rng.standard_normal(mu.shape[0])
