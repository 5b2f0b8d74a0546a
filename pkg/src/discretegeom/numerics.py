"""Small dense linear algebra and seeded sampling helpers.

Matrices here are plain ``numpy`` float arrays. Everything in this package is
experiment-sized (a few hundred rows at most), so the routines favour
simplicity and determinism over speed.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "InvalidInputError",
    "make_rng",
    "svd_thin",
    "sym_eigvals",
    "sample_gaussian",
    "random_orthonormal_columns",
]

_MAX_SVD_DIM = 512


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` and an optional stream key.

    Distinct stream keys give statistically independent generators for the
    same seed, so e.g. weight init and training noise never share draws.
    """
    if seed < 0:
        raise InvalidInputError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in stream))
    return np.random.Generator(np.random.PCG64(ss))


def _as_finite_matrix(m) -> np.ndarray:
    a = np.array(m, dtype=float, copy=True)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise InvalidInputError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    return a


def svd_thin(m, tol: float = 1e-15, max_sweeps: int = 60):
    """Thin SVD by one-sided Jacobi rotations.

    Columns of a working copy are orthogonalised pairwise until every pair is
    orthogonal to ``tol`` relative to their norms. Wide matrices are handled by
    decomposing the transpose.

    Args:
        m: (rows, cols) array-like, finite.
        tol: convergence threshold on the normalised column inner products.
        max_sweeps: upper bound on full sweeps over column pairs.

    Returns:
        ``(U, s, V)`` with ``m ≈ U @ diag(s) @ V.T``; ``s`` is descending and
        non-negative, ``U`` is (rows, k) and ``V`` is (cols, k) with
        ``k = min(rows, cols)``.
    """
    a = _as_finite_matrix(m)
    rows, cols = a.shape
    if rows > _MAX_SVD_DIM or cols > _MAX_SVD_DIM:
        raise InvalidInputError(f"matrix {a.shape} exceeds {_MAX_SVD_DIM}x{_MAX_SVD_DIM}")
    if cols > rows:
        u, s, v = svd_thin(a.T, tol=tol, max_sweeps=max_sweeps)
        return v, s, u

    work = a.copy()
    v = np.eye(cols)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                alpha = work[:, p] @ work[:, p]
                beta = work[:, q] @ work[:, q]
                gamma = work[:, p] @ work[:, q]
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = c * t
                wp = work[:, p].copy()
                work[:, p] = c * wp - sn * work[:, q]
                work[:, q] = sn * wp + c * work[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - sn * v[:, q]
                v[:, q] = sn * vp + c * v[:, q]
        if not rotated:
            break

    s = np.linalg.norm(work, axis=0)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    v = v[:, order]
    work = work[:, order]
    u = np.zeros_like(work)
    scale = s[0] if s.size and s[0] > 0 else 1.0
    for j in range(cols):
        if s[j] > 1e-14 * scale:
            u[:, j] = work[:, j] / s[j]
    # fill U columns of zero singular values with an orthonormal complement
    for j in range(cols):
        if s[j] <= 1e-14 * scale:
            for e in np.eye(rows):
                cand = e - u @ (u.T @ e)
                cand -= u @ (u.T @ cand)
                nrm = np.linalg.norm(cand)
                if nrm > 1e-6:
                    u[:, j] = cand / nrm
                    break
    return u, s, v


def sym_eigvals(m, sym_tol: float = 1e-10) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, sorted descending."""
    a = _as_finite_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"matrix must be square, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if np.max(np.abs(a - a.T), initial=0.0) > sym_tol * scale:
        raise InvalidInputError("matrix is not symmetric to tolerance")
    return np.linalg.eigvalsh(0.5 * (a + a.T))[::-1].copy()


def sample_gaussian(rng: np.random.Generator, n: int, sigma: float) -> np.ndarray:
    """Draw ``n`` i.i.d. N(0, sigma^2) values."""
    if sigma < 0:
        raise InvalidInputError(f"sigma must be >= 0, got {sigma}")
    if n < 0:
        raise InvalidInputError(f"n must be >= 0, got {n}")
    z = rng.standard_normal(int(n))
    return sigma * z if sigma > 0 else np.zeros(int(n))


def random_orthonormal_columns(rng: np.random.Generator, d_out: int, d_in: int) -> np.ndarray:
    """Random (d_out, d_in) matrix with orthonormal columns.

    Classical Gram-Schmidt on Gaussian columns, with a second
    re-orthogonalisation pass to clean up roundoff.
    """
    if d_in < 1 or d_out < d_in:
        raise InvalidInputError(f"need d_out >= d_in >= 1, got ({d_out}, {d_in})")
    q = rng.standard_normal((d_out, d_in))
    for j in range(d_in):
        col = q[:, j]
        for _ in range(2):
            col = col - q[:, :j] @ (q[:, :j].T @ col)
        q[:, j] = col / np.linalg.norm(col)
    return q
