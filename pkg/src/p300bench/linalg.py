"""Numeric kernels shared across the pipeline: covariance and a symmetric
eigensolver.

Matrices are plain two-dimensional ``float64`` NumPy arrays throughout the
package.  Only the dense symmetric machinery the classifiers need lives
here; this is not a general linear-algebra layer.
"""

from __future__ import annotations

import numpy as np

from .base import check_array


def covariance(X, *, assume_centered: bool = False) -> np.ndarray:
    """Biased (1/n) sample covariance of the rows of ``X``.

    Parameters
    ----------
    X : ndarray of shape (n, p)
        One observation per row, n >= 2.
    assume_centered : bool
        Skip mean removal when the rows are already centered (used for
        pooled within-class scatter, where each row was centered on its
        own class mean).

    Returns
    -------
    ndarray of shape (p, p)
        ``(1/n) * sum_i (x_i - xbar)(x_i - xbar)^T``.  The 1/n
        normalisation matches the shrinkage formulas in
        :mod:`p300bench.lda`; it is not the unbiased 1/(n-1) estimator.
    """
    X = check_array(X, name="X")
    n = X.shape[0]
    if n < 2:
        raise ValueError(f"insufficient samples: need n >= 2, got n={n}")
    if not assume_centered:
        X = X - X.mean(axis=0)
    return (X.T @ X) / n


def sym_eig(A, *, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    A : ndarray of shape (p, p)
        Symmetric matrix (checked to within 1e-9 relative to its largest
        entry).
    tol : float
        Convergence threshold on the off-diagonal Frobenius norm,
        relative to the Frobenius norm of ``A``.
    max_sweeps : int
        Upper bound on full cyclic sweeps.

    Returns
    -------
    eigenvalues : ndarray of shape (p,)
        In descending order.
    eigenvectors : ndarray of shape (p, p)
        Orthonormal, column ``i`` pairs with ``eigenvalues[i]``.

    Raises
    ------
    ValueError
        If ``A`` is not square or not symmetric.
    RuntimeError
        If the sweep limit is reached before convergence.

    Notes
    -----
    Jacobi iteration is slower than QR-based solvers but preserves
    symmetry exactly and is simple enough to validate against the
    reconstruction identity ``V diag(w) V^T = A``.  It is intended for
    the moderate sizes this pipeline produces (p up to a few hundred).
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = np.abs(A).max() if A.size else 0.0
    if not np.isfinite(scale):
        raise ValueError("matrix contains non-finite values")
    if np.abs(A - A.T).max(initial=0.0) > 1e-9 * max(1.0, scale):
        raise ValueError("asymmetric matrix")

    p = A.shape[0]
    A = 0.5 * (A + A.T)  # exact symmetry for the rotations below
    V = np.eye(p)
    norm = np.linalg.norm(A)
    if norm == 0.0 or p == 1:
        return _sorted_eig(np.diag(A).copy(), V)

    threshold = tol * norm
    # Rotations on elements below this bound cannot move the off-diagonal
    # norm above `threshold`, so they are skipped.
    skip = threshold / p

    for _ in range(max_sweeps):
        off = _offdiag_norm(A)
        if off <= threshold:
            return _sorted_eig(np.diag(A).copy(), V)
        for i in range(p - 1):
            for j in range(i + 1, p):
                a_ij = A[i, j]
                if abs(a_ij) <= skip:
                    continue
                # Golub & Van Loan sym. Schur 2x2: pick the smaller rotation.
                theta = (A[j, j] - A[i, i]) / (2.0 * a_ij)
                t = np.sign(theta) if theta != 0 else 1.0
                t /= abs(theta) + np.sqrt(theta * theta + 1.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                row_i, row_j = A[i, :].copy(), A[j, :].copy()
                A[i, :] = c * row_i - s * row_j
                A[j, :] = s * row_i + c * row_j
                col_i, col_j = A[:, i].copy(), A[:, j].copy()
                A[:, i] = c * col_i - s * col_j
                A[:, j] = s * col_i + c * col_j
                A[i, j] = A[j, i] = 0.0

                vec_i, vec_j = V[:, i].copy(), V[:, j].copy()
                V[:, i] = c * vec_i - s * vec_j
                V[:, j] = s * vec_i + c * vec_j
    if _offdiag_norm(A) <= threshold:
        return _sorted_eig(np.diag(A).copy(), V)
    raise RuntimeError("eigensolver did not converge")


def _offdiag_norm(A):
    # summed directly over off-diagonal entries; subtracting the diagonal
    # from the total norm would cancel catastrophically near convergence
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    return np.linalg.norm(off)


def _sorted_eig(values, vectors):
    order = np.argsort(values, kind="stable")[::-1]
    return values[order], vectors[:, order]
