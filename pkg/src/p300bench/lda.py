"""Binary linear discriminant analysis with Ledoit-Wolf shrinkage.

The pooled within-class covariance is shrunk toward a scaled identity
with the analytically optimal intensity of Ledoit & Wolf (2004), then
inverted through its eigendecomposition to form the discriminant
direction.  For two classes, solving ``S* w = mu1 - mu0`` gives the same
direction as the generalized between/within eigenproblem, so the binary
case is solved directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .base import BaseEstimator, check_array, check_is_fitted, check_X_y
from .linalg import covariance, sym_eig


@dataclass
class ShrinkageEstimate:
    """Shrunk covariance ``rho * m * I + (1 - rho) * S``."""

    covariance: np.ndarray
    intensity: float
    target_scale: float  # m = trace(S) / p


def ledoit_wolf(X, *, assume_centered: bool = False) -> ShrinkageEstimate:
    """Identity-target Ledoit-Wolf covariance shrinkage.

    With S the biased sample covariance of the rows, m = tr(S)/p and
    the normalized squared Frobenius norm ||A||^2 = sum(A^2)/p:

        d^2   = ||S - m I||^2
        bbar2 = min(d^2, (1/n^2) * sum_i ||x_i x_i^T - S||^2)
        rho   = bbar2 / d^2          (0 when d^2 < 1e-15)
        S*    = rho * m * I + (1 - rho) * S

    with x_i the centered rows.  rho is the estimated optimal weight of
    the identity target and always lies in [0, 1].
    """
    X = check_array(X, name="X")
    n, p = X.shape
    if n < 2:
        raise ValueError(f"insufficient samples: need n >= 2, got n={n}")
    Xc = X if assume_centered else X - X.mean(axis=0)
    S = (Xc.T @ Xc) / n

    m = float(np.trace(S)) / p
    delta = S - m * np.eye(p)
    d2 = float(np.sum(delta * delta)) / p
    if d2 < 1e-15:
        return ShrinkageEstimate(covariance=S, intensity=0.0, target_scale=m)

    # sum_i ||x_i x_i^T - S||_F^2 expanded: ||x_i x_i^T||^2 - 2 x_i^T S x_i
    # + ||S||^2; avoids materializing n outer products.
    sq_norms = np.sum(Xc * Xc, axis=1)
    cross = np.einsum("ij,jk,ik->", Xc, S, Xc)
    s_norm2 = float(np.sum(S * S))
    # mathematically >= 0; cancellation can leave a tiny negative residue
    total = max(float(np.sum(sq_norms**2) - 2.0 * cross + n * s_norm2), 0.0)
    b2 = min(d2, total / (n * n) / p)

    rho = b2 / d2
    shrunk = rho * m * np.eye(p) + (1.0 - rho) * S
    return ShrinkageEstimate(covariance=shrunk, intensity=rho, target_scale=m)


class ShrinkageLda(BaseEstimator):
    """Shrinkage LDA for two classes, solved by eigendecomposition.

    Parameters
    ----------
    shrinkage : "auto" or float in [0, 1]
        "auto" estimates the intensity with :func:`ledoit_wolf`;
        a float forces it (0 gives classic pooled-covariance LDA).

    Attributes
    ----------
    weights_ : ndarray of shape (p,)
    bias_ : float
        ``decision_function(x) = weights_ @ x + bias_``; positive means
        target.
    shrinkage_ : float
        Applied shrinkage intensity.
    class_means_ : ndarray of shape (2, p)
    priors_ : ndarray of shape (2,)
        Training class frequencies.
    """

    #: relative floor applied to covariance eigenvalues before inversion
    _EIG_FLOOR = 1e-12

    def __init__(self, shrinkage="auto"):
        self.shrinkage = shrinkage

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        n, p = X.shape
        counts = np.array([(y == 0).sum(), (y == 1).sum()])
        if counts.min() < 2:
            raise ValueError("need two classes with at least 2 samples each")

        mu0 = X[y == 0].mean(axis=0)
        mu1 = X[y == 1].mean(axis=0)
        centered = X - np.where(y[:, None] == 1, mu1[None, :], mu0[None, :])

        if self.shrinkage == "auto":
            estimate = ledoit_wolf(centered, assume_centered=True)
            cov, rho = estimate.covariance, estimate.intensity
        else:
            rho = float(self.shrinkage)
            if not 0.0 <= rho <= 1.0:
                raise ValueError(f"shrinkage must lie in [0, 1], got {rho}")
            S = covariance(centered, assume_centered=True)
            m = float(np.trace(S)) / p
            cov = rho * m * np.eye(p) + (1.0 - rho) * S

        evals, evecs = sym_eig(cov)
        lam_max = evals[0]
        if lam_max <= 0:
            raise ValueError("degenerate covariance: all eigenvalues non-positive")
        inv_evals = 1.0 / np.maximum(evals, self._EIG_FLOOR * lam_max)

        delta = mu1 - mu0
        w = evecs @ (inv_evals * (evecs.T @ delta))
        priors = counts / n

        self.class_means_ = np.stack([mu0, mu1])
        self.priors_ = priors
        self.shrinkage_ = rho
        self.weights_ = w
        self.bias_ = float(-w @ (mu0 + mu1) / 2.0 + np.log(priors[1] / priors[0]))
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "weights_")
        X = check_array(X)
        if X.shape[1] != self.weights_.shape[0]:
            raise ValueError(
                f"dimension mismatch: fitted on {self.weights_.shape[0]} features, "
                f"got {X.shape[1]}"
            )
        return X @ self.weights_ + self.bias_

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0.0).astype(np.int64)

    def to_json(self) -> str:
        check_is_fitted(self, "weights_")
        return json.dumps(
            {
                "format": "p300bench-lda",
                "version": 1,
                "weights": self.weights_.tolist(),
                "bias": self.bias_,
                "shrinkage": self.shrinkage_,
                "class_means": self.class_means_.tolist(),
                "priors": self.priors_.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ShrinkageLda":
        doc = json.loads(text)
        if doc.get("format") != "p300bench-lda" or doc.get("version") != 1:
            raise ValueError("not a p300bench LDA model document")
        model = cls()
        model.weights_ = np.asarray(doc["weights"], dtype=np.float64)
        model.bias_ = float(doc["bias"])
        model.shrinkage_ = float(doc["shrinkage"])
        model.class_means_ = np.asarray(doc["class_means"], dtype=np.float64)
        model.priors_ = np.asarray(doc["priors"], dtype=np.float64)
        return model
