"""Soft-margin kernel SVM trained with sequential minimal optimization.

The dual problem

    max_a  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t.   0 <= a_i <= C,  sum_i a_i y_i = 0

is solved two multipliers at a time (Platt's SMO) with a full error cache
and Platt's second-choice heuristic, ties broken by the run's seeded RNG
so fits are reproducible.  Working-set shrinking heuristics are
deliberately omitted: they only speed up convergence and do not change
the optimum.
"""

from __future__ import annotations

import json
import logging
from collections import OrderedDict

import numpy as np

from .base import BaseEstimator, check_array, check_is_fitted, check_X_y
from .rng import ensure_rng

logger = logging.getLogger(__name__)

# Steps smaller than this (relative, Platt's criterion) are not applied.
_STEP_EPS = 1e-8
# alpha within this relative distance of 0 or C counts as "at bound".
_BOUND_EPS = 1e-8


def _pairwise_sq_dists(X, Z):
    sq = (X * X).sum(axis=1)[:, None] + (Z * Z).sum(axis=1)[None, :] - 2.0 * (X @ Z.T)
    return np.maximum(sq, 0.0)


def rbf_kernel(x, z, gamma: float):
    """``exp(-gamma * ||x - z||^2)``; accepts vectors or row matrices."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    scalar = x.ndim == 1 and z.ndim == 1
    X, Z = np.atleast_2d(x), np.atleast_2d(z)
    if X.shape[1] != Z.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    K = np.exp(-gamma * _pairwise_sq_dists(X, Z))
    return float(K[0, 0]) if scalar else K


def _kernel_matrix(kind, X, Z, gamma, degree):
    if kind == "rbf":
        return rbf_kernel(X, Z, gamma)
    if kind == "linear":
        return X @ Z.T
    if kind == "poly":
        return (gamma * (X @ Z.T)) ** degree
    raise ValueError(f"unknown kernel {kind!r}")


class _KernelCache:
    """Row cache for the training Gram matrix, bounded by ``cache_mb``.

    When the full matrix fits in the budget, rows are filled lazily into
    one array; otherwise a least-recently-used dict of rows is kept.
    """

    def __init__(self, compute_row, n: int, cache_mb: float):
        self._compute = compute_row
        self._n = n
        max_rows = int(cache_mb * 1e6 // (8 * n)) if n else 0
        self._full = max_rows >= n
        if self._full:
            self._rows = np.empty((n, n))
            self._have = np.zeros(n, dtype=bool)
        else:
            self._lru: OrderedDict[int, np.ndarray] = OrderedDict()
            self._max_rows = max(2, max_rows)

    def row(self, i: int) -> np.ndarray:
        if self._full:
            if not self._have[i]:
                self._rows[i] = self._compute(i)
                self._have[i] = True
            return self._rows[i]
        if i in self._lru:
            self._lru.move_to_end(i)
            return self._lru[i]
        row = self._compute(i)
        self._lru[i] = row
        if len(self._lru) > self._max_rows:
            self._lru.popitem(last=False)
        return row


class SmoSvc(BaseEstimator):
    """Binary soft-margin SVM fit by SMO.

    Parameters
    ----------
    C : float
        Box constraint on the dual coefficients.
    kernel : {"rbf", "linear", "poly"}
    gamma : float or "scale"
        RBF/poly kernel coefficient; "scale" resolves to
        ``1 / (n_features * var(X))`` with the variance taken over all
        feature entries.
    degree : int
        Polynomial kernel degree (inert for other kernels).
    tol : float
        KKT violation tolerance driving the outer loop.
    max_passes : int
        Consecutive sweeps without an accepted step before giving up.
    max_iters : int or None
        Cap on accepted steps; None means ``10 * n_samples``.
    cache_mb : float
        Kernel row cache budget.
    seed : int or SeededRng
        Drives the random tie-break of the second-choice heuristic.
    track_objective : bool
        Record the dual objective after every accepted step (test hook;
        quadratic cost per step).

    Attributes
    ----------
    support_ : ndarray of support-vector indices into the training set
    support_vectors_ : ndarray (n_sv, p)
    dual_coef_ : ndarray (n_sv,) of ``alpha_i * y_i``
    intercept_ : float
    alpha_ : ndarray (n,) full multiplier vector
    gamma_ : float resolved kernel coefficient
    converged_ : bool, False when an iteration cap ended the fit
    """

    def __init__(
        self,
        C=1.0,
        kernel="rbf",
        gamma="scale",
        degree=3,
        tol=1e-3,
        max_passes=10,
        max_iters=None,
        cache_mb=500.0,
        seed=0,
        track_objective=False,
    ):
        self.C = C
        self.kernel = kernel
        self.gamma = gamma
        self.degree = degree
        self.tol = tol
        self.max_passes = max_passes
        self.max_iters = max_iters
        self.cache_mb = cache_mb
        self.seed = seed
        self.track_objective = track_objective

    # -- fitting ---------------------------------------------------------

    def fit(self, X, y):
        X, y01 = check_X_y(X, y)
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        n = X.shape[0]
        y_pm = np.where(y01 == 1, 1.0, -1.0)
        if (y01 == 1).sum() in (0, n):
            raise ValueError("need two classes")

        gamma = self._resolve_gamma(X)
        rng = ensure_rng(self.seed).generator
        cache = _KernelCache(
            lambda i: _kernel_matrix(self.kernel, X[i : i + 1], X, gamma, self.degree)[0],
            n,
            self.cache_mb,
        )

        C = float(self.C)
        alpha = np.zeros(n)
        bias = 0.0
        errors = -y_pm.copy()  # f(x_i) - y_i with all-zero alpha
        max_iters = self.max_iters if self.max_iters is not None else 10 * n
        steps = 0
        objective_history = [] if self.track_objective else None

        def diag(i):
            return cache.row(i)[i]

        def dual_objective():
            coef = alpha * y_pm
            quad = sum(coef[i] * float(coef @ cache.row(i)) for i in np.flatnonzero(alpha))
            return float(alpha.sum() - 0.5 * quad)

        def take_step(i1, i2, E2):
            nonlocal bias, steps, errors
            if i1 == i2:
                return False
            a1, a2 = alpha[i1], alpha[i2]
            y1, y2 = y_pm[i1], y_pm[i2]
            E1 = errors[i1]
            s = y1 * y2
            if s > 0:
                lo, hi = max(0.0, a1 + a2 - C), min(C, a1 + a2)
            else:
                lo, hi = max(0.0, a2 - a1), min(C, C + a2 - a1)
            if lo >= hi:
                return False
            k1, k2 = cache.row(i1), cache.row(i2)
            k11, k12, k22 = k1[i1], k1[i2], k2[i2]
            eta = k11 + k22 - 2.0 * k12
            if eta > 0:
                a2_new = np.clip(a2 + y2 * (E1 - E2) / eta, lo, hi)
            else:
                # flat or concave direction: evaluate the objective at both
                # clip ends (Platt's degenerate case)
                f1 = y1 * (E1 + bias) - a1 * k11 - s * a2 * k12
                f2 = y2 * (E2 + bias) - s * a1 * k12 - a2 * k22
                lo1 = a1 + s * (a2 - lo)
                hi1 = a1 + s * (a2 - hi)
                obj_lo = lo1 * f1 + lo * f2 + 0.5 * lo1**2 * k11 + 0.5 * lo**2 * k22 + s * lo * lo1 * k12
                obj_hi = hi1 * f1 + hi * f2 + 0.5 * hi1**2 * k11 + 0.5 * hi**2 * k22 + s * hi * hi1 * k12
                if obj_lo < obj_hi - 1e-12:
                    a2_new = lo
                elif obj_lo > obj_hi + 1e-12:
                    a2_new = hi
                else:
                    return False
            if abs(a2_new - a2) < _STEP_EPS * (a2_new + a2 + _STEP_EPS):
                return False
            a1_new = a1 + s * (a2 - a2_new)
            a1_new = min(max(a1_new, 0.0), C)  # float-rounding guard only

            d1 = y1 * (a1_new - a1)
            d2 = y2 * (a2_new - a2)
            b1 = bias - E1 - d1 * k11 - d2 * k12
            b2 = bias - E2 - d1 * k12 - d2 * k22
            if _BOUND_EPS * C < a1_new < C * (1 - _BOUND_EPS):
                new_bias = b1
            elif _BOUND_EPS * C < a2_new < C * (1 - _BOUND_EPS):
                new_bias = b2
            else:
                new_bias = 0.5 * (b1 + b2)

            errors += d1 * k1 + d2 * k2 + (new_bias - bias)
            alpha[i1], alpha[i2] = a1_new, a2_new
            bias = new_bias
            steps += 1
            if objective_history is not None:
                objective_history.append(dual_objective())
            return True

        def examine(i2):
            y2, a2, E2 = y_pm[i2], alpha[i2], errors[i2]
            r2 = E2 * y2
            if not ((r2 < -self.tol and a2 < C) or (r2 > self.tol and a2 > 0)):
                return False
            non_bound = np.flatnonzero(
                (alpha > _BOUND_EPS * C) & (alpha < C * (1 - _BOUND_EPS))
            )
            if non_bound.shape[0] > 1:
                diffs = np.abs(errors[non_bound] - E2)
                best = diffs.max()
                candidates = non_bound[diffs == best]
                i1 = candidates[0] if candidates.shape[0] == 1 else rng.choice(candidates)
                if take_step(int(i1), i2, E2):
                    return True
            if non_bound.shape[0]:
                start = rng.integers(non_bound.shape[0])
                for i1 in np.roll(non_bound, -start):
                    if take_step(int(i1), i2, E2):
                        return True
            start = rng.integers(n)
            for i1 in np.roll(np.arange(n), -start):
                if take_step(int(i1), i2, E2):
                    return True
            return False

        examine_all = True
        quiet_sweeps = 0
        converged = False
        while steps < max_iters:
            changed = 0
            if examine_all:
                indices = range(n)
            else:
                indices = np.flatnonzero(
                    (alpha > _BOUND_EPS * C) & (alpha < C * (1 - _BOUND_EPS))
                )
            for i in indices:
                if steps >= max_iters:
                    break
                changed += examine(int(i))
            quiet_sweeps = quiet_sweeps + 1 if changed == 0 else 0
            if examine_all:
                if changed == 0:
                    converged = True
                    break
                examine_all = False
            elif changed == 0:
                examine_all = True
            if quiet_sweeps >= self.max_passes:
                break
        if not converged:
            logger.warning("SMO not fully converged after %d accepted steps", steps)

        np.clip(alpha, 0.0, C, out=alpha)
        self.alpha_ = alpha
        self.gamma_ = gamma
        self.converged_ = converged
        self.n_iter_ = steps
        if objective_history is not None:
            self.objective_history_ = objective_history

        support = np.flatnonzero(alpha > _BOUND_EPS * C)
        self.support_ = support
        self.support_vectors_ = X[support].copy()
        self.dual_coef_ = alpha[support] * y_pm[support]
        self.intercept_ = self._final_bias(X, y_pm, alpha, cache, C, fallback=bias)
        return self

    def _resolve_gamma(self, X):
        if self.kernel == "linear":
            return 1.0
        if isinstance(self.gamma, str):
            if self.gamma != "scale":
                raise ValueError(f"gamma must be a positive float or 'scale', got {self.gamma!r}")
            var = float(X.var())
            return 1.0 / (X.shape[1] * var) if var > 0 else 1.0 / X.shape[1]
        gamma = float(self.gamma)
        if gamma <= 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        return gamma

    def _final_bias(self, X, y_pm, alpha, cache, C, fallback):
        """Bias from the KKT conditions of the final multipliers.

        Mean over non-bound support vectors of ``y_i - f0(x_i)``; if every
        multiplier sits on a bound, the midpoint of the feasible interval.
        """
        support = np.flatnonzero(alpha > _BOUND_EPS * C)
        if support.shape[0] == 0:
            return fallback
        coef = alpha * y_pm
        f0 = np.zeros(X.shape[0])
        for j in support:
            f0 += coef[j] * cache.row(int(j))
        non_bound = support[alpha[support] < C * (1 - _BOUND_EPS)]
        if non_bound.shape[0]:
            return float(np.mean(y_pm[non_bound] - f0[non_bound]))
        lowers, uppers = [], []
        for i in range(X.shape[0]):
            at_zero = alpha[i] <= _BOUND_EPS * C
            bound = 1.0 - f0[i] if y_pm[i] > 0 else -1.0 - f0[i]
            if (y_pm[i] > 0) == at_zero:
                lowers.append(bound)
            else:
                uppers.append(bound)
        if lowers and uppers:
            return float((max(lowers) + min(uppers)) / 2.0)
        return float(max(lowers) if lowers else min(uppers))

    # -- inference -------------------------------------------------------

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "support_vectors_")
        X = check_array(X)
        if X.shape[1] != self.support_vectors_.shape[1]:
            raise ValueError(
                f"dimension mismatch: fitted on {self.support_vectors_.shape[1]} features, "
                f"got {X.shape[1]}"
            )
        if self.support_vectors_.shape[0] == 0:
            return np.full(X.shape[0], self.intercept_)
        K = _kernel_matrix(self.kernel, self.support_vectors_, X, self.gamma_, self.degree)
        return self.dual_coef_ @ K + self.intercept_

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0.0).astype(np.int64)

    # -- serialization ---------------------------------------------------

    def to_json(self) -> str:
        check_is_fitted(self, "support_vectors_")
        return json.dumps(
            {
                "format": "p300bench-svm",
                "version": 1,
                "kernel": self.kernel,
                "degree": self.degree,
                "gamma": self.gamma_,
                "support_vectors": self.support_vectors_.tolist(),
                "dual_coef": self.dual_coef_.tolist(),
                "intercept": self.intercept_,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SmoSvc":
        doc = json.loads(text)
        if doc.get("format") != "p300bench-svm" or doc.get("version") != 1:
            raise ValueError("not a p300bench SVM model document")
        model = cls(kernel=doc["kernel"], degree=doc["degree"])
        model.gamma_ = float(doc["gamma"])
        model.support_vectors_ = np.asarray(doc["support_vectors"], dtype=np.float64)
        model.dual_coef_ = np.asarray(doc["dual_coef"], dtype=np.float64)
        model.intercept_ = float(doc["intercept"])
        return model


def dual_objective(alpha, X, y, kernel="rbf", gamma=1.0, degree=3) -> float:
    """Dual objective value; O(n^2), intended for tests and small inputs."""
    X = np.asarray(X, dtype=np.float64)
    y_pm = np.where(np.asarray(y) == 1, 1.0, -1.0) if set(np.unique(y)) <= {0, 1} else np.asarray(y, dtype=np.float64)
    K = _kernel_matrix(kernel, X, X, gamma, degree)
    coef = alpha * y_pm
    return float(alpha.sum() - 0.5 * coef @ K @ coef)
