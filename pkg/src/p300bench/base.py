"""Estimator base class and input validation helpers.

The estimators in this package follow the scikit-learn protocol
(``get_params`` / ``set_params``, ``fit`` returning ``self``, fitted
attributes with a trailing underscore) without depending on scikit-learn
itself.  ``sklearn.base.clone`` and pipeline tooling work with them out of
the box because they only rely on the parameter protocol.
"""

from __future__ import annotations

import inspect

import numpy as np


class NotFittedError(RuntimeError):
    """Raised when predict/transform is called before fit."""


class BaseEstimator:
    """Minimal scikit-learn-compatible parameter handling.

    Subclasses must accept all hyperparameters as explicit keyword
    arguments in ``__init__`` and store them unmodified under the same
    attribute names.
    """

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(
                    f"invalid parameter {key!r} for {type(self).__name__}; "
                    f"valid parameters are {sorted(valid)}"
                )
            setattr(self, key, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def check_array(X, *, name="X", ndim=2, dtype=np.float64, allow_empty=False):
    """Convert to a finite ndarray of the requested dimensionality."""
    arr = np.asarray(X, dtype=dtype)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_binary_labels(y, *, n=None):
    """Validate a label vector with entries in {0, 1} or {-1, +1}.

    Returns the labels mapped to {0, 1} (1 = target / positive class).
    """
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"labels must be 1-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"got {arr.shape[0]} labels for {n} samples")
    values = set(np.unique(arr).tolist())
    if values <= {0, 1}:
        return arr.astype(np.int64)
    if values <= {-1, 1}:
        return (arr > 0).astype(np.int64)
    raise ValueError(f"labels must be binary (0/1 or -1/+1), got values {sorted(values)}")


def check_X_y(X, y, *, ndim=2):
    X = check_array(X, ndim=ndim)
    y = check_binary_labels(y, n=X.shape[0])
    return X, y


def check_is_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
