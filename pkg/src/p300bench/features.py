"""Windowed-means feature extraction and train-only standardization.

The windowed-means (WM) transform averages the amplitude of each channel
over ``n_intervals`` equal sub-windows of a poststimulus time window and
concatenates the averages channel-major — 3 channels x 20 intervals = 60
features for the defaults.  ``EpochFlattener`` provides the "no feature
extraction" alternative (raw epochs flattened).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .base import BaseEstimator, check_array, check_is_fitted
from .containers import EpochSet, ms_to_sample, round_half_up

logger = logging.getLogger(__name__)


@dataclass
class FeatureMatrix:
    """Per-epoch feature vectors with labels and column names."""

    values: np.ndarray  # (n_rows, n_features)
    labels: np.ndarray  # (n_rows,)
    feature_names: list[str]

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["label", *self.feature_names])
            for label, row in zip(self.labels, self.values):
                writer.writerow([int(label), *[repr(float(v)) for v in row]])


def interval_edges(start_sample: int, length: int, n_intervals: int) -> np.ndarray:
    """Sample-index boundaries of ``n_intervals`` equal sub-windows.

    Interval ``i`` covers ``[edges[i], edges[i+1])``; remainders are
    distributed by rounding ``start + i * length / n`` half-up, so the
    intervals partition ``[start, start + length)`` exactly.
    """
    return np.array(
        [start_sample + round_half_up(i * length / n_intervals) for i in range(n_intervals + 1)],
        dtype=np.intp,
    )


class WindowedMeans(BaseEstimator):
    """Average-amplitude features over equal time intervals per channel.

    Parameters
    ----------
    window_start_ms, window_end_ms : float
        Poststimulus window, half-open ``[start, end)``, in ms relative
        to stimulus onset.
    n_intervals : int
        Number of equal sub-windows per channel.

    The transform is stateless; ``fit`` only validates the window against
    the epoch geometry.
    """

    def __init__(self, window_start_ms=300.0, window_end_ms=1000.0, n_intervals=20):
        self.window_start_ms = window_start_ms
        self.window_end_ms = window_end_ms
        self.n_intervals = n_intervals

    def fit(self, epochs: EpochSet, y=None):
        self._edges(epochs)
        return self

    def transform(self, epochs: EpochSet) -> np.ndarray:
        edges = self._edges(epochs)
        # reduceat sums up to the next boundary; the final chunk runs to the
        # end of the axis, so slice the window out first.
        s0, s1 = edges[0], edges[-1]
        chunks = np.add.reduceat(epochs.data[:, :, s0:s1], edges[:-1] - s0, axis=2)
        counts = np.diff(edges).astype(np.float64)
        means = chunks / counts[None, None, :]
        return means.reshape(epochs.n_epochs, -1)

    def fit_transform(self, epochs: EpochSet, y=None) -> np.ndarray:
        return self.fit(epochs).transform(epochs)

    def feature_names(self, n_channels: int) -> list[str]:
        return [
            f"ch{c}_win{i}" for c in range(n_channels) for i in range(self.n_intervals)
        ]

    def _edges(self, epochs: EpochSet) -> np.ndarray:
        if self.n_intervals < 1:
            raise ValueError("n_intervals must be >= 1")
        if self.window_end_ms <= self.window_start_ms:
            raise ValueError("window_end_ms must exceed window_start_ms")
        s0 = ms_to_sample(self.window_start_ms + epochs.prestim_ms, epochs.sampling_rate_hz)
        s1 = ms_to_sample(self.window_end_ms + epochs.prestim_ms, epochs.sampling_rate_hz)
        if s0 < 0 or s1 > epochs.n_samples or s0 >= s1:
            raise ValueError(
                f"window out of range: [{self.window_start_ms}, {self.window_end_ms}) ms "
                f"maps to samples [{s0}, {s1}) of {epochs.n_samples}"
            )
        if s1 - s0 < self.n_intervals:
            raise ValueError(
                f"window out of range: {s1 - s0} samples cannot form {self.n_intervals} intervals"
            )
        return interval_edges(s0, s1 - s0, self.n_intervals)


class EpochFlattener(BaseEstimator):
    """Raw feature mode: flatten each epoch to channels * samples values."""

    def fit(self, epochs: EpochSet, y=None):
        return self

    def transform(self, epochs: EpochSet) -> np.ndarray:
        return epochs.data.reshape(epochs.n_epochs, -1).copy()

    def fit_transform(self, epochs: EpochSet, y=None) -> np.ndarray:
        return self.transform(epochs)

    def feature_names(self, n_channels: int, n_samples: int | None = None) -> list[str]:
        if n_samples is None:
            raise ValueError("n_samples required for raw feature names")
        return [f"ch{c}_t{t}" for c in range(n_channels) for t in range(n_samples)]


class Standardizer(BaseEstimator):
    """Column-wise zero-mean unit-variance scaling fitted on training rows.

    Uses the population (1/n) standard deviation.  Degenerate columns
    (std below 1e-12) are frozen: their output is forced to 0 and a
    warning is logged once at fit time.
    """

    def __init__(self):
        pass

    def fit(self, X, y=None):
        X = check_array(X)
        if X.shape[0] < 2:
            raise ValueError(f"insufficient samples: need n >= 2, got n={X.shape[0]}")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.frozen_ = std < 1e-12
        if self.frozen_.any():
            logger.warning(
                "%d degenerate feature column(s) frozen to zero output",
                int(self.frozen_.sum()),
            )
        self.scale_ = np.where(self.frozen_, 1.0, std)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "mean_")
        X = check_array(X)
        if X.shape[1] != self.mean_.shape[0]:
            raise ValueError(
                f"dimension mismatch: fitted on {self.mean_.shape[0]} features, got {X.shape[1]}"
            )
        Z = (X - self.mean_) / self.scale_
        if self.frozen_.any():
            Z[:, self.frozen_] = 0.0
        return Z

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X).transform(X)

    def to_json(self) -> str:
        check_is_fitted(self, "mean_")
        import json

        return json.dumps(
            {
                "format": "p300bench-standardizer",
                "version": 1,
                "mean": self.mean_.tolist(),
                "scale": self.scale_.tolist(),
                "frozen": self.frozen_.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Standardizer":
        import json

        doc = json.loads(text)
        if doc.get("format") != "p300bench-standardizer" or doc.get("version") != 1:
            raise ValueError("not a p300bench standardizer document")
        s = cls()
        s.mean_ = np.asarray(doc["mean"], dtype=np.float64)
        s.scale_ = np.asarray(doc["scale"], dtype=np.float64)
        s.frozen_ = np.asarray(doc["frozen"], dtype=bool)
        return s
