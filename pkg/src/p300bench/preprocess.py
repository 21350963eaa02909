"""Epoch extraction, baseline correction and amplitude-based artifact
rejection.

The three steps mirror common ERP practice: cut fixed windows around
stimulus markers, remove the mean of the prestimulus interval per channel,
then drop any epoch whose absolute amplitude exceeds a threshold anywhere.
No filtering or detrending is applied.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .containers import EpochSet, ms_to_sample

logger = logging.getLogger(__name__)


@dataclass
class PreprocessConfig:
    prestim_ms: float = 200.0
    poststim_ms: float = 1000.0
    baseline_window_ms: tuple[float, float] = (-200.0, 0.0)
    rejection_threshold_uv: float = 100.0

    def validate(self):
        if self.prestim_ms <= 0 or self.poststim_ms <= 0:
            raise ValueError("prestim_ms and poststim_ms must be positive")
        if self.rejection_threshold_uv <= 0:
            raise ValueError("rejection_threshold_uv must be positive")
        lo, hi = self.baseline_window_ms
        if hi <= lo:
            raise ValueError("baseline window must be non-empty")


@dataclass
class ContinuousRecording:
    """Multichannel continuous signal plus stimulus markers.

    ``markers`` is a list of ``(onset_sample, label)`` pairs with binary
    labels (target = 1).
    """

    data: np.ndarray  # (n_channels, n_points), microvolts
    sampling_rate_hz: float
    markers: list[tuple[int, int]]
    channel_names: list[str] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"data must be (channels, points), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("data contains non-finite values")
        if self.sampling_rate_hz <= 0:
            raise ValueError("sampling_rate_hz must be positive")
        for onset, label in self.markers:
            if label not in (0, 1):
                raise ValueError(f"marker labels must be 0 or 1, got {label}")
            if not 0 <= onset < self.n_points:
                raise ValueError(f"marker onset {onset} outside recording")
        if self.channel_names is None:
            self.channel_names = [f"ch{i}" for i in range(self.n_channels)]

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_points(self) -> int:
        return self.data.shape[1]


@dataclass
class RejectionReport:
    n_input: int
    n_rejected: int
    rejected_indices: list[int]

    @property
    def rejection_rate(self) -> float:
        return self.n_rejected / self.n_input if self.n_input else 0.0

    def as_dict(self):
        return {
            "n_input": self.n_input,
            "n_rejected": self.n_rejected,
            "rejection_rate": self.rejection_rate,
            "rejected_indices": list(self.rejected_indices),
        }


def extract_epochs(rec: ContinuousRecording, cfg: PreprocessConfig) -> EpochSet:
    """Cut one epoch per marker: [onset - prestim, onset + poststim).

    Markers too close to a recording edge are skipped (never zero-padded)
    and counted in a warning.
    """
    cfg.validate()
    pre = ms_to_sample(cfg.prestim_ms, rec.sampling_rate_hz)
    length = ms_to_sample(cfg.prestim_ms + cfg.poststim_ms, rec.sampling_rate_hz)

    epochs = []
    labels = []
    skipped = 0
    for onset, label in rec.markers:
        start = onset - pre
        if start < 0 or start + length > rec.n_points:
            skipped += 1
            continue
        epochs.append(rec.data[:, start : start + length])
        labels.append(label)
    if skipped:
        logger.warning("skipped %d marker(s) too close to the recording edge", skipped)
    if not epochs:
        raise ValueError("no epochs could be extracted")
    return EpochSet(
        data=np.stack(epochs),
        labels=np.asarray(labels),
        sampling_rate_hz=rec.sampling_rate_hz,
        prestim_ms=cfg.prestim_ms,
        channel_names=list(rec.channel_names),
    )


def baseline_correct(epochs: EpochSet, cfg: PreprocessConfig) -> EpochSet:
    """Subtract the per-channel mean of the baseline window from each epoch.

    The window is half-open in ms relative to stimulus onset (default
    [-200, 0), i.e. exactly the prestimulus samples at 1 kHz).
    """
    cfg.validate()
    lo, hi = cfg.baseline_window_ms
    b0 = ms_to_sample(lo + epochs.prestim_ms, epochs.sampling_rate_hz)
    b1 = ms_to_sample(hi + epochs.prestim_ms, epochs.sampling_rate_hz)
    b0 = max(b0, 0)
    b1 = min(b1, epochs.n_samples)
    if b1 <= b0:
        raise ValueError("baseline window contains no samples")
    baseline = epochs.data[:, :, b0:b1].mean(axis=2, keepdims=True)
    return EpochSet(
        data=epochs.data - baseline,
        labels=epochs.labels,
        sampling_rate_hz=epochs.sampling_rate_hz,
        prestim_ms=epochs.prestim_ms,
        channel_names=list(epochs.channel_names),
        subject_ids=epochs.subject_ids,
    )


def reject_artifacts(epochs: EpochSet, cfg: PreprocessConfig) -> tuple[EpochSet, RejectionReport]:
    """Drop epochs whose absolute amplitude exceeds the threshold anywhere.

    The comparison is strict (``max |x| > threshold``): an epoch peaking
    at exactly the threshold survives.  Expected to run on
    baseline-corrected data; this is documented, not enforced.
    """
    cfg.validate()
    peak = np.abs(epochs.data).max(axis=(1, 2))
    rejected = peak > cfg.rejection_threshold_uv
    report = RejectionReport(
        n_input=epochs.n_epochs,
        n_rejected=int(rejected.sum()),
        rejected_indices=np.flatnonzero(rejected).tolist(),
    )
    kept = epochs.select(np.flatnonzero(~rejected))
    return kept, report
