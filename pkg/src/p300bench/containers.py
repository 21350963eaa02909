"""Epoch container, the EPB v1 binary format, and delimited-text import.

An :class:`EpochSet` is the currency of the pipeline: a stack of
fixed-shape channels x samples waveforms in microvolts, each carrying a
binary label (target = 1).

EPB v1 on-disk layout (little-endian throughout)::

    4 bytes   magic "ERPB"
    u16       version (= 1)
    u32       n_epochs
    u16       n_channels
    u32       n_samples
    f32       sampling_rate_hz
    f32       prestim_ms
    8 bytes   per channel: ASCII name, space-padded
    u8        per epoch: label (0 or 1)
    i32       per epoch: subject id (-1 if unknown)
    f32       amplitudes, [epoch][channel][sample] order

Amplitudes are stored as f32; write(read(path)) reproduces the file
byte for byte.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

_MAGIC = b"ERPB"
_VERSION = 1
_HEADER = struct.Struct("<4sHIHIff")
_NAME_BYTES = 8


class ContainerFormatError(Exception):
    """Unreadable or structurally invalid EPB/CSV input."""


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero toward +inf.

    Used for every millisecond -> sample conversion so that interval
    boundaries are identical on every platform (Python's built-in round
    is banker's rounding).
    """
    return int(math.floor(x + 0.5))


def ms_to_sample(t_ms: float, sampling_rate_hz: float) -> int:
    return round_half_up(t_ms * sampling_rate_hz / 1000.0)


@dataclass
class EpochSet:
    """Fixed-shape epoched EEG with labels.

    Attributes
    ----------
    data : ndarray of shape (n_epochs, n_channels, n_samples)
        Amplitudes in microvolts, float64 in memory (f32 on disk).
    labels : ndarray of shape (n_epochs,)
        1 = target, 0 = non-target.
    sampling_rate_hz : float
    prestim_ms : float
        Time before stimulus onset covered by each epoch; sample index
        of onset is ``ms_to_sample(prestim_ms, sampling_rate_hz)``.
    channel_names : list of str
    subject_ids : ndarray of shape (n_epochs,), int32
        -1 where unknown.
    """

    data: np.ndarray
    labels: np.ndarray
    sampling_rate_hz: float
    prestim_ms: float
    channel_names: list[str]
    subject_ids: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"data must be (epochs, channels, samples), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("invalid amplitude: non-finite values in data")
        self.labels = np.asarray(self.labels)
        if self.labels.shape != (self.n_epochs,):
            raise ValueError(
                f"got {self.labels.shape[0] if self.labels.ndim == 1 else self.labels.shape} "
                f"labels for {self.n_epochs} epochs"
            )
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        self.labels = self.labels.astype(np.uint8)
        if self.sampling_rate_hz <= 0:
            raise ValueError("sampling_rate_hz must be positive")
        if self.prestim_ms < 0:
            raise ValueError("prestim_ms must be non-negative")
        self.channel_names = [str(c) for c in self.channel_names]
        if len(self.channel_names) != self.n_channels:
            raise ValueError(
                f"got {len(self.channel_names)} channel names for {self.n_channels} channels"
            )
        if self.subject_ids is None:
            self.subject_ids = np.full(self.n_epochs, -1, dtype=np.int32)
        else:
            self.subject_ids = np.asarray(self.subject_ids, dtype=np.int32)
            if self.subject_ids.shape != (self.n_epochs,):
                raise ValueError("subject_ids length must equal n_epochs")

    @property
    def n_epochs(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    @property
    def poststim_ms(self) -> float:
        return self.n_samples / self.sampling_rate_hz * 1000.0 - self.prestim_ms

    def select(self, indices) -> "EpochSet":
        """Subset by epoch indices, preserving the given order."""
        indices = np.asarray(indices, dtype=np.intp)
        return EpochSet(
            data=self.data[indices],
            labels=self.labels[indices],
            sampling_rate_hz=self.sampling_rate_hz,
            prestim_ms=self.prestim_ms,
            channel_names=list(self.channel_names),
            subject_ids=self.subject_ids[indices],
        )

    def times_ms(self) -> np.ndarray:
        """Sample times in ms relative to stimulus onset."""
        return np.arange(self.n_samples) / self.sampling_rate_hz * 1000.0 - self.prestim_ms


def write_epb(epochs: EpochSet, path) -> None:
    """Write an EpochSet as an EPB v1 file."""
    names = []
    for name in epochs.channel_names:
        raw = name.encode("ascii")
        if len(raw) > _NAME_BYTES:
            raise ValueError(f"channel name {name!r} exceeds {_NAME_BYTES} bytes")
        names.append(raw.ljust(_NAME_BYTES))
    if not np.all(np.isfinite(epochs.data)):
        raise ValueError("invalid amplitude: non-finite values in data")
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        epochs.n_epochs,
        epochs.n_channels,
        epochs.n_samples,
        float(epochs.sampling_rate_hz),
        float(epochs.prestim_ms),
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(b"".join(names))
        f.write(epochs.labels.astype("<u1").tobytes())
        f.write(epochs.subject_ids.astype("<i4").tobytes())
        f.write(np.ascontiguousarray(epochs.data, dtype="<f4").tobytes())


def read_epb(path) -> EpochSet:
    """Read an EPB v1 file back into an EpochSet."""
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise ContainerFormatError(f"unrecognized container: {path} is too short")
        magic, version, n_epochs, n_channels, n_samples, rate, prestim = _HEADER.unpack(raw)
        if magic != _MAGIC:
            raise ContainerFormatError(f"unrecognized container: bad magic {magic!r}")
        if version != _VERSION:
            raise ContainerFormatError(f"unrecognized container: unsupported version {version}")

        names_raw = f.read(n_channels * _NAME_BYTES)
        if len(names_raw) < n_channels * _NAME_BYTES:
            raise ContainerFormatError("corrupt file: truncated channel names")
        names = [
            names_raw[i * _NAME_BYTES : (i + 1) * _NAME_BYTES].decode("ascii").rstrip(" ")
            for i in range(n_channels)
        ]

        labels = np.frombuffer(f.read(n_epochs), dtype="<u1")
        if labels.shape[0] < n_epochs:
            raise ContainerFormatError("corrupt file: truncated labels")
        subjects_raw = f.read(4 * n_epochs)
        if len(subjects_raw) < 4 * n_epochs:
            raise ContainerFormatError("corrupt file: truncated subject ids")
        subjects = np.frombuffer(subjects_raw, dtype="<i4")

        count = n_epochs * n_channels * n_samples
        payload = f.read(4 * count)
        if len(payload) < 4 * count:
            raise ContainerFormatError("corrupt file: truncated amplitude payload")
        data = np.frombuffer(payload, dtype="<f4").astype(np.float64)

    data = data.reshape(n_epochs, n_channels, n_samples)
    if not np.all(np.isfinite(data)):
        raise ValueError("invalid amplitude: non-finite values in data")
    return EpochSet(
        data=data,
        labels=labels.copy(),
        sampling_rate_hz=rate,
        prestim_ms=prestim,
        channel_names=names,
        subject_ids=subjects.copy(),
    )


def import_csv(
    data_path,
    labels_path,
    *,
    n_channels: int,
    sampling_rate_hz: float,
    prestim_ms: float,
    channel_names: list[str] | None = None,
) -> EpochSet:
    """Import epochs from delimited text.

    The data file holds one epoch per row with channels concatenated
    channel-major (all samples of channel 0, then channel 1, ...); the
    labels file holds one 0/1 per row.
    """
    rows = []
    width = None
    with open(data_path, newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ContainerFormatError(
                    f"ragged rows in {data_path}: line {line_no} has {len(row)} "
                    f"values, expected {width}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ContainerFormatError(f"unparsable value in {data_path} line {line_no}: {exc}")
    if not rows:
        raise ContainerFormatError(f"no data rows in {data_path}")
    if width % n_channels != 0:
        raise ContainerFormatError(
            f"row width {width} is not a multiple of n_channels={n_channels}"
        )

    labels = []
    with open(labels_path, newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            value = row[0].strip()
            if value not in ("0", "1"):
                raise ContainerFormatError(
                    f"invalid label in {labels_path} line {line_no}: {value!r}"
                )
            labels.append(int(value))
    if len(labels) != len(rows):
        raise ContainerFormatError(
            f"row/label count mismatch: {len(rows)} epochs vs {len(labels)} labels"
        )

    n_samples = width // n_channels
    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), n_channels, n_samples)
    if channel_names is None:
        channel_names = [f"ch{i}" for i in range(n_channels)]
    return EpochSet(
        data=data,
        labels=np.asarray(labels),
        sampling_rate_hz=sampling_rate_hz,
        prestim_ms=prestim_ms,
        channel_names=channel_names,
    )
