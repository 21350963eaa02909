"""Synthetic P300-like epoch generation for desk-scale testing.

Target epochs carry a Gaussian bump (the "P300") on top of white noise;
non-target epochs are noise only.  The default latency of 500 ms imitates
the delayed component seen in children rather than the textbook 300 ms.
All numeric defaults are tunable artifact choices, not measured values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .containers import EpochSet, ms_to_sample
from .rng import ensure_rng


@dataclass
class SynthConfig:
    n_epochs: int = 2000
    n_channels: int = 3
    n_samples: int = 1200
    sampling_rate_hz: float = 1000.0
    prestim_ms: float = 200.0
    p300_amplitude_uv: float = 8.0
    p300_latency_ms: float = 500.0
    latency_jitter_ms: float = 50.0
    p300_width_ms: float = 80.0
    noise_std_uv: float = 12.0
    channel_gains: tuple[float, ...] = (0.7, 1.0, 0.9)
    seed: int = 0

    def validate(self):
        if self.n_epochs < 1 or self.n_channels < 1 or self.n_samples < 1:
            raise ValueError("n_epochs, n_channels and n_samples must be positive")
        if self.sampling_rate_hz <= 0:
            raise ValueError("sampling_rate_hz must be positive")
        for name in ("p300_amplitude_uv", "latency_jitter_ms", "p300_width_ms", "noise_std_uv"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        poststim_ms = self.n_samples / self.sampling_rate_hz * 1000.0 - self.prestim_ms
        if not 0.0 <= self.p300_latency_ms < poststim_ms:
            raise ValueError(
                f"p300_latency_ms={self.p300_latency_ms} outside the poststimulus "
                f"window [0, {poststim_ms})"
            )
        if len(self.channel_gains) != self.n_channels:
            raise ValueError(
                f"got {len(self.channel_gains)} channel gains for {self.n_channels} channels"
            )


def synthesize(cfg: SynthConfig) -> EpochSet:
    """Generate a balanced synthetic EpochSet, deterministic given the seed.

    Labels alternate 0, 1, 0, 1, ... giving floor(n/2) targets.  Each
    target epoch adds ``A * exp(-(t - L)^2 / (2 w^2))`` per channel,
    scaled by the channel gain, with the per-epoch latency L drawn from
    ``Normal(p300_latency_ms, latency_jitter_ms)``.  Both classes carry
    additive Gaussian noise.
    """
    cfg.validate()
    rng = ensure_rng(cfg.seed).generator

    labels = np.arange(cfg.n_epochs) % 2
    target_idx = np.flatnonzero(labels == 1)

    # Draw order is fixed (latencies first, then one noise block) so the
    # output is reproducible independent of any later vectorisation.
    latencies = rng.normal(cfg.p300_latency_ms, cfg.latency_jitter_ms, size=target_idx.shape[0])
    data = rng.normal(
        0.0, cfg.noise_std_uv, size=(cfg.n_epochs, cfg.n_channels, cfg.n_samples)
    )

    t_ms = np.arange(cfg.n_samples) / cfg.sampling_rate_hz * 1000.0 - cfg.prestim_ms
    gains = np.asarray(cfg.channel_gains, dtype=np.float64)
    for epoch, latency in zip(target_idx, latencies):
        if cfg.p300_width_ms > 0:
            bump = cfg.p300_amplitude_uv * np.exp(
                -((t_ms - latency) ** 2) / (2.0 * cfg.p300_width_ms**2)
            )
        else:
            # zero-width limit: a single-sample impulse at the latency
            bump = np.zeros(cfg.n_samples)
            peak = ms_to_sample(latency + cfg.prestim_ms, cfg.sampling_rate_hz)
            if 0 <= peak < cfg.n_samples:
                bump[peak] = cfg.p300_amplitude_uv
        data[epoch] += gains[:, None] * bump[None, :]

    names = ["Fz", "Cz", "Pz"] if cfg.n_channels == 3 else [f"ch{i}" for i in range(cfg.n_channels)]
    return EpochSet(
        data=data,
        labels=labels,
        sampling_rate_hz=cfg.sampling_rate_hz,
        prestim_ms=cfg.prestim_ms,
        channel_names=names,
    )
