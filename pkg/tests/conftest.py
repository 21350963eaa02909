import numpy as np
import pytest

from p300bench.containers import EpochSet
from p300bench.synth import SynthConfig, synthesize


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


@pytest.fixture
def small_epochs(rng):
    """Tiny random EpochSet (f32-representable amplitudes)."""
    data = rng.normal(0, 10, size=(6, 3, 40)).astype(np.float32).astype(np.float64)
    return EpochSet(
        data=data,
        labels=np.array([0, 1, 0, 1, 0, 1]),
        sampling_rate_hz=100.0,
        prestim_ms=100.0,
        channel_names=["Fz", "Cz", "Pz"],
        subject_ids=np.array([1, 1, 2, 2, 3, 3]),
    )


@pytest.fixture(scope="session")
def separable_epochs():
    """Strongly separable synthetic set used by classifier sanity tests."""
    return synthesize(
        SynthConfig(
            n_epochs=240,
            n_samples=400,
            prestim_ms=100.0,
            p300_latency_ms=150.0,
            latency_jitter_ms=10.0,
            p300_width_ms=40.0,
            noise_std_uv=4.0,
            seed=77,
        )
    )
