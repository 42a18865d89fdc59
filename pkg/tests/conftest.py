import numpy as np
import pytest

from birdcorpus.audio_io import ClipBuffer

SR = 16000


@pytest.fixture
def tone_1k():
    t = np.arange(SR * 3) / SR
    return ClipBuffer(0.5 * np.sin(2 * np.pi * 1000 * t), SR)


@pytest.fixture
def tone_2k():
    t = np.arange(SR * 3) / SR
    return ClipBuffer(0.5 * np.sin(2 * np.pi * 2000 * t), SR)


@pytest.fixture
def white_noise():
    rng = np.random.default_rng(42)
    samples = 0.3 * rng.standard_normal(SR * 3)
    return ClipBuffer(np.clip(samples, -1, 1), SR)


@pytest.fixture
def silence():
    return ClipBuffer(np.zeros(SR * 3), SR)
