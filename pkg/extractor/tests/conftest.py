import numpy as np
import pytest
import torch
from scipy.io import wavfile

from wavlm_extractor.model import build_random


@pytest.fixture(scope="session")
def model():
    """One seeded full-size model shared by all tests (weights never change)."""
    return build_random(0)


@pytest.fixture(scope="session")
def checkpoint_dir(tmp_path_factory, model):
    """The shared model saved as a local checkpoint directory."""
    out = tmp_path_factory.mktemp("ckpt")
    model.save_pretrained(out)
    return out


def write_wav(path, samples, rate=16000):
    wavfile.write(path, rate, np.asarray(samples, dtype=np.float32))


@pytest.fixture(scope="session")
def wav_10s(tmp_path_factory):
    rng = np.random.default_rng(1)
    t = np.arange(16000 * 10) / 16000.0
    wave = 0.3 * np.sin(2 * np.pi * 220.0 * t) + 0.1 * rng.standard_normal(t.size)
    path = tmp_path_factory.mktemp("wav") / "ten_seconds.wav"
    write_wav(path, wave)
    return path
