import os

# keep BLAS single-threaded so timing-sensitive tests measure one CPU thread
for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

from followpipe import CameraModel
from followpipe import scenes


@pytest.fixture
def small_camera():
    return CameraModel(view_width=64, view_height=48, scale=0.025)


@pytest.fixture
def clean_scene():
    """Noise-free single-disc scene."""
    return scenes.stationary_scene(sigma=0.0, dim=32, seed=0)


@pytest.fixture
def noisy_scene():
    return scenes.stationary_scene(sigma=0.1, dim=32, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
