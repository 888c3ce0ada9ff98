import numpy as np
import pytest
from skimage import data, transform


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def cameraman() -> np.ndarray:
    """Cameraman test image, 128 x 128, values in [0, 1]."""
    img = data.camera().astype(np.float64) / 255.0
    return transform.resize(img, (128, 128), anti_aliasing=True)


@pytest.fixture
def smooth_image() -> np.ndarray:
    """Positive, smooth 32 x 32 image."""
    i, j = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
    return 100.0 + 40.0 * np.sin(2 * np.pi * i / 32) * np.cos(2 * np.pi * j / 16)


@pytest.fixture
def sinusoid() -> np.ndarray:
    """128 x 128 separable sinusoid of period 8, strictly positive."""
    i, j = np.meshgrid(np.arange(128), np.arange(128), indexing="ij")
    return 2.0 + np.sin(2 * np.pi * i / 8) + np.sin(2 * np.pi * j / 8)
