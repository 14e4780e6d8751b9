import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ledgs.rasterizer import RenderSettings  # noqa: E402
from ledgs.scene import Camera, SyntheticSpec, new_synthetic_scene  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_scene():
    """10 dynamic Gaussians in two clusters plus a couple of statics."""
    return new_synthetic_scene(SyntheticSpec(seed=3, clusters=2, per_cluster=5,
                                             n_static=2, frames=4, extent=0.9,
                                             depth=5.0, cluster_radius=0.35))


@pytest.fixture
def small_camera():
    w, h = 32, 24
    k = np.array([[40.0, 0.0, (w - 1) / 2], [0.0, 40.0, (h - 1) / 2], [0.0, 0.0, 1.0]])
    return Camera(k, np.eye(4), w, h)


@pytest.fixture
def smooth_settings():
    """Thresholds disabled: the forward map is smooth almost everywhere,
    which finite-difference checks rely on."""
    return RenderSettings().smooth()
