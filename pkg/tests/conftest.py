"""Shared fixtures: small well-posed scenes and designs reused across modules."""
from __future__ import annotations

import numpy as np
import pytest

from splatid.scene import (
    make_full_design,
    make_trajectory_design,
    synth_scene,
)

SMALL_RECIPE = {
    "horizon": 1.0,
    "sh_degree": 1,
    "temporal": {"kind": "fourier", "count": 3},
    "n_static": 2,
    "box": 1.0,
    "base_color": [0.35, 0.85],
    "view_dep_scale": 0.35,
    "scale_range": [0.3, 0.5],
    "opacity_range": [0.7, 0.95],
    "events": [],
    "agents": [],
}

SOF_RECIPE = {
    "horizon": 1.0,
    "sh_degree": 1,
    "temporal": {"kind": "fourier", "count": 16},
    "n_static": 5,
    "box": 1.2,
    "view_dep_scale": 0.35,
}


@pytest.fixture(scope="session")
def small_scene():
    """Two primitives, degree-1 SH, three Fourier modes: 72 parameters."""
    scene, theta_star = synth_scene(SMALL_RECIPE, seed=3)
    return scene, theta_star


@pytest.fixture(scope="session")
def small_full_design():
    """Well-posed product design for the small scene (96 frames, 16 px each)."""
    return make_full_design(6, 10, horizon=1.0, image_size=(4, 4), pixel_stride=1)


@pytest.fixture(scope="session")
def sof_scene():
    """Reference scene for single-observer (SOF) diagnostics: Fourier 16."""
    scene, theta_star = synth_scene(SOF_RECIPE, seed=0)
    return scene, theta_star


@pytest.fixture(scope="session")
def sof_design():
    """Planar circular single-camera trajectory: one viewpoint per timestamp."""
    return make_trajectory_design(
        horizon=1.0,
        camera_count=1,
        timestep_count=48,
        path="circular",
        image_size=(8, 8),
        pixel_stride=2,
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
