#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import pytest
import torch

from sketchfit.config import RenderConfig
from sketchfit.core import primitives
from sketchfit.core.geometry import icosphere
from sketchfit.core.renderer import SoftRenderer, camera_from_angles


@pytest.fixture
def ico1():
    return icosphere(1)


@pytest.fixture
def ico2():
    return icosphere(2)


@pytest.fixture
def cube():
    return primitives.cube(1.0)


@pytest.fixture
def asymmetric_ico1():
    return primitives.perturb_asymmetric(icosphere(1), 0.1, seed=0)


@pytest.fixture
def renderer():
    return SoftRenderer(RenderConfig())


@pytest.fixture
def front_camera():
    return camera_from_angles(0.0, 0.0, image_size=32)


@pytest.fixture
def binary_masks():
    """Две маски 2×4: по два пикселя, пересекаются в одном."""
    a = torch.zeros(2, 4, dtype=torch.float64)
    b = torch.zeros(2, 4, dtype=torch.float64)
    a[0, 0] = a[0, 1] = 1.0
    b[0, 1] = b[1, 1] = 1.0
    return a, b
