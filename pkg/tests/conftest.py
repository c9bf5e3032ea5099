import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from patchgmm.imageio import Image, read_image  # noqa: E402

DATA = Path(__file__).resolve().parent / "data"

# image-scale cases are slow per example by design; examples counts are set
# per test, deadlines off globally
settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "suite"))


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def tripod() -> Image:
    return read_image(DATA / "cam_tripod.pgm")


@pytest.fixture(scope="session")
def legs() -> Image:
    return read_image(DATA / "cam_legs.pgm")


@pytest.fixture(scope="session")
def buildings() -> Image:
    return read_image(DATA / "cam_buildings.pgm")


@pytest.fixture(scope="session")
def coins() -> Image:
    return read_image(DATA / "coins.pgm")


@pytest.fixture(scope="session")
def checker() -> Image:
    return read_image(DATA / "checker.pgm")


@pytest.fixture(scope="session")
def astronaut() -> Image:
    return read_image(DATA / "astronaut_96.ppm")


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20260816)
