"""Shared fixtures: small grids and seeded field families."""

from pathlib import Path

import pytest

from llbar.grid import Grid

REPO_ROOT = Path(__file__).resolve().parents[1]
CALIBRATION_FILE = REPO_ROOT / "calibration" / "constants.txt"


@pytest.fixture(scope="session")
def grid16_1d():
    return Grid(dim=1, n=16)


@pytest.fixture(scope="session")
def grid16_2d():
    return Grid(dim=2, n=16)


@pytest.fixture(scope="session")
def grid16_3d():
    return Grid(dim=3, n=16)


@pytest.fixture(scope="session")
def grid32_2d():
    return Grid(dim=2, n=32)


@pytest.fixture(scope="session")
def grid64_2d():
    return Grid(dim=2, n=64)


@pytest.fixture(scope="session")
def grid32_3d():
    return Grid(dim=3, n=32)
