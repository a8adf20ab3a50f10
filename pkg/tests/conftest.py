"""Shared fixtures: the two bundled systems and a quiet default configuration."""

from pathlib import Path

import numpy as np
import pytest

from core.config import default_config
from core.system_model import load_system_file

SYSTEMS = Path(__file__).resolve().parent.parent / "systems"


@pytest.fixture
def config():
    return default_config()


@pytest.fixture(scope="session")
def motivating():
    return load_system_file(SYSTEMS / "motivating.sys")


@pytest.fixture(scope="session")
def unicycle():
    return load_system_file(SYSTEMS / "unicycle.sys")


@pytest.fixture
def rng():
    return np.random.default_rng(20130601)


@pytest.fixture
def motivating_path():
    return SYSTEMS / "motivating.sys"


@pytest.fixture
def unicycle_path():
    return SYSTEMS / "unicycle.sys"
