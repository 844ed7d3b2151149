import os
import pathlib

import pytest


@pytest.fixture(scope="session")
def models_dir():
    env = os.environ.get("BITFORGE_MODELS_DIR")
    if env:
        return pathlib.Path(env)
    return pathlib.Path(__file__).resolve().parents[2] / "models"
