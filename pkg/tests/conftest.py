import sys
from pathlib import Path

import numpy as np
import pytest

from pda.image import Image

TESTS_DIR = Path(__file__).parent
TOY_ADAPTER = TESTS_DIR / "toy_adapter.py"


def adapter_command(*extra: str) -> str:
    return " ".join([sys.executable, str(TOY_ADAPTER), *extra])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng: np.random.Generator, width: int, height: int, channels: int = 1) -> Image:
    return Image(rng.random((height, width, channels)))
