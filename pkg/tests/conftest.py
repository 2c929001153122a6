import numpy as np
import pytest

from hiermatch.corpus import textured_image
from hiermatch.topology import StackConfig


@pytest.fixture(scope="session")
def corpus():
    img = textured_image(512, seed=0)
    img.setflags(write=False)
    return img


@pytest.fixture(scope="session")
def small_cfg():
    # small stack that fits 128 px images
    return StackConfig(num_layers=3, base_sigma=1.5, orientations=4, element_spacing_factor=0.35)


@pytest.fixture(scope="session")
def small_img():
    return textured_image(128, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
