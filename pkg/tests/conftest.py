import numpy as np
import pytest

from porogen.grid import BinaryImage


def random_image(rng, shape=(16, 16), p=0.5) -> BinaryImage:
    return BinaryImage((rng.random(shape) < p).astype(np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def stripes():
    # pore columns 0 and 2 of a 4x4 image
    return BinaryImage(np.tile([1, 0, 1, 0], (4, 1)))


@pytest.fixture
def checkerboard():
    i, j = np.indices((4, 4))
    return BinaryImage(((i + j) % 2).astype(np.uint8))


def he_scaled(net, rng):
    """Redraw conv weights at unit-gain scale.

    Gradient checks run at random parameter points; at the 0.02 training
    init a step of 1e-3 is a 5% weight change, which instance norm turns into
    curvature error far above the derivative being measured.
    """
    for name, p in net.params.items():
        if name.endswith(".weight"):
            fan_in = p.shape[1] * p.shape[2] * p.shape[3]
            p.data = rng.standard_normal(p.shape) * np.sqrt(2.0 / fan_in)
    return net


ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
