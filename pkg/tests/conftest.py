import numpy as np
import pytest

from warpco.wrapper import WrapperParams, init_params


def random_params(seed, channels=6, reduced=4, mid=5, bypass=False, scale=1.0) -> WrapperParams:
    p = init_params(channels, reduced, mid, seed, bypass)
    rng = np.random.default_rng(seed + 991)
    # non-zero biases so every term of the network is exercised
    return WrapperParams(
        g1_weight=p.g1_weight * scale,
        g1_bias=rng.normal(size=reduced) * 0.1,
        conv3_weight=p.conv3_weight * scale,
        conv3_bias=rng.normal(size=mid) * 0.1,
        conv1_weight=p.conv1_weight,
        conv1_bias=rng.normal(size=channels) * 0.1,
        bypass=bypass,
    )


def linear_g2(a: np.ndarray) -> WrapperParams:
    """Bypass wrapper whose restoration is the per-pixel matrix ``a`` (C x C')."""
    c, cr = a.shape
    k = np.zeros((cr, cr, 3, 3))
    k[:, :, 1, 1] = np.eye(cr)
    return WrapperParams(
        g1_weight=np.eye(cr, c),
        g1_bias=np.zeros(cr),
        conv3_weight=k,
        conv3_bias=np.zeros(cr),
        conv1_weight=a,
        conv1_bias=np.zeros(c),
        bypass=True,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
