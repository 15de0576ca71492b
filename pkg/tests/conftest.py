import numpy as np
import pytest

from fdkin.geometry import DensityField, build_grid


@pytest.fixture(scope="session")
def grid10():
    return build_grid(10, 5.0)


@pytest.fixture(scope="session")
def smooth_field(grid10):
    """Resolved interior-supported occupation on the small grid."""
    ax = grid10.axis
    r2 = ax[:, None, None] ** 2 + ax[None, :, None] ** 2 + ax[None, None, :] ** 2
    return DensityField(grid10, 0.6 * np.exp(-r2 / 2.0))


@pytest.fixture(scope="session")
def random_fields(grid10):
    """A batch of rough Pauli-bounded fields with fixed seed."""
    rng = np.random.default_rng(1234)
    out = []
    for _ in range(8):
        vals = rng.random((10, 10, 10))
        vals *= rng.random()  # vary the overall level
        out.append(DensityField(grid10, vals))
    return out
