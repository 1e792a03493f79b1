import numpy as np
import pytest

from qcp import KernelSpec, Params, build_kernel, discretize
from qcp.wavespeed import build_phi, default_directions


@pytest.fixture(scope="session")
def p_main():
    return Params(1.0, 0.05)


@pytest.fixture(scope="session")
def square_spec():
    return build_kernel(KernelSpec("uniform-square", {"radius": 1.0}))


@pytest.fixture(scope="session")
def dk8(square_spec):
    return discretize(square_spec, 8)


@pytest.fixture(scope="session")
def dk1(square_spec):
    return discretize(square_spec, 1)


@pytest.fixture(scope="session")
def point_mass_spec():
    return build_kernel(KernelSpec("table", {"entries": [(0.0, 0.0, 1.0)]}))


@pytest.fixture(scope="session")
def phi_main(dk8, p_main):
    """Recovery profile at the reference parameters; built once."""
    dirs = default_directions()
    return build_phi(dirs[0], dirs[1], dirs[2], dk8, p_main, n=4,
                     speed_tol=0.02)


def seeded(seed):
    return np.random.Generator(np.random.Philox(key=np.array(
        [seed, 0], dtype=np.uint64)))
