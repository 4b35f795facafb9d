import numpy as np
import pytest

from cutstokes.assembly import assemble_all, build_quadrature
from cutstokes.fespace import build_space
from cutstokes.geometry import Circle
from cutstokes.mesh import build_cut_topology, build_mesh
from cutstokes.verification import make_case

R = 2.0 / 3.0


class Setup:
    """Mesh, topology, space and quadrature for one circle."""

    def __init__(self, n, center=(0.0, 0.0), radius=R):
        self.mesh = build_mesh(n)
        self.ls = Circle(center, radius)
        self.topo = build_cut_topology(self.mesh, self.ls)
        self.space = build_space(self.mesh, self.topo)
        self.quad = build_quadrature(self.topo)


@pytest.fixture(scope="session")
def setup8():
    return Setup(8)


@pytest.fixture(scope="session")
def setup8_shifted():
    return Setup(8, (0.0371, -0.0523))


@pytest.fixture(scope="session")
def case():
    return make_case()


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


# -- n = 32 studies shared by the verification and acceptance suites ----------

MU_PLUS_LIST = tuple(10.0**k for k in range(9))
F_LIST = tuple(2.0**k for k in range(-8, 9))
K_LIST = tuple(range(1, 21))


@pytest.fixture(scope="session")
def convergence_reports():
    from cutstokes.verification import convergence_study
    return convergence_study(make_case(), [4, 8, 16, 32])


@pytest.fixture(scope="session")
def viscosity_reports():
    from cutstokes.verification import viscosity_sweep
    return viscosity_sweep(MU_PLUS_LIST, n=32)


@pytest.fixture(scope="session")
def slip_reports():
    from cutstokes.verification import slip_sweep
    return slip_sweep(F_LIST, n=32)


@pytest.fixture(scope="session")
def position_reports():
    from cutstokes.verification import position_sweep
    return position_sweep(K_LIST, n=32)
