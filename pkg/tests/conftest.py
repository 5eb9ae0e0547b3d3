import numpy as np
import pytest

from tsfem import mesh as tsmesh


@pytest.fixture(scope="session")
def disc_mesh():
    """Small unit-disc mesh shared by micro-dynamics tests."""
    return tsmesh.generate_mesh(tsmesh.MappedDiscSpec("identity", rings=2, segments=12))


@pytest.fixture(scope="session")
def disc_curve(disc_mesh):
    return tsmesh.extract_boundary_curve(disc_mesh, "outer")


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
