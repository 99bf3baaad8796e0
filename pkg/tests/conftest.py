import pytest

from spatialmca.analytic import SlabModel, SphereModel
from spatialmca.discretize import build_mesh
from spatialmca.networks import slab_network, sphere_network


@pytest.fixture(scope="session")
def slab_model():
    return SlabModel()


@pytest.fixture(scope="session")
def sphere_model():
    return SphereModel()


@pytest.fixture(scope="session")
def slab_spec(slab_model):
    return slab_network(slab_model)


@pytest.fixture(scope="session")
def sphere_spec(sphere_model):
    return sphere_network(sphere_model)


@pytest.fixture(scope="session")
def slab_mesh(slab_spec):
    return build_mesh(slab_spec.geometry, 64)


@pytest.fixture(scope="session")
def sphere_mesh(sphere_spec):
    return build_mesh(sphere_spec.geometry, 256)
