import numpy as np
import pytest

from levelset_sampler import make_ellipse, make_linear, make_sphere

LINEAR_A = np.array([[2.0, 0.5, 0.3], [0.5, 1.5, 0.2], [0.3, 0.2, 1.0]])


@pytest.fixture(scope="session")
def ellipse():
    return make_ellipse(3.0)


@pytest.fixture(scope="session")
def sphere_id():
    return make_sphere(3, precond=False)


@pytest.fixture(scope="session")
def sphere_precond():
    return make_sphere(3, precond=True, eps=0.01)


@pytest.fixture(scope="session")
def linear():
    model, field, reduced = make_linear(3, 1, LINEAR_A)
    return model, field, reduced
