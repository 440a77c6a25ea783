import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_flow_field(rng, shape=(16, 16), venc=1.0):
    from mrnlab.flow_model import FlowField

    return FlowField(
        rho=rng.random(shape) + 0.05,
        theta0=rng.uniform(-np.pi, np.pi * 0.999, shape),
        v=rng.uniform(-0.9 * venc, 0.9 * venc, (3,) + shape),
        venc=venc,
    )
