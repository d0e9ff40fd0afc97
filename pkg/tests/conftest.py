import numpy as np
import pytest

from sarisk.distributions import GaussianStd
from sarisk.loss_models import (GrowthBound, LossModel, basket_model,
                                nig_call_model, psi_identity, short_put_model,
                                spark_spread_model)


@pytest.fixture(scope="session")
def ex1():
    return short_put_model()


@pytest.fixture(scope="session")
def ex2():
    return basket_model()


@pytest.fixture(scope="session")
def ex3():
    return spark_spread_model()


@pytest.fixture(scope="session")
def ex4():
    return nig_call_model()


def constant_model(value: float) -> LossModel:
    """Degenerate loss phi == value on a scalar normal input."""
    return LossModel(
        name="const", dim=1, distribution=GaussianStd(1),
        loss=lambda x: value,
        loss_batch=lambda xs: np.full(np.asarray(xs).reshape(-1).shape[0], float(value)),
        sample_base=lambda rng: rng.standard_normal(),
        sample_base_batch=lambda rng, n: rng.standard_normal(n),
        psi=psi_identity, growth=GrowthBound(g=lambda x: abs(value)))
