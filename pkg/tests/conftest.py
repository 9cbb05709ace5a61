import math

import pytest

from interaction import (
    ExplicitFamily,
    ExponentialKernel,
    InteractionModel,
    NearestNeighborKernel,
    PowerLawKernel,
)

# closed forms for the d=1 kernel e^{-|r|}
EXP_TOTAL = 2 * math.exp(-1) / (1 - math.exp(-1))
EXP_TAIL_2 = 2 * math.exp(-3) / (1 - math.exp(-1))


@pytest.fixture
def nn_model():
    return InteractionModel(NearestNeighborKernel(1, 1.0), 0.05)


@pytest.fixture
def nn_hot():
    return InteractionModel(NearestNeighborKernel(1, 1.0), 0.3)


@pytest.fixture
def free_model():
    return InteractionModel(NearestNeighborKernel(1, 1.0), 0.0)


@pytest.fixture
def exp_model():
    return InteractionModel(ExponentialKernel(1, 1.0, 1.0), 0.05)


@pytest.fixture
def plaquette_model():
    terms = [
        ([(0, 0), (1, 0)], 1.0),
        ([(0, 0), (0, 1)], 1.0),
        ([(0, 0), (1, 0), (0, 1)], 0.5),
    ]
    return InteractionModel(ExplicitFamily(2, terms, translate=True), 0.01)


@pytest.fixture
def power_model():
    return InteractionModel(PowerLawKernel(1, 1.0, 5.0), 0.01)


@pytest.fixture
def reference_models(nn_model, exp_model, plaquette_model):
    return {"nn": nn_model, "exp": exp_model, "plaquette": plaquette_model}


@pytest.fixture
def gapped_model():
    # only sets of escape radius 2, so the first shell is empty
    return InteractionModel(ExplicitFamily(1, [([(0,), (2,)], 1.0)], translate=True), 0.05)
