'''Shared fixtures: seeded generators and tiny models.'''

import numpy as np
import pytest

from fampe.engine.model import Dense, Flatten, ModelSpec, Network


@pytest.fixture
def generator():
    return np.random.default_rng(20240607)


@pytest.fixture
def linear_network():
    ''' Factory of ``flatten -> dense`` networks with the given weight (K x D) and bias.'''
    def build(weight, shape, bias=None):
        weight = np.asarray(weight, dtype=np.float64)
        classes, features = weight.shape
        spec = ModelSpec(tuple(shape), [Flatten(), Dense(features, classes)], classes)
        bias = np.zeros(classes) if bias is None else np.asarray(bias, dtype=np.float64)
        return Network(spec, [{}, {'weight': weight, 'bias': bias}])
    return build


class ConstantModel(object):
    ''' Logits that do not depend on the input; every gradient is zero.'''

    def __init__(self, logits):
        self._logits = np.asarray(logits, dtype=np.float64)

    def logits(self, x):
        return self._logits.copy()

    def input_gradient(self, x, y):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def logit_gradient(self, x, y):
        return np.zeros_like(np.asarray(x, dtype=np.float64))


@pytest.fixture
def constant_model():
    return ConstantModel
