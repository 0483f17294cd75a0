"""
Shared fixtures: the scalar LQ toy (dx = u dt + dW, l = x^2 + u^2, phi = x^2
on [0, 1]), its grids and feature maps, and factories for small custom specs
and policies.
"""
import copy

import numpy as np
import pytest

from information.info_structure import InformationStructure, compile_information
from model.families import linear_quadratic_spec
from model.observations import PointwiseObservation
from model.problem_spec import InitialLaw, ProblemSpec, TimeGrid
from optimization.policy import FeatureBasis, PolicyProfile

TOY1_PARAMS = {
    "A": [[0.0]], "B": 1.0, "sigma": 1.0, "Q": 1.0, "R": 1.0, "F": 1.0,
    "x0": [0.0], "horizon": 1.0, "action_bound": 5.0,
}


def _zeros(x):
    return np.zeros(np.shape(x)[0])


@pytest.fixture
def toy1_params():
    return copy.deepcopy(TOY1_PARAMS)


@pytest.fixture
def toy1_spec():
    return linear_quadratic_spec(TOY1_PARAMS, "toy1")


@pytest.fixture
def grid50():
    return TimeGrid(50, 1.0)


@pytest.fixture
def grid20():
    return TimeGrid(20, 1.0)


@pytest.fixture
def markov_map():
    """Factory: markov feature map of a one-agent spec on a grid"""
    def build(spec, grid):
        return compile_information(InformationStructure.markov(spec.num_agents), grid, spec.obs_dims)
    return build


@pytest.fixture
def make_policy():
    """Factory: profile with one basis kind and constant initial weights"""
    def build(spec, fm, kind="linear", init=0.0, segments=1):
        return PolicyProfile.build(spec, fm, FeatureBasis(kind), segments=segments, init=init)
    return build


@pytest.fixture
def make_scalar_spec():
    """Factory: one-agent scalar ProblemSpec from plain callables"""
    def build(drift=None, running=None, terminal=None, sigma=1.0, x0=0.0, bound=5.0, horizon=1.0):
        drift = drift or (lambda t, x, u: u)
        running = running or (lambda t, x, u: _zeros(x))
        terminal = terminal or _zeros
        return ProblemSpec(
            state_dim=1,
            action_dims=(1,),
            action_boxes=(np.array([[-bound, bound]]),),
            drift=drift,
            diffusion=lambda t, x: np.full((np.shape(x)[0], 1, 1), float(sigma)),
            running_cost=running,
            terminal_cost=terminal,
            observations=(PointwiseObservation((0,)),),
            initial_law=InitialLaw(np.array([float(x0)])),
            horizon=horizon,
            name="scalar-test",
        )
    return build
