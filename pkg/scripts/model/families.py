"""
Built-in Model Families
=======================

Parametric constructors used by the config loader and the benchmark library:

- ``linear-quadratic``: f = A x + B u + c, constant sigma,
  l = x'Qx + u'Ru + 2 u'Sx, phi = x'Fx
- ``discrete-affine``: x(k+1) = A x(k) + A_prev x(k-1) + B u(k) + c + G xi(k+1),
  same costs
"""

from typing import Dict, Sequence

import numpy as np

from model.observations import PointwiseObservation, observation_from_config
from model.problem_spec import DiscreteTeamSpec, InitialLaw, ProblemSpec


def matrix_param(params: Dict, key: str, rows: int, cols: int, default: np.ndarray = None) -> np.ndarray:
    """Matrix parameter; a scalar means that multiple of the (rectangular) identity"""
    if key not in params:
        return np.zeros((rows, cols)) if default is None else default
    value = np.asarray(params[key], dtype=float)
    if value.ndim == 0:
        return float(value) * np.eye(rows, cols)
    return value.reshape(rows, cols)


def _quadratic_form(x: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    return np.einsum('pi,ij,pj->p', x, matrix, x)


def _observations(params: Dict, num_agents: int, state_dim: int):
    blocks = params.get("observations")
    if blocks is None:
        return tuple(PointwiseObservation(tuple(range(state_dim))) for _ in range(num_agents))
    if len(blocks) != num_agents:
        raise ValueError("one observation block per agent is required")
    return tuple(observation_from_config(block) for block in blocks)


def _initial_law(params: Dict, state_dim: int) -> InitialLaw:
    mean = np.asarray(params.get("x0", np.zeros(state_dim)), dtype=float).reshape(state_dim)
    cov = params.get("x0_cov")
    if cov is not None:
        cov = matrix_param({"cov": cov}, "cov", state_dim, state_dim)
    return InitialLaw(mean=mean, cov=cov)


def _quadratic_costs(params: Dict, n: int, total: int):
    Q = matrix_param(params, "Q", n, n)
    R = matrix_param(params, "R", total, total)
    S = matrix_param(params, "S", total, n)
    F = matrix_param(params, "F", n, n)

    def running_cost(t, x, u):
        return _quadratic_form(x, Q) + _quadratic_form(u, R) + 2.0 * np.einsum('pi,ij,pj->p', u, S, x)

    def terminal_cost(x):
        return _quadratic_form(np.asarray(x, dtype=float).reshape(-1, n), F)

    return running_cost, terminal_cost


def _boxes(params: Dict, action_dims: Sequence[int]):
    boxes = params.get("action_boxes")
    if boxes is None:
        bound = float(params.get("action_bound", 10.0))
        return tuple(np.tile([-bound, bound], (d, 1)) for d in action_dims)
    return tuple(np.asarray(box, dtype=float).reshape(d, 2) for box, d in zip(boxes, action_dims))


def linear_quadratic_spec(params: Dict, name: str = "linear-quadratic") -> ProblemSpec:
    """Continuous-time linear drift, constant diffusion, quadratic costs"""
    A = np.atleast_2d(np.asarray(params.get("A", [[0.0]]), dtype=float))
    n = A.shape[0]
    action_dims = tuple(int(d) for d in params.get("action_dims", [1]))
    total = sum(action_dims)
    B = matrix_param(params, "B", n, total, default=np.eye(n, total))
    c = np.asarray(params.get("c", np.zeros(n)), dtype=float).reshape(n)
    sigma = matrix_param(params, "sigma", n, n, default=np.eye(n))
    running_cost, terminal_cost = _quadratic_costs(params, n, total)

    def drift(t, x, u):
        return x @ A.T + u @ B.T + c

    def diffusion(t, x):
        return np.broadcast_to(sigma, (np.shape(x)[0], n, n))

    def drift_jacobian(t, x, u):
        return np.broadcast_to(B, (np.shape(x)[0], n, total))

    return ProblemSpec(
        state_dim=n,
        action_dims=action_dims,
        action_boxes=_boxes(params, action_dims),
        drift=drift,
        diffusion=diffusion,
        running_cost=running_cost,
        terminal_cost=terminal_cost,
        observations=_observations(params, len(action_dims), n),
        initial_law=_initial_law(params, n),
        horizon=float(params["horizon"]),
        drift_bound=params.get("drift_bound"),
        drift_jacobian=drift_jacobian,
        name=name,
    )


def discrete_affine_spec(params: Dict, name: str = "discrete-affine") -> DiscreteTeamSpec:
    """Discrete-time affine dynamics with Gaussian noise and quadratic costs"""
    A = np.atleast_2d(np.asarray(params.get("A", [[0.0]]), dtype=float))
    n = A.shape[0]
    action_dims = tuple(int(d) for d in params.get("action_dims", [1]))
    total = sum(action_dims)
    B = matrix_param(params, "B", n, total, default=np.eye(n, total))
    c = np.asarray(params.get("c", np.zeros(n)), dtype=float).reshape(n)
    G = matrix_param(params, "G", n, n, default=np.eye(n))
    A_prev = matrix_param(params, "A_prev", n, n)
    running_cost, terminal_cost = _quadratic_costs(params, n, total)

    def drift_maps(k, history, u):
        value = history[:, k, :] @ A.T + u @ B.T + c
        if k >= 1:
            value = value + history[:, k - 1, :] @ A_prev.T
        return value

    return DiscreteTeamSpec(
        horizon_steps=int(params["horizon_steps"]),
        state_dim=n,
        action_dims=action_dims,
        action_boxes=_boxes(params, action_dims),
        drift_maps=drift_maps,
        noise_cov_factor=G,
        observations=_observations(params, len(action_dims), n),
        initial_law=_initial_law(params, n),
        running_cost=lambda k, x, u: running_cost(float(k), x, u),
        terminal_cost=terminal_cost,
        name=name,
    )
