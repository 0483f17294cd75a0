"""
Benchmark Library
=================

Built-in team problems with known answers. Each profile is a complete
config fragment (problem family + parameters, information pattern, policy
class) plus the name of the oracle that certifies it.
"""

import copy
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np

from benchmarks.oracles import gaussian_one_step, radner_coefficients, riccati_solution
from model.families import discrete_affine_spec, linear_quadratic_spec, matrix_param
from model.problem_spec import DiscreteTeamSpec, ProblemSpec

FAMILIES = {
    'linear-quadratic': linear_quadratic_spec,
    'discrete-affine': discrete_affine_spec,
}

RADNER_COV = [[1.0, 0.6], [0.6, 1.0]]
RADNER_R = [[1.0, 0.25], [0.25, 0.5]]
RADNER_S = [[-0.5, 0.0], [0.0, -0.5]]
OWN_COORDINATE = [{"type": "pointwise", "coords": [0]}, {"type": "pointwise", "coords": [1]}]


@dataclass(frozen=True)
class BenchmarkProfile:
    """Catalog entry: problem, information pattern, policy class and oracle"""
    name: str
    description: str
    oracle: str
    family: str
    params: Dict
    info: Dict = field(default_factory=dict)
    policy: Dict = field(default_factory=dict)

    @property
    def is_discrete(self) -> bool:
        return self.family == 'discrete-affine'

    def catalog_entry(self) -> Dict:
        return {'name': self.name, 'description': self.description, 'oracle': self.oracle,
                'family': self.family}


BENCHMARKS = [
    BenchmarkProfile(
        name="lq-scalar",
        description="Scalar LQ regulator dx = u dt + dW, l = x^2 + u^2, phi = x^2 on [0, 1]; J* = 1, u* = -x",
        oracle="riccati",
        family="linear-quadratic",
        params={"A": [[0.0]], "B": 1.0, "sigma": 1.0, "Q": 1.0, "R": 1.0, "F": 1.0,
                "x0": [0.0], "horizon": 1.0, "action_bound": 5.0},
        info={"agents": [{"recall": "markov"}]},
        policy={"basis": "linear", "segments": 4, "init": 0.0},
    ),
    BenchmarkProfile(
        name="gaussian-one-step",
        description="x(1) = u(0) + w, phi = x^2, constant decision c; payoff c^2 + 1",
        oracle="closed-form",
        family="discrete-affine",
        params={"A": [[0.0]], "B": 1.0, "G": 1.0, "F": 1.0, "x0": [0.0], "horizon_steps": 1},
        info={"agents": [{"recall": "markov"}]},
        policy={"basis": "constant", "segments": 1, "init": 0.5},
    ),
    BenchmarkProfile(
        name="affine-two-step",
        description="Two-step scalar recursion affine in x(k), x(k-1) and u(k), quadratic costs, Gaussian x(0)",
        oracle="transition-quadrature",
        family="discrete-affine",
        params={"A": [[0.8]], "A_prev": [[0.3]], "B": 1.0, "c": [0.1], "G": 1.0, "Q": 1.0, "R": 0.5,
                "F": 1.0, "x0": [0.0], "x0_cov": [[1.0]], "horizon_steps": 2},
        info={"agents": [{"recall": "perfect"}]},
        policy={"basis": "affine", "segments": 2, "init": -0.3},
    ),
    BenchmarkProfile(
        name="radner-quadratic",
        description="Static two-agent quadratic team, x ~ N(0, [[1, .6], [.6, 1]]), agent i sees x_i",
        oracle="normal-equations",
        family="discrete-affine",
        params={"A": [[0.0, 0.0], [0.0, 0.0]], "B": 0.0, "G": 1.0, "R": RADNER_R, "S": RADNER_S,
                "x0": [0.0, 0.0], "x0_cov": RADNER_COV, "action_dims": [1, 1],
                "observations": OWN_COORDINATE, "horizon_steps": 1},
        info={"agents": [{"recall": "markov"}, {"recall": "markov"}]},
        policy={"basis": "linear", "segments": 1, "init": 0.0},
    ),
    BenchmarkProfile(
        name="radner-continuous",
        description="Radner team embedded in continuous time: f = 0, sigma = 0.01 I, same costs on [0, 1]",
        oracle="normal-equations",
        family="linear-quadratic",
        params={"A": [[0.0, 0.0], [0.0, 0.0]], "B": 0.0, "sigma": 0.01, "R": RADNER_R, "S": RADNER_S,
                "x0": [0.0, 0.0], "x0_cov": RADNER_COV, "action_dims": [1, 1],
                "observations": OWN_COORDINATE, "horizon": 1.0},
        info={"agents": [{"recall": "markov"}, {"recall": "markov"}]},
        policy={"basis": "linear", "segments": 1, "init": 0.0},
    ),
    BenchmarkProfile(
        name="delayed-sharing-lq",
        description="Two coupled scalar LQ agents sharing observations with a one-step delay",
        oracle="riccati-lower-bound",
        family="linear-quadratic",
        params={"A": [[-0.5, 0.4], [0.4, -0.5]], "B": 1.0, "sigma": 0.5, "Q": 1.0, "R": 1.0, "F": 1.0,
                "x0": [0.0, 0.0], "action_dims": [1, 1], "observations": OWN_COORDINATE,
                "horizon": 1.0, "action_bound": 5.0},
        info={"agents": [
            {"recall": "window", "window": 1, "signals": [{"from": 1, "delay": 1}]},
            {"recall": "window", "window": 1, "signals": [{"from": 0, "delay": 1}]},
        ]},
        policy={"basis": "affine", "segments": 2, "init": 0.0},
    ),
]

_BY_NAME = {profile.name: profile for profile in BENCHMARKS}


def list_benchmarks() -> List[Dict]:
    """Names, descriptions and oracle references of the built-in problems"""
    return [profile.catalog_entry() for profile in BENCHMARKS]


def get_benchmark(name: str) -> BenchmarkProfile:
    if name not in _BY_NAME:
        raise ValueError(f"unknown benchmark '{name}' (available: {', '.join(sorted(_BY_NAME))})")
    return _BY_NAME[name]


def merged_params(name: str, overrides: Optional[Dict] = None) -> Dict:
    params = copy.deepcopy(get_benchmark(name).params)
    params.update(copy.deepcopy(overrides or {}))
    return params


def build_problem(family: str, params: Dict, name: Optional[str] = None) -> Union[ProblemSpec, DiscreteTeamSpec]:
    if family not in FAMILIES:
        raise ValueError(f"unknown problem family '{family}' (available: {', '.join(sorted(FAMILIES))})")
    return FAMILIES[family](params, name or family)


def build_benchmark(name: str, overrides: Optional[Dict] = None) -> Union[ProblemSpec, DiscreteTeamSpec]:
    profile = get_benchmark(name)
    return build_problem(profile.family, merged_params(name, overrides), name)


def oracle_values(name: str, overrides: Optional[Dict] = None) -> Dict:
    """Closed-form or ODE reference numbers for a benchmark; {} when the oracle needs a policy"""
    profile = get_benchmark(name)
    params = merged_params(name, overrides)
    if profile.oracle in ('riccati', 'riccati-lower-bound'):
        A = np.atleast_2d(np.asarray(params["A"], dtype=float))
        n = A.shape[0]
        total = sum(params.get("action_dims", [1]))
        solution = riccati_solution(A, matrix_param(params, "B", n, total, np.eye(n, total)),
                                    matrix_param(params, "Q", n, n), matrix_param(params, "R", total, total),
                                    matrix_param(params, "F", n, n), matrix_param(params, "sigma", n, n, np.eye(n)),
                                    float(params["horizon"]))
        horizon = float(params["horizon"])
        return {
            'optimal_cost': solution.optimal_cost(np.asarray(params.get("x0", np.zeros(n)), dtype=float)),
            'gains': {f"{t:g}": solution.gain(t).tolist() for t in (0.25 * horizon, 0.5 * horizon, 0.75 * horizon)},
        }
    if profile.oracle == 'normal-equations':
        return {'coefficients': radner_coefficients(params["R"], params["S"], params["x0_cov"]).tolist()}
    if profile.oracle == 'closed-form':
        c = float(profile.policy.get("init", 0.0))
        g = float(np.asarray(params.get("G", 1.0), dtype=float).ravel()[0])
        return {'payoff': gaussian_one_step(c, g)}
    return {}
