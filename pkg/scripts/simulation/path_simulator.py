"""
Path Simulation Module
======================

Monte Carlo ensembles of states, noise increments and observations:

- reference measure: dx = sigma(t,x) dW (no control enters the dynamics)
- original measure: dx = f(t,x,u) dt + sigma(t,x) dW^u with u from a PolicyProfile
- discrete time: x(k+1) ~ N(0, GG*) (reference) or f(k, history, u(k)) + w(k+1)

Noise is drawn per fixed block of paths from counter-based generators keyed
by (seed, block, stream), x(0) first, so every array is a function of
(seed, P, grid) only.
"""

import logging
from dataclasses import dataclass, asdict, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from information.info_structure import FeatureMap
from model.problem_spec import DiscreteTeamSpec, TimeGrid
from model.validation import SpecLike, project_actions, unwrap_spec
from utils.exceptions import PolicyNotMeasurable
from utils.helpers import block_generator, map_blocks, standard_error

logger = logging.getLogger(__name__)

REFERENCE = 'reference'
ORIGINAL = 'original'
MEASURES = (REFERENCE, ORIGINAL)

ActionFn = Callable[[int, Sequence[np.ndarray], np.ndarray], np.ndarray]


def _frozen(array: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if array is None:
        return None
    array = np.ascontiguousarray(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Simulated ensemble; arrays are read-only after construction"""
    states: np.ndarray
    noise_increments: np.ndarray
    observations: Tuple[np.ndarray, ...]
    log_likelihood: np.ndarray
    measure_tag: str
    seed: int
    grid: TimeGrid
    controls: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.measure_tag not in MEASURES:
            raise ValueError(f"measure_tag must be one of {MEASURES}")
        object.__setattr__(self, 'states', _frozen(self.states))
        object.__setattr__(self, 'noise_increments', _frozen(self.noise_increments))
        object.__setattr__(self, 'observations', tuple(_frozen(z) for z in self.observations))
        object.__setattr__(self, 'log_likelihood', _frozen(self.log_likelihood))
        object.__setattr__(self, 'controls', _frozen(self.controls))

    @property
    def num_paths(self) -> int:
        return self.states.shape[0]

    @property
    def num_steps(self) -> int:
        return self.states.shape[1] - 1

    @property
    def state_dim(self) -> int:
        return self.states.shape[2]

    @property
    def likelihood(self) -> np.ndarray:
        return np.exp(self.log_likelihood)

    def observation_prefix(self, step: int) -> Tuple[np.ndarray, ...]:
        """Per-agent observations up to and including `step`"""
        return tuple(z[:, :step + 1] for z in self.observations)


def _draw_noise(seed: int, num_paths: int, num_steps: int, initial_law, stream: int):
    """x(0) samples and standard-normal increments, block by block"""
    n = initial_law.dim

    def block(index: int, sl: slice) -> np.ndarray:
        rng = block_generator(seed, index, stream)
        size = sl.stop - sl.start
        x0 = initial_law.sample(rng, size)
        z = rng.standard_normal((size, num_steps, n))
        return np.concatenate([x0[:, None, :], z], axis=1)

    packed = map_blocks(block, num_paths)
    return packed[:, 0, :], packed[:, 1:, :]


def _observation_at(spec, step: int, times: np.ndarray, states: np.ndarray) -> Tuple[np.ndarray, ...]:
    history = states[:, :step + 1]
    return tuple(np.asarray(h(step, times, history), dtype=float).reshape(states.shape[0], h.dim)
                 for h in spec.observations)


def observe_states(spec, states: np.ndarray, times: np.ndarray) -> Tuple[np.ndarray, ...]:
    num_paths, length = states.shape[:2]
    observations = [np.empty((num_paths, length, h.dim)) for h in spec.observations]
    for k in range(length):
        for z, value in zip(observations, _observation_at(spec, k, times, states)):
            z[:, k] = value
    return tuple(observations)


def check_policy_binding(policy, info: FeatureMap, num_steps: int) -> None:
    if policy.feature_map != info:
        raise PolicyNotMeasurable("policy was built on a different feature map")
    if info.num_steps != num_steps:
        raise PolicyNotMeasurable(f"feature map covers {info.num_steps} steps, grid has {num_steps}")


def _diffuse(spec, t: float, x: np.ndarray, dw: np.ndarray) -> np.ndarray:
    sigma = np.asarray(spec.diffusion(t, x), dtype=float).reshape(x.shape[0], x.shape[1], x.shape[1])
    return np.einsum('pij,pj->pi', sigma, dw)


def _run_continuous(spec, grid: TimeGrid, x0: np.ndarray, dw: np.ndarray,
                    action_fn: Optional[ActionFn]):
    """Euler-Maruyama on given increments; action_fn None means driftless"""
    num_paths, num_steps, n = dw.shape
    times = grid.times
    dt = grid.step
    states = np.empty((num_paths, num_steps + 1, n))
    states[:, 0] = x0
    observations = [np.empty((num_paths, num_steps + 1, h.dim)) for h in spec.observations]
    controls = None if action_fn is None else np.empty((num_paths, num_steps, spec.total_action_dim))
    for k in range(num_steps):
        for z, value in zip(observations, _observation_at(spec, k, times, states)):
            z[:, k] = value
        x = states[:, k]
        step = _diffuse(spec, times[k], x, dw[:, k])
        if action_fn is not None:
            u = action_fn(k, tuple(z[:, :k + 1] for z in observations), x)
            controls[:, k] = u
            step = step + np.asarray(spec.drift(times[k], x, u), dtype=float).reshape(x.shape) * dt
        states[:, k + 1] = x + step
    for z, value in zip(observations, _observation_at(spec, num_steps, times, states)):
        z[:, num_steps] = value
    return states, tuple(observations), controls


def _policy_actions(policy) -> ActionFn:
    return lambda k, observations, x: policy.actions(k, observations)


def simulate_reference(spec: SpecLike, grid: TimeGrid, num_paths: int, seed: int,
                       stream: int = 0) -> PathBundle:
    """Driftless ensemble x(k+1) = x(k) + sigma(t_k, x(k)) dW(k)"""
    spec = unwrap_spec(spec)
    if num_paths < 1:
        raise ValueError("num_paths must be >= 1")
    x0, z = _draw_noise(seed, num_paths, grid.num_steps, spec.initial_law, stream)
    dw = z * np.sqrt(grid.step)
    states, observations, _ = _run_continuous(spec, grid, x0, dw, None)
    logger.debug("reference ensemble: P=%d, M=%d, seed=%d", num_paths, grid.num_steps, seed)
    return PathBundle(states, dw, observations, np.zeros((num_paths, grid.num_steps + 1)),
                      REFERENCE, int(seed), grid)


def simulate_controlled(spec: SpecLike, policy, info: FeatureMap, grid: TimeGrid,
                        num_paths: int, seed: int, stream: int = 0) -> PathBundle:
    """Ensemble under the controlled dynamics with u(k) = policy(features(k))"""
    spec = unwrap_spec(spec)
    if num_paths < 1:
        raise ValueError("num_paths must be >= 1")
    check_policy_binding(policy, info, grid.num_steps)
    x0, z = _draw_noise(seed, num_paths, grid.num_steps, spec.initial_law, stream)
    dw = z * np.sqrt(grid.step)
    states, observations, controls = _run_continuous(spec, grid, x0, dw, _policy_actions(policy))
    logger.debug("controlled ensemble: P=%d, M=%d, seed=%d", num_paths, grid.num_steps, seed)
    return PathBundle(states, dw, observations, np.zeros((num_paths, grid.num_steps + 1)),
                      ORIGINAL, int(seed), grid, controls)


def observe(spec, bundle: PathBundle) -> PathBundle:
    """Recompute every agent's observation path from the stored states"""
    spec = unwrap_spec(spec)
    return replace(bundle, observations=observe_states(spec, bundle.states, bundle.grid.times))


def replay_controls(policy, bundle: PathBundle) -> np.ndarray:
    """(P, M, D) actions recomputed from the stored observations"""
    return np.stack([policy.actions(k, bundle.observation_prefix(k)) for k in range(bundle.num_steps)], axis=1)


def run_discrete(dspec: DiscreteTeamSpec, policy, x0: np.ndarray, xi: np.ndarray, measure: str):
    """Exact discrete recursion on given standard-normal innovations xi (P, T, n)"""
    num_paths, horizon, n = xi.shape
    times = dspec.grid.times
    states = np.empty((num_paths, horizon + 1, n))
    states[:, 0] = x0
    noise = np.empty_like(xi)
    observations = [np.empty((num_paths, horizon + 1, h.dim)) for h in dspec.observations]
    controls = None if policy is None else np.empty((num_paths, horizon, dspec.total_action_dim))
    for k in range(horizon):
        for z, value in zip(observations, _observation_at(dspec, k, times, states)):
            z[:, k] = value
        noise[:, k] = xi[:, k] @ dspec.noise_cholesky(k).T
        u = None
        if policy is not None:
            u = policy.actions(k, tuple(z[:, :k + 1] for z in observations))
            controls[:, k] = u
        if measure == ORIGINAL:
            if u is None:
                raise ValueError("original-measure simulation needs a policy")
            mean = np.asarray(dspec.drift_maps(k, states[:, :k + 1], u), dtype=float).reshape(num_paths, n)
            states[:, k + 1] = mean + noise[:, k]
        else:
            states[:, k + 1] = noise[:, k]
    for z, value in zip(observations, _observation_at(dspec, horizon, times, states)):
        z[:, horizon] = value
    return states, noise, tuple(observations), controls


def simulate_discrete(dspec: DiscreteTeamSpec, policy, info: Optional[FeatureMap], num_paths: int,
                      seed: int, measure: str = ORIGINAL, stream: int = 0) -> PathBundle:
    """Exact sampling of the discrete-time team model under either measure"""
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}")
    if policy is not None:
        check_policy_binding(policy, info, dspec.horizon_steps)
    x0, xi = _draw_noise(seed, num_paths, dspec.horizon_steps, dspec.initial_law, stream)
    states, noise, observations, controls = run_discrete(dspec, policy, x0, xi, measure)
    return PathBundle(states, noise, observations, np.zeros((num_paths, dspec.horizon_steps + 1)),
                      measure, int(seed), dspec.grid, controls)


@dataclass(frozen=True)
class StepHalvingReport:
    num_steps: int
    coarse_mean: float
    fine_mean: float
    difference: float
    difference_se: float

    def to_dict(self) -> dict:
        return asdict(self)


def euler_step_halving(spec: SpecLike, grid: TimeGrid, num_paths: int, seed: int,
                       feedback: Optional[Callable[[float, np.ndarray], np.ndarray]] = None) -> StepHalvingReport:
    """E[phi(x_T)] on grid M and 2M with coupled Brownian increments

    feedback(t, x) -> (P, D) is a state-feedback law usable on both grids;
    the default holds every action at its box midpoint.
    """
    spec = unwrap_spec(spec)
    fine_grid = TimeGrid(2 * grid.num_steps, grid.horizon)
    x0, z = _draw_noise(seed, num_paths, fine_grid.num_steps, spec.initial_law, 0)
    fine_dw = z * np.sqrt(fine_grid.step)
    coarse_dw = fine_dw[:, 0::2] + fine_dw[:, 1::2]

    if feedback is None:
        midpoint = 0.5 * (spec.lower_bounds + spec.upper_bounds)
        feedback = lambda t, x: np.broadcast_to(midpoint, (x.shape[0], midpoint.shape[0]))

    def action_fn(on_grid):
        times = on_grid.times
        return lambda k, observations, x: project_actions(spec, feedback(times[k], x))

    coarse, _, _ = _run_continuous(spec, grid, x0, coarse_dw, action_fn(grid))
    fine, _, _ = _run_continuous(spec, fine_grid, x0, fine_dw, action_fn(fine_grid))
    coarse_phi = np.asarray(spec.terminal_cost(coarse[:, -1]), dtype=float)
    fine_phi = np.asarray(spec.terminal_cost(fine[:, -1]), dtype=float)
    report = StepHalvingReport(
        num_steps=grid.num_steps,
        coarse_mean=float(np.mean(coarse_phi)),
        fine_mean=float(np.mean(fine_phi)),
        difference=float(np.mean(coarse_phi - fine_phi)),
        difference_se=standard_error(coarse_phi - fine_phi),
    )
    logger.info("step halving M=%d: E[phi] %.6g -> %.6g", grid.num_steps, report.coarse_mean, report.fine_mean)
    return report


@dataclass(frozen=True)
class MarginalKSReport:
    step: int
    statistics: Tuple[float, ...]
    p_values: Tuple[float, ...]
    alpha: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def reference_marginal_ks(bundle: PathBundle, dspec: DiscreteTeamSpec, step: int,
                          alpha: float = 0.01) -> MarginalKSReport:
    """Kolmogorov-Smirnov test of x(step) coordinates against N(0, (GG*)_jj)"""
    if bundle.measure_tag != REFERENCE:
        raise ValueError("marginal test applies to reference-measure bundles")
    if not 1 <= step <= bundle.num_steps:
        raise ValueError("step must lie in 1..T")
    cov = dspec.noise_covariance(step - 1)
    statistics, p_values = [], []
    for j in range(bundle.state_dim):
        result = stats.kstest(bundle.states[:, step, j], 'norm', args=(0.0, np.sqrt(cov[j, j])))
        statistics.append(float(result.statistic))
        p_values.append(float(result.pvalue))
    return MarginalKSReport(step, tuple(statistics), tuple(p_values), alpha, min(p_values) > alpha)
