"""
Team Payoff Module
==================

Monte Carlo estimates of J(u) = E[sum_k l(t_k, x_k, u_k) dt + phi(x_M)]
either directly under the controlled measure or as a Lambda-weighted mean
over a reference ensemble, and the cross-measure equivalence test.
"""

import logging
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from information.info_structure import FeatureMap
from model.problem_spec import DiscreteTeamSpec, TimeGrid
from model.validation import SpecLike, unwrap_spec
from simulation.path_simulator import (
    ORIGINAL, REFERENCE, PathBundle, replay_controls, simulate_controlled, simulate_reference,
)
from girsanov.likelihood import accumulate_likelihood
from utils.helpers import standard_error

logger = logging.getLogger(__name__)

REFERENCE_WEIGHTED = 'reference-weighted'
ORIGINAL_DIRECT = 'original-direct'


@dataclass(frozen=True)
class PayoffEstimate:
    value: float
    standard_error: float
    measure_used: str
    num_paths: int

    def interval(self, z_score: float = 3.0):
        return self.value - z_score * self.standard_error, self.value + z_score * self.standard_error

    def to_dict(self) -> dict:
        return asdict(self)


def _estimate(samples: np.ndarray, measure_used: str) -> PayoffEstimate:
    return PayoffEstimate(float(np.mean(samples)), standard_error(samples), measure_used, int(samples.shape[0]))


def _controls(bundle: PathBundle, policy) -> np.ndarray:
    if bundle.controls is not None:
        return bundle.controls
    return replay_controls(policy, bundle)


def running_cost_matrix(spec, bundle: PathBundle, controls: np.ndarray) -> np.ndarray:
    """(P, M) running costs l(t_k, x_k, u_k) along the bundle"""
    times = bundle.grid.times
    return np.stack([
        np.asarray(spec.running_cost(times[k], bundle.states[:, k], controls[:, k]), dtype=float).reshape(-1)
        for k in range(bundle.num_steps)
    ], axis=1)


def terminal_costs(spec, bundle: PathBundle) -> np.ndarray:
    return np.asarray(spec.terminal_cost(bundle.states[:, -1]), dtype=float).reshape(-1)


def path_costs(spec: SpecLike, bundle: PathBundle, policy=None) -> np.ndarray:
    """Per-path realized cost sum_k l dt + phi under the bundle's own dynamics"""
    spec = unwrap_spec(spec)
    running = running_cost_matrix(spec, bundle, _controls(bundle, policy))
    return running.sum(axis=1) * bundle.grid.step + terminal_costs(spec, bundle)


def cost_to_go(spec: SpecLike, bundle: PathBundle, policy=None) -> np.ndarray:
    """(P, M+1) realized remaining cost from each step on"""
    spec = unwrap_spec(spec)
    running = running_cost_matrix(spec, bundle, _controls(bundle, policy)) * bundle.grid.step
    remaining = np.empty((bundle.num_paths, bundle.num_steps + 1))
    remaining[:, -1] = terminal_costs(spec, bundle)
    remaining[:, :-1] = np.cumsum(running[:, ::-1], axis=1)[:, ::-1] + remaining[:, -1:]
    return remaining


def payoff_reference(spec: SpecLike, bundle: PathBundle, policy=None) -> PayoffEstimate:
    """sum_k Lambda(t_k) l(t_k) dt + Lambda(T) phi(x_M), averaged over a reference bundle"""
    if bundle.measure_tag != REFERENCE:
        raise ValueError("payoff_reference needs a reference-measure bundle")
    spec = unwrap_spec(spec)
    weights = np.exp(bundle.log_likelihood)
    running = running_cost_matrix(spec, bundle, _controls(bundle, policy))
    samples = (np.sum(weights[:, :-1] * running, axis=1) * bundle.grid.step
               + weights[:, -1] * terminal_costs(spec, bundle))
    return _estimate(samples, REFERENCE_WEIGHTED)


def payoff_original(spec: SpecLike, bundle: PathBundle, policy=None) -> PayoffEstimate:
    """Direct mean of realized costs over a controlled bundle"""
    if bundle.measure_tag != ORIGINAL:
        raise ValueError("payoff_original needs an original-measure bundle")
    return _estimate(path_costs(spec, bundle, policy), ORIGINAL_DIRECT)


def _discrete_running(dspec: DiscreteTeamSpec, bundle: PathBundle, controls: np.ndarray) -> np.ndarray:
    return np.stack([
        np.asarray(dspec.running_cost(k, bundle.states[:, k], controls[:, k]), dtype=float).reshape(-1)
        for k in range(bundle.num_steps)
    ], axis=1)


def discrete_path_costs(dspec: DiscreteTeamSpec, bundle: PathBundle, policy=None) -> np.ndarray:
    """Per-path sum_k l(k, x(k), u(k)) + phi(x(T))"""
    running = _discrete_running(dspec, bundle, _controls(bundle, policy))
    return running.sum(axis=1) + np.asarray(dspec.terminal_cost(bundle.states[:, -1]), dtype=float).reshape(-1)


def discrete_payoff_reference(dspec: DiscreteTeamSpec, bundle: PathBundle, policy=None) -> PayoffEstimate:
    """Reference-bundle mean of Lambda(0,T) times the whole cost sum"""
    if bundle.measure_tag != REFERENCE:
        raise ValueError("discrete_payoff_reference needs a reference-measure bundle")
    samples = np.exp(bundle.log_likelihood[:, -1]) * discrete_path_costs(dspec, bundle, policy)
    return _estimate(samples, REFERENCE_WEIGHTED)


def discrete_payoff_original(dspec: DiscreteTeamSpec, bundle: PathBundle, policy=None) -> PayoffEstimate:
    if bundle.measure_tag != ORIGINAL:
        raise ValueError("discrete_payoff_original needs an original-measure bundle")
    return _estimate(discrete_path_costs(dspec, bundle, policy), ORIGINAL_DIRECT)


@dataclass(frozen=True)
class EquivalenceReport:
    reference: PayoffEstimate
    original: PayoffEstimate
    gap: float
    combined_se: float
    z_score: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def equivalence_test(spec: SpecLike, policy, info: FeatureMap, grid: TimeGrid, num_paths: int, seed: int,
                     controlled_seed: Optional[int] = None, original_policy=None,
                     z_score: float = 3.0) -> EquivalenceReport:
    """Compare the Lambda-weighted and the direct payoff estimates

    The controlled ensemble uses `controlled_seed` (default seed + 1), and
    `original_policy` (default `policy`) drives it.
    """
    controlled_seed = seed + 1 if controlled_seed is None else controlled_seed
    original_policy = policy if original_policy is None else original_policy

    reference_bundle = accumulate_likelihood(simulate_reference(spec, grid, num_paths, seed), policy, info, spec)
    reference = payoff_reference(spec, reference_bundle)
    controlled = simulate_controlled(spec, original_policy, original_policy.feature_map, grid,
                                     num_paths, controlled_seed)
    original = payoff_original(spec, controlled)

    gap = reference.value - original.value
    combined = float(np.hypot(reference.standard_error, original.standard_error))
    passed = abs(gap) <= z_score * combined + 1e-12
    logger.info("equivalence: reference %.6g +/- %.2g, original %.6g +/- %.2g, gap %.3g",
                reference.value, reference.standard_error, original.value, original.standard_error, gap)
    return EquivalenceReport(reference, original, float(gap), combined, z_score, passed)
