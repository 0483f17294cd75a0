"""
Likelihood Ratio Module
=======================

Radon-Nikodym derivative of the original measure with respect to the
reference measure, accumulated in log space:

- continuous (exponential increments on the grid):
  log L(k+1) = log L(k) + b.sigma^-1 dx - |b|^2 dt / 2,  b = sigma^-1 f(t_k, x_k, u_k)
- discrete (product of Gaussian density ratios):
  log L(k+1) = log L(k) + log lambda(x(k+1) - f(k, ., u(k))) - log lambda(x(k+1))
"""

import logging
from dataclasses import dataclass, asdict, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, stats

from information.info_structure import FeatureMap
from model.problem_spec import DiscreteTeamSpec
from model.validation import SpecLike, sigma_inv_drift, solve_diffusion, unwrap_spec
from simulation.path_simulator import REFERENCE, PathBundle, check_policy_binding, replay_controls
from utils.helpers import effective_sample_size, standard_error, time_to_index

logger = logging.getLogger(__name__)

ESS_WARNING_FRACTION = 0.1


def log_likelihood_from_controls(spec: SpecLike, bundle: PathBundle, controls: np.ndarray) -> np.ndarray:
    """(P, M+1) log-likelihood of the given action process on a reference bundle"""
    spec = unwrap_spec(spec)
    times, dt = bundle.grid.times, bundle.grid.step
    increments = np.zeros((bundle.num_paths, bundle.num_steps))
    for k in range(bundle.num_steps):
        x = bundle.states[:, k]
        b = sigma_inv_drift(spec, times[k], x, controls[:, k])
        dw = solve_diffusion(spec, times[k], x, bundle.states[:, k + 1] - x)
        increments[:, k] = np.sum(b * dw, axis=1) - 0.5 * np.sum(b * b, axis=1) * dt
    log_lambda = np.zeros((bundle.num_paths, bundle.num_steps + 1))
    np.cumsum(increments, axis=1, out=log_lambda[:, 1:])
    return log_lambda


def accumulate_likelihood(bundle: PathBundle, policy, info: FeatureMap, spec: SpecLike) -> PathBundle:
    """Fill log_likelihood (and controls) of a reference bundle for `policy`"""
    if bundle.measure_tag != REFERENCE:
        raise ValueError("likelihood ratios are accumulated on reference-measure bundles")
    check_policy_binding(policy, info, bundle.num_steps)
    controls = replay_controls(policy, bundle)
    return replace(bundle, log_likelihood=log_likelihood_from_controls(spec, bundle, controls),
                   controls=controls)


def discrete_log_ratio_steps(dspec: DiscreteTeamSpec, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
    num_paths, length, n = states.shape
    steps = np.empty((num_paths, length - 1))
    for k in range(length - 1):
        chol = dspec.noise_cholesky(k)
        mean = np.asarray(dspec.drift_maps(k, states[:, :k + 1], controls[:, k]), dtype=float).reshape(num_paths, n)
        shifted = linalg.solve_triangular(chol, (states[:, k + 1] - mean).T, lower=True)
        plain = linalg.solve_triangular(chol, states[:, k + 1].T, lower=True)
        steps[:, k] = 0.5 * (np.sum(plain ** 2, axis=0) - np.sum(shifted ** 2, axis=0))
    return steps


def discrete_likelihood(dspec: DiscreteTeamSpec, bundle: PathBundle, policy, info: FeatureMap) -> PathBundle:
    """Exact discrete-time likelihood ratio of a reference bundle"""
    if bundle.measure_tag != REFERENCE:
        raise ValueError("likelihood ratios are accumulated on reference-measure bundles")
    check_policy_binding(policy, info, bundle.num_steps)
    controls = replay_controls(policy, bundle)
    log_lambda = np.zeros((bundle.num_paths, bundle.num_steps + 1))
    np.cumsum(discrete_log_ratio_steps(dspec, bundle.states, controls), axis=1, out=log_lambda[:, 1:])
    return replace(bundle, log_likelihood=log_lambda, controls=controls)


def discrete_log_densities(dspec: DiscreteTeamSpec, bundle: PathBundle, policy) -> Tuple[np.ndarray, np.ndarray]:
    """Per-path log densities of x(1..T) under the reference and the original transitions"""
    controls = replay_controls(policy, bundle)
    states = bundle.states
    num_paths, length, n = states.shape
    reference = np.zeros(num_paths)
    original = np.zeros(num_paths)
    for k in range(length - 1):
        law = stats.multivariate_normal(mean=np.zeros(n), cov=dspec.noise_covariance(k))
        mean = np.asarray(dspec.drift_maps(k, states[:, :k + 1], controls[:, k]), dtype=float).reshape(num_paths, n)
        reference += np.atleast_1d(law.logpdf(states[:, k + 1]))
        original += np.atleast_1d(law.logpdf(states[:, k + 1] - mean))
    return reference, original


def inverse_likelihood(bundle: PathBundle) -> np.ndarray:
    """rho = 1 / Lambda, path by path"""
    return np.exp(-bundle.log_likelihood)


@dataclass(frozen=True)
class CheckpointStat:
    time: float
    step: int
    mean: float
    standard_error: float
    ess: float
    passed: bool


@dataclass(frozen=True)
class LikelihoodDiagnostics:
    checkpoints: Tuple[CheckpointStat, ...]
    ess: float
    max_log_likelihood: float
    num_paths: int
    ess_warning: bool

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checkpoints)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            't': [c.time for c in self.checkpoints],
            'mean': [c.mean for c in self.checkpoints],
            'se': [c.standard_error for c in self.checkpoints],
            'ess': [c.ess for c in self.checkpoints],
            'pass': [c.passed for c in self.checkpoints],
        })

    def to_dict(self) -> dict:
        data = asdict(self)
        data['passed'] = self.passed
        return data


def martingale_check(bundle: PathBundle, checkpoints: Optional[Sequence[float]] = None,
                     z_score: float = 3.0) -> LikelihoodDiagnostics:
    """Mean of Lambda(t) against 1 at each checkpoint time"""
    times = bundle.grid.times
    if checkpoints is None:
        checkpoints = [times[-1]]
    stats_rows: List[CheckpointStat] = []
    for t in checkpoints:
        k = time_to_index(times, t)
        weights = np.exp(bundle.log_likelihood[:, k])
        mean = float(np.mean(weights))
        se = standard_error(weights)
        stats_rows.append(CheckpointStat(float(times[k]), k, mean, se, effective_sample_size(weights),
                                         abs(mean - 1.0) <= z_score * se + 1e-12))

    terminal_ess = effective_sample_size(np.exp(bundle.log_likelihood[:, -1]))
    warn = terminal_ess < ESS_WARNING_FRACTION * bundle.num_paths
    if warn:
        logger.warning("likelihood weights degenerate: ESS %.1f < %.0f%% of %d paths",
                       terminal_ess, 100 * ESS_WARNING_FRACTION, bundle.num_paths)
    return LikelihoodDiagnostics(
        checkpoints=tuple(stats_rows),
        ess=terminal_ess,
        max_log_likelihood=float(np.max(bundle.log_likelihood)),
        num_paths=bundle.num_paths,
        ess_warning=warn,
    )
