"""
Value Process Module
====================

Agent-level value functions V^i(t) = E[Psi(t) | information of agent i at t]
and the sufficiency check for the optimal conditional payoff: an agent that
switches to any probe policy from a checkpoint on cannot improve its
conditional cost-to-go.
"""

import logging
from dataclasses import dataclass, asdict
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from adjoint.fbsde import AdjointPath
from girsanov.payoff import cost_to_go
from information.info_structure import FeatureMap, extract_features
from model.problem_spec import TimeGrid
from model.validation import SpecLike, unwrap_spec
from optimization.policy import PolicyProfile, SwitchedProfile
from optimization.regression import ConditionalExpectation, cond_expectation, gradient_basis
from simulation.path_simulator import PathBundle, simulate_controlled
from utils.helpers import standard_error, time_to_index

logger = logging.getLogger(__name__)

MIN_BIN_SIZE = 100
NUM_BINS = 10


@dataclass(frozen=True, eq=False)
class ValueEstimate:
    """Fitted V^i per grid step with the tower-property cross checks"""
    agent: int
    fits: Tuple[ConditionalExpectation, ...]
    values: np.ndarray
    tower_gaps: np.ndarray
    mean_gaps: np.ndarray

    def predict(self, step: int, features: np.ndarray) -> np.ndarray:
        return self.fits[step].predict(features)

    def to_frame(self, grid: TimeGrid) -> pd.DataFrame:
        return pd.DataFrame({
            't': grid.times,
            'mean_value': self.values.mean(axis=0),
            'tower_gap': self.tower_gaps,
            'mean_gap': self.mean_gaps,
        })


def value_process(agent: int, adjoint: AdjointPath, bundle: PathBundle, fm: FeatureMap, spec: SpecLike,
                  degree: int = 2) -> ValueEstimate:
    """Regress Psi(t_k) on agent-i features at every step, k = 0..M

    The realized cost-to-go is regressed on the same features as a check of
    the tower property; `mean_gaps` compares E[V] with E[Psi] in units of the
    standard error of Psi.
    """
    spec = unwrap_spec(spec)
    remaining = cost_to_go(spec, bundle)
    fits, values, tower, means = [], [], [], []
    for k in range(bundle.num_steps + 1):
        features = extract_features(fm, bundle.observation_prefix(k), agent, k)
        basis = gradient_basis(features.shape[1], degree)
        fit = cond_expectation(adjoint.psi[:, k], features, basis)
        realized = cond_expectation(remaining[:, k], features, basis)
        fits.append(fit)
        values.append(fit.fitted)
        tower.append(float(np.sqrt(np.mean((fit.fitted - realized.fitted) ** 2))))
        se = standard_error(adjoint.psi[:, k])
        gap = abs(float(np.mean(fit.fitted) - np.mean(adjoint.psi[:, k])))
        means.append(gap / se if se > 0 else gap)
    logger.info("agent %d value process: worst tower gap %.3g", agent, max(tower))
    return ValueEstimate(agent, tuple(fits), np.stack(values, axis=1), np.array(tower), np.array(means))


@dataclass(frozen=True)
class BinComparison:
    probe: int
    time: float
    bin: int
    count: int
    mean_difference: float
    standard_error: float
    passed: bool


@dataclass
class SufficiencyReport:
    agent: int
    comparisons: List[BinComparison]
    skipped_bins: int

    @property
    def status(self) -> str:
        if not self.comparisons:
            return 'insufficient'
        return 'passed' if all(c.passed for c in self.comparisons) else 'failed'

    @property
    def passed(self) -> bool:
        return self.status == 'passed'

    def strictly_better(self, se_slack: float = 2.0) -> int:
        """Bins where the probe costs significantly more than the optimum"""
        return sum(c.mean_difference > se_slack * c.standard_error for c in self.comparisons)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(c) for c in self.comparisons])

    def to_dict(self) -> dict:
        return {
            'agent': self.agent,
            'passed': self.passed,
            'status': self.status,
            'skipped_bins': self.skipped_bins,
            'comparisons': [asdict(c) for c in self.comparisons],
        }


def _bin_labels(remaining: np.ndarray, features: np.ndarray, num_bins: int) -> np.ndarray:
    """Quantile bins of the fitted conditional cost-to-go, which reads every feature coordinate"""
    if features.shape[1] == 0:
        return np.zeros(features.shape[0], dtype=int)
    score = cond_expectation(remaining, features, gradient_basis(features.shape[1])).fitted
    if np.ptp(score) <= 1e-12 * max(1.0, float(np.max(np.abs(score)))):
        return np.zeros(features.shape[0], dtype=int)
    edges = np.unique(np.quantile(score, np.linspace(0.0, 1.0, num_bins + 1)[1:-1]))
    return np.digitize(score, edges)


def sufficiency_check(spec: SpecLike, policy_o: PolicyProfile, agent: int, probe_policies: Sequence[PolicyProfile],
                      info: FeatureMap, grid: TimeGrid, num_paths: int, seed: int,
                      checkpoints: Optional[Sequence[float]] = None, num_bins: int = NUM_BINS,
                      min_bin: int = MIN_BIN_SIZE, se_slack: float = 2.0) -> SufficiencyReport:
    """Compare conditional cost-to-go of u^o against switching agent i to each probe

    The probe takes over from the checkpoint on; both ensembles share the
    noise, so states and features coincide up to the checkpoint. Paths are
    binned on quantiles of E[cost-to-go of u^o | features of agent i], so
    every feature coordinate enters the binning. With no bin of at least
    `min_bin` paths the report status is 'insufficient' and it does not pass.
    """
    spec = unwrap_spec(spec)
    checkpoints = [grid.horizon / 2] if checkpoints is None else list(checkpoints)
    optimal = simulate_controlled(spec, policy_o, info, grid, num_paths, seed)
    optimal_remaining = cost_to_go(spec, optimal)

    comparisons, skipped = [], 0
    for t in checkpoints:
        k = time_to_index(grid.times, t)
        features = extract_features(info, optimal.observation_prefix(k), agent, k)
        labels = _bin_labels(optimal_remaining[:, k], features, num_bins)
        for index, probe in enumerate(probe_policies):
            switched = SwitchedProfile(policy_o, policy_o.with_agent(agent, probe), k)
            deviated = simulate_controlled(spec, switched, info, grid, num_paths, seed)
            difference = cost_to_go(spec, deviated)[:, k] - optimal_remaining[:, k]
            for label in np.unique(labels):
                members = difference[labels == label]
                if members.size < min_bin:
                    skipped += 1
                    continue
                mean, se = float(np.mean(members)), standard_error(members)
                comparisons.append(BinComparison(index, float(grid.times[k]), int(label), int(members.size),
                                                 mean, se, mean >= -se_slack * se))
    report = SufficiencyReport(agent, comparisons, skipped)
    if report.status == 'insufficient':
        logger.warning("agent %d: no feature bin holds %d paths, sufficiency not assessed", agent, min_bin)
    elif not report.passed:
        logger.warning("agent %d: a probe improves the conditional payoff in some bin", agent)
    return report
