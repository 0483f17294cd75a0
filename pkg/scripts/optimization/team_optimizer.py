"""
Team Optimizer Module
=====================

Conditional-Hamiltonian machinery for person-by-person (PbP) optimization:

- conditional_hamiltonian_gradient: g^i(k) = E[dH/du^i | features of agent i at k]
- pbp_best_response: backtracking gradient steps on one agent's parameters,
  all other agents frozen, payoff compared on common random numbers
- pbp_iterate: cyclic best responses with a residual certificate per cycle
- team_residual: variational-inequality residuals and probe gaps

The policy gradient chains g^i through the policy basis:
dJ/dtheta^i = E[sum_k g^i(k) . du^i(k)/dtheta^i dt], with du/dtheta the
regressor vector where the action is not clipped and zero where it is.
"""

import itertools
import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from adjoint.fbsde import AdjointPath, hamiltonian, hamiltonian_gradient, solve_bsde
from girsanov.payoff import path_costs
from information.info_structure import FeatureMap, extract_features
from model.problem_spec import TimeGrid
from model.validation import SpecLike, unwrap_spec
from optimization.policy import PolicyProfile
from optimization.regression import ConditionalExpectation, PolynomialBasis, cond_expectation, gradient_basis
from simulation.path_simulator import REFERENCE, PathBundle, replay_controls, simulate_controlled
from utils.helpers import standard_error

logger = logging.getLogger(__name__)

MAX_VERTEX_DIM = 4


@dataclass(frozen=True)
class OptimizerOptions:
    """Knobs of the PbP iteration; every payoff comparison reuses `seed`"""
    num_paths: int = 20_000
    seed: int = 0
    tol: float = 1e-3
    max_cycles: int = 20
    inner_iterations: int = 5
    step_size: float = 0.5
    backtracking: float = 0.5
    max_backtracks: int = 8
    armijo: float = 1e-4
    bsde_degree: int = 2
    gradient_degree: int = 2
    probe_step: float = 0.5
    se_slack: float = 2.0
    agent_order: Optional[Tuple[int, ...]] = None
    checkpoints: Optional[Tuple[float, ...]] = None
    progress: bool = False


@dataclass(frozen=True, eq=False)
class HamiltonianGradient:
    """Per-step regressions of dH/du^i on agent-i features"""
    agent: int
    fits: Tuple[ConditionalExpectation, ...]
    fitted: np.ndarray
    raw: np.ndarray


def _step_weights(bundle: PathBundle, k: int) -> Optional[np.ndarray]:
    if bundle.measure_tag == REFERENCE:
        return np.exp(bundle.log_likelihood[:, k])
    return None


def conditional_hamiltonian_gradient(agent: int, adjoint: AdjointPath, bundle: PathBundle, policy: PolicyProfile,
                                     fm: FeatureMap, spec: SpecLike, degree: int = 2) -> HamiltonianGradient:
    """Regress the agent's block of dH/du on its own features, step by step

    On reference bundles the augmented Hamiltonian Lambda * H is used.
    """
    spec = unwrap_spec(spec)
    controls = bundle.controls if bundle.controls is not None else replay_controls(policy, bundle)
    times = bundle.grid.times
    sl = spec.action_slices[agent]
    fits, fitted, raw = [], [], []
    for k in range(bundle.num_steps):
        gradient = hamiltonian_gradient(spec, times[k], bundle.states[:, k], adjoint.q[:, k], controls[:, k])[:, sl]
        weights = _step_weights(bundle, k)
        if weights is not None:
            gradient = gradient * weights[:, None]
        features = extract_features(fm, bundle.observation_prefix(k), agent, k)
        fit = cond_expectation(gradient, features, gradient_basis(features.shape[1], degree))
        fits.append(fit)
        fitted.append(fit.fitted)
        raw.append(gradient)
    return HamiltonianGradient(agent, tuple(fits), np.stack(fitted, axis=1), np.stack(raw, axis=1))


def policy_gradient(agent: int, gradient: HamiltonianGradient, bundle: PathBundle,
                    policy: PolicyProfile) -> np.ndarray:
    """dJ/dtheta^i assembled block by block in the policy's parameter order"""
    agent_policy = policy.agents[agent]
    sl = policy.action_slices[agent]
    lo, hi = policy.lower_bounds[sl], policy.upper_bounds[sl]
    blocks = [np.zeros_like(b) for b in agent_policy.blocks]
    dt = bundle.grid.step
    for k in range(bundle.num_steps):
        regressors = policy.regressors(agent, k, bundle.observation_prefix(k))
        raw_action = regressors @ agent_policy.weights(k)
        free = (raw_action >= lo) & (raw_action <= hi)
        blocks[agent_policy.block_index(k)] += regressors.T @ (gradient.fitted[:, k] * free) / bundle.num_paths * dt
    return np.concatenate([b.ravel() for b in blocks])


@dataclass(frozen=True)
class BestResponse:
    policy: PolicyProfile = field(repr=False)
    agent: int
    payoff_before: float
    payoff_after: float
    payoff_se: float
    iterations: int
    gradient_norm: float
    line_search_failed: bool


def _payoff(spec, policy: PolicyProfile, info: FeatureMap, grid: TimeGrid, opts: OptimizerOptions):
    bundle = simulate_controlled(spec, policy, info, grid, opts.num_paths, opts.seed)
    costs = path_costs(spec, bundle)
    return bundle, float(np.mean(costs)), standard_error(costs)


def pbp_best_response(agent: int, spec: SpecLike, policy: PolicyProfile, info: FeatureMap, grid: TimeGrid,
                      opts: OptimizerOptions = OptimizerOptions()) -> BestResponse:
    """Projected-gradient best response of one agent, the others held fixed"""
    spec = unwrap_spec(spec)
    basis = PolynomialBasis(opts.bsde_degree)
    bundle, payoff, payoff_se = _payoff(spec, policy, info, grid, opts)
    start = payoff
    failed = False
    gradient_norm = 0.0
    iterations = 0
    for _ in range(opts.inner_iterations):
        adjoint = solve_bsde(spec, bundle, policy, basis)
        gradient = policy_gradient(
            agent, conditional_hamiltonian_gradient(agent, adjoint, bundle, policy, info, spec, opts.gradient_degree),
            bundle, policy)
        gradient_norm = float(np.linalg.norm(gradient))
        if gradient_norm == 0.0:
            break
        theta = policy.flat(agent)
        step = opts.step_size
        accepted = None
        for _ in range(opts.max_backtracks + 1):
            trial = policy.with_flat(agent, theta - step * gradient)
            trial_bundle, trial_payoff, trial_se = _payoff(spec, trial, info, grid, opts)
            if trial_payoff <= payoff - opts.armijo * step * gradient_norm ** 2:
                accepted = (trial, trial_bundle, trial_payoff, trial_se)
                break
            logger.debug("agent %d: step %.3g rejected (%.6g > %.6g)", agent, step, trial_payoff, payoff)
            step *= opts.backtracking
        if accepted is None:
            failed = True
            logger.warning("agent %d: line search failed, keeping current parameters", agent)
            break
        policy, bundle, payoff, payoff_se = accepted
        iterations += 1
    return BestResponse(policy, agent, start, payoff, payoff_se, iterations, gradient_norm, failed)


@dataclass(frozen=True)
class ProbeGap:
    agent: int
    probe: str
    gap: float
    standard_error: float

    def passed(self, se_slack: float = 2.0) -> bool:
        return self.gap >= -se_slack * self.standard_error


@dataclass
class ResidualReport:
    """VI residuals, probe gaps and the PbP traces"""
    residuals: Dict[int, float]
    checkpoint_residuals: Dict[int, List[Tuple[float, float]]]
    probes: List[ProbeGap]
    measure: str
    payoff_trace: List[float] = field(default_factory=list)
    payoff_se_trace: List[float] = field(default_factory=list)
    residual_trace: List[Dict[int, float]] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    max_cycles_exceeded: bool = False
    stalled: bool = False
    line_search_failures: int = 0

    @property
    def team_residual(self) -> float:
        return float(sum(self.residuals.values()))

    @property
    def max_residual(self) -> float:
        return float(max(self.residuals.values()))

    def worst_probe(self) -> Optional[ProbeGap]:
        if not self.probes:
            return None
        return min(self.probes, key=lambda p: p.gap / p.standard_error if p.standard_error > 0 else
                   (0.0 if p.gap >= 0 else -np.inf))

    def probes_pass(self, se_slack: float = 2.0) -> bool:
        return all(p.passed(se_slack) for p in self.probes)

    def trace_frame(self) -> pd.DataFrame:
        rows = []
        for it, (payoff, se, residuals) in enumerate(zip(self.payoff_trace, self.payoff_se_trace, self.residual_trace)):
            row = {'iteration': it, 'payoff': payoff, 'payoff_se': se}
            row.update({f'residual_{agent}': value for agent, value in sorted(residuals.items())})
            rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self) -> dict:
        worst = self.worst_probe()
        return {
            'measure': self.measure,
            'residuals': {str(a): r for a, r in self.residuals.items()},
            'team_residual': self.team_residual,
            'checkpoint_residuals': {str(a): [list(p) for p in v] for a, v in self.checkpoint_residuals.items()},
            'probes': [asdict(p) for p in self.probes],
            'worst_probe': asdict(worst) if worst else None,
            'payoff_trace': self.payoff_trace,
            'iterations': self.iterations,
            'converged': self.converged,
            'max_cycles_exceeded': self.max_cycles_exceeded,
            'stalled': self.stalled,
            'line_search_failures': self.line_search_failures,
        }


def _box_vertices(lo: np.ndarray, hi: np.ndarray) -> List[Tuple[str, np.ndarray]]:
    if lo.shape[0] > MAX_VERTEX_DIM:
        return [('box-lower', lo), ('box-upper', hi)]
    vertices = []
    for corner in itertools.product((0, 1), repeat=lo.shape[0]):
        corner = np.array(corner, dtype=bool)
        vertices.append(('box-' + ''.join('u' if c else 'l' for c in corner), np.where(corner, hi, lo)))
    return vertices


def team_residual(spec: SpecLike, policy: PolicyProfile, adjoint: AdjointPath, bundle: PathBundle,
                  info: FeatureMap, probe_step: float = 0.5, degree: int = 2,
                  checkpoints: Optional[Sequence[float]] = None) -> ResidualReport:
    """VI residual per agent and integrated Hamiltonian gaps for probe deviations

    Probes are the box vertices and steps of size `probe_step` against and
    along the fitted conditional gradient. On reference bundles every
    Hamiltonian is multiplied by Lambda(t_k).
    """
    spec = unwrap_spec(spec)
    controls = bundle.controls if bundle.controls is not None else replay_controls(policy, bundle)
    times, dt = bundle.grid.times, bundle.grid.step
    checkpoint_steps = [] if checkpoints is None else [int(np.argmin(np.abs(times - t))) for t in checkpoints]
    base = np.stack([hamiltonian(spec, times[k], bundle.states[:, k], adjoint.q[:, k], controls[:, k])
                     for k in range(bundle.num_steps)], axis=1)
    weights = np.stack([np.ones(bundle.num_paths) if _step_weights(bundle, k) is None else _step_weights(bundle, k)
                        for k in range(bundle.num_steps)], axis=1)

    residuals, per_checkpoint, probes = {}, {}, []
    for agent in range(spec.num_agents):
        sl = spec.action_slices[agent]
        lo, hi = spec.lower_bounds[sl], spec.upper_bounds[sl]
        gradient = conditional_hamiltonian_gradient(agent, adjoint, bundle, policy, info, spec, degree).fitted
        own = controls[:, :, sl]
        step_residual = np.mean(np.sum(gradient * (own - np.clip(own - gradient, lo, hi)), axis=2), axis=0)
        residuals[agent] = float(np.sum(step_residual) * dt)
        per_checkpoint[agent] = [(float(times[k]), float(step_residual[min(k, bundle.num_steps - 1)]))
                                 for k in checkpoint_steps]

        norm = np.linalg.norm(gradient, axis=2, keepdims=True)
        direction = np.divide(gradient, norm, out=np.zeros_like(gradient), where=norm > 0)
        candidates = [(name, np.broadcast_to(vertex, own.shape)) for name, vertex in _box_vertices(lo, hi)]
        candidates.append(('gradient-descent', np.clip(own - probe_step * direction, lo, hi)))
        candidates.append(('gradient-ascent', np.clip(own + probe_step * direction, lo, hi)))

        for name, probe in candidates:
            deviated = controls.copy()
            deviated[:, :, sl] = probe
            shifted = np.stack([hamiltonian(spec, times[k], bundle.states[:, k], adjoint.q[:, k], deviated[:, k])
                                for k in range(bundle.num_steps)], axis=1)
            samples = np.sum(weights * (shifted - base), axis=1) * dt
            probes.append(ProbeGap(agent, name, float(np.mean(samples)), standard_error(samples)))

    return ResidualReport(residuals, per_checkpoint, probes, bundle.measure_tag)


def pbp_iterate(spec: SpecLike, init_policy: PolicyProfile, info: FeatureMap, grid: TimeGrid,
                opts: OptimizerOptions = OptimizerOptions()) -> Tuple[PolicyProfile, ResidualReport]:
    """Cyclic best responses until every VI residual is below tol

    A cycle in which no agent accepts a step ends the iteration unconverged
    with `stalled` set; running out of cycles sets `max_cycles_exceeded`.
    Either way the lowest-payoff iterate is returned.
    """
    spec = unwrap_spec(spec)
    order = opts.agent_order or tuple(range(spec.num_agents))
    basis = PolynomialBasis(opts.bsde_degree)
    policy = init_policy

    payoff_trace, se_trace, residual_trace = [], [], []
    failures = 0
    best = None
    report = None
    converged = stalled = False
    cycles = tqdm(range(opts.max_cycles), desc="PbP cycles", disable=not opts.progress)
    for cycle in cycles:
        moved = False
        for agent in order:
            response = pbp_best_response(agent, spec, policy, info, grid, opts)
            policy = response.policy
            moved = moved or response.iterations > 0
            failures += int(response.line_search_failed)

        bundle, payoff, payoff_se = _payoff(spec, policy, info, grid, opts)
        adjoint = solve_bsde(spec, bundle, policy, basis)
        report = team_residual(spec, policy, adjoint, bundle, info, opts.probe_step, opts.gradient_degree,
                               opts.checkpoints)
        payoff_trace.append(payoff)
        se_trace.append(payoff_se)
        residual_trace.append(dict(report.residuals))
        if best is None or payoff < best[1]:
            best = (policy, payoff, report)
        cycles.set_postfix(payoff=f"{payoff:.5g}", residual=f"{report.max_residual:.2e}")
        logger.info("cycle %d: payoff %.6g, max residual %.3g", cycle, payoff, report.max_residual)
        if report.max_residual <= opts.tol:
            converged = True
            break
        if not moved:
            stalled = True
            logger.warning("cycle %d: no agent moved with max residual %.3g above tol %.3g",
                           cycle, report.max_residual, opts.tol)
            break

    policy, _, report = best
    report.payoff_trace = payoff_trace
    report.payoff_se_trace = se_trace
    report.residual_trace = residual_trace
    report.iterations = len(payoff_trace)
    report.converged = converged
    report.line_search_failures = failures
    report.stalled = stalled
    if not converged and not stalled:
        report.max_cycles_exceeded = True
        logger.warning("PbP iteration stopped after %d cycles without reaching tol %.3g", opts.max_cycles, opts.tol)
    return policy, report
