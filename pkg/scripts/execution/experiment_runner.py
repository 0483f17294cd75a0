"""
Experiment Execution Module
===========================

Builds the problem, information structure and policy from a resolved
configuration and executes one subcommand, writing its results through the
ReportGenerator.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Union

import numpy as np
import pandas as pd

from adjoint.fbsde import solve_bsde, solve_bsde_reference
from benchmarks.benchmark_library import build_problem, oracle_values
from config.experiment_config import ExperimentConfig
from girsanov.likelihood import accumulate_likelihood, discrete_likelihood, martingale_check
from girsanov.payoff import (
    discrete_payoff_original, discrete_payoff_reference, equivalence_test, payoff_original,
)
from information.info_structure import FeatureMap, InformationStructure, compile_information, information_from_config
from information.measurability import check_measurability
from model.problem_spec import DiscreteTeamSpec, ProblemSpec, TimeGrid
from model.validation import ProbePlan, ValidatedSpec, validate_spec
from optimization.policy import FeatureBasis, PolicyProfile
from optimization.regression import PolynomialBasis
from optimization.team_optimizer import OptimizerOptions, pbp_iterate
from optimization.value_process import sufficiency_check, value_process
from reporting.bundle_io import write_adjoint_csv, write_bundle_binary, write_bundle_csv
from reporting.report_generator import ReportGenerator
from simulation.path_simulator import (
    ORIGINAL, REFERENCE, euler_step_halving, reference_marginal_ks, simulate_controlled,
    simulate_discrete, simulate_reference,
)
from static.static_team import static_compare, static_stationarity, to_static, transition_quadrature_payoff
from utils.helpers import standard_error, time_to_index
from visualization.chart_generator import ChartGenerator

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('simulate', 'check-martingale', 'static-compare', 'solve-bsde', 'optimize', 'value',
               'equivalence', 'validate')


@dataclass(frozen=True, eq=False)
class ProblemSetup:
    """Everything a subcommand needs, built once from the configuration"""
    spec: Union[ValidatedSpec, DiscreteTeamSpec]
    grid: TimeGrid
    information: InformationStructure
    feature_map: FeatureMap
    policy: PolicyProfile

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.spec, DiscreteTeamSpec)


def build_setup(config: ExperimentConfig) -> ProblemSetup:
    raw = build_problem(config.family, config.params, config.name)
    run = config.run
    if isinstance(raw, ProblemSpec):
        spec = validate_spec(raw, ProbePlan(num_probes=run.probe_count, seed=run.seed, drift_bound=run.drift_bound))
        grid = raw.time_grid(run.steps)
    else:
        spec, grid = raw, raw.grid
    information = information_from_config(config.info, raw.num_agents)
    feature_map = compile_information(information, grid, raw.obs_dims)
    policy = PolicyProfile.build(raw, feature_map, FeatureBasis(config.policy.basis),
                                 segments=config.policy.segments, init=config.policy.init)
    return ProblemSetup(spec, grid, information, feature_map, policy)


@dataclass
class RunOutcome:
    subcommand: str
    passed: bool
    summary: Dict = field(default_factory=dict)


class ExperimentRunner:
    """Dispatches subcommands on one resolved configuration"""

    def __init__(self, config: ExperimentConfig, verbose: bool = False):
        self.config = config
        self.verbose = verbose
        self.setup = build_setup(config)
        self.output_dir = Path(config.output.directory)
        self.strategies: Dict[str, Callable[[ReportGenerator], RunOutcome]] = {
            'simulate': self._run_simulate,
            'check-martingale': self._run_check_martingale,
            'static-compare': self._run_static_compare,
            'solve-bsde': self._run_solve_bsde,
            'optimize': self._run_optimize,
            'value': self._run_value,
            'equivalence': self._run_equivalence,
            'validate': self._run_validate,
        }

    def _wants(self, fmt: str) -> bool:
        return fmt in self.config.output.formats

    def _require_continuous(self, subcommand: str) -> None:
        if self.setup.is_discrete:
            raise ValueError(f"'{subcommand}' needs a continuous-time problem, got family '{self.config.family}'")

    def _oracle(self) -> Dict:
        return oracle_values(self.config.benchmark, self.config.params) if self.config.benchmark else {}

    def run(self, subcommand: str) -> RunOutcome:
        if subcommand not in self.strategies:
            raise ValueError(f"unknown subcommand '{subcommand}' (available: {', '.join(SUBCOMMANDS)})")
        run = self.config.run
        print(f"🔬 {subcommand.upper()}: {self.config.name}")
        print("=" * 50)
        print(f"  • Paths: {run.paths}  • Seed: {run.seed}  • Grid: {self.setup.grid.num_steps} steps")
        print(f"  • Output directory: {self.output_dir}")
        print()

        seeds = [run.seed, run.seed + 1] if subcommand == 'equivalence' else [run.seed]
        reporter = ReportGenerator(self.output_dir, subcommand, self.config.resolved(), seeds)
        start = time.time()
        outcome = self.strategies[subcommand](reporter)
        print(f"   {'✅' if outcome.passed else '❌'} {subcommand} finished in {time.time() - start:.1f}s")
        reporter.write_json(f"{subcommand.replace('-', '_')}.json",
                            {'subcommand': subcommand, 'passed': outcome.passed, **outcome.summary})
        reporter.finalize()
        reporter.print_final_summary(outcome.passed)
        return outcome

    # -- subcommands -------------------------------------------------------

    def _simulate_original(self):
        s, run = self.setup, self.config.run
        if s.is_discrete:
            return simulate_discrete(s.spec, s.policy, s.feature_map, run.paths, run.seed, measure=ORIGINAL)
        return simulate_controlled(s.spec, s.policy, s.feature_map, s.grid, run.paths, run.seed)

    def _run_simulate(self, reporter: ReportGenerator) -> RunOutcome:
        s = self.setup
        bundle = self._simulate_original()
        if s.is_discrete:
            estimate = discrete_payoff_original(s.spec, bundle)
        else:
            estimate = payoff_original(s.spec, bundle)
        if self._wants('csv'):
            reporter.register(write_bundle_csv(bundle, self.output_dir / 'bundle.csv'))
        if self._wants('bin'):
            reporter.register(write_bundle_binary(bundle, self.output_dir / 'bundle.topb'))
        terminal = bundle.states[:, -1]
        print(f"   Payoff: {estimate.value:.6g} ± {estimate.standard_error:.2g}")
        return RunOutcome('simulate', True, {
            'payoff': estimate.to_dict(),
            'terminal_mean': terminal.mean(axis=0),
            'terminal_std': terminal.std(axis=0, ddof=1) if bundle.num_paths > 1 else np.zeros(bundle.state_dim),
        })

    def _run_check_martingale(self, reporter: ReportGenerator) -> RunOutcome:
        s, run = self.setup, self.config.run
        if s.is_discrete:
            bundle = simulate_discrete(s.spec, None, None, run.paths, run.seed, measure=REFERENCE)
            bundle = discrete_likelihood(s.spec, bundle, s.policy, s.feature_map)
        else:
            bundle = simulate_reference(s.spec, s.grid, run.paths, run.seed)
            bundle = accumulate_likelihood(bundle, s.policy, s.feature_map, s.spec)
        checkpoints = list(run.checkpoints) or None
        diagnostics = martingale_check(bundle, checkpoints)
        frame = diagnostics.to_frame()
        if self._wants('csv'):
            reporter.write_frame('martingale.csv', frame)
        if self._wants('bin'):
            reporter.register(write_bundle_binary(bundle, self.output_dir / 'reference_bundle.topb'))
        if self._wants('png'):
            reporter.register(ChartGenerator(self.output_dir).martingale_chart(diagnostics, bundle))
        for stat in diagnostics.checkpoints:
            print(f"   t={stat.time:.3f}: mean Lambda {stat.mean:.5f} ± {stat.standard_error:.2g} "
                  f"{'✅' if stat.passed else '❌'}")
        summary = diagnostics.to_dict()
        if s.is_discrete:
            summary['reference_marginals'] = [reference_marginal_ks(bundle, s.spec, k).to_dict()
                                              for k in range(1, bundle.num_steps + 1)]
        return RunOutcome('check-martingale', diagnostics.passed, summary)

    def _run_static_compare(self, reporter: ReportGenerator) -> RunOutcome:
        s, run = self.setup, self.config.run
        if not s.is_discrete:
            raise ValueError("'static-compare' needs a discrete-time problem (family 'discrete-affine')")
        comparison = static_compare(s.spec, s.policy, s.feature_map, run.quadrature_order, run.mc_paths,
                                    run.seed, run.dimension_cap)
        transition = transition_quadrature_payoff(s.spec, s.policy, run.quadrature_order, run.dimension_cap)
        static = to_static(s.spec)
        stationarity = None
        if static.quadrature_dimension <= run.dimension_cap:
            stationarity = static_stationarity(static, s.policy, order=run.quadrature_order,
                                               dimension_cap=run.dimension_cap).to_dict()
        rows = pd.DataFrame([{
            'quadrature': comparison.quadrature,
            'transition_quadrature': transition,
            'mc_mean': comparison.mc_mean,
            'mc_se': comparison.mc_se,
            'gap': comparison.gap,
            'pass': comparison.passed,
        }])
        if self._wants('csv'):
            reporter.write_frame('static_compare.csv', rows)
        print(f"   Quadrature {comparison.quadrature:.8g} | transition {transition:.8g} | "
              f"MC {comparison.mc_mean:.6g} ± {comparison.mc_se:.2g}")
        return RunOutcome('static-compare', comparison.passed, {
            'comparison': comparison.to_dict(),
            'transition_quadrature': transition,
            'quadrature_dimension': static.quadrature_dimension,
            'stationarity': stationarity,
            'policy': s.policy.describe(),
            'oracle': self._oracle(),
        })

    def _run_solve_bsde(self, reporter: ReportGenerator) -> RunOutcome:
        self._require_continuous('solve-bsde')
        s, run = self.setup, self.config.run
        basis = PolynomialBasis(run.bsde_degree)
        bundle = self._simulate_original()
        adjoint = solve_bsde(s.spec, bundle, s.policy, basis)
        reference = accumulate_likelihood(simulate_reference(s.spec, s.grid, run.paths, run.seed, stream=1),
                                          s.policy, s.feature_map, s.spec)
        reference_adjoint = solve_bsde_reference(s.spec, reference, s.policy, basis)
        psi0 = adjoint.psi[:, 0]
        psi0_reference = reference_adjoint.psi[:, 0]
        if self._wants('csv'):
            reporter.register(write_adjoint_csv(adjoint, bundle, self.output_dir / 'adjoint.csv'))
        print(f"   Psi(0): original {psi0.mean():.6g}, reference {psi0_reference.mean():.6g}")
        return RunOutcome('solve-bsde', True, {
            'psi0_mean': float(psi0.mean()),
            'psi0_se': standard_error(psi0),
            'psi0_reference_mean': float(psi0_reference.mean()),
            'psi0_reference_se': standard_error(psi0_reference),
            'residual_norms': adjoint.residual_norms,
            'ridge_steps': list(adjoint.ridge_steps),
            'regression_basis': adjoint.regression_basis,
        })

    def _optimizer_options(self) -> OptimizerOptions:
        run = self.config.run
        return OptimizerOptions(
            num_paths=run.paths, seed=run.seed, tol=run.tol, max_cycles=run.max_cycles,
            inner_iterations=run.inner_iterations, step_size=run.step_size, bsde_degree=run.bsde_degree,
            gradient_degree=run.gradient_degree, probe_step=run.probe_step,
            checkpoints=tuple(run.checkpoints) or None, progress=self.verbose,
        )

    def _run_optimize(self, reporter: ReportGenerator) -> RunOutcome:
        self._require_continuous('optimize')
        s = self.setup
        policy, report = pbp_iterate(s.spec, s.policy, s.feature_map, s.grid, self._optimizer_options())
        if self._wants('csv'):
            reporter.write_frame('traces.csv', report.trace_frame())
        if self._wants('png'):
            charts = ChartGenerator(self.output_dir)
            for path in (charts.trace_chart(report), charts.residual_probe_chart(report)):
                if path is not None:
                    reporter.register(path)
        passed = report.converged and report.probes_pass()
        print(f"   Cycles: {report.iterations}, final payoff {report.payoff_trace[-1]:.6g}, "
              f"max residual {report.max_residual:.3g}"
              f"{', stalled' if report.stalled else ''}")
        return RunOutcome('optimize', passed, {
            'report': report.to_dict(),
            'policy': policy.describe(),
            'oracle': self._oracle(),
        })

    def _run_value(self, reporter: ReportGenerator) -> RunOutcome:
        self._require_continuous('value')
        s, run = self.setup, self.config.run
        bundle = self._simulate_original()
        adjoint = solve_bsde(s.spec, bundle, s.policy, PolynomialBasis(run.bsde_degree))
        checkpoints = list(run.checkpoints) or [0.5 * s.grid.horizon]
        steps = [time_to_index(s.grid.times, t) for t in checkpoints]
        charts = ChartGenerator(self.output_dir) if self._wants('png') else None

        agents, passed = [], True
        for agent in range(s.policy.num_agents):
            estimate = value_process(agent, adjoint, bundle, s.feature_map, s.spec, run.value_degree)
            theta = s.policy.flat(agent)
            probes = [s.policy.with_flat(agent, np.zeros_like(theta)), s.policy.with_flat(agent, 0.5 * theta)]
            sufficiency = sufficiency_check(s.spec, s.policy, agent, probes, s.feature_map, s.grid,
                                            run.paths, run.seed, checkpoints)
            passed = passed and sufficiency.passed
            if self._wants('csv'):
                reporter.write_frame(f'value_agent_{agent}.csv', estimate.to_frame(s.grid))
                reporter.write_frame(f'sufficiency_agent_{agent}.csv', sufficiency.to_frame())
            if charts is not None:
                reporter.register(charts.value_chart(estimate, bundle, steps))
            agents.append({
                'agent': agent,
                'value_at_checkpoints': {f"{s.grid.times[k]:g}": float(estimate.values[:, k].mean()) for k in steps},
                'worst_tower_gap': float(estimate.tower_gaps.max()),
                'sufficiency': sufficiency.to_dict(),
            })
            print(f"   Agent {agent}: sufficiency {'✅' if sufficiency.passed else '❌'} ({sufficiency.status})")
        return RunOutcome('value', passed, {'agents': agents})

    def _run_equivalence(self, reporter: ReportGenerator) -> RunOutcome:
        s, run = self.setup, self.config.run
        if s.is_discrete:
            reference = discrete_likelihood(
                s.spec, simulate_discrete(s.spec, None, None, run.paths, run.seed, measure=REFERENCE),
                s.policy, s.feature_map)
            ref_estimate = discrete_payoff_reference(s.spec, reference)
            orig_estimate = discrete_payoff_original(
                s.spec, simulate_discrete(s.spec, s.policy, s.feature_map, run.paths, run.seed + 1))
            gap = ref_estimate.value - orig_estimate.value
            combined = float(np.hypot(ref_estimate.standard_error, orig_estimate.standard_error))
            summary = {'reference': ref_estimate.to_dict(), 'original': orig_estimate.to_dict(),
                       'gap': gap, 'combined_se': combined}
            passed = abs(gap) <= 3.0 * combined + 1e-12
        else:
            report = equivalence_test(s.spec, s.policy, s.feature_map, s.grid, run.paths, run.seed)
            summary, passed, gap = report.to_dict(), report.passed, report.gap
        if self._wants('csv'):
            reporter.write_frame('equivalence.csv', pd.DataFrame([{
                'reference': summary['reference']['value'], 'original': summary['original']['value'],
                'gap': gap, 'pass': passed}]))
        print(f"   Gap between measures: {gap:.4g}")
        return RunOutcome('equivalence', passed, summary)

    def _run_validate(self, reporter: ReportGenerator) -> RunOutcome:
        s, run = self.setup, self.config.run
        summary: Dict = {'features': {str(i): s.feature_map.max_dim(i) for i in range(s.policy.num_agents)}}
        if not s.is_discrete:
            summary['audit'] = s.spec.audit.to_dict()
            summary['step_halving'] = euler_step_halving(s.spec, s.grid, min(run.paths, 10_000), run.seed).to_dict()
        bundle = self._simulate_original()
        histories = bundle.observations
        reports: List[Dict] = []
        for agent in range(s.policy.num_agents):
            report = check_measurability(
                lambda h, k, a=agent: s.policy.agent_action(a, k, tuple(z[:, :k + 1] for z in h)),
                s.feature_map, agent, [h[:min(bundle.num_paths, 256)] for h in histories], seed=run.seed)
            reports.append(report.to_dict())
        summary['measurability'] = reports
        passed = all(r['passed'] for r in reports)
        print(f"   Measurability: {'✅' if passed else '❌'}")
        return RunOutcome('validate', passed, summary)
