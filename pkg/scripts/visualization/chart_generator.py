"""
Chart Generation Module
=======================

Diagnostic charts for team-optimization runs: likelihood martingale check,
PbP payoff and residual traces, and value-process fits.
"""

from pathlib import Path
from typing import List, Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from girsanov.likelihood import LikelihoodDiagnostics
from optimization.team_optimizer import ResidualReport
from optimization.value_process import ValueEstimate
from simulation.path_simulator import PathBundle


class ChartGenerator:
    """Writes PNG charts next to the numeric results"""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        plt.style.use('default')
        sns.set_palette("husl")

    def _save(self, fig, name: str) -> Path:
        path = self.output_dir / name
        fig.tight_layout()
        fig.savefig(path, dpi=120, metadata={'Software': None})
        plt.close(fig)
        return path

    def martingale_chart(self, diagnostics: LikelihoodDiagnostics, bundle: PathBundle) -> Path:
        """Mean Lambda(t) with a 3 SE band against the constant 1"""
        likelihood = bundle.likelihood
        mean = likelihood.mean(axis=0)
        se = likelihood.std(axis=0, ddof=1) / np.sqrt(bundle.num_paths)
        times = bundle.grid.times

        fig, ax = plt.subplots(figsize=(8, 5))
        ax.plot(times, mean, label='mean Lambda(t)')
        ax.fill_between(times, mean - 3 * se, mean + 3 * se, alpha=0.3, label='±3 SE')
        ax.axhline(1.0, color='black', linestyle='--', linewidth=1)
        frame = diagnostics.to_frame()
        ax.scatter(frame['t'], frame['mean'], c=np.where(frame['pass'], 'green', 'red'), zorder=3,
                   label='checkpoints')
        ax.set_xlabel('t')
        ax.set_ylabel('E[Lambda(t)]')
        ax.set_title(f'Likelihood martingale check (ESS {diagnostics.ess:.0f} of {diagnostics.num_paths})')
        ax.legend()
        return self._save(fig, 'martingale.png')

    def trace_chart(self, report: ResidualReport) -> Optional[Path]:
        frame = report.trace_frame()
        if frame.empty:
            return None
        fig, axes = plt.subplots(1, 2, figsize=(12, 5))
        axes[0].errorbar(frame['iteration'], frame['payoff'], yerr=3 * frame['payoff_se'], marker='o')
        axes[0].set_title('Team payoff per PbP cycle')
        axes[0].set_xlabel('cycle')
        axes[0].set_ylabel('J')
        residual_columns = [c for c in frame.columns if c.startswith('residual_')]
        melted = frame.melt(id_vars='iteration', value_vars=residual_columns, var_name='agent',
                            value_name='residual')
        sns.lineplot(data=melted, x='iteration', y='residual', hue='agent', marker='o', ax=axes[1])
        axes[1].set_yscale('symlog', linthresh=1e-6)
        axes[1].set_title('VI residual per agent')
        return self._save(fig, 'pbp_traces.png')

    def value_chart(self, estimate: ValueEstimate, bundle: PathBundle, steps: List[int]) -> Path:
        """Fitted V^i against the first state coordinate at the given steps"""
        fig, ax = plt.subplots(figsize=(8, 5))
        for k in steps:
            order = np.argsort(bundle.states[:, k, 0])
            ax.plot(bundle.states[order, k, 0], estimate.values[order, k],
                    label=f't = {bundle.grid.times[k]:.2f}')
        ax.set_xlabel('x(t)')
        ax.set_ylabel(f'V^{estimate.agent}(t)')
        ax.set_title('Agent value process')
        ax.legend()
        return self._save(fig, f'value_agent_{estimate.agent}.png')

    def residual_probe_chart(self, report: ResidualReport) -> Optional[Path]:
        if not report.probes:
            return None
        frame = pd.DataFrame([{'probe': f"{p.agent}:{p.probe}", 'z': p.gap / p.standard_error
                               if p.standard_error > 0 else 0.0} for p in report.probes])
        fig, ax = plt.subplots(figsize=(10, 5))
        sns.barplot(data=frame, x='probe', y='z', ax=ax, color='skyblue')
        ax.axhline(-2.0, color='red', linestyle='--', linewidth=1)
        ax.set_ylabel('gap / SE')
        ax.set_title('Hamiltonian gaps of probe deviations')
        ax.tick_params(axis='x', rotation=45)
        return self._save(fig, 'probe_gaps.png')
