"""
Measurability Fuzzing
=====================

Perturbs every observation entry a feature map does NOT reference and
records how much a policy's output moves. A policy that depends on the
history only through its features never moves.
"""

import logging
from dataclasses import dataclass, asdict
from typing import Callable, List, Optional, Sequence

import numpy as np

from information.info_structure import FeatureMap

logger = logging.getLogger(__name__)

PolicyEval = Callable[[Sequence[np.ndarray], int], np.ndarray]


@dataclass(frozen=True)
class MeasurabilityReport:
    agent: int
    steps: List[int]
    fuzz_trials: int
    max_change: float
    worst_step: int
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _hidden_mask(fm: FeatureMap, agent: int, step: int, shapes) -> List[np.ndarray]:
    """Per source (L, k_j) mask of entries the feature map does not reference"""
    masks = [np.ones(shape[-2:], dtype=bool) for shape in shapes]
    for source, (times, coords, _) in fm.positions(agent, step).items():
        masks[source][times, coords] = False
    return masks


def check_measurability(policy_eval: PolicyEval, fm: FeatureMap, agent: int,
                        histories: Sequence[np.ndarray], fuzz_trials: int = 8,
                        steps: Optional[Sequence[int]] = None, seed: int = 0) -> MeasurabilityReport:
    """Fuzz unreferenced history entries and report the largest output change

    policy_eval(histories, step) receives full per-agent histories shaped
    (P, M+1, k_j) and returns the agent's actions at `step`.
    """
    rng = np.random.default_rng(seed)
    histories = [np.asarray(h, dtype=float) for h in histories]
    steps = list(range(fm.num_steps)) if steps is None else list(steps)

    max_change = 0.0
    worst_step = steps[0] if steps else 0
    for step in steps:
        baseline = np.asarray(policy_eval(histories, step), dtype=float)
        masks = _hidden_mask(fm, agent, step, [h.shape for h in histories])
        for _ in range(fuzz_trials):
            fuzzed = [h + rng.normal(scale=1.0 + np.abs(h)) * mask for h, mask in zip(histories, masks)]
            change = float(np.max(np.abs(np.asarray(policy_eval(fuzzed, step), dtype=float) - baseline), initial=0.0))
            if change > max_change:
                max_change, worst_step = change, step

    report = MeasurabilityReport(agent, steps, fuzz_trials, max_change, worst_step, max_change == 0.0)
    if not report.passed:
        logger.warning("agent %d policy reads unreferenced history (max change %.3g at step %d)",
                       agent, max_change, worst_step)
    return report
