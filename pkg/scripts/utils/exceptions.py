"""
Error Types
===========

Exceptions raised by the team-problem toolkit. Report-only conditions
(ridge fallbacks, failed line searches, exhausted cycles) are flags on
result objects, not exceptions.
"""

import numpy as np


class TeamOptError(Exception):
    """Base class for all toolkit errors"""


class SingularDiffusion(TeamOptError):
    """Diffusion matrix is singular at a probed or simulated point"""

    def __init__(self, t: float, x):
        self.t = float(t)
        self.x = np.asarray(x, dtype=float).tolist()
        super().__init__(f"diffusion matrix is singular at t={self.t:.6g}, x={self.x}")


class UnboundedDriftRatio(TeamOptError):
    """|sigma^-1 f| exceeds the declared bound"""

    def __init__(self, t: float, x, u, value: float, bound: float):
        self.t = float(t)
        self.x = np.asarray(x, dtype=float).tolist()
        self.u = np.asarray(u, dtype=float).tolist()
        self.value = float(value)
        self.bound = float(bound)
        super().__init__(
            f"|sigma^-1 f| = {self.value:.6g} exceeds declared bound {self.bound:.6g} "
            f"at t={self.t:.6g}, x={self.x}, u={self.u}"
        )


class EmptyActionBox(TeamOptError):
    """An agent's action box is empty or not finite"""

    def __init__(self, agent: int, coordinate: int, reason: str = "lower bound exceeds upper bound"):
        self.agent = agent
        self.coordinate = coordinate
        super().__init__(f"action box of agent {agent}, coordinate {coordinate}: {reason}")


class NonDeterministicEvaluator(TeamOptError):
    """An evaluator returned different values for identical arguments"""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"evaluator '{name}' is not a deterministic function of its arguments")


class NonPDCovariance(TeamOptError):
    """G(k) G(k)* is not positive definite"""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"noise covariance G G* at step {step} is not positive definite")


class DelayNotOnGrid(TeamOptError):
    """Signaling delay is not a whole number of grid steps (>= 1)"""

    def __init__(self, agent: int, source: int, delay):
        self.agent = agent
        self.source = source
        self.delay = delay
        super().__init__(
            f"agent {agent} receives agent {source} with delay {delay}, "
            f"which is not a whole number of grid steps >= 1"
        )


class SelfSignaling(TeamOptError):
    """An agent lists itself as a signaling source"""

    def __init__(self, agent: int):
        self.agent = agent
        super().__init__(f"agent {agent} lists itself in its signaling set")


class HistoryTooShort(TeamOptError):
    """Observation history does not reach a referenced time index"""

    def __init__(self, source: int, needed: int, available: int):
        self.source = source
        self.needed = needed
        self.available = available
        super().__init__(
            f"observation history of agent {source} has {available} entries, "
            f"feature map needs {needed}"
        )


class PolicyNotMeasurable(TeamOptError):
    """Policy is not bound to the information structure it is used with"""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"policy is not measurable w.r.t. the supplied information: {reason}")


class DimensionCapExceeded(TeamOptError):
    """Tensor quadrature requested above the configured dimension cap"""

    def __init__(self, dimension: int, cap: int):
        self.dimension = dimension
        self.cap = cap
        super().__init__(f"quadrature dimension {dimension} exceeds cap {cap}")


class NonConvergentFixedPoint(TeamOptError):
    """Backward regression under the reference measure diverged

    The driver depends on Q but not on Psi, so the implicit step closes in a
    single sweep and there is no sweep count to configure. The error is raised
    when that sweep leaves Psi or Q non-finite at `step`.
    """

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"reference-measure backward regression diverged at step {step}")


class ConfigInvalid(TeamOptError):
    """Experiment configuration failed validation"""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"invalid configuration at '{path}': {reason}")
