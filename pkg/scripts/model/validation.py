"""
Spec Validation Module
======================

Randomized probe audit of a ProblemSpec (invertible diffusion, bounded and
Lipschitz sigma^-1 f, finite action boxes, pure evaluators) and the
sigma^-1 f ratio used by the likelihood, the Hamiltonians and the
variational process.
"""

import itertools
import logging
from dataclasses import dataclass, asdict
from typing import Optional, Union

import numpy as np

from model.problem_spec import ProblemSpec
from utils.exceptions import NonDeterministicEvaluator, SingularDiffusion, UnboundedDriftRatio

logger = logging.getLogger(__name__)

# Condition numbers above this count as singular
CONDITION_LIMIT = 1e12
MAX_CORNER_DIM = 10


@dataclass(frozen=True)
class ProbePlan:
    """Sampling plan for the probe audit"""
    num_probes: int = 256
    state_radius: float = 3.0
    seed: int = 0
    drift_bound: Optional[float] = None
    condition_limit: float = CONDITION_LIMIT


@dataclass(frozen=True)
class SpecAudit:
    """Sampled bounds reported by validate_spec"""
    max_drift_ratio: float
    drift_ratio_lipschitz: float
    diffusion_lipschitz: float
    worst_condition_number: float
    drift_bound: Optional[float]
    num_probes: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ValidatedSpec:
    """A ProblemSpec together with its probe audit"""
    spec: ProblemSpec
    audit: SpecAudit

    def __getattr__(self, name):
        # dataclass fields resolve normally; everything else reads through
        if name in ("spec", "audit"):
            raise AttributeError(name)
        return getattr(self.spec, name)


SpecLike = Union[ProblemSpec, ValidatedSpec]


def unwrap_spec(spec: SpecLike) -> ProblemSpec:
    return spec.spec if isinstance(spec, ValidatedSpec) else spec


def _as_batch(x: np.ndarray, width: int) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1, width)


def sigma_inv_drift(spec: SpecLike, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """sigma(t,x)^-1 f(t,x,u) by batched linear solve"""
    spec = unwrap_spec(spec)
    single = np.ndim(x) == 1
    x = _as_batch(x, spec.state_dim)
    u = _as_batch(u, spec.total_action_dim)
    drift = np.asarray(spec.drift(t, x, u), dtype=float).reshape(x.shape)
    ratio = solve_diffusion(spec, t, x, drift)
    return ratio[0] if single else ratio


def solve_diffusion(spec: SpecLike, t: float, x: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve sigma(t,x) y = rhs path by path"""
    spec = unwrap_spec(spec)
    sigma = np.asarray(spec.diffusion(t, x), dtype=float).reshape(x.shape[0], spec.state_dim, spec.state_dim)
    if spec.state_dim == 1:
        scale = sigma[:, 0, 0]
        bad = np.flatnonzero(scale == 0.0)
        if bad.size:
            raise SingularDiffusion(t, x[bad[0]])
        return rhs / scale[:, None]
    try:
        return np.linalg.solve(sigma, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        bad = np.flatnonzero(np.abs(np.linalg.det(sigma)) == 0.0)
        raise SingularDiffusion(t, x[bad[0]] if bad.size else x[0]) from None


def project_actions(spec, u: np.ndarray) -> np.ndarray:
    """Componentwise projection onto the action boxes"""
    return np.clip(u, spec.lower_bounds, spec.upper_bounds)


def _sample_probes(spec: ProblemSpec, plan: ProbePlan):
    rng = np.random.default_rng(plan.seed)
    n = spec.state_dim
    xs = [rng.uniform(-plan.state_radius, plan.state_radius, size=(plan.num_probes, n))]
    if n <= MAX_CORNER_DIM:
        corners = np.array(list(itertools.product([-1.0, 1.0], repeat=n))) * plan.state_radius
        xs.append(corners)
    x = np.vstack(xs)
    count = x.shape[0]
    t = rng.uniform(0.0, spec.horizon, size=count)
    lo, hi = spec.lower_bounds, spec.upper_bounds
    u = lo + (hi - lo) * rng.uniform(size=(count, spec.total_action_dim))
    return t, x, u


def _check_pure(name: str, first: np.ndarray, second: np.ndarray) -> None:
    if not np.array_equal(np.asarray(first), np.asarray(second), equal_nan=True):
        raise NonDeterministicEvaluator(name)


def validate_spec(spec: SpecLike, probes: ProbePlan = ProbePlan()) -> ValidatedSpec:
    """Probe audit; rejects singular diffusion and drift ratios above the declared bound"""
    spec = unwrap_spec(spec)
    t, x, u = _sample_probes(spec, probes)
    count = x.shape[0]

    sigma = np.empty((count, spec.state_dim, spec.state_dim))
    ratio = np.empty((count, spec.state_dim))
    for p in range(count):
        sig_p = np.asarray(spec.diffusion(t[p], x[p:p + 1]), dtype=float).reshape(spec.state_dim, spec.state_dim)
        _check_pure("diffusion", sig_p, np.asarray(spec.diffusion(t[p], x[p:p + 1]), dtype=float).reshape(sig_p.shape))
        sigma[p] = sig_p
        drift_p = spec.drift(t[p], x[p:p + 1], u[p:p + 1])
        _check_pure("drift", drift_p, spec.drift(t[p], x[p:p + 1], u[p:p + 1]))
        cond = np.linalg.cond(sig_p)
        if not np.isfinite(cond) or cond > probes.condition_limit:
            raise SingularDiffusion(t[p], x[p])
        ratio[p] = np.linalg.solve(sig_p, np.asarray(drift_p, dtype=float).reshape(spec.state_dim))

    _check_pure("running_cost", spec.running_cost(t[0], x[:1], u[:1]), spec.running_cost(t[0], x[:1], u[:1]))
    _check_pure("terminal_cost", spec.terminal_cost(x[:1]), spec.terminal_cost(x[:1]))

    norms = np.linalg.norm(ratio, axis=1)
    worst = int(np.argmax(norms))
    bound = probes.drift_bound if probes.drift_bound is not None else spec.drift_bound
    if bound is not None and norms[worst] > bound:
        raise UnboundedDriftRatio(t[worst], x[worst], u[worst], norms[worst], bound)

    # Lipschitz ratios on consecutive probe pairs (same t for sigma)
    dx = np.linalg.norm(x[1:] - x[:-1], axis=1)
    du = np.linalg.norm(u[1:] - u[:-1], axis=1)
    sigma_shift = np.array([
        np.linalg.norm(np.asarray(spec.diffusion(t[p], x[p + 1:p + 2]), dtype=float).reshape(sigma[p].shape) - sigma[p])
        for p in range(count - 1)
    ])
    valid = dx > 1e-12
    diffusion_lipschitz = float(np.max(sigma_shift[valid] / dx[valid])) if np.any(valid) else 0.0
    spread = dx + du
    valid = spread > 1e-12
    ratio_shift = np.linalg.norm(ratio[1:] - ratio[:-1], axis=1)
    drift_ratio_lipschitz = float(np.max(ratio_shift[valid] / spread[valid])) if np.any(valid) else 0.0

    audit = SpecAudit(
        max_drift_ratio=float(norms[worst]),
        drift_ratio_lipschitz=drift_ratio_lipschitz,
        diffusion_lipschitz=diffusion_lipschitz,
        worst_condition_number=float(np.max(np.linalg.cond(sigma))),
        drift_bound=bound,
        num_probes=count,
    )
    logger.info("validated spec '%s': max|sigma^-1 f|=%.4g, worst cond=%.4g",
                spec.name, audit.max_drift_ratio, audit.worst_condition_number)
    return ValidatedSpec(spec, audit)
