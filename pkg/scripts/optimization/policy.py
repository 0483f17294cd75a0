"""
Policy Module
=============

Parametric decentralized feedback laws u^i(k) = proj_box(basis(I^i(k)) @ theta^i).
Agents read the history only through their compiled feature map, which makes
every PolicyProfile measurable with respect to its information structure.

Time dependence: the horizon is split into `segments` equal pieces and all
steps sharing (segment, regressor dimension) share one weight block.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from information.info_structure import FeatureMap, extract_features
from optimization.regression import PolynomialBasis

BASIS_KINDS = ('constant', 'linear', 'affine', 'quadratic', 'tanh')

BlockKey = Tuple[int, int]


@dataclass(frozen=True)
class FeatureBasis:
    """Feature-to-regressor expansion; an empty feature vector maps to [1]"""
    kind: str = 'affine'

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ValueError(f"basis kind must be one of {BASIS_KINDS}, got '{self.kind}'")

    def dim(self, num_features: int) -> int:
        if num_features == 0 or self.kind == 'constant':
            return 1
        if self.kind == 'linear':
            return num_features
        if self.kind == 'quadratic':
            return PolynomialBasis(2).dim(num_features)
        return num_features + 1

    def __call__(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        ones = np.ones(features.shape[:-1] + (1,))
        if features.shape[-1] == 0 or self.kind == 'constant':
            return ones
        if self.kind == 'linear':
            return features
        if self.kind == 'affine':
            return np.concatenate([ones, features], axis=-1)
        if self.kind == 'tanh':
            return np.concatenate([ones, np.tanh(features)], axis=-1)
        return PolynomialBasis(2).design(features)


@dataclass(frozen=True, eq=False)
class AgentPolicy:
    """Weight blocks of one agent, keyed by (segment, regressor dimension)"""
    agent: int
    action_dim: int
    basis: FeatureBasis
    segments: int
    num_steps: int
    keys: Tuple[BlockKey, ...]
    step_keys: Tuple[BlockKey, ...]
    blocks: Tuple[np.ndarray, ...]

    def segment_of_step(self, step: int) -> int:
        return min(step * self.segments // self.num_steps, self.segments - 1)

    def block_index(self, step: int) -> int:
        return self.keys.index(self.step_keys[step])

    def weights(self, step: int) -> np.ndarray:
        return self.blocks[self.block_index(step)]

    @property
    def num_parameters(self) -> int:
        return int(sum(b.size for b in self.blocks))

    def flat(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks])

    def with_flat(self, theta: np.ndarray) -> 'AgentPolicy':
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.num_parameters:
            raise ValueError(f"agent {self.agent}: expected {self.num_parameters} parameters, got {theta.size}")
        blocks, offset = [], 0
        for block in self.blocks:
            blocks.append(theta[offset:offset + block.size].reshape(block.shape).copy())
            offset += block.size
        return replace(self, blocks=tuple(blocks))

    def block_offsets(self) -> List[slice]:
        offsets = np.concatenate([[0], np.cumsum([b.size for b in self.blocks])]).astype(int)
        return [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]


def _initial_blocks(init, agent: int, keys, action_dim: int) -> Tuple[np.ndarray, ...]:
    shapes = [(r, action_dim) for _, r in keys]
    total = sum(r * d for r, d in shapes)
    if isinstance(init, (int, float)):
        return tuple(np.full(shape, float(init)) for shape in shapes)
    flat = np.asarray(init[agent], dtype=float).ravel()
    if flat.size != total:
        raise ValueError(f"agent {agent}: init has {flat.size} values, policy has {total} parameters")
    blocks, offset = [], 0
    for r, d in shapes:
        blocks.append(flat[offset:offset + r * d].reshape(r, d))
        offset += r * d
    return tuple(blocks)


@dataclass(frozen=True, eq=False)
class PolicyProfile:
    """Joint profile of all agents' feedback laws bound to one FeatureMap"""
    agents: Tuple[AgentPolicy, ...]
    feature_map: FeatureMap
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    action_slices: Tuple[slice, ...] = field(default=())

    @classmethod
    def build(cls, spec, feature_map: FeatureMap, basis: Union[FeatureBasis, Sequence[FeatureBasis]] = FeatureBasis(),
              segments: int = 1, init: Union[float, Sequence] = 0.0) -> 'PolicyProfile':
        """Profile with the given basis per agent; `init` fills or lists the weights"""
        bases = [basis] * spec.num_agents if isinstance(basis, FeatureBasis) else list(basis)
        num_steps = feature_map.num_steps
        segments = max(1, min(int(segments), num_steps))
        agents = []
        for i in range(spec.num_agents):
            step_keys = []
            for k in range(num_steps):
                segment = min(k * segments // num_steps, segments - 1)
                step_keys.append((segment, bases[i].dim(feature_map.dim(i, k))))
            keys = tuple(sorted(set(step_keys)))
            agents.append(AgentPolicy(
                agent=i,
                action_dim=spec.action_dims[i],
                basis=bases[i],
                segments=segments,
                num_steps=num_steps,
                keys=keys,
                step_keys=tuple(step_keys),
                blocks=_initial_blocks(init, i, keys, spec.action_dims[i]),
            ))
        return cls(tuple(agents), feature_map, np.asarray(spec.lower_bounds, dtype=float),
                   np.asarray(spec.upper_bounds, dtype=float), tuple(spec.action_slices))

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    def regressors(self, agent: int, step: int, observations: Sequence[np.ndarray]) -> np.ndarray:
        """(P, r) regressor matrix of `agent` at `step`"""
        features = extract_features(self.feature_map, observations, agent, step)
        return self.agents[agent].basis(features)

    def raw_agent_action(self, agent: int, step: int, observations: Sequence[np.ndarray]) -> np.ndarray:
        return self.regressors(agent, step, observations) @ self.agents[agent].weights(step)

    def agent_action(self, agent: int, step: int, observations: Sequence[np.ndarray]) -> np.ndarray:
        sl = self.action_slices[agent]
        return np.clip(self.raw_agent_action(agent, step, observations),
                       self.lower_bounds[sl], self.upper_bounds[sl])

    def actions(self, step: int, observations: Sequence[np.ndarray]) -> np.ndarray:
        """(P, D) projected joint action at `step`"""
        return np.concatenate([self.agent_action(i, step, observations) for i in range(self.num_agents)], axis=-1)

    def flat(self, agent: int) -> np.ndarray:
        return self.agents[agent].flat()

    def with_flat(self, agent: int, theta: np.ndarray) -> 'PolicyProfile':
        agents = list(self.agents)
        agents[agent] = agents[agent].with_flat(theta)
        return replace(self, agents=tuple(agents))

    def with_agent(self, agent: int, other: 'PolicyProfile') -> 'PolicyProfile':
        """This profile with agent `agent` replaced by the same agent of `other`"""
        agents = list(self.agents)
        agents[agent] = other.agents[agent]
        return replace(self, agents=tuple(agents))

    def gain_at(self, agent: int, step: int) -> np.ndarray:
        return self.agents[agent].weights(step)

    def describe(self) -> Dict:
        return {
            'agents': [
                {
                    'agent': a.agent,
                    'basis': a.basis.kind,
                    'segments': a.segments,
                    'blocks': [{'segment': s, 'regressors': r, 'weights': b.tolist()}
                               for (s, r), b in zip(a.keys, a.blocks)],
                }
                for a in self.agents
            ]
        }


@dataclass(frozen=True, eq=False)
class SwitchedProfile:
    """Follows `before` for steps < switch_step and `after` from then on"""
    before: PolicyProfile
    after: PolicyProfile
    switch_step: int

    @property
    def feature_map(self) -> FeatureMap:
        return self.before.feature_map

    def actions(self, step: int, observations: Sequence[np.ndarray]) -> np.ndarray:
        chosen = self.before if step < self.switch_step else self.after
        return chosen.actions(step, observations)
