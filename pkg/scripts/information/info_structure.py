"""
Information Structure Module
============================

Per-agent information patterns (own observation post, delayed signaling
from other posts, perfect recall / sliding window / markov) and their
compilation into feature maps on a time grid.

A feature is a (source agent, time index, coordinate) triple; the feature
vector of agent i at step k lists its triples sorted by time, then source,
then coordinate.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from model.problem_spec import TimeGrid
from utils.exceptions import DelayNotOnGrid, HistoryTooShort, SelfSignaling

logger = logging.getLogger(__name__)

RECALL_MODES = ('perfect', 'window', 'markov')

Triple = Tuple[int, int, int]


@dataclass(frozen=True)
class Signal:
    """Observation post of `source` received with a delay of whole grid steps"""
    source: int
    delay: float = 1
    delay_time: Optional[float] = None

    def steps(self, grid: TimeGrid, agent: int) -> int:
        """Delay in grid steps; raises DelayNotOnGrid unless a whole number >= 1"""
        if self.delay_time is not None:
            raw = self.delay_time / grid.step
        else:
            raw = float(self.delay)
        steps = int(round(raw))
        if steps < 1 or abs(raw - steps) > 1e-9 * max(1.0, abs(raw)):
            shown = self.delay_time if self.delay_time is not None else self.delay
            raise DelayNotOnGrid(agent, self.source, shown)
        return steps


@dataclass(frozen=True)
class AgentInformation:
    """What one agent's strategy may depend on"""
    own: bool = True
    signals: Tuple[Signal, ...] = ()
    recall: str = 'perfect'
    window: int = 0
    project: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.recall not in RECALL_MODES:
            raise ValueError(f"recall must be one of {RECALL_MODES}, got '{self.recall}'")
        if self.window < 0:
            raise ValueError("window must be non-negative")
        object.__setattr__(self, 'signals', tuple(self.signals))
        if self.project is not None:
            object.__setattr__(self, 'project', tuple(int(c) for c in self.project))


@dataclass(frozen=True)
class InformationStructure:
    """Information patterns of all agents"""
    agents: Tuple[AgentInformation, ...]

    def __post_init__(self):
        object.__setattr__(self, 'agents', tuple(self.agents))

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @classmethod
    def markov(cls, num_agents: int) -> 'InformationStructure':
        """Every agent sees its own current observation only"""
        return cls(tuple(AgentInformation(recall='markov') for _ in range(num_agents)))

    @classmethod
    def centralized(cls, num_agents: int) -> 'InformationStructure':
        """Perfect recall of every post: own post undelayed, the others one step late"""
        return cls(tuple(
            AgentInformation(
                own=True,
                signals=tuple(Signal(j, 1) for j in range(num_agents) if j != i),
                recall='perfect',
            )
            for i in range(num_agents)
        ))


def information_from_config(block: Dict, num_agents: int) -> InformationStructure:
    """Build an InformationStructure from the config `info` block"""
    if block is None or not block.get('agents'):
        return InformationStructure.markov(num_agents)
    agents = []
    for entry in block['agents']:
        signals = tuple(Signal(int(s['from']), s.get('delay', 1), s.get('delay_time'))
                        for s in entry.get('signals', []))
        agents.append(AgentInformation(
            own=entry.get('own', True),
            signals=signals,
            recall=entry.get('recall', 'perfect'),
            window=int(entry.get('window', 0)),
            project=entry.get('project'),
        ))
    if len(agents) != num_agents:
        raise ValueError(f"info block lists {len(agents)} agents, problem has {num_agents}")
    return InformationStructure(tuple(agents))


@dataclass(frozen=True)
class FeatureMap:
    """Compiled feature triples per agent per step (steps 0..M)"""
    triples: Tuple[Tuple[Tuple[Triple, ...], ...], ...]
    num_steps: int
    obs_dims: Tuple[int, ...]
    _positions: Dict = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        # per (agent, step): source -> (times, coords, output positions)
        positions = {}
        for agent, per_step in enumerate(self.triples):
            for step, triples in enumerate(per_step):
                grouped: Dict[int, List[Tuple[int, int, int]]] = {}
                for pos, (source, time, coord) in enumerate(triples):
                    grouped.setdefault(source, []).append((time, coord, pos))
                positions[(agent, step)] = {
                    source: tuple(np.array(col, dtype=int) for col in zip(*entries))
                    for source, entries in grouped.items()
                }
        object.__setattr__(self, '_positions', positions)

    @property
    def num_agents(self) -> int:
        return len(self.triples)

    def features(self, agent: int, step: int) -> Tuple[Triple, ...]:
        return self.triples[agent][step]

    def dim(self, agent: int, step: int) -> int:
        return len(self.triples[agent][step])

    def max_dim(self, agent: int) -> int:
        return max(len(t) for t in self.triples[agent])

    def non_nested_steps(self, agent: int) -> List[int]:
        """Steps k whose feature set does not contain the set of step k-1"""
        steps = []
        per_step = self.triples[agent]
        for k in range(1, len(per_step)):
            if not set(per_step[k - 1]) <= set(per_step[k]):
                steps.append(k)
        return steps

    def is_nested(self, agent: int) -> bool:
        return not self.non_nested_steps(agent)

    def positions(self, agent: int, step: int):
        return self._positions[(agent, step)]


def _time_range(latest: int, recall: str, window: int) -> range:
    if latest < 0:
        return range(0)
    if recall == 'perfect':
        return range(0, latest + 1)
    if recall == 'window':
        return range(max(0, latest - window), latest + 1)
    return range(latest, latest + 1)


def compile_information(info: InformationStructure, grid: TimeGrid,
                        obs_dims: Sequence[int]) -> FeatureMap:
    """Compile an information structure into per-step feature triples"""
    obs_dims = tuple(int(d) for d in obs_dims)
    if info.num_agents != len(obs_dims):
        raise ValueError(f"information structure has {info.num_agents} agents, "
                         f"observations are given for {len(obs_dims)}")

    all_triples = []
    for agent, pattern in enumerate(info.agents):
        sources = []
        if pattern.own:
            own_coords = pattern.project if pattern.project is not None else tuple(range(obs_dims[agent]))
            if any(c < 0 or c >= obs_dims[agent] for c in own_coords):
                raise ValueError(f"agent {agent}: projection {own_coords} outside observation dim {obs_dims[agent]}")
            sources.append((agent, 0, own_coords))
        for signal in pattern.signals:
            if signal.source == agent:
                raise SelfSignaling(agent)
            if not 0 <= signal.source < len(obs_dims):
                raise ValueError(f"agent {agent}: unknown signaling source {signal.source}")
            sources.append((signal.source, signal.steps(grid, agent), tuple(range(obs_dims[signal.source]))))

        per_step = []
        for k in range(grid.num_steps + 1):
            triples = {
                (source, time, coord)
                for source, delay, coords in sources
                for time in _time_range(k - delay, pattern.recall, pattern.window)
                for coord in coords
            }
            per_step.append(tuple(sorted(triples, key=lambda s: (s[1], s[0], s[2]))))
        all_triples.append(tuple(per_step))

    fm = FeatureMap(tuple(all_triples), grid.num_steps, obs_dims)
    for agent in range(fm.num_agents):
        broken = fm.non_nested_steps(agent)
        if broken:
            logger.debug("agent %d: feature sets not nested at steps %s", agent, broken)
    return fm


def extract_features(fm: FeatureMap, obs_history: Sequence[np.ndarray], agent: int, step: int) -> np.ndarray:
    """Feature vector of `agent` at `step`

    obs_history holds one array per agent, shaped (L, k_j) for a single
    path or (P, L, k_j) for an ensemble; the result is (dim,) or (P, dim).
    """
    lead = np.shape(obs_history[agent])[:-2]
    out = np.empty(lead + (fm.dim(agent, step),))
    for source, (times, coords, pos) in fm.positions(agent, step).items():
        history = np.asarray(obs_history[source])
        available = history.shape[-2]
        needed = int(times.max()) + 1
        if needed > available:
            raise HistoryTooShort(source, needed, available)
        out[..., pos] = history[..., times, coords]
    return out
