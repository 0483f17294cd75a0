"""
Observation Functionals
=======================

Noiseless observation posts z^i(t) = h^i(t, x history). Each functional sees
the whole state prefix x(0..k) of every path and returns a (P, dim) array.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np


class ObservationFunctional:
    """Base interface: dim and __call__(k, times, history) -> (P, dim)"""

    dim: int

    def __call__(self, k: int, times: np.ndarray, history: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class PointwiseObservation(ObservationFunctional):
    """z(t_k) = x(t_k)[coords]"""
    coords: Tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __call__(self, k, times, history):
        return history[:, k, list(self.coords)]


@dataclass(frozen=True)
class LaggedObservation(ObservationFunctional):
    """z(t_k) = x(t_{k-lag})[coords], zero before the first available time"""
    lag: int
    coords: Tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __call__(self, k, times, history):
        if k < self.lag:
            return np.zeros((history.shape[0], self.dim))
        return history[:, k - self.lag, list(self.coords)]


@dataclass(frozen=True)
class AffineObservation(ObservationFunctional):
    """z(t_k) = C x(t_k) + d"""
    matrix: np.ndarray
    offset: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return int(np.atleast_2d(self.matrix).shape[0])

    def __call__(self, k, times, history):
        values = history[:, k, :] @ np.atleast_2d(self.matrix).T
        if self.offset is not None:
            values = values + np.asarray(self.offset, dtype=float)
        return values

    def __eq__(self, other):
        return (isinstance(other, AffineObservation)
                and np.array_equal(self.matrix, other.matrix)
                and np.array_equal(self.offset, other.offset))

    def __hash__(self):
        return hash(np.asarray(self.matrix).tobytes())


@dataclass(frozen=True)
class CallableObservation(ObservationFunctional):
    """Wraps a user function (k, times, history) -> (P, dim)"""
    func: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    dim: int = 1
    name: str = field(default="custom", compare=False)

    def __call__(self, k, times, history):
        values = np.asarray(self.func(k, times, history), dtype=float)
        return values.reshape(history.shape[0], self.dim)


def observation_from_config(block: dict) -> ObservationFunctional:
    """Build an observation functional from a config block"""
    kind = block.get("type", "pointwise")
    if kind == "pointwise":
        return PointwiseObservation(tuple(block["coords"]))
    if kind == "lagged":
        return LaggedObservation(int(block["lag"]), tuple(block["coords"]))
    if kind == "affine":
        offset = block.get("offset")
        return AffineObservation(np.asarray(block["matrix"], dtype=float),
                                 None if offset is None else np.asarray(offset, dtype=float))
    raise ValueError(f"unknown observation type '{kind}'")


def observation_dims(observations: Sequence[ObservationFunctional]) -> Tuple[int, ...]:
    """Per-agent observation dimensions k_i"""
    return tuple(int(h.dim) for h in observations)
