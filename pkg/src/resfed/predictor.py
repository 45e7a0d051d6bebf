"""Model trajectories and the sliding-window predictor family.

A predictor forecasts the far end of a model transition (``source ->
target``) from the current source model plus the last ``window`` observed
transitions. ``window=0`` is the stationary predictor (forecast = current
model); ``window=1`` is the linear one (replay the last transition).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import InsufficientHistoryError, InvalidConfigError, ShapeError
from .params import ParamVector


@dataclass(frozen=True)
class PredictorConfig:
    window: int = 1

    def __post_init__(self):
        if self.window < 0:
            raise InvalidConfigError("predictor window must be >= 0")


class Trajectory:
    """Bounded FIFO of same-shaped ParamVectors; the oldest entry is evicted at capacity."""

    def __init__(self, capacity: int):
        if capacity < 0:
            raise InvalidConfigError("trajectory capacity must be >= 0")
        self.capacity = capacity
        self._entries: deque[ParamVector] = deque(maxlen=capacity)

    def push(self, params: ParamVector) -> "Trajectory":
        if self._entries and len(self._entries[0]) != len(params):
            raise ShapeError(f"trajectory holds length {len(self._entries[0])}, got {len(params)}")
        if self.capacity:
            self._entries.append(params)
        return self

    @property
    def entries(self) -> list[ParamVector]:
        """Oldest first."""
        return list(self._entries)

    @property
    def newest(self) -> ParamVector:
        if not self._entries:
            raise InsufficientHistoryError("trajectory is empty")
        return self._entries[-1]

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[ParamVector]:
        return iter(self._entries)

    def bits_equal(self, other: "Trajectory") -> bool:
        return len(self) == len(other) and all(a.bits_equal(b) for a, b in zip(self, other))


def push(trajectory: Trajectory, params: ParamVector) -> Trajectory:
    return trajectory.push(params)


def predict(
    local_traj: Sequence[ParamVector] | Trajectory,
    global_traj: Sequence[ParamVector] | Trajectory,
    current: ParamVector,
    config: PredictorConfig,
) -> ParamVector:
    """Forecast the model after the next transition out of ``current``.

    ``local_traj`` holds past transition targets and ``global_traj`` the
    matching sources, oldest first; only the newest ``window`` of each are
    used. With T = window and tau = 1 the newest pair::

        pred = current + sum_{tau=1..T} (-1)**(T - tau) * (T - tau + 1) * (target[-tau] - source[-tau])

    The sum is accumulated in float32 from tau = T down to 1 and added to
    ``current`` last, so T=1 is bitwise ``current + (target[-1] - source[-1])``.
    """
    window = config.window
    if window == 0:
        return current
    targets, sources = list(local_traj), list(global_traj)
    if len(targets) < window or len(sources) < window:
        raise InsufficientHistoryError(
            f"window {window} needs {window} entries per trajectory, have {len(targets)} and {len(sources)}"
        )
    n = len(current)
    for v in targets[-window:] + sources[-window:]:
        if len(v) != n:
            raise ShapeError(f"trajectory entry of length {len(v)} vs current {n}")
    acc = None
    for tau in range(window, 0, -1):
        coef = np.float32((-1) ** (window - tau) * (window - tau + 1))
        diff = targets[-tau].values - sources[-tau].values
        term = diff if coef == 1 else coef * diff
        acc = term if acc is None else acc + term
    return current.like(current.values + acc)


def residual(actual: ParamVector, predicted: ParamVector) -> ParamVector:
    actual.check_same_shape(predicted)
    return actual.like(actual.values - predicted.values)


def recover(predicted: ParamVector, received: ParamVector) -> ParamVector:
    """predicted + received, elementwise in float32. Sender and receiver both cache this value."""
    predicted.check_same_shape(received)
    return predicted.like(predicted.values + received.values)
