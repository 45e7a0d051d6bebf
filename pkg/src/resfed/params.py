"""Flat float32 parameter vectors with named layer segments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ShapeError


class Segment(NamedTuple):
    name: str
    offset: int
    length: int


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Read-only float32 vector carrying weights, predictions or residuals.

    ``segments`` must tile ``values`` contiguously. All values are finite.
    """

    values: np.ndarray
    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float32).reshape(-1)
        values.flags.writeable = False
        if not np.all(np.isfinite(values)):
            raise ValueError("ParamVector values must be finite")
        segments = tuple(Segment(*s) for s in self.segments) or (Segment("params", 0, values.size),)
        offset = 0
        for seg in segments:
            if seg.offset != offset or seg.length < 0:
                raise ShapeError(f"segment {seg.name!r} is not contiguous at offset {offset}")
            offset += seg.length
        if offset != values.size:
            raise ShapeError(f"segments cover {offset} values, vector has {values.size}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "segments", segments)

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"ParamVector(n={len(self)}, segments={[s.name for s in self.segments]})"

    def like(self, values) -> "ParamVector":
        """New vector with this layout and the given values."""
        return ParamVector(values, self.segments)

    def check_same_shape(self, other: "ParamVector") -> None:
        if len(self) != len(other):
            raise ShapeError(f"length mismatch: {len(self)} vs {len(other)}")

    def bits_equal(self, other: "ParamVector") -> bool:
        return len(self) == len(other) and np.array_equal(
            self.values.view(np.uint32), other.values.view(np.uint32)
        )

    def segment(self, name: str) -> np.ndarray:
        for seg in self.segments:
            if seg.name == name:
                return self.values[seg.offset : seg.offset + seg.length]
        raise KeyError(name)

    @classmethod
    def zeros(cls, n: int, segments: Sequence[Segment] = ()) -> "ParamVector":
        return cls(np.zeros(n, dtype=np.float32), tuple(segments))

    @classmethod
    def concat(cls, named: Iterable[tuple[str, np.ndarray]]) -> "ParamVector":
        parts, segments, offset = [], [], 0
        for name, arr in named:
            flat = np.asarray(arr, dtype=np.float32).reshape(-1)
            parts.append(flat)
            segments.append(Segment(name, offset, flat.size))
            offset += flat.size
        values = np.concatenate(parts) if parts else np.zeros(0, dtype=np.float32)
        return cls(values, tuple(segments))
