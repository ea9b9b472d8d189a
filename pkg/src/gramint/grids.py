"""Tensor-product parameter grids and their textual specs.

Axis specs follow the colon range convention ``"start:step:stop"`` (stop
inclusive) or an explicit list of values, e.g. ``[1, 2, 3, 4, 5, 9]``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import ConstructionError


def parse_axis(spec) -> np.ndarray:
    """Turn an axis spec into a sorted float array."""
    if isinstance(spec, str):
        parts = [float(s) for s in spec.split(":")]
        if len(parts) == 2:
            start, stop = parts
            step = 1.0
        elif len(parts) == 3:
            start, step, stop = parts
        else:
            raise ConstructionError(f"bad axis spec {spec!r}")
        if step <= 0 or stop < start:
            raise ConstructionError(f"bad axis spec {spec!r}")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        values = np.round(start + step * np.arange(count), 12)
    else:
        values = np.atleast_1d(np.asarray(spec, dtype=float))
    if values.ndim != 1 or values.size == 0:
        raise ConstructionError(f"bad axis spec {spec!r}")
    if np.any(np.diff(values) <= 0):
        raise ConstructionError(f"axis values must be strictly increasing: {spec!r}")
    return values


@dataclass(frozen=True)
class TensorGrid:
    """Cartesian product of one or two strictly increasing axes.

    Nodes are enumerated in C order: for two axes, node ``(i, j)`` has flat
    index ``i * len(axes[1]) + j``.
    """

    axes: tuple

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if len(axes) not in (1, 2):
            raise ConstructionError("only 1 or 2 parameters are supported")
        for a in axes:
            if a.ndim != 1 or a.size == 0 or np.any(np.diff(a) <= 0):
                raise ConstructionError("grid axes must be non-empty and strictly increasing")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def from_spec(cls, specs) -> "TensorGrid":
        """Grid from ``start:step:stop`` strings, one per axis.

        >>> TensorGrid.from_spec(["1:4:9", "4:3:10"]).shape
        (3, 3)
        """
        if isinstance(specs, (str, int, float)):
            specs = [specs]
        return cls(tuple(parse_axis(s) for s in specs))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def nodes(self) -> np.ndarray:
        """All nodes as a ``(size, dim)`` array in flat-index order."""
        return np.array(list(itertools.product(*self.axes)), dtype=float).reshape(self.size, self.dim)

    def lower(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    def upper(self) -> np.ndarray:
        return np.array([a[-1] for a in self.axes])

    def contains(self, mu, rtol=1e-12) -> bool:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.size != self.dim:
            return False
        span = np.maximum(self.upper() - self.lower(), 1.0)
        slack = rtol * span
        return bool(np.all(mu >= self.lower() - slack) and np.all(mu <= self.upper() + slack))

    def to_json(self) -> list:
        return [a.tolist() for a in self.axes]

    @classmethod
    def from_json(cls, data) -> "TensorGrid":
        return cls(tuple(np.asarray(a, dtype=float) for a in data))
