"""Coordinate spaces: the hyperboloid model and a Euclidean comparator.

Hyperboloid distance between ``x, y`` in R^n (points lifted with
``x0 = sqrt(1 + |x|^2)``) is ``|c| * arccosh(x0*y0 - <x, y>)``.  The kernels
evaluate it as ``|c| * 2 * asinh(sqrt(q) / 2)`` with
``q = |x-y|^2 - (x0-y0)^2`` and ``x0-y0 = <x-y, x+y> / (x0+y0)``: same value,
but no cancellation for near-coincident points, so ``d(x, x) == 0`` exactly.
Negative ``q`` from rounding is clamped to 0, the equivalent of clamping the
arccosh argument at 1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

HYPERBOLOID_TAG = 0
EUCLIDEAN_TAG = 1


class Model(enum.IntEnum):
    HYPERBOLOID = HYPERBOLOID_TAG
    EUCLIDEAN = EUCLIDEAN_TAG


@dataclass(frozen=True)
class Space:
    model: Model = Model.HYPERBOLOID
    curvature: float = -1.0
    dim: int = 10

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.dim < 2:
            raise ValueError(f"dimension must be >= 2, got {self.dim}")
        if self.model is Model.HYPERBOLOID:
            if not self.curvature < 0 or not math.isfinite(self.curvature):
                raise ValueError(
                    f"hyperboloid curvature must be finite and < 0, got {self.curvature}; "
                    "use Space.euclidean() for the flat limit")
        elif self.curvature > 0:
            raise ValueError("curvature must be <= 0")

    @classmethod
    def hyperboloid(cls, curvature: float = -1.0, dim: int = 10) -> "Space":
        return cls(Model.HYPERBOLOID, float(curvature), dim)

    @classmethod
    def euclidean(cls, dim: int = 10) -> "Space":
        return cls(Model.EUCLIDEAN, 0.0, dim)

    @classmethod
    def for_curvature(cls, curvature: float, dim: int = 10) -> "Space":
        """Hyperboloid for ``c < 0``; the Euclidean model stands in for ``c == 0``."""
        return cls.euclidean(dim) if curvature == 0 else cls.hyperboloid(curvature, dim)

    @property
    def scale(self) -> float:
        return abs(self.curvature) if self.model is Model.HYPERBOLOID else 1.0

    @property
    def tag(self) -> str:
        if self.model is Model.EUCLIDEAN:
            return f"euclidean(n={self.dim})"
        return f"hyperboloid(c={self.curvature:g}, n={self.dim})"


@njit(cache=True, nogil=True)
def hyp_dist(x, y, scale):
    sx = 0.0
    sy = 0.0
    d2 = 0.0
    cross = 0.0
    for i in range(x.shape[0]):
        a = x[i]
        b = y[i]
        sx += a * a
        sy += b * b
        diff = a - b
        d2 += diff * diff
        cross += diff * (a + b)
    h = cross / (math.sqrt(1.0 + sx) + math.sqrt(1.0 + sy))
    q = d2 - h * h
    if q <= 0.0:
        return 0.0
    return 2.0 * math.asinh(0.5 * math.sqrt(q)) * scale


@njit(cache=True, nogil=True)
def euc_dist(x, y):
    s = 0.0
    for i in range(x.shape[0]):
        diff = x[i] - y[i]
        s += diff * diff
    return math.sqrt(s)


@njit(cache=True, nogil=True)
def point_dist(x, y, model, scale):
    if model == HYPERBOLOID_TAG:
        return hyp_dist(x, y, scale)
    return euc_dist(x, y)


@njit(cache=True, nogil=True)
def _rowwise(xs, ys, model, scale, out):
    for i in range(xs.shape[0]):
        out[i] = point_dist(xs[i], ys[i], model, scale)
    return out


@njit(cache=True, nogil=True)
def _to_many(x, ys, model, scale, out):
    for i in range(ys.shape[0]):
        out[i] = point_dist(x, ys[i], model, scale)
    return out


def _check(space: Space, *points: np.ndarray) -> None:
    for p in points:
        if p.shape[-1] != space.dim:
            raise ValueError(f"point has dimension {p.shape[-1]}, space has {space.dim}")


def distance(space: Space, x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check(space, x, y)
    return float(point_dist(x, y, int(space.model), space.scale))


def rowwise_distance(space: Space, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """``d(xs[i], ys[i])`` for each row."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    _check(space, xs, ys)
    if xs.shape != ys.shape:
        raise ValueError("row arrays differ in shape")
    return _rowwise(xs, ys, int(space.model), space.scale, np.empty(len(xs)))


def distances_to(space: Space, x: np.ndarray, ys: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    _check(space, x, ys)
    return _to_many(x, ys, int(space.model), space.scale, np.empty(len(ys)))
