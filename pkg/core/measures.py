"""
Empirical probability measures on R^m and the functionals defined on them.

A ``ParticleCloud`` is the equal-weight measure (1/N) sum_i delta_{x_i}. A
``MeasureFlow`` stacks clouds along a time grid. Distances are Wasserstein-p
metrics between equal-size clouds: the sorted formula in one dimension and an
exact optimal assignment otherwise.
"""

import logging
import math
from typing import Iterable, Optional, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

DEFAULT_ASSIGNMENT_CAP = 256


class AssignmentCapExceeded(ValueError):
    """Raised when an exact assignment is requested for too many particles."""

    def __init__(self, n: int, cap: int):
        super().__init__(
            f"exact assignment capped at N={cap}, got N={n}; "
            "use the one-dimensional distance or a moment proxy"
        )
        self.n = n
        self.cap = cap


def pairwise_mean(values: np.ndarray) -> Union[float, np.ndarray]:
    """
    Mean over the first axis in fixed index order.

    The reduced axis is made contiguous so numpy applies its pairwise
    summation, which depends only on the values and their order.
    """
    arr = np.asarray(values, dtype=float)
    n = arr.shape[0]
    if n == 0:
        raise ValueError("mean of an empty collection")
    if arr.ndim == 1:
        return float(np.add.reduce(arr) / n)
    flat = np.ascontiguousarray(np.moveaxis(arr, 0, -1))
    return np.add.reduce(flat, axis=-1) / n


# ══════════════════════════════════════════════════════════════════════════════
#  CONTAINERS
# ══════════════════════════════════════════════════════════════════════════════

class Sample:
    """I.i.d. draws of a scalar random variable."""

    __slots__ = ("_values",)

    def __init__(self, values: Iterable[float]):
        arr = np.array(values, dtype=float).ravel()
        if arr.size == 0:
            raise ValueError("sample must contain at least one value")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sample values must be finite")
        arr.flags.writeable = False
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __len__(self) -> int:
        return self._values.size


class ParticleCloud:
    """Equal-weight empirical measure on R^m, stored as an (N, m) array."""

    __slots__ = ("_points", "_mean")

    def __init__(self, points, dim: Optional[int] = None, copy: bool = True):
        arr = np.array(points, dtype=float) if copy else np.asarray(points, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValueError(f"points must be an (N, m) array, got shape {arr.shape}")
        if arr.shape[0] == 0:
            raise ValueError("a particle cloud needs at least one point")
        if dim is not None and arr.shape[1] != dim:
            raise ValueError(f"expected points in R^{dim}, got R^{arr.shape[1]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("particle coordinates must be finite")
        arr.flags.writeable = False
        self._points = arr
        self._mean = None

    @classmethod
    def dirac(cls, n: int, dim: int = 1) -> "ParticleCloud":
        return cls(np.zeros((n, dim)), copy=False)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    @property
    def size(self) -> int:
        return self._points.shape[0]

    def __len__(self) -> int:
        return self.size

    @property
    def mean(self) -> np.ndarray:
        # recomputing gives the same bits, so concurrent first access is harmless
        if self._mean is None:
            self._mean = pairwise_mean(self._points)
        return self._mean

    def norms(self) -> np.ndarray:
        if self.dim == 1:
            return np.abs(self._points[:, 0])
        return np.linalg.norm(self._points, axis=1)

    def same_measure(self, other: "ParticleCloud") -> bool:
        """Equality as measures, i.e. up to a permutation of the points."""
        if self._points.shape != other.points.shape:
            return False
        order_a = np.lexsort(self._points.T[::-1])
        order_b = np.lexsort(other.points.T[::-1])
        return bool(np.array_equal(self._points[order_a], other.points[order_b]))


class MeasureFlow:
    """
    Time-indexed family of particle clouds sharing N and m.

    Stored as ``points`` with shape (K, N, m) next to the K grid times.
    """

    __slots__ = ("_times", "_points")

    def __init__(self, times, points):
        times = np.array(times, dtype=float).ravel()
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 2:
            pts = pts[:, :, None]
        if pts.ndim != 3 or pts.shape[0] != times.size:
            raise ValueError(
                f"points must have shape (len(times), N, m); got {pts.shape} for {times.size} times"
            )
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("flow times must be strictly increasing")
        if not np.all(np.isfinite(pts)):
            raise ValueError("flow contains non-finite coordinates")
        self._times = times
        self._points = pts

    @classmethod
    def constant(cls, cloud: ParticleCloud, times) -> "MeasureFlow":
        times = np.asarray(times, dtype=float)
        pts = np.broadcast_to(cloud.points, (times.size,) + cloud.points.shape)
        return cls(times, np.ascontiguousarray(pts))

    @classmethod
    def dirac(cls, times, n: int, dim: int = 1) -> "MeasureFlow":
        times = np.asarray(times, dtype=float)
        return cls(times, np.zeros((times.size, n, dim)))

    @property
    def times(self) -> np.ndarray:
        return self._times

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def n_particles(self) -> int:
        return self._points.shape[1]

    @property
    def dim(self) -> int:
        return self._points.shape[2]

    def __len__(self) -> int:
        return self._times.size

    def cloud(self, k: int) -> ParticleCloud:
        return ParticleCloud(self._points[k], copy=False)

    def norms(self) -> np.ndarray:
        """|x_i(t_k)| as a (K, N) array."""
        if self.dim == 1:
            return np.abs(self._points[:, :, 0])
        return np.linalg.norm(self._points, axis=2)

    def moments(self, p: float) -> np.ndarray:
        _check_order(p)
        return pairwise_mean(np.moveaxis(self.norms() ** p, 1, 0))

    def means(self) -> np.ndarray:
        return pairwise_mean(np.moveaxis(self._points, 1, 0))


# ══════════════════════════════════════════════════════════════════════════════
#  FUNCTIONALS
# ══════════════════════════════════════════════════════════════════════════════

def _check_order(p: float) -> None:
    if not p >= 1:
        raise ValueError(f"order must be >= 1, got {p}")


def essential_bracket(sample, order: float) -> float:
    """
    [X]_p = E[(X^+)^p]^(1/p) for p < inf and [X]_inf = ess sup X.

    The infinite order keeps the sign; every finite order is nonnegative.
    """
    values = sample.values if isinstance(sample, Sample) else Sample(sample).values
    _check_order(order)
    if math.isinf(order):
        return float(np.max(values))
    positive = np.maximum(values, 0.0)
    return float(pairwise_mean(positive ** order) ** (1.0 / order))


def moment(cloud: ParticleCloud, p: float) -> float:
    """(1/N) sum |x_i|^p, i.e. the p-th power of the distance to delta_0."""
    _check_order(p)
    return float(pairwise_mean(cloud.norms() ** p))


def distance_to_dirac(cloud: ParticleCloud, p: float) -> float:
    return moment(cloud, p) ** (1.0 / p)


def _check_pair(a: ParticleCloud, b: ParticleCloud) -> None:
    if a.size != b.size:
        raise ValueError(f"clouds must have equal size, got {a.size} and {b.size}")
    if a.dim != b.dim:
        raise ValueError(f"clouds live in different dimensions ({a.dim} vs {b.dim})")


def wasserstein_1d(a: ParticleCloud, b: ParticleCloud, p: float) -> float:
    """Wasserstein-p distance of two scalar clouds via sorted order statistics."""
    _check_order(p)
    _check_pair(a, b)
    if a.dim != 1:
        raise ValueError("wasserstein_1d needs one-dimensional clouds")
    gap = np.abs(np.sort(a.points[:, 0]) - np.sort(b.points[:, 0]))
    return float(pairwise_mean(gap ** p) ** (1.0 / p))


def wasserstein_exact(
    a: ParticleCloud,
    b: ParticleCloud,
    p: float,
    max_n: int = DEFAULT_ASSIGNMENT_CAP,
) -> float:
    """Exact Wasserstein-p distance by optimal assignment (any dimension)."""
    _check_order(p)
    _check_pair(a, b)
    if a.size > max_n:
        raise AssignmentCapExceeded(a.size, max_n)
    cost = cdist(a.points, b.points) ** p
    rows, cols = linear_sum_assignment(cost)
    return float(pairwise_mean(cost[rows, cols]) ** (1.0 / p))


def wasserstein(
    a: ParticleCloud,
    b: ParticleCloud,
    p: float,
    max_n: int = DEFAULT_ASSIGNMENT_CAP,
) -> float:
    if a.dim == 1 and b.dim == 1:
        return wasserstein_1d(a, b, p)
    return wasserstein_exact(a, b, p, max_n=max_n)


def flow_distance(
    flow_a: MeasureFlow,
    flow_b: MeasureFlow,
    p: float,
    max_n: int = DEFAULT_ASSIGNMENT_CAP,
) -> Tuple[np.ndarray, bool]:
    """
    Per-time Wasserstein-p distance between two flows on the same grid.

    Returns the distance curve and a flag that is True when the moment proxy
    |W_p(mu, delta_0) - W_p(nu, delta_0)| was used, which only bounds the
    distance from below.
    """
    _check_order(p)
    if len(flow_a) != len(flow_b) or not np.allclose(flow_a.times, flow_b.times):
        raise ValueError("flows are defined on different grids")
    if flow_a.points.shape[1:] != flow_b.points.shape[1:]:
        raise ValueError("flows have different particle counts or dimensions")

    if flow_a.dim == 1:
        sorted_a = np.sort(flow_a.points[:, :, 0], axis=1)
        sorted_b = np.sort(flow_b.points[:, :, 0], axis=1)
        gap = np.abs(sorted_a - sorted_b) ** p
        return pairwise_mean(np.ascontiguousarray(gap.T)) ** (1.0 / p), False

    if flow_a.n_particles <= max_n:
        values = [
            wasserstein_exact(flow_a.cloud(k), flow_b.cloud(k), p, max_n=max_n)
            for k in range(len(flow_a))
        ]
        return np.asarray(values), False

    logger.info(
        "N=%d above assignment cap %d in R^%d; using the moment proxy",
        flow_a.n_particles, max_n, flow_a.dim,
    )
    proxy = np.abs(flow_a.moments(p) ** (1.0 / p) - flow_b.moments(p) ** (1.0 / p))
    return proxy, True
