"""Finite metric measure spaces, ball queries and Ahlfors-regular subsets.

A ``PointCloudSpace`` stores coordinates, per-point masses and a metric tag.
Distances are materialised once as a dense matrix; every ball query after that
is a row scan.  Ball masses at many radii are answered from each row sorted by
distance together with cumulative masses, so a full radius ladder for every
point costs one sort per row plus a ``searchsorted``.

Regular subsets are extracted by checking the two-sided growth bound

    r**n / j  <=  mu(B(x, r))  <=  j * r**n

on a geometric radius ladder below the scale ceiling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.distance import cdist

LADDER_BASE = 16.0
DEFAULT_RADII_PER_STEP = 8

METRIC_KINDS = ("euclidean", "snowflake", "heisenberg", "matrix")


# =============================================================================
# Metric oracles
# =============================================================================

def koranyi_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Korányi gauge distance ||q^{-1} p|| between rows of ``a`` and ``b``.

    Group law (x, y, t)(x', y', t') = (x+x', y+y', t+t' + (x y' - y x')/2).
    """
    ax, ay, at = a[:, 0:1], a[:, 1:2], a[:, 2:3]
    bx, by, bt = b[:, 0][None, :], b[:, 1][None, :], b[:, 2][None, :]
    dx = ax - bx
    dy = ay - by
    dt = at - bt + 0.5 * (ax * by - bx * ay)
    planar = dx * dx + dy * dy
    return np.sqrt(np.sqrt(planar * planar + 16.0 * dt * dt))


def pairwise_distances(coords: np.ndarray, kind: str, alpha: float = 0.5,
                       matrix: np.ndarray | None = None,
                       rows: np.ndarray | None = None) -> np.ndarray:
    """Distances from ``coords[rows]`` (default: all) to every point."""
    if kind == "matrix":
        assert matrix is not None
        return matrix if rows is None else matrix[rows]
    left = coords if rows is None else coords[rows]
    if kind == "euclidean":
        return cdist(left, coords)
    if kind == "snowflake":
        return cdist(left, coords) ** alpha
    if kind == "heisenberg":
        return koranyi_distances(left, coords)
    raise ValueError(f"unknown metric kind {kind!r}")


def radius_ladder(top: float, floor: float, per_step: int = DEFAULT_RADII_PER_STEP,
                  base: float = LADDER_BASE) -> np.ndarray:
    """Geometric radii strictly below ``top`` and at least ``floor``, decreasing."""
    if top <= 0 or floor <= 0 or top <= floor:
        return np.zeros(0)
    count = int(np.floor(per_step * np.log(top / floor) / np.log(base) + 1e-9))
    idx = np.arange(1, count + 1)
    radii = top * base ** (-idx / per_step)
    return radii[radii >= floor * (1 - 1e-12)]


# =============================================================================
# Space
# =============================================================================

@dataclass(eq=False)
class PointCloudSpace:
    """Weighted finite point set with a metric oracle.

    ``metric`` is one of ``euclidean``, ``snowflake`` (with ``alpha``),
    ``heisenberg`` (coordinates in R^3) or ``matrix`` (explicit distances).
    """

    coords: np.ndarray
    weights: np.ndarray
    metric: str = "euclidean"
    alpha: float = 0.5
    matrix: np.ndarray | None = None
    _dist: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.metric not in METRIC_KINDS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.metric == "matrix":
            if self.matrix is None:
                raise ValueError("matrix metric needs an explicit distance matrix")
            self.matrix = np.asarray(self.matrix, dtype=float)
            n = self.matrix.shape[0]
            if self.matrix.shape != (n, n):
                raise ValueError("distance matrix must be square")
            if self.coords is None or len(self.coords) != n:
                self.coords = np.zeros((n, 0))
        self.coords = np.asarray(self.coords, dtype=float)
        if self.coords.ndim == 1:
            self.coords = self.coords[:, None]
        if len(self.coords) != len(self.weights):
            raise ValueError("coords and weights disagree in length")
        if len(self.weights) == 0:
            raise ValueError("space must contain at least one point")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if not self.weights.sum() > 0:
            raise ValueError("total mass must be positive")
        if self.metric == "snowflake" and not 0 < self.alpha < 1:
            raise ValueError("snowflake exponent must lie in (0, 1)")
        if self.metric == "heisenberg" and self.coords.shape[1] != 3:
            raise ValueError("heisenberg points live in R^3")

    # -- basic data ---------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def distances(self) -> np.ndarray:
        if self._dist is None:
            d = pairwise_distances(self.coords, self.metric, self.alpha, self.matrix)
            d = np.array(d, dtype=float, copy=True)
            np.fill_diagonal(d, 0.0)
            d = 0.5 * (d + d.T)  # remove round-off asymmetry
            self._dist = d
        return self._dist

    def distance(self, i: int, j: int) -> float:
        return float(self.distances[i, j])

    def _check(self, x: int) -> int:
        if not 0 <= int(x) < self.size:
            raise IndexError(f"point id {x} out of range")
        return int(x)

    @cached_property
    def min_distance(self) -> float:
        d = self.distances
        off = d[~np.eye(self.size, dtype=bool)]
        off = off[off > 0]
        return float(off.min()) if off.size else 0.0

    @cached_property
    def diameter(self) -> float:
        return float(self.distances.max())

    @cached_property
    def _sorted_rows(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        order = np.argsort(self.distances, axis=1, kind="stable").astype(np.int32)
        sd = np.take_along_axis(self.distances, order, axis=1)
        cw = np.cumsum(self.weights[order], axis=1)
        return order, sd, cw

    def default_floor(self) -> float:
        """Smallest radius worth sampling: twice the minimal interpoint distance."""
        m = self.min_distance
        return 2.0 * m if m > 0 else 1e-12

    def ladder(self, top: float, per_step: int = DEFAULT_RADII_PER_STEP,
               floor: float | None = None) -> np.ndarray:
        return radius_ladder(top, self.default_floor() if floor is None else floor, per_step)

    # -- balls --------------------------------------------------------------

    def ball_members(self, x: int, r: float) -> np.ndarray:
        """Ids of the closed ball {y : d(x, y) <= r}."""
        x = self._check(x)
        if r < 0:
            raise ValueError("radius must be nonnegative")
        return np.flatnonzero(self.distances[x] <= r)

    def ball_measure(self, x: int, r: float) -> float:
        x = self._check(x)
        if r < 0:
            raise ValueError("radius must be nonnegative")
        return float(self.weights[self.distances[x] <= r].sum())

    def ball_masses(self, radii: np.ndarray, points: np.ndarray | None = None,
                    mask: np.ndarray | None = None) -> np.ndarray:
        """Matrix of ball masses, shape (len(points), len(radii)).

        With ``mask`` only the mass of masked points is counted.
        """
        radii = np.asarray(radii, dtype=float)
        pts = np.arange(self.size) if points is None else np.asarray(points, dtype=int)
        order, sd, cw = self._sorted_rows
        out = np.empty((len(pts), len(radii)))
        if len(pts) == 0 or len(radii) == 0:
            return out
        if mask is None:
            rows = cw[pts]
        else:
            w = np.where(np.asarray(mask, dtype=bool), self.weights, 0.0)
            rows = np.cumsum(w[order[pts]], axis=1)
        padded = np.concatenate([np.zeros((len(pts), 1)), rows], axis=1)
        for row, p in enumerate(pts):
            idx = np.searchsorted(sd[p], radii, side="right")
            out[row] = padded[row, idx]
        return out

    def set_distance(self, a: np.ndarray, b: np.ndarray) -> float:
        """min over pairs; inf when either set is empty."""
        a = np.asarray(a, dtype=int)
        b = np.asarray(b, dtype=int)
        if a.size == 0 or b.size == 0:
            return float("inf")
        return float(self.distances[np.ix_(a, b)].min())

    def set_diameter(self, a: np.ndarray) -> float:
        a = np.asarray(a, dtype=int)
        if a.size <= 1:
            return 0.0
        return float(self.distances[np.ix_(a, a)].max())

    # -- sanity -------------------------------------------------------------

    def check_metric(self, samples: int = 100_000, seed: int = 0,
                     tol: float = 1e-9) -> dict:
        """Symmetry, zero diagonal and the triangle inequality.

        Exhaustive for at most 200 points, otherwise on random triples.
        """
        d = self.distances
        raw = pairwise_distances(self.coords, self.metric, self.alpha, self.matrix)
        asym = float(np.abs(raw - raw.T).max())
        diag = float(np.abs(np.diag(raw)).max())
        n = self.size
        scale = max(self.diameter, 1.0)
        if n <= 200:
            # d[i,k] <= d[i,j] + d[j,k] for all triples, one middle point at a time
            worst = 0.0
            for j in range(n):
                excess = d - (d[:, j][:, None] + d[j][None, :])
                worst = max(worst, float(excess.max()))
            checked = n ** 3
        else:
            rng = np.random.default_rng(seed)
            i, j, k = rng.integers(0, n, size=(3, samples))
            worst = float((d[i, k] - d[i, j] - d[j, k]).max())
            checked = samples
        return {
            "symmetric": asym <= tol * scale,
            "zero_diagonal": diag <= tol * scale,
            "triangle": worst <= tol * scale,
            "worst_triangle_excess": max(worst, 0.0),
            "triples_checked": int(checked),
        }


# =============================================================================
# Densities and regular subsets
# =============================================================================

@dataclass
class DensityProfile:
    point: int
    radii: np.ndarray
    ratios: np.ndarray

    @property
    def upper(self) -> float:
        return float(self.ratios.max())

    @property
    def lower(self) -> float:
        return float(self.ratios.min())


def density_profile(space: PointCloudSpace, x: int, n: int, radii) -> DensityProfile:
    """mu(B(x, r)) / (2r)^n on a decreasing list of radii."""
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0:
        raise ValueError("radii must be nonempty")
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if np.any(np.diff(radii) > 0):
        raise ValueError("radii must be sorted in decreasing order")
    masses = space.ball_masses(radii, points=[space._check(x)])[0]
    return DensityProfile(int(x), radii, masses / (2.0 * radii) ** n)


@dataclass
class RegularSubset:
    """Points satisfying the two-sided n-dimensional growth bound below ``scale``."""

    space: PointCloudSpace
    members: np.ndarray
    constant: float
    scale: float
    dimension: int
    radii: np.ndarray

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.space.size, dtype=bool)
        m[self.members] = True
        return m

    @property
    def mass(self) -> float:
        return float(self.space.weights[self.members].sum())

    def __len__(self):
        return len(self.members)


def extract_regular_subset(space: PointCloudSpace, j: float, R: float, n: int,
                           radii_per_step: int = DEFAULT_RADII_PER_STEP,
                           floor: float | None = None,
                           candidates=None) -> RegularSubset:
    """Points x with r^n/j <= mu(B(x,r)) <= j r^n at every ladder radius r < R.

    Ball masses always use the whole measure; ``candidates`` only restricts
    which points are tested.
    """
    if j <= 1:
        raise ValueError("regularity parameter must exceed 1")
    if R <= 0:
        raise ValueError("scale ceiling must be positive")
    radii = space.ladder(R, radii_per_step, floor)
    pts = np.arange(space.size) if candidates is None else np.sort(np.asarray(candidates, dtype=int))
    if radii.size == 0:
        keep = pts
    else:
        masses = space.ball_masses(radii, points=pts)
        rn = radii ** n
        ok = (masses >= rn / j * (1 - 1e-12)) & (masses <= j * rn * (1 + 1e-12))
        keep = pts[ok.all(axis=1)]
    return RegularSubset(space, keep.astype(int), float(j), float(R), int(n), radii)


def whole_space_subset(space: PointCloudSpace, n: int, R: float, j: float = np.inf) -> RegularSubset:
    """Treat every point as regular; useful for hand-built fixtures."""
    return RegularSubset(space, np.arange(space.size), float(j), float(R), int(n),
                         space.ladder(R))
