"""Charts phi: X -> R^n and an n-content estimator for image sets.

The image of a point set is thickened to the union of the h-grid cells it
hits.  ``content`` is then (number of hit cells) * h^n, and the fraction of a
Euclidean ball covered by the thickened image is measured on a fixed
deterministic quadrature lattice of the unit ball scaled to the radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .space import PointCloudSpace

CHART_KINDS = ("identity", "projection", "matrix", "constant")


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


# =============================================================================
# Charts
# =============================================================================

def measure_lipschitz(space: PointCloudSpace, values: np.ndarray, samples: int = 1_000_000,
                      seed: int = 0, exhaustive_limit: int = 2000) -> float:
    """max ||phi(x) - phi(y)|| / d(x, y); exhaustive up to ``exhaustive_limit`` points."""
    n = space.size
    d = space.distances
    if n <= exhaustive_limit:
        worst = 0.0
        for start in range(0, n, 256):
            rows = slice(start, min(n, start + 256))
            diff = np.linalg.norm(values[rows, None, :] - values[None, :, :], axis=2)
            dd = d[rows]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(dd > 0, diff / dd, 0.0)
            worst = max(worst, float(ratio.max()))
        return worst
    rng = np.random.default_rng(seed)
    i, j = rng.integers(0, n, size=(2, samples))
    dd = d[i, j]
    ok = dd > 0
    diff = np.linalg.norm(values[i[ok]] - values[j[ok]], axis=1)
    return float((diff / dd[ok]).max()) if ok.any() else 0.0


@dataclass
class Chart:
    """Per-point vectors phi(x) in R^n, 1-Lipschitz after rescaling."""

    values: np.ndarray
    kind: str = "matrix"
    lipschitz: float = 1.0
    rescale_factor: float = 1.0

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lipschitz": float(self.lipschitz),
                "rescale_factor": float(self.rescale_factor),
                "values": self.values.tolist()}


def make_chart(space: PointCloudSpace, kind: str, n: int | None = None, axes=None,
               matrix=None, rescale: bool = True) -> Chart:
    """Build a chart of the requested kind and rescale it to be 1-Lipschitz."""
    coords = space.coords
    if kind == "identity":
        n = coords.shape[1] if n is None else n
        values = coords[:, :n].copy()
    elif kind == "projection":
        if axes is None:
            raise ValueError("projection chart needs axes")
        values = coords[:, list(axes)].copy()
    elif kind == "matrix":
        if matrix is None:
            raise ValueError("matrix chart needs a matrix")
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        values = coords @ m.T
    elif kind == "constant":
        values = np.zeros((space.size, 1 if n is None else n))
    else:
        raise ValueError(f"unknown chart kind {kind!r}")
    return chart_from_values(space, values, kind, rescale)


def chart_from_values(space: PointCloudSpace, values, kind: str = "matrix", rescale: bool = True) -> Chart:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if len(values) != space.size:
        raise ValueError("chart must assign a vector to every point")
    lip = measure_lipschitz(space, values)
    factor = 1.0
    if rescale and lip > 1.0:
        factor = 1.0 / lip
        values = values * factor
    return Chart(values, kind, lip, factor)


# =============================================================================
# Image content
# =============================================================================

def image_spacing(values: np.ndarray, fallback: float = 1.0) -> float:
    """Median nearest-neighbour distance among distinct image points."""
    pts = np.unique(np.round(values, 12), axis=0)
    if len(pts) < 2:
        return fallback
    dist, _ = cKDTree(pts).query(pts, k=2)
    return float(np.median(dist[:, 1]))


def quadrature_lattice(n: int, per_axis: int | None = None) -> np.ndarray:
    """Cell-centred lattice points of [-1, 1]^n that lie in the closed unit ball."""
    if per_axis is None:
        per_axis = {1: 256, 2: 48, 3: 20}.get(n, 10)
    g = (np.arange(per_axis) + 0.5) / per_axis * 2.0 - 1.0
    mesh = np.stack(np.meshgrid(*([g] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return mesh[np.linalg.norm(mesh, axis=1) <= 1.0]


@dataclass(eq=False)
class ImageContent:
    """h-cell thickening of chart images."""

    values: np.ndarray
    h: float
    per_axis: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("cell size must be positive")
        self.values = np.asarray(self.values, dtype=float)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def _cells_of(self, pts: np.ndarray) -> np.ndarray:
        # the tiny shift keeps lattice-aligned images from splitting by round-off
        return np.floor(pts / self.h + 1e-9).astype(np.int64)

    @cached_property
    def _grid(self):
        cells = self._cells_of(self.values)
        lo = cells.min(axis=0)
        ext = cells.max(axis=0) - lo + 1
        strides = np.ones(self.dim, dtype=np.int64)
        for a in range(self.dim - 2, -1, -1):
            strides[a] = strides[a + 1] * ext[a + 1]
        return lo, ext, strides, ((cells - lo) * strides).sum(axis=1)

    @property
    def cell_keys(self) -> np.ndarray:
        return self._grid[3]

    def keys_of(self, pts: np.ndarray) -> np.ndarray:
        """Cell keys of arbitrary points; -1 outside the image bounding grid."""
        lo, ext, strides, _ = self._grid
        cells = self._cells_of(pts) - lo
        inside = np.all((cells >= 0) & (cells < ext), axis=1)
        keys = (cells * strides).sum(axis=1)
        return np.where(inside, keys, -1)

    @cached_property
    def lattice(self) -> np.ndarray:
        return quadrature_lattice(self.dim, self.per_axis)

    def cell_count(self, ids) -> int:
        ids = np.asarray(ids, dtype=int)
        if ids.size == 0:
            return 0
        return int(np.unique(self.cell_keys[ids]).size)

    def content(self, ids) -> float:
        return self.cell_count(ids) * self.h ** self.dim

    def ball_fraction(self, center: np.ndarray, radius: float, ids) -> float:
        """Fraction of B(center, radius) covered by the cells hit by phi(ids)."""
        ids = np.asarray(ids, dtype=int)
        if ids.size == 0:
            return 0.0
        if radius <= 0:
            return float(np.isin(self.keys_of(center[None, :]), self.cell_keys[ids]).all())
        reach = radius + self.h * math.sqrt(self.dim)
        close = ids[np.linalg.norm(self.values[ids] - center, axis=1) <= reach]
        if close.size == 0:
            return 0.0
        hit = np.unique(self.cell_keys[close])
        probe = self.keys_of(center[None, :] + radius * self.lattice)
        return float(np.isin(probe, hit).mean())

    def boundary_cells(self, ids) -> int:
        """Hit cells with at least one axis-neighbour cell that is not hit."""
        ids = np.asarray(ids, dtype=int)
        if ids.size == 0:
            return 0
        cells = np.unique(self._cells_of(self.values[ids]), axis=0)
        present = {tuple(c) for c in cells}
        count = 0
        for c in cells:
            for a in range(self.dim):
                for s in (-1, 1):
                    nb = c.copy()
                    nb[a] += s
                    if tuple(nb) not in present:
                        count += 1
                        break
                else:
                    continue
                break
        return count


def default_content(chart: Chart, h: float | None = None, fallback: float = 1.0) -> ImageContent:
    """h defaults to the image spacing; ``fallback`` covers single-point images."""
    return ImageContent(chart.values, image_spacing(chart.values, fallback) if h is None else h)
