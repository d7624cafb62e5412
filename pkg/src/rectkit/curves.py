"""Curve fragments and the pointwise classes GP, DP and DC.

A fragment is a finite sample of a biLipschitz curve: sorted times, the point
hit at each time, and the closed domain intervals the samples represent.
Each sample owns the part of its interval closer to it than to its interval
neighbours (midpoint rule), and that stretch of domain counts as mapping into
K exactly when the sample's point is in K.

GP(v, R): per coordinate axis there is a fragment through y whose image under
the chart moves inside the axis cone with speed above v for every ordered
pair of samples, and whose domain is almost entirely K-valued on every
interval around the witness time of radius below 4 R biLip.

DP(v, eps, R): every ladder ball below R carries GP mass >= (1 - eps) times
its mass.

DC(beta, eps, R): for every ladder radius r < R the thickened image of
B(x, r) cap K covers a (1 - eps) fraction of B(phi(x), beta r).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .charts import Chart, ImageContent
from .space import DEFAULT_RADII_PER_STEP, PointCloudSpace, RegularSubset, radius_ladder


def default_cone_width(n: int) -> float:
    return 1.0 / (1000.0 * n * n)


def default_density_slack(n: int) -> float:
    return 1.0 / (100000.0 * n)


# =============================================================================
# Fragments
# =============================================================================

@dataclass
class CurveFragment:
    times: np.ndarray
    point_ids: np.ndarray
    intervals: np.ndarray  # (k, 2), sorted, disjoint
    lip_upper: float
    bilip_lower: float
    time_scale: float = 1.0

    @property
    def size(self) -> int:
        return len(self.times)

    def interval_of(self) -> np.ndarray:
        """Index of the domain interval holding each sample."""
        return np.searchsorted(self.intervals[:, 1], self.times - 1e-12 * (1 + abs(self.times)), side="left")

    def cells(self) -> tuple[np.ndarray, np.ndarray]:
        """Left and right ends of the domain stretch owned by each sample."""
        t = self.times
        which = self.interval_of()
        left = self.intervals[which, 0].astype(float).copy()
        right = self.intervals[which, 1].astype(float).copy()
        same = which[1:] == which[:-1]
        mid = 0.5 * (t[1:] + t[:-1])
        right[:-1] = np.where(same, mid, right[:-1])
        left[1:] = np.where(same, mid, left[1:])
        return left, right

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "point_ids": [int(p) for p in self.point_ids],
                "intervals": self.intervals.tolist()}


def pair_ratios(space: PointCloudSpace, times: np.ndarray, ids: np.ndarray) -> tuple[float, float]:
    """(max, min) of d(gamma(s), gamma(t)) / |s - t| over sample pairs."""
    hi, lo = 0.0, math.inf
    m = len(times)
    d = space.distances
    for start in range(0, m, 512):
        rows = np.arange(start, min(m, start + 512))
        dt = np.abs(times[rows, None] - times[None, :])
        dd = d[np.ix_(ids[rows], ids)]
        upper = rows[:, None] < np.arange(m)[None, :]
        if not upper.any():
            continue
        r = dd[upper] / dt[upper]
        hi, lo = max(hi, float(r.max())), min(lo, float(r.min()))
    return hi, lo


def admit_fragment(space: PointCloudSpace, times, point_ids, intervals=None) -> CurveFragment:
    """Validate raw samples and rescale time so that the curve is 1-Lipschitz."""
    times = np.asarray(times, dtype=float)
    ids = np.asarray(point_ids, dtype=int)
    if times.shape != ids.shape or times.ndim != 1:
        raise ValueError("times and point ids must be matching 1-d lists")
    if len(times) < 2:
        raise ValueError("a fragment needs at least two samples")
    if ids.min() < 0 or ids.max() >= space.size:
        raise ValueError("fragment refers to unknown points")
    order = np.argsort(times, kind="stable")
    times, ids = times[order], ids[order]
    if np.any(np.diff(times) <= 0):
        raise ValueError("duplicate sample times")
    if intervals is None:
        intervals = np.array([[times[0], times[-1]]])
    intervals = np.asarray(intervals, dtype=float).reshape(-1, 2)
    intervals = intervals[np.argsort(intervals[:, 0])]
    if np.any(intervals[:, 1] < intervals[:, 0]) or np.any(intervals[1:, 0] <= intervals[:-1, 1]):
        raise ValueError("domain intervals must be disjoint and well ordered")
    pos = np.searchsorted(intervals[:, 1], times, side="left")
    if np.any(pos >= len(intervals)) or np.any(times < intervals[np.minimum(pos, len(intervals) - 1), 0]):
        raise ValueError("every sample time must lie in a domain interval")
    hi, lo = pair_ratios(space, times, ids)
    if lo <= 0:
        raise ValueError("fragment has zero spatial extent between two samples")
    c = hi  # new time = c * old time makes the largest ratio exactly 1
    return CurveFragment(times * c, ids, intervals * c, 1.0, lo / hi, c)


@dataclass
class CurveLibrary:
    fragments: list[CurveFragment] = field(default_factory=list)

    def __len__(self):
        return len(self.fragments)

    def __iter__(self):
        return iter(self.fragments)

    def to_json(self) -> str:
        return json.dumps([f.to_dict() for f in self.fragments], sort_keys=True)

    @classmethod
    def from_records(cls, space: PointCloudSpace, records) -> "CurveLibrary":
        frags = [admit_fragment(space, r["times"], r["point_ids"], r.get("intervals")) for r in records]
        return cls(frags)


# =============================================================================
# Per-fragment chart geometry
# =============================================================================

@dataclass
class FragmentGeometry:
    """Pairwise chart behaviour of a fragment, independent of v and theta.

    ``cone_slack[a]``: max over ordered pairs of transverse / axial size of the
    image increment along axis a (inf when some increment is not strictly
    positive along the axis).  ``speed``: min over pairs of
    ||phi(gamma(s)) - phi(gamma(s'))|| / d(gamma(s), gamma(s')).
    """

    cone_slack: np.ndarray
    speed: float


def fragment_geometry(space: PointCloudSpace, chart: Chart, frag: CurveFragment) -> FragmentGeometry:
    phi = chart.values[frag.point_ids]
    n = chart.dim
    d = space.distances
    m = frag.size
    slack = np.zeros(n)
    speed = math.inf
    for start in range(0, m, 512):
        rows = np.arange(start, min(m, start + 512))
        later = rows[:, None] < np.arange(m)[None, :]
        if not later.any():
            continue
        w = (phi[None, :, :] - phi[rows, None, :])[later]  # later minus earlier
        dd = d[np.ix_(frag.point_ids[rows], frag.point_ids)][later]
        norm = np.linalg.norm(w, axis=1)
        speed = min(speed, float((norm / dd).min()))
        for a in range(n):
            axial = w[:, a]
            if np.any(axial <= 0):
                slack[a] = math.inf
                continue
            trans = np.linalg.norm(np.delete(w, a, axis=1), axis=1)
            slack[a] = max(slack[a], float((trans / axial).max()))
    return FragmentGeometry(slack, speed)


def good_length_function(frag: CurveFragment, in_K: np.ndarray):
    """Cumulative length of the K-valued part of the domain, as (knots, values)."""
    left, right = frag.cells()
    good = in_K[frag.point_ids]
    # good stretches are disjoint and ordered; build a piecewise linear G
    l, r = left[good], right[good]
    xs = np.empty(2 * len(l))
    xs[0::2], xs[1::2] = l, r
    lengths = np.concatenate([[0.0], np.cumsum(r - l)])
    ys = np.empty(2 * len(l))
    ys[0::2], ys[1::2] = lengths[:-1], lengths[1:]
    return xs, ys


def covered_length(xs: np.ndarray, ys: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Length of the good set inside [a, b], elementwise."""
    return np.interp(b, xs, ys) - np.interp(a, xs, ys)


def density_ok(frag: CurveFragment, in_K: np.ndarray, top: float, slack: float,
               per_step: int = DEFAULT_RADII_PER_STEP) -> np.ndarray:
    """Per sample: |B(t, r) cap good| > (1 - slack) 2r for every ladder r < top."""
    gaps = np.diff(frag.times)
    floor = 0.5 * float(gaps.min())
    radii = radius_ladder(top, floor, per_step)
    if radii.size == 0:
        return in_K[frag.point_ids].copy()
    xs, ys = good_length_function(frag, in_K)
    t = frag.times[:, None]
    cov = covered_length(xs, ys, t - radii[None, :], t + radii[None, :])
    ok = np.all(cov > (1.0 - slack) * 2.0 * radii[None, :], axis=1)
    return ok & in_K[frag.point_ids]


# =============================================================================
# GP
# =============================================================================

@dataclass
class GPResult:
    mask: np.ndarray
    witnesses: dict  # point -> list of (fragment index, sample index) per axis
    v: float
    R: float
    theta: float
    slack: float
    empty_library: bool = False

    @property
    def members(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def gp_classification(space: PointCloudSpace, K: RegularSubset, chart: Chart, library: CurveLibrary,
                      v: float, R: float, theta: float | None = None,
                      slack: float | None = None, geometry=None) -> GPResult:
    """Classify every point of K; witnesses are the first qualifying samples in library order."""
    if not 0 < v <= 1:
        raise ValueError("speed v must lie in (0, 1]")
    n = chart.dim
    theta = default_cone_width(n) if theta is None else theta
    slack = default_density_slack(n) if slack is None else slack
    in_K = K.mask
    wit = np.full((space.size, n, 2), -1, dtype=int)
    geometry = geometry if geometry is not None else [fragment_geometry(space, chart, f) for f in library]
    for fi, (frag, geo) in enumerate(zip(library, geometry)):
        axes = [a for a in range(n) if geo.cone_slack[a] <= theta and geo.speed > v]
        if not axes:
            continue
        ok = density_ok(frag, in_K, 4.0 * R * frag.bilip_lower, slack)
        for si in np.flatnonzero(ok):
            y = frag.point_ids[si]
            for a in axes:
                if wit[y, a, 0] < 0:
                    wit[y, a] = (fi, si)
    mask = in_K & np.all(wit[:, :, 0] >= 0, axis=1)
    witnesses = {int(y): [tuple(int(u) for u in wit[y, a]) for a in range(n)] for y in np.flatnonzero(mask)}
    return GPResult(mask, witnesses, v, R, theta, slack, empty_library=len(library) == 0)


def gp_membership(space, K, chart, library, y: int, v: float, R: float, **kw) -> tuple[bool, list]:
    res = gp_classification(space, K, chart, library, v, R, **kw)
    return bool(res.mask[y]), res.witnesses.get(int(y), [])


def replay_witness(space: PointCloudSpace, K: RegularSubset, chart: Chart, frag: CurveFragment,
                   sample: int, axis: int, y: int, v: float, R: float, theta: float, slack: float) -> bool:
    """Re-check conditions (1)-(3) for one witness by direct evaluation."""
    if frag.point_ids[sample] != y:
        return False
    # (3) cone and speed, pair by pair
    phi = chart.values[frag.point_ids]
    d = space.distances
    for i in range(frag.size):
        for j in range(i):
            w = phi[i] - phi[j]
            dist = d[frag.point_ids[i], frag.point_ids[j]]
            axial = w[axis]
            if axial <= 0:
                return False
            if np.linalg.norm(np.delete(w, axis)) > theta * axial:
                return False
            if not np.linalg.norm(w) > v * dist:
                return False
    # (2) density, with owned stretches recomputed from the midpoint rule
    left, right = frag.cells()
    good = K.mask[frag.point_ids]
    t = frag.times[sample]
    radii = radius_ladder(4.0 * R * frag.bilip_lower, 0.5 * float(np.diff(frag.times).min()))
    for r in radii:
        lo, hi = t - r, t + r
        cov = sum(max(0.0, min(hi, right[i]) - max(lo, left[i])) for i in range(frag.size) if good[i])
        if not cov > (1.0 - slack) * 2.0 * r:
            return False
    return bool(K.mask[y])


# =============================================================================
# DP and DC
# =============================================================================

def dp_classification(space: PointCloudSpace, K: RegularSubset, gp_mask: np.ndarray, eps: float,
                      R: float, points=None, per_step: int = DEFAULT_RADII_PER_STEP) -> np.ndarray:
    """Boolean mask of x in K whose ladder balls below R are (1 - eps)-full of GP."""
    pts = K.members if points is None else np.asarray(points, dtype=int)
    radii = space.ladder(R, per_step)
    out = np.zeros(space.size, dtype=bool)
    if radii.size == 0:
        out[pts] = K.mask[pts]
        return out
    total = space.ball_masses(radii, pts)
    good = space.ball_masses(radii, pts, mask=gp_mask)
    ok = np.all(good >= (1.0 - eps) * total - 1e-15, axis=1)
    out[pts] = ok & K.mask[pts]
    return out


def dp_membership(space, K, gp_mask, x: int, eps: float, R: float) -> bool:
    return bool(dp_classification(space, K, gp_mask, eps, R, points=[x])[x])


@dataclass
class DCResult:
    mask: np.ndarray
    min_fraction: np.ndarray  # per point, nan where not evaluated
    beta: float
    eps: float
    R: float
    radii: np.ndarray
    subresolution_radii: int

    @property
    def members(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def __array__(self, dtype=None, copy=None):
        # lets the result stand in for its boolean mask
        return self.mask if dtype is None else self.mask.astype(dtype)


def dc_fractions(space: PointCloudSpace, K: RegularSubset, content: ImageContent, x: int,
                 beta: float, radii: np.ndarray) -> np.ndarray:
    """Coverage of B(phi(x), beta r) by the thickened image of B(x, r) cap K, per radius."""
    order, sd, _ = space._sorted_rows
    counts = np.searchsorted(sd[x], radii, side="right")
    center = content.values[x]
    out = np.empty(len(radii))
    for i, (r, c) in enumerate(zip(radii, counts)):
        ids = order[x, :c]
        ids = ids[K.mask[ids]]
        out[i] = content.ball_fraction(center, beta * r, ids)
    return out


def dc_classification(space: PointCloudSpace, K: RegularSubset, content: ImageContent,
                      beta: float, eps: float, R: float, points=None,
                      per_step: int = DEFAULT_RADII_PER_STEP,
                      allow_subresolution: bool = False, pool=None) -> DCResult:
    """Image-coverage condition on the radius ladder below R."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    radii = space.ladder(R, per_step)
    sub = int((beta * radii < content.h).sum())
    if radii.size and beta * radii.min() < content.h and not allow_subresolution:
        raise ValueError(f"cell size h={content.h:.4g} exceeds beta*r_min={beta * radii.min():.4g}; "
                         "refine h or pass allow_subresolution=True")
    pts = K.members if points is None else np.asarray(points, dtype=int)
    pts = pts[K.mask[pts]]
    frac = np.full(space.size, np.nan)
    if radii.size == 0:
        frac[pts] = 1.0
    else:
        def work(x):
            return float(dc_fractions(space, K, content, int(x), beta, radii).min())
        values = list(pool.map(work, pts)) if pool is not None else [work(x) for x in pts]
        frac[pts] = values
    mask = np.zeros(space.size, dtype=bool)
    mask[pts] = frac[pts] >= 1.0 - eps - 1e-12
    return DCResult(mask, frac, beta, eps, R, radii, sub)


def dc_membership(space, K, content, x: int, beta: float, eps: float, R: float, **kw) -> bool:
    return bool(dc_classification(space, K, content, beta, eps, R, points=[x], **kw).mask[x])


def coverage_survey(space: PointCloudSpace, K: RegularSubset, content: ImageContent, eps: float,
                    betas, scales, allow_subresolution: bool = True, pool=None) -> dict:
    """Fraction of mu(K) in DC(beta, eps, R) per grid entry and cumulatively."""
    wK = space.weights[K.members]
    total = float(wK.sum())
    union = np.zeros(space.size, dtype=bool)
    rows = []
    for beta in betas:
        for R in scales:
            res = dc_classification(space, K, content, beta, eps, R,
                                    allow_subresolution=allow_subresolution, pool=pool)
            union |= res.mask
            rows.append({"beta": float(beta), "R": float(R),
                         "coverage": float(space.weights[res.mask].sum() / total) if total > 0 else 0.0,
                         "subresolution_radii": res.subresolution_radii})
    return {"rows": rows,
            "cumulative": float(space.weights[union].sum() / total) if total > 0 else 0.0,
            "union_mask": union}
