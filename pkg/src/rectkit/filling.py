"""Quadrant search, the recursive filling process and the DP-in-DC check.

One quadrant step works inside an axis-parallel target cube Q of R^n whose
centre lies near phi(x).  Starting from x it looks for a GP point in a tiny
ball, follows that point's axis-1 witness fragment to the two samples whose
first chart coordinate lands on the quadrant offsets, and repeats with the
next axis from each endpoint.  After n axes the 2^n endpoints should sit
next to the 2^n quadrant centres.  If some probe ball holds no GP point the
probe point certifies a GP-free ball (Terminal); if the finite data cannot
hit a target within tolerance the step is Exhausted.

The filling process applies the step to the quadrant subcubes with the
radius halved, collecting the Terminal cubes S_i and their empty balls B_i.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .charts import Chart, ImageContent
from .curves import CurveLibrary, GPResult, dc_fractions
from .space import PointCloudSpace, RegularSubset


# =============================================================================
# Constants
# =============================================================================

@dataclass(frozen=True)
class QuadrantConstants:
    """Lengths as multiples of v r, each divided by the given power of n."""

    side: float = 1 / 10          # cube side, / n
    offset: float = 1 / 40        # quadrant centre offset, / n
    found: float = 1 / 1000       # endpoint tolerance, / n
    hit: float = 1 / 10000        # per-axis hitting tolerance, / n^2
    probe: float = 1 / 10000      # GP search and empty-ball radius, / n^3
    margin: float = 1 / 100       # centring and terminal margin, / n

    def lengths(self, v: float, r: float, n: int) -> dict:
        vr = v * r
        return {
            "side": self.side * vr / n,
            "offset": self.offset * vr / n,
            "found": self.found * vr / n,
            "hit": self.hit * vr / n ** 2,
            "probe": self.probe * vr / n ** 3,
            "margin": self.margin * vr / n,
        }


# =============================================================================
# Quadrant step
# =============================================================================

@dataclass
class QuadrantStep:
    anchor: int
    center: np.ndarray
    r: float
    outcome: str                      # "found", "terminal" or "exhausted"
    endpoints: list = field(default_factory=list)   # point ids, one per quadrant
    targets: list = field(default_factory=list)     # quadrant centres p_i
    terminal_point: int | None = None
    reason: str = ""
    lengths: dict = field(default_factory=dict)

    def recheck(self, space: PointCloudSpace, K: RegularSubset, chart: Chart, gp_mask: np.ndarray) -> bool:
        """Re-verify the stored outcome's numeric bounds."""
        L = self.lengths
        if self.outcome == "found":
            d = space.distances[self.anchor]
            for q, p in zip(self.endpoints, self.targets):
                if not K.mask[q]:
                    return False
                if not np.linalg.norm(chart.values[q] - p) < L["found"]:
                    return False
                if not d[q] <= self.r / 2:
                    return False
            return True
        if self.outcome == "terminal":
            y = self.terminal_point
            if not K.mask[y] or space.distances[self.anchor, y] > self.r / 2:
                return False
            if np.any(gp_mask[space.ball_members(y, L["probe"])]):
                return False
            return box_gap(chart.values[y], self.center, L["side"]) >= L["margin"]
        return True


def box_gap(point: np.ndarray, center: np.ndarray, side: float) -> float:
    """Distance from a point inside the cube to the cube's complement (<= 0 outside)."""
    return float(np.min(side / 2 - np.abs(point - center)))


def _nearest_gp(space: PointCloudSpace, gp_mask: np.ndarray, s: int, radius: float) -> int | None:
    row = space.distances[s]
    cand = np.flatnonzero(gp_mask & (row <= radius))
    if cand.size == 0:
        return None
    return int(cand[np.argmin(row[cand])])  # argmin keeps the smallest id on ties


def _hit(library: CurveLibrary, chart: Chart, witness, axis: int, target: float, tol: float):
    frag = library.fragments[witness[0]]
    coord = chart.values[frag.point_ids, axis]
    i = int(np.argmin(np.abs(coord - target)))
    if abs(coord[i] - target) > tol:
        return None
    return int(frag.point_ids[i])


def quadrant_step(space: PointCloudSpace, K: RegularSubset, chart: Chart, gp: GPResult,
                  library: CurveLibrary, x: int, center, r: float, v: float,
                  consts: QuadrantConstants = QuadrantConstants(),
                  gp_mask: np.ndarray | None = None) -> QuadrantStep:
    """Search for the 2^n quadrant endpoints or a certified GP-free ball."""
    n = chart.dim
    center = np.asarray(center, dtype=float)
    L = consts.lengths(v, r, n)
    if not np.linalg.norm(chart.values[x] - center) < L["margin"]:
        raise ValueError("target cube is not centred near phi(x)")
    gp_mask = gp.mask if gp_mask is None else gp_mask
    signs = list(itertools.product((-1.0, 1.0), repeat=n))
    targets = [center + L["offset"] * np.array(sg) for sg in signs]
    step = QuadrantStep(int(x), center, float(r), "exhausted", targets=targets, lengths=L)

    def stuck(point: int) -> QuadrantStep:
        # no GP point near this probe: it certifies an empty ball if well inside Q
        if (K.mask[point] and space.distances[x, point] <= r / 2
                and box_gap(chart.values[point], center, L["side"]) >= L["margin"]):
            step.outcome, step.terminal_point = "terminal", int(point)
        else:
            step.reason = "probe point without GP neighbour too close to the cube boundary"
        return step

    frontier = {(): int(x)}
    for axis in range(n):
        nxt = {}
        for prefix, s in frontier.items():
            g = _nearest_gp(space, gp_mask, s, L["probe"])
            if g is None:
                return stuck(s)
            witness = gp.witnesses.get(g)
            if witness is None:
                step.reason = "GP point without stored witness"
                return step
            for sign in (-1.0, 1.0):
                goal = center[axis] + sign * L["offset"]
                hit = _hit(library, chart, witness[axis], axis, goal, L["hit"])
                if hit is None:
                    step.reason = f"no sample within tolerance of axis-{axis} target"
                    return step
                nxt[prefix + (sign,)] = hit
        frontier = nxt
    endpoints = [frontier[sg] for sg in signs]
    d = space.distances[x]
    for q, p in zip(endpoints, targets):
        if not (K.mask[q] and np.linalg.norm(chart.values[q] - p) < L["found"] and d[q] <= r / 2):
            step.reason = "endpoint misses its quadrant centre"
            return step
    step.outcome, step.endpoints = "found", endpoints
    return step


# =============================================================================
# Filling process
# =============================================================================

@dataclass
class FillReport:
    root: int
    r: float
    steps: list
    terminal_cubes: list      # (center, side)
    terminal_balls: list      # (point, radius)
    exhausted_cubes: list
    cube_side: float
    hole_content: float       # sum |S_i|
    exhausted_content: float
    uncovered_mass: float     # mu(B(x, r) \ GP)
    constant: float
    cubes_disjoint: bool
    balls_disjoint: bool
    ball_overlaps: int
    separation_ok: bool
    points_in_ball: bool

    @property
    def covered_fraction(self) -> float:
        total = self.cube_side ** len(self.steps[0].center)
        return 1.0 - (self.hole_content + self.exhausted_content) / total

    def to_dict(self) -> dict:
        return {
            "root": self.root, "r": self.r,
            "outcomes": {o: sum(s.outcome == o for s in self.steps) for o in ("found", "terminal", "exhausted")},
            "terminal_cubes": [{"center": c.tolist(), "side": s} for c, s in self.terminal_cubes],
            "terminal_balls": [{"point": int(p), "radius": float(q)} for p, q in self.terminal_balls],
            "exhausted_cubes": [{"center": c.tolist(), "side": s} for c, s in self.exhausted_cubes],
            "hole_content": self.hole_content, "exhausted_content": self.exhausted_content,
            "uncovered_mass": self.uncovered_mass, "constant": self.constant,
            "covered_fraction": self.covered_fraction,
            "cubes_disjoint": self.cubes_disjoint, "balls_disjoint": self.balls_disjoint,
            "separation_ok": self.separation_ok, "points_in_ball": self.points_in_ball,
        }


def boxes_disjoint(boxes) -> bool:
    for (c1, s1), (c2, s2) in itertools.combinations(boxes, 2):
        overlap = np.minimum(c1 + s1 / 2, c2 + s2 / 2) - np.maximum(c1 - s1 / 2, c2 - s2 / 2)
        if np.all(overlap > 1e-12 * max(s1, s2)):
            return False
    return True


def fill_process(space: PointCloudSpace, K: RegularSubset, chart: Chart, gp: GPResult,
                 library: CurveLibrary, x: int, r: float, v: float, R: float, max_depth: int,
                 consts: QuadrantConstants = QuadrantConstants(),
                 gp_mask: np.ndarray | None = None) -> FillReport:
    """Breadth-first stopping process on quadrant subcubes, halving r per stage."""
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    if not r < R:
        raise ValueError("the filling radius must be below R")
    if not K.mask[x]:
        raise ValueError("the root must lie in K")
    gp_mask = gp.mask if gp_mask is None else gp_mask
    n = chart.dim
    root_len = consts.lengths(v, r, n)
    queue = [(int(x), chart.values[x].astype(float), float(r), 1)]
    steps, terms, balls, exhausted = [], [], [], []
    found_ok = True
    d_root = space.distances[x]
    while queue:
        anchor, center, rad, depth = queue.pop(0)
        L = consts.lengths(v, rad, n)
        step = quadrant_step(space, K, chart, gp, library, anchor, center, rad, v, consts, gp_mask)
        steps.append(step)
        if step.outcome == "terminal":
            terms.append((center, L["side"]))
            balls.append((step.terminal_point, L["probe"], rad))
        elif step.outcome == "exhausted":
            exhausted.append((center, L["side"]))
        else:
            found_ok &= all(d_root[q] <= r for q in step.endpoints)
            if depth < max_depth:
                for q, p in zip(step.endpoints, step.targets):
                    queue.append((int(q), p, rad / 2, depth + 1))

    overlaps = 0
    sep_ok = True
    member_sets = [set(space.ball_members(p, q).tolist()) for p, q, _ in balls]
    for (i, a), (j, b) in itertools.combinations(enumerate(member_sets), 2):
        if a & b:
            overlaps += 1
        pi, _, ri = balls[i]
        pj, _, rj = balls[j]
        need = v * min(ri, rj) / (100 * n)
        if space.distances[pi, pj] < need:
            sep_ok = False
    holes = float(sum(s ** n for _, s in terms))
    exhausted_content = float(sum(s ** n for _, s in exhausted))
    ball = space.distances[x] <= r
    uncovered = float(space.weights[ball & ~gp_mask].sum())
    if holes == 0:
        const = 0.0
    elif uncovered == 0:
        const = math.inf
    else:
        const = holes / uncovered
    return FillReport(int(x), float(r), steps, terms, [(p, q) for p, q, _ in balls], exhausted,
                      root_len["side"], holes, exhausted_content, uncovered, const,
                      boxes_disjoint(terms + exhausted), overlaps == 0, overlaps, sep_ok, found_ok)


# =============================================================================
# DP inside DC
# =============================================================================

def dp_dc_inclusion_check(space: PointCloudSpace, K: RegularSubset, content: ImageContent,
                          dp_mask: np.ndarray, v: float, eps: float, R: float, samples=None,
                          alpha_limit: float = 4.0, allow_subresolution: bool = True) -> dict:
    """For sampled x in DP(v, eps, R): the smallest alpha' with x in DC(v/20n, alpha' eps, R)."""
    n = content.dim
    beta = v / (20.0 * n)
    radii = space.ladder(R)
    if radii.size and beta * radii.min() < content.h and not allow_subresolution:
        raise ValueError("cell size exceeds beta * r_min")
    pts = np.flatnonzero(dp_mask) if samples is None else np.asarray(samples, dtype=int)
    pts = pts[dp_mask[pts]]
    worst = 0.0
    violations = 0
    for x in pts:
        f = float(dc_fractions(space, K, content, int(x), beta, radii).min()) if radii.size else 1.0
        need = (1.0 - f) / eps if eps > 0 else (0.0 if f >= 1.0 else math.inf)
        worst = max(worst, need)
        if need > alpha_limit:
            violations += 1
    return {
        "beta": beta, "eps": eps, "R": R, "samples": int(len(pts)),
        "alpha": float(worst), "alpha_limit": alpha_limit, "violations": violations,
        "subresolution_radii": int((beta * radii < content.h).sum()),
        "vacuous": len(pts) == 0,
    }
