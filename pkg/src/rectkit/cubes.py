"""Dyadic cube systems (base 16) on finite metric measure spaces.

Construction:

1. For every level k in [k_min, k_top] pick a greedy net of the regular set
   K in ascending point-id order: a point becomes a net point when it is at
   distance >= 16^k from all earlier net points, so the net is 16^k separated
   and covers K at radius < 16^k.
2. Each level-(k-1) net point gets as parent its nearest level-k net point
   (ties to the smaller id).  Covering gives parent distance < 16^k and a
   net point within 16^(k-1)/2 of some level-k point is always claimed by it.
3. A point enters the hierarchy at the first level where a net point is
   closer than 16^k, joins the cube of the nearest such net point, and from
   then on follows the parent chain.  K enters at k_min, so every level is an
   exact partition of K and cubes are nested by construction.

A member of the level-k cube centred at z lies within sum_{i<=k} 16^i <
(16/15) 16^k of z, and every point closer than 16^(k-1) to z ends up inside
it, which gives the two containment radii checked by ``verify_cube_properties``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .space import PointCloudSpace, RegularSubset

BASE = 16.0
EXACT_DIAMETER_LIMIT = 2000
BAND_FRACTIONS = tuple(2.0 ** -i for i in range(1, 9))


def scale(k: int) -> float:
    return BASE ** k


# =============================================================================
# Nets and parent order
# =============================================================================

@dataclass
class NetHierarchy:
    space: PointCloudSpace
    k_min: int
    k_top: int
    nets: dict[int, np.ndarray]  # level -> sorted net point ids

    @property
    def levels(self) -> list[int]:
        return list(range(self.k_min, self.k_top + 1))


def greedy_net(dist: np.ndarray, candidates: np.ndarray, radius: float) -> np.ndarray:
    """Greedy net of ``candidates`` (ascending id order) at separation ``radius``."""
    candidates = np.sort(np.asarray(candidates, dtype=int))
    sub = dist[np.ix_(candidates, candidates)]
    covered = np.zeros(len(candidates), dtype=bool)
    picked = []
    nxt = 0
    while True:
        free = np.flatnonzero(~covered[nxt:])
        if free.size == 0:
            break
        i = nxt + free[0]
        picked.append(i)
        covered |= sub[i] < radius
        nxt = i + 1
    return candidates[np.array(picked, dtype=int)]


def default_levels(space: PointCloudSpace, members: np.ndarray, ceiling: float) -> tuple[int, int]:
    """(k_min, k_top): finest level below twice the minimal spacing of K, and
    the coarsest level with 16^(k+2) <= ceiling."""
    d = space.distances[np.ix_(members, members)]
    pos = d[d > 0]
    spacing = float(pos.min()) if pos.size else 1.0
    k_min = math.floor(math.log(2.0 * spacing, BASE))
    if scale(k_min) >= 2.0 * spacing:
        k_min -= 1
    if math.isinf(ceiling):
        diam = float(d.max()) if d.size else 0.0
        k_top = max(k_min, math.floor(math.log(max(diam, spacing), BASE)) + 1)
    else:
        k_top = math.floor(math.log(ceiling, BASE)) - 2
        while scale(k_top + 3) <= ceiling * (1 + 1e-12):
            k_top += 1
        while scale(k_top + 2) > ceiling * (1 + 1e-12):
            k_top -= 1
    return k_min, k_top


def build_nets(K: RegularSubset, k_min: int | None = None, k_top: int | None = None) -> NetHierarchy:
    """Greedy 16^k-nets of K for k_min <= k <= k_top."""
    space = K.space
    members = np.asarray(K.members, dtype=int)
    if members.size == 0:
        raise ValueError("cannot build nets on an empty regular set")
    dk_min, dk_top = default_levels(space, members, K.scale)
    k_min = dk_min if k_min is None else int(k_min)
    k_top = dk_top if k_top is None else int(k_top)
    if not math.isinf(K.scale) and scale(k_top + 2) > K.scale * (1 + 1e-12):
        raise ValueError(f"level {k_top} too coarse: 16^(k+2) exceeds the scale ceiling {K.scale}")
    if k_min > k_top:
        raise ValueError(f"k_min={k_min} exceeds k_top={k_top}; raise the scale ceiling")
    nets = {k: greedy_net(space.distances, members, scale(k)) for k in range(k_min, k_top + 1)}
    return NetHierarchy(space, k_min, k_top, nets)


def build_partial_order(nets: NetHierarchy) -> dict[int, np.ndarray]:
    """parents[k][i] = index into nets[k] of the parent of nets[k-1][i]."""
    d = nets.space.distances
    parents = {}
    for k in nets.levels[1:]:
        child, top = nets.nets[k - 1], nets.nets[k]
        parents[k] = np.argmin(d[np.ix_(child, top)], axis=1)  # first minimum = smallest id
    return parents


# =============================================================================
# Cube system
# =============================================================================

@dataclass
class Cube:
    index: int
    level: int
    alpha: int
    center: int
    parent: int | None
    members: np.ndarray

    @property
    def key(self) -> tuple[int, int]:
        return (self.level, self.alpha)

    @property
    def side(self) -> float:
        return scale(self.level)


@dataclass(eq=False)
class CubeSystem:
    """All cubes of all levels, indexed top level first then by center id.

    ``labels[li, x]`` is the global index of the level ``levels[li]`` cube
    containing point x, or -1.
    """

    space: PointCloudSpace
    K: RegularSubset
    nets: NetHierarchy
    levels: list[int]
    cube_level: np.ndarray
    cube_alpha: np.ndarray
    cube_center: np.ndarray
    cube_parent: np.ndarray
    labels: np.ndarray
    entry_level: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    # -- basic accessors ----------------------------------------------------

    def __len__(self) -> int:
        return len(self.cube_level)

    @property
    def dimension(self) -> int:
        return self.K.dimension

    def level_index(self, k: int) -> int:
        return k - self.levels[0]

    @cached_property
    def members(self) -> list[np.ndarray]:
        out = [None] * len(self)
        for li in range(len(self.levels)):
            lab = self.labels[li]
            pts = np.flatnonzero(lab >= 0)
            order = np.argsort(lab[pts], kind="stable")
            pts = pts[order]
            cut = np.searchsorted(lab[pts], np.unique(lab[pts]))
            for ids in np.split(pts, cut[1:]):
                out[int(lab[ids[0]])] = ids
        for i, m in enumerate(out):
            if m is None:
                out[i] = np.zeros(0, dtype=int)
        return out

    def member_mask(self, i: int) -> np.ndarray:
        m = np.zeros(self.space.size, dtype=bool)
        m[self.members[i]] = True
        return m

    @cached_property
    def children(self) -> list[np.ndarray]:
        kids = [[] for _ in range(len(self))]
        for i, p in enumerate(self.cube_parent):
            if p >= 0:
                kids[p].append(i)
        return [np.array(sorted(c), dtype=int) for c in kids]

    @cached_property
    def level_cubes(self) -> dict[int, np.ndarray]:
        return {k: np.flatnonzero(self.cube_level == k) for k in self.levels}

    @cached_property
    def tops(self) -> np.ndarray:
        return np.flatnonzero(self.cube_parent < 0)

    @cached_property
    def mass(self) -> np.ndarray:
        w = self.space.weights
        return np.array([math.fsum(w[m]) for m in self.members])

    @cached_property
    def mass_K(self) -> np.ndarray:
        w = np.where(self.K.mask, self.space.weights, 0.0)
        return np.array([math.fsum(w[m]) for m in self.members])

    @cached_property
    def diameters(self) -> np.ndarray:
        d = self.space.distances
        out = np.zeros(len(self))
        for i, m in enumerate(self.members):
            if len(m) <= 1:
                continue
            if len(m) <= EXACT_DIAMETER_LIMIT:
                out[i] = d[np.ix_(m, m)].max()
            else:
                out[i] = 2.0 * d[self.cube_center[i], m].max()
        return out

    @cached_property
    def radii(self) -> np.ndarray:
        """max distance from each center to its members."""
        d = self.space.distances
        return np.array([d[self.cube_center[i], m].max() if len(m) else 0.0
                         for i, m in enumerate(self.members)])

    def cube(self, i: int) -> Cube:
        p = int(self.cube_parent[i])
        return Cube(int(i), int(self.cube_level[i]), int(self.cube_alpha[i]),
                    int(self.cube_center[i]), None if p < 0 else p, self.members[i])

    def index_of(self, key: tuple[int, int]) -> int:
        k, alpha = key
        hit = np.flatnonzero((self.cube_level == k) & (self.cube_alpha == alpha))
        if hit.size == 0:
            raise KeyError(key)
        return int(hit[0])

    @cached_property
    def largest_top(self) -> int:
        tops = self.tops
        return int(tops[np.argmax(self.mass[tops])])

    # -- ancestry -----------------------------------------------------------

    def ancestors(self, i: int) -> list[int]:
        """Strict ancestors, nearest first."""
        out = []
        p = int(self.cube_parent[i])
        while p >= 0:
            out.append(p)
            p = int(self.cube_parent[p])
        return out

    def descendants(self, i: int) -> np.ndarray:
        """The cube and all cubes below it, in breadth-first order."""
        out = [int(i)]
        head = 0
        kids = self.children
        while head < len(out):
            out.extend(int(c) for c in kids[out[head]])
            head += 1
        return np.array(out, dtype=int)

    def chain(self, x: int) -> np.ndarray:
        """Cubes containing point x, finest first."""
        lab = self.labels[:, x]
        return lab[lab >= 0]

    def is_subset(self, i: int, j: int) -> bool:
        a, b = self.members[i], self.members[j]
        if len(a) > len(b):
            return False
        return bool(np.isin(a, b, assume_unique=True).all())

    # -- distances between cubes and points ---------------------------------

    def distance_to_cube(self, i: int) -> np.ndarray:
        """dist(x, Q_i) for every point x."""
        m = self.members[i]
        if len(m) == 0:
            return np.full(self.space.size, np.inf)
        return self.space.distances[:, m].min(axis=1)

    def level_distances(self, point_dist: np.ndarray, k: int) -> np.ndarray:
        """min of ``point_dist`` over each level-k cube, aligned with level_cubes[k]."""
        li = self.level_index(k)
        lab = self.labels[li]
        cubes = self.level_cubes[k]
        out = np.full(len(self), np.inf)
        ok = lab >= 0
        np.minimum.at(out, lab[ok], point_dist[ok])
        return out[cubes]

    # -- derived regions ----------------------------------------------------

    def dilate(self, i: int, lam: float) -> np.ndarray:
        """lam*Q = {x : dist(x, Q) <= (lam - 1) diam Q}."""
        if lam < 1:
            raise ValueError("dilation factor must be at least 1")
        return np.flatnonzero(self.distance_to_cube(i) <= (lam - 1.0) * self.diameters[i])

    def double(self, i: int) -> np.ndarray:
        return self.dilate(i, 2.0)

    def star_cubes(self, i: int) -> np.ndarray:
        """Level-j(Q) cubes T with dist(T, Q) <= diam Q."""
        key = ("star", int(i))
        if key not in self._cache:
            k = int(self.cube_level[i])
            dl = self.level_distances(self.distance_to_cube(i), k)
            self._cache[key] = self.level_cubes[k][dl <= self.diameters[i]]
        return self._cache[key]

    def star(self, i: int) -> np.ndarray:
        return np.sort(np.concatenate([self.members[c] for c in self.star_cubes(i)]))

    def hat(self, i: int, root: int) -> np.ndarray:
        return np.intersect1d(self.star(i), self.members[root], assume_unique=True)

    def tilde_cubes(self, i: int, root: int) -> np.ndarray:
        """Level-j(Q) cubes under ``root`` that meet 2Q."""
        k = int(self.cube_level[i])
        lab = self.labels[self.level_index(k)]
        near = self.distance_to_cube(i) <= self.diameters[i]
        hit = np.unique(lab[near & (lab >= 0)])
        return hit[self.descendant_mask(root)[hit]]

    def tilde(self, i: int, root: int) -> np.ndarray:
        """Union of level-j(Q) cubes under ``root`` that meet 2Q."""
        cubes = self.tilde_cubes(i, root)
        if len(cubes) == 0:
            return np.zeros(0, dtype=int)
        return np.sort(np.concatenate([self.members[c] for c in cubes]))

    def descendant_mask(self, root: int) -> np.ndarray:
        key = ("desc", int(root))
        if key not in self._cache:
            m = np.zeros(len(self), dtype=bool)
            m[self.descendants(root)] = True
            self._cache[key] = m
        return self._cache[key]

    def derived_region(self, i: int, kind: str, lam: float = 2.0, root: int | None = None) -> np.ndarray:
        """Dispatch for ``dilate``/``star``/``hat``/``tilde``/``double``."""
        if kind in ("hat", "tilde") and root is None:
            raise ValueError(f"{kind} region needs a root cube")
        if kind == "dilate":
            return self.dilate(i, lam)
        if kind == "double":
            return self.double(i)
        if kind == "star":
            return self.star(i)
        if kind == "hat":
            return self.hat(i, root)
        if kind == "tilde":
            return self.tilde(i, root)
        raise ValueError(f"unknown region kind {kind!r}")

    # -- serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        cubes = []
        for i in range(len(self)):
            p = int(self.cube_parent[i])
            cubes.append({
                "id": [int(self.cube_level[i]), int(self.cube_alpha[i])],
                "center": int(self.cube_center[i]),
                "parent": None if p < 0 else [int(self.cube_level[p]), int(self.cube_alpha[p])],
                "members": [int(x) for x in self.members[i]],
            })
        return {"levels": [int(k) for k in self.levels], "cubes": cubes}


def build_cubes(nets: NetHierarchy, parents: dict[int, np.ndarray], K: RegularSubset) -> CubeSystem:
    """Assign every point to its entry cube and propagate up the parent chain."""
    space = nets.space
    d = space.distances
    levels = nets.levels
    # global cube indices: top level first, centers ascending
    offset, cube_level, cube_alpha, cube_center = {}, [], [], []
    for k in reversed(levels):
        offset[k] = len(cube_level)
        for a, z in enumerate(nets.nets[k]):
            cube_level.append(k)
            cube_alpha.append(a)
            cube_center.append(int(z))
    cube_level = np.array(cube_level, dtype=int)
    cube_alpha = np.array(cube_alpha, dtype=int)
    cube_center = np.array(cube_center, dtype=int)
    cube_parent = np.full(len(cube_level), -1, dtype=int)
    for k in levels[1:]:
        child = offset[k - 1] + np.arange(len(nets.nets[k - 1]))
        cube_parent[child] = offset[k] + parents[k]

    n = space.size
    labels = np.full((len(levels), n), -1, dtype=int)
    entry = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    pending = np.ones(n, dtype=bool)
    for li, k in enumerate(levels):
        net = nets.nets[k]
        sub = d[:, net]
        nearest = np.argmin(sub, axis=1)
        close = sub[np.arange(n), nearest] < scale(k)
        if li > 0:
            prev = labels[li - 1]
            carried = prev >= 0
            labels[li, carried] = cube_parent[prev[carried]]
        else:
            carried = np.zeros(n, dtype=bool)
        enter = pending & close & ~carried
        labels[li, enter] = offset[k] + nearest[enter]
        entry[enter] = k
        pending &= ~enter
    return CubeSystem(space, K, nets, levels, cube_level, cube_alpha, cube_center,
                      cube_parent, labels, entry)


def build_cube_system(K: RegularSubset, k_min: int | None = None, k_top: int | None = None) -> CubeSystem:
    nets = build_nets(K, k_min, k_top)
    return build_cubes(nets, build_partial_order(nets), K)


# =============================================================================
# Verification
# =============================================================================

@dataclass
class CubeReport:
    coverage_deficit: int
    double_assigned: int
    nesting_violations: int
    ancestor_violations: int
    inner_violations: int
    outer_violations: int
    growth_constant: float
    band_masses: dict
    band_monotone: bool
    boundary_a: float
    boundary_eta: float
    separation_violations: int
    covering_violations: int
    parent_distance_violations: int

    @property
    def ok(self) -> bool:
        return (self.coverage_deficit == 0 and self.double_assigned == 0
                and self.nesting_violations == 0 and self.ancestor_violations == 0
                and self.inner_violations == 0 and self.outer_violations == 0
                and self.separation_violations == 0 and self.covering_violations == 0
                and self.parent_distance_violations == 0 and self.band_monotone)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["ok"] = self.ok
        return out


def boundary_bands(system: CubeSystem, fractions=BAND_FRACTIONS) -> np.ndarray:
    """Per cube, mu{x in Q cap K : dist(x, X \\ Q) <= t 16^k} for each t."""
    d = system.space.distances
    wK = np.where(system.K.mask, system.space.weights, 0.0)
    t = np.asarray(fractions)
    out = np.zeros((len(system), len(t)))
    for i, m in enumerate(system.members):
        if len(m) == 0:
            continue
        outside = np.ones(system.space.size, dtype=bool)
        outside[m] = False
        if not outside.any():
            continue
        gap = d[np.ix_(m, np.flatnonzero(outside))].min(axis=1)
        thr = t * scale(int(system.cube_level[i]))
        out[i] = (wK[m][:, None] * (gap[:, None] <= thr[None, :])).sum(axis=0)
    return out


def fit_small_boundary(fractions, envelope) -> tuple[float, float]:
    """Least-squares fit envelope(t) ~ a t^eta on the nonzero entries."""
    t = np.asarray(fractions, dtype=float)
    e = np.asarray(envelope, dtype=float)
    ok = e > 0
    if ok.sum() < 2:
        return (float(e.max()) if e.size else 0.0), float("inf")
    slope, intercept = np.polyfit(np.log(t[ok]), np.log(e[ok]), 1)
    return float(np.exp(intercept)), float(slope)


def verify_cube_properties(system: CubeSystem) -> CubeReport:
    space = system.space
    d = space.distances
    Kmask = system.K.mask
    n_levels = len(system.levels)

    # partition of K at every level, from the explicit member lists
    coverage = 0
    double = 0
    for k in system.levels:
        count = np.zeros(space.size, dtype=int)
        for c in system.level_cubes[k]:
            count[system.members[c]] += 1
        coverage += int(((count == 0) & Kmask).sum())
        double += int((count > 1).sum())

    # nesting and unique ancestor: a level-k label must determine the level-j label
    nesting = 0
    ancestor = 0
    for a in range(n_levels):
        for b in range(a + 1, n_levels):
            la, lb = system.labels[a], system.labels[b]
            inside = la >= 0
            if not inside.any():
                continue
            pairs = np.unique(np.stack([la[inside], lb[inside]], axis=1), axis=0)
            _, counts = np.unique(pairs[:, 0], return_counts=True)
            nesting += int((counts > 1).sum())
            ancestor += int((pairs[:, 1] < 0).sum())
    for i in range(len(system)):
        anc = system.ancestors(i)
        if len(anc) != system.levels[-1] - int(system.cube_level[i]):
            ancestor += 1

    # containment radii
    inner = outer = 0
    for i, m in enumerate(system.members):
        k = int(system.cube_level[i])
        row = d[system.cube_center[i]]
        core = np.flatnonzero(row < scale(k - 1))
        if not np.isin(core, m, assume_unique=True).all():
            inner += 1
        if len(m) and row[m].max() >= 1.5 * scale(k):
            outer += 1

    # nets
    sep = cov = par = 0
    members_K = system.K.members
    for k in system.levels:
        net = system.nets.nets[k]
        sub = d[np.ix_(net, net)]
        np.fill_diagonal(sub, np.inf)
        sep += int((sub < scale(k)).sum() // 2)
        cov += int((d[np.ix_(members_K, net)].min(axis=1) >= scale(k)).sum())
    for i in range(len(system)):
        p = int(system.cube_parent[i])
        if p >= 0 and d[system.cube_center[i], system.cube_center[p]] >= scale(int(system.cube_level[p])):
            par += 1

    # growth
    n = system.dimension
    growth = 0.0
    for i in range(len(system)):
        k = int(system.cube_level[i])
        mu = system.mass[i]
        if mu <= 0:
            growth = float("inf")
            continue
        growth = max(growth, mu / scale(k + 1) ** n, scale(k - 1) ** n / mu)

    # small boundaries
    bands = boundary_bands(system)
    monotone = bool(np.all(np.diff(bands[:, ::-1], axis=1) >= -1e-15))
    pos = system.mass > 0
    rel = bands[pos] / system.mass[pos][:, None]
    envelope = rel.max(axis=0) if rel.size else np.zeros(len(BAND_FRACTIONS))
    a, eta = fit_small_boundary(BAND_FRACTIONS, envelope)
    band_table = {f"{t:.6g}": float(e) for t, e in zip(BAND_FRACTIONS, envelope)}

    return CubeReport(coverage, double, nesting, ancestor, inner, outer, growth, band_table,
                      monotone, a, eta, sep, cov, par)
