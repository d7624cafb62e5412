"""Cube labels, stopping-time regions and the Carleson audits built on them.

Every cube Q below a root Q_0 gets the image-to-mass ratio
content(phi(Q cap K)) / mu(Q).  The labels are

* SI: Q sits under a cube W of the tree with content(W cap K) < delta mu(W),
* LD: Q sits under a cube W with mu(W cap K) < eta mu(W),
* G(sigma): the ratio of Q-hat (same-level cubes within diam Q, cut to Q_0)
  is within a factor 1 + sigma of the ratio of Q,
* M_A: the ratio of Q is (1 + zeta)-comparable with every A-neighbour R and
  every R-hat, all neighbours lie inside Q_0, and content(Q cap K) is at
  least delta mu(Q) / (1 + zeta).

The stopping decomposition grows regions downward from a top cube, stopping
at children whose ratio leaves the band [(1+tau)^-1, 1+tau] around the top
ratio or whose K-density drops below eta.  Large stops seed new regions of
the same run, small stops with enough content restart a fresh run, the rest
are leftovers (Q_i for small content, P_j for low density).  Refinement then
cuts every region into good regions, where each member keeps either all or
none of its children.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .carleson import NeighborIndex, carleson_constant, contained_mask, k_carleson_constant
from .charts import ImageContent, unit_ball_volume
from .cubes import CubeSystem, scale

REL_TOL = 1e-12


# =============================================================================
# Parameters
# =============================================================================

@dataclass(frozen=True)
class CoronaParams:
    delta: float = 0.5      # image-density floor
    eta: float = 0.01       # mass-density floor
    tau: float = 0.05       # stopping slack
    zeta: float = 0.35      # neighbour slack
    sigma: float = 0.2      # hat slack
    A: float = 2.0          # neighbour scale
    check_compatibility: bool = True

    def __post_init__(self):
        for name in ("delta", "eta", "tau", "zeta", "sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.A > 1:
            raise ValueError("neighbour scale A must exceed 1")
        if self.check_compatibility and not self.compatible:
            raise ValueError("parameters violate (1+sigma)(1+tau)^2 <= 1+zeta")

    @property
    def compatible(self) -> bool:
        return (1 + self.sigma) * (1 + self.tau) ** 2 <= (1 + self.zeta) * (1 + REL_TOL)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("delta", "eta", "tau", "zeta", "sigma", "A")}


def _within(value, ref, factor) -> np.ndarray:
    """ref / factor <= value <= factor * ref, with a relative round-off guard."""
    value, ref = np.asarray(value, dtype=float), np.asarray(ref, dtype=float)
    lo = ref / factor * (1 - REL_TOL)
    hi = ref * factor * (1 + REL_TOL)
    return (value >= lo) & (value <= hi)


# =============================================================================
# Labels
# =============================================================================

@dataclass(eq=False)
class CubeLabels:
    system: CubeSystem
    root: int
    params: CoronaParams
    content: ImageContent
    cubes: np.ndarray            # Delta(Q_0) in breadth-first order
    in_delta: np.ndarray         # bool per cube
    inside: np.ndarray           # bool per cube: member set contained in Q_0
    image: np.ndarray            # content(phi(Q cap K)) per cube (nan outside Q_0)
    ratio: np.ndarray
    hat_ratio: np.ndarray
    SI: np.ndarray
    LD: np.ndarray
    MA: np.ndarray
    G: np.ndarray
    si_witness: np.ndarray
    ld_witness: np.ndarray
    neighbors: NeighborIndex

    def si_for(self, threshold: float) -> tuple[np.ndarray, np.ndarray]:
        """SI flags and witnesses for an arbitrary image-density threshold."""
        s = self.system
        small = self.image < threshold * s.mass
        return _propagate(s, self.cubes, self.in_delta, small)

    def point_union(self, flags: np.ndarray) -> np.ndarray:
        """Boolean point mask of the union of flagged cubes."""
        mask = np.zeros(self.system.space.size, dtype=bool)
        for q in np.flatnonzero(flags):
            mask[self.system.members[q]] = True
        return mask

    def sigma_set(self, threshold: float | None = None) -> np.ndarray:
        flags = self.SI if threshold is None else self.si_for(threshold)[0]
        return self.point_union(flags)

    def lambda_set(self) -> np.ndarray:
        return self.point_union(self.LD) & self.system.K.mask

    def to_dict(self) -> dict:
        def ids(flags):
            return [int(i) for i in np.flatnonzero(flags)]
        return {
            "root": int(self.root), "params": self.params.to_dict(), "h": float(self.content.h),
            "cubes": [int(i) for i in self.cubes],
            "SI": ids(self.SI), "LD": ids(self.LD), "MA": ids(self.MA), "G": ids(self.G),
        }


def _propagate(system: CubeSystem, cubes: np.ndarray, in_delta: np.ndarray, raw: np.ndarray):
    """Downward closure of per-cube flags along the tree inside Delta(Q_0)."""
    flags = np.zeros(len(system), dtype=bool)
    witness = np.full(len(system), -1, dtype=int)
    for q in cubes:  # breadth-first: parents first
        p = system.cube_parent[q]
        if p >= 0 and in_delta[p] and flags[p]:
            flags[q], witness[q] = True, witness[p]
        elif raw[q]:
            flags[q], witness[q] = True, q
    return flags, witness


def check_resolution(system: CubeSystem, cubes: np.ndarray, h: float) -> None:
    diam = system.diameters[cubes]
    diam = diam[diam > 0]
    if diam.size and h > np.median(diam):
        raise ValueError(f"cell size {h:g} is coarser than the typical cube diameter {np.median(diam):g}")


def label_cubes(system: CubeSystem, root: int, params: CoronaParams, content: ImageContent,
                neighbors: NeighborIndex | None = None, check_h: bool = True) -> CubeLabels:
    """Evaluate SI, LD, G(sigma) and M_A for every cube of Delta(root)."""
    s = system
    cubes = s.descendants(root)
    in_delta = s.descendant_mask(root)
    if check_h:
        check_resolution(s, cubes, content.h)
    inside = contained_mask(s, root)
    K = s.K.mask
    image = np.full(len(s), np.nan)
    for q in np.flatnonzero(inside):
        m = s.members[q]
        image[q] = content.content(m[K[m]])
    ratio = image / s.mass
    root_pts = s.members[root]
    w = s.space.weights
    hat_ratio = np.full(len(s), np.nan)
    for q in np.flatnonzero(inside):
        hat = np.intersect1d(s.star(q), root_pts, assume_unique=True)
        hat_ratio[q] = content.content(hat[K[hat]]) / w[hat].sum()

    small = image < params.delta * s.mass
    low = s.mass_K < params.eta * s.mass
    SI, si_w = _propagate(s, cubes, in_delta, small)
    LD, ld_w = _propagate(s, cubes, in_delta, low)

    G = np.zeros(len(s), dtype=bool)
    G[cubes] = _within(hat_ratio[cubes], ratio[cubes], 1 + params.sigma)

    index = neighbors if neighbors is not None else NeighborIndex(s, params.A)
    if index.A != params.A:
        raise ValueError("neighbour index built for a different A")
    zf = 1 + params.zeta
    MA = np.zeros(len(s), dtype=bool)
    for q in cubes:
        if not image[q] * zf >= params.delta * s.mass[q] * (1 - REL_TOL):
            continue
        nb = index(q)
        if not inside[nb].all():
            continue
        if not _within(ratio[nb], ratio[q], zf).all():
            continue
        MA[q] = bool(_within(hat_ratio[nb], ratio[q], zf).all())
    return CubeLabels(s, int(root), params, content, cubes, in_delta, inside, image, ratio,
                      hat_ratio, SI, LD, MA, G, si_w, ld_w, index)


# =============================================================================
# Sigma and Lambda bounds
# =============================================================================

def sigma_lambda_checks(labels: CubeLabels, dc_mask: np.ndarray, dc_beta: float | None = None,
                        c: float = 1.0) -> dict:
    """mu(Lambda(eta)) < eta mu(Q_0) and the measured constant of the Sigma(c delta^n) bound."""
    s = labels.system
    p = labels.params
    if dc_beta is not None and not math.isclose(dc_beta, p.delta, rel_tol=1e-12):
        raise ValueError("DC classification uses a different beta than the labels' delta")
    w = s.space.weights
    q0 = s.members[labels.root]
    root_mask = s.member_mask(labels.root)
    mu_q0 = float(w[q0].sum())
    lam = labels.lambda_set()
    mu_lambda = float(w[lam].sum())
    n = s.dimension
    threshold = c * p.delta ** n
    si, _ = labels.si_for(threshold)
    sig = labels.point_union(si)
    mu_sigma = float(w[sig].sum())
    bad = root_mask & ~np.asarray(dc_mask, dtype=bool)
    mu_bad = float(w[bad].sum())
    if mu_sigma == 0:
        const = 0.0
    elif mu_bad == 0:
        const = math.inf
    else:
        const = mu_sigma / mu_bad

    # cubes whose core ball meets DC carry image content of order delta^n ell^n
    core_checked, core_fail, implied_c = 0, 0, math.inf
    dc = np.asarray(dc_mask, dtype=bool)
    d = s.space.distances
    vol = unit_ball_volume(n)
    for q in labels.cubes:
        ell = scale(int(s.cube_level[q]))
        core = d[s.cube_center[q]] <= ell / 32
        if not np.any(core & dc):
            continue
        core_checked += 1
        need = p.delta ** n / (2 * 32 ** n) * vol * ell ** n
        if labels.image[q] < need * (1 - REL_TOL):
            core_fail += 1
        implied_c = min(implied_c, labels.image[q] / (p.delta ** n * s.mass[q]))
    return {
        "mu_Q0": mu_q0,
        "mu_lambda": mu_lambda,
        "lambda_bound": p.eta * mu_q0,
        "lambda_ok": mu_lambda < p.eta * mu_q0 + 1e-12,
        "sigma_threshold": threshold,
        "mu_sigma": mu_sigma,
        "mu_outside_dc": mu_bad,
        "sigma_constant": const,
        "core_cubes_checked": core_checked,
        "core_content_failures": core_fail,
        "implied_c": None if math.isinf(implied_c) else float(implied_c),
    }


# =============================================================================
# Stopping regions
# =============================================================================

@dataclass
class StoppingRegion:
    top: int
    members: np.ndarray
    bottoms: np.ndarray
    run: int                 # index of the stopping run that produced the region
    generation: int          # depth of large-ratio restarts inside the run
    top_ratio: float
    band: tuple[float, float]   # (min, max) of member ratio / top ratio
    good: bool
    small_bottoms: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def to_dict(self) -> dict:
        return {
            "top": int(self.top), "members": [int(i) for i in self.members],
            "bottoms": [int(i) for i in self.bottoms], "run": self.run,
            "generation": self.generation, "top_ratio": self.top_ratio,
            "band": [float(self.band[0]), float(self.band[1])], "good": self.good,
        }


def _is_good(system: CubeSystem, members: np.ndarray) -> bool:
    inside = np.zeros(len(system), dtype=bool)
    inside[members] = True
    for q in members:
        kids = system.children[q]
        if kids.size and inside[kids].any() and not inside[kids].all():
            return False
    return True


def make_region(system: CubeSystem, labels: CubeLabels, top: int, members, run: int = 0,
                generation: int = 0, small_bottoms=None) -> StoppingRegion:
    members = np.asarray(members, dtype=int)
    inside = np.zeros(len(system), dtype=bool)
    inside[members] = True
    bottoms = np.array(sorted({int(c) for q in members for c in system.children[q] if not inside[c]}),
                       dtype=int)
    r = labels.ratio[members]
    tr = float(labels.ratio[top])
    band = (float(r.min() / tr), float(r.max() / tr)) if tr > 0 else (math.nan, math.nan)
    sb = np.zeros(0, dtype=int) if small_bottoms is None else np.asarray(small_bottoms, dtype=int)
    return StoppingRegion(int(top), members, bottoms, run, generation, tr, band,
                          _is_good(system, members), sb)


@dataclass
class StoppingDecomposition:
    root: int
    params: CoronaParams
    regions: list
    small_leftovers: np.ndarray   # Q_i
    ld_leftovers: np.ndarray      # P_j
    root_leftover: bool
    E_mask: np.ndarray            # first-run set E(Q_0)
    alpha: float                  # mu(E) / mu(Q_0 cap K)
    max_tops_per_point: int       # property (e): largest count of same-run tops over a point

    def to_dict(self) -> dict:
        return {
            "root": int(self.root), "params": self.params.to_dict(),
            "regions": [r.to_dict() for r in self.regions],
            "small_leftovers": [int(i) for i in self.small_leftovers],
            "ld_leftovers": [int(i) for i in self.ld_leftovers],
            "root_leftover": self.root_leftover, "alpha": self.alpha,
            "max_tops_per_point": self.max_tops_per_point,
        }


def _grow(system: CubeSystem, labels: CubeLabels, top: int, params: CoronaParams):
    """One region under ``top``: members plus the stopped children with their reason."""
    tr = labels.ratio[top]
    low = system.mass_K < params.eta * system.mass
    members, stops = [int(top)], []
    head = 0
    while head < len(members):
        q = members[head]
        head += 1
        for c in system.children[q]:
            c = int(c)
            if low[c]:
                stops.append((c, "ld"))
            elif labels.ratio[c] < tr / (1 + params.tau):
                stops.append((c, "small"))
            elif labels.ratio[c] > (1 + params.tau) * tr:
                stops.append((c, "large"))
            else:
                members.append(c)
    return members, stops


def stopping_decomposition(labels: CubeLabels) -> StoppingDecomposition:
    """Regions F_1 with the leftover cubes Q_i (small image) and P_j (low density)."""
    s = labels.system
    p = labels.params
    root = labels.root
    K = s.K.mask
    w = s.space.weights
    regions, q_small, p_ld = [], [], []
    e_mask = np.zeros(s.space.size, dtype=bool)
    root_pts = s.members[root]
    e_mask[root_pts[K[root_pts]]] = True
    muK = float(s.mass_K[root])

    if s.mass_K[root] < p.eta * s.mass[root]:
        return StoppingDecomposition(root, p, [], np.zeros(0, int), np.array([root]), True,
                                     np.zeros(s.space.size, bool), 0.0, 0)
    if labels.image[root] < p.delta * s.mass[root]:
        return StoppingDecomposition(root, p, [], np.array([root]), np.zeros(0, int), True,
                                     np.zeros(s.space.size, bool), 0.0, 0)

    run_count = 0
    run_tops: dict[int, list] = {}
    # work items: (top cube, run, generation); runs restart at small-but-substantial stops
    queue = [(int(root), 0, 0)]
    while queue:
        top, run, gen = queue.pop(0)
        members, stops = _grow(s, labels, top, p)
        small_bottoms = []
        for c, why in stops:
            if why == "ld":
                p_ld.append(c)
            elif why == "large":
                queue.append((c, run, gen + 1))
            else:
                small_bottoms.append(c)
                if labels.image[c] < p.delta * s.mass[c]:
                    q_small.append(c)
                else:
                    run_count += 1
                    queue.append((c, run_count, 0))
        regions.append(make_region(s, labels, top, members, run, gen, small_bottoms))
        run_tops.setdefault(run, []).append(top)

    # E(Q_0): first run only, K minus its small non-LD bottoms
    for reg in regions:
        if reg.run == 0:
            for b in reg.small_bottoms:
                e_mask[s.members[b]] = False
    alpha = float(w[e_mask].sum() / muK) if muK > 0 else 0.0
    worst = 0
    for tops in run_tops.values():
        count = np.zeros(s.space.size, dtype=int)
        for t in tops:
            count[s.members[t]] += 1
        worst = max(worst, int(count[K].max()) if K.any() else 0)
    return StoppingDecomposition(root, p, regions, np.array(sorted(q_small), dtype=int),
                                 np.array(sorted(p_ld), dtype=int), False, e_mask, alpha, worst)


def partition_audit(labels: CubeLabels, decomposition: StoppingDecomposition, regions=None) -> dict:
    """Every cube of Delta(Q_0) in exactly one of: a region, under some Q_i, under some P_j."""
    s = labels.system
    regions = decomposition.regions if regions is None else regions
    count = np.zeros(len(s), dtype=int)
    for reg in regions:
        count[reg.members] += 1
    for leftovers in (decomposition.small_leftovers, decomposition.ld_leftovers):
        for q in leftovers:
            count[s.descendants(q)] += 1
    cubes = labels.cubes
    convexity = 0
    for reg in regions:
        inside = np.zeros(len(s), dtype=bool)
        inside[reg.members] = True
        for q in reg.members:
            if q == reg.top:
                continue
            for a in s.ancestors(q):
                if not inside[a]:
                    convexity += 1
                    break
                if a == reg.top:
                    break
    return {
        "cubes": int(len(cubes)),
        "uncovered": int((count[cubes] == 0).sum()),
        "multiply_covered": int((count[cubes] > 1).sum()),
        "outside_delta": int(count[~labels.in_delta].sum()),
        "convexity_violations": convexity,
        "ok": bool((count[cubes] == 1).all() and convexity == 0 and count[~labels.in_delta].sum() == 0),
    }


# =============================================================================
# Good regions
# =============================================================================

def refine_good_regions(labels: CubeLabels, regions) -> list:
    """Split every region into maximal good regions, topmost first."""
    s = labels.system
    out = []
    for reg in regions:
        inside = np.zeros(len(s), dtype=bool)
        inside[reg.members] = True
        tops = [int(reg.top)]
        while tops:
            top = tops.pop(0)
            members = [top]
            head = 0
            while head < len(members):
                q = members[head]
                head += 1
                kids = s.children[q]
                if kids.size == 0:
                    continue
                flags = inside[kids]
                if flags.all():
                    members.extend(int(c) for c in kids)
                else:
                    tops.extend(int(c) for c in kids[flags])
            out.append(make_region(s, labels, top, members, reg.run, reg.generation))
    return out


def good_audit(system: CubeSystem, regions) -> dict:
    violations = 0
    for reg in regions:
        inside = np.zeros(len(system), dtype=bool)
        inside[reg.members] = True
        for q in reg.members:
            kids = system.children[q]
            if kids.size and inside[kids].any() and not inside[kids].all():
                violations += 1
    return {"regions": len(regions), "violations": violations}


def member_conservation(first, second) -> bool:
    a = np.sort(np.concatenate([r.members for r in first])) if first else np.zeros(0, int)
    b = np.sort(np.concatenate([r.members for r in second])) if second else np.zeros(0, int)
    return a.shape == b.shape and bool(np.array_equal(a, b))


# =============================================================================
# G(sigma), Vitali selection and the two density bounds
# =============================================================================

def star_prime(labels: CubeLabels, region: StoppingRegion) -> np.ndarray:
    """S': members whose whole star lies in the region."""
    s = labels.system
    inside = np.zeros(len(s), dtype=bool)
    inside[region.members] = True
    return np.array([q for q in region.members if inside[s.star_cubes(q)].all()], dtype=int)


def vitali_select(system: CubeSystem, family) -> tuple[list, float]:
    """Greedy selection by decreasing diameter with pairwise disjoint stars.

    Returns the selected cubes and the least lambda with the union of the
    family inside the union of the lambda-dilates of the selection.
    """
    family = sorted((int(r) for r in family), key=lambda r: (-system.diameters[r], r))
    taken = np.zeros(system.space.size, dtype=bool)
    chosen = []
    for r in family:
        st = system.star(r)
        if not taken[st].any():
            chosen.append(r)
            taken[st] = True
    if not family:
        return chosen, 1.0
    pts = np.unique(np.concatenate([system.members[r] for r in family]))
    need = np.full(len(pts), np.inf)
    for r in chosen:
        dist = system.distance_to_cube(r)[pts]
        diam = system.diameters[r]
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.where(dist == 0, 1.0, 1.0 + dist / diam if diam > 0 else np.inf)
        need = np.minimum(need, lam)
    return chosen, float(need.max())


def g_sigma_and_vitali(labels: CubeLabels, regions) -> dict:
    s = labels.system
    p = labels.params
    w = s.space.weights
    K = s.K.mask
    content = labels.content
    G2 = np.unique(np.concatenate([r.members for r in regions])) if regions else np.zeros(0, int)
    bad = G2[~labels.G[G2]]
    rep = carleson_constant(s, bad, K)
    lam_max, b1_total, vit_sizes = 1.0, 0, []
    star_count = [0, 0]
    rest_count = [0, 0]
    f1, f2 = 1 + p.sigma, (1 + p.tau) ** 2
    for reg in regions:
        sp = star_prime(labels, reg)
        cand = sp[~labels.G[sp]]
        if cand.size == 0:
            continue
        stars = {int(r): s.star(r) for r in cand}
        for q in reg.members:
            qmask = s.member_mask(q)
            b1 = [r for r in cand if qmask[stars[int(r)]].all()]
            if not b1:
                continue
            b1_total += len(b1)
            chosen, lam = vitali_select(s, b1)
            vit_sizes.append(len(chosen))
            lam_max = max(lam_max, lam)
            rq = labels.ratio[q]
            for r in b1:
                st = stars[int(r)]
                rs = content.content(st[K[st]]) / w[st].sum()
                star_count[0] += 1
                star_count[1] += int(not rs < f2 / f1 * rq * (1 + REL_TOL))
            V = np.zeros(s.space.size, dtype=bool)
            for r in chosen:
                V[stars[r]] = True
            rest = qmask & ~V
            lhs = content.content(np.flatnonzero(rest & K))
            rest_count[0] += 1
            rest_count[1] += int(lhs > f2 * rq * w[rest].sum() * (1 + REL_TOL) + 1e-15)
    return {
        "G2_size": int(G2.size),
        "G2_minus_G": int(bad.size),
        "k_carleson_constant": rep.constant,
        "b1_total": b1_total,
        "vitali_selections": vit_sizes,
        "lambda": lam_max,
        "tau_hypothesis": p.tau <= min(1.0, p.sigma / 3),
        "star_ratio": {"checked": star_count[0], "violations": star_count[1]},
        "remainder_ratio": {"checked": rest_count[0], "violations": rest_count[1]},
    }


# =============================================================================
# M_A Carleson bound and the final reduction
# =============================================================================

def interior_members(labels: CubeLabels, region: StoppingRegion) -> np.ndarray:
    """S_A: members all of whose A-neighbours are in the region."""
    inside = np.zeros(len(labels.system), dtype=bool)
    inside[region.members] = True
    return np.array([q for q in region.members if inside[labels.neighbors(q)].all()], dtype=int)


def m_carleson_check(labels: CubeLabels, regions) -> dict:
    s = labels.system
    cubes = labels.cubes
    rest = cubes[~(labels.MA[cubes] | labels.SI[cubes] | labels.LD[cubes])]
    lhs = float(s.mass_K[rest].sum())
    mu0 = float(s.mass[labels.root])
    hypothesis, counter = 0, []
    for reg in regions:
        for q in interior_members(labels, reg):
            if labels.G[labels.neighbors(q)].all():
                hypothesis += 1
                if not labels.MA[q]:
                    counter.append(int(q))
    return {
        "family_size": int(rest.size),
        "sum_mass_K": lhs,
        "constant": lhs / mu0 if mu0 > 0 else math.inf,
        "k_carleson_constant": k_carleson_constant(s, rest),
        "reduction_hypothesis_cubes": hypothesis,
        "reduction_counterexamples": counter,
    }


# =============================================================================
# Orchestration
# =============================================================================

@dataclass
class CoronaResult:
    labels: CubeLabels
    decomposition: StoppingDecomposition
    good_regions: list
    partition: dict
    good: dict
    conservation: bool
    g_sigma: dict
    m_carleson: dict

    def to_dict(self) -> dict:
        d = self.decomposition
        return {
            "labels": self.labels.to_dict(),
            "decomposition": d.to_dict(),
            "good_regions": [r.to_dict() for r in self.good_regions],
            "partition": self.partition, "good_audit": self.good,
            "conservation": self.conservation,
            "g_sigma": self.g_sigma, "m_carleson": self.m_carleson,
        }


def run_corona(system: CubeSystem, root: int, params: CoronaParams, content: ImageContent,
               neighbors: NeighborIndex | None = None, check_h: bool = True) -> CoronaResult:
    labels = label_cubes(system, root, params, content, neighbors, check_h)
    dec = stopping_decomposition(labels)
    good = refine_good_regions(labels, dec.regions)
    return CoronaResult(labels, dec, good, partition_audit(labels, dec),
                        good_audit(system, good), member_conservation(dec.regions, good),
                        g_sigma_and_vitali(labels, good), m_carleson_check(labels, good))
