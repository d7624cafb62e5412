"""Carleson packing sums, A-neighbours and boundary-crossing families.

Cubes of one level partition their union and a cube contained (as a set) in
another is either one of its descendants or an ancestor with the same member
set.  Hence the cubes of E inside Q0 are the family cubes on the chains of
Q0's points up to the level of the highest cube carrying Q0's member set.
The packing sum is a correctly rounded sum of point weights times those
chain counts, so a disjoint family never exceeds 1 through round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cubes import CubeSystem


# =============================================================================
# Packing sums
# =============================================================================

def same_set_top(system: CubeSystem) -> np.ndarray:
    """For each cube, the highest ancestor (or itself) with the same member set."""
    key = ("same_set_top",)
    if key in system._cache:
        return system._cache[key]
    sizes = np.array([len(m) for m in system.members])
    top = np.arange(len(system))
    # parents have smaller indices, so a forward sweep sees them first
    for i in range(len(system)):
        p = system.cube_parent[i]
        if p >= 0 and sizes[p] == sizes[i]:
            top[i] = top[p]
    system._cache[key] = top
    return top


def contained_mask(system: CubeSystem, root: int) -> np.ndarray:
    """Cubes whose member set is contained in that of ``root``."""
    return system.descendant_mask(int(same_set_top(system)[root]))


def as_family(system: CubeSystem, family) -> np.ndarray:
    fam = np.asarray(sorted(int(i) for i in family), dtype=int)
    if fam.size and (fam[0] < 0 or fam[-1] >= len(system)):
        raise ValueError("family contains cube ids outside the system")
    if np.unique(fam).size != fam.size:
        raise ValueError("family contains duplicate cubes")
    return fam


@dataclass
class CarlesonReport:
    family: np.ndarray
    restricted: bool
    ratios: np.ndarray  # per root cube, nan for skipped roots
    skipped_roots: np.ndarray
    constant: float
    witness: int | None

    def to_dict(self, per_root: bool = False) -> dict:
        out = {
            "family_size": int(len(self.family)),
            "restricted": self.restricted,
            "constant": float(self.constant),
            "witness_root": self.witness,
            "skipped_roots": [int(i) for i in self.skipped_roots],
        }
        if per_root:
            out["per_root"] = [None if np.isnan(r) else float(r) for r in self.ratios]
        return out


def carleson_constant(system: CubeSystem, family, restriction=None) -> CarlesonReport:
    """max over roots Q0 of sum_{Q in E, Q subset Q0} mu(Q cap A) / mu(Q0).

    ``restriction`` is a boolean mask over points (None: plain Carleson sum).
    """
    fam = as_family(system, family)
    w = system.space.weights
    if restriction is not None:
        w = np.where(np.asarray(restriction, dtype=bool), w, 0.0)
    flag = np.zeros(len(system) + 1, dtype=bool)  # slot -1 absorbs missing labels
    flag[fam] = True
    counts = np.cumsum(flag[system.labels], axis=0)  # family cubes on each chain up to each level
    top = same_set_top(system)
    sums = np.zeros(len(system))
    for i in range(len(system)):
        m = system.members[i]
        li = system.level_index(int(system.cube_level[top[i]]))
        sums[i] = math.fsum(counts[li, m] * w[m])
    mass = system.mass
    ratios = np.full(len(system), np.nan)
    live = mass > 0
    ratios[live] = sums[live] / mass[live]
    if live.any():
        witness = int(np.flatnonzero(live)[np.nanargmax(ratios[live])])
        const = float(ratios[witness])
    else:
        witness, const = None, 0.0
    return CarlesonReport(fam, restriction is not None, ratios, np.flatnonzero(~live), const, witness)


def k_carleson_constant(system: CubeSystem, family) -> float:
    return carleson_constant(system, family, system.K.mask).constant


# =============================================================================
# Neighbours
# =============================================================================

def is_A_neighbor(system: CubeSystem, i: int, j: int, A: float) -> bool:
    if A <= 1:
        raise ValueError("neighbour scale A must exceed 1")
    di, dj = system.diameters[i], system.diameters[j]
    if not (di / A <= dj <= A * di):
        return False
    gap = system.space.set_distance(system.members[i], system.members[j])
    return gap <= A * (di + dj)


@dataclass(eq=False)
class NeighborIndex:
    """Lazily computed A-neighbour lists for a cube system."""

    system: CubeSystem
    A: float
    _lists: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.A <= 1:
            raise ValueError("neighbour scale A must exceed 1")

    def __call__(self, i: int) -> np.ndarray:
        i = int(i)
        if i in self._lists:
            return self._lists[i]
        s = self.system
        diam = s.diameters
        A = self.A
        di = diam[i]
        cand = (diam >= di / A) & (diam <= A * di)
        d = s.space.distances
        centers = s.cube_center
        lower = d[centers[i], centers] - s.radii[i] - s.radii
        cand &= lower <= A * (di + diam) + 1e-12
        idx = np.flatnonzero(cand)
        if idx.size:
            point_dist = s.distance_to_cube(i)
            if idx.size <= 64:
                gap = np.array([point_dist[s.members[j]].min() for j in idx])
            else:
                full = np.full(len(s), np.inf)
                for row in s.labels:
                    ok = row >= 0
                    np.minimum.at(full, row[ok], point_dist[ok])
                gap = full[idx]
            idx = idx[gap <= A * (di + diam[idx])]
        self._lists[i] = idx
        return idx

    def closure(self, family) -> np.ndarray:
        fam = as_family(self.system, family)
        if fam.size == 0:
            return fam
        return np.unique(np.concatenate([self(i) for i in fam]))


def neighbor_closure(system: CubeSystem, family, A: float, index: NeighborIndex | None = None) -> np.ndarray:
    index = index or NeighborIndex(system, A)
    return index.closure(family)


def boundary_crossing(system: CubeSystem, T: int, A: float, index: NeighborIndex | None = None) -> np.ndarray:
    """Cubes Q with a neighbour Q' such that exactly one of them lies in T."""
    index = index or NeighborIndex(system, A)
    inside = contained_mask(system, T)
    out = [i for i in range(len(system)) if np.any(inside[index(i)] != inside[i])]
    return np.array(out, dtype=int)


def boundary_crossing_constant(system: CubeSystem, T: int, A: float,
                               index: NeighborIndex | None = None) -> dict:
    fam = boundary_crossing(system, T, A, index)
    total = float(system.mass_K[fam].sum()) if fam.size else 0.0
    return {"cubes": int(fam.size), "sum_mass_K": total,
            "D": total / system.mass[T] if system.mass[T] > 0 else float("inf")}


# =============================================================================
# Composition bounds as numeric checks
# =============================================================================

def family_counts(system: CubeSystem, family) -> np.ndarray:
    """cum[li, x] = number of family cubes containing x at levels <= levels[li]."""
    flag = np.zeros(len(system), dtype=int)
    flag[as_family(system, family)] = 1
    lab = system.labels
    per = np.where(lab >= 0, flag[np.maximum(lab, 0)], 0)
    return np.cumsum(per, axis=0)


def count_threshold_check(system: CubeSystem, family, L: int) -> dict:
    """For every root Q, mu{x in Q cap K : N_Q(x) > L} against mu(Q cap K).

    N_Q(x) counts family cubes containing x that lie inside Q.
    """
    cum = family_counts(system, family)
    top = same_set_top(system)
    wK = np.where(system.K.mask, system.space.weights, 0.0)
    worst_fraction = 0.0
    max_count = 0
    for q in range(len(system)):
        mK = system.mass_K[q]
        if mK <= 0:
            continue
        li = system.level_index(int(system.cube_level[top[q]]))
        pts = system.members[q]
        counts = cum[li, pts]
        max_count = max(max_count, int(counts.max()))
        worst_fraction = max(worst_fraction, float(wK[pts][counts > L].sum() / mK))
    const = k_carleson_constant(system, family)
    return {
        "L": int(L),
        "max_count": max_count,
        "lambda": 1.0 - worst_fraction,
        "k_carleson_constant": const,
        "pointwise_bound_holds": max_count <= L,
        "implied_bound_ok": (max_count > L) or const <= L * (1 + 1e-12),
    }


def region_union_check(system: CubeSystem, tops, subfamilies) -> dict:
    """K-Carleson constants of the top cubes, of each E(S) and of their union."""
    tops = as_family(system, tops)
    per = [k_carleson_constant(system, fam) for fam in subfamilies]
    union = np.unique(np.concatenate([np.asarray(f, dtype=int) for f in subfamilies])) \
        if subfamilies else np.zeros(0, dtype=int)
    top_const = k_carleson_constant(system, tops)
    union_const = k_carleson_constant(system, union)
    return {
        "top_constant": top_const,
        "max_region_constant": max(per) if per else 0.0,
        "union_constant": union_const,
        "product_bound": top_const * (max(per) if per else 0.0),
    }


def high_density_check(system: CubeSystem, family, eta: float) -> dict:
    fam = as_family(system, family)
    dense = bool(np.all(system.mass_K[fam] >= eta * system.mass[fam] * (1 - 1e-12))) if fam.size else True
    plain = carleson_constant(system, fam).constant
    kc = k_carleson_constant(system, fam)
    return {"dense": dense, "plain_constant": plain, "k_constant": kc,
            "bound_holds": (not dense) or plain <= kc / eta * (1 + 1e-12) + 1e-15}


def interior_cubes(region, index: NeighborIndex) -> np.ndarray:
    """S_A: members of the region all of whose A-neighbours are in the region."""
    members = np.asarray(sorted(region), dtype=int)
    inside = np.zeros(len(index.system), dtype=bool)
    inside[members] = True
    return np.array([q for q in members if inside[index(q)].all()], dtype=int)


def region_boundary_check(system: CubeSystem, regions, index: NeighborIndex) -> dict:
    """K-Carleson constant of B_A = union over regions of S minus S_A."""
    parts = []
    for region in regions:
        members = np.asarray(sorted(region), dtype=int)
        interior = interior_cubes(members, index)
        parts.append(np.setdiff1d(members, interior))
    fam = np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=int)
    return {"cubes": int(fam.size), "k_carleson_constant": k_carleson_constant(system, fam)}


def check_composition_bounds(system: CubeSystem, fixtures: dict) -> dict:
    """Evaluate whichever composition checks the fixture dictionary supplies.

    Keys: ``family`` with ``L``; ``tops`` with ``subfamilies``; ``dense_family``
    with ``eta``; ``regions`` with ``A``; ``boundary_root`` with ``A``.
    """
    out = {}
    if "family" in fixtures:
        if "L" not in fixtures:
            raise ValueError("count threshold check needs L")
        out["count_threshold"] = count_threshold_check(system, fixtures["family"], fixtures["L"])
    if "tops" in fixtures:
        if "subfamilies" not in fixtures:
            raise ValueError("region union check needs subfamilies")
        out["region_union"] = region_union_check(system, fixtures["tops"], fixtures["subfamilies"])
    if "dense_family" in fixtures:
        out["high_density"] = high_density_check(system, fixtures["dense_family"], fixtures.get("eta", 1.0))
    if "regions" in fixtures or "boundary_root" in fixtures:
        if "A" not in fixtures:
            raise ValueError("neighbour checks need A")
        index = NeighborIndex(system, fixtures["A"])
        if "regions" in fixtures:
            out["region_boundary"] = region_boundary_check(system, fixtures["regions"], index)
        if "boundary_root" in fixtures:
            out["boundary_crossing"] = boundary_crossing_constant(system, fixtures["boundary_root"],
                                                                  fixtures["A"], index)
    return out
