import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import sparse

from rectkit.carleson import (NeighborIndex, boundary_crossing, carleson_constant, check_composition_bounds,
                              count_threshold_check, high_density_check, is_A_neighbor, k_carleson_constant,
                              neighbor_closure, region_union_check)
from rectkit.cubes import build_cube_system
from rectkit.generators import line_space, random_cloud
from rectkit.space import PointCloudSpace, whole_space_subset


def membership(system):
    rows = np.concatenate([np.full(len(m), i) for i, m in enumerate(system.members)])
    cols = np.concatenate(list(system.members))
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(system), system.space.size))


def brute_carleson(system, family, restriction=None):
    """Double loop over (Q0, Q): containment tested on member sets, no tree used."""
    B = membership(system)
    sizes = np.asarray(B.sum(axis=1)).ravel()
    w = system.space.weights if restriction is None else np.where(restriction, system.space.weights, 0.0)
    fam = np.asarray(sorted(family), dtype=int)
    fam_mass = np.array([w[system.members[q]].sum() for q in fam])
    Bf = B[fam]
    worst = 0.0
    for q0 in range(len(system)):
        mu0 = system.space.weights[system.members[q0]].sum()
        if mu0 <= 0:
            continue
        mask = np.zeros(system.space.size)
        mask[system.members[q0]] = 1.0
        inside = (Bf @ mask) == sizes[fam]
        worst = max(worst, float(fam_mass[inside].sum() / mu0))
    return worst


def cloud_system(seed, size=150):
    return build_cube_system(whole_space_subset(random_cloud(size, 2, seed), 2, 4096.0))


# =============================================================================
# Packing sums
# =============================================================================

def test_grid_random_family_matches_brute_force(grid):
    s = grid.system
    rng = np.random.default_rng(0)
    fam = np.flatnonzero(rng.random(len(s)) < 0.3)
    rep = carleson_constant(s, fam)
    assert rep.constant == pytest.approx(brute_carleson(s, fam), rel=1e-12)
    assert rep.ratios[rep.witness] == rep.constant


@given(st.integers(0, 5000), st.floats(0.05, 0.9))
def test_random_family_oracle_and_restriction(seed, p):
    s = cloud_system(seed % 50)
    rng = np.random.default_rng(seed)
    fam = np.flatnonzero(rng.random(len(s)) < p)
    restr = rng.random(s.space.size) < 0.5
    assert carleson_constant(s, fam).constant == pytest.approx(brute_carleson(s, fam), rel=1e-12, abs=1e-15)
    got = carleson_constant(s, fam, restr).constant
    assert got == pytest.approx(brute_carleson(s, fam, restr), rel=1e-12, abs=1e-15)
    # subfamily and restriction monotonicity
    sub = fam[: len(fam) // 2]
    assert carleson_constant(s, sub).constant <= carleson_constant(s, fam).constant + 1e-15
    full_ratios = carleson_constant(s, fam).ratios
    part_ratios = carleson_constant(s, fam, restr).ratios
    ok = ~np.isnan(full_ratios)
    assert np.all(part_ratios[ok] <= full_ratios[ok] + 1e-15)


def test_disjoint_family_constant_at_most_one(grid):
    s = grid.system
    for k in s.levels:
        assert carleson_constant(s, s.level_cubes[k]).constant <= 1.0
    rng = np.random.default_rng(1)
    picked, used = [], np.zeros(s.space.size, dtype=bool)
    for q in rng.permutation(len(s)):
        if not used[s.members[q]].any():
            picked.append(q)
            used[s.members[q]] = True
    assert carleson_constant(s, picked).constant <= 1.0


def test_chain_constant_equals_depth():
    sp = PointCloudSpace(np.zeros((1, 1)), np.ones(1))
    s = build_cube_system(whole_space_subset(sp, 1, 4096.0), k_min=-3, k_top=1)
    assert carleson_constant(s, range(len(s))).constant == pytest.approx(len(s))


def test_zero_mass_roots_skipped():
    sp = PointCloudSpace(np.array([[0.0], [10.0]]), np.array([1.0, 0.0]))
    s = build_cube_system(whole_space_subset(sp, 1, 4096.0), k_min=0, k_top=0)
    rep = carleson_constant(s, range(len(s)))
    assert rep.skipped_roots.size == 1 and rep.constant == 1.0


def test_family_validation(grid):
    with pytest.raises(ValueError):
        carleson_constant(grid.system, [0, 0])
    with pytest.raises(ValueError):
        carleson_constant(grid.system, [len(grid.system)])


# =============================================================================
# Neighbours and boundary crossing
# =============================================================================

def brute_neighbors(s, i, A):
    out = []
    for j in range(len(s)):
        di, dj = s.diameters[i], s.diameters[j]
        gap = s.space.distances[np.ix_(s.members[i], s.members[j])].min()
        if gap <= A * (di + dj) and di / A <= dj <= A * di:
            out.append(j)
    return out


def test_grid_neighbors_match_brute_force(grid):
    s = grid.system
    index = NeighborIndex(s, 2.0)
    for i in [0, 1, 5, 40, 300, 1200, 4000]:
        assert list(index(i)) == brute_neighbors(s, i, 2.0)
        assert is_A_neighbor(s, i, i, 2.0)


@given(st.integers(0, 100), st.floats(1.1, 4.0), st.floats(0.0, 3.0))
def test_neighbor_relation_properties(seed, A, extra):
    s = cloud_system(seed, 80)
    index = NeighborIndex(s, A)
    for i in range(0, len(s), 7):
        nb = index(i)
        assert i in nb
        for j in nb[:5]:
            assert i in index(j) and is_A_neighbor(s, j, i, A)
    fam = list(range(0, len(s), 11))
    small = set(neighbor_closure(s, fam, A))
    big = set(neighbor_closure(s, fam, A + extra))
    assert set(fam) <= small <= big
    assert len(neighbor_closure(s, [], A)) == 0


def test_neighbor_scale_validation(grid):
    with pytest.raises(ValueError):
        is_A_neighbor(grid.system, 0, 0, 1.0)
    with pytest.raises(ValueError):
        NeighborIndex(grid.system, 0.5)


def test_diameter_ratio_excludes():
    s = cloud_system(3, 100)
    big, small = int(np.argmax(s.diameters)), int(np.argmin(np.where(s.diameters > 0, s.diameters, np.inf)))
    A = 0.99 * s.diameters[big] / s.diameters[small]
    if A > 1:
        assert not is_A_neighbor(s, big, small, A)


@pytest.mark.parametrize("seed", [0, 1])
def test_boundary_crossing_brute_force(seed):
    s = cloud_system(seed, 100)
    A = 2.0
    sets = [set(m.tolist()) for m in s.members]
    for T in list(range(0, len(s), max(1, len(s) // 5))):
        inside = [sets[q] <= sets[T] for q in range(len(s))]
        expect = [q for q in range(len(s))
                  if any(inside[q] != inside[r] for r in brute_neighbors(s, q, A))]
        assert list(boundary_crossing(s, T, A)) == expect


def test_whole_space_top_has_no_crossing():
    s = build_cube_system(whole_space_subset(line_space(3, 0.01), 1, 4096.0))
    top = int(s.largest_top)
    assert set(s.members[top].tolist()) == set(range(3))
    assert len(boundary_crossing(s, top, 2.0)) == 0


# =============================================================================
# Composition bounds
# =============================================================================

def test_count_bound_integrates(grid):
    s = grid.system
    fam = np.flatnonzero(s.cube_level >= 0)
    rep = count_threshold_check(s, fam, L=3)
    assert rep["max_count"] <= 3 and rep["pointwise_bound_holds"] and rep["implied_bound_ok"]
    assert rep["k_carleson_constant"] <= 3


def test_region_union_matches_direct_sum():
    s = cloud_system(4, 200)
    tops = [int(q) for q in s.level_cubes[s.levels[-2]]]
    subfams = [list(s.descendants(t)[:4]) for t in tops]
    rep = region_union_check(s, tops, subfams)
    union = sorted(set(q for f in subfams for q in f))
    assert rep["union_constant"] == pytest.approx(brute_carleson(s, union, s.K.mask), rel=1e-12)
    assert rep["union_constant"] <= rep["product_bound"] + 1e-12 or rep["top_constant"] == 0


def test_high_density_bound(grid):
    s = grid.system
    fam = np.flatnonzero(s.mass_K >= 0.5 * s.mass)
    rep = high_density_check(s, fam, 0.5)
    assert rep["dense"] and rep["bound_holds"]
    assert rep["plain_constant"] <= rep["k_constant"] / 0.5 + 1e-12


def test_composition_dispatch_and_errors(grid):
    s = grid.system
    out = check_composition_bounds(s, {"family": [0], "L": 1, "dense_family": [0], "eta": 1.0,
                                       "regions": [list(s.descendants(grid.root)[:20])], "A": 2.0,
                                       "boundary_root": 1})
    assert set(out) == {"count_threshold", "high_density", "region_boundary", "boundary_crossing"}
    assert out["boundary_crossing"]["D"] >= 0
    with pytest.raises(ValueError):
        check_composition_bounds(s, {"family": [0]})
    with pytest.raises(ValueError):
        check_composition_bounds(s, {"regions": []})
    assert k_carleson_constant(s, []) == 0.0
