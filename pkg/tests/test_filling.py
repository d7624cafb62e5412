import numpy as np
import pytest
from hypothesis import given, strategies as st

from rectkit.charts import make_chart
from rectkit.curves import CurveLibrary, dp_classification, gp_classification
from rectkit.filling import (QuadrantConstants, box_gap, boxes_disjoint, dp_dc_inclusion_check, fill_process,
                             quadrant_step)
from rectkit.generators import axis_line_library
from rectkit.space import PointCloudSpace, whole_space_subset


@pytest.fixture(scope="module")
def lattice():
    """Integer 40 x 40 lattice so that quadrant targets land on sample points."""
    g = np.arange(40.0)
    coords = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    sp = PointCloudSpace(coords, np.full(len(coords), 1 / len(coords)))
    K = whole_space_subset(sp, 2, 4096.0)
    ch = make_chart(sp, "identity")
    lib = axis_line_library(sp)
    gp = gp_classification(sp, K, ch, lib, 0.5, 1.0)
    return sp, K, ch, lib, gp


def test_constants_scale_with_n():
    L = QuadrantConstants().lengths(0.5, 640.0, 2)
    assert L["side"] == pytest.approx(16.0) and L["offset"] == pytest.approx(4.0)
    assert L["found"] == pytest.approx(0.16) and L["hit"] == pytest.approx(0.008)
    assert L["probe"] == pytest.approx(0.004) and L["margin"] == pytest.approx(1.6)


def test_box_gap_and_disjointness():
    c = np.zeros(2)
    assert box_gap(np.array([0.1, 0.0]), c, 1.0) == pytest.approx(0.4)
    assert box_gap(np.array([2.0, 0.0]), c, 1.0) < 0
    assert boxes_disjoint([(np.zeros(2), 1.0), (np.array([1.0, 0.0]), 1.0)])
    assert not boxes_disjoint([(np.zeros(2), 1.0), (np.array([0.5, 0.0]), 1.0)])


# =============================================================================
# Quadrant step
# =============================================================================

def test_lattice_step_found_and_rechecked(lattice):
    sp, K, ch, lib, gp = lattice
    x = 20 * 40 + 20
    step = quadrant_step(sp, K, ch, gp, lib, x, ch.values[x], 640.0, 0.5)
    assert step.outcome == "found" and len(step.endpoints) == 4
    assert step.recheck(sp, K, ch, gp.mask)
    got = sorted(tuple(sp.coords[q]) for q in step.endpoints)
    assert got == [(16.0, 16.0), (16.0, 24.0), (24.0, 16.0), (24.0, 24.0)]
    for q, p in zip(step.endpoints, step.targets):
        assert np.linalg.norm(ch.values[q] - p) < step.lengths["found"]
        assert sp.distance(x, q) <= 320.0


def test_empty_library_gives_terminal_at_first_probe(lattice):
    sp, K, ch, _, _ = lattice
    gp = gp_classification(sp, K, ch, CurveLibrary([]), 0.5, 1.0)
    x = 20 * 40 + 20
    step = quadrant_step(sp, K, ch, gp, CurveLibrary([]), x, ch.values[x], 640.0, 0.5)
    assert step.outcome == "terminal" and step.terminal_point == x
    assert step.recheck(sp, K, ch, gp.mask)


def test_step_precondition(lattice):
    sp, K, ch, lib, gp = lattice
    with pytest.raises(ValueError):
        quadrant_step(sp, K, ch, gp, lib, 0, ch.values[0] + 5.0, 640.0, 0.5)


def test_coarse_library_is_exhausted(lattice):
    sp, K, ch, lib, gp = lattice
    x = 20 * 40 + 20
    # offset 0.5 * 650 / 80 = 4.0625 falls between lattice points
    step = quadrant_step(sp, K, ch, gp, lib, x, ch.values[x], 650.0, 0.5)
    assert step.outcome == "exhausted" and step.reason


# =============================================================================
# Filling process
# =============================================================================

def test_full_library_has_no_terminals(line):
    rep = fill_process(line.space, line.K, line.chart, line.gp, line.library, line.root, line.r,
                       line.v, line.R, 2)
    outcomes = [s.outcome for s in rep.steps]
    assert outcomes == ["found"] * 3
    assert rep.terminal_cubes == [] and rep.covered_fraction == 1.0
    assert all(s.recheck(line.space, line.K, line.chart, line.gp.mask) for s in rep.steps)
    assert rep.points_in_ball


def test_depth_one_is_a_single_found_step(line):
    rep = fill_process(line.space, line.K, line.chart, line.gp, line.library, line.root, line.r,
                       line.v, line.R, 1)
    assert [s.outcome for s in rep.steps] == ["found"] and rep.hole_content == 0 and rep.constant == 0


def test_hole_produces_terminal_over_the_hole(line):
    rep = fill_process(line.space, line.K, line.chart, line.gp, line.library, line.root, line.r,
                       line.v, line.R, 2, gp_mask=line.gp_holed)
    assert len(rep.terminal_cubes) >= 1
    hole_img = line.chart.values[line.hole, 0]
    for (center, side), (p, radius) in zip(rep.terminal_cubes, rep.terminal_balls):
        assert p in set(line.hole.tolist())
        assert np.any(np.abs(hole_img - center[0]) <= side / 2)
        assert not line.gp_holed[line.space.ball_members(p, radius)].any()
    assert rep.cubes_disjoint and rep.balls_disjoint and rep.separation_ok
    brute_mass = line.space.weights[(line.space.distances[line.root] <= line.r) & ~line.gp_holed].sum()
    assert rep.uncovered_mass == pytest.approx(brute_mass)
    assert rep.hole_content == pytest.approx(sum(s for _, s in rep.terminal_cubes))
    assert np.isfinite(rep.constant) and rep.hole_content <= rep.constant * rep.uncovered_mass * (1 + 1e-12)


def test_fill_is_deterministic(line):
    a = fill_process(line.space, line.K, line.chart, line.gp, line.library, line.root, line.r,
                     line.v, line.R, 2, gp_mask=line.gp_holed)
    b = fill_process(line.space, line.K, line.chart, line.gp, line.library, line.root, line.r,
                     line.v, line.R, 2, gp_mask=line.gp_holed)
    assert a.to_dict() == b.to_dict()


def test_fill_preconditions(line):
    args = (line.space, line.K, line.chart, line.gp, line.library)
    with pytest.raises(ValueError):
        fill_process(*args, line.root, line.r, line.v, line.R, 0)
    with pytest.raises(ValueError):
        fill_process(*args, line.root, line.R, line.v, line.R, 1)
    outside = int(np.flatnonzero(~line.K.mask)[0]) if (~line.K.mask).any() else None
    if outside is not None:
        with pytest.raises(ValueError):
            fill_process(*args, outside, line.r, line.v, line.R, 1)


@given(st.integers(1500, 3500), st.floats(20.0, 400.0))
def test_full_library_fill_found_everywhere(line, root, r):
    rep = fill_process(line.space, line.K, line.chart, line.gp, line.library, root, r, line.v, line.R, 1)
    step = rep.steps[0]
    if step.outcome == "found":
        assert all(line.space.distance(root, q) <= r / 2 for q in step.endpoints)
        assert step.recheck(line.space, line.K, line.chart, line.gp.mask)
    assert rep.terminal_cubes == [] and rep.hole_content == 0


# =============================================================================
# DP inside DC
# =============================================================================

def test_inclusion_identity_baseline(grid):
    lib = axis_line_library(grid.space)
    gp = gp_classification(grid.space, grid.K, grid.chart, lib, 0.5, 1 / 16)
    dp = dp_classification(grid.space, grid.K, gp.mask, 0.05, 1 / 16)
    rep = dp_dc_inclusion_check(grid.space, grid.K, grid.content, dp, 0.5, 0.05, 1 / 16,
                                samples=np.flatnonzero(dp)[::7], alpha_limit=2.0)
    assert rep["violations"] == 0 and rep["alpha"] <= 2.0 and not rep["vacuous"]


def test_inclusion_full_gp_eps_zero(grid):
    dp = dp_classification(grid.space, grid.K, grid.K.mask, 0.0, 1 / 16)
    assert np.array_equal(dp, grid.K.mask)
    rep = dp_dc_inclusion_check(grid.space, grid.K, grid.content, dp, 0.5, 0.0, 1 / 16,
                                samples=np.arange(0, grid.space.size, 97))
    assert rep["violations"] == 0 and rep["subresolution_radii"] >= 0


def test_inclusion_empty_dp_vacuous(grid):
    rep = dp_dc_inclusion_check(grid.space, grid.K, grid.content, np.zeros(grid.space.size, bool),
                                0.5, 0.05, 1 / 16)
    assert rep["vacuous"] and rep["violations"] == 0 and rep["alpha"] == 0.0


def test_inclusion_resolution_guard(grid):
    with pytest.raises(ValueError):
        dp_dc_inclusion_check(grid.space, grid.K, grid.content, grid.K.mask, 0.5, 0.05, 1 / 16,
                              allow_subresolution=False)
