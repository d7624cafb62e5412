import numpy as np
import pytest
from hypothesis import given, strategies as st

from rectkit.charts import (ImageContent, chart_from_values, default_content, make_chart, measure_lipschitz,
                            quadrature_lattice, unit_ball_volume)
from rectkit.curves import (CurveLibrary, admit_fragment, coverage_survey, dc_classification, dc_fractions,
                            dc_membership, default_cone_width, dp_classification, dp_membership,
                            gp_classification, gp_membership, replay_witness)
from rectkit.generators import axis_line_library, grid_space, heisenberg_space, random_monotone_library
from rectkit.space import PointCloudSpace, whole_space_subset


def brute_pair_ratios(space, times, ids):
    hi, lo = 0.0, np.inf
    for a in range(len(times)):
        for b in range(a + 1, len(times)):
            r = space.distance(ids[a], ids[b]) / abs(times[a] - times[b])
            hi, lo = max(hi, r), min(lo, r)
    return hi, lo


@pytest.fixture(scope="module")
def lines(grid):
    return axis_line_library(grid.space)


@pytest.fixture(scope="module")
def gp_grid(grid, lines):
    return gp_classification(grid.space, grid.K, grid.chart, lines, 0.5, 1 / 16)


# =============================================================================
# Fragments
# =============================================================================

def test_straight_segment_is_isometric():
    sp = grid_space(1, 20)
    frag = admit_fragment(sp, np.arange(20) * 3.0, np.arange(20))
    assert frag.lip_upper == 1.0 and frag.bilip_lower == pytest.approx(1.0)
    two = admit_fragment(sp, [0.0, 5.0], [2, 9])
    assert two.bilip_lower == pytest.approx(1.0)


def test_random_monotone_constants_match_brute_force(grid):
    lib = random_monotone_library(grid.space, 12, seed=3)
    assert len(lib) > 0
    for frag in lib:
        raw_times = frag.times / frag.time_scale
        hi, lo = brute_pair_ratios(grid.space, raw_times, frag.point_ids)
        assert frag.time_scale == pytest.approx(hi, rel=1e-12)
        assert frag.bilip_lower == pytest.approx(lo / hi, rel=1e-12)
        assert brute_pair_ratios(grid.space, frag.times, frag.point_ids)[0] == pytest.approx(1.0)


@pytest.mark.parametrize("times,ids", [([0.0, 0.0], [0, 1]), ([0.0], [0]), ([0.0, 1.0], [3, 3])])
def test_admit_rejects_degenerate(times, ids):
    with pytest.raises(ValueError):
        admit_fragment(grid_space(1, 5), times, ids)


def test_library_round_trip(lines, grid):
    import json
    again = CurveLibrary.from_records(grid.space, json.loads(lines.to_json()))
    assert len(again) == len(lines)
    assert np.allclose(again.fragments[3].times, lines.fragments[3].times)


# =============================================================================
# GP
# =============================================================================

def test_grid_axis_lines_give_gp_in_interior(grid, gp_grid):
    c = grid.space.coords
    interior = np.all((c > 0.25) & (c < 0.75), axis=1)
    assert np.all(gp_grid.mask[interior])
    y = int(np.flatnonzero(interior)[0])
    ok, wit = gp_membership(grid.space, grid.K, grid.chart, axis_line_library(grid.space), y, 0.5, 1 / 16)
    assert ok and len(wit) == 2


def test_witnesses_replay(grid, lines, gp_grid):
    rng = np.random.default_rng(0)
    for y in rng.choice(gp_grid.members, 10, replace=False):
        for axis, (fi, si) in enumerate(gp_grid.witnesses[int(y)]):
            assert replay_witness(grid.space, grid.K, grid.chart, lines.fragments[fi], si, axis, int(y),
                                  0.5, 1 / 16, gp_grid.theta, gp_grid.slack)


def test_reversed_chart_kills_cone_witness():
    sp = grid_space(1, 30)
    K = whole_space_subset(sp, 1, 4096.0)
    lib = CurveLibrary([admit_fragment(sp, sp.coords[:, 0], np.arange(30))])
    assert gp_classification(sp, K, make_chart(sp, "identity"), lib, 0.5, 0.01).mask.any()
    flipped = chart_from_values(sp, -sp.coords)
    assert not gp_classification(sp, K, flipped, lib, 0.5, 0.01).mask.any()


def test_speed_inequality_is_strict():
    sp = grid_space(1, 30)
    K = whole_space_subset(sp, 1, 4096.0)
    lib = CurveLibrary([admit_fragment(sp, sp.coords[:, 0], np.arange(30))])
    assert not gp_classification(sp, K, make_chart(sp, "identity"), lib, 1.0, 0.01).mask.any()


def test_empty_library_flagged(grid):
    res = gp_classification(grid.space, grid.K, grid.chart, CurveLibrary([]), 0.5, 1 / 16)
    assert res.empty_library and not res.mask.any()
    with pytest.raises(ValueError):
        gp_classification(grid.space, grid.K, grid.chart, CurveLibrary([]), 0.0, 1 / 16)


@given(st.floats(0.05, 0.9), st.floats(0.1, 1.0), st.floats(0.005, 0.1), st.floats(0.1, 1.0))
def test_gp_monotone_in_speed_and_scale(v, fv, R, fR):
    sp = grid_space(2, 20)
    K = whole_space_subset(sp, 2, 4096.0)
    ch = make_chart(sp, "identity")
    lib = axis_line_library(sp)
    big = gp_classification(sp, K, ch, lib, v, R).mask
    small = gp_classification(sp, K, ch, lib, v * fv, R * fR).mask
    assert np.all(small[big])


def test_cone_width_default():
    assert default_cone_width(2) == pytest.approx(1 / 4000)


# =============================================================================
# DP
# =============================================================================

def brute_dp(space, K, gp_mask, x, eps, R):
    for r in space.ladder(R):
        ball = space.ball_members(x, r)
        tot = space.weights[ball].sum()
        good = space.weights[ball][gp_mask[ball]].sum()
        if good < (1 - eps) * tot - 1e-15:
            return False
    return bool(K.mask[x])


def test_dp_full_gp_and_eps_zero(grid):
    full = dp_classification(grid.space, grid.K, grid.K.mask, 0.0, 1 / 16)
    assert np.array_equal(full, grid.K.mask)
    holes = grid.K.mask.copy()
    holes[2080] = False
    assert not dp_membership(grid.space, grid.K, holes, 2081, 0.0, 1 / 16)


def test_dp_with_synthetic_holes_matches_brute_force(grid):
    rng = np.random.default_rng(5)
    gp = grid.K.mask & (rng.random(grid.space.size) > 0.05)
    got = dp_classification(grid.space, grid.K, gp, 0.08, 1 / 16)
    for x in rng.choice(grid.space.size, 40, replace=False):
        assert got[x] == brute_dp(grid.space, grid.K, gp, int(x), 0.08, 1 / 16)
    looser = dp_classification(grid.space, grid.K, gp, 0.2, 1 / 16)
    assert np.all(looser[got]) and np.all(got <= grid.K.mask)


# =============================================================================
# DC and content
# =============================================================================

def test_identity_interior_in_dc(grid):
    x = 32 * 64 + 32
    for beta in (0.9, 0.75, 0.5):
        assert dc_membership(grid.space, grid.K, grid.content, x, beta, 0.1, 1 / 16)
    # at beta = 1 the smallest ladder ball loses a half-cell rim of the target disc
    frac = dc_fractions(grid.space, grid.K, grid.content, x, 1.0, grid.space.ladder(1 / 16))
    assert 0.8 < frac.min() < 0.9


def test_constant_chart_never_in_dc(grid):
    ch = make_chart(grid.space, "constant", n=2)
    content = default_content(ch, fallback=grid.space.min_distance)
    res = dc_classification(grid.space, grid.K, content, 0.5, 0.5, 1 / 4)
    assert not res.mask.any()


def test_dc_monotone_in_beta_and_scale(grid):
    pts = np.arange(0, grid.space.size, 37)
    a = dc_classification(grid.space, grid.K, grid.content, 1.0, 0.1, 1 / 8, points=pts).mask
    b = dc_classification(grid.space, grid.K, grid.content, 0.5, 0.1, 1 / 8, points=pts).mask
    c = dc_classification(grid.space, grid.K, grid.content, 0.5, 0.1, 1 / 16, points=pts).mask
    assert np.all(b[a]) and np.all(c[b])


def test_dc_subresolution_is_an_error(grid):
    coarse = ImageContent(grid.chart.values, 0.2)
    with pytest.raises(ValueError):
        dc_classification(grid.space, grid.K, coarse, 0.5, 0.1, 1 / 16)
    with pytest.raises(ValueError):
        dc_classification(grid.space, grid.K, grid.content, 0.0, 0.1, 1 / 16)


def test_survey_identity_and_constant(grid):
    sp = grid_space(2, 32)
    K = whole_space_subset(sp, 2, 4096.0)
    ident = make_chart(sp, "identity")
    rep = coverage_survey(sp, K, default_content(ident), 0.1, [1.0, 0.5, 0.25], [1 / 8, 1 / 16])
    assert rep["cumulative"] >= 0.99 and len(rep["rows"]) == 6
    const = make_chart(sp, "constant", n=2)
    rep = coverage_survey(sp, K, default_content(const, fallback=sp.min_distance), 0.1,
                                 [1.0, 0.5], [1 / 4, 1 / 8])
    assert rep["cumulative"] == 0.0


def test_heisenberg_projection_below_identity_baseline():
    betas, scales = [0.25, 0.5, 1.0], [0.5, 0.25]
    hs = heisenberg_space(12)
    proj = make_chart(hs, "projection", axes=(0, 1))
    heis = coverage_survey(hs, whole_space_subset(hs, 2, 4096.0), default_content(proj), 0.1,
                                  betas, scales)
    gs = grid_space(2, 12)
    base = coverage_survey(gs, whole_space_subset(gs, 2, 4096.0),
                                  default_content(make_chart(gs, "identity")), 0.1, betas, scales)
    assert heis["cumulative"] < base["cumulative"]


@given(st.integers(0, 1000), st.floats(0.05, 0.2))
def test_halving_h_keeps_content_up_to_boundary(seed, h):
    # images sampled at spacing below h/2, restricted to a random union of discs
    rng = np.random.default_rng(seed)
    g = np.arange(0, 1, h / 3)
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    centers = rng.random((4, 2))
    radii = rng.uniform(0.1, 0.3, 4)
    keep = (np.linalg.norm(pts[:, None] - centers[None], axis=2) <= radii).any(axis=1)
    vals = pts[keep] if keep.sum() >= 2 else pts
    coarse, fine = ImageContent(vals, h), ImageContent(vals, h / 2)
    ids = np.arange(len(vals))
    assert fine.content(ids) >= coarse.content(ids) - coarse.boundary_cells(ids) * h ** 2 - 1e-12


def test_quadrature_lattice_volume():
    for n in (1, 2, 3):
        lat = quadrature_lattice(n)
        per = {1: 256, 2: 48, 3: 20}[n]
        assert len(lat) * (2 / per) ** n == pytest.approx(unit_ball_volume(n), rel=0.03)


# =============================================================================
# Charts
# =============================================================================

def test_lipschitz_measure_exhaustive_oracle():
    rng = np.random.default_rng(2)
    sp = PointCloudSpace(rng.random((40, 2)), np.full(40, 1 / 40))
    vals = rng.random((40, 1))
    brute = max(abs(vals[i, 0] - vals[j, 0]) / sp.distance(i, j) for i in range(40) for j in range(i))
    assert measure_lipschitz(sp, vals) == pytest.approx(brute, rel=1e-12)
    ch = chart_from_values(sp, vals)
    assert measure_lipschitz(sp, ch.values) <= 1.0 + 1e-12
    assert ch.rescale_factor == pytest.approx(1 / brute)


def test_chart_kinds():
    sp = heisenberg_space(4)
    assert make_chart(sp, "projection", axes=(0, 1)).dim == 2
    assert make_chart(sp, "identity", n=2).dim == 2
    assert make_chart(sp, "matrix", matrix=[[1, 0, 0]]).dim == 1
    for kind, kw in [("projection", {}), ("matrix", {}), ("bogus", {})]:
        with pytest.raises(ValueError):
            make_chart(sp, kind, **kw)
    with pytest.raises(ValueError):
        chart_from_values(sp, np.zeros(3))


def test_dc_result_converts_to_mask(grid):
    assert np.array_equal(np.asarray(grid.dc, dtype=bool), grid.dc.mask)
