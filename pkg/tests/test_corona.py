import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rectkit.charts import default_content, make_chart
from rectkit.corona import (CoronaParams, check_resolution, label_cubes, member_conservation, run_corona,
                            sigma_lambda_checks, stopping_decomposition, vitali_select)
from rectkit.cubes import build_cube_system
from rectkit.generators import random_cloud
from rectkit.space import whole_space_subset
from tests.conftest import compression_chart, fold_chart

DEFAULT = CoronaParams(0.5, 0.01, 0.05, 0.35, 0.2, 2.0)
CLOUD = CoronaParams(delta=0.1, eta=0.01, tau=0.2, zeta=1.2, sigma=0.5)


@pytest.fixture(scope="module")
def grid_runs(grid):
    out = {}
    for name, chart in [("identity", grid.chart), ("fold", fold_chart(grid.space)),
                        ("compression", compression_chart(grid.space))]:
        content = default_content(chart)
        out[name] = run_corona(grid.system, grid.root, DEFAULT, content)
    return out


@pytest.fixture(scope="module")
def cloud_runs(clouds):
    out = {}
    for seed, (sp, K, s) in clouds.items():
        content = default_content(make_chart(sp, "identity"))
        out[seed] = run_corona(s, int(s.largest_top), CLOUD, content, check_h=False)
    return out


# =============================================================================
# Parameters
# =============================================================================

@pytest.mark.parametrize("kw", [{"delta": 0.0}, {"eta": -1.0}, {"A": 1.0}, {"zeta": 0.01}])
def test_param_validation(kw):
    with pytest.raises(ValueError):
        CoronaParams(**kw)


def test_incompatible_params_allowed_when_unchecked():
    p = CoronaParams(zeta=0.01, check_compatibility=False)
    assert not p.compatible
    assert DEFAULT.compatible and set(DEFAULT.to_dict()) == {"delta", "eta", "tau", "zeta", "sigma", "A"}


@given(st.floats(0.001, 1.0), st.floats(0.001, 1.0), st.floats(0.001, 3.0))
def test_compatibility_matches_formula(tau, sigma, zeta):
    p = CoronaParams(tau=tau, sigma=sigma, zeta=zeta, check_compatibility=False)
    lhs, rhs = (1 + sigma) * (1 + tau) ** 2, 1 + zeta
    if lhs < rhs * (1 - 1e-9):
        assert p.compatible
    if lhs > rhs * (1 + 1e-9):
        assert not p.compatible


# =============================================================================
# Labels against direct recomputation
# =============================================================================

def test_labels_match_definitions(grid, grid_runs):
    lab = grid_runs["fold"].labels
    s, p, c = grid.system, lab.params, lab.content
    K = s.K.mask
    delta = set(lab.cubes.tolist())
    assert delta == set(s.descendants(grid.root).tolist())
    for q in lab.cubes[::37]:
        m = s.members[q]
        assert lab.image[q] == pytest.approx(c.content(m[K[m]]))
        chain = [q] + [a for a in s.ancestors(q) if a in delta]
        assert lab.SI[q] == any(lab.image[a] < p.delta * s.mass[a] for a in chain)
        assert lab.LD[q] == any(s.mass_K[a] < p.eta * s.mass[a] for a in chain)
        r, hr = lab.ratio[q], lab.hat_ratio[q]
        assert lab.G[q] == (r / (1 + p.sigma) * (1 - 1e-9) <= hr <= r * (1 + p.sigma) * (1 + 1e-9))
        nb = lab.neighbors(q)
        zf = 1 + p.zeta
        expect = (lab.image[q] * zf >= p.delta * s.mass[q] * (1 - 1e-9) and lab.inside[nb].all()
                  and all(r / zf * (1 - 1e-9) <= lab.ratio[t] <= r * zf * (1 + 1e-9) for t in nb)
                  and all(r / zf * (1 - 1e-9) <= lab.hat_ratio[t] <= r * zf * (1 + 1e-9) for t in nb))
        assert lab.MA[q] == expect
    assert json.loads(json.dumps(lab.to_dict()))["root"] == grid.root


def test_identity_chart_is_all_major(grid_runs):
    lab = grid_runs["identity"].labels
    assert lab.MA[lab.cubes].all() and not lab.SI[lab.cubes].any() and not lab.LD[lab.cubes].any()


def test_sigma_lambda_bounds(grid, grid_runs):
    lab = grid_runs["identity"].labels
    rep = sigma_lambda_checks(lab, grid.dc.mask, dc_beta=0.5)
    assert rep["lambda_ok"] and rep["mu_lambda"] == 0.0
    assert rep["core_content_failures"] == 0
    with pytest.raises(ValueError):
        sigma_lambda_checks(lab, grid.dc.mask, dc_beta=0.25)


def test_resolution_guard(grid):
    coarse = default_content(grid.chart, h=10.0)
    with pytest.raises(ValueError):
        check_resolution(grid.system, grid.system.descendants(grid.root), coarse.h)
    with pytest.raises(ValueError):
        label_cubes(grid.system, grid.root, DEFAULT, coarse)


# =============================================================================
# Stopping regions and good regions
# =============================================================================

def _check_result(res):
    assert res.partition["ok"], res.partition
    assert res.good["violations"] == 0 and res.conservation
    assert res.m_carleson["reduction_counterexamples"] == []
    p = res.labels.params
    for reg in res.decomposition.regions:
        lo, hi = reg.band
        assert lo >= 1 / (1 + p.tau) * (1 - 1e-9) and hi <= (1 + p.tau) * (1 + 1e-9)
        assert not set(reg.bottoms.tolist()) & set(reg.members.tolist())
    for reg in res.good_regions:
        assert reg.good


@pytest.mark.parametrize("name", ["identity", "fold", "compression"])
def test_grid_decompositions(grid_runs, name):
    _check_result(grid_runs[name])


def test_fold_splits_into_many_good_regions(grid_runs):
    res = grid_runs["fold"]
    assert len(res.good_regions) > len(res.decomposition.regions)
    assert len(grid_runs["identity"].decomposition.regions) == 1


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cloud_decompositions(cloud_runs, seed):
    _check_result(cloud_runs[seed])


def test_density_bounds_hold(grid_runs, cloud_runs):
    for res in list(grid_runs.values()) + list(cloud_runs.values()):
        g = res.g_sigma
        assert g["star_ratio"]["violations"] == 0 and g["remainder_ratio"]["violations"] == 0


def test_first_run_set_is_contained_in_root(grid, grid_runs):
    dec = grid_runs["compression"].decomposition
    root_mask = grid.system.member_mask(grid.root)
    assert not (dec.E_mask & ~root_mask).any() and 0 <= dec.alpha <= 1
    assert dec.max_tops_per_point >= 1


def test_low_density_root_is_a_leftover(grid):
    res = run_corona(grid.system, grid.root, CoronaParams(eta=2.0), default_content(grid.chart))
    assert res.decomposition.root_leftover and list(res.decomposition.ld_leftovers) == [grid.root]
    assert res.partition["ok"]


def test_small_image_root_is_a_leftover(grid):
    p = CoronaParams(delta=1e6, check_compatibility=False)
    dec = stopping_decomposition(label_cubes(grid.system, grid.root, p, default_content(grid.chart)))
    assert dec.root_leftover and list(dec.small_leftovers) == [grid.root] and dec.regions == []


def test_member_conservation_detects_loss(grid_runs):
    regs = grid_runs["fold"].good_regions
    assert member_conservation(regs, regs) and not member_conservation(regs, regs[1:])
    assert member_conservation([], [])


def test_corona_json_deterministic(grid, grid_runs):
    again = run_corona(grid.system, grid.root, DEFAULT, default_content(fold_chart(grid.space)))
    assert json.dumps(again.to_dict(), sort_keys=True) == json.dumps(grid_runs["fold"].to_dict(), sort_keys=True)


# =============================================================================
# Vitali selection
# =============================================================================

@given(st.integers(0, 500), st.floats(0.05, 0.8))
def test_vitali_selection_properties(seed, p):
    s = build_cube_system(whole_space_subset(random_cloud(120, 2, seed % 40), 2, 4096.0))
    rng = np.random.default_rng(seed)
    fam = np.flatnonzero(rng.random(len(s)) < p)
    chosen, lam = vitali_select(s, fam)
    assert set(chosen) <= set(fam.tolist())
    stars = [set(s.star(r).tolist()) for r in chosen]
    for a in range(len(stars)):
        for b in range(a + 1, len(stars)):
            assert not stars[a] & stars[b]
    if fam.size:
        d = s.space.distances
        for q in fam:
            for x in s.members[q]:
                assert any(d[x, s.members[r]].min() <= (lam - 1) * s.diameters[r] * (1 + 1e-9) + 1e-12
                           for r in chosen)
    else:
        assert chosen == [] and lam == 1.0
