"""Shared, session-scoped fixtures; the heavier ones are built once per run."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rectkit.charts import chart_from_values, default_content, make_chart
from rectkit.cubes import build_cube_system
from rectkit.curves import dc_classification
from rectkit.generators import grid_space, random_cloud
from rectkit.space import extract_regular_subset

settings.register_profile("rectkit", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("rectkit")

CLOUD_SEEDS = (0, 1, 2)


class GridFixture:
    """grid(2, 64) with its regular subset, cube system and identity chart."""

    def __init__(self):
        self.space = grid_space(2, 64)
        self.K = extract_regular_subset(self.space, 2e7, 4096.0, 2)
        self.system = build_cube_system(self.K)
        self.root = int(self.system.largest_top)
        self.chart = make_chart(self.space, "identity")
        self.content = default_content(self.chart)
        self._dc = None

    @property
    def dc(self):
        if self._dc is None:
            self._dc = dc_classification(self.space, self.K, self.content, 0.5, 0.1, 1 / 16)
        return self._dc


@pytest.fixture(scope="session")
def grid():
    return GridFixture()


@pytest.fixture(scope="session")
def clouds():
    out = {}
    for seed in CLOUD_SEEDS:
        sp = random_cloud(1000, 2, seed)
        K = extract_regular_subset(sp, 1e8, 4096.0, 2)
        out[seed] = (sp, K, build_cube_system(K))
    return out


def fold_chart(space):
    c = space.coords
    return chart_from_values(space, np.column_stack([np.abs(c[:, 0] - 0.5), c[:, 1]]), "fold")


def compression_chart(space, lo=0.3, hi=0.6):
    x = space.coords[:, 0]
    squeezed = np.where(x < lo, x, np.where(x < hi, lo + 0.1 * (x - lo), x - 0.9 * (hi - lo)))
    return chart_from_values(space, np.column_stack([squeezed, space.coords[:, 1]]), "compression")


class LineFixture:
    """5000 unit-spaced points on a line, identity chart, one full-line fragment."""

    def __init__(self):
        from rectkit.curves import gp_classification
        from rectkit.generators import axis_line_library, line_space

        self.space = line_space(5000)
        self.K = extract_regular_subset(self.space, 1e4, 500.0, 1)
        self.chart = make_chart(self.space, "identity")
        self.library = axis_line_library(self.space)
        self.v, self.R, self.r, self.root = 0.5, 500.0, 480.0, 2500
        self.gp = gp_classification(self.space, self.K, self.chart, self.library, self.v, self.R)
        self.hole = self.space.ball_members(2494, 1.0)
        self.gp_holed = self.gp.mask.copy()
        self.gp_holed[self.hole] = False


@pytest.fixture(scope="session")
def line():
    return LineFixture()


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record and assert one acceptance line; the lines reappear in the terminal summary."""
    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
