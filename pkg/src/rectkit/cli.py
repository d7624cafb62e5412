"""Command-line workbench: instance generation, staged runs and report tables.

A run directory holds the instance (space, chart, fragment library), the run
configuration and one JSON report per stage.  Every verb rebuilds earlier
stages in memory from those inputs, so stages stay deterministic and files
never go stale.  The pipeline exit code is 0 exactly when every assertable
invariant holds; measured constants are reported but never fail a run.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from pathlib import Path

import click
import numpy as np

from .carleson import NeighborIndex
from .charts import chart_from_values, default_content, make_chart
from .corona import CoronaParams, check_resolution, run_corona
from .cubes import build_cube_system, verify_cube_properties
from .curves import (CurveLibrary, coverage_survey, dc_classification, dp_classification,
                     gp_classification)
from .extraction import compute_b_and_ell, extract_pieces, rectifiability_driver
from .filling import fill_process
from .generators import (axis_line_library, comb_space, grid_space, heisenberg_space,
                         random_monotone_library, snowflake_space)
from .space import PointCloudSpace, extract_regular_subset

THREADS_ENV = "RECTKIT_THREADS"
STAGES = ("cubes", "classify", "corona", "extract")
TABLES = ("summary", "coverage", "pieces")

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_HYPOTHESIS = 3


# =============================================================================
# Serialisation
# =============================================================================

def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=_plain, ensure_ascii=False, indent=1) + "\n"


def write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj), encoding="utf-8")


def read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def rows_to_csv(rows: list[dict]) -> str:
    """Header row plus one line per record, RFC-4180 quoting and CRLF endings."""
    buf = io.StringIO()
    cols = sorted({k for r in rows for k in r})
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in cols})
    return buf.getvalue()


# =============================================================================
# Instances
# =============================================================================

@dataclass
class InstanceSpec:
    generator: str = "grid"
    n: int = 2
    N: int = 64
    alpha: float = 0.5
    depth: int = 4
    input: str | None = None
    chart: str = "identity"
    axes: list | None = None
    matrix: list | None = None
    library: str = "axis-lines"
    library_count: int = 64
    library_file: str | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.generator not in ("grid", "comb", "snowflake", "heisenberg", "from-file"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.chart not in ("identity", "projection", "user-matrix", "constant"):
            raise ValueError(f"unknown chart {self.chart!r}")
        if self.library not in ("axis-lines", "random-monotone", "none", "from-file"):
            raise ValueError(f"unknown library {self.library!r}")
        if self.generator == "grid" and not (1 <= self.n <= 3 and 1 <= self.N and self.N ** self.n <= 5000):
            raise ValueError("grid needs 1 <= n <= 3 and at most 5000 points")
        if self.generator == "snowflake" and not (0 < self.alpha < 1 and 2 <= self.N <= 5000):
            raise ValueError("snowflake needs 0 < alpha < 1 and 2 <= N <= 5000")
        if self.generator == "heisenberg" and not (2 <= self.N <= 17):
            raise ValueError("heisenberg needs 2 <= N <= 17")
        if self.generator == "comb" and not (0 <= self.depth <= 8):
            raise ValueError("comb depth must lie in [0, 8]")
        if self.generator == "from-file" and not self.input:
            raise ValueError("from-file generator needs --input")
        if self.chart == "projection" and not self.axes:
            raise ValueError("projection chart needs --axes")
        if self.chart == "user-matrix" and self.matrix is None:
            raise ValueError("user-matrix chart needs --matrix")
        if self.library == "from-file" and not self.library_file:
            raise ValueError("from-file library needs --library-file")
        if self.library_count < 1:
            raise ValueError("library count must be positive")


def space_to_dict(space: PointCloudSpace) -> dict:
    out = {"coords": space.coords.tolist(), "weights": space.weights.tolist(),
           "metric": space.metric, "alpha": float(space.alpha)}
    if space.matrix is not None:
        out["matrix"] = np.asarray(space.matrix).tolist()
    return out


def space_from_dict(d: dict) -> PointCloudSpace:
    return PointCloudSpace(np.asarray(d["coords"], dtype=float), np.asarray(d["weights"], dtype=float),
                           metric=d.get("metric", "euclidean"), alpha=float(d.get("alpha", 0.5)),
                           matrix=None if d.get("matrix") is None else np.asarray(d["matrix"], dtype=float))


def generate_space(spec: InstanceSpec) -> PointCloudSpace:
    if spec.generator == "grid":
        return grid_space(spec.n, spec.N)
    if spec.generator == "comb":
        return comb_space(spec.depth)
    if spec.generator == "snowflake":
        return snowflake_space(spec.alpha, spec.N)
    if spec.generator == "heisenberg":
        return heisenberg_space(spec.N)
    return space_from_dict(read_json(Path(spec.input)))


def generate_chart(space: PointCloudSpace, spec: InstanceSpec):
    if spec.chart == "identity":
        return make_chart(space, "identity")
    if spec.chart == "projection":
        return make_chart(space, "projection", axes=spec.axes)
    if spec.chart == "user-matrix":
        return make_chart(space, "matrix", matrix=spec.matrix)
    return make_chart(space, "constant", n=spec.n if spec.generator == "grid" else 1)


def generate_library(space: PointCloudSpace, spec: InstanceSpec) -> CurveLibrary:
    if spec.library == "axis-lines":
        return axis_line_library(space)
    if spec.library == "random-monotone":
        return random_monotone_library(space, spec.library_count, seed=spec.seed)
    if spec.library == "none":
        return CurveLibrary([])
    return CurveLibrary.from_records(space, read_json(Path(spec.library_file)))


def write_instance(spec: InstanceSpec, out: Path) -> dict:
    """Generate, check and write space.json, chart.json, library.json and instance.json."""
    spec.validate()
    space = generate_space(spec)
    if abs(space.total_mass - 1.0) > 1e-9 and spec.generator != "from-file":
        raise ValueError("generated space does not carry unit mass")
    chart = generate_chart(space, spec)
    if chart.values.shape[0] != space.size or not np.all(np.isfinite(chart.values)):
        raise ValueError("chart does not assign a finite vector to every point")
    library = generate_library(space, spec)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "space.json", space_to_dict(space))
    write_json(out / "chart.json", chart.to_dict())
    (out / "library.json").write_text(library.to_json() + "\n", encoding="utf-8")
    summary = {"spec": asdict(spec), "points": space.size, "total_mass": space.total_mass,
               "chart_dim": chart.dim, "chart_lipschitz": chart.lipschitz, "fragments": len(library)}
    write_json(out / "instance.json", summary)
    return summary


# =============================================================================
# Run configuration
# =============================================================================

def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class RunConfig:
    j: float = 2e7
    R: float = 4096.0
    n: int = 2
    radii_per_step: int = 8
    v: float = 0.5
    eps: float = 0.1
    beta: float = 0.5
    dc_scale: float = 1.0 / 16
    delta: float = 0.5
    eta: float = 0.01
    tau: float = 0.05
    zeta: float = 0.35
    sigma: float = 0.2
    A: float = 2.0
    h: float | None = None
    eps_budget: float = 0.05
    extract_eps: float = 0.01
    k_bound: float = 10.0
    max_depth: int = 2
    threads: int = field(default_factory=default_threads)
    survey_betas: list = field(default_factory=lambda: [0.25, 0.5])
    survey_scales: list = field(default_factory=lambda: [1.0 / 64, 1.0 / 16])

    def corona_params(self) -> CoronaParams:
        return CoronaParams(self.delta, self.eta, self.tau, self.zeta, self.sigma, self.A)

    def validate(self) -> None:
        if self.j <= 1 or self.R <= 0 or self.n < 1 or self.radii_per_step < 1:
            raise ValueError("need j > 1, R > 0, n >= 1 and radii_per_step >= 1")
        if not (0 < self.v and 0 < self.eps < 1 and 0 < self.beta and 0 < self.dc_scale):
            raise ValueError("need v > 0, 0 < eps < 1, beta > 0 and dc_scale > 0")
        if self.h is not None and self.h <= 0:
            raise ValueError("content cell width h must be positive")
        if not (0 < self.eps_budget and 0 < self.extract_eps and self.k_bound >= 1):
            raise ValueError("need positive budgets and k_bound >= 1")
        if self.max_depth < 1 or self.threads < 1:
            raise ValueError("max_depth and threads must be positive")
        self.corona_params()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)


# =============================================================================
# Stage session
# =============================================================================

class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class Session:
    """Lazily rebuilt pipeline state for one run directory."""

    def __init__(self, run: Path, config: RunConfig):
        self.run = run
        self.config = config
        for name in ("space.json", "chart.json", "library.json"):
            if not (run / name).exists():
                raise FileNotFoundError(f"run directory lacks {name}; run `rectkit gen` first")
        self.space = space_from_dict(read_json(run / "space.json"))
        chart = read_json(run / "chart.json")
        self.chart = chart_from_values(self.space, chart["values"], chart["kind"], rescale=True)
        self.library = CurveLibrary.from_records(self.space, read_json(run / "library.json"))
        self.pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None

    def close(self) -> None:
        if self.pool is not None:
            self.pool.shutdown()

    # -- stage products -----------------------------------------------------

    @cached_property
    def K(self):
        c = self.config
        return extract_regular_subset(self.space, c.j, c.R, c.n, c.radii_per_step)

    @cached_property
    def system(self):
        if len(self.K) == 0:
            raise StageError("cubes", "regular subset is empty")
        return build_cube_system(self.K)

    @cached_property
    def content(self):
        return default_content(self.chart, self.config.h, fallback=self.space.min_distance)

    @cached_property
    def neighbors(self):
        return NeighborIndex(self.system, self.config.A)

    @cached_property
    def dc(self):
        c = self.config
        return dc_classification(self.space, self.K, self.content, c.beta, c.eps, c.dc_scale,
                                 per_step=c.radii_per_step, pool=self.pool)

    @cached_property
    def root(self) -> int:
        return int(self.system.largest_top)

    @cached_property
    def corona(self):
        try:
            return run_corona(self.system, self.root, self.config.corona_params(), self.content,
                              self.neighbors, check_h=False)
        except ValueError as exc:
            raise StageError("corona", str(exc)) from exc

    # -- stage reports ------------------------------------------------------

    def stage_cubes(self) -> tuple[dict, list]:
        report = verify_cube_properties(self.system)
        out = {"regular_points": len(self.K), "regular_mass": self.K.mass,
               "cube_count": len(self.system), "levels": self.system.levels,
               "tops": self.system.tops, "report": report.to_dict(),
               "system": self.system.to_dict()}
        return out, ([] if report.ok else ["cube axioms"])

    def stage_classify(self) -> tuple[dict, list]:
        c = self.config
        gp = gp_classification(self.space, self.K, self.chart, self.library, c.v, c.dc_scale)
        dp = dp_classification(self.space, self.K, gp.mask, c.eps, c.dc_scale, per_step=c.radii_per_step)
        survey = coverage_survey(self.space, self.K, self.content, c.eps, c.survey_betas,
                                        c.survey_scales, pool=self.pool)
        w = self.space.weights
        # measured only: a fill run from the K point nearest the centre of K
        centre = self.space.coords[self.K.members].mean(axis=0)
        start = int(self.K.members[np.argmin(np.linalg.norm(self.space.coords[self.K.members] - centre, axis=1))])
        try:
            fill = fill_process(self.space, self.K, self.chart, gp, self.library, start, c.dc_scale / 2,
                                c.v, c.dc_scale, c.max_depth).to_dict()
        except ValueError as exc:
            fill = {"error": str(exc)}
        out = {"gp": {"count": int(gp.mask.sum()), "mass": float(w[gp.mask].sum()),
                      "empty_library": gp.empty_library, "members": gp.members},
               "dp": {"count": int(dp.sum()), "mass": float(w[dp].sum()), "members": np.flatnonzero(dp)},
               "dc": {"count": int(self.dc.mask.sum()), "mass": float(w[self.dc.mask].sum()),
                      "beta": c.beta, "eps": c.eps, "R": c.dc_scale, "members": self.dc.members,
                      "subresolution_radii": self.dc.subresolution_radii},
               "fill": fill,
               "content_h": self.content.h,
               "survey": {"rows": survey["rows"], "cumulative": survey["cumulative"]}}
        return out, []

    def stage_corona(self) -> tuple[dict, list]:
        res = self.corona
        failed = []
        try:
            check_resolution(self.system, res.labels.cubes, self.content.h)
            resolution_ok = True
        except ValueError:
            resolution_ok = False
        if not res.partition["ok"]:
            failed.append("partition audit")
        if res.good["violations"]:
            failed.append("good-region dichotomy")
        if not res.conservation:
            failed.append("member conservation")
        if res.m_carleson["reduction_counterexamples"]:
            failed.append("reduction audit")
        out = res.to_dict()
        out["resolution_ok"] = resolution_ok
        out["root"] = self.root
        return out, failed

    def stage_extract(self) -> tuple[dict, list]:
        c = self.config
        labels = self.corona.labels
        geometry = compute_b_and_ell(self.system)
        try:
            local = extract_pieces(labels, self.chart, self.dc.mask, c.extract_eps, geometry, k_bound=c.k_bound)
        except ValueError as exc:
            raise StageError("extract", str(exc)) from exc
        budget = c.eps_budget * self.K.mass
        try:
            driver = rectifiability_driver(self.system, self.chart, self.content, self.dc.mask, budget,
                                           c.corona_params(), k_bound=c.k_bound, geometry=geometry)
        except ValueError as exc:
            raise StageError("extract", str(exc)) from exc
        failed = []
        if not local.all_verified:
            failed.append("piece verification")
        if local.identity_error > 1e-12:
            failed.append("leftover identity")
        if not driver.ok:
            failed.append("driver budget")
        out = {"geometry": geometry.to_dict(), "root": local.to_dict(), "driver": driver.to_dict()}
        return out, failed

    def run_stage(self, stage: str) -> tuple[dict, list]:
        report, failed = getattr(self, f"stage_{stage}")()
        report = {"stage": stage, "failed_invariants": failed, "ok": not failed, "report": report}
        write_json(self.run / f"{stage}.json", report)
        return report, failed


# =============================================================================
# Report tables
# =============================================================================

def load_stage(run: Path, stage: str) -> dict | None:
    path = run / f"{stage}.json"
    return read_json(path)["report"] if path.exists() else None


def summary_table(run: Path) -> list[dict]:
    rows = []
    for stage in STAGES:
        path = run / f"{stage}.json"
        if path.exists():
            d = read_json(path)
            rows.append({"stage": stage, "ok": d["ok"], "failed": ";".join(d["failed_invariants"])})
    return rows


def coverage_table(run: Path) -> list[dict]:
    d = load_stage(run, "classify")
    return [] if d is None else [dict(r) for r in d["survey"]["rows"]]


def pieces_table(run: Path) -> list[dict]:
    d = load_stage(run, "extract")
    return [] if d is None else [dict(r) for r in d["driver"]["per_cube"]]


def build_table(run: Path, table: str) -> list[dict]:
    return {"summary": summary_table, "coverage": coverage_table, "pieces": pieces_table}[table](run)


# =============================================================================
# Command line
# =============================================================================

def config_options(fn):
    """Attach one kebab-case flag per RunConfig field."""
    for f in reversed(fields(RunConfig)):
        name = "--" + f.name.replace("_", "-")
        if f.name in ("survey_betas", "survey_scales"):
            fn = click.option(name, type=float, multiple=True, default=None, help=f"repeatable {f.name}")(fn)
        elif f.name in ("n", "radii_per_step", "max_depth", "threads"):
            fn = click.option(name, f.name, type=int, default=None)(fn)
        else:
            fn = click.option(name, f.name, type=float, default=None)(fn)
    return click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
                        help="JSON file with RunConfig fields")(fn)


def resolve_config(run: Path, config_file: str | None, overrides: dict) -> RunConfig:
    base = {}
    if (run / "config.json").exists():
        base.update(read_json(run / "config.json"))
    if config_file:
        base.update(read_json(Path(config_file)))
    for k, v in overrides.items():
        if v is None or (isinstance(v, tuple) and not v):
            continue
        base[k] = list(v) if isinstance(v, tuple) else v
    cfg = RunConfig.from_dict(base)
    for name in ("n", "radii_per_step", "max_depth", "threads"):
        setattr(cfg, name, int(getattr(cfg, name)))
    cfg.validate()
    write_json(run / "config.json", asdict(cfg))
    return cfg


def run_stages(run: Path, stages, config_file, overrides) -> int:
    try:
        cfg = resolve_config(run, config_file, overrides)
    except (ValueError, TypeError) as exc:
        raise click.UsageError(str(exc))
    try:
        session = Session(run, cfg)
    except FileNotFoundError as exc:
        raise click.UsageError(str(exc))
    code = EXIT_OK
    try:
        for stage in stages:
            try:
                report, failed = session.run_stage(stage)
            except StageError as exc:
                write_json(run / f"{exc.stage}.json", {"stage": exc.stage, "ok": False,
                                                        "failed_invariants": ["hypothesis"],
                                                        "error": str(exc), "report": None})
                click.echo(f"{exc.stage}: hypothesis failure: {exc}", err=True)
                return EXIT_HYPOTHESIS
            status = "ok" if not failed else "FAILED " + ", ".join(failed)
            click.echo(f"{stage}: {status}")
            if failed:
                code = EXIT_INVARIANT
    finally:
        session.close()
    return code


RUN_DIR = click.argument("run", type=click.Path(file_okay=False, path_type=Path))
EXISTING_RUN = click.argument("run", type=click.Path(exists=True, file_okay=False, path_type=Path))


@click.group()
def main():
    """Rectifiability workbench."""


@main.command()
@RUN_DIR
@click.option("--generator", type=click.Choice(["grid", "comb", "snowflake", "heisenberg", "from-file"]),
              default="grid")
@click.option("--n", "n", type=int, default=2, help="grid dimension")
@click.option("--N", "N", type=int, default=64, help="points per axis")
@click.option("--alpha", type=float, default=0.5, help="snowflake exponent")
@click.option("--depth", type=int, default=4, help="comb depth")
@click.option("--input", "input_file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--chart", type=click.Choice(["identity", "projection", "user-matrix", "constant"]),
              default="identity")
@click.option("--axes", type=int, multiple=True, help="repeatable projection axis")
@click.option("--matrix", type=str, default=None, help="JSON matrix for user-matrix charts")
@click.option("--library", type=click.Choice(["axis-lines", "random-monotone", "none", "from-file"]),
              default="axis-lines")
@click.option("--library-count", type=int, default=64)
@click.option("--library-file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, default=0)
def gen(run, generator, n, N, alpha, depth, input_file, chart, axes, matrix, library, library_count,
        library_file, seed):
    """Write an instance (space, chart, fragment library) into RUN."""
    try:
        spec = InstanceSpec(generator, n, N, alpha, depth, input_file, chart, list(axes) or None,
                            json.loads(matrix) if matrix else None, library, library_count,
                            library_file, seed)
        summary = write_instance(spec, run)
    except (ValueError, json.JSONDecodeError) as exc:
        raise click.UsageError(str(exc))
    click.echo(f"wrote {summary['points']} points to {run}")


def _stage_command(stage: str):
    @EXISTING_RUN
    @config_options
    def command(run, config_file, **overrides):
        sys.exit(run_stages(run, (stage,), config_file, overrides))
    command.__doc__ = f"Run the {stage} stage on RUN and write {stage}.json."
    return main.command(name=stage)(command)


for _stage in STAGES:
    _stage_command(_stage)


@main.command()
@EXISTING_RUN
@config_options
def pipeline(run, config_file, **overrides):
    """Run every stage on RUN; exit 0 iff all assertable invariants hold."""
    code = run_stages(run, STAGES, config_file, overrides)
    if code == EXIT_OK or code == EXIT_INVARIANT:
        write_json(run / "summary.json", summary_table(run))
    sys.exit(code)


@main.command()
@EXISTING_RUN
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
@click.option("--table", type=click.Choice(list(TABLES)), default="summary")
@click.option("--output", type=click.Path(dir_okay=False, path_type=Path), default=None)
def report(run, fmt, table, output):
    """Emit a sorted report table from RUN as JSON or CSV."""
    if not any((run / f"{s}.json").exists() for s in STAGES):
        raise click.ClickException(f"{run} holds no stage reports")
    rows = build_table(run, table)
    text = dumps(rows) if fmt == "json" else rows_to_csv(rows)
    if output is None:
        click.echo(text, nl=False)
    else:
        output.write_text(text, encoding="utf-8", newline="")


if __name__ == "__main__":
    main()
