"""Experiment orchestration: config parsing, field recipes, runs, CSV output.

Configs are UTF-8 ``key=value`` text, one key per line, ``#`` comments.  A
parsed config fully determines a run, and all CSV outputs use
shortest-round-trip decimal formatting so repeat runs with the same config
produce identical bytes (the wall-clock column of result rows is the one
inherently nonreproducible value).
"""

from __future__ import annotations

import concurrent.futures
import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import bch as bch_mod
from . import fields as fields_mod
from .discretization import all_connections, assemble_global_operator, build_face_coefficients
from .engine import RunStats, SchemeConfig, run_scheme
from .grid import Grid, build_cartesian_grid
from .reference import expm_solve, l2_error, reference_reaction_solve

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "Problem",
    "parse_config",
    "load_config",
    "build_problem",
    "cmd_run",
    "cmd_converge",
    "cmd_fields",
    "cmd_bch",
]

RECIPES = ("uniform-D", "fracture-darcy", "random-D", "fracture-reaction")
CONVERGE_HEADER = ("scheme", "dM", "N", "dt_mean", "l2_error", "min_c", "wall_s")
RUN_HEADER = ("scheme", "dM", "N", "dt_mean", "min_c", "wall_s")
BCH_HEADER = ("dM", "N", "R_norm", "Z_err_norm", "min_event_rate")
TRACE_HEADER = ("event", "face", "t_hat", "dm")


class ConfigError(ValueError):
    """Malformed experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated description of one experiment; fully determines a run."""

    nx: int
    ny: int
    nz: int
    lx: float
    ly: float
    lz: float
    schemes: tuple
    dm_list: tuple
    final_time: float
    recipe: str
    seed: int
    diffusivity: float
    corr_len: float
    y_bias: float
    fracture_perm: float
    fracture_start_x: float
    fracture_diffusivity: float
    background_diffusivity: float
    reaction_rate: float
    velocity_x: float
    p_high: float
    p_low: float
    ic_mode: str
    ic_x: float
    ic_y: float
    ic_z: float
    ic_value: float
    out_dir: str
    trace: str
    max_events: int


@dataclass(frozen=True)
class ResultRow:
    """One completed run of a convergence sweep."""

    scheme: str
    dm: float
    n_events: int
    dt_mean: float
    l2_err: float
    min_c: float
    wall_s: float


@dataclass
class Problem:
    """Grid plus all coefficient fields of one experiment recipe."""

    grid: Grid
    diffusivity: np.ndarray
    face_velocity: np.ndarray      # None for pure diffusion
    coeffs: object
    init_mass: np.ndarray
    reaction: np.ndarray           # None when the recipe has no reaction
    perm_x: np.ndarray
    perm_y: np.ndarray
    pressure: np.ndarray
    fracture: np.ndarray           # None when the recipe has no fracture


def _parse_float(raw):
    return float(raw)


def _parse_pos_float(raw):
    v = float(raw)
    if not (v > 0):
        raise ValueError("must be positive")
    return v


def _parse_pos_int(raw):
    v = int(raw)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _parse_schemes(raw):
    s = raw.strip().lower()
    if s == "both":
        return ("eas", "bas")
    if s in ("eas", "bas"):
        return (s,)
    raise ValueError("must be one of: eas, bas, both")


def _parse_dm_list(raw):
    vals = tuple(float(part) for part in raw.replace(",", " ").split())
    if not vals:
        raise ValueError("needs at least one value")
    if any(not (v > 0) for v in vals):
        raise ValueError("all mass units must be positive")
    return vals


def _parse_recipe(raw):
    r = raw.strip()
    if r not in RECIPES:
        raise ValueError(f"must be one of: {', '.join(RECIPES)}")
    return r


def _parse_unit_interval(raw):
    v = float(raw)
    if not (0.0 < v <= 1.0):
        raise ValueError("must be in (0, 1]")
    return v


def _parse_trace(raw):
    t = raw.strip().lower()
    if t not in ("none", "counts", "full"):
        raise ValueError("must be one of: none, counts, full")
    return t


def _parse_ic_mode(raw):
    m = raw.strip().lower()
    if m not in ("point", "random"):
        raise ValueError("must be one of: point, random")
    return m


_REQUIRED = object()

# key -> (parser, default); _REQUIRED marks keys that must appear
_KEY_SPEC = {
    "nx": (_parse_pos_int, _REQUIRED),
    "ny": (_parse_pos_int, _REQUIRED),
    "nz": (_parse_pos_int, 1),
    "lx": (_parse_pos_float, 10.0),
    "ly": (_parse_pos_float, 10.0),
    "lz": (_parse_pos_float, 10.0),
    "scheme": (_parse_schemes, ("eas",)),
    "dm": (_parse_dm_list, _REQUIRED),
    "final_time": (_parse_pos_float, _REQUIRED),
    "recipe": (_parse_recipe, _REQUIRED),
    "seed": (int, 0),
    "diffusivity": (_parse_pos_float, 0.01),
    "corr_len": (_parse_pos_float, 9.0),
    "y_bias": (_parse_unit_interval, 0.7),
    "fracture_perm": (_parse_pos_float, 2000.0),
    "fracture_start_x": (_parse_float, None),
    "fracture_diffusivity": (_parse_pos_float, 100.0),
    "background_diffusivity": (_parse_pos_float, 0.1),
    "reaction_rate": (_parse_pos_float, 0.02),
    "velocity_x": (_parse_float, 1.0),
    "p_high": (_parse_float, 1.0),
    "p_low": (_parse_float, 0.0),
    "ic_mode": (_parse_ic_mode, "point"),
    "ic_x": (_parse_float, _REQUIRED),
    "ic_y": (_parse_float, _REQUIRED),
    "ic_z": (_parse_float, None),
    "ic_value": (_parse_pos_float, 1.0),
    "out_dir": (str, "."),
    "trace": (_parse_trace, "none"),
    "max_events": (_parse_pos_int, None),
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate key=value config text; errors carry line numbers."""
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected key=value, got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _KEY_SPEC:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = (raw, lineno)

    values = {}
    for key, (parser, default) in _KEY_SPEC.items():
        if key in seen:
            raw, lineno = seen[key]
            try:
                values[key] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: key {key!r}: {exc}") from None
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        else:
            values[key] = default

    values["schemes"] = values.pop("scheme")
    values["dm_list"] = values.pop("dm")
    cfg = ExperimentConfig(**values)
    if not (0 <= cfg.ic_x <= cfg.lx and 0 <= cfg.ic_y <= cfg.ly):
        raise ConfigError("initial-condition coordinates fall outside the domain")
    if cfg.ic_z is None:
        cfg = replace(cfg, ic_z=0.5 * cfg.lz)
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def build_problem(config: ExperimentConfig) -> Problem:
    """Materialize the grid and coefficient fields of a config's recipe."""
    grid = build_cartesian_grid(config.nx, config.ny, config.nz,
                                config.lx, config.ly, config.lz)
    n = grid.n_cells
    perm_x = np.ones(n)
    perm_y = np.ones(n)
    pressure = np.zeros(n)
    face_velocity = None
    reaction = None
    fracture = None

    if config.recipe == "uniform-D":
        diffusivity = np.full(n, config.diffusivity)
    elif config.recipe == "random-D":
        diffusivity = fields_mod.sample_lognormal_diffusivity(
            grid, config.corr_len, config.seed)
    elif config.recipe == "fracture-darcy":
        fracture = _walk(grid, config)
        # outer strips are blocked so the fracture is the only outlet; the
        # fracture cells override the blocked top row where they cross it
        cells = np.arange(n)
        perm_x[cells % grid.nx == grid.nx - 1] = 0.0
        perm_y[(cells // grid.nx) % grid.ny == grid.ny - 1] = 0.0
        perm_y[fracture] = config.fracture_perm
        pressure = fields_mod.solve_darcy(grid, perm_x, perm_y,
                                          config.p_low, config.p_high)
        face_velocity = fields_mod.velocity_field(grid, pressure, perm_x, perm_y)
        diffusivity = np.full(n, config.diffusivity)
    else:  # fracture-reaction
        fracture = _walk(grid, config)
        diffusivity = np.full(n, config.background_diffusivity)
        diffusivity[fracture] = config.fracture_diffusivity
        face_velocity = fields_mod.uniform_face_velocity(
            grid, (config.velocity_x, 0.0, 0.0))
        reaction = fields_mod.langmuir_rate_coefficients(diffusivity, config.reaction_rate)

    coeffs = build_face_coefficients(grid, diffusivity, face_velocity)
    if config.ic_mode == "random":
        # every cell active: uniform concentrations in [0.5, 1.5] * ic_value
        rng = np.random.default_rng((config.seed, 99))
        init_mass = rng.uniform(0.5, 1.5, n) * config.ic_value * grid.cell_volumes
    else:
        init_mass = np.zeros(n)
        j = grid.cell_containing(config.ic_x, config.ic_y, config.ic_z)
        init_mass[j] = config.ic_value * grid.cell_volumes[j]
    return Problem(grid=grid, diffusivity=diffusivity, face_velocity=face_velocity,
                   coeffs=coeffs, init_mass=init_mass, reaction=reaction,
                   perm_x=perm_x, perm_y=perm_y, pressure=pressure, fracture=fracture)


def _walk(grid, config):
    start_ix = None
    if config.fracture_start_x is not None:
        hx = grid.spacing[0]
        start_ix = min(max(int(config.fracture_start_x / hx), 0), grid.nx - 1)
    return fields_mod.fracture_walk(grid, config.seed, config.y_bias, start_ix=start_ix)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_cell_field_csv(path, grid: Grid, values) -> None:
    """Cell-value CSV with header i,j,k,value in linear cell order."""
    values = np.asarray(values)
    rows = []
    for j in range(grid.n_cells):
        ix, iy, iz = grid.cell_coords(j)
        rows.append((ix, iy, iz, values[j]))
    _write_csv(path, ("i", "j", "k", "value"), rows)


def _check_conservation(problem: Problem, final_mass: np.ndarray) -> None:
    if problem.reaction is not None:
        return
    total0 = float(problem.init_mass.sum())
    drift = abs(float(final_mass.sum()) - total0)
    if drift > 1e-12 * max(total0, 1e-300):
        raise RuntimeError(
            f"mass-conservation check failed: drift {drift:.3e} on total {total0:.6g}")


def _scheme_config(problem: Problem, config: ExperimentConfig,
                   scheme: str, dm: float) -> SchemeConfig:
    return SchemeConfig(scheme=scheme, mass_unit=dm, final_time=config.final_time,
                        reaction=problem.reaction, max_events=config.max_events)


def cmd_run(config: ExperimentConfig, out_dir) -> RunStats:
    """Single run (first scheme, first mass unit); writes the final field and stats."""
    out = Path(out_dir)
    problem = build_problem(config)
    scheme = config.schemes[0]
    dm = config.dm_list[0]
    trace_rows = []
    sink = None
    if config.trace == "full":
        sink = lambda n, k, t_hat, dmass: trace_rows.append((n, k, t_hat, dmass))
    final, stats = run_scheme(problem.grid, problem.init_mass, problem.coeffs,
                              _scheme_config(problem, config, scheme, dm),
                              trace_sink=sink)
    _check_conservation(problem, final)
    write_cell_field_csv(out / "final_c.csv", problem.grid,
                         final / problem.grid.cell_volumes)
    _write_csv(out / "run_stats.csv", RUN_HEADER,
               [(scheme, dm, stats.n_events, stats.dt_mean,
                 stats.min_concentration, stats.wall_time)])
    if config.trace in ("counts", "full"):
        write_cell_field_csv(out / "events_per_cell.csv", problem.grid,
                             stats.per_cell_events)
    if config.trace == "full":
        _write_csv(out / "trace.csv", TRACE_HEADER, trace_rows)
    return stats


def _reference_solution(problem: Problem, config: ExperimentConfig) -> np.ndarray:
    operator = assemble_global_operator(
        problem.grid, all_connections(problem.grid, problem.coeffs))
    if problem.reaction is None:
        return expm_solve(operator, problem.init_mass, config.final_time)
    return reference_reaction_solve(operator, problem.grid.cell_volumes,
                                    problem.reaction, problem.init_mass,
                                    config.final_time)


def _converge_worker(args):
    problem, config, scheme, dm = args
    final, stats = run_scheme(problem.grid, problem.init_mass, problem.coeffs,
                              _scheme_config(problem, config, scheme, dm))
    return final, stats


def cmd_converge(config: ExperimentConfig, out_dir, threads: int = 1) -> list:
    """Sweep scheme x mass-unit, compare to the reference, emit result rows.

    Writes converge.csv and, for the smallest mass unit of each scheme, the
    per-cell event-count field events_<scheme>.csv.
    """
    out = Path(out_dir)
    problem = build_problem(config)
    reference = _reference_solution(problem, config)
    tasks = [(problem, config, scheme, dm)
             for scheme in config.schemes for dm in config.dm_list]
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_converge_worker, tasks))
    else:
        outcomes = [_converge_worker(task) for task in tasks]

    rows = []
    smallest = min(config.dm_list)
    for (task, (final, stats)) in zip(tasks, outcomes):
        _, _, scheme, dm = task
        _check_conservation(problem, final)
        err = l2_error(final, reference, problem.grid.cell_volumes)
        rows.append(ResultRow(scheme=scheme, dm=dm, n_events=stats.n_events,
                              dt_mean=stats.dt_mean, l2_err=err,
                              min_c=stats.min_concentration, wall_s=stats.wall_time))
        if dm == smallest:
            write_cell_field_csv(out / f"events_{scheme}.csv", problem.grid,
                                 stats.per_cell_events)
    _write_csv(out / "converge.csv", CONVERGE_HEADER,
               [(r.scheme, r.dm, r.n_events, r.dt_mean, r.l2_err, r.min_c, r.wall_s)
                for r in rows])
    return rows


def cmd_fields(config: ExperimentConfig, out_dir) -> None:
    """Write the recipe's coefficient fields as cell-value CSVs."""
    out = Path(out_dir)
    problem = build_problem(config)
    grid = problem.grid
    if problem.face_velocity is None:
        v_faces = np.zeros(grid.n_faces)
    else:
        v_faces = problem.face_velocity
    v_means = fields_mod.cell_velocity_means(grid, v_faces)
    pe = fields_mod.peclet(grid, problem.diffusivity, v_faces)
    with np.errstate(divide="ignore"):
        log_pe = np.log10(pe)
    write_cell_field_csv(out / "ky.csv", grid, problem.perm_y)
    write_cell_field_csv(out / "pressure.csv", grid, problem.pressure)
    write_cell_field_csv(out / "vx.csv", grid, v_means[:, 0])
    write_cell_field_csv(out / "vy.csv", grid, v_means[:, 1])
    write_cell_field_csv(out / "log10_peclet.csv", grid, log_pe)
    write_cell_field_csv(out / "D.csv", grid, problem.diffusivity)


def cmd_bch(config: ExperimentConfig, out_dir) -> bch_mod.DecayStudy:
    """Remainder decay study of the exact scheme on a desk-scale grid."""
    out = Path(out_dir)
    problem = build_problem(config)
    if problem.reaction is not None:
        raise ConfigError("the decay study needs a linear recipe (no reaction term)")
    if problem.grid.n_cells > 50:
        raise ConfigError("the decay study is restricted to grids of at most 50 cells")
    study = bch_mod.remainder_decay_study(problem.grid, problem.coeffs,
                                          problem.init_mass, config.final_time,
                                          config.dm_list)
    _write_csv(out / "bch.csv", BCH_HEADER,
               [(r.mass_unit, r.n_events, r.r_norm, r.z_err_norm, r.min_event_rate)
                for r in study.rows])
    return study
