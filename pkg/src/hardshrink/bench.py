"""Experiment sweeps: config parsing, trial orchestration, metrics and emission.

A sweep varies one parameter over a grid. Every (cell, trial) pair draws a
fresh instance from ``RngStream(seed, cell << 20 | trial)`` and runs every
configured algorithm on it, so results do not depend on thread scheduling.
"""
import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .algorithms import IHT_FAMILY, parse_algorithm, run_algorithm
from .numkit import RngStream
from .objectives import (
    make_corrected_additive,
    make_corrected_missing,
    make_least_squares,
    make_matrix_least_squares,
)
from .statgen import (
    CovarianceSpec,
    MatrixInstance,
    corrupt_additive,
    corrupt_missing,
    default_sample_size,
    make_matrix_instance,
    subspace_misses,
    support_error,
    synth_linear,
)

__all__ = [
    "CSV_FIELDS",
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "emit",
    "instance_for",
    "load_config",
    "make_objective",
    "parse_config",
    "read_rows",
    "run_experiment",
    "solve_instance",
    "sweep_summary",
]

CSV_FIELDS = ("scenario", "algorithm", "grid_param", "grid_value", "trial", "undiscovered",
              "support_err_frac", "l2_err", "f_final", "iters", "wall_time_s", "seed")
METRICS = ("undiscovered", "support_err_frac", "l2_err", "f_final", "iters", "wall_time_s")

SCENARIOS = {
    "noise_sweep": ("sigma",),
    "dimension_sweep": ("p",),
    "sparsity_sweep": ("s_star",),
    "oversampling_sweep": ("f_o",),
    "condition_sweep": ("s_factor", "s"),
    "sample_size_sweep": ("n",),
    "matrix_recovery": ("n", "sigma", "r_star"),
}
_INT_PARAMS = {"p", "s_star", "n", "s", "r_star"}
SEED_ENV = "HARDSHRINK_SEED"


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 1)."""


@dataclass
class BaseParams:
    p: int = 2000
    s_star: int = 20
    sigma: float = 0.1
    f_o: float = 2.0
    kappa_target: float = 50.0
    n: Optional[int] = None
    s: Optional[int] = None
    s_factor: float = 1.0
    ell: Optional[int] = None
    max_iters: Optional[int] = None
    covariance: Optional[str] = None
    block_eps: float = 0.1
    corruption: str = "none"
    sigma_w: float = 0.2
    nu: float = 0.2
    p1: int = 30
    p2: int = 30
    r_star: int = 2
    n_factor: float = 6.0


@dataclass
class ExperimentConfig:
    scenario: str
    algorithms: list
    grid: dict
    trials_per_cell: int = 1
    base: BaseParams = field(default_factory=BaseParams)
    seed: int = 0
    timing: bool = True

    @property
    def grid_param(self):
        return next(iter(self.grid))

    @property
    def grid_values(self):
        return self.grid[self.grid_param]

    def to_dict(self):
        return dataclasses.asdict(self)


def parse_config(raw, env=None):
    """Validate a config mapping (JSON field names) into :class:`ExperimentConfig`."""
    env = os.environ if env is None else env
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - {f.name for f in dataclasses.fields(ExperimentConfig)}
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {sorted(SCENARIOS)}")
    algorithms = raw.get("algorithms")
    if not algorithms or not isinstance(algorithms, list):
        raise ConfigError("algorithms must be a nonempty list")
    for name in algorithms:
        try:
            parse_algorithm(str(name))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    grid = raw.get("grid")
    if not isinstance(grid, dict) or len(grid) != 1:
        raise ConfigError("grid must map exactly one parameter to a list of values")
    (param, values), = grid.items()
    if param not in SCENARIOS[scenario]:
        raise ConfigError(f"scenario {scenario} sweeps {SCENARIOS[scenario]}, not {param!r}")
    if not isinstance(values, list) or not values:
        raise ConfigError("grid values must be a nonempty list")
    for v in values:
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ConfigError(f"grid value {v!r} is not a number")
        if v < 0 or (v == 0 and param != "sigma"):
            raise ConfigError(f"grid value {v!r} for {param} must be positive")
        if param in _INT_PARAMS and int(v) != v:
            raise ConfigError(f"grid value {v!r} for {param} must be an integer")
    trials = raw.get("trials_per_cell", 1)
    if not isinstance(trials, int) or trials < 1:
        raise ConfigError("trials_per_cell must be a positive integer")
    base_raw = raw.get("base", {}) or {}
    known = {f.name for f in dataclasses.fields(BaseParams)}
    if set(base_raw) - known:
        raise ConfigError(f"unknown base fields: {sorted(set(base_raw) - known)}")
    try:
        base = BaseParams(**base_raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if base.corruption not in ("none", "additive", "missing"):
        raise ConfigError(f"unknown corruption {base.corruption!r}")
    seed = raw.get("seed", 0)
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    values = [int(v) if param in _INT_PARAMS else v for v in values]
    return ExperimentConfig(scenario, [str(a).lower() for a in algorithms], {param: values},
                            trials, base, seed, bool(raw.get("timing", True)))


def load_config(path, env=None):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw, env)


@dataclass
class ResultRow:
    scenario: str
    algorithm: str
    grid_param: str
    grid_value: float
    trial: int
    undiscovered: int
    support_err_frac: float
    l2_err: float
    f_final: float
    iters: int
    wall_time_s: float
    seed: int
    error: Optional[str] = None

    def to_dict(self):
        d = dataclasses.asdict(self)
        if d["error"] is None:
            del d["error"]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d.get(k) for k in (*CSV_FIELDS, "error")})


def _cell_params(cfg, value):
    b = dataclasses.replace(cfg.base)
    setattr(b, cfg.grid_param, value)
    return b


def instance_for(cfg, cell, trial):
    """Generate the instance used for ``(cell, trial)`` of ``cfg``."""
    b = _cell_params(cfg, cfg.grid_values[cell])
    rng = RngStream(cfg.seed, (cell << 20) | trial)
    if cfg.scenario == "matrix_recovery":
        n = b.n or int(math.ceil(b.n_factor * b.r_star * (b.p1 + b.p2)))
        return make_matrix_instance(b.p1, b.p2, b.r_star, n, b.sigma, rng)
    n = b.n or default_sample_size(b.s_star, b.p, b.f_o)
    kind = b.covariance or ("planted" if cfg.scenario == "condition_sweep" else "identity")
    cov = CovarianceSpec(kind, b.p, eps=b.block_eps, kappa_target=b.kappa_target)
    inst = synth_linear(b.p, b.s_star, n, b.sigma, cov, rng)
    if b.corruption == "additive":
        inst = corrupt_additive(inst, b.sigma_w * np.eye(b.p), rng)
    elif b.corruption == "missing":
        inst = corrupt_missing(inst, b.nu, rng)
    return inst


def make_objective(inst):
    """Objective matching the instance's corruption tag."""
    if isinstance(inst, MatrixInstance):
        return make_matrix_least_squares(inst.X, inst.y)
    if inst.corruption == "additive":
        return make_corrected_additive(inst.X_corrupted, inst.y, inst.Sigma_W)
    if inst.corruption == "missing":
        return make_corrected_missing(inst.X_corrupted, inst.mask, inst.y, inst.nu)
    return make_least_squares(inst.X, inst.y)


def solve_instance(inst, obj, algorithm, s=None, ell=None, eta=None, max_iters=None):
    """Run one algorithm on one instance; returns the metric dict of a row."""
    if isinstance(inst, MatrixInstance):
        s = s or inst.r_star
        t0 = time.perf_counter()
        W, trace = run_algorithm(algorithm, obj, s, inst.r_star, eta=eta, max_iters=max_iters)
        wall = time.perf_counter() - t0
        miss = subspace_misses(W, inst)
        return dict(undiscovered=miss, support_err_frac=miss / inst.r_star,
                    l2_err=float(np.linalg.norm(W - inst.W_bar)), f_final=obj.value(W),
                    iters=trace.iterations, wall_time_s=wall)
    s_star = inst.s_star
    s = s or s_star
    t0 = time.perf_counter()
    theta, trace = run_algorithm(algorithm, obj, s, s_star, sigma=inst.noise_sigma, n=inst.n,
                                 eta=eta, ell=ell, max_iters=max_iters)
    wall = time.perf_counter() - t0
    miss, frac = support_error(theta, inst.theta_bar, s_star)
    return dict(undiscovered=miss, support_err_frac=frac,
                l2_err=float(np.linalg.norm(theta - inst.theta_bar)), f_final=obj.value(theta),
                iters=trace.iterations, wall_time_s=wall)


def _projected_sparsity(b):
    if b.s is not None:
        return int(b.s)
    return max(1, min(b.p, int(round(b.s_factor * b.s_star))))


def _run_cell_trial(cfg, cell, trial):
    value = cfg.grid_values[cell]
    b = _cell_params(cfg, value)
    key = dict(scenario=cfg.scenario, grid_param=cfg.grid_param, grid_value=value, trial=trial,
               seed=cfg.seed)
    failed = dict(undiscovered=-1, support_err_frac=math.nan, l2_err=math.nan, f_final=math.nan,
                  iters=0, wall_time_s=0.0)
    try:
        inst = instance_for(cfg, cell, trial)
        obj = make_objective(inst)
    except Exception as exc:  # noqa: BLE001 - recorded as an error row
        return [ResultRow(algorithm=a, **key, **failed, error=f"setup: {exc}") for a in cfg.algorithms]
    s = None if cfg.scenario == "matrix_recovery" else _projected_sparsity(b)
    rows = []
    for algo in cfg.algorithms:
        try:
            metrics = solve_instance(inst, obj, algo, s=s, ell=b.ell, max_iters=b.max_iters)
            if not cfg.timing:
                metrics["wall_time_s"] = 0.0
            if not all(math.isfinite(float(v)) for v in metrics.values()):
                raise FloatingPointError("non-finite metric")
            rows.append(ResultRow(algorithm=algo, **key, **metrics))
        except Exception as exc:  # noqa: BLE001 - recorded as an error row
            rows.append(ResultRow(algorithm=algo, **key, **failed, error=f"{type(exc).__name__}: {exc}"))
    return rows


def run_experiment(cfg, threads=1):
    """Run every cell x trial x algorithm; rows come back in canonical order.

    Failures become rows with ``error`` set instead of aborting the sweep.
    """
    jobs = [(c, t) for c in range(len(cfg.grid_values)) for t in range(cfg.trials_per_cell)]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda ct: _run_cell_trial(cfg, *ct), jobs))
    else:
        chunks = [_run_cell_trial(cfg, c, t) for c, t in jobs]
    order = {a: i for i, a in enumerate(cfg.algorithms)}
    cell_of = {v: i for i, v in enumerate(cfg.grid_values)}
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (cell_of[r.grid_value], order[r.algorithm], r.trial))
    return rows


def sweep_summary(rows):
    """Median and interquartile range of each metric per cell and algorithm."""
    groups = {}
    for r in rows:
        if r.error is None:
            groups.setdefault((r.scenario, r.algorithm, r.grid_param, r.grid_value), []).append(r)
    out = []
    for (scenario, algo, param, value), members in groups.items():
        entry = dict(scenario=scenario, algorithm=algo, grid_param=param, grid_value=value,
                     trials=len(members))
        for m in METRICS:
            vals = np.array([getattr(r, m) for r in members], dtype=float)
            q25, q50, q75 = np.percentile(vals, [25, 50, 75])
            entry[f"{m}_median"] = float(q50)
            entry[f"{m}_iqr"] = float(q75 - q25)
        out.append(entry)
    return out


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _write_csv(path, header, records):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for rec in records:
                w.writerow([_fmt(rec[h]) for h in header])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit(rows, fmt, path):
    """Write result rows as ``csv`` (fixed 12-column header) or ``json``.

    Error rows are skipped here; :func:`emit_errors` writes them separately.
    """
    good = [r.to_dict() for r in rows if r.error is None]
    if fmt == "csv":
        _write_csv(path, CSV_FIELDS, good)
    elif fmt == "json":
        try:
            with open(path, "w") as fh:
                json.dump(good, fh, indent=1)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
    else:
        raise ValueError(f"unknown format {fmt!r}")


def emit_errors(rows, path):
    fields = ("scenario", "algorithm", "grid_param", "grid_value", "trial", "seed", "error")
    _write_csv(path, fields, [r.to_dict() for r in rows if r.error is not None])


def emit_summary(summary, path):
    header = ["scenario", "algorithm", "grid_param", "grid_value", "trials"]
    for m in METRICS:
        header += [f"{m}_median", f"{m}_iqr"]
    _write_csv(path, header, summary)


def read_rows(path):
    """Parse rows back from a JSON emission."""
    with open(path) as fh:
        return [ResultRow.from_dict(d) for d in json.load(fh)]


def is_iht_family(name):
    return parse_algorithm(name)[0] in IHT_FAMILY
