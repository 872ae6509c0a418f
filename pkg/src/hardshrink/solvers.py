"""Hard-thresholding solvers.

All solvers start from the zero vector (or matrix), record one
:class:`IterRecord` per update and return ``(estimate, IterTrace)``.

* :func:`iht_solve` -- projected gradient with hard thresholding; with
  ``fully_corrective=True`` every projection is followed by an exact
  minimization on the new support (HTP).
* :func:`two_stage_solve` -- expand the support by ``ell`` gradient
  coordinates, fully correct, threshold back to ``s``, fully correct again
  (CoSaMP uses ``ell = 2s``, subspace pursuit ``ell = s``).
* :func:`pht_solve` -- partial hard thresholding followed by a fully
  corrective step (OMPR is ``ell = 1``).
* :func:`matrix_iht_solve` -- IHT with the rank projection.
"""
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numkit import RngStream, top_k_indices
from .objectives import (
    MatrixLeastSquares,
    QuadraticObjective,
    estimate_matrix_rss,
    estimate_rsc_rss,
)
from .projections import (
    PartialProjectionSpec,
    hard_threshold,
    numerical_rank,
    partial_hard_threshold,
    rank_project,
)

__all__ = [
    "DivergenceError",
    "IterRecord",
    "IterTrace",
    "SolverConfig",
    "default_step_size",
    "iht_solve",
    "matrix_iht_solve",
    "pht_solve",
    "two_stage_solve",
]

STOP_RULES = ("f_decrease", "grad_support_norm", "iterate_change")
_DEFAULT_TOL = {"f_decrease": 1e-12, "grad_support_norm": 1e-8, "iterate_change": 1e-10}


class DivergenceError(RuntimeError):
    """The objective became non-finite; usually the step size is too large."""

    def __init__(self, iteration):
        super().__init__(f"non-finite objective at iteration {iteration}; step size too large?")
        self.iteration = iteration


@dataclass
class SolverConfig:
    """Parameters shared by the solvers.

    ``s`` is the projected sparsity (the rank for :func:`matrix_iht_solve`).
    ``eta=None`` selects :func:`default_step_size`. ``f_target`` is an
    optional known optimal value; the run stops once
    ``f - f_target <= epsilon``.
    """

    s: int
    ell: Optional[int] = None
    eta: Optional[float] = None
    epsilon: float = 0.0
    max_iters: int = 1000
    fully_corrective: bool = False
    stop_rule: str = "f_decrease"
    tol: Optional[float] = None
    patience: int = 3
    f_target: Optional[float] = None
    warm_start: Optional[np.ndarray] = None
    s_star_hint: Optional[int] = None
    step_trials: int = 200

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("s must be at least 1")
        if self.ell is not None and not 0 <= self.ell:
            raise ValueError("ell must be nonnegative")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"unknown stop rule {self.stop_rule!r}; expected one of {STOP_RULES}")

    @property
    def stop_tol(self):
        return _DEFAULT_TOL[self.stop_rule] if self.tol is None else self.tol


@dataclass(frozen=True)
class IterRecord:
    t: int
    f_value: float
    support: object
    support_change_count: int
    wall_time: float


@dataclass
class IterTrace:
    records: list = field(default_factory=list)
    final: object = None
    stop_reason: str = ""
    f_initial: float = math.nan
    eta: float = math.nan

    @property
    def iterations(self):
        return len(self.records)

    @property
    def f_values(self):
        return np.array([r.f_value for r in self.records])

    def append(self, record):
        self.records.append(record)


def _value_grad(obj, x):
    # overflow shows up as a non-finite f, which the caller turns into DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        if hasattr(obj, "value_and_gradient"):
            return obj.value_and_gradient(x)
        return obj.value(x), obj.gradient(x)


def _secant_curvature(obj, k, trials, rng):
    p = obj.dim
    g0 = obj.gradient(np.zeros(p))
    best = 0.0
    for _ in range(trials):
        d = np.zeros(p)
        S = rng.choice(p, size=k, replace=False)
        d[S] = rng.standard_normal(k)
        best = max(best, float(d @ (obj.gradient(d) - g0)) / float(d @ d))
    return best


def _estimate_rss(obj, level, trials, rng):
    if isinstance(obj, MatrixLeastSquares):
        return estimate_matrix_rss(obj, min(level, min(obj.shape)), rng=rng)
    if isinstance(obj, QuadraticObjective):
        return estimate_rsc_rss(obj, min(level, obj.dim), trials=trials, rng=rng, which="max").L_hat
    return _secant_curvature(obj, min(level, obj.dim), trials, rng)


def default_step_size(obj, s, family="iht", s_star_hint=None, trials=200, rng=None):
    """Step size from an empirical RSS constant at level ``2s + s_star_hint``.

    ``family`` selects the rule: ``"iht"`` gives ``2/(3L)``, ``"pht"`` gives
    ``1/(2L)`` and ``"grades"`` gives ``1/L``.
    """
    hint = s if s_star_hint is None else s_star_hint
    rng = rng if rng is not None else RngStream(0, 0)
    L = _estimate_rss(obj, 2 * s + hint, trials, rng)
    if not L > 0:
        raise ValueError(f"estimated smoothness constant {L} is not positive")
    factor = {"iht": 2.0 / 3.0, "pht": 0.5, "grades": 1.0}[family]
    return factor / L


class _Stopper:
    def __init__(self, cfg):
        self.cfg = cfg
        self.tol = cfg.stop_tol
        self.stalls = 0

    def check(self, f_prev, f_new, x_prev, x_new, grad_new, support, changed):
        cfg = self.cfg
        if cfg.f_target is not None and f_new - cfg.f_target <= cfg.epsilon:
            return "target_reached"
        rule = cfg.stop_rule
        if rule == "f_decrease":
            if f_prev - f_new <= self.tol * (1.0 + abs(f_new)):
                self.stalls += 1
            else:
                self.stalls = 0
            if self.stalls >= cfg.patience:
                return "converged"
        elif rule == "iterate_change":
            if np.linalg.norm(x_new - x_prev) <= self.tol * (1.0 + np.linalg.norm(x_prev)):
                return "converged"
        elif rule == "grad_support_norm":
            # matrices have no coordinate support; fall back to the iterate change
            if grad_new.ndim == 1:
                small = np.linalg.norm(grad_new[support])
            else:
                small = np.linalg.norm(x_new - x_prev)
            if changed == 0 and small <= self.tol * (1.0 + np.linalg.norm(x_new)):
                return "converged"
        return None


def _gradient_step(theta, eta, g, t):
    with np.errstate(over="ignore", invalid="ignore"):
        z = theta - eta * g
    if not np.all(np.isfinite(z)):
        raise DivergenceError(t)
    return z


def _start(obj, cfg):
    if cfg.warm_start is None:
        return np.zeros(obj.dim)
    x = np.array(cfg.warm_start, dtype=np.float64)
    if np.count_nonzero(x) > cfg.s:
        x = hard_threshold(x, cfg.s).values
    return x


def _check_dim(obj, cfg):
    if obj.dim < cfg.s:
        raise ValueError(f"s={cfg.s} exceeds the problem dimension {obj.dim}")


def _run(obj, cfg, theta, eta, update):
    """Shared iteration loop; ``update(theta, g, S, t)`` returns the next iterate."""
    trace = IterTrace(eta=eta)
    stopper = _Stopper(cfg)
    f, g = _value_grad(obj, theta)
    trace.f_initial = f
    S = np.flatnonzero(theta)
    t0 = time.perf_counter()
    for t in range(1, cfg.max_iters + 1):
        theta_new = update(theta, g, S, t)
        f_new, g_new = _value_grad(obj, theta_new)
        if not math.isfinite(f_new):
            raise DivergenceError(t)
        S_new = np.flatnonzero(theta_new)
        changed = int(np.setdiff1d(S_new, S, assume_unique=True).size)
        trace.append(IterRecord(t, f_new, S_new, changed, time.perf_counter() - t0))
        reason = stopper.check(f, f_new, theta, theta_new, g_new, S_new, changed)
        theta, f, g, S = theta_new, f_new, g_new, S_new
        if reason:
            trace.stop_reason = reason
            break
    else:
        trace.stop_reason = "max_iters"
    trace.final = theta
    return theta, trace


def iht_solve(obj, cfg, rng=None):
    """Iterative hard thresholding ``theta <- P_s(theta - eta grad f(theta))``."""
    _check_dim(obj, cfg)
    eta = cfg.eta or default_step_size(obj, cfg.s, "iht", cfg.s_star_hint, cfg.step_trials, rng)

    def update(theta, g, S, t):
        proj = hard_threshold(_gradient_step(theta, eta, g, t), cfg.s)
        if cfg.fully_corrective and proj.support.size:
            return obj.restricted_minimize(np.sort(proj.support))
        return proj.values

    return _run(obj, cfg, _start(obj, cfg), eta, update)


def two_stage_solve(obj, cfg, rng=None):
    """Two-stage hard thresholding with expansion level ``cfg.ell``."""
    _check_dim(obj, cfg)
    if not cfg.ell or cfg.ell < 1:
        raise ValueError("two-stage thresholding needs ell >= 1")
    p = obj.dim

    def update(theta, g, S, t):
        off = g.copy()
        off[S] = 0.0
        new = top_k_indices(off, min(cfg.ell, p))
        new = new[off[new] != 0]
        Z = np.union1d(S, new)
        if Z.size == 0:
            return theta.copy()
        beta = obj.restricted_minimize(Z)
        proj = hard_threshold(beta, cfg.s)
        if proj.support.size == 0:
            return proj.values
        return obj.restricted_minimize(np.sort(proj.support))

    return _run(obj, cfg, _start(obj, cfg), math.nan, update)


def pht_solve(obj, cfg, rng=None):
    """Iterative partial hard thresholding with level ``cfg.ell``."""
    _check_dim(obj, cfg)
    ell = 1 if cfg.ell is None else cfg.ell
    if not 1 <= ell <= cfg.s:
        raise ValueError(f"partial thresholding needs 1 <= ell <= s, got ell={ell}")
    eta = cfg.eta or default_step_size(obj, cfg.s, "pht", cfg.s_star_hint, cfg.step_trials, rng)

    def update(theta, g, S, t):
        spec = PartialProjectionSpec(cfg.s, ell, tuple(S.tolist()))
        v = partial_hard_threshold(_gradient_step(theta, eta, g, t), spec)
        if v.support.size == 0:
            return v.values
        return obj.restricted_minimize(np.sort(v.support))

    return _run(obj, cfg, _start(obj, cfg), eta, update)


def matrix_iht_solve(mobj, cfg, rng=None):
    """IHT over matrices of rank at most ``cfg.s``.

    Trace records store the numerical rank of each iterate as ``support`` and
    its change as ``support_change_count``.
    """
    p1, p2 = mobj.shape
    if cfg.s > min(p1, p2):
        raise ValueError(f"rank {cfg.s} exceeds min(p1, p2) = {min(p1, p2)}")
    eta = cfg.eta or default_step_size(mobj, cfg.s, "iht", cfg.s_star_hint, cfg.step_trials, rng)
    W = np.zeros((p1, p2)) if cfg.warm_start is None else rank_project(cfg.warm_start, cfg.s)
    trace = IterTrace(eta=eta)
    stopper = _Stopper(cfg)
    f, g = _value_grad(mobj, W)
    trace.f_initial = f
    rank = numerical_rank(W) if W.any() else 0
    t0 = time.perf_counter()
    for t in range(1, cfg.max_iters + 1):
        W_new = rank_project(_gradient_step(W, eta, g, t), cfg.s)
        f_new, g_new = _value_grad(mobj, W_new)
        if not math.isfinite(f_new):
            raise DivergenceError(t)
        rank_new = numerical_rank(W_new)
        trace.append(IterRecord(t, f_new, rank_new, abs(rank_new - rank), time.perf_counter() - t0))
        reason = stopper.check(f, f_new, W, W_new, g_new, None, rank_new - rank)
        W, f, g, rank = W_new, f_new, g_new, rank_new
        if reason:
            trace.stop_reason = reason
            break
    else:
        trace.stop_reason = "max_iters"
    trace.final = W
    return W, trace
