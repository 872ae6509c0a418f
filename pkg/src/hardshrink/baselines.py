"""Reference competitors: proximal-gradient lasso and forward-backward greedy."""
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._backend import kernels
from .solvers import DivergenceError, IterRecord, IterTrace

__all__ = ["FobaConfig", "LassoConfig", "default_lasso_lambda", "foba", "ista_lasso"]


@dataclass
class LassoConfig:
    lam: float
    max_iters: int = 5000
    tol: float = 1e-6

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


def default_lasso_lambda(sigma, p, n, scale=2.0):
    """``scale * 2 sigma sqrt(log p / n)``, the gradient-noise level at the truth."""
    return scale * 2.0 * sigma * math.sqrt(math.log(p) / n)


def _kkt_residual(theta, g, lam):
    # distance of theta from its own proximal-gradient image, with unit step
    return float(np.max(np.abs(theta - kernels.soft_threshold(theta - g, lam)), initial=0.0))


def ista_lasso(obj, cfg):
    """Minimize ``f(theta) + lam ||theta||_1`` by ISTA with step ``1/lambda_max(A)``.

    ``obj`` must be a quadratic with positive semidefinite Hessian; the run
    stops once the unit-step proximal residual falls below ``cfg.tol``.
    """
    lo, hi = obj.hessian_extremes()
    if lo < -1e-10 * max(1.0, abs(hi)):
        raise ValueError("ista_lasso needs a positive semidefinite quadratic")
    if hi <= 0:
        return np.zeros(obj.dim), IterTrace(stop_reason="zero_hessian")
    step = 1.0 / hi
    lam = cfg.lam
    theta = np.zeros(obj.dim)
    f, g = obj.value_and_gradient(theta)
    trace = IterTrace(f_initial=f, eta=step)
    S = np.flatnonzero(theta)
    t0 = time.perf_counter()
    for t in range(1, cfg.max_iters + 1):
        theta = kernels.soft_threshold(theta - step * g, step * lam)
        f, g = obj.value_and_gradient(theta)
        if not math.isfinite(f):
            raise DivergenceError(t)
        S_new = np.flatnonzero(theta)
        changed = int(np.setdiff1d(S_new, S, assume_unique=True).size)
        penalized = f + lam * float(np.abs(theta).sum())
        trace.append(IterRecord(t, penalized, S_new, changed, time.perf_counter() - t0))
        S = S_new
        if _kkt_residual(theta, g, lam) <= cfg.tol:
            trace.stop_reason = "converged"
            break
    else:
        trace.stop_reason = "max_iters"
    trace.final = theta
    return theta, trace


@dataclass
class FobaConfig:
    """Forward-backward greedy settings.

    The forward step stops when its gain drops below ``forward_threshold``; a
    backward step removes a coordinate whose removal costs less than
    ``backward_ratio`` times the last forward gain.
    """

    s_star: int
    forward_threshold: float = 1e-10
    backward_ratio: float = 0.5
    max_iters: Optional[int] = None

    def __post_init__(self):
        if self.forward_threshold <= 0 or self.backward_ratio <= 0:
            raise ValueError("FoBa thresholds must be positive")


def _removal_costs(obj, theta, g, f, support):
    idx = np.asarray(support)
    if hasattr(obj, "hessian_diag"):
        # exact for quadratics: f(theta - theta_i e_i) - f(theta)
        t = theta[idx]
        return 0.5 * obj.hessian_diag(idx) * t * t - t * g[idx]
    costs = []
    for i in support:
        probe = theta.copy()
        probe[i] = 0.0
        costs.append(obj.value(probe) - f)
    return np.array(costs)


def foba(obj, cfg):
    """Forward-backward greedy selection with fully corrective refits.

    Each trace record is one forward or one backward step, so the support size
    changes by exactly one per record.
    """
    p = obj.dim
    max_iters = cfg.max_iters or 4 * max(cfg.s_star, 1) + 10
    theta = np.zeros(p)
    f, g = obj.value_and_gradient(theta)
    trace = IterTrace(f_initial=f)
    support = []
    t0 = time.perf_counter()

    def record(changed):
        trace.append(IterRecord(len(trace.records) + 1, f, np.array(sorted(support)), changed,
                                time.perf_counter() - t0))

    trace.stop_reason = "max_iters"
    while len(trace.records) < max_iters:
        if len(support) >= cfg.s_star:
            trace.stop_reason = "target_sparsity"
            break
        cand = np.abs(g)
        cand[support] = -1.0
        j = int(np.argmax(cand))
        if cand[j] <= 0:
            trace.stop_reason = "no_gain"
            break
        trial = obj.restricted_minimize(np.array(sorted(support + [j])))
        f_trial, g_trial = obj.value_and_gradient(trial)
        gain = f - f_trial
        if gain < cfg.forward_threshold:
            trace.stop_reason = "no_gain"
            break
        support.append(j)
        theta, f, g = trial, f_trial, g_trial
        record(1)
        # backward steps: drop cheap coordinates while the loss increase stays small
        while len(support) > 1 and len(trace.records) < max_iters:
            costs = _removal_costs(obj, theta, g, f, support)
            k = int(np.argmin(costs))
            if costs[k] >= cfg.backward_ratio * gain:
                break
            support.pop(k)
            theta = obj.restricted_minimize(np.array(sorted(support)))
            f, g = obj.value_and_gradient(theta)
            record(0)
    trace.final = theta
    return theta, trace
