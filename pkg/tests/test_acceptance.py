"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line through the ``verdict`` fixture;
the lines are collected in the terminal summary under "acceptance criteria".
"""
import itertools
import math
import time

import numpy as np
import pytest

from hardshrink import bench
from hardshrink.algorithms import ALGORITHMS
from hardshrink.numkit import RngStream
from hardshrink.objectives import (
    QuadraticObjective,
    estimate_rsc_rss,
    make_corrected_additive,
    make_corrected_missing,
    make_least_squares,
    make_matrix_least_squares,
    theorem3_error_bound,
)
from hardshrink.projections import hard_threshold, numerical_rank, rank_project
from hardshrink.solvers import SolverConfig, iht_solve, matrix_iht_solve, pht_solve
from hardshrink.statgen import (
    corrupt_additive,
    corrupt_missing,
    default_sample_size,
    make_matrix_instance,
    synth_linear,
)

DESK = dict(p=2000, s_star=20, f_o=2)
SEEDS = 20


def sweep(scenario, algorithms, grid, trials=SEEDS, timing=False, **base):
    cfg = bench.parse_config(dict(scenario=scenario, algorithms=algorithms, grid=grid,
                                  trials_per_cell=trials, base=dict(DESK, **base), seed=0,
                                  timing=timing), env={})
    rows = bench.run_experiment(cfg)
    failed = [r for r in rows if r.error]
    assert not failed, failed[0].error
    return rows


def medians(rows, metric, algorithm):
    """Median of ``metric`` per grid value, in grid order."""
    values = sorted({r.grid_value for r in rows})
    return [float(np.median([getattr(r, metric) for r in rows
                             if r.algorithm == algorithm and r.grid_value == v]))
            for v in values]


def one_small_inversion(seq, direction):
    """True if ``seq`` moves in ``direction`` (+1 up, -1 down) except for at
    most one step against it of size at most 1."""
    against = [direction * (b - a) for a, b in zip(seq, seq[1:]) if direction * (b - a) < 0]
    return len(against) <= 1 and all(x >= -1 for x in against)


def conforming(seed, p=100, s_star=5, n=1000, sigma=0.1):
    inst = synth_linear(p, s_star, n, sigma, rng=RngStream(seed, 0))
    obj = make_least_squares(inst.X, inst.y)
    est = estimate_rsc_rss(obj, p)
    f_star = obj.value(obj.restricted_minimize(np.flatnonzero(inst.theta_bar)))
    return inst, obj, est.L_hat / est.alpha_hat, est.L_hat, f_star


def test_ac01_hard_threshold_contraction_exhaustive(verdict):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    violations = checks = 0
    for _ in range(1000):
        m = int(rng.integers(2, 11))
        z = rng.standard_normal(m) * rng.exponential(3.0)
        sq = z * z
        total = sq.sum()
        for s_star in range(0, m):
            # every s*-sparse theta* with optimal values theta*_S = z_S
            kept = np.array([sq[list(S)].sum() for S in itertools.combinations(range(m), s_star)])
            dist = total - kept
            for s in range(s_star + 1, m + 1):
                lhs = np.sum((hard_threshold(z, s).values - z) ** 2)
                rhs = (m - s) / (m - s_star) * dist
                violations += int(np.sum(lhs > rhs * (1 + 1e-12) + 1e-300))
                checks += dist.size
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60
    assert verdict("AC01", ok, f"{violations} violations in {checks} checks, {elapsed:.1f}s")


def test_ac02_rank_projection_ratio_probes(verdict):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    violations = 0
    for _ in range(1000):
        p1, p2 = int(rng.integers(3, 13)), int(rng.integers(3, 11))
        k = int(rng.integers(3, min(p1, p2) + 1))
        W = rng.standard_normal((p1, k)) @ rng.standard_normal((k, p2))
        rank = numerical_rank(W)
        # s < rank(W): at s = rank both sides vanish and only rounding is left
        s = int(rng.integers(2, rank))
        r_star = int(rng.integers(1, s))
        lhs = np.sum((rank_project(W, s) - W) ** 2)
        # a random rank-r* probe and the closest one, which is the hardest case
        probe = rng.standard_normal((p1, r_star)) @ rng.standard_normal((r_star, p2))
        for Ws in (probe * rng.exponential(2.0), rank_project(W, r_star)):
            rhs = (rank - s) / (rank - r_star) * np.sum((Ws - W) ** 2)
            violations += int(lhs > rhs * (1 + 1e-10))
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60
    assert verdict("AC02", ok, f"{violations} violations in 2000 probes, {elapsed:.1f}s")


def test_ac03_support_recovery_at_baseline_noise(verdict):
    algos = ["iht", "htp", "cosamp", "sp", "ompr"]
    t0 = time.perf_counter()
    rows = sweep("noise_sweep", algos, {"sigma": [0.1]}, n=305)
    elapsed = time.perf_counter() - t0
    med = {a: medians(rows, "support_err_frac", a)[0] for a in algos}
    ok = all(v <= 0.02 for v in med.values()) and elapsed < 300
    assert verdict("AC03", ok, f"median support error {med}, {elapsed:.0f}s")


def test_ac04_noise_sweep_monotone(verdict):
    sigmas = [0.05, 0.1, 0.2, 0.5, 1.0]
    algos = list(ALGORITHMS)
    algos[algos.index("pht(l)")] = "pht(2)"
    rows = sweep("noise_sweep", algos, {"sigma": sigmas})
    med = {a: medians(rows, "undiscovered", a) for a in algos}
    bad = [a for a in algos if not one_small_inversion(med[a], +1)]
    assert verdict("AC04", not bad, f"medians by sigma {med}; non-monotone: {bad or 'none'}")


def test_ac05_condition_sweep(verdict):
    algos = ["iht", "htp", "grades"]
    rows = sweep("condition_sweep", algos, {"s_factor": [1, 2, 5, 10]})
    cfg = bench.parse_config(dict(scenario="condition_sweep", algorithms=algos,
                                  grid={"s_factor": [1]}, base=DESK), env={})
    w = np.linalg.eigvalsh(bench.instance_for(cfg, 0, 0).Sigma)
    kappa = w[-1] / w[0]
    med = {a: medians(rows, "undiscovered", a) for a in algos}
    bad = [a for a in algos if not (med[a][-1] < med[a][0] and one_small_inversion(med[a], -1))]
    ok = 40 <= kappa <= 60 and not bad
    assert verdict("AC05", ok, f"kappa(Sigma)={kappa:.1f}; medians by s/s* {med}; "
                               f"failing: {bad or 'none'}")


def test_ac06_geometric_convergence(verdict):
    worst_slope, violations = -math.inf, 0
    for seed in range(SEEDS):
        inst, obj, kappa, L, f_star = conforming(seed)
        s = min(math.ceil(32 * kappa**2 * inst.s_star), inst.p // 2)
        _, tr = iht_solve(obj, SolverConfig(s=s, eta=2 / (3 * L)))
        gap = np.concatenate([[tr.f_initial], tr.f_values]) - f_star
        violations += int(np.sum(gap[1:] > gap[:-1] + 1e-10 * (1 + np.abs(gap[:-1]))))
        t = np.flatnonzero(gap > 0)
        worst_slope = max(worst_slope, np.polyfit(t, np.log(gap[t]), 1)[0])
    ok = violations == 0 and worst_slope < -0.01
    assert verdict("AC06", ok, f"{violations} increases, flattest log-gap slope "
                               f"{worst_slope:.3f}/iter over {SEEDS} instances")


def test_ac07_statistical_error_bound(verdict):
    s_star = DESK["s_star"]
    s = 2 * s_star
    n = default_sample_size(s_star, DESK["p"], DESK["f_o"])
    held = 0
    for k in range(100):
        sigma = 0.1 if k < 50 else 0.5
        inst = synth_linear(DESK["p"], s_star, n, sigma, rng=RngStream(7, k))
        obj = make_least_squares(inst.X, inst.y)
        theta, _ = iht_solve(obj, SolverConfig(s=s))
        f_star = obj.value(obj.restricted_minimize(np.flatnonzero(inst.theta_bar)))
        eps = max(0.0, obj.value(theta) - f_star)
        alpha = estimate_rsc_rss(obj, s + s_star, trials=200, rng=RngStream(7, 1000 + k)).alpha_hat
        grad_inf = float(np.max(np.abs(obj.gradient(inst.theta_bar))))
        bound = theorem3_error_bound(grad_inf, alpha, s, s_star, eps)
        held += int(np.linalg.norm(inst.theta_bar - theta) <= bound)
    assert verdict("AC07", held >= 95, f"bound held in {held}/100 trials")


def test_ac08_error_scaling_with_n(verdict):
    rows = sweep("sample_size_sweep", ["iht"], {"n": [305, 610]}, trials=50)
    small, large = medians(rows, "l2_err", "iht")
    factor = small / large
    assert verdict("AC08", 1.2 <= factor <= 1.7,
                   f"median l2 error {small:.4g} -> {large:.4g}, factor {factor:.3f}")


def test_ac09_corrected_additive_noise(verdict):
    p, s_star = DESK["p"], DESK["s_star"]
    n = math.ceil(4 * s_star * math.log(p))
    lam_min = []
    for seed in range(3):
        inst = corrupt_additive(synth_linear(p, s_star, n, 0.1, rng=RngStream(9, seed)),
                                0.2 * np.eye(p), RngStream(9, 100 + seed))
        obj = make_corrected_additive(inst.X_corrupted, inst.y, inst.Sigma_W)
        lam_min.append(obj.hessian_extremes()[0])
    grid = {"n": [n, 2 * n]}
    noisy = medians(sweep("sample_size_sweep", ["iht"], grid, corruption="additive",
                          sigma_w=0.2), "l2_err", "iht")
    clean = medians(sweep("sample_size_sweep", ["iht"], grid), "l2_err", "iht")
    indefinite = max(lam_min) < 0
    within = noisy[0] <= 2 * clean[0]
    shrinks = noisy[1] < noisy[0]
    detail = (f"lambda_min(Gamma) max over draws {max(lam_min):.3g} (<0: {indefinite}); "
              f"median l2 corrected {noisy[0]:.4g} vs clean {clean[0]:.4g} at n={n} "
              f"(<=2x: {within}); corrected at n={2 * n}: {noisy[1]:.4g} (decreases: {shrinks})")
    assert verdict("AC09", indefinite and within and shrinks, detail)


def test_ac10_partial_thresholding_support_growth(verdict):
    violations = checked = 0
    for seed in range(SEEDS):
        inst, obj, kappa, L, f_star = conforming(seed)
        s = min(math.ceil(4 * kappa**2 * inst.s_star), inst.p // 2)
        _, tr = pht_solve(obj, SolverConfig(s=s, ell=1, eta=1 / (2 * L)))
        gap = np.concatenate([[tr.f_initial], tr.f_values]) - f_star
        for t, rec in enumerate(tr.records):
            if gap[t] > 1e-10:
                checked += 1
                violations += int(rec.support_change_count < 1)
    assert verdict("AC10", violations == 0,
                   f"{violations} violations over {checked} suboptimal iterations")


def test_ac11_matrix_recovery(verdict):
    p1 = p2 = 30
    r = 2
    n = 6 * r * (p1 + p2)
    t0 = time.perf_counter()
    errs = {0.0: [], 0.1: []}
    for sigma in errs:
        for seed in range(10):
            inst = make_matrix_instance(p1, p2, r, n, sigma, RngStream(11, seed))
            W, _ = matrix_iht_solve(make_matrix_least_squares(inst.X, inst.y), SolverConfig(s=r))
            errs[sigma].append(np.linalg.norm(W - inst.W_bar) / np.linalg.norm(inst.W_bar))
    elapsed = time.perf_counter() - t0
    worst = {k: max(v) for k, v in errs.items()}
    ok = worst[0.0] <= 1e-3 and worst[0.1] <= 0.1 and elapsed < 120
    assert verdict("AC11", ok, f"max relative Frobenius error noiseless {worst[0.0]:.2e}, "
                               f"sigma=0.1 {worst[0.1]:.2e}, {elapsed:.0f}s")


def _fd_relative_error(obj, x, h=1e-6):
    g = np.asarray(obj.gradient(x))
    fd = np.empty(x.size)
    flat = x.ravel()
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h * max(1.0, abs(flat[i]))
        fd[i] = (obj.value((flat + e).reshape(x.shape)) - obj.value((flat - e).reshape(x.shape))) \
            / (2 * e[i])
    return np.linalg.norm(fd - g.ravel()) / max(np.linalg.norm(g), 1e-8)


def test_ac12_gradients_match_finite_differences(verdict):
    rng = np.random.default_rng(12)
    p, n = 15, 40
    inst = synth_linear(p, 3, n, 0.1, rng=RngStream(12, 0))
    B = rng.standard_normal((p, p))
    mat = make_matrix_instance(4, 3, 1, 30, 0.1, RngStream(12, 1))
    objectives = {
        "quadratic": QuadraticObjective(B + B.T, rng.standard_normal(p), 0.5),
        "least_squares": make_least_squares(inst.X, inst.y),
        "corrected_additive": make_corrected_additive(
            corrupt_additive(inst, 0.2 * np.eye(p), RngStream(12, 2)).X_corrupted, inst.y,
            0.2 * np.eye(p)),
        "corrected_missing": make_corrected_missing(
            *(lambda c: (c.X_corrupted, c.mask))(corrupt_missing(inst, 0.2, RngStream(12, 3))),
            inst.y, 0.2),
        "matrix_least_squares": make_matrix_least_squares(mat.X, mat.y),
    }
    worst = {}
    for name, obj in objectives.items():
        shape = (4, 3) if name == "matrix_least_squares" else (p,)
        worst[name] = max(_fd_relative_error(obj, rng.standard_normal(shape) * 2)
                          for _ in range(100))
    ok = all(v <= 1e-5 for v in worst.values())
    summary = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert verdict("AC12", ok, f"max relative error at 100 points: {summary}")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_ac13_runtime_ordering_informative(verdict):
    rows = sweep("dimension_sweep", ["htp", "foba", "ista_lasso"], {"p": [5000]}, trials=5,
                 timing=True, s_star=100)
    med = {a: float(np.median([r.wall_time_s for r in rows if r.algorithm == a]))
           for a in ("htp", "foba", "ista_lasso")}
    ordered = med["htp"] < med["foba"] and med["htp"] < med["ista_lasso"]
    # informative only: wall-clock ordering is machine dependent and is not asserted
    verdict("AC13", ordered, "informative, median wall time "
                             + ", ".join(f"{k} {v:.2f}s" for k, v in med.items()))
