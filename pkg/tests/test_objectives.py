import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hardshrink.numkit import RngStream
from hardshrink.objectives import (
    LeastSquaresObjective,
    Objective,
    QuadraticObjective,
    estimate_matrix_rss,
    estimate_rsc_rss,
    estimate_rsc_rss_path,
    make_corrected_additive,
    make_corrected_missing,
    make_least_squares,
    make_matrix_least_squares,
    theorem3_error_bound,
)
from hardshrink.statgen import CovarianceSpec, corrupt_additive, corrupt_missing, synth_linear


def fd_gradient(f, x, h):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def assert_fd_gradient(obj, x):
    h = 1e-6 * (1 + np.max(np.abs(x)))
    g = obj.gradient(x)
    g_fd = fd_gradient(obj.value, x, h)
    assert np.linalg.norm(g - g_fd) <= 1e-5 * max(np.linalg.norm(g), 1e-8)


def random_objectives(seed):
    g = np.random.default_rng(seed)
    n, p = 15, 9
    X = g.standard_normal((n, p))
    y = g.standard_normal(n)
    mask = g.random((n, p)) > 0.3
    B = g.standard_normal((p, p))
    return [
        make_least_squares(X, y),
        make_least_squares(X[:, :6].T @ np.ones((n, 1)) @ np.ones((1, 20)), np.ones(6)),
        make_corrected_additive(X, y, 0.2 * np.eye(p)),
        make_corrected_missing(np.where(mask, X, 0.0), mask, y, 0.3),
        QuadraticObjective(B + B.T, g.standard_normal(p), 1.5),
    ]


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    g = np.random.default_rng(100 + seed)
    for obj in random_objectives(seed):
        for _ in range(20):
            x = np.zeros(obj.dim)
            S = g.choice(obj.dim, size=g.integers(1, obj.dim + 1), replace=False)
            x[S] = g.standard_normal(S.size)
            assert_fd_gradient(obj, x)


def test_matrix_gradient_matches_finite_differences(rng):
    X = rng.standard_normal((12, 4, 3))
    obj = make_matrix_least_squares(X, rng.standard_normal(12))
    for _ in range(20):
        assert_fd_gradient(obj, rng.standard_normal((4, 3)))


def test_least_squares_examples(rng):
    obj = make_least_squares(np.eye(3), [1.0, 2.0, 3.0])
    assert obj.value([1, 2, 3]) == 0
    np.testing.assert_array_equal(obj.gradient([1, 2, 3]), 0)
    assert obj.value(np.zeros(3)) == pytest.approx(14 / 3)
    X, y = rng.standard_normal((20, 8)), rng.standard_normal(20)
    obj = make_least_squares(X, y)
    for _ in range(10):
        th = rng.standard_normal(8)
        r = y - X @ th
        assert obj.value(th) == pytest.approx(r @ r / 20, rel=1e-12)
        np.testing.assert_allclose(obj.gradient(th), -2 / 20 * X.T @ r, rtol=1e-10, atol=1e-12)


def test_wide_least_squares_without_gram_matrix(rng):
    X, y = rng.standard_normal((10, 30)), rng.standard_normal(10)
    dense = make_least_squares(X, y)
    lazy = LeastSquaresObjective(X, y, gram_bytes=0)
    assert lazy._A is None
    S = np.array([2, 5, 11, 29])
    th = rng.standard_normal(30)
    assert lazy.value(th) == pytest.approx(dense.value(th), rel=1e-12)
    np.testing.assert_allclose(lazy.block(S), dense.block(S), rtol=1e-12)
    np.testing.assert_allclose(lazy.hessian_diag(S), dense.hessian_diag(S), rtol=1e-12)
    np.testing.assert_allclose(lazy.hessian_extremes(), dense.hessian_extremes(), atol=1e-10)
    np.testing.assert_allclose(lazy.restricted_minimize(S), dense.restricted_minimize(S), rtol=1e-9)
    assert lazy._A is None
    np.testing.assert_allclose(lazy.A, dense.A)


def test_quadratic_gradient_is_exact():
    A = np.array([[2.0, -1.0], [-1.0, -3.0]])
    b = np.array([1.0, 4.0])
    obj = QuadraticObjective(A, b)
    th = np.array([0.5, -2.0])
    np.testing.assert_array_equal(obj.gradient(th), A @ th - b)
    with pytest.raises(ValueError):
        QuadraticObjective(np.array([[1.0, 2.0], [0.0, 1.0]]), b)


@pytest.mark.parametrize("factory", ["ls", "additive", "missing"])
def test_restricted_minimize_zeroes_restricted_gradient(factory, rng):
    X, y = rng.standard_normal((30, 10)), rng.standard_normal(30)
    obj = {
        "ls": lambda: make_least_squares(X, y),
        "additive": lambda: make_corrected_additive(X, y, 0.1 * np.eye(10)),
        "missing": lambda: make_corrected_missing(X, np.ones_like(X, bool), y, 0.1),
    }[factory]()
    for _ in range(20):
        S = np.sort(rng.choice(10, size=4, replace=False))
        x = obj.restricted_minimize(S)
        assert set(np.flatnonzero(x)) <= set(S)
        assert np.linalg.norm(obj.gradient(x)[S]) <= 1e-8 * (1 + np.linalg.norm(x))


class SmoothLogistic(Objective):
    """Non-quadratic test objective: logistic loss plus a small ridge."""

    def __init__(self, X, labels):
        super().__init__(X.shape[1])
        self.X, self.labels = X, labels

    def value(self, theta):
        m = self.labels * (self.X @ theta)
        return float(np.mean(np.logaddexp(0, -m)) + 0.05 * theta @ theta)

    def gradient(self, theta):
        m = self.labels * (self.X @ theta)
        w = -self.labels / (1 + np.exp(m))
        return self.X.T @ w / len(m) + 0.1 * theta


def test_default_restricted_minimize_on_nonquadratic(rng):
    X = rng.standard_normal((50, 6))
    obj = SmoothLogistic(X, np.sign(rng.standard_normal(50)))
    S = np.array([0, 3, 4])
    x = obj.restricted_minimize(S)
    assert set(np.flatnonzero(x)) <= set(S)
    assert np.linalg.norm(obj.gradient(x)[S]) <= 1e-6
    assert_fd_gradient(obj, rng.standard_normal(6))


def test_corrected_additive_zero_noise_matches_least_squares(rng):
    X, y = rng.standard_normal((25, 7)), rng.standard_normal(25)
    corr = make_corrected_additive(X, y, np.zeros((7, 7)))
    ls = make_least_squares(X, y)
    np.testing.assert_allclose(2 * corr.A, ls.A, rtol=1e-12)
    np.testing.assert_allclose(2 * corr.b, ls.b, rtol=1e-12)
    th = rng.standard_normal(7)
    # same function up to the factor two and the constant ||y||^2 / n
    assert 2 * corr.value(th) + y @ y / 25 == pytest.approx(ls.value(th), rel=1e-10)


def test_corrected_additive_is_indefinite_when_wide():
    inst = synth_linear(200, 5, 60, 0.1, rng=RngStream(3, 0))
    inst = corrupt_additive(inst, 0.2 * np.eye(200), RngStream(3, 1))
    obj = make_corrected_additive(inst.X_corrupted, inst.y, inst.Sigma_W)
    assert obj.hessian_extremes()[0] < 0


def test_corrected_missing_zero_rate():
    g = np.random.default_rng(1)
    X, y = g.standard_normal((20, 5)), g.standard_normal(20)
    obj = make_corrected_missing(X, np.ones_like(X, bool), y, 0.0)
    np.testing.assert_allclose(obj.A, X.T @ X / 20, rtol=1e-12)
    np.testing.assert_allclose(obj.b, X.T @ y / 20, rtol=1e-12)


def test_corrected_missing_diagonal_single_column():
    # one column x, each entry kept with probability 1 - nu: E[Z^T Z / n] = (1 - nu) x^T x / n
    x = np.array([[1.0], [2.0], [-3.0], [0.5]])
    nu = 0.25
    masks = list(itertools.product([False, True], repeat=4))
    expected = 0.0
    for m in masks:
        prob = np.prod([(1 - nu) if k else nu for k in m])
        mask = np.array(m).reshape(4, 1)
        expected += prob * make_corrected_missing(x, mask, np.zeros(4), nu).A[0, 0]
    assert expected == pytest.approx(float(x[:, 0] @ x[:, 0]) / 4, rel=1e-12)


def _monte_carlo_gamma(build, reps=2000):
    draws = np.array([build(k) for k in range(reps)])
    return draws.mean(axis=0), draws.std(axis=0, ddof=1) / np.sqrt(reps)


def test_corrected_additive_unbiased():
    p = 4
    spec = CovarianceSpec("two_block", p, eps=0.3)

    def build(k):
        inst = synth_linear(p, 2, 10, 0.1, spec, RngStream(7, k))
        inst = corrupt_additive(inst, 0.2 * np.eye(p), RngStream(8, k))
        return make_corrected_additive(inst.X_corrupted, inst.y, inst.Sigma_W).A

    mean, se = _monte_carlo_gamma(build)
    Sigma = synth_linear(p, 2, 1, 0.0, spec, RngStream(7, 0)).Sigma
    assert np.all(np.abs(mean - Sigma) <= 3 * se)


def test_corrected_missing_unbiased():
    p = 4
    spec = CovarianceSpec("two_block", p, eps=0.3)

    def build(k):
        inst = synth_linear(p, 2, 10, 0.1, spec, RngStream(9, k))
        inst = corrupt_missing(inst, 0.3, RngStream(10, k))
        return make_corrected_missing(inst.X_corrupted, inst.mask, inst.y, 0.3).A

    mean, se = _monte_carlo_gamma(build)
    Sigma = synth_linear(p, 2, 1, 0.0, spec, RngStream(9, 0)).Sigma
    assert np.all(np.abs(mean - Sigma) <= 3 * se)


def test_rsc_rss_identity():
    obj = QuadraticObjective(np.eye(30), np.zeros(30))
    for k in (1, 5, 30):
        est = estimate_rsc_rss(obj, k, trials=20, rng=RngStream(0, 0))
        assert est.alpha_hat == pytest.approx(1) and est.L_hat == pytest.approx(1)


def test_rsc_two_block_correlated_pair():
    eps = 0.1
    A = np.kron(np.eye(10), np.array([[1, 1 - eps], [1 - eps, 1]]))
    est = estimate_rsc_rss(QuadraticObjective(A, np.zeros(20)), 2, trials=200, rng=RngStream(1, 0),
                           exhaustive_limit=0)
    assert est.alpha_hat <= 0.1 + 1e-12
    assert est.condition_number >= 19 - 1e-9


def test_rsc_sampled_bracketed_by_exhaustive(rng):
    B = rng.standard_normal((12, 9))
    obj = QuadraticObjective(B.T @ B / 12, np.zeros(9))
    for k in (2, 3, 5):
        lo = min(np.linalg.eigvalsh(obj.A[np.ix_(S, S)])[0]
                 for S in itertools.combinations(range(9), k))
        hi = max(np.linalg.eigvalsh(obj.A[np.ix_(S, S)])[-1]
                 for S in itertools.combinations(range(9), k))
        ex = estimate_rsc_rss(obj, k)
        assert ex.exhaustive and ex.alpha_hat == pytest.approx(lo) and ex.L_hat == pytest.approx(hi)
        sm = estimate_rsc_rss(obj, k, trials=30, rng=RngStream(k, 0), exhaustive_limit=0)
        assert not sm.exhaustive
        assert lo - 1e-12 <= sm.alpha_hat and sm.L_hat <= hi + 1e-12
        mx = estimate_rsc_rss(obj, k, trials=30, rng=RngStream(k, 0), exhaustive_limit=0, which="max")
        assert math.isnan(mx.alpha_hat) and mx.L_hat == pytest.approx(sm.L_hat, rel=1e-10)


def test_rsc_path_is_monotone(rng):
    B = rng.standard_normal((40, 25))
    obj = make_least_squares(B, np.zeros(40))
    path = estimate_rsc_rss_path(obj, [2, 5, 10, 20], trials=30, rng=RngStream(0, 0))
    alphas = [e.alpha_hat for e in path]
    Ls = [e.L_hat for e in path]
    assert alphas == sorted(alphas, reverse=True) and Ls == sorted(Ls)


def test_rsc_flags_nonconvex():
    obj = QuadraticObjective(np.diag([1.0, -0.5, 2.0]), np.zeros(3))
    est = estimate_rsc_rss(obj, 2)
    assert est.nonconvex and est.condition_number == math.inf


@pytest.mark.parametrize("args,expected", [
    ((0.0, 1.0, 3, 2, 0.0), 0.0),
    ((0.01, 0.25, 60, 40, 0.0), 0.8),
    ((0.0, 0.5, 3, 2, 0.01), 0.2),
])
def test_error_bound_examples(args, expected):
    assert theorem3_error_bound(*args) == pytest.approx(expected)


def test_error_bound_rejects_nonpositive_alpha():
    with pytest.raises(ValueError):
        theorem3_error_bound(0.1, 0.0, 1, 1, 0.0)


def test_matrix_least_squares_examples(rng):
    E = np.zeros((1, 2, 2))
    E[0, 0, 0] = 1.0
    obj = make_matrix_least_squares(E, [5.0])
    W = np.zeros((2, 2))
    W[0, 0] = 5.0
    assert obj.value(W) == 0 and obj.value(np.zeros((2, 2))) == 25.0
    X = rng.standard_normal((9, 3, 4))
    y = rng.standard_normal(9)
    assert make_matrix_least_squares(X, y).value(np.zeros((3, 4))) == pytest.approx(y @ y / 9)


def test_matrix_rss_estimate_below_full_hessian_norm(rng):
    X = rng.standard_normal((40, 5, 4))
    obj = make_matrix_least_squares(X, np.zeros(40))
    Xf = X.reshape(40, -1)
    top = np.linalg.eigvalsh(2 / 40 * Xf.T @ Xf)[-1]
    assert 0 < estimate_matrix_rss(obj, 1, rng=RngStream(0, 0)) <= top + 1e-10
    # full rank makes the projection the identity, so the power method finds the top eigenvalue
    assert estimate_matrix_rss(obj, 4, power_iters=300, rng=RngStream(0, 0)) == pytest.approx(top, rel=1e-4)


@given(st.integers(0, 2**32 - 1))
def test_least_squares_value_nonnegative(seed):
    g = np.random.default_rng(seed)
    obj = make_least_squares(g.standard_normal((6, 4)), g.standard_normal(6))
    assert obj.value(g.standard_normal(4)) >= -1e-12
