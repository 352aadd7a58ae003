import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from csaqr import (
    Dataset,
    SolverOptions,
    belloni_lambda,
    check_loss,
    fit_qr,
    fit_qr_l1,
    fit_qr_l2,
    predict,
    residual_sign_counts,
    unconditional_quantile,
)
from conftest import check_objective, make_dataset
from oracles import basic_solution_objective, subgradient_descent_l2


class TestCheckLoss:
    def test_zero_residual(self):
        assert check_loss(0.0, 0.3) == 0.0

    def test_negative_residual(self):
        assert check_loss(-1.0, 0.1) == pytest.approx(0.9)

    def test_median_halves_absolute(self):
        for u in (-2.0, 3.0):
            assert check_loss(u, 0.5) == pytest.approx(0.5 * abs(u))

    def test_vectorized(self):
        out = check_loss(np.array([-1.0, 0.0, 2.0]), 0.25)
        assert np.allclose(out, [0.75, 0.0, 0.5])

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.2, 1.7])
    def test_invalid_tau(self, tau):
        with pytest.raises(ValueError):
            check_loss(1.0, tau)

    @given(
        st.floats(-1e6, 1e6, allow_nan=False),
        st.floats(0.01, 0.99),
    )
    def test_flip_identity(self, u, tau):
        assert check_loss(u, tau) == pytest.approx(check_loss(-u, 1.0 - tau), abs=1e-9)

    @given(st.floats(-1e3, 1e3), st.floats(0.01, 0.99))
    def test_nonnegative_zero_only_at_origin(self, u, tau):
        val = check_loss(u, tau)
        assert val >= 0.0
        if abs(u) > 1e-12:  # below that, u * tau can underflow to zero
            assert val > 0.0


class TestFitQr:
    def test_intercept_only_median(self, rng):
        y = rng.standard_normal(21)  # odd n: unique minimizer
        d = Dataset(y=y, X=np.ones((21, 1)))
        fit = fit_qr(d, [0], 0.5)
        assert fit.theta[0] == pytest.approx(float(np.median(y)), abs=1e-7)

    def test_intercept_only_quantile_objective(self, rng):
        y = rng.standard_normal(16)
        d = Dataset(y=y, X=np.ones((16, 1)))
        fit = fit_qr(d, [0], 0.25)
        ref = unconditional_quantile(y, 0.25)
        assert fit.objective <= check_objective(d, [0], 0.25, [ref]) + 1e-8

    def test_matches_basic_solution_oracle(self, rng):
        for _ in range(25):
            n = int(rng.integers(5, 26))
            k = int(rng.integers(1, 4))
            d = make_dataset(rng, n=n, p=k)
            tau = float(rng.choice([0.1, 0.5, 0.9]))
            fit = fit_qr(d, range(k), tau)
            oracle = basic_solution_objective(d.X, d.y, tau) / n
            assert fit.objective <= oracle + 1e-6

    def test_scale_equivariance(self, rng):
        d = make_dataset(rng, n=25, p=3)
        c = 3.7
        scaled = Dataset(y=c * d.y, X=d.X, intercept_col=0)
        f1 = fit_qr(d, range(3), 0.3)
        f2 = fit_qr(scaled, range(3), 0.3)
        assert np.allclose(f2.theta, c * f1.theta, atol=1e-5)

    def test_flip_symmetry(self, rng):
        d = make_dataset(rng, n=24, p=3)
        flipped = Dataset(y=-d.y, X=d.X, intercept_col=0)
        f1 = fit_qr(d, range(3), 0.2)
        f2 = fit_qr(flipped, range(3), 0.8)
        assert np.allclose(f2.theta, -f1.theta, atol=1e-5)

    def test_subgradient_inequality(self, rng):
        d = make_dataset(rng, n=30, p=3)
        tau = 0.4
        fit = fit_qr(d, range(3), tau)
        r = d.y - d.X @ fit.theta
        psi = tau - (r <= 0)
        for _ in range(20):
            other = fit.theta + rng.standard_normal(3)
            lhs = check_objective(d, range(3), tau, other)
            rhs = fit.objective + float(psi @ (d.X @ (fit.theta - other))) / d.n
            assert lhs >= rhs - 1e-7

    def test_warns_when_underdetermined(self, rng):
        d = make_dataset(rng, n=3, p=3)
        with pytest.warns(RuntimeWarning):
            fit_qr(d, range(3), 0.5)

    def test_column_validation(self, rng):
        d = make_dataset(rng, n=10, p=2)
        with pytest.raises(ValueError):
            fit_qr(d, [], 0.5)
        with pytest.raises(ValueError):
            fit_qr(d, [0, 0], 0.5)
        with pytest.raises(ValueError):
            fit_qr(d, [5], 0.5)

    def test_rank_deficient_flagged(self, rng):
        X = np.ones((12, 2))
        X[:, 1] = 1.0  # duplicate constant column
        y = rng.standard_normal(12)
        d = Dataset(y=y, X=X)
        fit = fit_qr(d, [0, 1], 0.5)
        assert fit.info and fit.info.get("rank_deficient")


class TestQrFitProperty:
    def test_sign_counts(self, rng):
        for _ in range(30):
            n = int(rng.integers(8, 40))
            k = int(rng.integers(1, 4))
            d = make_dataset(rng, n=n, p=k)
            tau = float(rng.choice([0.1, 0.25, 0.5, 0.75, 0.9]))
            fit = fit_qr(d, range(k), tau)
            n_neg, n_zero, n_pos = residual_sign_counts(fit, d, range(k))
            assert n_neg + n_zero + n_pos == n
            assert n_neg <= n * tau + 1e-9
            assert n * tau <= n_neg + n_zero + 1e-9

    def test_median_interpolates_a_point(self, rng):
        y = np.sort(rng.standard_normal(13))
        d = Dataset(y=y, X=np.ones((13, 1)))
        fit = fit_qr(d, [0], 0.5)
        _, n_zero, _ = residual_sign_counts(fit, d, [0])
        assert n_zero >= 1

    def test_exact_fit_all_zero(self, rng):
        d = make_dataset(rng, n=3, p=3)
        with pytest.warns(RuntimeWarning):
            fit = fit_qr(d, range(3), 0.5)
        n_neg, n_zero, n_pos = residual_sign_counts(fit, d, range(3))
        assert n_zero == 3


class TestPenalized:
    def test_l1_zero_lambda_matches_plain(self, rng):
        d = make_dataset(rng, n=30, p=3)
        f0 = fit_qr(d, range(3), 0.3)
        f1 = fit_qr_l1(d, range(3), 0.3, 0.0)
        assert np.allclose(f0.theta, f1.theta, atol=1e-6)

    def test_l1_huge_lambda_kills_coefficients(self, rng):
        d = make_dataset(rng, n=40, p=3)
        fit = fit_qr_l1(d, range(3), 0.25, 1e6)
        assert np.all(np.abs(fit.theta[1:]) < 1e-6)
        ref = unconditional_quantile(d.y, 0.25)
        assert check_objective(d, [0], 0.25, [fit.theta[0]]) <= check_objective(
            d, [0], 0.25, [ref]
        ) + 1e-7

    def test_l1_penalized_criterion_improves(self, rng):
        d = make_dataset(rng, n=25, p=3)
        lam = 2.0
        plain = fit_qr(d, range(3), 0.5)
        pen = fit_qr_l1(d, range(3), 0.5, lam)

        def criterion(theta):
            base = check_objective(d, range(3), 0.5, theta)
            return base + lam / d.n * np.sum(np.abs(theta[1:]))

        assert pen.objective == pytest.approx(criterion(pen.theta), abs=1e-9)
        assert pen.objective <= criterion(plain.theta) + 1e-9

    def test_l2_zero_lambda_matches_plain(self, rng):
        d = make_dataset(rng, n=30, p=3)
        f0 = fit_qr(d, range(3), 0.7)
        f2 = fit_qr_l2(d, range(3), 0.7, 0.0)
        assert np.allclose(f0.theta, f2.theta, atol=1e-6)

    def test_l2_huge_lambda_shrinks_to_zero(self, rng):
        d = make_dataset(rng, n=30, p=3)
        fit = fit_qr_l2(d, range(3), 0.5, 1e8)
        assert np.all(np.abs(fit.theta[1:]) < 1e-4)

    def test_l2_against_subgradient_oracle(self, rng):
        d = make_dataset(rng, n=12, p=2)
        lam = 1.5
        fit = fit_qr_l2(d, range(2), 0.3, lam)
        mask = np.array([0.0, 1.0])
        upper = subgradient_descent_l2(d.X, d.y, 0.3, lam, mask, iters=150_000)
        # the oracle only upper-bounds the optimum; the solver must sit below
        # it and the bound must have come close
        assert fit.objective <= upper + 1e-9
        assert upper - fit.objective <= 1e-3

    def test_negative_lambda_rejected(self, rng):
        d = make_dataset(rng, n=10, p=2)
        with pytest.raises(ValueError):
            fit_qr_l1(d, range(2), 0.5, -1.0)
        with pytest.raises(ValueError):
            fit_qr_l2(d, range(2), 0.5, -1.0)


class TestBelloniLambda:
    def test_deterministic(self, rng):
        X = rng.standard_normal((60, 4))
        a = belloni_lambda(X, 0.5, seed=11)
        b = belloni_lambda(X, 0.5, seed=11)
        assert a == b

    def test_nsim_stability(self, rng):
        X = rng.standard_normal((80, 1))
        vals = [belloni_lambda(X, 0.5, n_sim=2000, seed=s) for s in range(6)]
        spread = max(vals) - min(vals)
        big = belloni_lambda(X, 0.5, n_sim=4000, seed=99)
        assert abs(big - np.mean(vals)) < 4 * (spread + 1e-12)

    def test_scaling_invariance(self, rng):
        X = rng.standard_normal((50, 3))
        a = belloni_lambda(X, 0.3, seed=5)
        b = belloni_lambda(X * np.array([10.0, 0.2, 3.0]), 0.3, seed=5)
        assert a == pytest.approx(b, rel=1e-12)

    def test_zero_variance_column_rejected(self, rng):
        X = rng.standard_normal((40, 3))
        X[:, 1] = 2.0
        with pytest.raises(ValueError, match="index 1"):
            belloni_lambda(X, 0.5)

    def test_nsim_floor(self, rng):
        with pytest.raises(ValueError):
            belloni_lambda(rng.standard_normal((20, 2)), 0.5, n_sim=10)


class TestPredict:
    def test_zero_theta(self, rng):
        d = make_dataset(rng, n=10, p=2)
        fit = fit_qr(d, range(2), 0.5)
        fit.theta = np.zeros(2)
        assert predict(fit, [1.0, 1.0]) == 0.0

    def test_unit_vector_picks_coordinate(self, rng):
        d = make_dataset(rng, n=15, p=3)
        fit = fit_qr(d, range(3), 0.5)
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1.0
            assert predict(fit, e) == pytest.approx(fit.theta[j])

    def test_dot_against_loop(self, rng):
        d = make_dataset(rng, n=15, p=3)
        fit = fit_qr(d, range(3), 0.5)
        x = rng.standard_normal(3)
        manual = sum(x[j] * fit.theta[j] for j in range(3))
        assert predict(fit, x) == pytest.approx(manual, rel=1e-12)

    def test_dimension_mismatch(self, rng):
        d = make_dataset(rng, n=15, p=3)
        fit = fit_qr(d, range(3), 0.5)
        with pytest.raises(ValueError):
            predict(fit, np.ones(4))


class TestUnconditionalQuantile:
    def test_median_of_nine(self):
        assert unconditional_quantile(np.arange(1.0, 10.0), 0.5) == 5.0

    def test_matches_intercept_only_fit(self, rng):
        y = rng.standard_normal(48)
        d = Dataset(y=y, X=np.ones((48, 1)))
        fit = fit_qr(d, [0], 0.05)
        q = unconditional_quantile(y, 0.05)
        assert check_objective(d, [0], 0.05, [q]) == pytest.approx(
            fit.objective, abs=1e-7
        )

    def test_grid_oracle(self, rng):
        y = rng.standard_normal(37)
        tau = 0.35
        q = unconditional_quantile(y, tau)
        grid = np.linspace(y.min(), y.max(), 3001)
        losses = [np.mean(check_loss(y - g, tau)) for g in grid]
        assert np.mean(check_loss(y - q, tau)) <= min(losses) + 1e-6

    def test_lower_tie(self):
        y = np.array([1.0, 2.0, 3.0, 4.0])
        assert unconditional_quantile(y, 0.5) == 2.0


class TestSolverOptions:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverOptions(tol=0.0)
        with pytest.raises(ValueError):
            SolverOptions(max_iter=0)
        with pytest.raises(ValueError):
            SolverOptions(ridge_eps=-1e-9)


class TestDataset:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Dataset(y=np.array([1.0, np.nan]), X=np.ones((2, 1)))

    def test_rejects_bad_intercept(self, rng):
        X = rng.standard_normal((5, 2))
        with pytest.raises(ValueError):
            Dataset(y=np.zeros(5), X=X, intercept_col=0)

    def test_names_default(self, rng):
        d = make_dataset(rng, n=5, p=2)
        assert d.names == ["x1", "x2"]
