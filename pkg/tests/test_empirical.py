import numpy as np
import pytest

from csaqr import Dataset, check_loss, load_csv, random_split_eval, rolling_forecast
from csaqr.empirical import (
    EmptyDataError,
    MissingColumnError,
    NonNumericError,
    RollingSpec,
    SplitSpec,
)
from csaqr.methods import MethodSettings, fit_method
from csaqr.qr_core import unconditional_quantile
from csaqr.seeding import DATA_TAG, METHOD_TAG, child_seed
from csaqr.methods import method_tag


def write_csv(path, text):
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_exact_matrix(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "y,a,b\n1,2,3\n4,5,6\n7,8,9\n")
        data, report = load_csv(p, "y", ["a", "b"])
        assert np.array_equal(data.y, [1.0, 4.0, 7.0])
        assert np.array_equal(data.X, [[2.0, 3.0], [5.0, 6.0], [8.0, 9.0]])
        assert data.names == ["a", "b"]
        assert report.n_rows == 3 and report.n_cols == 2
        assert report.dropped_rows == []

    def test_add_intercept(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "y,a\n1,2\n3,4\n")
        data, _ = load_csv(p, "y", ["a"], add_intercept=True)
        assert np.all(data.X[:, 0] == 1.0)
        assert data.intercept_col == 0
        assert data.names == ["const", "a"]

    def test_nan_cell_error_names_location(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "y,a\n1,2\n3,\n5,6\n")
        with pytest.raises(NonNumericError, match="row 1.*'a'"):
            load_csv(p, "y", ["a"])

    def test_non_numeric_cell(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "y,a\n1,2\n3,oops\n")
        with pytest.raises(NonNumericError, match="row 1.*'a'"):
            load_csv(p, "y", ["a"])

    def test_missing_column(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "y,a\n1,2\n")
        with pytest.raises(MissingColumnError, match="'b'"):
            load_csv(p, "y", ["a", "b"])

    def test_empty_file(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "")
        with pytest.raises(EmptyDataError):
            load_csv(p, "y", ["a"])

    def test_header_only(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "y,a\n")
        with pytest.raises(EmptyDataError):
            load_csv(p, "y", ["a"])

    def test_drop_na_reports_rows(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "y,a\n1,2\n3,\n5,6\n")
        data, report = load_csv(p, "y", ["a"], drop_na=True)
        assert data.n == 2
        assert report.dropped_rows == [1]


def series_dataset(rng, n=40, noise=1.0):
    x = rng.standard_normal(n)
    y = 0.8 * x + noise * rng.standard_normal(n)
    X = np.column_stack([np.ones(n), x])
    return Dataset(y=y, X=X, intercept_col=0)


class TestRollingForecast:
    def test_benchmark_method_gives_zero_r2(self, rng):
        data = series_dataset(rng, n=30)
        spec = RollingSpec(t1=10, tau=0.5, methods=("unconditional",))
        res = rolling_forecast(data, spec)
        assert res.oos_r2["unconditional"] == pytest.approx(0.0, abs=1e-12)
        assert np.array_equal(res.forecasts["unconditional"], res.benchmark)

    def test_perfect_forecasts_give_unit_r2(self, rng):
        n = 26
        x = rng.standard_normal(n)
        data = Dataset(
            y=x.copy(), X=np.column_stack([np.ones(n), x]), intercept_col=0
        )
        spec = RollingSpec(t1=12, tau=0.5, methods=("csa",))
        res = rolling_forecast(data, spec)
        assert res.oos_r2["csa"] == pytest.approx(1.0, abs=1e-6)

    def test_twelve_point_toy_by_hand(self, rng):
        y = np.array([1.0, 3.0, 2.0, 5.0, 4.0, 7.0, 6.0, 9.0, 8.0, 11.0, 10.0, 13.0])
        data = Dataset(y=y, X=np.ones((12, 1)), intercept_col=0)
        t1, tau = 5, 0.5
        spec = RollingSpec(t1=t1, tau=tau, methods=("unconditional",))
        res = rolling_forecast(data, spec)
        # spreadsheet-style recomputation: window medians and their losses
        medians, losses = [], []
        for t in range(t1 - 1, 11):
            med = float(np.median(y[t - t1 + 1 : t + 1]))  # odd window
            medians.append(med)
            losses.append(float(check_loss(y[t + 1] - med, tau)))
        assert np.array_equal(res.benchmark, medians)
        assert np.array_equal(res.realized, y[t1:])
        assert np.array_equal(res.forecasts["unconditional"], medians)
        assert res.oos_r2["unconditional"] == pytest.approx(0.0, abs=1e-15)
        assert sum(losses) > 0

    def test_no_lookahead(self, rng):
        data = series_dataset(rng, n=25)
        spec = RollingSpec(t1=10, tau=0.5, methods=("csa",))
        res_full = rolling_forecast(data, spec, master_seed=3)
        # permute everything after the first forecast target
        perm = np.arange(25)
        perm[11:] = perm[11:][::-1]
        scrambled = Dataset(
            y=data.y[perm], X=data.X[perm], intercept_col=0
        )
        res_scr = rolling_forecast(scrambled, spec, master_seed=3)
        assert res_scr.forecasts["csa"][0] == pytest.approx(
            res_full.forecasts["csa"][0], abs=0
        )

    def test_constant_window_r2_missing(self):
        data = Dataset(y=np.ones(20), X=np.ones((20, 1)), intercept_col=0)
        spec = RollingSpec(t1=10, tau=0.5, methods=("unconditional",))
        res = rolling_forecast(data, spec)
        assert res.oos_r2["unconditional"] is None

    def test_too_short_series(self, rng):
        data = series_dataset(rng, n=10)
        spec = RollingSpec(t1=10, tau=0.5, methods=("unconditional",))
        with pytest.raises(ValueError):
            rolling_forecast(data, spec)

    def test_records_k_hat_for_csa(self, rng):
        data = series_dataset(rng, n=26)
        spec = RollingSpec(t1=12, tau=0.5, methods=("csa",))
        res = rolling_forecast(data, spec)
        assert len(res.k_hat["csa"]) == res.origins.size
        assert all(1 <= k <= 2 for k in res.k_hat["csa"])

    def test_parallel_matches_serial(self, rng):
        data = series_dataset(rng, n=22)
        spec = RollingSpec(t1=10, tau=0.5, methods=("csa", "unconditional"))
        a = rolling_forecast(data, spec, master_seed=1, n_jobs=1)
        b = rolling_forecast(data, spec, master_seed=1, n_jobs=2)
        for m in a.methods:
            assert np.array_equal(a.forecasts[m], b.forecasts[m])
        assert np.array_equal(a.benchmark, b.benchmark)
        assert a.k_hat == b.k_hat


class TestRandomSplitEval:
    def test_benchmark_method_zero_r2(self, rng):
        data = series_dataset(rng, n=40)
        spec = SplitSpec(n1=15, reps=1, tau=0.5, methods=("unconditional",), seed=0)
        res = random_split_eval(data, spec)
        assert res.mean_r2["unconditional"] == pytest.approx(0.0, abs=1e-12)

    def test_same_seed_identical(self, rng):
        data = series_dataset(rng, n=40)
        spec = SplitSpec(n1=15, reps=3, tau=0.5, methods=("csa",), seed=5)
        a = random_split_eval(data, spec)
        b = random_split_eval(data, spec)
        assert np.array_equal(a.r2, b.r2)

    def test_parallel_matches_serial(self, rng):
        data = series_dataset(rng, n=40)
        spec = SplitSpec(n1=15, reps=4, tau=0.5, methods=("csa",), seed=5)
        a = random_split_eval(data, spec, n_jobs=1)
        b = random_split_eval(data, spec, n_jobs=2)
        assert np.array_equal(a.r2, b.r2)
        assert a.k_hat == b.k_hat

    def test_matches_independent_recomputation(self, rng):
        data = series_dataset(rng, n=30)
        tau, n1, seed = 0.5, 12, 7
        spec = SplitSpec(n1=n1, reps=3, tau=tau, methods=("csa",), seed=seed)
        res = random_split_eval(data, spec)
        for s in range(3):
            gen = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence((seed, s, DATA_TAG)))
            )
            perm = gen.permutation(30)
            est = Dataset(y=data.y[perm[:n1]], X=data.X[perm[:n1]], intercept_col=0)
            hold_y, hold_X = data.y[perm[n1:]], data.X[perm[n1:]]
            mseed = child_seed(seed, s, METHOD_TAG, method_tag("csa"))
            predictor = fit_method("csa", est, tau, mseed, MethodSettings())
            bench = unconditional_quantile(est.y, tau)
            num = float(np.sum(check_loss(hold_y - predictor.predict_rows(hold_X), tau)))
            den = float(np.sum(check_loss(hold_y - bench, tau)))
            assert res.r2[s, 0] == pytest.approx(1.0 - num / den, abs=1e-12)

    def test_n1_validation(self, rng):
        data = series_dataset(rng, n=20)
        with pytest.raises(ValueError):
            random_split_eval(
                data, SplitSpec(n1=20, reps=1, tau=0.5, methods=("csa",))
            )

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            RollingSpec(t1=1, tau=0.5, methods=("csa",))
        with pytest.raises(ValueError):
            SplitSpec(n1=10, reps=0, tau=0.5, methods=("csa",))
        with pytest.raises(ValueError):
            SplitSpec(n1=10, reps=1, tau=1.5, methods=("csa",))
