import numpy as np
import pytest

from maxpem.benchmark import (BenchmarkConfig, TrueSystem, air, air_single,
                              baseline_pem, boxplot_summary, cod,
                              desk_config, make_dataset, monte_carlo,
                              paper_config, prior_correlation_demo,
                              random_system, run_single)
from maxpem.model import Theta, c_stable, simulate
from maxpem.signals import square_wave, white_noise


def tiny_config(**overrides):
    base = dict(n_runs=2, order=4, pole_range=(0.6, 0.7), T=10, N=400,
                N_v=200, input_period=80, baseline_max_order=2,
                max_evals=25, estimators=("tc", "bic", "oracle"))
    base.update(overrides)
    return BenchmarkConfig(**base)


def low_order_truth(T, seed):
    """A genuine MAX(2, 1) generator padded to T taps."""
    rng = np.random.default_rng(seed)
    b = np.zeros(T)
    b[:2] = rng.uniform(0.5, 1.0, 2)
    c = np.zeros(T)
    c[0] = rng.uniform(0.2, 0.5)
    return TrueSystem(b_true=b, c_true=c, b_poles=np.zeros(0),
                      c_poles=np.zeros(0), seed=seed)


class TestPresets:
    def test_desk_and_paper_sizes(self):
        assert desk_config().n_runs == 20
        assert desk_config().order == 20
        assert paper_config().n_runs == 200
        assert paper_config().order == 40

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            BenchmarkConfig(n_runs=0)
        with pytest.raises(ValueError):
            BenchmarkConfig(pole_range=(0.5, 1.1))
        with pytest.raises(ValueError):
            BenchmarkConfig(estimators=("tc", "arx"))


class TestRandomSystem:
    def test_shapes_and_normalization(self):
        sys = random_system(6, (0.7, 0.8), 25, seed=1)
        assert sys.b_true.size == 25 and sys.c_true.size == 25
        assert np.linalg.norm(sys.b_true) == pytest.approx(1.0)

    def test_dominant_pole_in_range(self):
        for seed in range(10):
            sys = random_system(5, (0.7, 0.8), 20, seed=seed)
            assert 0.7 <= np.max(np.abs(sys.b_poles)) <= 0.8 + 1e-12
            assert 0.7 <= np.max(np.abs(sys.c_poles)) <= 0.8 + 1e-12

    def test_truncated_c_is_stable(self):
        for seed in range(10):
            sys = random_system(5, (0.8, 0.9), 30, seed=100 + seed)
            assert c_stable(sys.c_true)[0]

    def test_reproducible(self):
        s1 = random_system(4, (0.6, 0.7), 15, seed=7)
        s2 = random_system(4, (0.6, 0.7), 15, seed=7)
        np.testing.assert_array_equal(s1.b_true, s2.b_true)
        np.testing.assert_array_equal(s1.c_true, s2.c_true)

    def test_order_guard(self):
        with pytest.raises(ValueError):
            random_system(1, (0.6, 0.7), 10, seed=0)


class TestMakeDataset:
    def test_sample_snr_exact(self):
        sys = random_system(4, (0.7, 0.8), 15, seed=3)
        u = square_wave(60, 0.5, -0.5, 0.5, 500)
        for snr in (0.5, 1.0, 4.0):
            data = make_dataset(sys, u, snr, seed=11)
            from scipy.signal import lfilter
            from maxpem.signals import shift
            clean = lfilter(sys.b_true, [1.0], shift(u, 1))
            noise = data.y - clean
            assert np.var(clean) / np.var(noise) == pytest.approx(snr,
                                                                  rel=1e-10)

    def test_noiseless(self):
        sys = random_system(4, (0.7, 0.8), 15, seed=5)
        u = white_noise(1.0, 300, 1)
        data = make_dataset(sys, u, np.inf, seed=1)
        assert data.sigma2_true == 0.0

    def test_zero_input_rejected(self):
        sys = random_system(4, (0.7, 0.8), 15, seed=5)
        with pytest.raises(ValueError):
            make_dataset(sys, np.zeros(300), 1.0, seed=1)

    def test_bad_snr_rejected(self):
        sys = random_system(4, (0.7, 0.8), 15, seed=5)
        with pytest.raises(ValueError):
            make_dataset(sys, white_noise(1.0, 300, 2), 0.0, seed=1)


class TestMetrics:
    def test_cod_perfect_and_mean(self):
        y = np.array([1.0, 2.0, 4.0, -1.0])
        assert cod(y, y) == 100.0
        assert cod(y, np.full(4, y.mean())) == pytest.approx(0.0)

    def test_air_perfect_and_zero_guess(self):
        x = np.array([1.0, 0.5, 0.25])
        assert air_single(x, x) == 100.0
        worse = air_single(x, np.zeros(3))
        assert worse < 100.0

    def test_air_averages_halves(self):
        b = np.array([1.0, 0.5])
        c = np.array([0.3, -0.2])
        bh = np.array([0.9, 0.55])
        ch = np.array([0.35, -0.1])
        expected = 0.5 * (air_single(b, bh) + air_single(c, ch))
        assert air(b, bh, c, ch) == pytest.approx(expected)

    def test_constant_truth_rejected(self):
        with pytest.raises(ValueError):
            air_single(np.ones(4), np.zeros(4))
        with pytest.raises(ValueError):
            cod(np.ones(4), np.zeros(4))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cod(np.zeros(4), np.zeros(5))


class TestBaselinePem:
    def test_recovers_low_order_system(self):
        T = 10
        sys = low_order_truth(T, seed=2)
        u = white_noise(1.0, 1500, 4)
        data = make_dataset(sys, u, 10.0, seed=5)
        th, b_hat, c_hat, (k1, k2) = baseline_pem(
            data, max_order=4, selection="bic", T=T)
        assert air(sys.b_true, b_hat, sys.c_true, c_hat) > 90.0
        assert k1 >= 2

    def test_oracle_beats_bic_per_run(self):
        T = 10
        for seed in range(3):
            sys = low_order_truth(T, seed=20 + seed)
            u = white_noise(1.0, 800, 30 + seed)
            data = make_dataset(sys, u, 2.0, seed=40 + seed)
            _, bb, cb, _ = baseline_pem(data, max_order=3,
                                        selection="bic", T=T)
            _, bo, co, _ = baseline_pem(data, max_order=3,
                                        selection="oracle", truth=sys, T=T)
            assert air(sys.b_true, bo, sys.c_true, co) >= \
                air(sys.b_true, bb, sys.c_true, cb) - 1e-9

    def test_oracle_needs_truth(self):
        data = make_dataset(low_order_truth(10, 1),
                            white_noise(1.0, 400, 1), 1.0, seed=2)
        with pytest.raises(ValueError):
            baseline_pem(data, selection="oracle")

    def test_unknown_selection(self):
        data = make_dataset(low_order_truth(10, 1),
                            white_noise(1.0, 400, 1), 1.0, seed=2)
        with pytest.raises(ValueError):
            baseline_pem(data, selection="aicc")


class TestRunSingle:
    def test_row_schema_and_success(self):
        rows = run_single(tiny_config(), 0)
        assert [r["estimator"] for r in rows] == ["tc", "bic", "oracle"]
        for r in rows:
            assert r["run"] == 0
            assert not r["failed"]
            assert np.isfinite(r["air"]) and np.isfinite(r["cod"])
            assert r["fit_seconds"] > 0


class TestMonteCarlo:
    def test_worker_count_invariant(self):
        cfg1 = tiny_config(workers=1)
        cfg2 = tiny_config(workers=2)
        rows1 = monte_carlo(cfg1)
        rows2 = monte_carlo(cfg2)
        assert len(rows1) == len(rows2) == 2 * 3
        for a, b in zip(rows1, rows2):
            assert a["run"] == b["run"]
            assert a["estimator"] == b["estimator"]
            assert a["air"] == b["air"]
            assert a["cod"] == b["cod"]


class TestBoxplotSummary:
    def test_known_quartiles(self):
        rows = [dict(estimator="tc", air=v, failed=False)
                for v in [1.0, 2.0, 3.0, 4.0, 100.0]]
        (s,) = boxplot_summary(rows, "air")
        assert s["median"] == 3.0
        assert s["q1"] == 2.0 and s["q3"] == 4.0
        assert s["hi_whisker"] == 4.0  # 100 is an outlier
        assert s["n_outliers"] == 1
        assert s["n"] == 5

    def test_failed_rows_excluded(self):
        rows = [dict(estimator="tc", air=1.0, failed=False),
                dict(estimator="tc", air=np.nan, failed=True)]
        (s,) = boxplot_summary(rows, "air")
        assert s["n"] == 1


class TestPriorCorrelationDemo:
    def test_forward_taps_are_correlated(self):
        out = prior_correlation_demo(T=30, n_draws=200, seed=1)
        assert out["b"].shape == (200, 30)
        assert out["c"].shape == (200, 30)
        assert out["stable"].sum() > 50
        assert out["magnitude_correlation"] > 0.2

    def test_reproducible(self):
        a = prior_correlation_demo(T=20, n_draws=50, seed=3)
        b = prior_correlation_demo(T=20, n_draws=50, seed=3)
        np.testing.assert_array_equal(a["b"], b["b"])
        assert a["magnitude_correlation"] == b["magnitude_correlation"]
