from __future__ import annotations

import math
import tempfile
import unittest
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import chi2

from rank2s.errors import InvalidParameters, ParseError
from rank2s.null.asymptotic import (
    MIXTURE_SCALE,
    MixtureSpec,
    MixtureTail,
    critical_value_asymptotic,
    critical_value_table,
    kernel_h,
    kernel_squared_eigenvalue_sum,
    load_quantile_cache,
    mean_rank_distance,
    mixture_coefficients,
    mixture_tail_probability,
    mixture_variance_ratio,
    moments_T,
    quantile_Zd,
    sample_Zd,
    spec_from_cache,
    standardized_T,
    store_spec,
    verify_kernel_eigensystem,
)
from rank2s.null.distribution import attained_size
from rank2s.null.engines import exact_null

# 95% point of Z_1 = (sqrt(45) / pi^2) * (chi2_1 - 1)
Z1_QUANTILE_95 = math.sqrt(45.0) / math.pi**2 * (chi2.ppf(0.95, 1) - 1.0)

# Published 95% points of Z_d (averages of ten 10^8-draw quantiles) and the
# c_0.05(m, n) they give, one column per entry of TABULATED_QUANTILES_95.
TABULATED_QUANTILES_95 = {1: 1.9298, 2: 1.9676, 4: 1.9772, 10: 1.9779, 100: 1.9780}
# 95% points of Z_d by numerical inversion of its characteristic function.
EXACT_QUANTILES_95 = {1: 1.9313, 2: 1.9675, 4: 1.9753, 10: 1.9767}
TABULATED_CRITICAL_VALUES = {
    (50, 50): (0.4545, 0.4601, 0.4617, 0.4617, 0.4617),
    (50, 40): (0.4545, 0.4601, 0.4615, 0.4616, 0.4616),
    (500, 500): (0.4544, 0.4600, 0.4614, 0.4615, 0.4615),
    (7, 7): (0.4543, 0.4597, 0.4610, 0.4611, 0.4611),
    (7, 9): (0.4540, 0.4594, 0.4608, 0.4609, 0.4609),
}


class TestMoments(unittest.TestCase):
    def test_closed_form_values(self) -> None:
        moments = moments_T(7, 7)

        self.assertAlmostEqual(moments.mean, 15.0 / 84.0, places=14)
        self.assertAlmostEqual(moments.sd, 1.0 / 7.0, places=14)
        self.assertAlmostEqual(moments_T(50, 50).mean, 101.0 / 600.0, places=14)

    def test_standardization(self) -> None:
        moments = moments_T(7, 9)

        self.assertAlmostEqual(standardized_T(moments.mean, 7, 9), 0.0)
        self.assertAlmostEqual(standardized_T(moments.mean + moments.sd, 7, 9), 1.0)

    def test_mean_rank_distance(self) -> None:
        for N in range(2, 25):
            self.assertEqual(mean_rank_distance(N), Fraction(N + 1, 3))
        with self.assertRaises(InvalidParameters):
            mean_rank_distance(1)


class TestMixture(unittest.TestCase):
    def test_variance_ratios(self) -> None:
        for d, expected in [(1, 0.9239), (2, 0.9819), (4, 0.9967), (10, 0.9997)]:
            self.assertAlmostEqual(mixture_variance_ratio(d), expected, delta=3e-4)
        self.assertAlmostEqual(mixture_variance_ratio(1000), 1.0, places=8)
        with self.assertRaises(InvalidParameters):
            mixture_variance_ratio(0)

    def test_coefficients(self) -> None:
        coefficients = mixture_coefficients(3)

        np.testing.assert_allclose(coefficients, math.sqrt(45.0) / (math.pi**2 * np.array([1.0, 4.0, 9.0])))
        self.assertAlmostEqual(MIXTURE_SCALE, math.sqrt(45.0) / 2.0)

    def test_draws_are_centred_with_the_truncated_variance(self) -> None:
        draws = sample_Zd(4, 200_000, seed=3)

        self.assertLess(abs(draws.mean()), 0.01)
        self.assertAlmostEqual(draws.var(), mixture_variance_ratio(4), delta=0.04)

    def test_draws_are_deterministic_per_seed(self) -> None:
        np.testing.assert_array_equal(sample_Zd(2, 5000, seed=1), sample_Zd(2, 5000, seed=1))
        self.assertFalse(np.array_equal(sample_Zd(2, 5000, seed=1), sample_Zd(2, 5000, seed=2)))

    def test_single_term_quantile(self) -> None:
        self.assertAlmostEqual(quantile_Zd(1, 0.05, 500_000, seed=0), Z1_QUANTILE_95, delta=0.035)

    def test_quantile_validation(self) -> None:
        with self.assertRaises(InvalidParameters):
            quantile_Zd(4, 0.05, sample_count=1000)
        with self.assertRaises(InvalidParameters):
            quantile_Zd(4, 1.5, sample_count=200_000)

    def test_mixture_caches_quantiles(self) -> None:
        spec = MixtureSpec(d=4, sample_count=200_000, seed=0, quantile_cache={0.05: 1.95})

        self.assertEqual(spec.quantile(0.05), 1.95)
        self.assertEqual(quantile_Zd(4, 0.05, 200_000, 0, spec=spec), 1.95)
        self.assertAlmostEqual(spec.variance, mixture_variance_ratio(4))

    def test_tail_probability(self) -> None:
        tail = MixtureTail.build(1, 400_000, seed=5)

        self.assertAlmostEqual(tail(Z1_QUANTILE_95), 0.05, delta=0.003)
        self.assertEqual(tail(-100.0), 1.0)
        self.assertAlmostEqual(tail(1e9), 1.0 / 400_001.0)
        self.assertAlmostEqual(mixture_tail_probability(-100.0, 2, 1000, seed=0), 1.0)

    @pytest.mark.slow
    def test_truncated_quantiles_at_full_sample_count(self) -> None:
        quantiles = {d: quantile_Zd(d, 0.05, 10_000_000, seed=0) for d in EXACT_QUANTILES_95}

        # sd of one 10^7-draw estimate: about 0.0016 for d=1, 0.001 beyond
        for d, q in quantiles.items():
            with self.subTest(d=d):
                self.assertAlmostEqual(q, EXACT_QUANTILES_95[d], delta=0.005 if d == 1 else 0.003)
        self.assertLess(quantiles[1], quantiles[2])
        self.assertLess(quantiles[2], quantiles[4])

    def test_published_quantiles_agree_with_the_exact_mixture(self) -> None:
        self.assertAlmostEqual(EXACT_QUANTILES_95[1], Z1_QUANTILE_95, delta=1e-4)
        for d, exact in EXACT_QUANTILES_95.items():
            with self.subTest(d=d):
                self.assertAlmostEqual(TABULATED_QUANTILES_95[d], exact, delta=0.002)


class TestAsymptoticCriticalValues(unittest.TestCase):
    def test_seven_by_seven_with_ten_terms(self) -> None:
        spec = MixtureSpec(d=10, quantile_cache={0.05: TABULATED_QUANTILES_95[10]})

        c = critical_value_asymptotic(0.05, 7, 7, 10, spec)

        self.assertAlmostEqual(c, 0.4611, delta=1e-4)
        self.assertAlmostEqual(attained_size(c, exact_null(7, 7, "T")), 0.056, delta=5e-4)

    def test_seven_by_nine_with_ten_terms(self) -> None:
        spec = MixtureSpec(d=10, quantile_cache={0.05: TABULATED_QUANTILES_95[10]})

        c = critical_value_asymptotic(0.05, 7, 9, 10, spec)

        self.assertAlmostEqual(c, 0.4609, delta=1e-4)
        self.assertAlmostEqual(attained_size(c, exact_null(7, 9, "T")), 0.052, delta=1e-3)

    def test_full_block_from_published_quantiles(self) -> None:
        specs = [MixtureSpec(d=d, quantile_cache={0.05: q}) for d, q in TABULATED_QUANTILES_95.items()]

        rows = critical_value_table(specs, alpha=0.05, sizes=list(TABULATED_CRITICAL_VALUES))

        for (m, n), expected in TABULATED_CRITICAL_VALUES.items():
            for row, value in zip(rows, expected):
                with self.subTest(m=m, n=n, d=row["d"]):
                    self.assertAlmostEqual(row[f"c_m{m}_n{n}"], value, delta=5e-4)

    @pytest.mark.slow
    def test_sampled_quantiles_give_the_recommended_columns(self) -> None:
        specs = [MixtureSpec(d=d, sample_count=10_000_000, seed=0) for d in (4, 10)]

        rows = {row["d"]: row for row in critical_value_table(specs, alpha=0.05, sizes=[(50, 50), (500, 500)])}

        # sd(T) is about 0.15 here, so the quantile tolerance above shrinks to under 0.001.
        self.assertAlmostEqual(rows[4]["c_m50_n50"], 0.4617, delta=1e-3)
        self.assertAlmostEqual(rows[10]["c_m500_n500"], 0.4615, delta=1e-3)

    def test_order_must_match_the_mixture(self) -> None:
        with self.assertRaises(InvalidParameters):
            critical_value_asymptotic(0.05, 7, 7, 4, MixtureSpec(d=10))

    def test_table_layout(self) -> None:
        specs = [MixtureSpec(d=d, quantile_cache={0.05: 1.9}) for d in (1, 4)]

        rows = critical_value_table(specs, alpha=0.05, sizes=[(7, 7), (50, 40)])

        self.assertEqual([row["d"] for row in rows], [1, 4])
        self.assertEqual(set(rows[0]), {"d", "variance_ratio", "quantile", "c_m7_n7", "c_m50_n40"})
        self.assertAlmostEqual(rows[1]["c_m7_n7"], 15.0 / 84.0 + 1.9 / 7.0)


class TestKernel(unittest.TestCase):
    def test_values_and_symmetry(self) -> None:
        self.assertAlmostEqual(kernel_h(0.5, 0.5), -1.0 / 6.0)
        self.assertAlmostEqual(kernel_h(0.0, 1.0), 1.0 / 3.0)
        u = np.linspace(0.0, 1.0, 11)
        np.testing.assert_allclose(kernel_h(u[:, None], u[None, :]), kernel_h(u[None, :], u[:, None]))

    def test_degenerate(self) -> None:
        grid = (np.arange(20_000) + 0.5) / 20_000
        for u in (0.0, 0.1, 0.5, 0.77, 1.0):
            self.assertLess(abs(float(np.mean(kernel_h(u, grid)))), 1e-6)

    def test_eigenvalues(self) -> None:
        for approx, reference in verify_kernel_eigensystem(grid_size=1000, k_max=5):
            self.assertLess(abs(approx - reference) / abs(reference), 1e-3)

    def test_squared_eigenvalue_sum(self) -> None:
        self.assertAlmostEqual(kernel_squared_eigenvalue_sum(1000), 2.0 / 45.0, delta=1e-4)

    def test_eigensystem_validation(self) -> None:
        with self.assertRaises(InvalidParameters):
            verify_kernel_eigensystem(grid_size=100)
        with self.assertRaises(InvalidParameters):
            verify_kernel_eigensystem(k_max=11)


class TestQuantileCache(unittest.TestCase):
    def test_store_and_reload(self) -> None:
        spec = MixtureSpec(d=4, sample_count=200_000, seed=1, quantile_cache={0.05: 1.95, 0.01: 3.1})

        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "mixture_quantiles.csv"
            store_spec(path, spec)
            store_spec(path, MixtureSpec(d=2, sample_count=200_000, seed=1, quantile_cache={0.05: 1.94}))

            records = load_quantile_cache(path)
            reloaded = spec_from_cache(path, 4, 200_000, 1)
            other_seed = spec_from_cache(path, 4, 200_000, 2)

        self.assertEqual(len(records), 3)
        self.assertEqual(reloaded.quantile_cache, {0.05: 1.95, 0.01: 3.1})
        self.assertEqual(other_seed.quantile_cache, {})

    def test_missing_file_is_empty(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            self.assertEqual(load_quantile_cache(Path(td) / "absent.csv"), {})

    def test_bad_header(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "mixture_quantiles.csv"
            path.write_text("d,alpha\n4,0.05\n", encoding="utf-8")
            with self.assertRaises(ParseError):
                load_quantile_cache(path)


if __name__ == "__main__":
    unittest.main()
