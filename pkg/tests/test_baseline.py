import numpy as np
import pytest

from imsem.baseline import (
    SIGMA_FLOOR,
    baseline_m_step,
    correct_baseline_em,
    fit_baseline,
    fit_chromatograms,
    histogram_mode,
    reference_baseline,
    subtract_baseline,
)
from imsem.core import AxisConfig, ContractError, Imsc
from imsem.metrics import cosine_similarity
from imsem.simulate import BaselineModel, NoiseModel, add_baseline, add_noise, sample_peaks, synthesize_imsc


class TestHistogramMode:
    def test_strict_majority(self):
        assert histogram_mode([5, 5, 5, 9]) == 5

    def test_tie_goes_to_smaller_center(self):
        assert histogram_mode([1, 1, 2, 2]) == 1

    def test_float_binning(self):
        assert histogram_mode([0.6, 1.2, 0.9, 4.0]) == 1

    def test_half_integers_round_up(self):
        assert histogram_mode([2.5, 2.5, 1.0]) == 3

    def test_empty(self):
        with pytest.raises(ContractError):
            histogram_mode([])


class TestFitBaseline:
    def test_constant_chromatogram(self):
        fit = fit_baseline(np.full(20, 10.0))
        assert fit.mu == 10.0 and fit.sigma == SIGMA_FLOOR and fit.omega_b == 1.0
        assert fit.b == pytest.approx(10.0)

    def test_recovers_gaussian_baseline(self):
        rng = np.random.default_rng(8)
        x = np.concatenate([rng.normal(100, 5, 9000), rng.uniform(100, 2000, 1000)])
        fit = fit_baseline(x)
        assert fit.converged
        assert fit.mu == pytest.approx(100, abs=1)
        assert fit.sigma == pytest.approx(5, abs=0.5)
        assert fit.omega_b + fit.omega_s == pytest.approx(1.0, abs=1e-12)
        assert fit.b == fit.mu + 2 * fit.sigma

    def test_m_step_with_unit_weights_is_plain_moments(self, rng):
        x = rng.normal(3, 2, 50)
        mu, sigma = baseline_m_step(x, np.ones(50))
        assert mu == pytest.approx(x.mean())
        assert sigma == pytest.approx(x.std())

    def test_too_short(self):
        with pytest.raises(ContractError):
            fit_baseline([1.0])


class TestCorrection:
    def test_column_below_level_is_zeroed(self):
        s = Imsc(AxisConfig(3, 2), [[1.0, 5.0], [2.0, 6.0], [3.0, 7.0]])
        out = subtract_baseline(s, [10.0, 5.5])
        np.testing.assert_array_equal(out.values, [[0, 0], [0, 0.5], [0, 1.5]])

    def test_level_count_must_match(self):
        with pytest.raises(ContractError):
            subtract_baseline(Imsc(AxisConfig(2, 2), np.zeros((2, 2))), [1.0])

    def test_em_subtracts_recorded_level(self, rng):
        s = Imsc(AxisConfig(50, 4), rng.normal(20, 3, (50, 4)))
        fits = fit_chromatograms(s)
        out = correct_baseline_em(s)
        expected = np.maximum(s.values - np.array([f.b for f in fits]), 0)
        np.testing.assert_array_equal(out.values, expected)

    def test_columns_are_independent(self, rng):
        values = rng.normal(20, 3, (40, 6))
        values[5:9, 2] += 80
        perm = rng.permutation(6)
        a = correct_baseline_em(Imsc(AxisConfig(40, 6), values)).values[:, perm]
        b = correct_baseline_em(Imsc(AxisConfig(40, 6), values[:, perm])).values
        np.testing.assert_array_equal(a, b)

    def test_simulated_baseline_is_removed(self):
        rng = np.random.default_rng(4)
        axes = AxisConfig(100, 300)
        peaks = sample_peaks(rng)
        clean = synthesize_imsc(peaks, axes)
        shifted, _, _ = add_baseline(add_noise(clean, NoiseModel(), rng), peaks, BaselineModel(), rng)
        out = correct_baseline_em(shifted)
        assert out.values.min() >= 0
        assert cosine_similarity(clean, out) > cosine_similarity(clean, shifted)


class TestReferenceMethods:
    def test_naive_on_repeated_rows(self):
        s = Imsc(AxisConfig(4, 3), np.tile([1.0, 7.0, -2.0], (4, 1)))
        np.testing.assert_array_equal(reference_baseline(s, "naive").values, 0)

    def test_median_even_length(self):
        s = Imsc(AxisConfig(4, 1), [[1.0], [2.0], [3.0], [100.0]])
        np.testing.assert_allclose(reference_baseline(s, "median").values.ravel(), [0, 0, 0.5, 97.5])

    @pytest.mark.parametrize("method", ["naive", "median"])
    def test_zero_matrix_unchanged(self, method):
        s = Imsc(AxisConfig(3, 3), np.zeros((3, 3)))
        np.testing.assert_array_equal(reference_baseline(s, method).values, 0)

    def test_naive_needs_two_spectra(self):
        with pytest.raises(ContractError):
            reference_baseline(Imsc(AxisConfig(1, 3), np.zeros((1, 3))), "naive")

    def test_unknown_method(self):
        with pytest.raises(ContractError):
            reference_baseline(Imsc(AxisConfig(2, 2), np.zeros((2, 2))), "mode")
