import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from imsem.core import AxisConfig, Imsc, PeakDescriptors
from imsem.simulate import (
    DESCRIPTOR_INTERVALS,
    BaselineModel,
    ClusterScenario,
    DomainError,
    NoiseModel,
    add_baseline,
    add_noise,
    descriptors_from_params,
    params_from_descriptors,
    peak_from_descriptors,
    sample_peak_descriptors,
    sample_peaks,
    shifted_ig_pdf,
    simulate_cluster_scenario,
    synthesize_imsc,
)

from oracles import ig_pdf


class TestShiftedIg:
    def test_zero_at_and_below_offset(self):
        assert shifted_ig_pdf(3.0, 1.0, 2.0, 3.0) == 0.0
        assert shifted_ig_pdf(-1.0, 1.0, 2.0, 0.0) == 0.0

    def test_unit_parameters(self):
        assert shifted_ig_pdf(1.0, 1.0, 1.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-12)
        assert shifted_ig_pdf(1.0, 1.0, 1.0, 0.0) == pytest.approx(0.398942, abs=1e-6)

    def test_matches_oracle(self):
        x = np.linspace(-1, 6, 29)
        np.testing.assert_allclose(shifted_ig_pdf(x, 1.3, 2.5, 0.4), [ig_pdf(v - 0.4, 1.3, 2.5) for v in x], rtol=1e-12)

    def test_integrates_to_one(self):
        total, _ = quad(lambda x: shifted_ig_pdf(x, 1.0, 2.0, 3.0), 3.0, 53.0, limit=200, epsabs=1e-12)
        assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_integrates_to_one_random_parameters(self, seed):
        rng = np.random.default_rng(seed)
        mu, lam, o = rng.uniform(0.1, 5), rng.uniform(0.1, 50), rng.uniform(-2, 2)
        pieces = [quad(lambda x: shifted_ig_pdf(x, mu, lam, o), a, b, limit=200, epsabs=1e-13)[0]
                  for a, b in ((o, o + mu), (o + mu, o + 60 * mu), (o + 60 * mu, np.inf))]
        assert sum(pieces) == pytest.approx(1.0, abs=1e-6)


class TestDescriptors:
    def test_mean_is_shifted(self):
        assert descriptors_from_params(1.0, 5.0, 2.0)[0] == 3.0

    def test_unit_parameters(self):
        mean, std, mode = descriptors_from_params(1.0, 1.0, 0.0)
        assert (mean, std) == (1.0, 1.0)
        assert mode == pytest.approx(math.sqrt(13) / 2 - 1.5, rel=1e-14)

    @pytest.mark.parametrize("mu,lam,o", [(1.0, 1.0, 0.0), (0.01, 0.5, 0.6), (150.0, 300.0, -50.0)])
    def test_mode_is_the_density_maximum(self, mu, lam, o):
        mean, _, mode = descriptors_from_params(mu, lam, o)
        found = minimize_scalar(lambda x: -shifted_ig_pdf(x, mu, lam, o), bounds=(o + 1e-9 * mu, mean), method="bounded",
                                options={"xatol": 1e-10 * mu})
        assert found.x == pytest.approx(mode, rel=1e-5, abs=1e-8 * mu)
        assert mode < mean

    def test_round_trip_of_unit_parameters(self):
        np.testing.assert_allclose(params_from_descriptors(*descriptors_from_params(1.0, 1.0, 0.0), skewed=True),
                                   (1.0, 1.0, 0.0), rtol=1e-9, atol=1e-9)

    def test_both_branches_are_preimages(self):
        target = descriptors_from_params(2.0, 9.0, 1.0)
        broad = params_from_descriptors(*target)
        skewed = params_from_descriptors(*target, skewed=True)
        assert broad[1] >= 1.5 * broad[0] and skewed[1] <= 1.5 * skewed[0]
        for params in (broad, skewed):
            np.testing.assert_allclose(descriptors_from_params(*params), target, rtol=1e-10)

    @pytest.mark.parametrize("mean,std,mode", [(1.0, 1.0, 1.0), (1.0, 1.0, 2.0), (1.0, 0.0, 0.5), (1.0, 0.1, 0.0)])
    def test_infeasible_descriptors(self, mean, std, mode):
        with pytest.raises(DomainError):
            params_from_descriptors(mean, std, mode)

    def test_sampled_descriptors_round_trip(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(200):
            d = sample_peak_descriptors(rng)
            for target in ((d.mean_t, d.std_t, d.mode_t), (d.mean_r, d.std_r, d.mode_r)):
                back = descriptors_from_params(*params_from_descriptors(*target))
                worst = max(worst, max(abs(b - a) / abs(a) for a, b in zip(target, back)))
        assert worst < 1e-9


class TestSampling:
    def test_descriptors_stay_in_their_intervals(self):
        rng = np.random.default_rng(1)
        iv = DESCRIPTOR_INTERVALS
        draws = [sample_peak_descriptors(rng) for _ in range(10_000)]
        for name, key in (("mode_t", "mode_t"), ("std_t", "std_t"), ("mode_r", "mode_r"), ("std_r", "std_r"),
                          ("volume", "volume")):
            values = np.array([getattr(d, name) for d in draws])
            assert values.min() >= iv[key][0] and values.max() <= iv[key][1]
        gap_t = np.array([d.mean_t - d.mode_t for d in draws])
        gap_r = np.array([d.mean_r - d.mode_r for d in draws])
        assert gap_t.min() >= iv["gap_t"][0] * (1 - 1e-9) and gap_t.max() <= iv["gap_t"][1] * (1 + 1e-9)
        assert gap_r.min() >= iv["gap_r"][0] * (1 - 1e-9) and gap_r.max() <= iv["gap_r"][1] * (1 + 1e-9)

    def test_peak_count_range(self):
        rng = np.random.default_rng(2)
        counts = {len(sample_peaks(rng)) for _ in range(300)}
        assert counts == set(range(5, 11))

    def test_seed_determinism(self):
        a = sample_peaks(np.random.default_rng(7))
        b = sample_peaks(np.random.default_rng(7))
        assert a == b


def central_peak():
    return peak_from_descriptors(PeakDescriptors(0.802, 0.01, 0.8, 201.5, 6.0, 200.0, 5.0))


class TestSynthesis:
    def test_no_peaks(self, small_axes):
        assert not synthesize_imsc([], small_axes).values.any()

    def test_volume_is_preserved(self):
        axes = AxisConfig(1200, 2500)
        m = synthesize_imsc([central_peak()], axes)
        assert m.values.sum() * axes.retention_step * axes.rim_step == pytest.approx(5.0, rel=0.02)

    def test_linearity(self):
        axes = AxisConfig(300, 500)
        one = synthesize_imsc([central_peak()], axes).values
        two = synthesize_imsc([central_peak(), central_peak()], axes).values
        np.testing.assert_array_equal(two, 2 * one)


class TestNoise:
    def test_mean_offset(self):
        clean = Imsc(AxisConfig(1200, 2500), np.zeros((1200, 2500)))
        noisy = add_noise(clean, NoiseModel(), np.random.default_rng(0))
        assert noisy.values.mean() == pytest.approx(0.8, abs=0.01)

    def test_degenerate_noise_is_constant(self, small_axes):
        clean = Imsc(small_axes, np.ones((40, 120)))
        out = add_noise(clean, NoiseModel(sigma=0.0, intensity=0.0), np.random.default_rng(0))
        np.testing.assert_allclose(out.values - clean.values, 0.8, rtol=0, atol=1e-15)

    def test_residual_is_unit_sinusoid(self):
        axes = AxisConfig(50, 2500)
        clean = Imsc(axes, np.zeros((50, 2500)))
        resid = add_noise(clean, NoiseModel(mu=0.0, sigma=0.0), np.random.default_rng(4)).values
        lo = axes.voltage / (6000 * axes.tube_length**2)
        hi = axes.voltage / (1000 * axes.tube_length**2)
        for row in resid:
            c = math.asin(row[-1]) / axes.rim[-1]
            assert lo <= c <= hi
            np.testing.assert_allclose(row, np.sin(c * axes.rim), atol=1e-12)

    def test_invalid_model(self):
        with pytest.raises(ValueError):
            NoiseModel(frequency_range=(6000.0, 1000.0))


class TestBaseline:
    def _draw(self, seed, rows=30, peaks=()):
        axes = AxisConfig(rows, 2500)
        clean = synthesize_imsc(list(peaks), axes)
        return clean, add_baseline(clean, list(peaks), BaselineModel(), np.random.default_rng(seed))

    def test_curve_integrates_to_one(self):
        _, (_, _, draw) = self._draw(0)
        c = draw.curve
        edges = [c.o_beta, c.o_alpha, 1.0, 5.0, np.inf]
        total = sum(quad(c, a, b, limit=500, epsabs=1e-12)[0] for a, b in zip(edges, edges[1:]))
        assert total == pytest.approx(1.0, abs=1e-3)

    def test_draws_within_intervals(self):
        model = BaselineModel()
        for seed in range(50):
            _, (_, _, draw) = self._draw(seed, rows=2)
            c = draw.curve
            assert (c.mu_alpha, c.o_alpha) == (0.174, 0.443)
            assert model.lambda_alpha[0] <= c.lambda_alpha <= model.lambda_alpha[1]
            assert model.lambda_beta[0] <= c.lambda_beta <= model.lambda_beta[1]
            assert model.omega[0] <= c.omega <= model.omega[1]

    def test_peak_free_rows_sum_to_total(self):
        clean, (out, baseline, draw) = self._draw(3)
        np.testing.assert_allclose(out.values.sum(axis=1), draw.tau, rtol=1e-12)
        np.testing.assert_allclose(out.values - clean.values, baseline)

    def test_peak_mass_is_subtracted(self):
        clean, (out, _, draw) = self._draw(5, rows=1200, peaks=[central_peak()])
        np.testing.assert_allclose(out.values.sum(axis=1), draw.tau, rtol=1e-9)
        assert draw.clamped_rows == 0

    def test_negative_totals_are_clamped(self):
        axes = AxisConfig(4, 100)
        model = BaselineModel(tau_mean=-10.0, tau_std=1.0)
        out, baseline, draw = add_baseline(Imsc(axes, np.zeros((4, 100))), [], model, np.random.default_rng(0))
        assert draw.clamped_rows == 4 and not baseline.any()

    def test_determinism(self):
        a = self._draw(11)[1]
        b = self._draw(11)[1]
        np.testing.assert_array_equal(a[0].values, b[0].values)


@pytest.fixture(scope="module")
def noisy():
    return simulate_cluster_scenario(np.random.default_rng(8), with_noise=True)


class TestClusterScenario:
    def test_centroids_in_their_boxes(self, noisy):
        sc = ClusterScenario()
        assert len(noisy.centroids) == 50
        for k, (t, r) in enumerate(noisy.centroids):
            (t0, r0), (t1, r1) = sc.dense if k < 30 else sc.sparse
            assert t0 <= t <= t1 and r0 <= r <= r1

    def test_points_inside_measurement_area(self, noisy):
        for p in noisy.peaks:
            assert 0 <= p.rim <= 1.45 and 0 <= p.retention <= 600

    def test_noise_singletons(self, noisy):
        labels = noisy.labels
        assert np.sum(labels >= 50) == 200
        noise_labels = labels[labels >= 50]
        assert len(set(noise_labels)) == 200
        clean = simulate_cluster_scenario(np.random.default_rng(8))
        assert len(noisy.peaks) - len(clean.peaks) == 200

    def test_member_counts(self, noisy):
        counts = np.bincount(noisy.labels[noisy.labels < 50])
        assert counts.min() >= 3 and counts.max() <= 10

    def test_uniform_clusters_stay_in_their_ellipse(self):
        sc = ClusterScenario()
        checked = 0
        for seed in range(5):
            s = simulate_cluster_scenario(np.random.default_rng(seed))
            for p in s.peaks:
                if s.shapes[p.truth_label] != "uniform":
                    continue
                mu_t, mu_r = s.centroids[p.truth_label]
                rho_r = mu_r * 0.02 + 1.0
                assert ((p.rim - mu_t) / sc.uniform_radius_t) ** 2 + ((p.retention - mu_r) / rho_r) ** 2 <= 1 + 1e-12
                checked += 1
        assert checked > 0

    def test_determinism(self):
        a = simulate_cluster_scenario(np.random.default_rng(3), with_noise=True)
        b = simulate_cluster_scenario(np.random.default_rng(3), with_noise=True)
        assert a.peaks == b.peaks and a.shapes == b.shapes
