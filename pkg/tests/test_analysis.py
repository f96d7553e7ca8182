import math

import numpy as np
import pytest
import scipy.special
import scipy.stats

from sinefield import analysis, data
from sinefield.errors import InvalidInputError, OutOfRangeError, ResourceError, ShapeError
from sinefield.init import init_standard, init_weight_scaled
from sinefield.model import SnfParams, forward, per_example_grad, predict
from sinefield.numcore import Prng

W0 = 1.875
DIMS5 = [2, 64, 64, 64, 64, 1]


@pytest.fixture(scope="module")
def image():
    return data.make_image_dataset(data.bundled_image(), 2)


def scalar_net(*ws, omega=1.0):
    return SnfParams([(np.array([[w]], float), np.zeros(1)) for w in ws], omega, omega)


class TestSpectrum:
    def test_constant_net(self):
        p = init_standard([1, 8, 8, 1], seed=0)
        for W, b in p.layers:
            W[:] = 0
        res = analysis.model_spectrum_1d(p, 256)
        assert np.allclose(res.magnitudes, 0, atol=1e-15)
        assert res.centroid == pytest.approx(0.0, abs=1e-12)

    def test_single_tone(self):
        omega0 = 2 * math.pi * 5.0  # five cycles per unit
        res = analysis.model_spectrum_1d(scalar_net(1.0, 1.0, omega=omega0), 512)
        peak = res.frequencies[np.argmax(res.magnitudes)]
        assert abs(peak - omega0 / (2 * math.pi)) <= 0.5
        assert res.frequencies.size == 257 and np.all(res.magnitudes >= 0)

    def test_matches_numpy_fft(self):
        p = init_weight_scaled([1, 16, 16, 1], 2.0, seed=3)
        res = analysis.model_spectrum_1d(p, 300)
        x = -1 + 2 * np.arange(300) / 300
        y = predict(p, x[None, :])[0]
        ref = np.abs(np.fft.fft(y - y.mean()))[:151]
        assert np.allclose(res.magnitudes, ref, atol=1e-9)

    def test_rejects_2d(self):
        with pytest.raises(InvalidInputError):
            analysis.model_spectrum_1d(init_standard([2, 4, 1]), 64)

    def test_centroid_grows_with_alpha(self):
        dims = [1, 64, 64, 64, 64, 1]
        c = {
            a: np.mean([analysis.model_spectrum_1d(init_weight_scaled(dims, a, seed=s), 1024).centroid for s in range(20)])
            for a in (1.0, 3.0)
        }
        assert c[3.0] > c[1.0]

    def test_csv(self):
        res = analysis.SpectrumResult(np.array([0.0, 0.5]), np.array([0.0, 2.0]), 0.5)
        assert res.to_csv() == "bin,frequency,magnitude\n0,0,0\n1,0.5,2\n"


class TestBands:
    def test_constant_image(self):
        bp = analysis.band_power_2d(np.full((8, 8), 0.3), 4)
        assert bp.sums[0] == pytest.approx(64 * 0.3)
        assert np.allclose(bp.sums[1:], 0, atol=1e-12)

    @pytest.mark.parametrize("r", [1, 3, 6])
    def test_horizontal_tone(self, r):
        n = 16
        x = np.arange(n)
        img = np.tile(np.cos(2 * np.pi * r * x / n), (n, 1))
        r_max = int(math.floor(math.sqrt(2) * (n // 2)))
        bp = analysis.band_power_2d(img, r_max + 1)
        assert np.argmax(bp.sums) == r

    def test_partition_complete(self):
        img = np.random.default_rng(0).random((12, 12))
        bp = analysis.band_power_2d(img, 5)
        total = np.abs(np.fft.fft2(img)).sum()
        assert bp.sums.sum() == pytest.approx(total, rel=1e-9)
        assert bp.counts.sum() == 144

    def test_non_square(self):
        with pytest.raises(InvalidInputError):
            analysis.band_power_2d(np.zeros((4, 5)), 2)


class TestJacobiAnger:
    def test_example_value(self):
        c = analysis.jacobi_anger_expand(1.0, 0.5, 1.0, 7)
        v = analysis.jacobi_anger_eval(c, 1.0, math.pi / 2)
        assert v == pytest.approx(math.sin(0.5 * math.sin(math.pi / 2)), abs=1e-5)
        assert v == pytest.approx(0.4794255, abs=1e-5)

    def test_origin_is_zero(self):
        c = analysis.jacobi_anger_expand(0.7, 1.2, -0.4, 15)
        assert analysis.jacobi_anger_eval(c, 0.7, 0.0) == 0.0

    def test_coefficients(self):
        c = analysis.jacobi_anger_expand(1.0, 1.3, 0.5, 9)
        assert [l for l, _ in c] == [1, 3, 5, 7, 9]
        assert np.allclose([v for _, v in c], [2 * 0.5 * scipy.special.jv(l, 1.3) for l in (1, 3, 5, 7, 9)], atol=1e-14)

    @pytest.mark.parametrize("w2", [0.1, 0.5, 1.0, 1.5])
    def test_coefficients_decay(self, w2):
        vals = [abs(v) for _, v in analysis.jacobi_anger_expand(1.0, w2, 1.0, 15)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_even_lmax(self):
        with pytest.raises(InvalidInputError):
            analysis.jacobi_anger_expand(1.0, 0.5, 1.0, 8)

    def test_matches_network(self):
        p = analysis.jacobi_anger_network(0.8, 1.1, -0.6)
        x = np.linspace(-1, 1, 41)
        series = analysis.jacobi_anger_eval(analysis.jacobi_anger_expand(0.8, 1.1, -0.6, 31), 0.8, x)
        assert np.max(np.abs(series - predict(p, x[None, :])[0])) <= 1e-12


class TestBesselBound:
    def test_unit_example(self):
        b = analysis.bessel_bound_check(1.0, 1)
        assert b.ratio == pytest.approx(0.044457, abs=1e-6)
        assert b.lower == pytest.approx(0.0416667, abs=1e-7)
        assert b.upper == pytest.approx(0.0666667, abs=1e-7)
        assert b.within

    def test_small_argument(self):
        b = analysis.bessel_bound_check(0.1, 1)
        assert b.lower == pytest.approx(4.1667e-4, rel=1e-4)
        assert b.upper == pytest.approx(6.6667e-4, rel=1e-4)
        assert b.lower < b.ratio < b.upper

    def test_alpha_squared_scaling(self):
        q = analysis.bessel_bound_check(0.02, 1).ratio / analysis.bessel_bound_check(0.01, 1).ratio
        assert 3.9 <= q <= 4.1

    @pytest.mark.parametrize("w2", [0.0, -0.3, math.pi / 2, 2.0])
    def test_out_of_range(self, w2):
        with pytest.raises(OutOfRangeError):
            analysis.bessel_bound_check(w2, 1)


class TestDistribution:
    def test_arcsine_cdf(self):
        assert analysis.arcsine_cdf(0.0) == pytest.approx(0.5)
        assert analysis.arcsine_cdf(-1.0) == 0.0 and analysis.arcsine_cdf(1.0) == 1.0
        assert analysis.arcsine_cdf(0.3) == pytest.approx(scipy.stats.arcsine.cdf(0.65))

    def test_ks_matches_scipy(self):
        s = np.sin(np.random.default_rng(0).uniform(0, 2 * np.pi, 3000))
        ref = scipy.stats.kstest((s + 1) / 2, scipy.stats.arcsine.cdf).statistic
        assert analysis.ks_distance(s) == pytest.approx(ref, abs=1e-12)

    def test_ks_detects_mismatch(self):
        u = np.random.default_rng(1).uniform(-1, 1, 5000)
        assert analysis.ks_distance(u) > 0.1

    def test_too_few_samples(self):
        with pytest.raises(InvalidInputError):
            analysis.activation_dist_check(init_standard([1, 8, 8, 1]), 9999, Prng(0))

    def test_report_layers(self):
        p = init_weight_scaled([3, 64, 64, 64, 64, 1], 2.0, seed=0)
        rep = analysis.activation_dist_check(p, 10_000, Prng(1))
        assert rep.layers == [2, 3, 4] and rep.samples == 10_000
        assert all(0 <= k <= 1 for k in rep.per_layer_ks)
        assert rep.to_csv().splitlines()[0] == "layer,ks,variance"


    def test_alpha_one_arcsine_over_init_draws(self):
        # one width-256 net at alpha = 1 mixes only 256 bias-shifted sine laws;
        # pooling across fresh inits recovers the arcsine law
        rng = np.random.default_rng(0)
        pools = {2: [], 3: [], 4: []}
        cols = np.arange(5000)
        for s in range(20):
            p = init_weight_scaled([2, 256, 256, 256, 256, 1], 1.0, seed=100 + s)
            acts = forward(p, rng.uniform(-1, 1, (2, 5000))).activations
            for i in pools:
                pools[i].append(acts[i - 1][cols % 256, cols])
        assert max(analysis.ks_distance(np.concatenate(v)) for v in pools.values()) <= 0.02


class TestEntk:
    def test_origin_only_biases_contribute(self):
        # order is W1, b1, W2, b2: sin(0) and x = 0 kill both weight terms
        G = per_example_grad(scalar_net(1.0, 1.0), [0.0])
        assert np.array_equal(G, [0.0, 1.0, 0.0, 1.0])
        assert analysis.entk(scalar_net(1.0, 1.0), [[0.0]])[0, 0] == 2.0

    @pytest.mark.filterwarnings("ignore:coordinates outside")
    def test_hand_gradient(self):
        p = SnfParams([(np.array([[1.0]]), np.zeros(1)), (np.array([[1.0]]), np.zeros(1))], 1.0, 1.0)
        K = analysis.entk(p, [[math.pi / 2]])
        # bias gradients add cos(pi/2)^2 = 0 and 1
        assert K[0, 0] == pytest.approx(2.0)
        G = per_example_grad(p, [math.pi / 2])
        assert G[0] == pytest.approx(0.0, abs=1e-15) and G[2] == pytest.approx(1.0)

    def test_gram_structure(self):
        p = init_weight_scaled([2, 12, 12, 1], 2.0, seed=5)
        X = np.random.default_rng(0).uniform(-1, 1, (2, 30))
        K = analysis.entk(p, X)
        assert np.max(np.abs(K - K.T)) <= 1e-12 * np.abs(K).max()
        assert np.all(np.diag(K) >= 0)
        assert np.linalg.eigvalsh(K).min() >= -1e-10 * np.abs(K).max()

    def test_rows_are_per_example_gradients(self):
        p = init_standard([2, 6, 6, 1], W0, 30.0, seed=2)
        X = np.random.default_rng(3).uniform(-1, 1, (2, 9))
        G = analysis.entk_jacobian(p, X)
        for j in range(9):
            assert G[j].tobytes() == per_example_grad(p, X[:, j]).tobytes()
        K = analysis.entk(p, X)
        assert K.tobytes() == (G @ G.T).tobytes()
        dots = np.array([[np.dot(G[i], G[j]) for j in range(9)] for i in range(9)])
        assert np.allclose(K, dots, rtol=1e-12, atol=0)

    def test_size_guard(self):
        with pytest.raises(ResourceError):
            analysis.entk(init_standard([1, 2, 1]), np.zeros((1, 4097)))


class TestConditionAndAlignment:
    def test_condition_examples(self):
        assert analysis.condition_number([10, 8, 6, 4, 2, 1, 0.8, 0.6, 0.4, 0.2], 5) == pytest.approx(10.0)
        assert analysis.condition_number([3.0] * 6, 3) == 1.0
        eig = [5.0, 2.0, -0.5, 1.0]
        assert analysis.condition_number(eig, 1) == pytest.approx(5.0 / 0.5)

    def test_condition_too_few(self):
        with pytest.raises(InvalidInputError):
            analysis.condition_number([1, 2, 3], 2)

    def test_alignment_examples(self):
        eigs = np.array([4.0, 2.0, 1.0])
        V = np.eye(3)
        full = analysis.alignment_curve(eigs, V, np.array([1.0, 2.0, 3.0]), [0.0])
        assert full[0][1] == pytest.approx(1.0, abs=1e-12)
        top = analysis.alignment_curve(eigs, V, np.array([1.0, 0, 0]), [0.999])
        assert top[0][1] == pytest.approx(1.0)
        orth = analysis.alignment_curve(eigs, V, np.array([0, 1.0, 1.0]), [1.0])
        assert orth[0][1] == 0.0

    def test_alignment_zero_residual(self):
        with pytest.raises(InvalidInputError):
            analysis.alignment_curve(np.ones(2), np.eye(2), np.zeros(2))

    def test_alignment_shapes(self):
        with pytest.raises(ShapeError):
            analysis.alignment_curve(np.ones(2), np.eye(2), np.ones(3))

    def test_default_thresholds(self):
        t = analysis.default_thresholds()
        assert t.size == 20 and t[0] == pytest.approx(1e-6) and t[-1] == 1.0

    def test_kernel_report(self, image):
        small = data.make_image_dataset(data.bundled_image()[:16, :16], 2)
        rep = analysis.kernel_report(init_standard([2, 16, 16, 1], W0, 30.0, 0), small, 5, [0.0, 1e-3, 1e-1, 1.0])
        E = [e for _, e in rep.alignment]
        assert E[0] == pytest.approx(1.0, abs=1e-9)
        assert all(b <= a + 1e-15 for a, b in zip(E, E[1:]))
        lines = rep.to_csv().splitlines()
        assert lines[0] == "index,eigenvalue" and len(lines) == 64 + 2
        assert lines[-1].startswith("condition_number,")
        assert rep.alignment_csv().splitlines()[0] == "threshold,energy"


class TestGradientProbes:
    def test_zero_residual(self, image):
        p = init_standard(DIMS5, W0, 30.0, 0)
        exact = data.SignalDataset(image.coords, predict(p, image.coords), image.train_idx, image.test_idx)
        assert analysis.layerwise_grad_norms(p, exact) == [0.0] * 5

    def _mse_ratios(self, image):
        r = np.zeros(5)
        for s in range(20):
            n1 = np.array(analysis.layerwise_grad_norms(init_weight_scaled(DIMS5, 1.0, W0, 30.0, s), image))
            n2 = np.array(analysis.layerwise_grad_norms(init_weight_scaled(DIMS5, 2.0, W0, 30.0, s), image))
            r += n2 / n1
        return r / 20

    def test_mse_ratio_ordering_hidden_layers(self, image):
        r = self._mse_ratios(image)
        assert np.all(np.diff(r[:4]) < 0), r
        assert 0.2 <= r[-1] <= 5, r

    @pytest.mark.xfail(strict=True, reason="layers l-1 and l both carry an unscaled factor; see decisions ledger")
    def test_mse_ratio_strictly_decreasing_all_layers(self, image):
        r = self._mse_ratios(image)
        assert np.all(np.diff(r) < 0), r

    def test_per_example_ratio_powers_of_alpha(self, image):
        X = image.train_coords
        r = np.zeros(5)
        for s in range(20):
            n1 = np.array(analysis.layerwise_output_grad_norms(init_weight_scaled(DIMS5, 1.0, W0, 30.0, s), X))
            n2 = np.array(analysis.layerwise_output_grad_norms(init_weight_scaled(DIMS5, 2.0, W0, 30.0, s), X))
            r += n2 / n1
        r /= 20
        # layer k < l-1 grows as alpha^(l-1-k); the last two layers are unscaled
        assert np.allclose(r, [8, 4, 2, 1, 1], rtol=0.1), r
