import math

import numpy as np
import pytest

from armakit.erf import (
    ErfMap,
    LayerSpec1D,
    LinearNetSpec,
    WraparoundError,
    analytic_radius_arma,
    effective_filter_1d,
    empirical_erf_1d,
    empirical_erf_2d,
    erf_axis_variance,
    erf_radius,
    layer_moments,
    layer_variance_term,
)


def stack(layer, depth):
    return LinearNetSpec((layer,) * depth)


class TestLayerSpec:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            LayerSpec1D(2, 1, 0.0)
        with pytest.raises(ValueError):
            LayerSpec1D(3, 0, 0.0)
        with pytest.raises(ValueError):
            LayerSpec1D(3, 1, 1.0)
        with pytest.raises(ValueError):
            LayerSpec1D(3, 1, -0.1)

    def test_empty_network_rejected(self):
        with pytest.raises(ValueError):
            LinearNetSpec(())


class TestAnalyticRadius:
    def test_single_plain_layer(self):
        assert analytic_radius_arma(stack(LayerSpec1D(3, 1, 0.0), 1)) == pytest.approx(
            0.81650, abs=1e-5
        )

    def test_single_ar_layer(self):
        assert analytic_radius_arma(stack(LayerSpec1D(3, 1, 0.5), 1)) == pytest.approx(
            1.63299, abs=1e-5
        )

    def test_depth_scaling(self):
        radius = analytic_radius_arma(stack(LayerSpec1D(3, 2, 0.0), 4))
        assert radius == pytest.approx(3.26599, abs=1e-5)
        single = analytic_radius_arma(stack(LayerSpec1D(3, 2, 0.0), 1))
        assert radius == pytest.approx(2.0 * single)


class TestLayerMoments:
    def test_plain_layer_faulhaber_values(self):
        m1, m2 = layer_moments(LayerSpec1D(3, 1, 0.0))
        assert m1 == pytest.approx(1.0)
        assert m2 == pytest.approx(5.0 / 3.0)

    def test_ar_layer_values(self):
        m1, m2 = layer_moments(LayerSpec1D(3, 1, 0.5))
        assert m1 == pytest.approx(2.0)
        assert m2 == pytest.approx(6.66667, abs=1e-5)
        assert m2 - m1**2 == pytest.approx(2.66667, abs=1e-5)

    def test_variance_identity_on_coefficient_grid(self):
        # M2 - M1^2 must reproduce the closed-form radius term exactly
        for a in np.linspace(0.0, 0.99, 100):
            for d in (1, 2):
                layer = LayerSpec1D(3, d, float(a))
                m1, m2 = layer_moments(layer)
                want = layer_variance_term(layer)
                assert abs((m2 - m1**2) - want) <= 1e-12 * max(1.0, want)

    def test_moments_match_series_oracle(self):
        for a in (0.0, 0.3, 0.6, 0.9, 0.99):
            for d in (1, 2):
                layer = LayerSpec1D(3, d, a)
                taps = effective_filter_1d(layer, epsilon=1e-14)
                p = np.arange(taps.size)
                total = taps.sum()
                m1 = (p * taps).sum() / total
                m2 = (p**2 * taps).sum() / total
                want1, want2 = layer_moments(layer)
                assert m1 == pytest.approx(want1, rel=1e-6)
                assert m2 == pytest.approx(want2, rel=1e-6)


class TestEffectiveFilter:
    def test_no_ar_part_is_uniform(self):
        taps = effective_filter_1d(LayerSpec1D(3, 2, 0.0))
        assert np.allclose(taps, [1 / 3, 0, 1 / 3, 0, 1 / 3])

    def test_pure_geometric(self):
        taps = effective_filter_1d(LayerSpec1D(1, 1, 0.5), epsilon=1e-12)
        assert taps.size == 40
        assert np.allclose(taps, 0.5 ** np.arange(40) * 0.5)
        assert taps.sum() == pytest.approx(1.0, abs=1e-12 * 40)

    def test_variance_matches_radius_term(self):
        taps = effective_filter_1d(LayerSpec1D(3, 1, 0.5))
        p = np.arange(taps.size)
        var = (p**2 * taps).sum() / taps.sum() - ((p * taps).sum() / taps.sum()) ** 2
        assert var == pytest.approx(8.0 / 3.0, abs=1e-6)


class TestEmpirical1d:
    def test_single_plain_layer_uniform_reversed(self):
        m = empirical_erf_1d(stack(LayerSpec1D(3, 1, 0.0), 1))
        assert np.allclose(m.weights, [1 / 3, 1 / 3, 1 / 3])
        assert list(m.offsets(0)) == [-2, -1, 0]
        assert erf_axis_variance(m) == pytest.approx(2 / 3)

    def test_two_layers_triangular(self):
        m = empirical_erf_1d(stack(LayerSpec1D(3, 1, 0.0), 2))
        assert np.allclose(m.weights, np.array([1, 2, 3, 2, 1]) / 9.0)
        assert erf_axis_variance(m) == pytest.approx(4 / 3)

    def test_three_ar_layers_variance(self):
        m = empirical_erf_1d(stack(LayerSpec1D(3, 1, 0.5), 3))
        assert erf_axis_variance(m) == pytest.approx(8.0, rel=1e-3)

    def test_agreement_grid_with_analytic(self):
        for depth in (1, 2, 3):
            for d in (1, 2):
                for a in (0.0, 0.25, 0.5, 0.75):
                    spec = stack(LayerSpec1D(3, d, a), depth)
                    want = sum(layer_variance_term(l) for l in spec.layers)
                    got = erf_axis_variance(empirical_erf_1d(spec))
                    assert got == pytest.approx(want, rel=1e-3)


class TestRadiusForms:
    def test_delta_map(self):
        m = ErfMap(np.array([1.0]), origin=(0,))
        assert erf_radius(m) == 0.0
        assert erf_axis_variance(m) == 0.0

    def test_ring_distinguishes_radial_from_axis(self):
        # all mass at radius exactly 1: radial spread 0, axis variance 0.5
        weights = np.zeros((3, 3))
        weights[0, 1] = weights[2, 1] = weights[1, 0] = weights[1, 2] = 0.25
        m = ErfMap(weights, origin=(1, 1))
        assert erf_radius(m) == pytest.approx(0.0, abs=1e-12)
        assert erf_axis_variance(m, axis=0) == pytest.approx(0.5)
        assert erf_axis_variance(m, axis=1) == pytest.approx(0.5)

    def test_1d_uniform(self):
        m = ErfMap(np.full(3, 1 / 3), origin=(2,))
        assert erf_axis_variance(m) == pytest.approx(2 / 3)
        # one-sided mass: radial form coincides with the axis deviation
        assert erf_radius(m) == pytest.approx(math.sqrt(2 / 3))

    def test_normalization_enforced(self):
        with pytest.raises(ValueError):
            ErfMap(np.array([0.5, 0.4]), origin=(0,))
        with pytest.raises(ValueError):
            ErfMap(np.array([1.5, -0.5]), origin=(0,))


class TestEmpirical2d:
    def test_identity_network_is_delta(self):
        m = empirical_erf_2d(stack(LayerSpec1D(1, 1, 0.0), 1), grid=16)
        assert erf_radius(m) == pytest.approx(0.0, abs=1e-12)
        assert m.weights.max() == pytest.approx(1.0)

    def test_marginals_match_1d_composition(self):
        spec = stack(LayerSpec1D(3, 1, 0.5), 2)
        m2 = empirical_erf_2d(spec, grid=48)
        m1 = empirical_erf_1d(spec)
        want = erf_axis_variance(m1)
        assert erf_axis_variance(m2, axis=0) == pytest.approx(want, abs=1e-6)
        assert erf_axis_variance(m2, axis=1) == pytest.approx(want, abs=1e-6)

    def test_monotone_in_ar_coefficient(self):
        radii = []
        variances = []
        for a in (0.0, 0.25, 0.5, 0.75):
            m = empirical_erf_2d(stack(LayerSpec1D(3, 1, a), 6), grid=128)
            radii.append(erf_radius(m))
            variances.append(erf_axis_variance(m))
        assert all(x < y for x, y in zip(radii, radii[1:]))
        assert all(x < y for x, y in zip(variances, variances[1:]))

    def test_monotone_in_depth(self):
        radii = []
        for depth in (3, 6, 12):
            m = empirical_erf_2d(stack(LayerSpec1D(3, 1, 0.5), depth), grid=128)
            radii.append(erf_radius(m))
        assert all(x < y for x, y in zip(radii, radii[1:]))

    def test_wraparound_rejection(self):
        with pytest.raises(WraparoundError):
            empirical_erf_2d(stack(LayerSpec1D(3, 1, 0.9), 2), grid=32)

    def test_dilated_uniform_mode(self):
        spec = stack(LayerSpec1D(3, 2, 0.25), 2)
        m = empirical_erf_2d(spec, grid=64)
        want = erf_axis_variance(empirical_erf_1d(spec))
        assert erf_axis_variance(m) == pytest.approx(want, abs=1e-6)

    def test_xavier_mode_reproducible_and_normalized(self):
        spec = stack(LayerSpec1D(3, 1, 0.5), 2)
        m1 = empirical_erf_2d(spec, grid=32, channels=3, seed=9, kernel_mode="xavier")
        m2 = empirical_erf_2d(spec, grid=32, channels=3, seed=9, kernel_mode="xavier")
        assert np.array_equal(m1.weights, m2.weights)
        assert m1.weights.sum() == pytest.approx(1.0, abs=1e-9)
        different = empirical_erf_2d(spec, grid=32, channels=3, seed=10, kernel_mode="xavier")
        assert not np.allclose(m1.weights, different.weights)

    def test_xavier_mode_needs_seed(self):
        with pytest.raises(ValueError):
            empirical_erf_2d(stack(LayerSpec1D(3, 1, 0.0), 1), grid=16, kernel_mode="xavier")

    def test_uniform_mode_single_channel_only(self):
        with pytest.raises(ValueError):
            empirical_erf_2d(stack(LayerSpec1D(3, 1, 0.0), 1), grid=16, channels=2)


class TestGaussianLimit:
    def test_deep_composition_kurtosis(self):
        m = empirical_erf_1d(stack(LayerSpec1D(3, 1, 0.0), 32))
        p = m.offsets(0).astype(float)
        w = m.weights
        mean = (p * w).sum()
        var = ((p - mean) ** 2 * w).sum()
        fourth = ((p - mean) ** 4 * w).sum()
        excess = fourth / var**2 - 3.0
        assert abs(excess) < 0.05
