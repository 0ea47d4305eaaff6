"""Density, CDF, responsibility and sampling primitives.

Derived expectations are frozen from independent quadrature oracles
(scipy.integrate.quad on the closed-form component densities), not from the
implementation under test.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import quad
from scipy.stats import cauchy as sp_cauchy
from scipy.stats import norm as sp_norm

from tvmix import (
    CauchyParams,
    DataError,
    GaussianParams,
    MixtureParams,
    cauchy_pdf,
    gaussian_pdf,
    mixture_cdf,
    mixture_logpdf,
    mixture_pdf,
    responsibilities,
    sample_mixture,
)


class TestParamValidation:
    def test_sigma_must_be_positive(self):
        with pytest.raises(DataError):
            GaussianParams(0.0, 0.0)
        with pytest.raises(DataError):
            GaussianParams(0.0, -1.0)

    def test_delta_must_be_positive(self):
        with pytest.raises(DataError):
            CauchyParams(0.0, -0.5)

    def test_alpha_within_unit_interval(self):
        g, c = GaussianParams(0, 1), CauchyParams(0, 1)
        with pytest.raises(DataError):
            MixtureParams(g, c, 1.5)
        with pytest.raises(DataError):
            MixtureParams(g, c, -0.1)

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            GaussianParams(np.nan, 1.0)
        with pytest.raises(DataError):
            gaussian_pdf(np.inf, GaussianParams(0, 1))


class TestGaussianPdf:
    def test_standard_normal_mode(self):
        assert_allclose(gaussian_pdf(0.0, GaussianParams(0, 1)),
                        1.0 / np.sqrt(2 * np.pi), rtol=1e-12)

    def test_mode_value_depends_only_on_sigma(self):
        for mu in (-3.0, 0.0, 7.5):
            assert_allclose(gaussian_pdf(mu, GaussianParams(mu, 2.0)),
                            1.0 / (2.0 * np.sqrt(2 * np.pi)), rtol=1e-12)

    def test_integrates_to_one(self):
        total, _ = quad(lambda y: gaussian_pdf(y, GaussianParams(0, 1)),
                        -30, 30)
        assert_allclose(total, 1.0, atol=1e-9)


class TestCauchyPdf:
    def test_standard_mode(self):
        assert_allclose(cauchy_pdf(0.0, CauchyParams(0, 1)), 1.0 / np.pi,
                        rtol=1e-12)

    def test_half_mode_at_one_scale_unit(self):
        assert_allclose(cauchy_pdf(1.0, CauchyParams(0, 1)),
                        1.0 / (2 * np.pi), rtol=1e-12)

    def test_integrates_to_one_slow_tails(self):
        p = CauchyParams(0, 1)
        total = sum(quad(lambda y: cauchy_pdf(y, p), a, b, limit=300)[0]
                    for a, b in ((-1e6, -10), (-10, 10), (10, 1e6)))
        assert_allclose(total, 1.0, atol=1e-3)


class TestMixturePdf:
    def test_degenerates_to_gaussian(self, std_mixture):
        p = MixtureParams(std_mixture.gaussian, std_mixture.cauchy, 1.0)
        assert_allclose(mixture_pdf(0.0, p), 1.0 / np.sqrt(2 * np.pi),
                        rtol=1e-12)

    def test_degenerates_to_cauchy(self, std_mixture):
        p = MixtureParams(std_mixture.gaussian, std_mixture.cauchy, 0.0)
        assert_allclose(mixture_pdf(0.0, p), 1.0 / np.pi, rtol=1e-12)

    def test_even_blend_of_modes(self, std_mixture):
        expected = 0.5 / np.sqrt(2 * np.pi) + 0.5 / np.pi
        assert_allclose(mixture_pdf(0.0, std_mixture), expected, rtol=1e-12)

    def test_logpdf_consistent_with_pdf(self, std_mixture, rng):
        y = rng.standard_cauchy(100)
        pdf = mixture_pdf(y, std_mixture)
        mask = pdf > 1e-300
        assert_allclose(mixture_logpdf(y, std_mixture)[mask],
                        np.log(pdf[mask]), atol=1e-12)

    @pytest.mark.parametrize("sigma", [0.1, 1.0, 10.0])
    @pytest.mark.parametrize("delta", [0.1, 1.0, 10.0])
    def test_normalization_across_scales(self, sigma, delta):
        p = MixtureParams(GaussianParams(0, sigma), CauchyParams(0, delta), 0.5)
        band = 20 * max(sigma, delta)
        cuts = [band]
        while cuts[-1] < 1e6:
            cuts.append(min(cuts[-1] * 10, 1e6))
        edges = [-c for c in reversed(cuts)] + cuts
        total = sum(quad(lambda y: mixture_pdf(y, p), a, b, limit=300)[0]
                    for a, b in zip(edges[:-1], edges[1:]))
        assert_allclose(total, 1.0, atol=1e-3)

    def test_positive_everywhere(self, std_mixture):
        y = np.array([-1e8, -50.0, 0.0, 50.0, 1e8])
        assert np.all(mixture_pdf(y, std_mixture) > 0)
        assert np.all(np.isfinite(mixture_logpdf(y, std_mixture)))


class TestMixtureCdf:
    def test_half_at_common_center(self):
        for alpha in (0.0, 0.3, 1.0):
            p = MixtureParams(GaussianParams(2.0, 1.0), CauchyParams(2.0, 1.0),
                              alpha)
            assert_allclose(mixture_cdf(2.0, p), 0.5, atol=1e-12)

    def test_limits(self, std_mixture):
        assert_allclose(mixture_cdf(1e12, std_mixture), 1.0, atol=1e-9)
        assert_allclose(mixture_cdf(-1e12, std_mixture), 0.0, atol=1e-9)

    def test_value_against_quadrature_oracle(self, std_mixture):
        # quad of the mixture pdf over (-inf, 1]; frozen oracle value
        assert_allclose(mixture_cdf(1.0, std_mixture), 0.7956723730342707,
                        atol=1e-4)

    @given(st.floats(-50, 50), st.floats(-50, 50))
    @settings(max_examples=50, deadline=None)
    def test_monotone(self, a, b):
        p = MixtureParams(GaussianParams(0.2, 1.3), CauchyParams(-0.4, 0.8), 0.6)
        lo, hi = min(a, b), max(a, b)
        assert mixture_cdf(lo, p) <= mixture_cdf(hi, p)


class TestResponsibilities:
    def test_all_gaussian_when_alpha_one(self, rng):
        p = MixtureParams(GaussianParams(0, 1), CauchyParams(0, 1), 1.0)
        out = responsibilities(rng.standard_normal(50), p)
        assert_allclose(out, 1.0)

    def test_all_cauchy_when_alpha_zero(self, rng):
        p = MixtureParams(GaussianParams(0, 1), CauchyParams(0, 1), 0.0)
        assert_allclose(responsibilities(rng.standard_normal(50), p), 0.0)

    def test_even_blend_value(self, std_mixture):
        # direct density-ratio evaluation
        assert_allclose(responsibilities(np.array([0.0]), std_mixture),
                        0.5562092371233439, rtol=1e-10)

    def test_matches_direct_ratio_where_it_does_not_underflow(self, rng):
        p = MixtureParams(GaussianParams(0.3, 1.2), CauchyParams(-0.5, 0.7), 0.7)
        y = rng.standard_normal(500) * 3
        num = p.alpha * sp_norm.pdf(y, 0.3, 1.2)
        den = num + (1 - p.alpha) * sp_cauchy.pdf(y, -0.5, 0.7)
        safe = den > 1e-280
        assert_allclose(responsibilities(y, p)[safe], (num / den)[safe],
                        atol=1e-12)

    def test_survives_extreme_tails(self, std_mixture):
        out = responsibilities(np.array([-1e9, 1e9]), std_mixture)
        assert np.all(np.isfinite(out))
        assert_allclose(out, 0.0, atol=1e-300)  # Cauchy owns the far tails


class TestSampleMixture:
    def test_deterministic_count_splits_exactly(self, table1_truth):
        _, labels = sample_mixture(100, table1_truth, seed=42,
                                   return_labels=True)
        assert labels.sum() == 90

    def test_all_cauchy_at_alpha_zero(self):
        p = MixtureParams(GaussianParams(0, 1), CauchyParams(0, 1), 0.0)
        for scheme in ("deterministic-count", "bernoulli"):
            _, labels = sample_mixture(50, p, seed=0, scheme=scheme,
                                       return_labels=True)
            assert labels.sum() == 0

    def test_symmetric_median_near_zero(self, std_mixture):
        y = sample_mixture(10000, std_mixture, seed=7)
        assert abs(np.median(y)) < 0.05

    def test_seed_reproducibility(self, table1_truth):
        a = sample_mixture(200, table1_truth, seed=99)
        b = sample_mixture(200, table1_truth, seed=99)
        assert np.array_equal(a, b)

    def test_unknown_scheme_rejected(self, std_mixture):
        with pytest.raises(DataError):
            sample_mixture(10, std_mixture, seed=0, scheme="mystery")

    @given(st.integers(1, 500), st.floats(0.0, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_count_scheme_rounds_half_to_even(self, n, alpha):
        p = MixtureParams(GaussianParams(0, 1), CauchyParams(0, 1), alpha)
        _, labels = sample_mixture(n, p, seed=3, return_labels=True)
        assert labels.sum() == int(np.rint(alpha * n))
