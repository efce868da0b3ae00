import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sobolis.densities import (
    ENDPOINT_EPS,
    BetaParams,
    Box,
    SubsetIndex,
    SupportError,
    beta_density,
    factorized_weight,
    independent_conditional,
    interpolate_density,
    joint_from_factors,
    normalize_density,
    product_density,
    uniform_density,
    weight,
)
from sobolis.models import GFunctionSpec, gfunction_moments
from sobolis.quadrature import integrate, tensor_gl

U1 = uniform_density(Box.unit(1))


def beta(a, b, lo=0.0, hi=1.0):
    return beta_density(BetaParams(a, b), lo, hi)


class TestBoxAndSubset:
    def test_box_rejects_degenerate(self):
        with pytest.raises(ValueError):
            Box([0.0], [0.0])

    def test_subset_parse_and_complement(self):
        u = SubsetIndex.parse("2, 1", 3)
        assert u.u == (1, 2)
        assert u.complement == (3,)
        np.testing.assert_array_equal(u.idx, [0, 1])

    def test_subset_rejects_empty_and_out_of_range(self):
        with pytest.raises(ValueError):
            SubsetIndex((), 3)
        with pytest.raises(ValueError):
            SubsetIndex((4,), 3)

    def test_split_assemble_roundtrip(self):
        u = SubsetIndex((1, 3), 4)
        x = np.random.default_rng(0).random((5, 4))
        np.testing.assert_array_equal(u.assemble(*u.split(x)), x)


class TestUniform:
    def test_unit_square(self):
        assert float(uniform_density(Box.unit(2)).pdf([0.3, 0.7])) == 1.0

    def test_reciprocal_volume(self):
        np.testing.assert_allclose(uniform_density(Box([0, 0], [2, 1])).pdf([[1.2, 0.4]]), 0.5)

    def test_outside_is_zero(self):
        assert float(uniform_density(Box.unit(2)).pdf([1.3, 0.5])) == 0.0


class TestBeta:
    def test_uniform_case(self):
        assert float(beta(1, 1).pdf(0.42)) == 1.0

    def test_beta22_mid(self):
        np.testing.assert_allclose(beta(2, 2).pdf(0.5), 1.5, rtol=1e-14)

    def test_rescaled(self):
        np.testing.assert_allclose(beta(2, 2, 0.0, 2.0).pdf(1.0), 0.75, rtol=1e-14)

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            BetaParams(0.0, 1.0)

    def test_endpoint_finite(self):
        d = beta(0.5, 0.5)
        vals = d.pdf(np.array([[0.0], [1.0]]))
        assert np.all(np.isfinite(vals)) and np.all(vals > 0)
        np.testing.assert_allclose(vals[0], d.pdf(ENDPOINT_EPS))

    def test_samples_avoid_endpoints(self):
        x = beta(0.3, 0.3).sample(np.random.default_rng(0), 50_000)
        assert np.all(x > 0) and np.all(x < 1)


class TestProduct:
    def test_product_of_uniforms(self):
        d = product_density([beta(1, 1), beta(1, 1)])
        np.testing.assert_array_equal(d.pdf(np.random.default_rng(0).random((10, 2))), 1.0)

    def test_marginal_product(self):
        np.testing.assert_allclose(product_density([beta(2, 2), beta(1, 1)]).pdf([0.5, 0.9]), 1.5, rtol=1e-14)

    def test_samples_in_box(self):
        x = product_density([beta(2, 2), beta(1, 1)]).sample(np.random.default_rng(1), 1000)
        assert x.shape == (1000, 2)
        assert np.all((x >= 0) & (x <= 1))

    def test_rejects_multidim_marginal(self):
        with pytest.raises(ValueError):
            product_density([uniform_density(Box.unit(2))])


class TestInterpolate:
    grid = np.linspace(0.005, 0.995, 100)[:, None]

    def test_endpoints_exact(self):
        p, q = U1, beta(2, 5)
        np.testing.assert_array_equal(interpolate_density(p, q, 0.0).pdf(self.grid), p.pdf(self.grid))
        np.testing.assert_array_equal(interpolate_density(p, q, 1.0).pdf(self.grid), q.pdf(self.grid))

    def test_midpoint(self):
        q = normalize_density(lambda x: 4.0 * x[..., 0], Box.unit(1))
        np.testing.assert_allclose(q.pdf(1.0), 2.0, rtol=1e-14)
        np.testing.assert_allclose(interpolate_density(U1, q, 0.5).pdf(1.0), 1.5, rtol=1e-14)

    def test_t_out_of_range(self):
        with pytest.raises(ValueError):
            interpolate_density(U1, U1, 1.5)

    def test_box_mismatch(self):
        with pytest.raises(ValueError):
            interpolate_density(U1, uniform_density(Box([0.0], [2.0])), 0.5)

    def test_mixture_sampling_mean(self):
        d = interpolate_density(beta(2, 8), beta(8, 2), 0.25)
        x = d.sample(np.random.default_rng(3), 100_000)[:, 0]
        assert abs(x.mean() - (0.75 * 0.2 + 0.25 * 0.8)) < 4 * x.std() / np.sqrt(x.size)


class TestNormalize:
    def test_constant(self):
        d = normalize_density(lambda x: np.full(x.shape[0], 2.0), Box.unit(1))
        assert d.constant == pytest.approx(2.0, rel=1e-14)
        np.testing.assert_allclose(d.pdf(np.linspace(0.1, 0.9, 5)), 1.0, rtol=1e-14)

    def test_gfunction_constant_is_eta(self):
        mo = gfunction_moments(GFunctionSpec.benchmark(3), (1, 2))
        d = normalize_density(lambda x: mo.m_u(x) ** 2, Box.unit(2), 64, [(0.5,), (0.5,)])
        np.testing.assert_allclose(d.constant, 91 / 81, rtol=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            normalize_density(lambda x: x[..., 0] - 0.5, Box.unit(1))

    def test_zero_integral_rejected(self):
        with pytest.raises(ValueError):
            normalize_density(lambda x: np.zeros(x.shape[0]), Box.unit(1))

    @pytest.mark.parametrize("dim", [1, 2])
    def test_sampler_matches_pdf(self, dim):
        d = normalize_density(lambda x: np.prod(1.0 + 3.0 * x**2, axis=-1), Box.unit(dim))
        x = d.sample(np.random.default_rng(4), 40_000)
        # E[x_1] = (1/2 + 3/4) / 2 = 5/8
        se = x[:, 0].std() / np.sqrt(x.shape[0])
        assert abs(x[:, 0].mean() - 0.625) < 4 * se


class TestNormalization:
    @pytest.mark.parametrize(
        "dens,bp",
        [
            (uniform_density(Box([0, -1, 2], [1, 1, 3])), None),
            (product_density([beta(2, 2), beta(2, 3.0), beta(1, 1)]), None),
            (beta(2, 2, -1.0, 3.0), None),
            (interpolate_density(uniform_density(Box.unit(2)), product_density([beta(2, 3), beta(4, 2)]), 0.3), None),
        ],
    )
    def test_integrates_to_one(self, dens, bp):
        val = integrate(dens.pdf, tensor_gl(dens.box, 32, bp))
        np.testing.assert_allclose(val, 1.0, atol=1e-8)

    @pytest.mark.parametrize("a,b", [(0.5, 0.5), (1.5, 3.0), (0.7, 2.5)])
    def test_fractional_beta_integrates_to_one(self, a, b):
        # Endpoint power singularities defeat plain GL; adaptive quadrature is the check.
        from scipy.integrate import quad

        d = beta(a, b, 1.0, 3.0)
        val = quad(lambda t: float(d.pdf(t)), 1.0, 3.0, limit=200)[0]
        np.testing.assert_allclose(val, 1.0, atol=1e-8)


class TestWeight:
    def test_identical(self):
        x = np.random.default_rng(0).random((20, 1))
        np.testing.assert_array_equal(weight(U1, U1, x), 1.0)

    def test_beta22(self):
        np.testing.assert_allclose(weight(U1, beta(2, 2), 0.5), 1 / 1.5, rtol=1e-14)

    def test_support_violation(self):
        q = uniform_density(Box([0.0], [0.5]))
        with pytest.raises(SupportError):
            weight(U1, q, 0.75)

    def test_zero_where_p_vanishes(self):
        p = uniform_density(Box([0.0], [0.5]))
        assert float(weight(p, U1, 0.75)) == 0.0

    @pytest.mark.parametrize("q", [beta(2, 2), beta(0.8, 0.8), beta(2, 1)])
    def test_weight_mean_is_one(self, q):
        x = q.sample(np.random.default_rng(5), 100_000)
        w = weight(U1, q, x)
        assert abs(w.mean() - 1.0) <= 4 * w.std(ddof=1) / np.sqrt(w.size)


class TestFactorizedWeight:
    def test_no_change(self):
        p = product_density([U1, U1, U1])
        u = SubsetIndex((1,), 3)
        fw = factorized_weight(p, p.marginal(u.idx), independent_conditional(p.marginal(u.bar_idx)), u, [[0.2, 0.4, 0.9]])
        np.testing.assert_array_equal([fw.w_u[0], fw.w_bar_u[0], fw.w_total[0]], [1.0, 1.0, 1.0])

    def test_marginal_only(self):
        p = product_density([U1])
        u = SubsetIndex((1,), 1)
        fw = factorized_weight(p, beta(2, 2), None, u, [[0.5]])
        np.testing.assert_allclose([fw.w_u[0], fw.w_bar_u[0], fw.w_total[0]], [2 / 3, 1.0, 2 / 3], rtol=1e-14)

    def test_full_u_bar_is_one(self):
        p = product_density([U1, U1])
        u = SubsetIndex((1, 2), 2)
        fw = factorized_weight(p, product_density([beta(2, 2), beta(3, 1)]), None, u, np.random.default_rng(0).random((8, 2)))
        np.testing.assert_array_equal(fw.w_bar_u, 1.0)

    def test_missing_conditional(self):
        p = product_density([U1, U1])
        with pytest.raises(ValueError):
            factorized_weight(p, U1, None, SubsetIndex((1,), 2), [[0.3, 0.3]])

    @settings(max_examples=30, deadline=None)
    @given(
        a=st.floats(0.5, 4.0), b=st.floats(0.5, 4.0), c=st.floats(0.5, 4.0), d=st.floats(0.5, 4.0),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_factorization_consistency(self, a, b, c, d, seed):
        p = product_density([U1, beta(1.5, 2.0), U1])
        u = SubsetIndex((1, 3), 3)
        q_u = product_density([beta(a, b), beta(c, d)])
        q_cond = independent_conditional(beta(d, a))
        q = joint_from_factors(q_u, q_cond, u)
        x = np.clip(np.random.default_rng(seed).random((50, 3)), 0.01, 0.99)
        fw = factorized_weight(p, q_u, q_cond, u, x)
        np.testing.assert_allclose(fw.w_total, weight(p, q, x), rtol=1e-12)
        np.testing.assert_array_equal(fw.w_total, fw.w_u * fw.w_bar_u)
