import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sobolis.densities import BetaParams, Box, SubsetIndex, beta_density, product_density, uniform_density
from sobolis.models import (
    GFunctionSpec,
    Model,
    factor_fourth_moment,
    factor_second_moment,
    gfunction_eta,
    gfunction_eta_under,
    gfunction_eval,
    gfunction_factor,
    gfunction_model,
    gfunction_moments,
    gfunction_variance,
    synthetic_dataset,
)
from sobolis.quadrature import integrate, tensor_gl

SPEC = GFunctionSpec.benchmark(3)
U = uniform_density(Box.unit(1))
P3 = product_density([U, U, U])


def split(d):
    return [(0.5,)] * d


class TestGFunctionEval:
    def test_center(self):
        np.testing.assert_allclose(gfunction_eval(SPEC, [0.5, 0.5, 0.5]), 0.25, rtol=1e-15)

    def test_corner(self):
        np.testing.assert_allclose(gfunction_eval(SPEC, [0.0, 0.0, 0.0]), 2.5, rtol=1e-15)

    @pytest.mark.parametrize("x", [(0.25, 0.75, 0.25), (0.75, 0.75, 0.75), (0.25, 0.25, 0.75)])
    def test_unit_factor_points(self, x):
        spec = GFunctionSpec((0.0, 7.5, 99.0))
        np.testing.assert_allclose(gfunction_eval(spec, x), 1.0, rtol=1e-15)

    def test_out_of_cube(self):
        with pytest.raises(ValueError):
            gfunction_eval(SPEC, [0.5, 1.2, 0.5])

    def test_negative_coefficient(self):
        with pytest.raises(ValueError):
            GFunctionSpec((1.0, -0.5))


class TestFactorMoments:
    @pytest.mark.parametrize("a", [0.0, 1.0, 2.0, 3.0, 9.0])
    def test_unit_mean(self, a):
        rule = tensor_gl(Box.unit(1), 32, split(1))
        np.testing.assert_allclose(integrate(lambda x: gfunction_factor(a, x[:, 0]), rule), 1.0, atol=1e-10)

    @pytest.mark.parametrize("a", [0.0, 1.0, 2.0, 3.0])
    def test_second_and_fourth(self, a):
        rule = tensor_gl(Box.unit(1), 32, split(1))
        np.testing.assert_allclose(integrate(lambda x: gfunction_factor(a, x[:, 0]) ** 2, rule), factor_second_moment(a), rtol=1e-13)
        np.testing.assert_allclose(integrate(lambda x: gfunction_factor(a, x[:, 0]) ** 4, rule), factor_fourth_moment(a), rtol=1e-13)

    def test_a3_constant_is_49_over_48(self):
        rule = tensor_gl(Box.unit(1), 64, split(1))
        np.testing.assert_allclose(integrate(lambda x: ((np.abs(4 * x[:, 0] - 2) + 3) / 4) ** 2, rule), 49 / 48, rtol=1e-14)


class TestMoments:
    def test_m_at_center(self):
        mo = gfunction_moments(SPEC, (1, 2))
        np.testing.assert_allclose(mo.m_u(np.array([0.5, 0.5])), 1 / 3, rtol=1e-15)

    def test_phi_sq_ratio_constant(self):
        mo = gfunction_moments(SPEC, (1, 2))
        x = np.random.default_rng(0).random((200, 3))
        np.testing.assert_allclose(mo.phi_sq(x) / mo.m_u(x[:, :2]) ** 2, 49 / 48, rtol=1e-14)

    def test_complement_override(self):
        mo = gfunction_moments(SPEC, (1, 2), complement_factor=99 / 96)
        x = np.random.default_rng(1).random((50, 3))
        np.testing.assert_allclose(mo.phi_sq(x) / mo.m_u(x[:, :2]) ** 2, 99 / 96, rtol=1e-14)

    def test_full_set_phi_sq_is_f_squared(self):
        mo = gfunction_moments(SPEC, (1, 2, 3))
        x = np.random.default_rng(2).random((50, 3))
        np.testing.assert_array_equal(mo.phi_sq(x), gfunction_eval(SPEC, x) ** 2)
        assert mo.deterministic

    def test_deterministic_mode(self):
        mo = gfunction_moments(SPEC, (1, 2), deterministic=True)
        x = np.random.default_rng(3).random((50, 3))
        np.testing.assert_allclose(mo.phi(x), gfunction_eval(SPEC, x), rtol=1e-15)
        with pytest.raises(ValueError):
            gfunction_moments(SPEC, (1, 2), deterministic=True, complement_factor=1.0)

    def test_empty_u(self):
        with pytest.raises(ValueError):
            gfunction_moments(SPEC, ())

    def test_tower_property(self):
        mo = gfunction_moments(SPEC, (1, 2))
        lhs = integrate(lambda x: mo.m_u(x) ** 2, tensor_gl(Box.unit(2), 64, split(2)))
        rhs = integrate(lambda x: gfunction_eval(SPEC, x) * mo.m_u(x[:, :2]), tensor_gl(Box.unit(3), 32, split(3)))
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)


class TestEta:
    def test_eta_12(self):
        assert gfunction_eta(SPEC, (1, 2)) == pytest.approx(91 / 81, rel=1e-15)
        rule = tensor_gl(Box.unit(2), 128, split(2))
        mo = gfunction_moments(SPEC, (1, 2))
        np.testing.assert_allclose(integrate(lambda x: mo.m_u(x) ** 2, rule), 91 / 81, atol=1e-10)

    def test_eta_1(self):
        assert gfunction_eta(SPEC, (1,)) == pytest.approx(13 / 12, rel=1e-15)

    def test_large_a_limit(self):
        assert gfunction_eta(GFunctionSpec((1e8, 1e8)), (1, 2)) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(a=st.lists(st.floats(0.0, 20.0), min_size=4, max_size=4), split_at=st.integers(1, 3))
    def test_product_structure(self, a, split_at):
        spec = GFunctionSpec(tuple(a))
        u, v = tuple(range(1, split_at + 1)), tuple(range(split_at + 1, 5))
        np.testing.assert_allclose(gfunction_eta(spec, u + v), gfunction_eta(spec, u) * gfunction_eta(spec, v), rtol=1e-14)

    def test_variance(self):
        assert gfunction_variance(SPEC) == pytest.approx((13 / 12) * (28 / 27) * (49 / 48) - 1, rel=1e-14)

    def test_eta_under_uniform(self):
        np.testing.assert_allclose(gfunction_eta_under(SPEC, (1,), [U, U, U]), 13 / 12, rtol=1e-10)

    def test_eta_under_complement_beta(self):
        # E_{Beta(2,2)}|4x-2| = 3/4, so E[g_3] = 15/16 and eta_1 = (13/12)(15/16)^2.
        d = beta_density(BetaParams(2, 2))
        np.testing.assert_allclose(gfunction_eta_under(SPEC, (1,), [U, U, d]), (13 / 12) * (15 / 16) ** 2, rtol=1e-10)


class TestModel:
    def test_noise_needs_density(self):
        with pytest.raises(ValueError):
            Model(1, 1, lambda x, w: x[:, 0] + w[:, 0])

    def test_noise_inputs_marginalize(self):
        model = gfunction_model(SPEC, noise_inputs=(3,))
        assert model.dim_x == 2 and model.dim_w == 1
        x = np.tile([[0.2, 0.9]], (200_000, 1))
        y = model(x, model.draw_noise(np.random.default_rng(0), x.shape[0]))
        expected = gfunction_factor(1.0, 0.2) * gfunction_factor(2.0, 0.9)
        assert abs(y.mean() - expected) < 4 * y.std() / np.sqrt(y.size)

    def test_stochastic_needs_w(self):
        with pytest.raises(ValueError):
            gfunction_model(SPEC, noise_inputs=(1,))(np.zeros((1, 2)))


class TestSyntheticDataset:
    def test_shape_and_positivity(self):
        data = synthetic_dataset(gfunction_model(SPEC), P3, 2500, np.random.default_rng(0))
        assert data.n == 2500 and data.k == 3
        assert np.all(data.y > 0)
        assert data.column_names == ("x1", "x2", "x3", "y")

    def test_n_one(self):
        with pytest.raises(ValueError):
            synthetic_dataset(gfunction_model(SPEC), P3, 1, np.random.default_rng(0))

    def test_seed_reproducible(self):
        a = synthetic_dataset(gfunction_model(SPEC), P3, 500, np.random.default_rng(11))
        b = synthetic_dataset(gfunction_model(SPEC), P3, 500, np.random.default_rng(11))
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            synthetic_dataset(gfunction_model(SPEC), product_density([U, U]), 10, np.random.default_rng(0))

    def test_subset_index_used(self):
        assert SubsetIndex((3, 1), 3).u == (1, 3)
