import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import SYM_P, make_instances
from tdfinite.errors import ConfigError, DegenerateFeatures, NotErgodic
from tdfinite.mrp import (FeatureMap, Instance, MarkovRewardProcess, bellman_T, bellman_T_lambda,
                          bellman_T_lambda_series, chain_period, d_norm, expected_reward,
                          instance_from_json, normalize_features, project_D,
                          stationary_distribution, stationary_distribution_power,
                          steady_state_geometry, true_value_function)


def chain(P, R=None, gamma=0.5):
    P = np.asarray(P, float)
    return MarkovRewardProcess(P, np.zeros_like(P) if R is None else np.asarray(R, float), gamma)


class TestStationary:
    def test_symmetric(self):
        np.testing.assert_allclose(stationary_distribution(np.array(SYM_P)), [0.5, 0.5])

    def test_skewed_matches_balance_equations(self):
        P = np.array([[0.9, 0.1], [0.5, 0.5]])
        pi = stationary_distribution(P)
        # frozen from power iteration; 0.1 pi_0 = 0.5 pi_1 gives the same
        np.testing.assert_allclose(pi, [5 / 6, 1 / 6], atol=1e-12)
        np.testing.assert_allclose(stationary_distribution_power(P), pi, atol=1e-12)

    def test_reducible(self):
        with pytest.raises(NotErgodic):
            stationary_distribution(np.eye(2))

    def test_periodic(self):
        P = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], float)
        assert chain_period(P) == 3
        with pytest.raises(NotErgodic):
            stationary_distribution(P)

    def test_random_chains_are_invariant(self):
        for inst in make_instances(20, seed=3):
            pi = inst.geometry.pi
            assert np.all(pi > 0)
            assert abs(pi.sum() - 1) < 1e-12
            np.testing.assert_allclose(pi @ inst.mrp.P, pi, atol=1e-10)

    def test_rejects_non_stochastic(self):
        with pytest.raises(ValueError):
            chain([[0.5, 0.6], [0.5, 0.5]])


class TestOperators:
    def test_expected_reward(self):
        assert np.all(expected_reward(chain(SYM_P)) == 0)
        np.testing.assert_allclose(expected_reward(chain(SYM_P, [[1, 1], [0, 0]])), [1, 0])
        m = chain([[0.9, 0.1], [0.5, 0.5]], [[0, 10], [0, 0]])
        assert expected_reward(m)[0] == pytest.approx(1.0)

    def test_value_function(self):
        one = chain([[1.0]], [[1.0]])
        assert true_value_function(one)[0] == pytest.approx(2.0)
        m = chain(SYM_P, [[1, 1], [0, 0]])
        np.testing.assert_allclose(true_value_function(m), [1.5, 0.5], atol=1e-14)
        m0 = chain(SYM_P, [[1, 1], [0, 0]], gamma=0.0)
        np.testing.assert_array_equal(true_value_function(m0), [1.0, 0.0])

    def test_bellman(self):
        m = chain(SYM_P, [[1, 1], [0, 0]])
        V = true_value_function(m)
        np.testing.assert_allclose(bellman_T(m, V), V, atol=1e-12)
        np.testing.assert_allclose(bellman_T(m, np.zeros(2)), [1, 0])
        np.testing.assert_allclose(bellman_T(m, np.array([2.0, 0.0])), [1.5, 0.5])

    def test_multi_step_limits(self):
        for inst in make_instances(10, seed=4):
            m = inst.mrp
            V = np.random.default_rng(0).normal(size=m.n)
            np.testing.assert_allclose(bellman_T_lambda(m, 0.0, V), bellman_T(m, V), atol=1e-12)
            np.testing.assert_allclose(bellman_T_lambda(m, 1.0, V), true_value_function(m),
                                       atol=1e-9)

    def test_multi_step_symmetric_from_zero(self):
        m = chain(SYM_P, [[1, 1], [0, 0]])
        closed = np.linalg.solve(np.eye(2) - 0.25 * m.P, expected_reward(m))
        np.testing.assert_allclose(bellman_T_lambda(m, 0.5, np.zeros(2)), closed, atol=1e-12)
        np.testing.assert_allclose(bellman_T_lambda_series(m, 0.5, np.zeros(2)), closed,
                                   atol=1e-10)

    @given(st.integers(0, 10_000), st.floats(0.0, 0.99))
    def test_closed_form_matches_series(self, seed, lam):
        inst = make_instances(1, seed=seed, n_max=12)[0]
        V = np.random.default_rng(seed).normal(size=inst.mrp.n)
        np.testing.assert_allclose(bellman_T_lambda(inst.mrp, lam, V),
                                   bellman_T_lambda_series(inst.mrp, lam, V), atol=1e-8)

    def test_value_function_sup_bound(self):
        for inst in make_instances(30, seed=5):
            m = inst.mrp
            assert np.max(np.abs(true_value_function(m))) <= m.r_max / (1 - m.gamma) + 1e-10


class TestGeometry:
    def test_identity_features(self):
        g = steady_state_geometry(chain(SYM_P), FeatureMap(np.eye(2)))
        np.testing.assert_allclose(g.Sigma, 0.5 * np.eye(2))
        assert g.omega == pytest.approx(0.5)

    def test_skewed_covariance(self):
        g = steady_state_geometry(chain([[0.9, 0.1], [0.5, 0.5]]), FeatureMap(np.eye(2)))
        np.testing.assert_allclose(g.Sigma, np.diag([5 / 6, 1 / 6]), atol=1e-12)
        assert g.omega == pytest.approx(1 / 6, abs=1e-12)

    def test_dependent_columns(self):
        with pytest.raises(DegenerateFeatures):
            FeatureMap(np.array([[0.5, 0.5], [0.3, 0.3]]))

    def test_feature_rows_must_be_normalized(self):
        with pytest.raises(ValueError):
            FeatureMap(np.array([[2.0], [1.0]]))
        Phi = normalize_features(np.array([[3.0, 4.0], [0.1, 0.0]]))
        np.testing.assert_allclose(Phi, [[0.6, 0.8], [0.1, 0.0]])

    def test_d_norm(self):
        assert d_norm([0.5, 0.5], [0, 0]) == 0
        assert d_norm([0.5, 0.5], [1, -1]) == pytest.approx(1.0)
        assert d_norm([5 / 6, 1 / 6], [0, 6]) == pytest.approx(math.sqrt(6))


class TestProjection:
    def test_full_span(self):
        m = chain(SYM_P)
        f = FeatureMap(np.eye(2))
        V = np.array([3.0, -1.0])
        np.testing.assert_allclose(project_D(steady_state_geometry(m, f), f, V), V)

    def test_constant_feature(self, d1):
        out = project_D(d1.geometry, d1.features, np.array([1.0, 0.0]))
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_random_projection_properties(self):
        rng = np.random.default_rng(7)
        for inst in make_instances(20, seed=6):
            g, f = inst.geometry, inst.features
            V = rng.normal(size=inst.mrp.n)
            PV = project_D(g, f, V)
            np.testing.assert_allclose(project_D(g, f, PV), PV, atol=1e-12)
            resid = f.Phi.T @ (g.pi * (V - PV))
            assert np.max(np.abs(resid)) <= 1e-10
            inside = f.Phi @ rng.normal(size=f.d)
            np.testing.assert_allclose(project_D(g, f, inside), inside, atol=1e-10)

    def test_norm_identity(self):
        rng = np.random.default_rng(8)
        for inst in make_instances(10, seed=7):
            theta = rng.normal(size=inst.features.d)
            lhs = d_norm(inst.geometry.pi, inst.features.Phi @ theta)
            assert lhs == pytest.approx(math.sqrt(theta @ inst.geometry.Sigma @ theta), rel=1e-12)


class TestInstanceJson:
    def test_round_trip(self, d1):
        back = instance_from_json(json.loads(json.dumps(d1.to_json_dict())))
        np.testing.assert_array_equal(back.mrp.P, d1.mrp.P)
        np.testing.assert_array_equal(back.features.Phi, d1.features.Phi)

    @pytest.mark.parametrize("missing", ["n", "gamma", "P", "R", "Phi"])
    def test_missing_field_is_named(self, d1, missing):
        doc = d1.to_json_dict()
        del doc[missing]
        with pytest.raises(ConfigError) as err:
            instance_from_json(doc)
        assert err.value.field == missing
        assert missing in str(err.value)

    def test_bad_entry_is_located(self, d1):
        doc = d1.to_json_dict()
        doc["P"][1][0] = "x"
        with pytest.raises(ConfigError, match=r"P\[1\]\[0\]"):
            instance_from_json(doc)

    def test_instance_arrays_are_read_only(self, d1):
        with pytest.raises(ValueError):
            d1.mrp.P[0, 0] = 1.0
        assert isinstance(d1, Instance)
