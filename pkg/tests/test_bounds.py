import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import make_instances
from tdfinite.bounds import (STATISTIC, BoundConstants, BoundName, projection_radius_bound,
                             schedule_for, sigma_sq, theorem_bound)
from tdfinite.errors import ConfigError
from tdfinite.fixed_point import td0_fixed_point
from tdfinite.mrp import Instance, MarkovRewardProcess, SteadyStateGeometry
from tdfinite.sampling import MixingProfile, iid_sampler, trial_generator
from tdfinite.schedules import ScheduleKind

A_PARTS = ("T2a", "T3a", "T4a")
B_PARTS = ("T2b", "T3b", "T4b")
C_PARTS = ("T2c", "T3c", "T4c")


def consts(**kw):
    base = dict(gamma=0.5, omega=0.25, r_max=1.0, theta_dist_sq=1.0, sigma_sq=0.25, R=2.0,
                lam=0.0, profile=MixingProfile(np.array([1.0]), 1.0, 0.5))
    base.update(kw)
    return BoundConstants(**base)


class TestSigmaSq:
    def test_single_state(self):
        inst = Instance.build([[1.0]], [[0.3]], 0.5, [[1.0]])
        star = td0_fixed_point(inst.mrp, inst.features, inst.geometry).theta_star
        assert sigma_sq(inst.mrp, inst.features, star, inst.geometry) == pytest.approx(0, abs=1e-30)

    def test_d1(self, d1):
        assert sigma_sq(d1.mrp, d1.features, np.array([1.0]), d1.geometry) == pytest.approx(0.25)

    def test_monte_carlo(self):
        inst = make_instances(1, seed=61, n=6, d=2)[0]
        m, f, geo = inst.mrp, inst.features, inst.geometry
        star = td0_fixed_point(m, f, geo).theta_star
        s, r, sn = iid_sampler(m, geo, trial_generator(61)).take(1_000_000)
        delta = r + m.gamma * (f.Phi[sn] @ star) - f.Phi[s] @ star
        sq = delta ** 2 * np.sum(f.Phi[s] ** 2, axis=1)
        se = sq.std(ddof=1) / math.sqrt(sq.size)
        assert abs(sq.mean() - sigma_sq(m, f, star, geo)) <= 3 * se


class TestProjectionRadius:
    def test_arithmetic(self):
        m = MarkovRewardProcess(np.array([[1.0]]), np.array([[1.0]]), 0.5)
        geo = SteadyStateGeometry(np.array([1.0]), np.array([[0.25]]), 0.25)
        assert projection_radius_bound(m, geo) == pytest.approx(11.3137, abs=5e-5)
        assert projection_radius_bound(m, geo) == pytest.approx(2 / (0.5 * 0.5 ** 1.5))

    def test_contains_fixed_point(self):
        for inst in make_instances(100, seed=62):
            star = td0_fixed_point(inst.mrp, inst.features, inst.geometry).theta_star
            assert np.linalg.norm(star) <= projection_radius_bound(inst.mrp, inst.geometry)

    def test_linear_in_reward_scale(self):
        inst = make_instances(1, seed=63)[0]
        m = inst.mrp
        scaled = MarkovRewardProcess(m.P, 3.0 * m.Rmat, m.gamma)
        assert projection_radius_bound(scaled, inst.geometry) == \
            pytest.approx(3.0 * projection_radius_bound(m, inst.geometry), rel=1e-14)


class TestFormulas:
    def test_t2a_example(self):
        assert theorem_bound("T2a", consts(), 100, strict=False) == pytest.approx(0.3)
        with pytest.raises(ConfigError) as err:
            theorem_bound("T2a", consts(), 100)
        assert err.value.field == "T"
        assert theorem_bound("T2a", consts(), 256) == pytest.approx(1.5 / 8)

    def test_t1_geo_from_limit(self):
        for T in (1, 10, 10_000):
            assert theorem_bound("T1_geo", consts(theta_dist_sq=0.0), T) == 0.0

    def test_t1(self):
        c = consts()
        assert theorem_bound("T1_avg", c, 10) == pytest.approx(4 / (10 * 0.25))
        assert theorem_bound("T1_geo", c, 10) == pytest.approx(math.exp(-0.25 * 0.25 * 10 / 4))

    def test_t2b_and_t3b_exponents(self):
        # the constant-step bounds print different exponent factors; both are kept
        c = consts(sigma_sq=0.0)
        a = 0.01
        t2b = theorem_bound("T2b", c, 1000, a)
        assert t2b == pytest.approx(math.exp(-a * 0.5 * 0.25 * 1000))
        floor = a * 25 * (9 + 12 * c.tau(a)) / (2 * 0.5 * 0.25)
        t3b = theorem_bound("T3b", c, 1000, a)
        assert t3b - floor == pytest.approx(math.exp(-2 * a * 0.5 * 0.25 * 1000))

    def test_t2c(self):
        c = consts()
        nu = max(8 * 0.25 / (0.25 * 0.0625), 16 * 1.0 / (0.25 * 0.25))
        shift = 16 / (0.25 * 0.25)
        assert theorem_bound("T2c", c, 500) == pytest.approx(nu / (shift + 500))

    def test_t3_and_t4_use_natural_log(self):
        c = consts()
        T = 1000
        w = 0.25
        tau = c.tau(1 / (w * (T + 1) * 0.5))
        expected = 25 * (9 + 24 * tau) * (1 + math.log(T)) / (T * 0.25 * w)
        assert theorem_bound("T3c", c, T) == pytest.approx(expected, rel=1e-14)
        cl = consts(lam=0.5)
        k = cl.kappa
        tl = cl.tau_lambda(1 / (w * (T + 1) * (1 - k)))
        expected = cl.B ** 2 * (13 + 52 * tl) * (1 + math.log(T)) / (T * (1 - k) ** 2 * w)
        assert theorem_bound("T4c", cl, T) == pytest.approx(expected, rel=1e-14)

    def test_t3b_noise_floor_linear_in_step(self):
        c = consts()
        floors = []
        for a in (1e-2, 1e-3, 1e-4):
            T = int(round(50.0 / a))       # fixed a*T: the transient term is constant
            transient = math.exp(-2 * a * 0.5 * 0.25 * T)
            floors.append((theorem_bound("T3b", c, T, a) - transient) / (a * (9 + 12 * c.tau(a))))
        np.testing.assert_allclose(floors, floors[0], rtol=1e-12)

    def test_preconditions(self):
        c = consts()
        with pytest.raises(ConfigError, match="alpha0"):
            theorem_bound("T2b", c, 100, 1.0)
        with pytest.raises(ConfigError, match="alpha0"):
            theorem_bound("T3b", c, 100, 10.0)
        with pytest.raises(ConfigError, match="alpha0"):
            theorem_bound("T4b", consts(lam=0.5), 100, 10.0)
        with pytest.raises(ConfigError, match="T"):
            theorem_bound("T4b", consts(lam=0.5), 2, 0.001)
        with pytest.raises(ConfigError, match="alpha0"):
            theorem_bound("T3b", c, 100)
        with pytest.raises(ConfigError, match="R"):
            theorem_bound("T3a", consts(R=None), 100)
        with pytest.raises(ConfigError):
            theorem_bound("T2a", consts(sigma_sq=None), 1000)
        with pytest.raises(ValueError):
            theorem_bound("T9", c, 100)


class TestShape:
    @pytest.mark.parametrize("which", A_PARTS)
    def test_a_parts_decrease_in_T(self, which):
        grid = [10 ** k for k in range(3, 9)]
        vals = [theorem_bound(which, consts(), T) for T in grid]
        assert all(x > y for x, y in zip(vals, vals[1:]))

    @pytest.mark.parametrize("which", B_PARTS)
    def test_b_floor_increases_in_step(self, which):
        c = consts(lam=0.5) if which == "T4b" else consts()
        T = 10 ** 9
        alphas = [1e-5, 1e-4, 1e-3, 5e-3]
        vals = [theorem_bound(which, c, T, a) for a in alphas]
        assert all(x < y for x, y in zip(vals, vals[1:]))

    @pytest.mark.parametrize("which", C_PARTS)
    def test_c_parts_eventually_decrease(self, which):
        c = consts(lam=0.5) if which == "T4c" else consts()
        vals = [theorem_bound(which, c, 10 ** k) for k in range(2, 9)]
        assert all(x > y for x, y in zip(vals, vals[1:]))

    @pytest.mark.parametrize("part", "abc")
    def test_lambda_zero_dominates(self, part):
        c = consts()
        assert c.B == c.G and c.kappa == c.gamma
        for T in (1000, 10 ** 5):
            a = 0.001 if part == "b" else None
            assert theorem_bound(f"T4{part}", c, T, a) >= theorem_bound(f"T3{part}", c, T, a)

    @given(st.sampled_from(list(BoundName)), st.integers(1, 10 ** 7),
           st.floats(0.0, 0.99), st.floats(0.0, 1.0), st.floats(0.01, 1.0))
    def test_non_negative(self, which, T, gamma, lam, omega):
        c = consts(gamma=gamma, lam=lam, omega=omega)
        alpha = omega * (1 - gamma) / 16
        assert theorem_bound(which, c, T, alpha, strict=False) >= 0


def test_constants_invariants():
    c = consts(lam=0.7, gamma=0.9)
    assert c.G >= c.r_max and c.B >= c.G and c.kappa <= c.gamma
    doc = c.to_json_dict()
    assert doc["G"] == c.G and doc["B"] == c.B and doc["mixing_rho"] == 0.5


def test_schedules_match_bounds():
    c = consts()
    assert schedule_for("T2a", c, 400).kind is ScheduleKind.ROBUST_SQRT
    assert schedule_for("T3b", c, 400, 0.01).alpha0 == 0.01
    s = schedule_for("T3c", c, 400)
    assert s.alpha(0) == pytest.approx(1 / (0.25 * 0.5))
    assert schedule_for("T1_avg", c, 10).alpha0 == pytest.approx(0.125)
    assert STATISTIC[BoundName.T2B] == "theta_sq"
    assert STATISTIC[BoundName.T2A] == "avg_value_D_sq"
