"""Property checks: every implementable inequality evaluated exactly on random instances.

Each check returns, per instance, its largest violation ``lhs - rhs`` over a
sweep of parameter vectors (negative means the inequality held with room to
spare).  A check passes when the worst violation over all instances is at
most ``TOLERANCE``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Iterable

import numpy as np

from .bounds import projection_radius_bound, sigma_sq, sigma_sq_optstop
from .fixed_point import (gbar, gbar_optstop, kappa, optstop_fixed_point, td0_fixed_point,
                          td0_system, td_lambda_fixed_point, xbar_lambda)
from .instances import GeneratorConfig, random_instance, random_stopping_problem
from .mrp import Instance, bellman_T, bellman_T_lambda, d_norm, project_D, true_value_function
from .stopping import optimal_q_values, stopping_operator

TOLERANCE = 1e-9
MEAN_PATH_STEPS = 200
TRACE_LENGTH = 64


class Check(str, Enum):
    NORM_EQUIVALENCE = "NormEquivalence"
    CONTRACTION_T = "ContractionT"
    CONTRACTION_T_LAMBDA = "ContractionTLambda"
    CONTRACTION_F = "ContractionF"
    DESCENT_TD0 = "DescentTD0"
    DESCENT_LAMBDA = "DescentLambda"
    DESCENT_OPT_STOP = "DescentOptStop"
    GBAR_NORM = "GbarNorm"
    SECOND_MOMENT = "SecondMoment"
    PATHWISE_NORM = "PathwiseNorm"
    ZETA_REGULARITY = "ZetaRegularity"
    ZETA_LAMBDA_REGULARITY = "ZetaLambdaRegularity"
    APPROX_ERROR_BOUNDS = "ApproxErrorBounds"
    PROJECTION_RADIUS = "ProjectionRadius"
    MEAN_PATH_MONOTONE = "MeanPathMonotone"


ALL_CHECKS = tuple(Check)


@dataclass(frozen=True)
class CheckReport:
    check_name: str
    instances_tested: int
    max_violation: float
    worst_seed: tuple[int, int]     # (master seed, instance index)
    passed: bool

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "check_name": self.check_name,
            "instances_tested": self.instances_tested,
            "max_violation": self.max_violation,
            "worst_seed": list(self.worst_seed),
            "passed": self.passed,
        }


def _ball(rng: np.random.Generator, d: int, k: int, radius: float) -> np.ndarray:
    """``k`` points uniform in the radius-``radius`` ball, as columns."""
    X = rng.standard_normal((d, k))
    X /= np.linalg.norm(X, axis=0, keepdims=True)
    return X * (radius * rng.random(k) ** (1.0 / d))


def _dnorm_sq(pi, V):
    return pi @ (V * V)


class _Context:
    """One random instance plus everything the checks evaluate on it."""

    def __init__(self, inst: Instance, rng: np.random.Generator, n_theta: int):
        self.inst = inst
        self.mrp, self.feats, self.geom = inst.mrp, inst.features, inst.geometry
        self.Phi = self.feats.Phi
        self.pi = self.geom.pi
        self.rng = rng
        self.k = n_theta
        self.lam = float(rng.uniform(0.0, 1.0))
        self.problem = random_stopping_problem(rng, self.mrp)
        d = self.feats.d
        self.sweep = _ball(rng, d, n_theta, self.sweep_radius)
        self.sweep2 = _ball(rng, d, n_theta, self.sweep_radius)
        self.in_R = _ball(rng, d, n_theta, self.R)
        self.in_R2 = _ball(rng, d, n_theta, self.R)
        self.in_RF = _ball(rng, d, n_theta, self.R_F)
        self.in_RF2 = _ball(rng, d, n_theta, self.R_F)

    @cached_property
    def theta_star(self):
        return td0_fixed_point(self.mrp, self.feats, self.geom).theta_star

    @cached_property
    def theta_lam(self):
        return td_lambda_fixed_point(self.mrp, self.feats, self.geom, self.lam).theta_star

    @cached_property
    def theta_F(self):
        return optstop_fixed_point(self.problem, self.feats, self.geom, tol=1e-11).theta_star

    @cached_property
    def R(self) -> float:
        return projection_radius_bound(self.mrp, self.geom)

    @cached_property
    def R_F(self) -> float:
        return max(projection_radius_bound(self.problem, self.geom), self.problem.r_max)

    @cached_property
    def sweep_radius(self) -> float:
        return max(2.0 * float(np.linalg.norm(self.theta_star)), 2.0 * self.R)

    @cached_property
    def support(self):
        return self.mrp.P > 0

    @cached_property
    def trajectory(self):
        """States s_0 .. s_L of one stationary trajectory."""
        rng = self.rng
        n = self.mrp.n
        s = [int(rng.choice(n, p=self.pi))]
        for _ in range(TRACE_LENGTH):
            s.append(int(rng.choice(n, p=self.mrp.P[s[-1]])))
        return np.array(s)

    def traces(self, decay: float, lower: np.ndarray | None = None) -> np.ndarray:
        """Row t is ``sum_{k=0}^{t-l} decay^k phi(s_{t-k})`` with ``l = lower[t]`` (0 by default)."""
        s = self.trajectory
        L = len(s) - 1
        Z = np.zeros((L, self.feats.d))
        for t in range(L):
            lo = 0 if lower is None else int(lower[t])
            for k in range(t - lo + 1):
                Z[t] += decay ** k * self.Phi[s[t - k]]
        return Z

    def td_deltas(self, thetas):
        """TD errors for every (s, s') pair and column of ``thetas``: (n, n, k)."""
        v = self.Phi @ thetas
        return self.mrp.Rmat[:, :, None] + self.mrp.gamma * v[None, :, :] - v[:, None, :]

    def stop_deltas(self, thetas):
        q = self.Phi @ thetas
        p = self.problem
        nxt = np.maximum(p.U[:, None], q)
        return p.u[:, None, None] + p.gamma * nxt[None, :, :] - q[:, None, :]


# --------------------------------------------------------------------------
# individual checks; each returns the largest lhs - rhs on one instance

def _norm_equivalence(c: _Context) -> float:
    X = c.sweep
    dn = d_norm(c.pi, c.Phi @ X)
    n2 = np.linalg.norm(X, axis=0)
    return float(max(np.max(math.sqrt(c.geom.omega) * n2 - dn), np.max(dn - n2)))


def _contraction(c: _Context, op: Callable[[np.ndarray], np.ndarray], modulus: float) -> float:
    X, Y = c.sweep, c.sweep2
    lhs = d_norm(c.pi, project_D(c.geom, c.feats, op(c.Phi @ X))
                 - project_D(c.geom, c.feats, op(c.Phi @ Y)))
    rhs = modulus * d_norm(c.pi, c.Phi @ (X - Y))
    return float(np.max(lhs - rhs))


def _contraction_T(c):
    return _contraction(c, lambda V: bellman_T(c.mrp, V), c.mrp.gamma)


def _contraction_T_lambda(c):
    out = -math.inf
    for lam in (c.lam, 1.0):
        out = max(out, _contraction(c, lambda V: bellman_T_lambda(c.mrp, lam, V),
                                    kappa(c.mrp.gamma, lam)))
    return out


def _contraction_F(c):
    return _contraction(c, lambda V: stopping_operator(c.problem, V), c.mrp.gamma)


def _descent(c: _Context, update: np.ndarray, limit: np.ndarray, modulus: float) -> float:
    E = limit[:, None] - c.sweep
    lhs = (1.0 - modulus) * _dnorm_sq(c.pi, c.Phi @ E)
    rhs = np.sum(E * update, axis=0)
    return float(np.max(lhs - rhs))


def _descent_td0(c):
    return _descent(c, gbar(c.sweep, c.mrp, c.feats, c.geom), c.theta_star, c.mrp.gamma)


def _descent_lambda(c):
    return _descent(c, xbar_lambda(c.sweep, c.mrp, c.feats, c.geom, c.lam), c.theta_lam,
                    kappa(c.mrp.gamma, c.lam))


def _descent_optstop(c):
    return _descent(c, gbar_optstop(c.sweep, c.problem, c.feats, c.geom), c.theta_F,
                    c.mrp.gamma)


def _gbar_norm(c):
    g = gbar(c.sweep, c.mrp, c.feats, c.geom)
    lhs = np.linalg.norm(g, axis=0)
    rhs = 2.0 * d_norm(c.pi, c.Phi @ (c.sweep - c.theta_star[:, None]))
    return float(np.max(lhs - rhs))


def _second_moment(c):
    w = c.pi[:, None] * c.mrp.P
    sq_feat = np.einsum("ij,ij->i", c.Phi, c.Phi)
    out = -math.inf
    for deltas, limit, var in (
            (c.td_deltas(c.sweep), c.theta_star,
             sigma_sq(c.mrp, c.feats, c.theta_star, c.geom)),
            (c.stop_deltas(c.sweep), c.theta_F,
             sigma_sq_optstop(c.problem, c.feats, c.theta_F, c.geom))):
        lhs = np.einsum("ij,ijk,i->k", w, deltas ** 2, sq_feat)
        rhs = 2.0 * var + 8.0 * _dnorm_sq(c.pi, c.Phi @ (c.sweep - limit[:, None]))
        out = max(out, float(np.max(lhs - rhs)))
    return out


def _pathwise_norm(c):
    feat_norm = np.linalg.norm(c.Phi, axis=1)
    mask = c.support
    # TD(0): every reachable tuple, any theta
    g = np.abs(c.td_deltas(c.sweep)) * feat_norm[:, None, None]
    bound = c.mrp.r_max + 2.0 * np.linalg.norm(c.sweep, axis=0)
    out = float(np.max(g[mask] - bound[None, :]))
    # stopping: theta in the R_F ball, with r_max <= R_F
    p = c.problem
    g = np.abs(c.stop_deltas(c.in_RF)) * feat_norm[:, None, None]
    out = max(out, float(np.max(g[mask]) - (p.r_max + 2.0 * c.R_F)))
    # TD(lambda): traces along a trajectory, theta in the R ball
    gl = c.mrp.gamma * c.lam
    B = (c.mrp.r_max + 2.0 * c.R) / (1.0 - gl)
    Z = c.traces(gl)
    s = c.trajectory
    v = c.Phi @ c.in_R
    delta = c.mrp.Rmat[s[:-1], s[1:]][:, None] + c.mrp.gamma * v[s[1:]] - v[s[:-1]]
    step = np.abs(delta) * np.linalg.norm(Z, axis=1)[:, None]
    out = max(out, float(np.max(step)) - B)
    xb = np.linalg.norm(xbar_lambda(c.in_R, c.mrp, c.feats, c.geom, c.lam), axis=0)
    return max(out, float(np.max(xb)) - B)


def _zeta_td0(c, thetas):
    v = c.Phi @ thetas
    e = v - (c.Phi @ c.theta_star)[:, None]
    corr = np.sum(gbar(thetas, c.mrp, c.feats, c.geom) * (thetas - c.theta_star[:, None]), axis=0)
    return c.td_deltas(thetas) * e[:, None, :] - corr[None, None, :]


def _zeta_regularity(c):
    G = c.mrp.r_max + 2.0 * c.R
    mask = c.support
    z1 = _zeta_td0(c, c.in_R)[mask]
    z2 = _zeta_td0(c, c.in_R2)[mask]
    dist = np.linalg.norm(c.in_R - c.in_R2, axis=0)
    bounded = float(np.max(np.abs(z1))) - 2.0 * G * G
    lipschitz = float(np.max(np.abs(z1 - z2) - 6.0 * G * dist[None, :]))
    return max(bounded, lipschitz)


def _zeta_lambda_regularity(c):
    gl = c.mrp.gamma * c.lam
    B = (c.mrp.r_max + 2.0 * c.R) / (1.0 - gl)
    s = c.trajectory
    L = len(s) - 1
    taus = np.array([int(c.rng.integers(0, t + 1)) for t in range(L)])
    Z_full = c.traces(gl)
    Z_cut = c.traces(gl, lower=np.arange(L) - taus)

    def zeta(thetas, Z):
        v = c.Phi @ thetas
        delta = c.mrp.Rmat[s[:-1], s[1:]][:, None] + c.mrp.gamma * v[s[1:]] - v[s[:-1]]
        E = thetas - c.theta_lam[:, None]
        corr = np.sum(xbar_lambda(thetas, c.mrp, c.feats, c.geom, c.lam) * E, axis=0)
        return delta * (Z @ E) - corr[None, :]

    a1 = zeta(c.in_R, Z_full)
    a2 = zeta(c.in_R2, Z_full)
    cut = zeta(c.in_R, Z_cut)
    dist = np.linalg.norm(c.in_R - c.in_R2, axis=0)
    bounded = max(float(np.max(np.abs(a1))), float(np.max(np.abs(cut)))) - 2.0 * B * B
    lipschitz = float(np.max(np.abs(a1 - a2) - 6.0 * B * dist[None, :]))
    trunc = float(np.max(np.abs(a1 - cut) - (B * B * gl ** taus.astype(float))[:, None]))
    return max(bounded, lipschitz, trunc)


def _approx_error_bounds(c):
    g = c.mrp.gamma
    V = true_value_function(c.mrp)
    Q = optimal_q_values(c.problem)
    out = -math.inf
    for target, theta, mod in ((V, c.theta_star, g),
                               (V, c.theta_lam, kappa(g, c.lam)),
                               (Q, c.theta_F, g)):
        resid = d_norm(c.pi, project_D(c.geom, c.feats, target) - target)
        bound = resid / math.sqrt(1.0 - mod * mod)
        gap = d_norm(c.pi, c.Phi @ theta - target)
        out = max(out, gap - bound)
    return out


def _projection_radius(c):
    g = c.mrp.gamma
    out = float(np.linalg.norm(c.theta_star)) - c.R
    out = max(out, float(np.linalg.norm(c.theta_lam)) - c.R)
    out = max(out, float(np.linalg.norm(c.theta_F))
              - projection_radius_bound(c.problem, c.geom))
    sigma_norm = d_norm(c.pi, c.Phi @ c.theta_star)
    return max(out, sigma_norm - 2.0 * c.mrp.r_max / (1.0 - g) ** 1.5)


def _mean_path_monotone(c):
    g = c.mrp.gamma
    alpha = (1.0 - g) / 4.0
    A, b = td0_system(c.mrp, c.feats, c.geom)
    X = c.sweep[:, : min(c.k, 10)].copy()
    E0 = np.sum((c.theta_star[:, None] - X) ** 2, axis=0)
    total = np.zeros_like(X)
    out = -math.inf
    for t in range(MEAN_PATH_STEPS):
        E = c.theta_star[:, None] - X
        err = np.sum(E * E, axis=0)
        vd = _dnorm_sq(c.pi, c.Phi @ E)
        total += X
        X = X + alpha * (A @ X + b[:, None])
        nxt = np.sum((c.theta_star[:, None] - X) ** 2, axis=0)
        out = max(out, float(np.max(nxt - (err - (1.0 - g) ** 2 / 4.0 * vd))))
        T = t + 1
        geo = math.exp(-(1.0 - g) ** 2 * c.geom.omega * T / 4.0) * E0
        out = max(out, float(np.max(nxt - geo)))
        avg = _dnorm_sq(c.pi, c.Phi @ (total / T - c.theta_star[:, None]))
        out = max(out, float(np.max(avg - 4.0 * E0 / (T * (1.0 - g) ** 2))))
    return out


_CHECKS: dict[Check, Callable[[_Context], float]] = {
    Check.NORM_EQUIVALENCE: _norm_equivalence,
    Check.CONTRACTION_T: _contraction_T,
    Check.CONTRACTION_T_LAMBDA: _contraction_T_lambda,
    Check.CONTRACTION_F: _contraction_F,
    Check.DESCENT_TD0: _descent_td0,
    Check.DESCENT_LAMBDA: _descent_lambda,
    Check.DESCENT_OPT_STOP: _descent_optstop,
    Check.GBAR_NORM: _gbar_norm,
    Check.SECOND_MOMENT: _second_moment,
    Check.PATHWISE_NORM: _pathwise_norm,
    Check.ZETA_REGULARITY: _zeta_regularity,
    Check.ZETA_LAMBDA_REGULARITY: _zeta_lambda_regularity,
    Check.APPROX_ERROR_BOUNDS: _approx_error_bounds,
    Check.PROJECTION_RADIUS: _projection_radius,
    Check.MEAN_PATH_MONOTONE: _mean_path_monotone,
}


def parse_suite(names: str | Iterable[str]) -> tuple[Check, ...]:
    if isinstance(names, str):
        names = [x.strip() for x in names.split(",") if x.strip()]
    names = list(names)
    if not names or "all" in names:
        return ALL_CHECKS
    return tuple(Check(x) for x in names)


def _instance_violations(seed: int, i: int, suite: tuple[Check, ...],
                         generator: GeneratorConfig, n_theta: int) -> list[float]:
    inst_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, i])))
    inst = random_instance(inst_rng, generator)
    out = []
    for chk in suite:
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([seed, i, ALL_CHECKS.index(chk)])))
        out.append(float(_CHECKS[chk](_Context(inst, rng, n_theta))))
    return out


def run_checks(suite: str | Iterable[Check | str] = ALL_CHECKS,
               generator: GeneratorConfig = GeneratorConfig(), seed: int = 0,
               n_instances: int = 100, n_theta: int = 100,
               tolerance: float = TOLERANCE, jobs: int = 1) -> list[CheckReport]:
    """Evaluate each check on ``n_instances`` seeded instances.

    Instance ``i`` and its parameter sweep come from ``(seed, i)`` only, so the
    reports do not depend on ``jobs`` and any failure can be replayed from
    ``worst_seed``.
    """
    suite = parse_suite(suite) if isinstance(suite, str) else tuple(Check(x) for x in suite)
    args = [(seed, i, suite, generator, n_theta) for i in range(n_instances)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_instance_violations, *zip(*args)))
    else:
        rows = [_instance_violations(*a) for a in args]
    reports = []
    for j, chk in enumerate(suite):
        col = [row[j] for row in rows]
        i = int(np.argmax(col))
        worst = col[i]
        reports.append(CheckReport(chk.value, n_instances, worst, (seed, i),
                                   bool(worst <= tolerance)))
    return reports
