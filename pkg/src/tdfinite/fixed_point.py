"""Exact limit points of the learning rules and the error bounds attached to them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .errors import NoConvergence
from .mrp import (FeatureMap, MarkovRewardProcess, SteadyStateGeometry, _solve, bellman_T,
                  bellman_T_lambda, d_norm, expected_reward, project_D, true_value_function)
from .stopping import (OptimalStoppingProblem, greedy_stop_set, optimal_q_values,
                       optimal_values, stopping_operator, stopping_policy_values)


class Method(str, Enum):
    LINEAR_SOLVE = "LinearSolve"
    CONTRACTION_ITERATION = "ContractionIteration"


@dataclass(frozen=True)
class FixedPointResult:
    theta_star: np.ndarray
    residual: float
    method: Method
    iterations: int = 0
    # stationary-norm length of each iteration step (contraction iteration only)
    displacements: tuple[float, ...] = field(default=(), repr=False)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "theta_star": [float(x) for x in self.theta_star],
            "residual": float(self.residual),
            "method": self.method.value,
            "iterations": int(self.iterations),
        }


def kappa(gamma: float, lam: float) -> float:
    """Contraction modulus of the projected multi-step operator."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return gamma * (1.0 - lam) / (1.0 - gamma * lam)


# --------------------------------------------------------------------------
# expected updates

def gbar(theta: np.ndarray, mrp: MarkovRewardProcess, features: FeatureMap,
         geometry: SteadyStateGeometry) -> np.ndarray:
    """Expected TD(0) update ``Phi^T D (T Phi theta - Phi theta)``.

    ``theta`` may be a (d, k) batch, in which case k columns come back.
    """
    Phi = features.Phi
    V = Phi @ theta
    resid = bellman_T(mrp, V) - V
    w = geometry.pi if resid.ndim == 1 else geometry.pi[:, None]
    return Phi.T @ (w * resid)


def xbar_lambda(theta: np.ndarray, mrp: MarkovRewardProcess, features: FeatureMap,
                geometry: SteadyStateGeometry, lam: float) -> np.ndarray:
    """Expected TD(lambda) update through the closed-form multi-step operator."""
    Phi = features.Phi
    V = Phi @ theta
    resid = bellman_T_lambda(mrp, lam, V) - V
    w = geometry.pi if resid.ndim == 1 else geometry.pi[:, None]
    return Phi.T @ (w * resid)


def gbar_optstop(theta: np.ndarray, problem: OptimalStoppingProblem, features: FeatureMap,
                 geometry: SteadyStateGeometry) -> np.ndarray:
    """Expected Q-learning update for the stopping problem."""
    Phi = features.Phi
    Q = Phi @ theta
    resid = stopping_operator(problem, Q) - Q
    w = geometry.pi if resid.ndim == 1 else geometry.pi[:, None]
    return Phi.T @ (w * resid)


# --------------------------------------------------------------------------
# fixed points

def td0_system(mrp: MarkovRewardProcess, features: FeatureMap,
               geometry: SteadyStateGeometry) -> tuple[np.ndarray, np.ndarray]:
    """``(A, b)`` with the expected update equal to ``A theta + b``."""
    Phi = features.Phi
    DPhi = geometry.pi[:, None] * Phi
    A = DPhi.T @ (mrp.gamma * (mrp.P @ Phi) - Phi)
    b = DPhi.T @ expected_reward(mrp)
    return A, b


def td_lambda_system(mrp: MarkovRewardProcess, features: FeatureMap,
                     geometry: SteadyStateGeometry, lam: float) -> tuple[np.ndarray, np.ndarray]:
    Phi = features.Phi
    g = mrp.gamma
    DPhi = geometry.pi[:, None] * Phi
    M = np.eye(mrp.n) - g * lam * mrp.P
    rhs = np.column_stack([expected_reward(mrp), mrp.P @ Phi])
    sol = _solve(M, rhs, "multi-step operator solve")
    A = DPhi.T @ (g * (1.0 - lam) * sol[:, 1:] - Phi)
    b = DPhi.T @ sol[:, 0]
    return A, b


def td0_fixed_point(mrp: MarkovRewardProcess, features: FeatureMap,
                    geometry: SteadyStateGeometry) -> FixedPointResult:
    A, b = td0_system(mrp, features, geometry)
    theta = _solve(A, -b, "TD(0) fixed point")
    res = float(np.linalg.norm(gbar(theta, mrp, features, geometry)))
    return FixedPointResult(theta, res, Method.LINEAR_SOLVE, 0)


def td_lambda_fixed_point(mrp: MarkovRewardProcess, features: FeatureMap,
                          geometry: SteadyStateGeometry, lam: float) -> FixedPointResult:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    A, b = td_lambda_system(mrp, features, geometry, lam)
    theta = _solve(A, -b, "TD(lambda) fixed point")
    res = float(np.linalg.norm(xbar_lambda(theta, mrp, features, geometry, lam)))
    return FixedPointResult(theta, res, Method.LINEAR_SOLVE, 0)


def optstop_fixed_point(problem: OptimalStoppingProblem, features: FeatureMap,
                        geometry: SteadyStateGeometry, tol: float = 1e-10) -> FixedPointResult:
    """Projected value iteration ``theta <- Sigma^{-1} Phi^T D F(Phi theta)`` from 0.

    Stops when ``||theta_{k+1} - theta_k|| / (1 - gamma) <= tol``.  The budget
    is the number of steps a gamma-contraction needs from the first
    displacement, widened by the conversion between the Euclidean and the
    stationary-weighted norm.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    Phi = features.Phi
    pi = geometry.pi
    g = problem.gamma
    DPhiT = (pi[:, None] * Phi).T

    def step(theta):
        return _solve(geometry.Sigma, DPhiT @ stopping_operator(problem, Phi @ theta),
                      "projected stopping iteration")

    theta = np.zeros(features.d)
    disps: list[float] = []
    budget = None
    k = 0
    while True:
        nxt = step(theta)
        k += 1
        diff = nxt - theta
        disps.append(d_norm(pi, Phi @ diff))
        dist = float(np.linalg.norm(diff))
        theta = nxt
        if dist / (1.0 - g) <= tol:
            break
        if budget is None:
            if g == 0.0:
                budget = 3
            else:
                margin = int(math.ceil(math.log(geometry.omega) / (2.0 * math.log(g)))) + 10
                budget = int(math.ceil(math.log(tol * (1.0 - g) / dist) / math.log(g))) + margin
                budget = max(budget, 3)
        if k >= budget:
            raise NoConvergence(
                f"stopping fixed point iteration exceeded {budget} iterations "
                f"(last step {dist:.3e})")
    res = float(np.linalg.norm(gbar_optstop(theta, problem, features, geometry)))
    return FixedPointResult(theta, res, Method.CONTRACTION_ITERATION, k, tuple(disps))


# --------------------------------------------------------------------------
# error bounds at the limit

class ApproxKind(str, Enum):
    TD0 = "TD0"
    TD_LAMBDA = "TDLambda"
    OPT_STOP = "OptStop"


def _approx_parts(kind, mrp_or_problem, features, geometry, lam):
    kind = ApproxKind(kind)
    if kind is ApproxKind.OPT_STOP:
        problem = mrp_or_problem
        target = optimal_q_values(problem)
        theta = optstop_fixed_point(problem, features, geometry).theta_star
        c = problem.gamma
    else:
        mrp = mrp_or_problem
        target = true_value_function(mrp)
        if kind is ApproxKind.TD0:
            theta = td0_fixed_point(mrp, features, geometry).theta_star
            c = mrp.gamma
        else:
            if lam is None:
                raise ValueError("TDLambda needs lam")
            theta = td_lambda_fixed_point(mrp, features, geometry, lam).theta_star
            c = kappa(mrp.gamma, lam)
    return target, theta, c


def approximation_error_bound(kind: ApproxKind | str, mrp_or_problem, features: FeatureMap,
                              geometry: SteadyStateGeometry, lam: float | None = None) -> float:
    """``||Pi_D V - V||_D / sqrt(1 - c^2)`` for the relevant target ``V`` and modulus ``c``."""
    target, _, c = _approx_parts(kind, mrp_or_problem, features, geometry, lam)
    resid = d_norm(geometry.pi, project_D(geometry, features, target) - target)
    return resid / math.sqrt(1.0 - c * c)


def approximation_gap(kind: ApproxKind | str, mrp_or_problem, features: FeatureMap,
                      geometry: SteadyStateGeometry, lam: float | None = None) -> float:
    """Actual distance ``||Phi theta* - V||_D`` that the bound above controls."""
    target, theta, _ = _approx_parts(kind, mrp_or_problem, features, geometry, lam)
    return d_norm(geometry.pi, features.Phi @ theta - target)


def policy_suboptimality_bound(problem: OptimalStoppingProblem, features: FeatureMap,
                               geometry: SteadyStateGeometry,
                               Q_star: np.ndarray | None = None) -> float:
    if Q_star is None:
        Q_star = optimal_q_values(problem)
    g = problem.gamma
    resid = d_norm(geometry.pi, project_D(geometry, features, Q_star) - Q_star)
    return 2.0 / ((1.0 - g) * math.sqrt(1.0 - g * g)) * resid


def policy_gap(problem: OptimalStoppingProblem, features: FeatureMap,
               geometry: SteadyStateGeometry, theta: np.ndarray,
               Q_star: np.ndarray | None = None) -> float:
    """Stationary-start value lost by stopping greedily against ``Phi theta``."""
    if Q_star is None:
        Q_star = optimal_q_values(problem)
    best = optimal_values(problem, Q_star)
    learned = stopping_policy_values(problem, greedy_stop_set(problem, features.Phi @ theta))
    return float(geometry.pi @ (best - learned))
