"""Closed-form finite-time error bounds and the constants they depend on."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from .errors import ConfigError
from .fixed_point import kappa as _kappa
from .mrp import FeatureMap, MarkovRewardProcess, SteadyStateGeometry
from .sampling import MixingProfile, tau_mix, tau_mix_lambda
from .schedules import StepSchedule
from .stopping import OptimalStoppingProblem


class BoundName(str, Enum):
    T1_AVG = "T1_avg"
    T1_GEO = "T1_geo"
    T2A = "T2a"
    T2B = "T2b"
    T2C = "T2c"
    T3A = "T3a"
    T3B = "T3b"
    T3C = "T3c"
    T4A = "T4a"
    T4B = "T4b"
    T4C = "T4c"


# which error each bound controls
THETA_SQ = "theta_sq"              # ||theta_T - theta*||^2
AVG_VALUE_D_SQ = "avg_value_D_sq"  # ||Phi(theta_bar_T - theta*)||_D^2

STATISTIC = {
    BoundName.T1_AVG: AVG_VALUE_D_SQ, BoundName.T1_GEO: THETA_SQ,
    BoundName.T2A: AVG_VALUE_D_SQ, BoundName.T2B: THETA_SQ, BoundName.T2C: THETA_SQ,
    BoundName.T3A: AVG_VALUE_D_SQ, BoundName.T3B: THETA_SQ, BoundName.T3C: AVG_VALUE_D_SQ,
    BoundName.T4A: AVG_VALUE_D_SQ, BoundName.T4B: THETA_SQ, BoundName.T4C: AVG_VALUE_D_SQ,
}


def sigma_sq(mrp: MarkovRewardProcess, features: FeatureMap, theta_star: np.ndarray,
             geometry: SteadyStateGeometry) -> float:
    """Stationary second moment of the TD(0) update at ``theta_star``, by enumeration."""
    Phi = features.Phi
    v = Phi @ theta_star
    delta = mrp.Rmat + mrp.gamma * v[None, :] - v[:, None]            # (s, s')
    weight = geometry.pi[:, None] * mrp.P
    sq_feat = np.einsum("ij,ij->i", Phi, Phi)
    return float(np.sum(weight * delta ** 2 * sq_feat[:, None]))


def sigma_sq_optstop(problem: OptimalStoppingProblem, features: FeatureMap,
                     theta_star: np.ndarray, geometry: SteadyStateGeometry) -> float:
    Phi = features.Phi
    q = Phi @ theta_star
    delta = problem.u[:, None] + problem.gamma * np.maximum(problem.U, q)[None, :] - q[:, None]
    weight = geometry.pi[:, None] * problem.P
    sq_feat = np.einsum("ij,ij->i", Phi, Phi)
    return float(np.sum(weight * delta ** 2 * sq_feat[:, None]))


def projection_radius_bound(model: MarkovRewardProcess | OptimalStoppingProblem,
                            geometry: SteadyStateGeometry) -> float:
    """Radius guaranteed to contain the TD (or projected stopping) fixed point."""
    g = model.gamma
    return 2.0 * model.r_max / (math.sqrt(geometry.omega) * (1.0 - g) ** 1.5)


@dataclass(frozen=True)
class BoundConstants:
    """Everything the bound formulas read.

    ``theta_dist_sq`` is ``||theta* - theta_0||^2``.  ``R`` and ``profile`` are
    needed by the Markov-model bounds, ``sigma_sq`` by the i.i.d. ones.
    """

    gamma: float
    omega: float
    r_max: float
    theta_dist_sq: float
    sigma_sq: float | None = None
    R: float | None = None
    lam: float = 0.0
    profile: MixingProfile | None = None

    @property
    def G(self) -> float:
        if self.R is None:
            raise ConfigError("bound needs the projection radius R", field="R")
        return self.r_max + 2.0 * self.R

    @property
    def B(self) -> float:
        return self.G / (1.0 - self.gamma * self.lam)

    @property
    def kappa(self) -> float:
        return _kappa(self.gamma, self.lam)

    def tau(self, eps: float) -> int:
        if self.profile is None:
            raise ConfigError("bound needs a mixing profile")
        return tau_mix(self.profile, eps)

    def tau_lambda(self, eps: float) -> int:
        if self.profile is None:
            raise ConfigError("bound needs a mixing profile")
        return tau_mix_lambda(self.profile, self.gamma, self.lam, eps)

    def _sigma(self) -> float:
        if self.sigma_sq is None:
            raise ConfigError("bound needs sigma_sq")
        return self.sigma_sq

    def to_json_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "gamma": self.gamma, "omega": self.omega, "r_max": self.r_max,
            "theta_dist_sq": self.theta_dist_sq, "lambda": self.lam, "kappa": self.kappa,
        }
        if self.sigma_sq is not None:
            out["sigma_sq"] = self.sigma_sq
        if self.R is not None:
            out.update(R=self.R, G=self.G, B=self.B)
        if self.profile is not None:
            out.update(mixing_m=self.profile.m, mixing_rho=self.profile.rho)
        return out


def _need_alpha(alpha0):
    if alpha0 is None or not alpha0 > 0:
        raise ConfigError("constant step bound needs a positive alpha0", field="alpha0")
    return float(alpha0)


def theorem_bound(which: BoundName | str, c: BoundConstants, T: int,
                  alpha0: float | None = None, strict: bool = True) -> float:
    """Right-hand side of the named finite-time bound.

    ``strict`` enforces the step-size and horizon conditions under which the
    bound is proven; with ``strict=False`` the formula is simply evaluated.
    """
    which = BoundName(which)
    if T < 1:
        raise ConfigError("T must be at least 1", field="T")
    g, w, D0 = c.gamma, c.omega, c.theta_dist_sq
    sT = math.sqrt(T)

    if which is BoundName.T1_AVG:
        return 4.0 * D0 / (T * (1.0 - g) ** 2)
    if which is BoundName.T1_GEO:
        return math.exp(-(1.0 - g) ** 2 * w * T / 4.0) * D0

    if which is BoundName.T2A:
        if strict and T < (8.0 / (1.0 - g)) ** 2:
            raise ConfigError(f"bound needs T >= (8/(1-gamma))^2 = {(8.0 / (1.0 - g)) ** 2:.6g}",
                              field="T")
        return (D0 + 2.0 * c._sigma()) / (sT * (1.0 - g))
    if which is BoundName.T2B:
        a = _need_alpha(alpha0)
        if strict and a > w * (1.0 - g) / 8.0:
            raise ConfigError(f"bound needs alpha0 <= omega(1-gamma)/8 = {w * (1 - g) / 8:.6g}",
                              field="alpha0")
        return math.exp(-a * (1.0 - g) * w * T) * D0 + a * 2.0 * c._sigma() / ((1.0 - g) * w)
    if which is BoundName.T2C:
        shift = 16.0 / ((1.0 - g) ** 2 * w)
        nu = max(8.0 * c._sigma() / ((1.0 - g) ** 2 * w * w), 16.0 * D0 / ((1.0 - g) ** 2 * w))
        return nu / (shift + T)

    if which is BoundName.T3A:
        G2 = c.G ** 2
        return (D0 + G2 * (9 + 12 * c.tau(1.0 / sT))) / (2.0 * sT * (1.0 - g))
    if which is BoundName.T3B:
        a = _need_alpha(alpha0)
        if strict and not a < 1.0 / (2.0 * w * (1.0 - g)):
            raise ConfigError("bound needs alpha0 < 1/(2 omega (1-gamma))", field="alpha0")
        G2 = c.G ** 2
        return (math.exp(-2.0 * a * (1.0 - g) * w * T) * D0
                + a * G2 * (9 + 12 * c.tau(a)) / (2.0 * (1.0 - g) * w))
    if which is BoundName.T3C:
        a_T = 1.0 / (w * (T + 1) * (1.0 - g))
        G2 = c.G ** 2
        return G2 * (9 + 24 * c.tau(a_T)) * (1.0 + math.log(T)) / (T * (1.0 - g) ** 2 * w)

    k = c.kappa
    B2 = c.B ** 2
    if which is BoundName.T4A:
        return (D0 + B2 * (13 + 28 * c.tau_lambda(1.0 / sT))) / (2.0 * sT * (1.0 - k))
    if which is BoundName.T4B:
        a = _need_alpha(alpha0)
        tl = c.tau_lambda(a)
        if strict and not a < 1.0 / (2.0 * w * (1.0 - k)):
            raise ConfigError("bound needs alpha0 < 1/(2 omega (1-kappa))", field="alpha0")
        if strict and not T > 2 * tl:
            raise ConfigError(f"bound needs T > 2 tau = {2 * tl}", field="T")
        return (math.exp(-2.0 * a * (1.0 - k) * w * T) * D0
                + a * B2 * (13 + 24 * tl) / (2.0 * (1.0 - k) * w))
    # T4c
    a_T = 1.0 / (w * (T + 1) * (1.0 - k))
    return B2 * (13 + 52 * c.tau_lambda(a_T)) * (1.0 + math.log(T)) / (T * (1.0 - k) ** 2 * w)


def schedule_for(which: BoundName | str, c: BoundConstants, T: int,
                 alpha0: float | None = None) -> StepSchedule:
    """Step-size schedule under which the named bound is stated."""
    which = BoundName(which)
    g, w = c.gamma, c.omega
    if which in (BoundName.T1_AVG, BoundName.T1_GEO):
        return StepSchedule.constant((1.0 - g) / 4.0)
    if which in (BoundName.T2A, BoundName.T3A, BoundName.T4A):
        return StepSchedule.robust_sqrt(T)
    if which in (BoundName.T2B, BoundName.T3B, BoundName.T4B):
        return StepSchedule.constant(_need_alpha(alpha0))
    if which is BoundName.T2C:
        return StepSchedule.decay_beta_lambda(2.0 / ((1.0 - g) * w), 16.0 / ((1.0 - g) ** 2 * w))
    if which is BoundName.T3C:
        return StepSchedule.eigen_decay(w * (1.0 - g))
    return StepSchedule.eigen_decay(w * (1.0 - c.kappa))
