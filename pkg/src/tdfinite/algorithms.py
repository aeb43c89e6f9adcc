"""Learning rules: mean-path TD, TD(0), projected TD(0), projected TD(lambda)
and Q-learning for optimal stopping.

All sample-driven runners share one compiled step loop (see ``_kernels``):
TD(0) is the trace loop with zero trace decay, and the stopping rule is the
same loop with the next-state value capped below by the stop reward.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from types import ModuleType

import numpy as np

from . import _kernels
from .errors import ConfigError
from .fixed_point import gbar, gbar_optstop, td0_system, xbar_lambda
from .mrp import FeatureMap, MarkovRewardProcess, SteadyStateGeometry
from .sampling import Observation
from .schedules import ScheduleKind, StepSchedule
from .stopping import OptimalStoppingProblem

__all__ = [
    "IterateState", "Trajectory", "RunResult", "td0_gradient", "qlearn_optstop_gradient",
    "gbar", "gbar_optstop", "xbar_lambda", "project_ball", "mean_path_td", "run_td0",
    "run_td_lambda", "run_qlearn_optstop", "zeta_diagnostic", "zeta_lambda",
    "write_trajectory_csv", "read_trajectory_csv", "CSV_COLUMNS",
]

CSV_COLUMNS = ("t", "theta_norm_err", "value_D_err", "avg_value_D_err", "alpha_t")
CHUNK = 1 << 16


@dataclass
class IterateState:
    """``theta`` is the iterate after ``t`` steps, ``theta_bar`` the mean of the
    first ``t`` iterates (``theta_0`` when ``t == 0``), ``z`` the trace."""

    theta: np.ndarray
    theta_bar: np.ndarray
    t: int
    z: np.ndarray


@dataclass
class Trajectory:
    t: np.ndarray
    theta_norm_err: np.ndarray
    value_D_err: np.ndarray
    avg_value_D_err: np.ndarray
    alpha_t: np.ndarray

    def rows(self):
        return zip(self.t.tolist(), self.theta_norm_err.tolist(), self.value_D_err.tolist(),
                   self.avg_value_D_err.tolist(), self.alpha_t.tolist())


@dataclass
class RunResult:
    final: IterateState
    trajectory: Trajectory | None
    snapshots: np.ndarray | None        # recorded theta_t, one row per recorded t
    snapshot_bars: np.ndarray | None
    max_pathwise_excess: float | None   # only when run with check=True


# --------------------------------------------------------------------------
# single-tuple updates

def td0_gradient(theta: np.ndarray, obs: Observation, features: FeatureMap,
                 gamma: float) -> np.ndarray:
    Phi = features.Phi
    delta = obs.r + gamma * (Phi[obs.s_next] @ theta) - Phi[obs.s] @ theta
    return delta * Phi[obs.s]


def qlearn_optstop_gradient(theta: np.ndarray, obs: Observation, problem: OptimalStoppingProblem,
                            features: FeatureMap) -> np.ndarray:
    """``obs.r`` must be the continuation reward ``u(obs.s)``."""
    Phi = features.Phi
    nxt = max(problem.U[obs.s_next], float(Phi[obs.s_next] @ theta))
    delta = obs.r + problem.gamma * nxt - Phi[obs.s] @ theta
    return delta * Phi[obs.s]


def project_ball(theta: np.ndarray, R: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if R <= 0:
        raise ValueError("radius must be positive")
    nrm = float(np.linalg.norm(theta))
    if nrm > R:
        return theta * (R / nrm)
    return theta.copy()


def zeta_diagnostic(theta: np.ndarray, obs: Observation, mrp: MarkovRewardProcess,
                    features: FeatureMap, geometry: SteadyStateGeometry,
                    theta_star: np.ndarray) -> float:
    """Inner product of the gradient noise with ``theta - theta_star``."""
    noise = td0_gradient(theta, obs, features, mrp.gamma) - gbar(theta, mrp, features, geometry)
    return float(noise @ (theta - theta_star))


def zeta_lambda(theta: np.ndarray, obs: Observation, trace: np.ndarray, mrp: MarkovRewardProcess,
                features: FeatureMap, geometry: SteadyStateGeometry, lam: float,
                theta_star: np.ndarray) -> float:
    """Trace-weighted analogue of :func:`zeta_diagnostic`."""
    Phi = features.Phi
    delta = obs.r + mrp.gamma * (Phi[obs.s_next] @ theta) - Phi[obs.s] @ theta
    noise = delta * trace - xbar_lambda(theta, mrp, features, geometry, lam)
    return float(noise @ (theta - theta_star))


# --------------------------------------------------------------------------
# deterministic recursion

def mean_path_td(mrp: MarkovRewardProcess, features: FeatureMap, geometry: SteadyStateGeometry,
                 theta0: np.ndarray, T: int) -> np.ndarray:
    """Iterates ``theta_{t+1} = theta_t + (1 - gamma)/4 * gbar(theta_t)``.

    Returns a (T + 1, d) array holding theta_0 .. theta_T.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    alpha = (1.0 - mrp.gamma) / 4.0
    A, b = td0_system(mrp, features, geometry)
    out = np.empty((T + 1, features.d))
    theta = np.asarray(theta0, dtype=np.float64).copy()
    out[0] = theta
    for t in range(T):
        theta = theta + alpha * (A @ theta + b)
        out[t + 1] = theta
    return out


# --------------------------------------------------------------------------
# sample-driven runners

def _backend(backend: str | ModuleType | None) -> ModuleType:
    if backend is None:
        return _kernels._impl
    if isinstance(backend, str):
        return _kernels.load_backend(backend)
    return backend


def _check_horizon(schedule: StepSchedule, T: int) -> None:
    if T < 1:
        raise ConfigError(f"T must be at least 1, got {T}", field="T")
    if schedule.kind is ScheduleKind.ROBUST_SQRT and schedule.horizon != T:
        raise ConfigError(f"robust-sqrt schedule horizon {schedule.horizon} differs from T={T}",
                          field="schedule.horizon")


def _drive(sampler, features: FeatureMap, schedule: StepSchedule, T: int, *,
           radius: float, trace_decay: float, stop_reward: np.ndarray | None,
           theta0, theta_star, geometry, record_stride: int, check: bool,
           bound_a: float, bound_b: float, backend) -> RunResult:
    kern = _backend(backend)
    d = features.d
    Phi = features.Phi
    if Phi.shape[0] != sampler.mrp.n:
        raise ConfigError("features and sampler disagree on the number of states")
    theta = np.zeros(d) if theta0 is None else np.array(theta0, dtype=np.float64).reshape(-1)
    if theta.shape != (d,):
        raise ConfigError(f"theta0 must have length {d}", field="theta0")
    if math.isfinite(radius) and np.linalg.norm(theta) > radius:
        raise ConfigError(f"||theta0|| = {np.linalg.norm(theta):.6g} exceeds R = {radius:.6g}",
                          field="theta0")
    if record_stride < 0:
        raise ConfigError("record_stride must be non-negative", field="record_stride")
    bar = theta.copy()
    z = np.zeros(d)
    use_max = stop_reward is not None
    stop = np.ascontiguousarray(stop_reward, dtype=np.float64) if use_max else np.zeros(1)
    gamma = sampler.mrp.gamma
    n_rec = (T - 1) // record_stride + 1 if record_stride > 0 else 0
    rec_theta = np.zeros((n_rec, d))
    rec_bar = np.zeros((n_rec, d))
    worst = -math.inf
    j = 0
    for t0 in range(0, T, CHUNK):
        k = min(CHUNK, T - t0)
        s, r, sn = sampler.take(k)
        al = np.ascontiguousarray(schedule.alphas(t0, t0 + k))
        wrote, excess = kern.td_chunk(Phi, s, sn, np.ascontiguousarray(r), stop, use_max, gamma,
                                      trace_decay, al, radius, theta, bar, z, t0, record_stride,
                                      rec_theta[j:], rec_bar[j:], check, bound_a, bound_b)
        j += wrote
        worst = max(worst, excess)
    final = IterateState(theta=theta, theta_bar=bar, t=T, z=z)

    traj = None
    if theta_star is not None and geometry is not None:
        ts = np.append(np.arange(n_rec, dtype=np.int64) * max(record_stride, 1), T)
        th = np.vstack([rec_theta, theta[None, :]])
        tb = np.vstack([rec_bar, bar[None, :]])
        theta_star = np.asarray(theta_star, dtype=np.float64)
        diff = th - theta_star
        dbar = tb - theta_star
        Sigma = geometry.Sigma
        traj = Trajectory(
            t=ts,
            theta_norm_err=np.linalg.norm(diff, axis=1),
            value_D_err=np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", diff, Sigma, diff), 0.0)),
            avg_value_D_err=np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", dbar, Sigma, dbar), 0.0)),
            alpha_t=np.array([schedule.alpha(int(t)) for t in ts]),
        )
    return RunResult(final, traj, rec_theta if n_rec else None, rec_bar if n_rec else None,
                     worst if check else None)


def run_td0(sampler, features: FeatureMap, schedule: StepSchedule, T: int, *,
            radius: float | None = None, theta0: np.ndarray | None = None,
            theta_star: np.ndarray | None = None, geometry: SteadyStateGeometry | None = None,
            record_stride: int = 0, check: bool = False, backend=None) -> RunResult:
    """TD(0); projected onto the ball of radius ``radius`` unless it is None.

    With ``check=True`` the run also tracks how far the step norm exceeds
    ``r_max + 2 ||theta||`` (it never should).
    """
    _check_horizon(schedule, T)
    mrp = sampler.mrp
    if radius is None:
        if getattr(sampler, "markov", False):
            raise ConfigError("the Markov observation model requires the projected variant",
                              field="R")
        if schedule.kind is ScheduleKind.ROBUST_SQRT and math.sqrt(T) < 8.0 / (1.0 - mrp.gamma):
            raise ConfigError(f"1/sqrt(T) steps without projection need sqrt(T) >= 8/(1-gamma) "
                              f"= {8.0 / (1.0 - mrp.gamma):.6g}; got T={T}", field="T")
        radius = math.inf
    elif radius <= 0:
        raise ConfigError("R must be positive", field="R")
    return _drive(sampler, features, schedule, T, radius=float(radius), trace_decay=0.0,
                  stop_reward=None, theta0=theta0, theta_star=theta_star, geometry=geometry,
                  record_stride=record_stride, check=check, bound_a=mrp.r_max, bound_b=2.0,
                  backend=backend)


def run_td_lambda(sampler, features: FeatureMap, schedule: StepSchedule, T: int, lam: float,
                  radius: float, *, theta0: np.ndarray | None = None,
                  theta_star: np.ndarray | None = None, geometry: SteadyStateGeometry | None = None,
                  record_stride: int = 0, check: bool = False, backend=None) -> RunResult:
    """Projected TD(lambda) with accumulating trace ``z <- gamma lam z + phi(s)``.

    ``check=True`` tracks the excess of ``||delta z||`` over
    ``(r_max + 2 ||theta||)/(1 - gamma lam)``.
    """
    _check_horizon(schedule, T)
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}", field="lambda")
    if radius is None or not radius > 0:
        raise ConfigError("TD(lambda) needs a positive projection radius R", field="R")
    if not getattr(sampler, "markov", False):
        raise ConfigError("TD(lambda) consumes a single Markov trajectory", field="observation_model")
    mrp = sampler.mrp
    gl = mrp.gamma * lam
    return _drive(sampler, features, schedule, T, radius=float(radius), trace_decay=gl,
                  stop_reward=None, theta0=theta0, theta_star=theta_star, geometry=geometry,
                  record_stride=record_stride, check=check, bound_a=mrp.r_max / (1.0 - gl),
                  bound_b=2.0 / (1.0 - gl), backend=backend)


def run_qlearn_optstop(sampler, problem: OptimalStoppingProblem, features: FeatureMap,
                       schedule: StepSchedule, T: int, *, radius: float | None = None,
                       theta0: np.ndarray | None = None, theta_star: np.ndarray | None = None,
                       geometry: SteadyStateGeometry | None = None, record_stride: int = 0,
                       check: bool = False, backend=None) -> RunResult:
    """Q-learning for optimal stopping.

    ``sampler`` must draw from ``problem.reward_chain`` so that the observed
    reward is the continuation reward.  Projection requires ``r_max <= R``,
    under which every step has norm at most ``r_max + 2R`` (tracked with
    ``check=True``).
    """
    _check_horizon(schedule, T)
    chain = sampler.mrp
    if not (np.array_equal(chain.P, problem.P)
            and np.array_equal(chain.Rmat, problem.reward_chain.Rmat)
            and chain.gamma == problem.gamma):
        raise ConfigError("sampler does not draw from the stopping problem's reward chain")
    g = problem.gamma
    if radius is None:
        if getattr(sampler, "markov", False):
            raise ConfigError("the Markov observation model requires the projected variant",
                              field="R")
        radius = math.inf
        a, b = problem.r_max * (1.0 + g), 1.0 + g
    else:
        if problem.r_max > radius:
            raise ConfigError(f"projected stopping needs r_max = {problem.r_max:.6g} <= R = "
                              f"{radius:.6g}", field="R")
        a, b = problem.r_max + 2.0 * radius, 0.0
    return _drive(sampler, features, schedule, T, radius=float(radius), trace_decay=0.0,
                  stop_reward=problem.U, theta0=theta0, theta_star=theta_star, geometry=geometry,
                  record_stride=record_stride, check=check, bound_a=a, bound_b=b,
                  backend=backend)


# --------------------------------------------------------------------------
# CSV

def write_trajectory_csv(path: str | Path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t, a, b, c, al in traj.rows():
            w.writerow([t, repr(a), repr(b), repr(c), repr(al)])


def read_trajectory_csv(path: str | Path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {rows[0]}")
    cols = list(zip(*rows[1:])) if len(rows) > 1 else [()] * 5
    return Trajectory(np.array(cols[0], dtype=np.int64),
                      *(np.array(c, dtype=np.float64) for c in cols[1:]))
