"""Observation streams, seeded generators and exact mixing-time profiles.

Random numbers come from numpy's Philox counter-based generator keyed by a
``SeedSequence`` built from ``(master_seed, trial_index)``.  Every observation
consumes a fixed number of uniform doubles (two for i.i.d. draws, one per
Markov step, plus one for the initial state), so streams are identical no
matter how they are chunked.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels
from .mrp import MarkovRewardProcess, SteadyStateGeometry, stationary_distribution

TV_FLOOR = 1e-12
RHO_MIN = 1e-9
RHO_MAX = 1.0 - 1e-9
DEFAULT_MIXING_HORIZON = 100_000


class Observation(NamedTuple):
    s: int
    r: float
    s_next: int


def trial_generator(master_seed: int, trial_index: int = 0) -> np.random.Generator:
    """Generator for one trial; depends on ``(master_seed, trial_index)`` only."""
    if master_seed < 0 or trial_index < 0:
        raise ValueError("seeds must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([master_seed, trial_index])))


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, tuple):
        return trial_generator(*seed)
    return trial_generator(int(seed))


def _cumulative(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p)
    c[-1] = 1.0
    return c


class _Stream:
    mrp: MarkovRewardProcess
    _CHUNK = 1024

    def take(self, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def __iter__(self) -> Iterator[Observation]:
        while True:
            s, r, sn = self.take(self._CHUNK)
            for a, b, c in zip(s.tolist(), r.tolist(), sn.tolist()):
                yield Observation(a, b, c)


class IIDSampler(_Stream):
    """Independent tuples with ``s ~ pi`` and ``s_next ~ P(s, .)``."""

    markov = False

    def __init__(self, mrp: MarkovRewardProcess, pi: np.ndarray, seed):
        self.mrp = mrp
        self.rng = _as_generator(seed)
        self._cum_pi = _cumulative(np.asarray(pi, dtype=np.float64))

    def take(self, k: int):
        u = self.rng.random((k, 2))
        s = np.empty(k, dtype=np.int64)
        sn = np.empty(k, dtype=np.int64)
        _kernels.iid_draw(self._cum_pi, self.mrp.cumP, u, s, sn)
        return s, self.mrp.Rmat[s, sn], sn


class MarkovSampler(_Stream):
    """Consecutive transitions of one trajectory.

    The first state is drawn from ``start`` (the stationary distribution by
    default).  Any other start voids the stationarity assumed by the
    Markov-model bound constants, so it triggers a warning.
    """

    markov = True

    def __init__(self, mrp: MarkovRewardProcess, seed, start: np.ndarray | None = None):
        self.mrp = mrp
        self.rng = _as_generator(seed)
        if start is None:
            start = stationary_distribution(mrp.P)
        else:
            start = np.asarray(start, dtype=np.float64)
            warnings.warn("non-stationary start distribution: Markov-model bound "
                          "constants assume the chain starts in steady state",
                          stacklevel=2)
        u0 = self.rng.random()
        self.state = int(min(np.searchsorted(_cumulative(start), u0, side="right"), mrp.n - 1))

    def take(self, k: int):
        u = self.rng.random(k)
        states = np.empty(k + 1, dtype=np.int64)
        _kernels.markov_walk(self.mrp.cumP, self.state, u, states)
        self.state = int(states[-1])
        s = states[:-1]
        sn = states[1:]
        return s, self.mrp.Rmat[s, sn], sn


def iid_sampler(mrp: MarkovRewardProcess, geometry: SteadyStateGeometry, seed) -> IIDSampler:
    return IIDSampler(mrp, geometry.pi, seed)


def markov_sampler(mrp: MarkovRewardProcess, seed, start: np.ndarray | None = None) -> MarkovSampler:
    return MarkovSampler(mrp, seed, start)


# --------------------------------------------------------------------------
# mixing

@dataclass(frozen=True)
class MixingProfile:
    """Worst-case total-variation curve and a geometric envelope ``m * rho**t`` above it.

    The envelope dominates every entry of ``tv_curve`` larger than the
    round-off floor ``TV_FLOOR``.
    """

    tv_curve: np.ndarray
    m: float
    rho: float

    def to_json_dict(self) -> dict:
        return {"m": self.m, "rho": self.rho, "tv_curve": [float(x) for x in self.tv_curve]}


def tv_curve(P: np.ndarray, pi: np.ndarray, horizon: int | None = None) -> np.ndarray:
    """``max_s TV(P^t(s, .), pi)`` for t = 0, 1, ...

    With ``horizon=None`` the curve stops at the first value below
    ``TV_FLOOR`` (or after ``DEFAULT_MIXING_HORIZON`` steps).
    """
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    Pt = np.eye(n)
    limit = DEFAULT_MIXING_HORIZON if horizon is None else int(horizon)
    out = []
    for t in range(limit + 1):
        out.append(0.5 * float(np.max(np.abs(Pt - pi).sum(axis=1))))
        if horizon is None and out[-1] <= TV_FLOOR:
            break
        Pt = Pt @ P
    return np.array(out)


def fit_envelope(curve: np.ndarray) -> tuple[float, float]:
    """Tightest rate ``rho`` anchored at t = 1, then the smallest valid amplitude."""
    curve = np.asarray(curve, dtype=np.float64)
    sig = np.flatnonzero(curve > TV_FLOOR)
    last = int(sig[-1]) if sig.size else 0
    tv1 = curve[1] if curve.size > 1 else 0.0
    if tv1 <= TV_FLOOR:
        rho = RHO_MIN
    elif last >= 2:
        ts = np.arange(2, last + 1)
        rho = float(np.max((curve[ts] / tv1) ** (1.0 / (ts - 1))))
    elif curve.size > 2:
        # tv(2) already sits at round-off level
        rho = TV_FLOOR / tv1
    else:
        rho = float(tv1 / curve[0])
    rho = min(max(rho, RHO_MIN), RHO_MAX)
    ts = np.arange(0, last + 1)
    m = float(np.max(curve[ts] / rho ** ts.astype(np.float64)))
    return m, rho


def mixing_profile(mrp: MarkovRewardProcess, horizon: int | None = None) -> MixingProfile:
    pi = stationary_distribution(mrp.P)
    curve = tv_curve(mrp.P, pi, horizon)
    m, rho = fit_envelope(curve)
    curve.setflags(write=False)
    return MixingProfile(curve, m, rho)


def _first_power_below(m: float, rho: float, eps: float) -> int:
    """Smallest t >= 0 with ``m * rho**t <= eps``."""
    if m <= eps:
        return 0
    t = max(0, int(math.ceil(math.log(eps / m) / math.log(rho))))
    while t > 0 and m * rho ** (t - 1) <= eps:
        t -= 1
    while m * rho ** t > eps:
        t += 1
    return t


def tau_mix(profile: MixingProfile, eps: float) -> int:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return _first_power_below(profile.m, profile.rho, eps)


def tau_mix_lambda(profile: MixingProfile, gamma: float, lam: float, eps: float) -> int:
    """Larger of the chain mixing time and the trace forgetting time."""
    chain = tau_mix(profile, eps)
    gl = gamma * lam
    trace = 0 if gl == 0.0 else _first_power_below(1.0, gl, eps)
    return max(chain, trace)
