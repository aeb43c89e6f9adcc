"""Finite Markov reward processes, linear features and steady-state geometry.

Everything here is exact linear algebra on small dense matrices.  Objects are
immutable after construction (their arrays are flagged read-only) so they can
be shared freely between threads and worker processes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, DegenerateFeatures, NotErgodic, SolveFailure

ROW_SUM_TOL = 1e-12
FEATURE_NORM_TOL = 1e-12
OMEGA_FLOOR = 1e-12
DIRECT_SOLVE_MAX_N = 2000


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    a.setflags(write=False)
    return a


def _solve(M: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        x = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(f"{what}: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolveFailure(f"{what}: non-finite solution")
    return x


# --------------------------------------------------------------------------
# ergodicity and stationary distribution

def is_irreducible(P: np.ndarray) -> bool:
    support = np.asarray(P) > 0
    ncomp, _ = connected_components(support, directed=True, connection="strong")
    return ncomp == 1


def chain_period(P: np.ndarray) -> int:
    """Period of an irreducible chain, from BFS levels rooted at state 0.

    The period equals the gcd of ``level[u] + 1 - level[v]`` over every edge
    ``u -> v`` of the support graph.
    """
    support = np.asarray(P) > 0
    if np.any(np.diag(support)):
        return 1
    n = support.shape[0]
    level = np.full(n, -1, dtype=np.int64)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(support[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    g = 0
    rows, cols = np.nonzero(support)
    for u, v in zip(rows, cols):
        if level[u] >= 0 and level[v] >= 0:
            g = math.gcd(g, int(abs(level[u] + 1 - level[v])))
            if g == 1:
                break
    return g


def check_ergodic(P: np.ndarray) -> None:
    if not is_irreducible(P):
        raise NotErgodic("transition matrix is reducible")
    period = chain_period(P)
    if period != 1:
        raise NotErgodic(f"transition matrix is periodic with period {period}")


def _check_stochastic(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise ValueError(f"P must be a non-empty square matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise ValueError("P has non-finite entries")
    if np.any(P < 0):
        raise ValueError("P has negative entries")
    dev = np.max(np.abs(P.sum(axis=1) - 1.0))
    if dev > ROW_SUM_TOL:
        raise ValueError(f"rows of P must sum to 1 (max deviation {dev:.3e})")
    return P


def stationary_distribution_power(P: np.ndarray, tol: float = 1e-12,
                                  max_iter: int = 10**6) -> np.ndarray:
    """Power iteration ``pi <- pi P`` from the uniform vector."""
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() <= tol:
            return nxt
        pi = nxt
    raise SolveFailure(f"power iteration did not reach tolerance {tol} in {max_iter} steps")


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Unique stationary distribution of an ergodic chain.

    Solves the stacked balance system ``[P^T - I; 1^T] pi = [0; 1]`` by least
    squares for moderate ``n``.  Falls back to power iteration for large
    chains or when the direct answer fails its residual check.
    """
    P = _check_stochastic(P)
    check_ergodic(P)
    n = P.shape[0]
    if n <= DIRECT_SOLVE_MAX_N:
        M = np.vstack([P.T - np.eye(n), np.ones((1, n))])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        if np.all(pi > 0) and np.max(np.abs(pi @ P - pi)) <= 1e-10:
            return pi / pi.sum()
    return stationary_distribution_power(P)


# --------------------------------------------------------------------------
# domain types

@dataclass(frozen=True, eq=False)
class MarkovRewardProcess:
    """Finite ergodic Markov reward process ``(P, Rmat, gamma)``.

    ``Rmat[s, s2]`` is the reward collected on the transition ``s -> s2``.
    """

    P: np.ndarray
    Rmat: np.ndarray
    gamma: float
    check_ergodicity: bool = field(default=True, repr=False)

    def __post_init__(self):
        P = _check_stochastic(self.P)
        Rmat = np.asarray(self.Rmat, dtype=np.float64)
        if Rmat.shape != P.shape:
            raise ValueError(f"Rmat shape {Rmat.shape} does not match P shape {P.shape}")
        if not np.all(np.isfinite(Rmat)):
            raise ValueError("Rmat has non-finite entries")
        gamma = float(self.gamma)
        if not (0.0 <= gamma < 1.0):
            raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
        if self.check_ergodicity:
            check_ergodic(P)
        object.__setattr__(self, "P", _frozen(P))
        object.__setattr__(self, "Rmat", _frozen(Rmat))
        object.__setattr__(self, "gamma", gamma)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @cached_property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.Rmat)))

    @cached_property
    def cumP(self) -> np.ndarray:
        """Row-wise cumulative sums with the last column pinned to 1."""
        c = np.cumsum(self.P, axis=1)
        c[:, -1] = 1.0
        c.setflags(write=False)
        return c


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Feature matrix ``Phi`` (n x d), row ``s`` is the feature vector of state s."""

    Phi: np.ndarray

    def __post_init__(self):
        Phi = np.asarray(self.Phi, dtype=np.float64)
        if Phi.ndim == 1:
            Phi = Phi[:, None]
        if Phi.ndim != 2 or Phi.shape[1] == 0:
            raise ValueError(f"Phi must be an n x d matrix, got shape {Phi.shape}")
        if not np.all(np.isfinite(Phi)):
            raise ValueError("Phi has non-finite entries")
        norms = np.linalg.norm(Phi, axis=1)
        worst = int(np.argmax(norms))
        if norms[worst] > 1.0 + FEATURE_NORM_TOL:
            raise ValueError(
                f"feature row {worst} has norm {norms[worst]:.6g} > 1; "
                "use normalize_features first")
        if np.linalg.matrix_rank(Phi) < Phi.shape[1]:
            raise DegenerateFeatures("columns of Phi are linearly dependent")
        object.__setattr__(self, "Phi", _frozen(Phi))

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    @property
    def d(self) -> int:
        return self.Phi.shape[1]


@dataclass(frozen=True, eq=False)
class SteadyStateGeometry:
    pi: np.ndarray
    Sigma: np.ndarray
    omega: float

    @property
    def Dmat(self) -> np.ndarray:
        return np.diag(self.pi)


def normalize_features(Phi: np.ndarray) -> np.ndarray:
    """Divide each row by ``max(1, ||row||)`` so every row has norm at most 1."""
    Phi = np.asarray(Phi, dtype=np.float64)
    norms = np.linalg.norm(Phi, axis=1, keepdims=True)
    return Phi / np.maximum(1.0, norms)


# --------------------------------------------------------------------------
# operators

def expected_reward(mrp: MarkovRewardProcess) -> np.ndarray:
    return np.einsum("ij,ij->i", mrp.P, mrp.Rmat)


def true_value_function(mrp: MarkovRewardProcess) -> np.ndarray:
    M = np.eye(mrp.n) - mrp.gamma * mrp.P
    return _solve(M, expected_reward(mrp), "value function solve")


def bellman_T(mrp: MarkovRewardProcess, V: np.ndarray) -> np.ndarray:
    """One-step Bellman operator; applied column-wise to a 2-D ``V``."""
    V = np.asarray(V, dtype=np.float64)
    rbar = expected_reward(mrp)
    if V.ndim == 2:
        rbar = rbar[:, None]
    return rbar + mrp.gamma * (mrp.P @ V)


def bellman_T_lambda(mrp: MarkovRewardProcess, lam: float, V: np.ndarray) -> np.ndarray:
    """Geometrically averaged multi-step Bellman operator, in closed form.

    ``(I - g l P)^{-1} (Rbar + g (1 - l) P V)`` with ``g = gamma``, ``l = lam``.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    V = np.asarray(V, dtype=np.float64)
    g = mrp.gamma
    M = np.eye(mrp.n) - g * lam * mrp.P
    rbar = expected_reward(mrp)
    if V.ndim == 2:
        rbar = rbar[:, None]
    rhs = rbar + g * (1.0 - lam) * (mrp.P @ V)
    return _solve(M, rhs, "multi-step operator solve")


def bellman_T_lambda_series(mrp: MarkovRewardProcess, lam: float, V: np.ndarray,
                            tol: float = 1e-12) -> np.ndarray:
    """Reference evaluation of the multi-step operator by its defining series.

    Sums ``(1 - lam) * sum_k lam^k T^{k+1} V`` term by term.  The tail after
    ``K`` terms is of order ``lam^K`` times the value scale, so ``K`` is chosen
    from ``max(lam, gamma*lam)``.  Only defined for ``lam < 1``.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError("series form needs 0 <= lambda < 1")
    V = np.asarray(V, dtype=np.float64)
    g = mrp.gamma
    rbar = expected_reward(mrp)
    if lam == 0.0:
        return rbar + g * (mrp.P @ V)
    K = int(math.ceil(math.log(tol) / math.log(lam))) + 1
    partial = np.zeros(mrp.n)          # sum_{t<=k} g^t P^t rbar
    disc_r = rbar.copy()               # g^k P^k rbar
    disc_v = g * (mrp.P @ V)           # g^{k+1} P^{k+1} V
    out = np.zeros(mrp.n)
    weight = 1.0 - lam
    for _ in range(K + 1):
        partial = partial + disc_r
        out += weight * (partial + disc_v)
        weight *= lam
        disc_r = g * (mrp.P @ disc_r)
        disc_v = g * (mrp.P @ disc_v)
    return out


# --------------------------------------------------------------------------
# geometry

def steady_state_geometry(mrp: MarkovRewardProcess, features: FeatureMap) -> SteadyStateGeometry:
    if features.n != mrp.n:
        raise ValueError(f"features have {features.n} rows but the chain has {mrp.n} states")
    pi = stationary_distribution(mrp.P)
    Phi = features.Phi
    Sigma = Phi.T @ (pi[:, None] * Phi)
    Sigma = 0.5 * (Sigma + Sigma.T)
    eig = np.linalg.eigvalsh(Sigma)
    omega = float(eig[0])
    if omega <= OMEGA_FLOOR:
        raise DegenerateFeatures(f"feature covariance min eigenvalue {omega:.3e} <= {OMEGA_FLOOR}")
    if eig[-1] > 1.0 + 1e-10:
        raise DegenerateFeatures(f"feature covariance max eigenvalue {eig[-1]:.6g} exceeds 1")
    return SteadyStateGeometry(pi=_frozen(pi), Sigma=_frozen(Sigma), omega=omega)


def d_norm(pi: np.ndarray, V: np.ndarray) -> float | np.ndarray:
    """Stationary-weighted 2-norm; column-wise when ``V`` is 2-D."""
    V = np.asarray(V, dtype=np.float64)
    out = np.sqrt(np.asarray(pi) @ (V * V))
    return float(out) if out.ndim == 0 else out


def project_D(geometry: SteadyStateGeometry, features: FeatureMap, V: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto span(Phi) in the stationary-weighted inner product."""
    Phi = features.Phi
    V = np.asarray(V, dtype=np.float64)
    weighted = geometry.pi[:, None] * V if V.ndim == 2 else geometry.pi * V
    coef = _solve(geometry.Sigma, Phi.T @ weighted, "projection solve")
    return Phi @ coef


# --------------------------------------------------------------------------
# bundled instance

@dataclass(frozen=True, eq=False)
class Instance:
    """A chain, its features and the derived geometry."""

    mrp: MarkovRewardProcess
    features: FeatureMap
    geometry: SteadyStateGeometry

    @classmethod
    def build(cls, P, Rmat, gamma, Phi) -> "Instance":
        mrp = MarkovRewardProcess(np.asarray(P, float), np.asarray(Rmat, float), float(gamma))
        features = FeatureMap(np.asarray(Phi, float))
        return cls(mrp, features, steady_state_geometry(mrp, features))

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "n": self.mrp.n,
            "gamma": self.mrp.gamma,
            "P": self.mrp.P.tolist(),
            "R": self.mrp.Rmat.tolist(),
            "Phi": self.features.Phi.tolist(),
        }


def _matrix_field(doc: dict, name: str, rows: int | None, cols: int | None) -> np.ndarray:
    if name not in doc:
        raise ConfigError(f"missing required field \"{name}\"", field=name)
    value = doc[name]
    if not isinstance(value, list) or not value:
        raise ConfigError(f"field \"{name}\" must be a non-empty list of rows", field=name)
    if rows is not None and len(value) != rows:
        raise ConfigError(f"field \"{name}\" has {len(value)} rows, expected {rows}", field=name)
    width = cols
    out = []
    for i, row in enumerate(value):
        if not isinstance(row, list):
            raise ConfigError(f"{name}[{i}] must be a list", field=f"{name}[{i}]")
        if width is None:
            width = len(row)
        if len(row) != width:
            raise ConfigError(f"{name}[{i}] has {len(row)} entries, expected {width}",
                              field=f"{name}[{i}]")
        for j, x in enumerate(row):
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise ConfigError(f"{name}[{i}][{j}] must be a finite number, got {x!r}",
                                  field=f"{name}[{i}][{j}]")
        out.append([float(x) for x in row])
    return np.array(out, dtype=np.float64)


def instance_from_json(doc: dict[str, Any] | str | Path) -> Instance:
    """Parse ``{"n", "gamma", "P", "R", "Phi"}`` into a validated :class:`Instance`.

    Schema problems raise :class:`ConfigError` naming the offending field.
    """
    if isinstance(doc, (str, Path)):
        path = Path(doc)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("instance must be a JSON object")
    if "n" not in doc:
        raise ConfigError("missing required field \"n\"", field="n")
    n = doc["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ConfigError(f"field \"n\" must be a positive integer, got {n!r}", field="n")
    if "gamma" not in doc:
        raise ConfigError("missing required field \"gamma\"", field="gamma")
    gamma = doc["gamma"]
    if isinstance(gamma, bool) or not isinstance(gamma, (int, float)) or not 0 <= gamma < 1:
        raise ConfigError(f"field \"gamma\" must be a number in [0, 1), got {gamma!r}",
                          field="gamma")
    P = _matrix_field(doc, "P", n, n)
    R = _matrix_field(doc, "R", n, n)
    Phi = _matrix_field(doc, "Phi", n, None)
    try:
        return Instance.build(P, R, gamma, Phi)
    except (ValueError, NotErgodic, DegenerateFeatures) as exc:
        raise ConfigError(str(exc)) from exc
