"""Optimal stopping on a finite chain: operator, exact Q-values, policy evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NoConvergence
from .mrp import MarkovRewardProcess, _frozen, _solve


@dataclass(frozen=True, eq=False)
class OptimalStoppingProblem:
    """Stop in state s for reward ``U[s]``, or continue for ``u[s]`` and move on.

    ``chain`` supplies ``P`` and ``gamma``; its reward matrix is ignored.
    """

    chain: MarkovRewardProcess
    u: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        n = self.chain.n
        u = np.asarray(self.u, dtype=np.float64).reshape(-1)
        U = np.asarray(self.U, dtype=np.float64).reshape(-1)
        if u.shape != (n,) or U.shape != (n,):
            raise ValueError(f"u and U must have length {n}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(U))):
            raise ValueError("u and U must be finite")
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "U", _frozen(U))

    @classmethod
    def from_arrays(cls, P, gamma: float, u, U) -> "OptimalStoppingProblem":
        P = np.asarray(P, dtype=np.float64)
        chain = MarkovRewardProcess(P, np.zeros_like(P), gamma)
        return cls(chain, u, U)

    @property
    def n(self) -> int:
        return self.chain.n

    @property
    def gamma(self) -> float:
        return self.chain.gamma

    @property
    def P(self) -> np.ndarray:
        return self.chain.P

    @cached_property
    def r_max(self) -> float:
        return float(max(np.max(np.abs(self.u)), np.max(np.abs(self.U))))

    @cached_property
    def reward_chain(self) -> MarkovRewardProcess:
        """The chain with transition reward ``u[s]``; samplers draw from this."""
        Rmat = np.repeat(self.u[:, None], self.n, axis=1)
        return MarkovRewardProcess(self.P, Rmat, self.gamma, check_ergodicity=False)


def stopping_operator(problem: OptimalStoppingProblem, Q: np.ndarray) -> np.ndarray:
    """``u + gamma * P max(U, Q)``; works column-wise on 2-D input."""
    Q = np.asarray(Q, dtype=np.float64)
    U = problem.U[:, None] if Q.ndim == 2 else problem.U
    u = problem.u[:, None] if Q.ndim == 2 else problem.u
    return u + problem.gamma * (problem.P @ np.maximum(U, Q))


def optimal_q_values(problem: OptimalStoppingProblem, tol: float = 1e-10,
                     max_iter: int | None = None) -> np.ndarray:
    """Continuation values of the optimal policy by dense value iteration.

    Stops once ``gamma/(1-gamma) * ||Q_{k+1} - Q_k||_inf <= tol``, which
    certifies ``||Q_{k+1} - Q*||_inf <= tol``.
    """
    g = problem.gamma
    Q = np.zeros(problem.n)
    if max_iter is None:
        scale = 2.0 * problem.r_max / (1.0 - g) + 1.0
        max_iter = 10 if g == 0 else int(math.ceil(math.log(tol * (1 - g) / scale) / math.log(g))) + 100
    for _ in range(max(max_iter, 2)):
        nxt = stopping_operator(problem, Q)
        step = float(np.max(np.abs(nxt - Q)))
        Q = nxt
        if g * step <= tol * (1.0 - g):
            return Q
    raise NoConvergence("value iteration for the stopping problem did not converge")


def optimal_values(problem: OptimalStoppingProblem, Q: np.ndarray | None = None) -> np.ndarray:
    """Value of the optimal policy when stopping at time 0 is allowed."""
    if Q is None:
        Q = optimal_q_values(problem)
    return np.maximum(problem.U, Q)


def stopping_policy_values(problem: OptimalStoppingProblem, stop: np.ndarray) -> np.ndarray:
    """Exact value of the rule "stop the first time the state lies in ``stop``".

    States in the stop set are worth ``U``; the rest solve the linear system
    of the chain absorbed on the stop set.
    """
    stop = np.asarray(stop, dtype=bool)
    V = np.where(stop, problem.U, 0.0)
    cont = ~stop
    if np.any(cont):
        P = problem.P
        g = problem.gamma
        Pcc = P[np.ix_(cont, cont)]
        rhs = problem.u[cont] + g * (P[np.ix_(cont, stop)] @ problem.U[stop])
        V[cont] = _solve(np.eye(int(cont.sum())) - g * Pcc, rhs, "stopping policy evaluation")
    return V


def greedy_stop_set(problem: OptimalStoppingProblem, Q_approx: np.ndarray) -> np.ndarray:
    """Stop wherever the termination reward is at least the continuation estimate."""
    return problem.U >= np.asarray(Q_approx)
