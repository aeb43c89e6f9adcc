"""Seeded random instances for property checks and experiments."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .errors import ConfigError, DegenerateFeatures, GenerationFailure, NotErgodic
from .mrp import FeatureMap, Instance, MarkovRewardProcess, steady_state_geometry
from .stopping import OptimalStoppingProblem

SELF_LOOP = 0.05
OMEGA_MIN = 1e-6


@dataclass(frozen=True)
class GeneratorConfig:
    """Ranges for random instances; ``n``/``d``/``gamma`` pin a value when set."""

    n_min: int = 2
    n_max: int = 50
    d_max: int = 8
    gamma_min: float = 0.1
    gamma_max: float = 0.95
    n: int | None = None
    d: int | None = None
    gamma: float | None = None
    identity_features: bool = False
    max_tries: int = 200

    def __post_init__(self):
        if not 1 <= self.n_min <= self.n_max:
            raise ConfigError("need 1 <= n_min <= n_max", field="generator.n_min")
        if self.d_max < 1:
            raise ConfigError("d_max must be positive", field="generator.d_max")
        if not 0 <= self.gamma_min <= self.gamma_max < 1:
            raise ConfigError("need 0 <= gamma_min <= gamma_max < 1", field="generator.gamma_min")
        if self.n is not None and self.n < 1:
            raise ConfigError("n must be positive", field="generator.n")
        if self.d is not None and self.n is not None and not 1 <= self.d <= self.n:
            raise ConfigError("need 1 <= d <= n", field="generator.d")
        if self.gamma is not None and not 0 <= self.gamma < 1:
            raise ConfigError("gamma must lie in [0, 1)", field="generator.gamma")

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "GeneratorConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known - {"seed"}
        if extra:
            name = sorted(extra)[0]
            raise ConfigError(f"unknown generator field \"{name}\"", field=f"generator.{name}")
        return cls(**{k: v for k, v in doc.items() if k in known})

    def to_json_dict(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


def random_transition_matrix(rng: np.random.Generator, n: int) -> np.ndarray:
    """Sparse-ish positive rows mixed with a self-loop of weight ``SELF_LOOP``."""
    density = rng.uniform(0.2, 1.0)
    W = rng.exponential(size=(n, n)) * (rng.random((n, n)) < density)
    empty = W.sum(axis=1) == 0
    W[empty, rng.integers(0, n, size=int(empty.sum()))] = 1.0
    W /= W.sum(axis=1, keepdims=True)
    P = SELF_LOOP * np.eye(n) + (1.0 - SELF_LOOP) * W
    P /= P.sum(axis=1, keepdims=True)
    return P


def random_features(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Rows uniform in the closed unit ball of R^d."""
    X = rng.standard_normal((n, d))
    X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1e-300)
    X *= rng.random((n, 1)) ** (1.0 / d)
    return X


def random_instance(rng: np.random.Generator, cfg: GeneratorConfig = GeneratorConfig()) -> Instance:
    for _ in range(cfg.max_tries):
        n = cfg.n if cfg.n is not None else int(rng.integers(cfg.n_min, cfg.n_max + 1))
        if cfg.identity_features:
            d = n
        else:
            d = cfg.d if cfg.d is not None else int(rng.integers(1, min(n, cfg.d_max) + 1))
        gamma = cfg.gamma if cfg.gamma is not None else float(rng.uniform(cfg.gamma_min,
                                                                           cfg.gamma_max))
        P = random_transition_matrix(rng, n)
        Rmat = rng.uniform(-1.0, 1.0, size=(n, n))
        Phi = np.eye(n) if cfg.identity_features else random_features(rng, n, d)
        try:
            mrp = MarkovRewardProcess(P, Rmat, gamma)
            features = FeatureMap(Phi)
            geometry = steady_state_geometry(mrp, features)
        except (NotErgodic, DegenerateFeatures):
            continue
        if geometry.omega > OMEGA_MIN:
            return Instance(mrp, features, geometry)
    raise GenerationFailure(f"no acceptable instance after {cfg.max_tries} draws")


def random_stopping_problem(rng: np.random.Generator, chain: MarkovRewardProcess,
                            scale: float = 1.0) -> OptimalStoppingProblem:
    """Continuation and stop rewards uniform in ``[-scale, scale]`` on a given chain."""
    u = rng.uniform(-scale, scale, size=chain.n)
    U = rng.uniform(-scale, scale, size=chain.n)
    return OptimalStoppingProblem(chain, u, U)
