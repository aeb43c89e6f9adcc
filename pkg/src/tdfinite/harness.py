"""Monte Carlo experiments: run seeded trials, compare against a closed-form bound, fit rates.

An experiment is described by a JSON object::

    {
      "instance": {"n": 2, "gamma": 0.5, "P": [...], "R": [...], "Phi": [...]},
      "generator": {"n": 10, "d": 3, "gamma": 0.9, "seed": 4},    # instead of "instance"
      "algorithm": "td0" | "projected-td0" | "td-lambda" | "qlearn-optstop",
      "lambda": 0.5,                                    # td-lambda only
      "stopping": {"u": [...], "U": [...]} | {"seed": 1, "scale": 1.0},
      "observation_model": "iid" | "markov",
      "bound": "T2a",                                   # optional
      "schedule": {"kind": "constant", "alpha0": 0.01}, # optional when "bound" is set
      "alpha0": 0.01,                                   # constant-step bounds
      "R": "auto" | 12.5 | null,
      "T": 10000, "trials": 200, "master_seed": 0, "record_stride": 0,
      "statistic": "theta_sq" | "avg_value_D_sq",       # optional when "bound" is set
      "outputs": {"report": "report.json", "trials_dir": "trials",
                  "aggregate_csv": "aggregate.csv"}
    }

Trial ``i`` draws its observations from ``(master_seed, i)`` alone, and the
per-trial results are reduced in trial order, so reports do not depend on
the number of worker processes.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import stats

from .algorithms import (Trajectory, run_qlearn_optstop, run_td0, run_td_lambda,
                         write_trajectory_csv)
from .bounds import (AVG_VALUE_D_SQ, STATISTIC, THETA_SQ, BoundConstants, BoundName,
                     projection_radius_bound, schedule_for, sigma_sq, sigma_sq_optstop,
                     theorem_bound)
from .errors import ConfigError
from .fixed_point import optstop_fixed_point, td0_fixed_point, td_lambda_fixed_point
from .instances import GeneratorConfig, random_instance, random_stopping_problem
from .mrp import Instance, instance_from_json
from .sampling import iid_sampler, markov_sampler, mixing_profile, trial_generator
from .schedules import ScheduleKind, StepSchedule
from .stopping import OptimalStoppingProblem

SCHEMA_VERSION = 1
ALGORITHMS = ("td0", "projected-td0", "td-lambda", "qlearn-optstop")
MODELS = ("iid", "markov")
STATISTICS = (THETA_SQ, AVG_VALUE_D_SQ)
Z95 = 1.959963984540054

_KNOWN_FIELDS = {
    "instance", "generator", "algorithm", "lambda", "stopping", "observation_model", "bound",
    "schedule", "alpha0", "R", "T", "trials", "master_seed", "record_stride", "statistic",
    "outputs", "theta0", "check",
}


# --------------------------------------------------------------------------
# configuration

def _int_field(doc, name, default=None, minimum=None):
    if name not in doc:
        if default is None:
            raise ConfigError(f"missing required field \"{name}\"", field=name)
        return default
    v = doc[name]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"field \"{name}\" must be an integer, got {v!r}", field=name)
    if minimum is not None and v < minimum:
        raise ConfigError(f"field \"{name}\" must be at least {minimum}, got {v}", field=name)
    return v


def _num_field(doc, name):
    v = doc.get(name)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"field \"{name}\" must be a finite number, got {v!r}", field=name)
    return float(v)


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    observation_model: str
    T: int
    trials: int = 1
    master_seed: int = 0
    instance: dict | None = None
    generator: dict | None = None
    lam: float | None = None
    stopping: dict | None = None
    bound: str | None = None
    schedule: dict | None = None
    alpha0: float | None = None
    R: float | str | None = "auto"
    record_stride: int = 0
    statistic: str | None = None
    theta0: tuple[float, ...] | None = None
    check: bool = False
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}",
                              field="algorithm")
        if self.observation_model not in MODELS:
            raise ConfigError(f"observation_model must be one of {MODELS}, got "
                              f"{self.observation_model!r}", field="observation_model")
        if self.T < 1:
            raise ConfigError("T must be at least 1", field="T")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1", field="trials")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative", field="master_seed")
        if (self.instance is None) == (self.generator is None):
            raise ConfigError("give exactly one of \"instance\" and \"generator\"",
                              field="instance")
        if self.algorithm == "td0" and self.R is not None:
            raise ConfigError("td0 is the unprojected variant; set R to null or use "
                              "projected-td0", field="R")
        if self.algorithm in ("projected-td0", "td-lambda") and self.R is None:
            raise ConfigError(f"{self.algorithm} needs a projection radius", field="R")
        if isinstance(self.R, str) and self.R != "auto":
            raise ConfigError(f"R must be a number, \"auto\" or null, got {self.R!r}", field="R")
        if isinstance(self.R, (int, float)) and not self.R > 0:
            raise ConfigError("R must be positive", field="R")
        if self.observation_model == "markov" and self.R is None:
            raise ConfigError("the markov observation model requires a projected variant",
                              field="R")
        if self.algorithm == "td-lambda":
            if self.lam is None or not 0.0 <= self.lam <= 1.0:
                raise ConfigError("td-lambda needs \"lambda\" in [0, 1]", field="lambda")
            if self.observation_model != "markov":
                raise ConfigError("td-lambda runs on the markov observation model",
                                  field="observation_model")
        if self.bound is not None:
            try:
                BoundName(self.bound)
            except ValueError:
                raise ConfigError(f"unknown bound {self.bound!r}", field="bound") from None
        if self.statistic is not None and self.statistic not in STATISTICS:
            raise ConfigError(f"statistic must be one of {STATISTICS}", field="statistic")
        if self.record_stride < 0:
            raise ConfigError("record_stride must be non-negative", field="record_stride")

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("experiment config must be a JSON object")
        extra = sorted(set(doc) - _KNOWN_FIELDS)
        if extra:
            raise ConfigError(f"unknown field \"{extra[0]}\"", field=extra[0])
        for name in ("algorithm", "observation_model"):
            if name not in doc:
                raise ConfigError(f"missing required field \"{name}\"", field=name)
            if not isinstance(doc[name], str):
                raise ConfigError(f"field \"{name}\" must be a string", field=name)
        for name in ("instance", "generator", "stopping", "schedule", "outputs"):
            if name in doc and doc[name] is not None and not isinstance(doc[name], dict):
                raise ConfigError(f"field \"{name}\" must be an object", field=name)
        R = doc.get("R", "auto")
        if R is not None and not isinstance(R, str):
            R = _num_field(doc, "R")
        theta0 = doc.get("theta0")
        if theta0 is not None:
            if not isinstance(theta0, list) or not all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) for x in theta0):
                raise ConfigError("theta0 must be a list of numbers", field="theta0")
            theta0 = tuple(float(x) for x in theta0)
        bound = doc.get("bound")
        if bound is not None and not isinstance(bound, str):
            raise ConfigError("field \"bound\" must be a string", field="bound")
        return cls(
            algorithm=doc["algorithm"],
            observation_model=doc["observation_model"],
            T=_int_field(doc, "T", minimum=1),
            trials=_int_field(doc, "trials", 1, minimum=1),
            master_seed=_int_field(doc, "master_seed", 0, minimum=0),
            instance=doc.get("instance"),
            generator=doc.get("generator"),
            lam=_num_field(doc, "lambda"),
            stopping=doc.get("stopping"),
            bound=bound,
            schedule=doc.get("schedule"),
            alpha0=_num_field(doc, "alpha0"),
            R=R,
            record_stride=_int_field(doc, "record_stride", 0, minimum=0),
            statistic=doc.get("statistic"),
            theta0=theta0,
            check=bool(doc.get("check", False)),
            outputs=dict(doc.get("outputs") or {}),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"{path}: no such file") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        return cls.from_json_dict(doc)

    def to_json_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "algorithm": self.algorithm, "observation_model": self.observation_model,
            "T": self.T, "trials": self.trials, "master_seed": self.master_seed,
            "R": self.R, "record_stride": self.record_stride,
        }
        for name, key in (("instance", "instance"), ("generator", "generator"),
                          ("lam", "lambda"), ("stopping", "stopping"), ("bound", "bound"),
                          ("schedule", "schedule"), ("alpha0", "alpha0"),
                          ("statistic", "statistic")):
            if getattr(self, name) is not None:
                out[key] = getattr(self, name)
        if self.theta0 is not None:
            out["theta0"] = list(self.theta0)
        if self.check:
            out["check"] = True
        if self.outputs:
            out["outputs"] = self.outputs
        return out

    def with_horizon(self, T: int) -> "ExperimentConfig":
        """Same experiment at horizon ``T``; a 1/sqrt(T) schedule follows the horizon."""
        sched = self.schedule
        if sched is not None and sched.get("kind") == ScheduleKind.ROBUST_SQRT.value:
            sched = {**sched, "horizon": T}
        return replace(self, T=T, schedule=sched)


def _schedule_from_dict(doc: dict) -> StepSchedule:
    if "kind" not in doc:
        raise ConfigError("missing required field \"schedule.kind\"", field="schedule.kind")
    try:
        kind = ScheduleKind(doc["kind"])
    except ValueError:
        raise ConfigError(f"unknown schedule kind {doc['kind']!r}; expected one of "
                          f"{[k.value for k in ScheduleKind]}", field="schedule.kind") from None
    extra = sorted(set(doc) - {"kind", "alpha0", "horizon", "beta", "shift", "c"})
    if extra:
        raise ConfigError(f"unknown schedule field \"{extra[0]}\"", field=f"schedule.{extra[0]}")
    args = {}
    for name in ("alpha0", "beta", "shift", "c"):
        if name in doc:
            v = doc[name]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"schedule.{name} must be a number", field=f"schedule.{name}")
            args[name] = float(v)
    if "horizon" in doc:
        v = doc["horizon"]
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError("schedule.horizon must be an integer", field="schedule.horizon")
        args["horizon"] = v
    return StepSchedule(kind, **args)


# --------------------------------------------------------------------------
# preparation: everything computed once per experiment

@dataclass(frozen=True, eq=False)
class Prepared:
    config: ExperimentConfig
    instance: Instance
    problem: OptimalStoppingProblem | None
    theta_star: np.ndarray
    theta0: np.ndarray
    radius: float | None
    schedule: StepSchedule
    constants: BoundConstants
    statistic: str
    bound_value: float | None


def _load_instance(cfg: ExperimentConfig) -> Instance:
    if cfg.instance is not None:
        return instance_from_json(cfg.instance)
    gen = dict(cfg.generator)
    seed = gen.pop("seed", cfg.master_seed)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("generator.seed must be a non-negative integer", field="generator.seed")
    return random_instance(trial_generator(seed), GeneratorConfig.from_json_dict(gen))


def _load_stopping(cfg: ExperimentConfig, inst: Instance) -> OptimalStoppingProblem:
    doc = cfg.stopping or {}
    if "u" in doc or "U" in doc:
        try:
            return OptimalStoppingProblem(inst.mrp, np.asarray(doc.get("u"), dtype=np.float64),
                                          np.asarray(doc.get("U"), dtype=np.float64))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field="stopping") from exc
    seed = doc.get("seed", cfg.master_seed)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("stopping.seed must be a non-negative integer", field="stopping.seed")
    scale = float(doc.get("scale", 1.0))
    return random_stopping_problem(trial_generator(seed, 1), inst.mrp, scale)


def _check_bound_matches(cfg: ExperimentConfig, which: BoundName) -> None:
    family = which.value[:2]
    model = cfg.observation_model
    alg = cfg.algorithm
    if family == "T1":
        raise ConfigError("T1 bounds describe the deterministic mean path, not sampled runs",
                          field="bound")
    if family == "T2" and model != "iid":
        raise ConfigError(f"{which.value} is stated for the iid observation model", field="bound")
    if family == "T3" and (model != "markov" or alg not in ("projected-td0", "qlearn-optstop")):
        raise ConfigError(f"{which.value} is stated for projected TD(0) on the markov model",
                          field="bound")
    if family == "T4" and alg != "td-lambda":
        raise ConfigError(f"{which.value} is stated for projected TD(lambda)", field="bound")
    if family in ("T2", "T3") and alg == "td-lambda":
        raise ConfigError(f"{which.value} does not cover TD(lambda)", field="bound")


def prepare(cfg: ExperimentConfig) -> Prepared:
    """Build the instance, the limit point, the bound constants and the schedule."""
    inst = _load_instance(cfg)
    mrp, feats, geom = inst.mrp, inst.features, inst.geometry
    d = feats.d
    problem = None
    if cfg.algorithm == "qlearn-optstop":
        problem = _load_stopping(cfg, inst)
        theta_star = optstop_fixed_point(problem, feats, geom).theta_star
        r_max = problem.r_max
    elif cfg.algorithm == "td-lambda":
        theta_star = td_lambda_fixed_point(mrp, feats, geom, cfg.lam).theta_star
        r_max = mrp.r_max
    else:
        theta_star = td0_fixed_point(mrp, feats, geom).theta_star
        r_max = mrp.r_max

    theta0 = np.zeros(d) if cfg.theta0 is None else np.asarray(cfg.theta0, dtype=np.float64)
    if theta0.shape != (d,):
        raise ConfigError(f"theta0 must have length {d}", field="theta0")

    if cfg.R is None:
        radius = None
    elif cfg.R == "auto":
        model = problem if problem is not None else mrp
        radius = projection_radius_bound(model, geom)
        if problem is not None:
            radius = max(radius, problem.r_max)
    else:
        radius = float(cfg.R)

    sig = None
    if cfg.algorithm == "qlearn-optstop":
        sig = sigma_sq_optstop(problem, feats, theta_star, geom)
    elif cfg.algorithm != "td-lambda":
        sig = sigma_sq(mrp, feats, theta_star, geom)
    profile = mixing_profile(mrp) if cfg.observation_model == "markov" else None
    constants = BoundConstants(
        gamma=mrp.gamma, omega=geom.omega, r_max=r_max,
        theta_dist_sq=float(np.sum((theta_star - theta0) ** 2)), sigma_sq=sig, R=radius,
        lam=cfg.lam if cfg.lam is not None else 0.0, profile=profile)

    which = BoundName(cfg.bound) if cfg.bound is not None else None
    alpha0 = cfg.alpha0
    if cfg.schedule is not None:
        schedule = _schedule_from_dict(cfg.schedule)
        if schedule.kind is ScheduleKind.ROBUST_SQRT and schedule.horizon != cfg.T:
            raise ConfigError(f"schedule.horizon must equal T = {cfg.T}", field="schedule.horizon")
        if schedule.kind is ScheduleKind.CONSTANT:
            if alpha0 is not None and alpha0 != schedule.alpha0:
                raise ConfigError("alpha0 disagrees with schedule.alpha0", field="alpha0")
            alpha0 = schedule.alpha0
    else:
        if which is None:
            raise ConfigError("give a \"schedule\" or a \"bound\" to derive it from",
                              field="schedule")
        schedule = schedule_for(which, constants, cfg.T, alpha0)

    bound_value = None
    if which is not None:
        _check_bound_matches(cfg, which)
        wanted = schedule_for(which, constants, cfg.T, alpha0)
        if wanted != schedule:
            raise ConfigError(f"{which.value} is stated for the schedule "
                              f"{wanted.to_json_dict()}, got {schedule.to_json_dict()}",
                              field="schedule")
        if which.value[:2] in ("T3", "T4") and radius is None:
            raise ConfigError("Markov-model bounds need the projection radius", field="R")
        bound_value = theorem_bound(which, constants, cfg.T, alpha0)
        statistic = STATISTIC[which]
        if cfg.statistic is not None and cfg.statistic != statistic:
            raise ConfigError(f"{which.value} controls {statistic}", field="statistic")
    else:
        statistic = cfg.statistic or THETA_SQ
    return Prepared(cfg, inst, problem, theta_star, theta0, radius, schedule, constants,
                    statistic, bound_value)


# --------------------------------------------------------------------------
# trials

@dataclass(frozen=True)
class TrialResult:
    trajectory: Trajectory      # always ends with the row for t = T
    theta: np.ndarray           # theta_T
    theta_bar: np.ndarray       # mean of theta_0 .. theta_{T-1}


def run_trial(prep: Prepared, index: int) -> TrialResult:
    """One seeded run of the configured algorithm."""
    cfg = prep.config
    inst = prep.instance
    chain = prep.problem.reward_chain if prep.problem is not None else inst.mrp
    seed = trial_generator(cfg.master_seed, index)
    if cfg.observation_model == "iid":
        sampler = iid_sampler(chain, inst.geometry, seed)
    else:
        sampler = markov_sampler(chain, seed)
    common = dict(theta0=prep.theta0, theta_star=prep.theta_star, geometry=inst.geometry,
                  record_stride=cfg.record_stride, check=cfg.check)
    if cfg.algorithm == "td-lambda":
        res = run_td_lambda(sampler, inst.features, prep.schedule, cfg.T, cfg.lam, prep.radius,
                            **common)
    elif cfg.algorithm == "qlearn-optstop":
        res = run_qlearn_optstop(sampler, prep.problem, inst.features, prep.schedule, cfg.T,
                                 radius=prep.radius, **common)
    else:
        res = run_td0(sampler, inst.features, prep.schedule, cfg.T, radius=prep.radius, **common)
    if cfg.check and res.max_pathwise_excess > 1e-9:
        raise AssertionError(f"trial {index}: step norm exceeded its pathwise bound by "
                             f"{res.max_pathwise_excess:.3e}")
    return TrialResult(res.trajectory, res.final.theta, res.final.theta_bar)


def _trial_statistic(traj: Trajectory, statistic: str) -> float:
    if statistic == THETA_SQ:
        return float(traj.theta_norm_err[-1]) ** 2
    return float(traj.avg_value_D_err[-1]) ** 2


_WORKER_PREP: Prepared | None = None


def _init_worker(prep: Prepared) -> None:
    global _WORKER_PREP
    _WORKER_PREP = prep


def _worker_trial(index: int) -> TrialResult:
    return run_trial(_WORKER_PREP, index)


def run_trials(prep: Prepared, jobs: int = 1) -> list[TrialResult]:
    n = prep.config.trials
    if jobs <= 1 or n == 1:
        return [run_trial(prep, i) for i in range(n)]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(prep,)) as pool:
        return list(pool.map(_worker_trial, range(n), chunksize=max(1, n // (4 * jobs))))


# --------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class BoundReport:
    bound_name: str | None
    bound_value: float | None
    empirical_mean: float
    empirical_ci95: float
    satisfied: bool | None
    trials: int
    T: int
    statistic: str
    algorithm: str
    observation_model: str
    schedule: dict
    constants: dict
    theta_star: tuple[float, ...]
    master_seed: int

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "bound_name": self.bound_name,
            "bound_value": self.bound_value,
            "empirical_mean": self.empirical_mean,
            "empirical_ci95": self.empirical_ci95,
            "satisfied": self.satisfied,
            "trials": self.trials,
            "T": self.T,
            "statistic": self.statistic,
            "algorithm": self.algorithm,
            "observation_model": self.observation_model,
            "schedule": self.schedule,
            "constants": self.constants,
            "theta_star": list(self.theta_star),
            "master_seed": self.master_seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"


def mean_ci95(values: Sequence[float]) -> tuple[float, float]:
    """Mean and normal-approximation 95% half-width (0 for a single value)."""
    x = np.asarray(values, dtype=np.float64)
    mean = float(np.mean(x))
    if x.size < 2:
        return mean, 0.0
    return mean, float(Z95 * np.std(x, ddof=1) / math.sqrt(x.size))


@dataclass(frozen=True)
class ExperimentResult:
    report: BoundReport
    trials: list[TrialResult]
    per_trial: np.ndarray       # the statistic of each trial, in trial order

    @property
    def trajectories(self) -> list[Trajectory]:
        return [tr.trajectory for tr in self.trials]

    @property
    def final_thetas(self) -> np.ndarray:
        return np.stack([tr.theta for tr in self.trials])

    def aggregate_rows(self):
        """Per recorded t: mean over trials of the squared errors, and the step size."""
        first = self.trajectories[0]
        sq = [np.stack([getattr(tr, c) ** 2 for tr in self.trajectories])
              for c in ("theta_norm_err", "value_D_err", "avg_value_D_err")]
        means = [m.mean(axis=0) for m in sq]
        return zip(first.t.tolist(), *(m.tolist() for m in means), first.alpha_t.tolist())


AGGREGATE_COLUMNS = ("t", "mean_theta_sq_err", "mean_value_D_sq_err", "mean_avg_value_D_sq_err",
                     "alpha_t")


def write_outputs(result: ExperimentResult, out_dir: str | Path, outputs: dict) -> dict[str, str]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    report_path = out_dir / outputs.get("report", "report.json")
    report_path.write_text(result.report.to_json())
    written["report"] = str(report_path)
    trials_dir = out_dir / outputs.get("trials_dir", "trials")
    trials_dir.mkdir(parents=True, exist_ok=True)
    width = len(str(len(result.trajectories) - 1))
    for i, tr in enumerate(result.trajectories):
        write_trajectory_csv(trials_dir / f"trial_{i:0{width}d}.csv", tr)
    written["trials_dir"] = str(trials_dir)
    agg_path = out_dir / outputs.get("aggregate_csv", "aggregate.csv")
    with open(agg_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for t, a, b, c, al in result.aggregate_rows():
            w.writerow([t, repr(a), repr(b), repr(c), repr(al)])
    written["aggregate_csv"] = str(agg_path)
    return written


def run_experiment(config: ExperimentConfig | dict, jobs: int = 1,
                   out_dir: str | Path | None = None) -> ExperimentResult:
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_json_dict(config)
    prep = prepare(cfg)
    trials = run_trials(prep, jobs)
    per_trial = np.array([_trial_statistic(tr.trajectory, prep.statistic) for tr in trials])
    mean, ci = mean_ci95(per_trial)
    satisfied = None if prep.bound_value is None else bool(mean + ci <= prep.bound_value)
    report = BoundReport(
        bound_name=cfg.bound, bound_value=prep.bound_value, empirical_mean=mean,
        empirical_ci95=ci, satisfied=satisfied, trials=cfg.trials, T=cfg.T,
        statistic=prep.statistic, algorithm=cfg.algorithm,
        observation_model=cfg.observation_model, schedule=prep.schedule.to_json_dict(),
        constants=prep.constants.to_json_dict() | {"n": prep.instance.mrp.n,
                                                   "d": prep.instance.features.d},
        theta_star=tuple(float(x) for x in prep.theta_star), master_seed=cfg.master_seed)
    result = ExperimentResult(report, trials, per_trial)
    if out_dir is not None:
        write_outputs(result, out_dir, cfg.outputs)
    return result


# --------------------------------------------------------------------------
# rate fits

@dataclass(frozen=True)
class SweepResult:
    T_grid: tuple[int, ...]
    means: tuple[float, ...]
    ci95: tuple[float, ...]
    slope: float
    slope_ci95: float
    intercept: float
    last_decade_slope: float | None
    statistic: str

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "T_grid": list(self.T_grid), "means": list(self.means), "ci95": list(self.ci95),
            "slope": self.slope, "slope_ci95": self.slope_ci95, "intercept": self.intercept,
            "last_decade_slope": self.last_decade_slope, "statistic": self.statistic,
        }


def loglog_slope(T: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares slope of log y on log T, its 95% half-width, and the intercept."""
    x = np.log(np.asarray(T, dtype=np.float64))
    v = np.log(np.asarray(y, dtype=np.float64))
    fit = stats.linregress(x, v)
    if len(x) > 2:
        half = float(stats.t.ppf(0.975, len(x) - 2) * fit.stderr)
    else:
        half = math.inf
    return float(fit.slope), half, float(fit.intercept)


def geometric_grid(lo: int, hi: int, points: int) -> list[int]:
    """``points`` integers geometrically spaced from ``lo`` to ``hi``."""
    if points < 2 or lo < 1 or hi <= lo:
        raise ConfigError("need points >= 2 and 1 <= lo < hi", field="T_grid")
    return [int(round(lo * (hi / lo) ** (k / (points - 1)))) for k in range(points)]


def _check_grid(T_grid: Sequence[int]) -> None:
    if len(T_grid) < 4:
        raise ConfigError("a rate fit needs at least 4 horizons", field="T_grid")
    if any(t < 1 for t in T_grid) or any(b <= a for a, b in zip(T_grid, T_grid[1:])):
        raise ConfigError("horizons must be positive and increasing", field="T_grid")
    ratios = np.diff(np.log(np.asarray(T_grid, dtype=np.float64)))
    if np.max(ratios) - np.min(ratios) > 0.05 * np.mean(ratios):
        raise ConfigError("horizons must be geometrically spaced", field="T_grid")


def rate_sweep(config: ExperimentConfig | dict, T_grid: Sequence[int], jobs: int = 1) -> SweepResult:
    """Rerun the experiment at every horizon and fit the log-log slope of the mean error."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_json_dict(config)
    T_grid = [int(t) for t in T_grid]
    _check_grid(T_grid)
    means, cis = [], []
    statistic = None
    for T in T_grid:
        rep = run_experiment(cfg.with_horizon(T), jobs).report
        means.append(rep.empirical_mean)
        cis.append(rep.empirical_ci95)
        statistic = rep.statistic
    slope, half, icept = loglog_slope(T_grid, means)
    last = [i for i, t in enumerate(T_grid) if t * 10 >= T_grid[-1] * (1 - 1e-12)]
    last_slope = None
    if len(last) >= 2:
        last_slope = loglog_slope([T_grid[i] for i in last], [means[i] for i in last])[0]
    return SweepResult(tuple(T_grid), tuple(means), tuple(cis), slope, half, icept, last_slope,
                       statistic)
