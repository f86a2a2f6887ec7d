"""Config-driven experiments: load a TOML file, run every method for every seed, report.

Output layout under ``output_dir``::

    summary.json                    aggregate report (deterministic for a given config)
    timings.json                    wall-clock seconds per run
    <method>/run_<r>/samples.csv    chain trace (sampler methods)
    <method>/run_<r>/trace.csv      ascent trace (pegasus)
    <method>/run_<r>/clusters.json  UPGMA result (cluster estimates)
    <method>/run_<r>/trajectories.csv
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import json
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import tomli

from . import environments as envs
from .estimators import PegasusPolicySearch, RJMCMCPolicySearch, StateSpacePolicySearch
from .evaluation import default_horizon, estimate_expected_reward
from .exceptions import ConfigurationError
from .target import check_gamma
from .validation import check_positive_int, check_theta

__all__ = ["SCHEMA_VERSION", "ExperimentConfig", "EvalReport", "load_config", "parse_config",
           "build_environment", "run_seeds", "run_experiment", "evaluate_theta"]

SCHEMA_VERSION = 1

METHOD_TYPES = {
    "sampler": RJMCMCPolicySearch,
    "statespace": StateSpacePolicySearch,
    "pegasus": PegasusPolicySearch,
}

PRESETS = {
    "bimodal_linear_gaussian": envs.bimodal_linear_gaussian,
    "repellers_with_zones": envs.repellers_with_zones,
    "repellers_with_gaussian_goal": envs.repellers_with_gaussian_goal,
}

ENV_TYPES = {"linear_gaussian": envs.LinearGaussianSpec, "repellers": envs.RepellerSpec}

_EXPERIMENT_KEYS = {"name", "seed", "runs", "gamma", "output_dir", "jobs", "initial_theta"}
_EVAL_KEYS = {"num_rollouts", "horizon", "seed"}
_TOP_KEYS = {"experiment", "environment", "methods", "eval"}


def _reject_unknown(section: str, given, allowed):
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------


@dataclasses.dataclass
class ExperimentConfig:
    """A validated experiment description; ``raw`` keeps the parsed TOML tables."""

    name: str
    seed: int
    runs: int
    gamma: float
    output_dir: str
    jobs: int
    initial_theta: object
    environment: dict
    methods: list
    eval: dict
    raw: dict = dataclasses.field(repr=False, default_factory=dict)

    def environment_spec(self):
        return build_spec(self.environment)

    def make_environment(self):
        return envs.make_environment(self.environment_spec())

    def horizon(self) -> int:
        h = self.eval.get("horizon")
        return default_horizon(self.gamma) if h in (None, 0) else int(h)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    config = parse_config(raw)
    if not os.path.isabs(config.output_dir):
        config.output_dir = str(path.parent / config.output_dir)
    return config


def parse_config(raw: dict) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    _reject_unknown("top level", raw, _TOP_KEYS)
    exp = raw.get("experiment", {})
    _reject_unknown("experiment", exp, _EXPERIMENT_KEYS)
    ev = raw.get("eval", {})
    _reject_unknown("eval", ev, _EVAL_KEYS)
    if "environment" not in raw:
        raise ConfigurationError("missing [environment] table")
    methods = raw.get("methods", [])
    if not methods:
        raise ConfigurationError("at least one [[methods]] entry is required")

    gamma = float(exp.get("gamma", 0.9))
    try:
        check_gamma(gamma)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    config = ExperimentConfig(
        name=str(exp.get("name", "experiment")),
        seed=int(exp.get("seed", 0)),
        runs=check_positive_int(exp.get("runs", 1), "runs"),
        gamma=gamma,
        output_dir=str(exp.get("output_dir", "results")),
        jobs=check_positive_int(exp.get("jobs", 1), "jobs"),
        initial_theta=exp.get("initial_theta"),
        environment=raw["environment"],
        methods=[_parse_method(m, i) for i, m in enumerate(methods)],
        eval={"num_rollouts": check_positive_int(ev.get("num_rollouts", 1000), "num_rollouts"),
              "horizon": ev.get("horizon"), "seed": int(ev.get("seed", 0))},
        raw=raw,
    )
    env = config.make_environment()
    if config.initial_theta is not None:
        check_theta(config.initial_theta, env)
    names = [m["name"] for m in config.methods]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"method names must be unique, got {names}")
    for m in config.methods:
        _make_estimator(m, gamma, 0)
    return config


def _parse_method(table: dict, index: int) -> dict:
    table = dict(table)
    kind = table.pop("type", None)
    if kind not in METHOD_TYPES:
        raise ConfigurationError(
            f"methods[{index}].type must be one of {sorted(METHOD_TYPES)}, got {kind!r}")
    name = str(table.pop("name", kind))
    allowed = set(METHOD_TYPES[kind]().get_params()) - {"gamma", "random_state"}
    _reject_unknown(f"methods.{name}", table, allowed)
    return {"name": name, "type": kind, "params": table}


def _make_estimator(method: dict, gamma: float, seed: int):
    try:
        return METHOD_TYPES[method["type"]](gamma=gamma, random_state=seed, **method["params"])
    except TypeError as exc:
        raise ConfigurationError(f"method {method['name']}: {exc}") from None


def _reward_model(table: dict):
    table = dict(table)
    kind = table.pop("type", None)
    if kind == "zones":
        _reject_unknown("environment.reward", table, {"zones", "background"})
        zones = []
        for z in table.get("zones", []):
            _reject_unknown("environment.reward.zones", z, {"center", "radius", "level"})
            zones.append(envs.CircularZone(tuple(z["center"]), float(z["radius"]), float(z["level"])))
        if not zones:
            raise ConfigurationError("a zones reward needs at least one zone")
        return envs.CircularZones(tuple(zones), table.get("background"))
    if kind == "gaussian_goal":
        fields = {f.name for f in dataclasses.fields(envs.GaussianGoal)}
        _reject_unknown("environment.reward", table, fields)
        if "center" in table:
            table["center"] = tuple(table["center"])
        return envs.GaussianGoal(**table)
    raise ConfigurationError(f"environment.reward.type must be 'zones' or 'gaussian_goal', got {kind!r}")


def build_spec(table: dict):
    """Environment spec from an ``[environment]`` table: a preset, a type, plus overrides."""
    table = dict(table)
    preset = table.pop("preset", None)
    kind = table.pop("type", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
        base = PRESETS[preset]()
    elif kind in ENV_TYPES:
        base = ENV_TYPES[kind]()
    else:
        raise ConfigurationError(
            f"[environment] needs a preset or a type in {sorted(ENV_TYPES)}, got {kind!r}")
    if kind is not None and not isinstance(base, ENV_TYPES.get(kind, type(None))):
        raise ConfigurationError(f"preset {preset!r} is not of type {kind!r}")

    fields = {f.name for f in dataclasses.fields(base)}
    _reject_unknown("environment", table, fields)
    if "reward" in table:
        table["reward"] = _reward_model(table["reward"])
    if "bumps" in table:
        bumps = []
        for b in table["bumps"]:
            _reject_unknown("environment.bumps", b, {"weight", "center", "scale"})
            bumps.append(envs.GaussianBump(float(b["weight"]), tuple(b["center"]),
                                           float(b.get("scale", 1.0))))
        table["bumps"] = tuple(bumps)
    for key, value in table.items():
        if isinstance(value, list):
            table[key] = tuple(value)
    try:
        return dataclasses.replace(base, **table)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from None


def build_environment(config: ExperimentConfig):
    return config.make_environment()


def run_seeds(config: ExperimentConfig) -> list:
    """One integer seed per run, spawned from the master seed."""
    children = np.random.SeedSequence(config.seed).spawn(config.runs)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------


@dataclasses.dataclass
class EvalReport:
    """Per-run rows plus per-method aggregates; ``timings`` stays out of ``to_json``."""

    name: str
    rows: list
    aggregates: dict
    timings: list = dataclasses.field(default_factory=list)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "experiment": self.name,
                "rows": self.rows, "aggregates": self.aggregates}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def failures(self) -> list:
        return [r for r in self.rows if r["status"] != "ok"]


def evaluate_theta(config: ExperimentConfig, theta, run: int = 0, env=None):
    """Return estimate ``(mean, std_err)`` under the config's evaluation settings."""
    env = env or config.make_environment()
    theta = check_theta(theta, env)
    rng = np.random.default_rng([config.eval["seed"], run])
    return estimate_expected_reward(env, theta, config.eval["num_rollouts"], config.horizon(),
                                    config.gamma, rng)


def _write_trajectories(path, trajs):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        first = trajs[0]
        ds, da = first.states.shape[1], first.actions.shape[1]
        writer.writerow(["traj", "n", *[f"x_{i}" for i in range(ds)],
                         *[f"u_{i}" for i in range(da)], "reward"])
        for j, t in enumerate(trajs):
            for n in range(len(t.rewards)):
                writer.writerow([j, n, *(repr(float(v)) for v in t.states[n]),
                                 *(repr(float(v)) for v in t.actions[n]), repr(float(t.rewards[n]))])


def _clean(value):
    """JSON-safe floats: NaN and infinities become None."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def _run_one(config: ExperimentConfig, method: dict, run: int, seed: int, write: bool):
    row = {"method": method["name"], "type": method["type"], "run": run, "seed": seed}
    start = time.perf_counter()
    try:
        env = config.make_environment()
        est = _make_estimator(method, config.gamma, seed).fit(env, config.initial_theta)
        mean, se = evaluate_theta(config, est.theta_, run, env)
        row.update(status="ok", theta=est.theta_.tolist(), J=float(mean), J_se=float(se),
                   samples_consumed=est.samples_consumed_)
        if hasattr(est, "acceptance_rates_"):
            row["acceptance_rates"] = est.acceptance_rates_
        if write:
            out = Path(config.output_dir) / method["name"] / f"run_{run:03d}"
            out.mkdir(parents=True, exist_ok=True)
            if hasattr(est, "sample_log_"):
                est.sample_log_.to_csv(out / "samples.csv")
                if est.sample_log_.final_trajs:
                    _write_trajectories(out / "trajectories.csv", est.sample_log_.final_trajs)
            if hasattr(est, "trace_"):
                est.trace_.to_csv(out / "trace.csv")
            if getattr(est, "cluster_result_", None) is not None:
                (out / "clusters.json").write_text(est.cluster_result_.to_json())
    except Exception as exc:  # recorded per run so one failure does not sink the batch
        row.update(status="failed", error={"type": type(exc).__name__, "message": str(exc),
                                           "state": _clean(getattr(exc, "state", None)),
                                           "traceback": traceback.format_exc(limit=3)})
    return _clean(row), time.perf_counter() - start


def _aggregate(rows: list, methods: list) -> dict:
    out = {}
    for m in methods:
        ok = [r for r in rows if r["method"] == m["name"] and r["status"] == "ok"]
        J = np.array([r["J"] for r in ok], dtype=float)
        agg = {"runs_ok": len(ok),
               "runs_failed": sum(r["method"] == m["name"] and r["status"] != "ok" for r in rows)}
        if ok:
            agg.update(J_mean=float(J.mean()), J_std=float(J.std(ddof=1)) if len(J) > 1 else 0.0,
                       J_min=float(J.min()), J_max=float(J.max()),
                       samples_consumed_mean=float(np.mean([r["samples_consumed"] for r in ok])))
            if "acceptance_rates" in ok[0]:
                agg["acceptance_rates_mean"] = {
                    move: _clean(float(np.nanmean([np.nan if r["acceptance_rates"][move] is None
                                                   else r["acceptance_rates"][move] for r in ok])))
                    for move in ok[0]["acceptance_rates"]}
        out[m["name"]] = agg
    return out


def _task(args):
    return _run_one(*args)


def run_experiment(config: ExperimentConfig, jobs: int = None, write: bool = True) -> EvalReport:
    """Run every method on every seed; the report is identical for any ``jobs``."""
    jobs = config.jobs if jobs is None else check_positive_int(jobs, "jobs")
    seeds = run_seeds(config)
    tasks = [(config, m, r, seeds[r], write) for m in config.methods for r in range(config.runs)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    rows = [r for r, _ in results]
    timings = [{"method": r["method"], "run": r["run"], "seconds": t} for r, t in results]
    report = EvalReport(config.name, rows, _aggregate(rows, config.methods), timings)
    if write:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(report.to_json() + "\n")
        (out / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    return report
