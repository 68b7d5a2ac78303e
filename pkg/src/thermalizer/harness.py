"""Experiment harness: configs, runners, and machine-readable records.

Every experiment is described by a JSON config, produces a list of flat
records written as CSV (schema versioned in a header comment line) plus a
meta JSON with the full config, versions, and wall-clock times. Rerunning an
identical (config, seed, thread count) reproduces the CSV byte for byte;
wall-clock therefore lives in the meta file only.

Long sweeps checkpoint per grid point into a JSONL sidecar so interrupted
runs resume without recomputation.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .channel import (
    ChannelParams,
    EigdiffGamma,
    TrajectoryBatch,
    gamma_policy_from_dict,
    perfect_knowledge_gamma,
    resolve_min_l,
)
from .hamiltonians import (
    Hamiltonian,
    gibbs_probabilities,
    gibbs_state,
    load_hamiltonian,
    make_harmonic,
    make_qubit,
    spectral_profile,
)
from .linalg import sample_haar_unitary, sample_interaction, unitarity_defect
from .planner import (
    plan_harmonic,
    plan_perfect_knowledge,
    plan_single_qubit,
    plan_zero_knowledge,
)
from .weakcoupling import (
    build_T,
    build_expected_T,
    detailed_balance_residual,
    fixed_point,
    i_sinc,
    spectral_gap,
    split_resonance,
    transition_element,
)

CSV_SCHEMA = 1

KINDS = ("trajectory", "min-l", "sweep-beta", "sweep-epsilon",
         "sweep-gamma-noise", "markov", "plan", "validate", "haar-check")

MIN_L_COLUMNS = ["name", "kind", "grid_index", "beta", "epsilon", "inv_epsilon",
                 "sigma", "alpha", "t", "atilde2", "gamma_kind", "metric",
                 "trials", "l_max", "min_l", "reached", "l_times_t",
                 "lambda_tilde", "mean_final_distance", "row_seed"]
TRAJECTORY_COLUMNS = ["name", "kind", "grid_index", "series", "alpha", "t",
                      "atilde2", "beta", "gamma_kind", "step", "mean_distance",
                      "sem_distance", "trials", "row_seed"]
MARKOV_COLUMNS = ["name", "kind", "grid_index", "beta", "gamma_mode", "alpha",
                  "t", "lambda_star", "lambda_tilde", "gibbs_residual",
                  "fixed_point_max_err", "row_seed"]
CHECK_COLUMNS = ["name", "kind", "check", "passed", "detail"]
PLAN_COLUMNS = ["name", "kind", "recipe", "alpha", "t", "steps",
                "lambda_tilde", "multiplier"]


class ConfigError(ValueError):
    """Invalid experiment config; message names the offending field."""


def _parse_beta(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise ConfigError(f"beta: cannot parse {value!r}")
    return float(value)


@dataclass
class ExperimentConfig:
    """Parameterization of one harness run; mirrors the JSON config format."""

    name: str
    kind: str
    system: dict = field(default_factory=dict)
    channel: dict = field(default_factory=dict)
    epsilon: float | None = None
    trials: int = 100
    max_trials: int | None = None
    l_max: int = 16384
    steps: int | None = None
    record_every: int = 1
    beta_grid: list = field(default_factory=list)
    epsilon_grid: list = field(default_factory=list)
    sigma_grid: list = field(default_factory=list)
    alpha_grid: list = field(default_factory=list)
    t_grid: list = field(default_factory=list)
    time_coefficient: float | None = None
    alpha_coefficient: float | None = None
    atilde2_at_max: float | None = None
    series: list = field(default_factory=list)
    markov: dict = field(default_factory=dict)
    plan: dict = field(default_factory=dict)
    metric: str = "mean-state"
    samples: int | None = None
    seed: int = 0
    out: str = "results"
    threads: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind: {self.kind!r} not one of {KINDS}")
        if not self.name:
            raise ConfigError("name: must be nonempty")
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        if self.max_trials is None:
            self.max_trials = self.trials
        if self.max_trials < self.trials:
            raise ConfigError("max_trials: must be >= trials")
        if self.l_max < 0:
            raise ConfigError("l_max: must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads: must be >= 1")
        if self.metric not in ("mean-state", "mean-distance"):
            raise ConfigError(f"metric: unknown metric {self.metric!r}")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError("epsilon: must be positive")
        grids = {"beta_grid": self.beta_grid, "epsilon_grid": self.epsilon_grid,
                 "sigma_grid": self.sigma_grid}
        for fname, grid in grids.items():
            if grid is not None and len(grid) == 0 and self._needs_grid(fname):
                raise ConfigError(f"{fname}: must be nonempty for kind {self.kind}")

    def _needs_grid(self, fname: str) -> bool:
        return {"beta_grid": self.kind == "sweep-beta",
                "epsilon_grid": self.kind == "sweep-epsilon",
                "sigma_grid": self.kind == "sweep-gamma-noise"}[fname]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            out[name] = getattr(self, name)
        return out

    def sha(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_system(spec: dict) -> Hamiltonian:
    if "file" in spec:
        return load_hamiltonian(spec["file"],
                                require_nondegenerate=spec.get(
                                    "require_nondegenerate", False))
    builder = spec.get("builder")
    if builder == "qubit":
        return make_qubit(float(spec.get("gap", 1.0)))
    if builder == "harmonic":
        return make_harmonic(int(spec["dim"]), float(spec.get("gap", 1.0)))
    if builder == "diagonal":
        return Hamiltonian(np.sort(np.asarray(spec["eigenvalues"], dtype=float)),
                           label=spec.get("label", "diagonal"))
    raise ConfigError(f"system: unknown builder {builder!r}")


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float


def fit_power_law(xs, ys) -> PowerLawFit:
    """Least squares of log y against log x."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3:
        raise ValueError(f"need at least 3 points, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit needs strictly positive data")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(slope=float(slope), intercept=float(intercept),
                       r_squared=r2)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str | Path, columns: list[str], records: list[dict],
              kind: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# thermalizer-csv schema={CSV_SCHEMA} kind={kind}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            writer.writerow([_fmt(rec.get(col)) for col in columns])


def read_csv(path: str | Path) -> tuple[dict, list[str], list[dict]]:
    """Parse a harness CSV back into (header fields, columns, string rows)."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# thermalizer-csv"):
            raise ValueError(f"{path}: missing schema header line")
        header = dict(part.split("=", 1) for part in first.split()[2:])
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [dict(zip(columns, row)) for row in reader]
    return header, columns, rows


def _row_seed(base_seed: int, grid_index: int) -> int:
    ss = np.random.SeedSequence(base_seed, spawn_key=(grid_index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class _TrialEnsemble:
    """Trajectory batches grown by doubling while the variance rule demands it."""

    def __init__(self, rho0, ham, params: ChannelParams, target, base_trials: int):
        self._make = lambda n, bid: TrajectoryBatch(rho0, ham, params, target,
                                                    n_trials=n, batch_id=bid)
        self.batches = [self._make(base_trials, 0)]

    @property
    def trials(self) -> int:
        return sum(b.n_trials for b in self.batches)

    def add_trials(self, n: int) -> None:
        self.batches.append(self._make(n, len(self.batches)))

    def distances_at(self, steps: int) -> np.ndarray:
        return np.concatenate([b.distances_at(steps) for b in self.batches])

    def mean_distance(self, steps: int) -> float:
        return float(np.mean(self.distances_at(steps)))

    def curve(self) -> np.ndarray:
        length = min(b.length for b in self.batches)
        curves = [np.array([np.sum(d) for d in b._dists[:length + 1]])
                  for b in self.batches]
        return np.sum(curves, axis=0) / self.trials


@dataclass(frozen=True)
class MinLMeasurement:
    steps: int | None
    mean_at_steps: float
    trials: int
    inversion_detected: bool


def measure_min_l(rho0, ham, params: ChannelParams, target, epsilon: float,
                  l_max: int, trials: int, max_trials: int,
                  metric: str = "mean-state") -> MinLMeasurement:
    """Minimal-L search with the trial-doubling variance rule.

    The variance rule (double trials until the per-trajectory final-distance
    variance drops below a tenth of its mean, capped at max_trials) gates
    both metrics. For "mean-distance" extra trials arrive as additional
    batches so earlier trajectories are reused; for "mean-state" the batch is
    rebuilt at the doubled size, since partial means do not compose.
    """
    if metric == "mean-distance":
        ens = _TrialEnsemble(rho0, ham, params, target, trials)
        while True:
            steps, _, inversion = resolve_min_l(ens.mean_distance, ens.curve,
                                                epsilon, l_max)
            probe = steps if steps is not None else l_max
            dists = ens.distances_at(probe)
            mean = float(dists.mean())
            var = float(dists.var(ddof=1)) if dists.size > 1 else 0.0
            if var < mean / 10.0 or ens.trials >= max_trials:
                return MinLMeasurement(steps=steps, mean_at_steps=mean,
                                       trials=ens.trials,
                                       inversion_detected=inversion)
            ens.add_trials(min(ens.trials, max_trials - ens.trials))
    if metric != "mean-state":
        raise ConfigError(f"metric: unknown metric {metric!r}")
    trials_now = trials
    while True:
        batch = TrajectoryBatch(rho0, ham, params, target, n_trials=trials_now)
        steps, _, inversion = resolve_min_l(
            batch.mean_state_distance, lambda: batch.curve("mean-state"),
            epsilon, l_max)
        probe = steps if steps is not None else l_max
        dists = batch.distances_at(probe)
        mean = float(dists.mean())
        var = float(dists.var(ddof=1)) if dists.size > 1 else 0.0
        if var < mean / 10.0 or trials_now >= max_trials:
            return MinLMeasurement(steps=steps,
                                   mean_at_steps=batch.mean_state_distance(probe),
                                   trials=trials_now,
                                   inversion_detected=inversion)
        trials_now = min(2 * trials_now, max_trials)


def analytic_generator(ham: Hamiltonian, beta: float, alpha: float, t: float,
                       policy, seed: int = 0):
    """Transition generator matching a gamma policy, closed form when possible."""
    from .channel import FixedGamma, UniformWindowGamma
    if isinstance(policy, FixedGamma):
        return build_T(ham, beta, policy.gamma, alpha, t)
    if isinstance(policy, UniformWindowGamma):
        return build_expected_T(ham, beta, alpha, t, mode="uniform-window",
                                window=(policy.lo, policy.hi))
    if isinstance(policy, EigdiffGamma) and policy.sigma == 0 and \
            policy.differences.size == ham.dim * (ham.dim - 1) // 2:
        return build_expected_T(ham, beta, alpha, t, mode="perfect-knowledge")
    draws = policy.sample(np.random.default_rng(seed), 512)
    return build_expected_T(ham, beta, alpha, t, mode="empirical",
                            gamma_samples=draws)


@dataclass
class RunResult:
    records: list
    columns: list
    meta: dict
    exit_code: int = 0


def _checkpoint_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out) / f"{cfg.name}.checkpoint.jsonl"


def _load_checkpoint(cfg: ExperimentConfig) -> dict[int, dict]:
    path = _checkpoint_path(cfg)
    done: dict[int, dict] = {}
    if not path.exists():
        return done
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        return done
    head = json.loads(lines[0])
    if head.get("config_sha") != cfg.sha():
        return {}
    for line in lines[1:]:
        entry = json.loads(line)
        done[int(entry["grid_index"])] = entry["record"]
    return done


def _append_checkpoint(cfg: ExperimentConfig, grid_index: int, record: dict,
                       fresh: bool) -> None:
    path = _checkpoint_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        if fresh:
            fh.write(json.dumps({"config_sha": cfg.sha()}) + "\n")
        fh.write(json.dumps({"grid_index": grid_index, "record": record}) + "\n")


def _clear_checkpoint(cfg: ExperimentConfig) -> None:
    path = _checkpoint_path(cfg)
    if path.exists():
        path.unlink()


def _channel_params(cfg: ExperimentConfig, ham: Hamiltonian, *, alpha=None,
                    t=None, beta=None, policy=None, seed=None) -> ChannelParams:
    ch = cfg.channel
    if policy is None:
        policy = gamma_policy_from_dict(ch.get("gamma", {"kind": "fixed",
                                                         "gamma": 1.0}), ham)
    return ChannelParams(
        alpha=float(ch["alpha"] if alpha is None else alpha),
        t=float(ch["t"] if t is None else t),
        beta=_parse_beta(ch.get("beta", 1.0) if beta is None else beta),
        gamma_policy=policy,
        n_samples=int(ch.get("n_samples", 1)),
        seed=int(cfg.seed if seed is None else seed),
    )


def _gamma_kind(policy) -> str:
    return policy.to_dict()["kind"]


def _min_l_grid(cfg: ExperimentConfig, ham: Hamiltonian) -> list[dict]:
    """Expand the config into per-grid-point overrides for the min-L family."""
    ch = cfg.channel
    base_policy = gamma_policy_from_dict(
        ch.get("gamma", {"kind": "fixed", "gamma": 1.0}), ham)
    points = []
    if cfg.kind == "min-l":
        alphas = cfg.alpha_grid or [ch["alpha"]]
        ts = cfg.t_grid or [ch["t"]]
        for a in alphas:
            for t in ts:
                points.append({"alpha": float(a), "t": float(t),
                               "beta": _parse_beta(ch.get("beta", 1.0)),
                               "epsilon": cfg.epsilon, "policy": base_policy})
    elif cfg.kind == "sweep-beta":
        for b in cfg.beta_grid:
            points.append({"alpha": float(ch["alpha"]), "t": float(ch["t"]),
                           "beta": _parse_beta(b), "epsilon": cfg.epsilon,
                           "policy": base_policy})
    elif cfg.kind == "sweep-epsilon":
        eps_grid = sorted((float(e) for e in cfg.epsilon_grid), reverse=True)
        eta = cfg.time_coefficient
        if eta is None:
            raise ConfigError("time_coefficient: required for sweep-epsilon")
        if cfg.alpha_coefficient is not None:
            c = float(cfg.alpha_coefficient)
        elif cfg.atilde2_at_max is not None:
            t_top = eta / math.sqrt(eps_grid[0])
            c = math.sqrt(cfg.atilde2_at_max * (2 * ham.dim + 1)) * t_top**2
        else:
            raise ConfigError(
                "alpha_coefficient or atilde2_at_max: required for sweep-epsilon")
        for e in eps_grid:
            t = eta / math.sqrt(e)
            points.append({"alpha": c / t**3, "t": t,
                           "beta": _parse_beta(ch.get("beta", 1.0)),
                           "epsilon": e, "policy": base_policy})
    elif cfg.kind == "sweep-gamma-noise":
        diffs = perfect_knowledge_gamma(ham).differences
        for s in cfg.sigma_grid:
            pol = EigdiffGamma(differences=diffs, sigma=float(s))
            points.append({"alpha": float(ch["alpha"]), "t": float(ch["t"]),
                           "beta": _parse_beta(ch.get("beta", 1.0)),
                           "epsilon": cfg.epsilon, "sigma": float(s),
                           "policy": pol})
    return points


def _run_min_l_point(cfg: ExperimentConfig, ham: Hamiltonian, grid_index: int,
                     point: dict) -> dict:
    if point["epsilon"] is None:
        raise ConfigError("epsilon: required for min-L experiments")
    seed = _row_seed(cfg.seed, grid_index)
    params = _channel_params(cfg, ham, alpha=point["alpha"], t=point["t"],
                             beta=point["beta"], policy=point["policy"],
                             seed=seed)
    rho0 = np.eye(ham.dim, dtype=complex) / ham.dim
    target = gibbs_state(ham, params.beta)
    res = measure_min_l(rho0, ham, params, target, float(point["epsilon"]),
                        cfg.l_max, cfg.trials, cfg.max_trials,
                        metric=cfg.metric)
    try:
        lam = spectral_gap(analytic_generator(ham, params.beta, params.alpha,
                                              params.t, point["policy"],
                                              seed=seed)).lambda_tilde
    except Exception:
        lam = None
    reached = res.steps is not None
    return {
        "name": cfg.name, "kind": cfg.kind, "grid_index": grid_index,
        "beta": params.beta, "epsilon": point["epsilon"],
        "inv_epsilon": 1.0 / point["epsilon"],
        "sigma": point.get("sigma"), "alpha": params.alpha, "t": params.t,
        "atilde2": params.alpha_tilde_sq(ham.dim),
        "gamma_kind": _gamma_kind(point["policy"]), "metric": cfg.metric,
        "trials": res.trials,
        "l_max": cfg.l_max, "min_l": res.steps, "reached": reached,
        "l_times_t": res.steps * params.t if reached else None,
        "lambda_tilde": lam, "mean_final_distance": res.mean_at_steps,
        "row_seed": seed,
    }


def _run_min_l_family(cfg: ExperimentConfig) -> RunResult:
    ham = build_system(cfg.system)
    points = _min_l_grid(cfg, ham)
    done = _load_checkpoint(cfg)
    fresh = not done
    wall: dict[int, float] = {}

    def work(i: int) -> dict:
        t0 = time.perf_counter()
        rec = _run_min_l_point(cfg, ham, i, points[i])
        wall[i] = time.perf_counter() - t0
        return rec

    todo = [i for i in range(len(points)) if i not in done]
    if cfg.threads > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            fresh_results = dict(zip(todo, pool.map(work, todo)))
    else:
        fresh_results = {i: work(i) for i in todo}
    for i in sorted(fresh_results):
        _append_checkpoint(cfg, i, fresh_results[i], fresh)
        fresh = False
    records = [done.get(i) or fresh_results[i] for i in range(len(points))]

    meta = {"wall_s_per_point": {str(k): v for k, v in sorted(wall.items())}}
    if cfg.kind == "sweep-epsilon":
        xs = [r["inv_epsilon"] for r in records if r["reached"]]
        ys = [r["l_times_t"] for r in records if r["reached"]]
        if len(xs) >= 3:
            fit = fit_power_law(xs, ys)
            meta["fit"] = {"slope": fit.slope, "intercept": fit.intercept,
                           "r_squared": fit.r_squared}
    _clear_checkpoint(cfg)
    return RunResult(records=records, columns=MIN_L_COLUMNS, meta=meta)


def _run_trajectory(cfg: ExperimentConfig) -> RunResult:
    ham = build_system(cfg.system)
    if cfg.steps is None:
        raise ConfigError("steps: required for trajectory experiments")
    series = cfg.series or [{"alpha": cfg.channel["alpha"],
                             "t": cfg.channel["t"]}]
    records = []
    rho0 = np.eye(ham.dim, dtype=complex) / ham.dim
    for idx, entry in enumerate(series):
        seed = _row_seed(cfg.seed, idx)
        params = _channel_params(cfg, ham, alpha=entry["alpha"], t=entry["t"],
                                 beta=entry.get("beta"), seed=seed)
        target = gibbs_state(ham, params.beta)
        at2 = params.alpha_tilde_sq(ham.dim)
        label = entry.get("label", f"atilde2={at2:.3g}")
        batch = TrajectoryBatch(rho0, ham, params, target,
                                n_trials=cfg.trials)
        batch.extend_to(cfg.steps)
        for step in range(0, cfg.steps + 1, cfg.record_every):
            d = batch.distances_at(step)
            sem = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
            records.append({
                "name": cfg.name, "kind": cfg.kind, "grid_index": idx,
                "series": label, "alpha": params.alpha, "t": params.t,
                "atilde2": at2, "beta": params.beta,
                "gamma_kind": _gamma_kind(params.gamma_policy), "step": step,
                "mean_distance": float(d.mean()), "sem_distance": sem,
                "trials": cfg.trials, "row_seed": seed,
            })
    return RunResult(records=records, columns=TRAJECTORY_COLUMNS, meta={})


def _run_markov(cfg: ExperimentConfig) -> RunResult:
    ham = build_system(cfg.system)
    mk = cfg.markov or {"mode": "fixed", "gamma": 1.0}
    mode = mk.get("mode", "fixed")
    alpha = float(cfg.channel["alpha"])
    t = float(cfg.channel["t"])
    betas = cfg.beta_grid or [cfg.channel.get("beta", 1.0)]
    records = []
    generators = {}
    for i, beta_raw in enumerate(betas):
        beta = _parse_beta(beta_raw)
        if mode == "fixed":
            gen = build_T(ham, beta, float(mk.get("gamma", 1.0)), alpha, t)
        elif mode in ("uniform-window", "perfect-knowledge"):
            gen = build_expected_T(ham, beta, alpha, t, mode=mode)
        elif mode == "empirical":
            pol = EigdiffGamma(differences=perfect_knowledge_gamma(ham).differences,
                               sigma=float(mk.get("sigma", 0.0)))
            draws = pol.sample(np.random.default_rng(_row_seed(cfg.seed, i)),
                               int(mk.get("draws", 512)))
            gen = build_expected_T(ham, beta, alpha, t, mode="empirical",
                                   gamma_samples=draws)
        else:
            raise ConfigError(f"markov.mode: unknown mode {mode!r}")
        gap = spectral_gap(gen)
        p_target = gibbs_probabilities(ham, beta)
        try:
            p_fix = fixed_point(gen)
            fp_err = float(np.max(np.abs(p_fix - p_target)))
        except Exception:
            fp_err = None
        records.append({
            "name": cfg.name, "kind": cfg.kind, "grid_index": i, "beta": beta,
            "gamma_mode": mode, "alpha": alpha, "t": t,
            "lambda_star": gap.lambda_star, "lambda_tilde": gap.lambda_tilde,
            "gibbs_residual": detailed_balance_residual(gen, p_target),
            "fixed_point_max_err": fp_err, "row_seed": _row_seed(cfg.seed, i),
        })
        generators[str(i)] = gen.to_dict()
    return RunResult(records=records, columns=MARKOV_COLUMNS,
                     meta={"generators": generators})


def _run_plan(cfg: ExperimentConfig) -> RunResult:
    spec = dict(cfg.plan)
    if not spec:
        raise ConfigError("plan: required for plan experiments")
    recipe = spec.pop("recipe", None)
    if "beta" in spec:
        spec["beta"] = _parse_beta(spec["beta"])
    makers = {
        "single-qubit": plan_single_qubit,
        "harmonic": plan_harmonic,
        "zero-knowledge": plan_zero_knowledge,
        "perfect-knowledge": plan_perfect_knowledge,
    }
    if recipe not in makers:
        raise ConfigError(f"plan.recipe: unknown recipe {recipe!r}")
    plan = makers[recipe](**spec)
    record = {"name": cfg.name, "kind": cfg.kind, "recipe": plan.recipe,
              "alpha": plan.alpha, "t": plan.t, "steps": plan.steps,
              "lambda_tilde": plan.lambda_tilde, "multiplier": plan.multiplier}
    return RunResult(records=[record], columns=PLAN_COLUMNS,
                     meta={"plan": plan.to_dict()})


def _check(records: list, name: str, check: str, passed: bool, detail: str):
    records.append({"name": name, "kind": "validate", "check": check,
                    "passed": bool(passed), "detail": detail})


def _run_validate(cfg: ExperimentConfig) -> RunResult:
    """Invariant suite over the library primitives; nonzero exit on failure."""
    rng = np.random.default_rng(cfg.seed)
    records: list[dict] = []

    u = sample_haar_unitary(6, rng, size=64)
    defect = unitarity_defect(u)
    _check(records, cfg.name, "haar-unitarity", defect <= 1e-12,
           f"max defect {defect:.2e}")

    from .linalg import partial_trace_env, tensor
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    sigma = np.diag([0.3, 0.7]).astype(complex)
    err = np.max(np.abs(partial_trace_env(tensor(rho, sigma), 2) - rho))
    _check(records, cfg.name, "partial-trace-identity", err <= 1e-12,
           f"max err {err:.2e}")

    ham = make_harmonic(4, 1.0)
    env_beta = 2.0
    from .channel import FixedGamma, apply_fixed_interaction
    from .hamiltonians import env_qubit
    rho4 = np.diag([0.4, 0.3, 0.2, 0.1]).astype(complex)
    worst_tr, worst_herm, worst_eig = 0.0, 0.0, 0.0
    n_draws = int(cfg.samples or 1000)
    for _ in range(n_draws):
        g = sample_interaction(8, rng)
        out = apply_fixed_interaction(rho4, g, 0.2, 5.0, env_qubit(1.0, env_beta),
                                      ham)
        worst_tr = max(worst_tr, abs(np.trace(out).real - 1.0))
        worst_herm = max(worst_herm, float(np.max(np.abs(out - out.conj().T))))
        worst_eig = min(worst_eig, float(np.min(np.linalg.eigvalsh(out))))
    _check(records, cfg.name, "channel-trace-preservation", worst_tr <= 1e-12,
           f"worst |tr-1| {worst_tr:.2e} over {n_draws} draws")
    _check(records, cfg.name, "channel-hermiticity", worst_herm <= 1e-12,
           f"worst defect {worst_herm:.2e}")
    _check(records, cfg.name, "channel-positivity", worst_eig >= -1e-8,
           f"worst min eigenvalue {worst_eig:.2e}")

    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 5))
        h = Hamiltonian(np.sort(rng.uniform(0, 2, n)))
        beta = float(rng.uniform(0, 4))
        gamma = float(rng.uniform(0, 3))
        t_val = float(rng.uniform(1, 20))
        split = split_resonance(h, beta, gamma, 0.05, t_val)
        total = split.on + split.off
        for i in range(n):
            for j in range(n):
                if i != j:
                    worst = max(worst, abs(
                        total[j, i] - transition_element(i, j, h, beta, gamma,
                                                         0.05, t_val)))
    _check(records, cfg.name, "resonance-split-reconstruction", worst <= 1e-14,
           f"worst err {worst:.2e}")

    gen = build_T(ham, math.inf, 1.0, 0.04, 10.0)
    tri = float(np.max(np.abs(np.tril(gen.matrix, k=-1))))
    _check(records, cfg.name, "ground-limit-triangular", tri <= 1e-14,
           f"max lower-tri {tri:.2e}")
    colsum = float(np.max(np.abs(gen.matrix.sum(axis=0))))
    _check(records, cfg.name, "generator-column-sums", colsum <= 1e-12,
           f"max |col sum| {colsum:.2e}")

    worst_db = 0.0
    for _ in range(5):
        h = Hamiltonian(np.sort(rng.uniform(0, 2, 4)))
        for beta in (0.5, 2.0, 8.0):
            g2 = build_expected_T(h, beta, 0.1, 3.0, mode="perfect-knowledge")
            worst_db = max(worst_db, detailed_balance_residual(
                g2, gibbs_probabilities(h, beta)))
    _check(records, cfg.name, "perfect-knowledge-detailed-balance",
           worst_db <= 1e-12, f"worst residual {worst_db:.2e}")

    gaps_ok = True
    detail = []
    g_h = spectral_gap(build_T(ham, math.inf, 1.0, 0.04, 10.0)).lambda_tilde
    gaps_ok &= abs(g_h - 1.0) <= 1e-12
    detail.append(f"ladder {g_h:.15f}")
    t_zk = 12.0
    g_z = spectral_gap(build_expected_T(ham, math.inf, 0.03, t_zk,
                                        mode="uniform-window")).lambda_tilde
    expect_z = i_sinc(spectral_profile(ham).delta_min * t_zk / 2.0)
    gaps_ok &= abs(g_z - expect_z) <= 1e-12
    detail.append(f"uniform {g_z:.12f} vs {expect_z:.12f}")
    g_p = spectral_gap(build_expected_T(ham, math.inf, 0.05, 6.0,
                                        mode="perfect-knowledge")).lambda_tilde
    gaps_ok &= abs(g_p - 3.0) <= 1e-12
    detail.append(f"weighted {g_p:.15f}")
    _check(records, cfg.name, "ground-limit-gaps", bool(gaps_ok),
           "; ".join(detail))

    exit_code = 0 if all(r["passed"] for r in records) else 1
    return RunResult(records=records, columns=CHECK_COLUMNS, meta={},
                     exit_code=exit_code)


def _run_haar_check(cfg: ExperimentConfig) -> RunResult:
    """Monte Carlo validation of the Haar moment identities."""
    n = int(cfg.samples or 100_000)
    records: list[dict] = []

    def kd(a, b):
        return 1.0 if a == b else 0.0

    for dim in (2, 3, 4):
        rng = np.random.default_rng(_row_seed(cfg.seed, dim))
        u = sample_haar_unitary(dim, rng, size=n)
        worst_z = 0.0
        tuples = [tuple(rng.integers(0, dim, 8)) for _ in range(17)]
        tuples += [(0, 0, 0, 0, 0, 0, 0, 0), (0, 1, 0, 1, 1, 0, 1, 0),
                   (0, 0, 1, 1, 0, 0, 1, 1)]
        ok = True
        for (i1, j1, i2, j2, k1, l1, k2, l2) in tuples:
            vals = (u[:, i1, j1] * u[:, i2, j2]
                    * np.conj(u[:, l1, k1]) * np.conj(u[:, l2, k2]))
            d = float(dim)
            direct = (kd(i1, l1) * kd(j1, k1) * kd(i2, l2) * kd(j2, k2)
                      + kd(i1, l2) * kd(j1, k2) * kd(i2, l1) * kd(j2, k1))
            crossed = (kd(i1, l2) * kd(j1, k1) * kd(i2, l1) * kd(j2, k2)
                       + kd(i1, l1) * kd(j1, k2) * kd(i2, l2) * kd(j2, k1))
            expect = direct / (d * d - 1) - crossed / (d * (d * d - 1))
            for part, ref in ((vals.real, expect), (vals.imag, 0.0)):
                se = float(np.std(part, ddof=1) / math.sqrt(n))
                dev = abs(float(np.mean(part)) - ref)
                ok &= dev <= 3 * se + 1e-12
                if se > 0:
                    worst_z = max(worst_z, dev / (se + 1e-300))
        _check(records, cfg.name, f"pair-moment-dim{dim}", ok,
               f"worst z {worst_z:.2f} over {len(tuples)} tuples, {n} samples")
        records[-1]["kind"] = "haar-check"

    # averaged products of two conjugated interactions, dim 4
    dim = 4
    eigs = np.array([0.0, 0.35, 1.1, 1.85])
    x, y = 0.8, -0.45
    rng = np.random.default_rng(_row_seed(cfg.seed, 100))
    g = sample_interaction(dim, rng, size=n).matrix
    phase_x = np.exp(1j * eigs * x)
    phase_y = np.exp(1j * eigs * y)
    gx = phase_x[None, :, None] * g * np.conj(phase_x)[None, None, :]
    gy = phase_y[None, :, None] * g * np.conj(phase_y)[None, None, :]
    prod = gx @ gy
    phases = np.exp(1j * (eigs[:, None] - eigs[None, :]) * (x - y))
    expect = (np.diag(phases.sum(axis=1)) + np.eye(dim)) / (dim + 1)
    mean = prod.mean(axis=0)
    se_r = np.std(prod.real, axis=0, ddof=1) / math.sqrt(n)
    se_i = np.std(prod.imag, axis=0, ddof=1) / math.sqrt(n)
    ok = bool(np.all(np.abs(mean.real - expect.real) <= 3 * se_r + 1e-12)
              and np.all(np.abs(mean.imag - expect.imag) <= 3 * se_i + 1e-12))
    _check(records, cfg.name, "two-point-product-dim4", ok, f"{n} samples")
    records[-1]["kind"] = "haar-check"

    outer = np.zeros((dim, dim), dtype=complex)
    outer[1, 1] = 1.0
    prod = gx @ outer[None, :, :] @ gy
    expect = (outer + np.diag(np.exp(1j * (eigs - eigs[1]) * (x - y)))) / (dim + 1)
    mean = prod.mean(axis=0)
    se_r = np.std(prod.real, axis=0, ddof=1) / math.sqrt(n)
    se_i = np.std(prod.imag, axis=0, ddof=1) / math.sqrt(n)
    ok = bool(np.all(np.abs(mean.real - expect.real) <= 3 * se_r + 1e-12)
              and np.all(np.abs(mean.imag - expect.imag) <= 3 * se_i + 1e-12))
    _check(records, cfg.name, "sandwiched-product-dim4", ok, f"{n} samples")
    records[-1]["kind"] = "haar-check"

    exit_code = 0 if all(r["passed"] for r in records) else 1
    return RunResult(records=records, columns=CHECK_COLUMNS, meta={},
                     exit_code=exit_code)


_RUNNERS = {
    "trajectory": _run_trajectory,
    "min-l": _run_min_l_family,
    "sweep-beta": _run_min_l_family,
    "sweep-epsilon": _run_min_l_family,
    "sweep-gamma-noise": _run_min_l_family,
    "markov": _run_markov,
    "plan": _run_plan,
    "validate": _run_validate,
    "haar-check": _run_haar_check,
}


def run(cfg: ExperimentConfig) -> RunResult:
    """Execute one experiment config and return its records and meta."""
    t0 = time.perf_counter()
    result = _RUNNERS[cfg.kind](cfg)
    result.meta = {
        "schema": CSV_SCHEMA,
        "name": cfg.name,
        "kind": cfg.kind,
        "columns": result.columns,
        "config": cfg.to_dict(),
        "versions": {"thermalizer": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "wall_s": time.perf_counter() - t0,
        **result.meta,
    }
    return result


def write_outputs(cfg: ExperimentConfig, result: RunResult) -> dict[str, Path]:
    """Write <name>.csv and <name>.meta.json (plus plan JSON) under cfg.out."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    csv_path = out / f"{cfg.name}.csv"
    write_csv(csv_path, result.columns, result.records, cfg.kind)
    paths["csv"] = csv_path
    meta_path = out / f"{cfg.name}.meta.json"
    with open(meta_path, "w") as fh:
        json.dump(result.meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    paths["meta"] = meta_path
    if "plan" in result.meta:
        plan_path = out / f"{cfg.name}.plan.json"
        with open(plan_path, "w") as fh:
            json.dump(result.meta["plan"], fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths["plan"] = plan_path
    return paths


def config_from_row(row: dict, meta: dict) -> ExperimentConfig:
    """Rebuild a runnable config from one record row plus its meta block.

    Rows carry the grid coordinates; the meta config carries everything else,
    so the pair is sufficient to re-run the record's grid point.
    """
    cfg = ExperimentConfig.from_dict(meta["config"])
    if row.get("kind") and row["kind"] != cfg.kind:
        raise ValueError(f"row kind {row['kind']!r} != config kind {cfg.kind!r}")
    return cfg
