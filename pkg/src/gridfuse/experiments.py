"""Config-driven experiment protocols and report writers."""

from __future__ import annotations

import csv
import io
import json
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .fusion import FusionParams
from .metrics import METRIC_POLARITY, evaluate
from .planner import compare_arms
from .realdata import parse_carmen, run_realdata, split_scans
from .sensor import NO_DECAY, LidarConfig, SensorDecay
from .simworld import (
    EnvParams,
    RobotConfig,
    RunConfig,
    generate_environment,
    rasterize_ground_truth,
    run_multi_robot,
    run_single_agent,
    write_pgm,
)
from .stats import (
    MARGIN_SWEEP,
    NOMINAL_MARGINS,
    DegenerateVarianceError,
    PairedSample,
    bayes_factor_01,
    binomial_direction,
    cohens_d,
    holm_bonferroni,
    tost,
)

KINDS = (
    "single-agent", "multi-robot", "mechanism", "ablate-lmax", "ablate-yager",
    "ablate-regularization", "sensor-sensitivity", "realdata", "plan-eval",
    "stats-only",
)

METRIC_NAMES = ("cell_accuracy", "boundary_sharpness", "brier", "entropy")

SENSOR_PARAMETERIZATIONS = {
    "weak": (1.0, -0.3),
    "default": (2.0, -0.5),
    "strong": (4.0, -1.0),
    "symmetric": (1.5, -1.5),
}

LMAX_VALUES = (5.0, 10.0, 20.0, math.inf)
FLOOR_VALUES = (0.0, 0.001, 0.01, 0.05)
MECHANISM_R = (1, 2, 3, 5)
REALDATA_SPLITS = (1, 2, 4)


class ConfigError(ValueError):
    """Raised with every violation listed, one per line."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("invalid config:\n" + "\n".join(f"  - {d}" for d in diagnostics))


@dataclass
class ExperimentConfig:
    kind: str = "single-agent"
    seeds: list[int] = field(default_factory=lambda: list(range(42, 57)))
    out: str = "out"
    desk_scale: bool = False
    arms: list[str] = field(default_factory=lambda: ["bayes", "dempster"])
    matching: str = "betp"
    l_occ: float = 2.0
    l_free: float = -0.5
    l_max: float = 10.0
    mof_floor: float = 0.0
    decay_enabled: bool = True
    lambda_d: float = 0.1
    lambda_alpha: float = 0.5
    env_width: float = 50.0
    env_height: float = 50.0
    n_rooms: int = 3
    n_corridors: int = 4
    n_static: int = 5
    n_dynamic: int = 3
    dynamic_speed: float = 0.5
    n_steps: int = 500
    step_size: float = 0.38
    num_rays: int = 180
    fov: float = 2.0 * math.pi
    max_range: float = 15.0
    range_noise_sigma: float = 0.02
    odom_sigma_trans: float = 0.02
    odom_sigma_rot: float = 0.005
    n_robots: int = 3
    resolution: float = 0.1
    n_queries: int = 500
    plan_seed: int = 0
    log_path: str = ""
    block_size: int = 10
    bootstrap_iters: int = 10_000
    runs_csv: str = ""

    def apply_desk_scale(self) -> "ExperimentConfig":
        """CI-sized preset preserving every protocol's structure."""
        return replace(
            self, desk_scale=True, env_width=20.0, env_height=20.0,
            n_steps=100, num_rays=45, seeds=list(range(42, 47)),
            max_range=8.0, n_queries=50, bootstrap_iters=2000,
        )


_SCHEMA = {
    "kind": str, "seeds": (list, str), "out": str, "desk_scale": bool,
    "arms": list, "matching": str, "l_occ": (int, float), "l_free": (int, float),
    "l_max": (int, float, str), "mof_floor": (int, float), "decay_enabled": bool,
    "lambda_d": (int, float), "lambda_alpha": (int, float),
    "env_width": (int, float), "env_height": (int, float), "n_rooms": int,
    "n_corridors": int, "n_static": int, "n_dynamic": int,
    "dynamic_speed": (int, float), "n_steps": int, "step_size": (int, float),
    "num_rays": int, "fov": (int, float), "max_range": (int, float),
    "range_noise_sigma": (int, float), "odom_sigma_trans": (int, float),
    "odom_sigma_rot": (int, float), "n_robots": int, "resolution": (int, float),
    "n_queries": int, "plan_seed": int, "log_path": str, "block_size": int,
    "bootstrap_iters": int, "runs_csv": str,
}


def parse_seeds(value) -> list[int]:
    """Seed lists come as explicit lists or as an inclusive 'A..B' range."""
    if isinstance(value, str):
        if ".." in value:
            a, b = value.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError(f"empty seed range {value!r}")
            return list(range(lo, hi + 1))
        return [int(value)]
    if isinstance(value, int):
        return [value]
    return [int(v) for v in value]


def validate_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML config; empty input means full defaults."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"not valid YAML: {exc}"]) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping"])

    diags: list[str] = []
    cfg = ExperimentConfig()
    for key, value in raw.items():
        if key not in _SCHEMA:
            diags.append(f"unknown key {key!r}")
            continue
        if not isinstance(value, _SCHEMA[key]):
            diags.append(f"{key}: expected {_SCHEMA[key]}, got {type(value).__name__}")
            continue
        if key == "seeds":
            try:
                value = parse_seeds(value)
            except ValueError as exc:
                diags.append(f"seeds: {exc}")
                continue
        if key == "l_max":
            if isinstance(value, str):
                if value.lower() not in ("inf", "infinity"):
                    diags.append("L_max must be positive or 'inf'")
                    continue
                value = math.inf
            elif value <= 0:
                diags.append("L_max must be positive or 'inf'")
                continue
            value = float(value)
        setattr(cfg, key, value)

    if cfg.kind not in KINDS:
        diags.append(f"kind must be one of {', '.join(KINDS)}")
    if cfg.matching not in ("betp", "ppl"):
        diags.append("matching must be 'betp' or 'ppl'")
    for arm in cfg.arms:
        if arm not in ("bayes", "bayes_count", "dempster", "yager"):
            diags.append(f"unknown arm {arm!r}")
    if not cfg.seeds:
        diags.append("seeds must be non-empty")
    if cfg.l_occ <= 0:
        diags.append("l_occ must be positive")
    if cfg.l_free >= 0:
        diags.append("l_free must be negative")
    if not 0 <= cfg.mof_floor < 1:
        diags.append("mof_floor must lie in [0, 1)")
    if cfg.n_steps < 0:
        diags.append("n_steps must be >= 0")
    if cfg.num_rays < 1:
        diags.append("num_rays must be >= 1")
    if diags:
        raise ConfigError(diags)
    return cfg


def load_config(path: str | None) -> ExperimentConfig:
    text = Path(path).read_text() if path else ""
    return validate_config(text)


# ---------------------------------------------------------------------------
# protocol assembly

def _arm_params(cfg: ExperimentConfig, rule: str, **overrides) -> FusionParams:
    base = dict(l_occ=cfg.l_occ, l_free=cfg.l_free, L_max=cfg.l_max,
                mof_floor=cfg.mof_floor, rule=rule, matching=cfg.matching)
    base.update(overrides)
    return FusionParams(**base)


def _arms_for(cfg: ExperimentConfig) -> tuple[tuple[str, FusionParams], ...]:
    return tuple((name, _arm_params(cfg, name)) for name in cfg.arms)


def _lidar(cfg: ExperimentConfig) -> LidarConfig:
    return LidarConfig(num_rays=cfg.num_rays, fov=cfg.fov, max_range=cfg.max_range,
                       range_noise_sigma=cfg.range_noise_sigma)


def _decay(cfg: ExperimentConfig) -> SensorDecay:
    if not cfg.decay_enabled:
        return NO_DECAY
    return SensorDecay(cfg.lambda_d, cfg.lambda_alpha, enabled=True)


def _env(cfg: ExperimentConfig) -> EnvParams:
    return EnvParams(width=cfg.env_width, height=cfg.env_height, n_rooms=cfg.n_rooms,
                     n_corridors=cfg.n_corridors, n_static=cfg.n_static,
                     n_dynamic=cfg.n_dynamic, dynamic_speed=cfg.dynamic_speed)


def _single_run_config(cfg: ExperimentConfig, seed: int, arms) -> RunConfig:
    robot = RobotConfig(step_size=cfg.step_size, n_steps=cfg.n_steps, lidar=_lidar(cfg),
                        odom_sigma_trans=cfg.odom_sigma_trans,
                        odom_sigma_rot=cfg.odom_sigma_rot)
    return RunConfig(seed=seed, env=_env(cfg), robots=(robot,), arms=arms,
                     decay=_decay(cfg), resolution=cfg.resolution)


def _multi_run_config(cfg: ExperimentConfig, seed: int, arms, n_robots: int,
                      n_steps: int, ideal: bool = False) -> RunConfig:
    robots = []
    for i in range(n_robots):
        robots.append(RobotConfig(
            step_size=cfg.step_size, n_steps=n_steps, lidar=_lidar(cfg),
            odom_sigma_trans=0.0 if ideal else cfg.odom_sigma_trans,
            odom_sigma_rot=0.0 if ideal else cfg.odom_sigma_rot,
            start_frac=i / n_robots,
            direction=1 if i % 2 == 0 else -1,
        ))
    return RunConfig(seed=seed, env=_env(cfg), robots=tuple(robots), arms=arms,
                     decay=_decay(cfg), resolution=cfg.resolution)


def _multi_cfg(cfg: ExperimentConfig) -> ExperimentConfig:
    """Multi-robot world: 20x20 m single room, slower dynamic obstacles."""
    if cfg.desk_scale:
        return replace(cfg, n_rooms=1, n_corridors=0, dynamic_speed=0.3,
                       step_size=0.36)
    return replace(cfg, env_width=20.0, env_height=20.0, n_rooms=1, n_corridors=0,
                   dynamic_speed=0.3, n_steps=200, step_size=0.36)


# ---------------------------------------------------------------------------
# per-seed workers (module-level so they pickle for the process pool)

def _eval_result(result, arms) -> list[dict]:
    rows = []
    for name, _ in arms:
        rep = evaluate(result.probabilities(name), result.eval_set)
        rows.append({"arm": name, **rep.as_dict()})
    return rows


def _seed_worker(args):
    cfg, seed, variant = args
    rows: list[dict] = []
    maps: dict[str, np.ndarray] = {}
    spec = None

    if cfg.kind in ("single-agent", "ablate-yager"):
        arms = _arms_for(cfg)
        result = run_single_agent(_single_run_config(cfg, seed, arms))
        for row in _eval_result(result, arms):
            rows.append({"seed": seed, "variant": "base", **row})
        maps = {n: result.probabilities(n) for n, _ in arms}
        spec = result.spec
    elif cfg.kind == "multi-robot":
        mcfg = _multi_cfg(cfg)
        arms = _arms_for(mcfg)
        result = run_multi_robot(_multi_run_config(mcfg, seed, arms, cfg.n_robots,
                                                   mcfg.n_steps))
        for row in _eval_result(result, arms):
            rows.append({"seed": seed, "variant": f"R{cfg.n_robots}", **row})
        maps = {n: result.probabilities(n) for n, _ in arms}
        spec = result.spec
    elif cfg.kind == "mechanism":
        mcfg = _multi_cfg(cfg)
        arms = _arms_for(mcfg)
        for r in MECHANISM_R:
            steps = max(mcfg.n_steps // r, 1)
            result = run_multi_robot(_multi_run_config(mcfg, seed, arms, r, steps,
                                                       ideal=True))
            for row in _eval_result(result, arms):
                rows.append({"seed": seed, "variant": f"R{r}", **row})
            if r == MECHANISM_R[0]:
                maps = {n: result.probabilities(n) for n, _ in arms}
                spec = result.spec
    elif cfg.kind == "ablate-lmax":
        for lmax in LMAX_VALUES:
            arms = (("bayes", _arm_params(cfg, "bayes", L_max=lmax)),
                    ("dempster", _arm_params(cfg, "dempster")))
            result = run_single_agent(_single_run_config(cfg, seed, arms))
            label = "inf" if math.isinf(lmax) else f"{lmax:g}"
            for row in _eval_result(result, arms):
                rows.append({"seed": seed, "variant": f"lmax={label}", **row})
    elif cfg.kind == "ablate-regularization":
        for floor in FLOOR_VALUES:
            arms = (("bayes", _arm_params(cfg, "bayes")),
                    ("dempster", _arm_params(cfg, "dempster", mof_floor=floor)))
            result = run_single_agent(_single_run_config(cfg, seed, arms))
            for row in _eval_result(result, arms):
                rows.append({"seed": seed, "variant": f"floor={floor:g}", **row})
    elif cfg.kind == "sensor-sensitivity":
        for label, (l_occ, l_free) in SENSOR_PARAMETERIZATIONS.items():
            arms = (("bayes", _arm_params(cfg, "bayes", l_occ=l_occ, l_free=l_free)),
                    ("dempster", _arm_params(cfg, "dempster", l_occ=l_occ,
                                             l_free=l_free)))
            result = run_single_agent(_single_run_config(cfg, seed, arms))
            for row in _eval_result(result, arms):
                rows.append({"seed": seed, "variant": label, **row})
    else:
        raise ValueError(f"no per-seed worker for kind {cfg.kind!r}")
    return seed, rows, maps, spec


# ---------------------------------------------------------------------------
# statistics aggregation

def _metric_stats(diffs: np.ndarray, metric: str) -> dict:
    sample = PairedSample(diffs, metric=metric, polarity=METRIC_POLARITY[metric])
    margin = NOMINAL_MARGINS[metric]
    t = tost(sample, margin)
    entry = {
        "metric": metric,
        "n": sample.n,
        "mean_diff": sample.mean,
        "sd_diff": sample.sd,
        "ci90": list(t.ci90),
        "tost": {
            "margin": margin,
            "p_overall": t.p_overall,
            "equivalent": t.equivalent,
            "degenerate": t.degenerate,
            "sweep": {f"{m:g}x": t.sweep[m] for m in MARGIN_SWEEP},
            "smallest_passing_margin": t.smallest_passing_margin,
            "breakpoint_margin": t.breakpoint_margin,
        },
    }
    k = int(np.sum(diffs > 0))
    n_nonzero = int(np.sum(diffs != 0))
    entry["k_of_n"] = {
        "k_positive": k,
        "n": sample.n,
        "p_sign": binomial_direction(k, n_nonzero) if n_nonzero else 1.0,
    }
    try:
        es = cohens_d(sample)
        entry["effect_size"] = {
            "d": es.d,
            "ci_hedges": list(es.ci_hedges),
            "ci_noncentral": list(es.ci_noncentral),
        }
        entry["bf01"] = bayes_factor_01(sample, prior_scale=margin)
    except DegenerateVarianceError:
        entry["effect_size"] = None
        entry["bf01"] = None
    return entry


def compute_stats(rows: list[dict], arm_a: str, arm_b: str) -> dict:
    """Paired per-seed statistics of arm_a minus arm_b within each variant."""
    variants: dict[str, dict] = {}
    by_variant: dict[str, dict[int, dict[str, dict]]] = {}
    for row in rows:
        by_variant.setdefault(row["variant"], {}).setdefault(row["seed"], {})[row["arm"]] = row

    for variant, seeds in sorted(by_variant.items()):
        metric_entries = []
        for metric in METRIC_NAMES:
            diffs = []
            for seed in sorted(seeds):
                pair = seeds[seed]
                if arm_a in pair and arm_b in pair:
                    diffs.append(pair[arm_a][metric] - pair[arm_b][metric])
            if len(diffs) >= 2:
                metric_entries.append(_metric_stats(np.asarray(diffs), metric))
        pvals = [e["tost"]["p_overall"] for e in metric_entries]
        if pvals:
            reject, adjusted = holm_bonferroni(pvals)
            for e, r, a in zip(metric_entries, reject, adjusted):
                e["tost"]["holm_adjusted_p"] = float(a)
                e["tost"]["holm_reject"] = bool(r)
        variants[variant] = {
            "comparison": f"{arm_a} - {arm_b}",
            "metrics": metric_entries,
        }
    return variants


# ---------------------------------------------------------------------------
# report writing

def _write_runs_csv(path: Path, rows: list[dict], cfg: ExperimentConfig) -> None:
    """Deterministic body; timestamps confined to the metadata header."""
    fieldnames = ["seed", "variant", "arm", *METRIC_NAMES, "n_eval", "n_boundary"]
    body = io.StringIO()
    writer = csv.DictWriter(body, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in sorted(rows, key=lambda r: (r["seed"], r["variant"], r["arm"])):
        writer.writerow({k: row.get(k, "") for k in fieldnames})
    with open(path, "w") as f:
        f.write(f"# generated_at: {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        f.write(f"# kind: {cfg.kind}\n")
        f.write(body.getvalue())


def read_runs_csv(path) -> list[dict]:
    rows = []
    with open(path) as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    for row in csv.DictReader(lines):
        parsed = {"seed": int(row["seed"]), "variant": row["variant"], "arm": row["arm"]}
        for m in METRIC_NAMES:
            parsed[m] = float(row[m])
        rows.append(parsed)
    return rows


def csv_body(path) -> str:
    """CSV content without the metadata header, for byte-comparison."""
    with open(path) as f:
        return "".join(ln for ln in f if not ln.startswith("#"))


def _n_workers() -> int:
    env = os.environ.get("GRIDFUSE_THREADS", "")
    if env.isdigit() and int(env) > 0:
        return int(env)
    return min(os.cpu_count() or 1, 8)


def _run_seeds(cfg: ExperimentConfig):
    jobs = [(cfg, seed, None) for seed in cfg.seeds]
    n_workers = min(_n_workers(), len(jobs))
    if n_workers > 1:
        # fork avoids re-importing the scientific stack in every worker
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:
            ctx = multiprocessing.get_context()
        with ProcessPoolExecutor(max_workers=n_workers, mp_context=ctx) as pool:
            results = list(pool.map(_seed_worker, jobs))
    else:
        results = [_seed_worker(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    return results


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None) -> Path:
    """Execute one experiment protocol; returns the output directory."""
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "maps").mkdir(exist_ok=True)

    if cfg.kind == "stats-only":
        if not cfg.runs_csv:
            raise ConfigError(["stats-only requires runs_csv"])
        rows = read_runs_csv(cfg.runs_csv)
        arms = sorted({r["arm"] for r in rows})
        stats = compute_stats(rows, arms[0], arms[1]) if len(arms) >= 2 else {}
        (out / "stats.json").write_text(json.dumps(stats, indent=2, allow_nan=False))
        return out

    if cfg.kind == "realdata":
        return _run_realdata_experiment(cfg, out)
    if cfg.kind == "plan-eval":
        return _run_plan_eval(cfg, out)

    results = _run_seeds(cfg)
    all_rows = [row for _, rows, _, _ in results for row in rows]
    _write_runs_csv(out / "runs.csv", all_rows, cfg)

    arm_names = sorted({r["arm"] for r in all_rows})
    if "bayes" in arm_names and "dempster" in arm_names:
        pair = ("bayes", "dempster")
    elif len(arm_names) >= 2:
        pair = (arm_names[0], arm_names[1])
    else:
        pair = None
    stats = compute_stats(all_rows, *pair) if pair else {}
    (out / "stats.json").write_text(json.dumps(stats, indent=2, allow_nan=False))

    first_seed, _, maps, spec = results[0]
    for name, probs in maps.items():
        write_pgm(out / "maps" / f"seed{first_seed}_{name}.pgm", probs, spec)
    return out


def _run_realdata_experiment(cfg: ExperimentConfig, out: Path) -> Path:
    if not cfg.log_path:
        raise ConfigError(["realdata requires log_path"])
    parsed = parse_carmen(Path(cfg.log_path).read_text())
    arms = _arms_for(cfg)
    rows = []
    maps_written = False
    for r in REALDATA_SPLITS:
        plan = split_scans(parsed.scans, r=r)
        result = run_realdata(parsed.scans, plan, arms,
                              max_range=cfg.max_range if cfg.max_range < 15.0 else 8.0,
                              resolution=cfg.resolution)
        for row in _eval_result(result, arms):
            rows.append({"seed": 0, "variant": f"split={r}", **row})
        if not maps_written:
            for name, _ in arms:
                write_pgm(out / "maps" / f"split{r}_{name}.pgm",
                          result.probabilities(name), result.spec)
            maps_written = True
    _write_runs_csv(out / "runs.csv", rows, cfg)
    stats = {"parse_warnings": parsed.warnings, "n_scans": len(parsed.scans)}
    (out / "stats.json").write_text(json.dumps(stats, indent=2))
    return out


def _run_plan_eval(cfg: ExperimentConfig, out: Path) -> Path:
    arms = _arms_for(cfg)
    if len(arms) < 2:
        raise ConfigError(["plan-eval requires at least two arms"])
    seed = cfg.seeds[0]
    run = _single_run_config(cfg, seed, arms)
    result = run_single_agent(run)
    env = generate_environment(seed, run.env)
    truth = rasterize_ground_truth(env, result.spec)
    (a_name, _), (b_name, _) = arms[0], arms[1]
    report = compare_arms(result.probabilities(a_name), result.probabilities(b_name),
                          truth, n_queries=cfg.n_queries, seed=cfg.plan_seed)
    payload = {"arm_a": a_name, "arm_b": b_name, "seed": seed, **report.as_dict()}
    (out / "downstream.json").write_text(json.dumps(payload, indent=2))
    rows = [{"seed": seed, "variant": "plan", **row} for row in _eval_result(result, arms)]
    _write_runs_csv(out / "runs.csv", rows, cfg)
    return out
