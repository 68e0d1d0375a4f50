"""Experiment harness: repeated weight-search trials, reports and diagnostics."""
import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import configio
from .errors import ConfigError, DegenerateSampleError
from .metrics import decompose_gap, der, retrieval_quality, shared_space, theorem1_bound, weight_grid
from .optim import STRATEGIES, Observation, next_alpha, pareto_front
from .pipeline import POLICY_KINDS, RetrievalPolicy, as_alpha, run_batch, utility_surface
from .plotting import pareto_svg
from .seeding import derive_seed
from .stats import wilcoxon_signed_rank
from .worldgen import WorldConfig, generate_world, ingest_score_table, sample_user_batch

DEFAULT_STRATEGIES = ("random", "ei", "fair_ehvi")
SCALARIZATION_NOTE = ("scalarized = mean of min-max normalized utility and DER, "
                      "normalized over all records of the log (testbed convention)")


def _context_profile(n_contexts, toward_end, decay):
    x = np.arange(n_contexts, dtype=float)
    w = np.exp(-(n_contexts - 1 - x if toward_end else x) / decay)
    return tuple(w / w.sum())


def default_world_config(seed=20240601) -> WorldConfig:
    """Two labels, 80/20 groups with opposed preferences, calibrated scorers.

    Group 0 (majority) leans on label 0, group 1 on label 1; the context
    distributions are tilted toward opposite ends of the context index range.
    """
    n_contexts = 20
    return WorldConfig(
        n_contexts=n_contexts,
        n_items=400,
        n_labels=2,
        group_prevalence=(0.8, 0.2),
        context_dist=(_context_profile(n_contexts, False, 10.0), _context_profile(n_contexts, True, 10.0)),
        true_prefs=((0.9, 0.1), (0.1, 0.9)),
        miscalibration=0.0,
        latent_dim=4,
        seed=seed,
        label_correlation=-0.95,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldConfig = field(default_factory=default_world_config)
    world_path: str = None  # score table to ingest instead of generating ``world``
    policy: RetrievalPolicy = None
    strategies: tuple = DEFAULT_STRATEGIES
    n_trials: int = 20
    n_iterations: int = 20
    batch_size: int = 200
    m: int = 20
    q: int = 10
    master_seed: int = 0
    pool_size: int = 512
    n_mc: int = 128
    n_init: int = 5
    cei_gamma: float = 0.1

    def __post_init__(self):
        policy = RetrievalPolicy.oracle_top_m(self.m) if self.policy is None else replace(self.policy, m=self.m)
        object.__setattr__(self, "policy", policy)
        object.__setattr__(self, "strategies", tuple(self.strategies))
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigError("strategies", f"unknown strategy {s!r}")
        if not self.strategies:
            raise ConfigError("strategies", "need at least one strategy")
        for name in ("n_trials", "n_iterations", "batch_size", "q", "pool_size", "n_mc"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be a positive integer")
        if self.n_init < 0:
            raise ConfigError("n_init", "must be nonnegative")
        if self.q > self.pool_size:
            raise ConfigError("q", "must not exceed pool_size")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed", "must be a 64-bit unsigned integer")

    def load_world(self):
        if self.world_path:
            return ingest_score_table(self.world_path)
        return generate_world(self.world)


EXPERIMENT_KEYS = {
    "strategies", "n_trials", "n_iterations", "batch_size", "m", "q", "master_seed", "pool_size",
    "n_mc", "n_init", "cei_gamma", "world_path", "policy", "policy_label", "target_contexts",
    "keep_fraction", "policy_seed",
}
WORLD_KEYS = {"n_contexts", "n_items", "n_labels", "group_prevalence", "context_dist", "true_prefs",
              "miscalibration", "latent_dim", "seed", "label_correlation"}


def config_from_kv(kv, base_dir=None) -> ExperimentConfig:
    """Experiment config from a flat key=value mapping.

    World keys missing from ``kv`` fall back to :func:`default_world_config`.
    """
    unknown = sorted(set(kv) - EXPERIMENT_KEYS - WORLD_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown config key")
    world = WorldConfig.from_kv(kv, defaults=default_world_config())
    ints = {k: configio.parse_int(k, kv[k]) for k in
            ("n_trials", "n_iterations", "batch_size", "m", "q", "master_seed", "pool_size", "n_mc", "n_init")
            if k in kv}
    kind = kv.get("policy", "oracle_top_m")
    if kind not in POLICY_KINDS:
        raise ConfigError("policy", f"expected one of {POLICY_KINDS}")
    m = ints.get("m", 20)
    policy = RetrievalPolicy(
        kind=kind,
        m=m,
        label_index=configio.parse_int("policy_label", kv.get("policy_label", "0")),
        target_contexts=configio.parse_vector("target_contexts", kv.get("target_contexts", ""), int),
        keep_fraction=configio.parse_float("keep_fraction", kv.get("keep_fraction", "1.0")),
        seed=configio.parse_int("policy_seed", kv.get("policy_seed", "0")),
    )
    world_path = kv.get("world_path")
    if world_path and base_dir is not None and not Path(world_path).is_absolute():
        world_path = str(Path(base_dir) / world_path)
    extra = {}
    if "strategies" in kv:
        extra["strategies"] = tuple(s.strip() for s in kv["strategies"].split(",") if s.strip())
    if "cei_gamma" in kv:
        extra["cei_gamma"] = configio.parse_float("cei_gamma", kv["cei_gamma"])
    return ExperimentConfig(world=world, world_path=world_path, policy=policy, **ints, **extra)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return config_from_kv(configio.read_kv(path), base_dir=path.parent)


# --- running -------------------------------------------------------------------

@dataclass(frozen=True)
class TrialRecord:
    strategy: str
    trial: int
    iteration: int
    alpha: tuple
    utility: float
    der: float
    group_utils: tuple
    der_flag: bool = False  # some group had no users (or all means were zero)


@dataclass
class TrialLog:
    records: list
    strategies: tuple
    n_trials: int
    n_iterations: int

    @property
    def n_groups(self):
        return len(self.records[0].group_utils)

    @property
    def dim(self):
        return len(self.records[0].alpha)

    def trial_records(self, strategy, trial):
        return [r for r in self.records if r.strategy == strategy and r.trial == trial]

    def trials(self, strategy):
        return sorted({r.trial for r in self.records if r.strategy == strategy})


def trial_seed(master_seed, trial):
    return derive_seed(master_seed, "trial", trial)


def _run_trial(world, config: ExperimentConfig, strategy, trial):
    """One independent weight-search loop.

    User batches and outcome draws are keyed by (master seed, trial,
    iteration) only, so every strategy faces the same user stream.
    """
    K = world.shape[2]
    seed = trial_seed(config.master_seed, trial)
    history, records = [], []
    for it in range(config.n_iterations):
        alpha = next_alpha(strategy, history, seed, K, n_init=config.n_init, pool_size=config.pool_size,
                           q=config.q, n_mc=config.n_mc, cei_gamma=config.cei_gamma)
        if not np.any(alpha > 0):
            alpha = np.full(K, 1.0 / K)
        batch = sample_user_batch(world, config.batch_size, derive_seed(config.master_seed, "batch", trial, it))
        outcome = run_batch(world, config.policy, alpha, batch,
                            derive_seed(config.master_seed, "outcomes", trial, it))
        means = outcome.mean_realized_utility
        utility = outcome.pooled_realized_utility
        d = der(means)
        flag = bool(outcome.empty_flags.any() or means.sum() == 0)
        history.append(Observation(tuple(alpha.tolist()), utility, d))
        records.append(TrialRecord(strategy, trial, it, tuple(float(a) for a in alpha), utility, d,
                                   tuple(float(x) for x in means), flag))
    return records


def _run_job(args):
    config, strategy, trial = args
    return _run_trial(config.load_world(), config, strategy, trial)


def run_experiment(config: ExperimentConfig, threads=1) -> TrialLog:
    """Run every (strategy, trial) loop; output is independent of ``threads``."""
    world = config.load_world()
    config.policy.check(world)
    jobs = [(s, t) for s in config.strategies for t in range(config.n_trials)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_job, [(config, s, t) for s, t in jobs]))
    else:
        chunks = [_run_trial(world, config, s, t) for s, t in jobs]
    records = [r for chunk in chunks for r in chunk]
    return TrialLog(records, config.strategies, config.n_trials, config.n_iterations)


# --- trials.csv ---------------------------------------------------------------

def trials_header(dim, n_groups):
    return (["strategy", "trial", "iteration"] + [f"alpha_{k}" for k in range(dim)]
            + ["utility", "der"] + [f"group{g}_util" for g in range(n_groups)] + ["der_flag"])


def trials_csv(log: TrialLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trials_header(log.dim, log.n_groups))
    for r in log.records:
        w.writerow([r.strategy, r.trial, r.iteration, *map(repr, r.alpha), repr(r.utility), repr(r.der),
                    *map(repr, r.group_utils), int(r.der_flag)])
    return buf.getvalue()


def write_trials(log: TrialLog, path):
    Path(path).write_text(trials_csv(log))


def read_trials(path) -> TrialLog:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no records")
    keys = rows[0].keys()
    dim = sum(1 for k in keys if k.startswith("alpha_"))
    n_groups = sum(1 for k in keys if k.startswith("group") and k.endswith("_util"))
    records = [TrialRecord(
        row["strategy"], int(row["trial"]), int(row["iteration"]),
        tuple(float(row[f"alpha_{k}"]) for k in range(dim)),
        float(row["utility"]), float(row["der"]),
        tuple(float(row[f"group{g}_util"]) for g in range(n_groups)),
        bool(int(row.get("der_flag", 0) or 0)),
    ) for row in rows]
    strategies = tuple(dict.fromkeys(r.strategy for r in records))
    n_trials = len({r.trial for r in records})
    n_iterations = len({r.iteration for r in records})
    return TrialLog(records, strategies, n_trials, n_iterations)


# --- report -------------------------------------------------------------------

def _mean_sd(values):
    # sorted first so the floating-point sums do not depend on trial order
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return None, None
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def _wilcoxon_entry(diffs):
    out = {"n_pairs": len(diffs)}
    try:
        for alt in ("greater", "two_sided"):
            res = wilcoxon_signed_rank(diffs, alternative=alt)
            out[alt] = {"statistic": res.statistic, "p_value": res.p_value, "method": res.method}
        out["degenerate"] = False
    except DegenerateSampleError:
        for alt in ("greater", "two_sided"):
            out[alt] = {"statistic": 0.0, "p_value": 1.0, "method": "degenerate"}
        out["degenerate"] = True
    return out


def report(log: TrialLog):
    """Aggregate a trial log into per-strategy fronts, tables and tests.

    Returns a dict with ``summary`` (JSON-ready), ``fronts`` rows
    (strategy, trial, iteration, utility, der) and ``strategy_rows``.
    """
    if not log.records:
        raise ValueError("empty trial log")
    strategies = sorted(set(r.strategy for r in log.records))
    all_u = np.array([r.utility for r in log.records])
    all_d = np.array([r.der for r in log.records])
    u_lo, u_span = all_u.min(), np.ptp(all_u) or 1.0
    d_lo, d_span = all_d.min(), np.ptp(all_d) or 1.0

    front_rows, per_trial_best = [], {}
    for s in strategies:
        best = {}
        for t in log.trials(s):
            recs = sorted(log.trial_records(s, t), key=lambda r: r.iteration)
            pts = [(r.utility, r.der) for r in recs]
            for i in pareto_front(pts):
                front_rows.append((s, t, recs[i].iteration, recs[i].utility, recs[i].der))
            scal = [0.5 * ((u - u_lo) / u_span + (d - d_lo) / d_span) for u, d in pts]
            best[t] = (max(p[0] for p in pts), max(p[1] for p in pts), max(scal))
        per_trial_best[s] = best

    front_rows.sort(key=lambda r: (r[0], r[1], r[2]))
    global_pts = [(r[3], r[4]) for r in front_rows]
    global_idx = pareto_front(global_pts) if global_pts else []
    global_owner = [front_rows[i][0] for i in global_idx]

    summary = {"strategies": {}, "global_front_size": len(global_idx), "scalarization": SCALARIZATION_NOTE,
               "n_records": len(log.records), "der_flagged_records": sum(r.der_flag for r in log.records)}
    strategy_rows = []
    for s in strategies:
        rows = [r for r in front_rows if r[0] == s]
        best = per_trial_best[s]
        fu = _mean_sd([r[3] for r in rows])
        fd = _mean_sd([r[4] for r in rows])
        bu = _mean_sd([b[0] for b in best.values()])
        bd = _mean_sd([b[1] for b in best.values()])
        sc = _mean_sd([b[2] for b in best.values()])
        on_global = global_owner.count(s)
        entry = {
            "n_trials": len(best),
            "front_points": len(rows),
            "front_utility_mean": fu[0], "front_utility_sd": fu[1],
            "front_der_mean": fd[0], "front_der_sd": fd[1],
            "best_utility_mean": bu[0], "best_utility_sd": bu[1],
            "best_der_mean": bd[0], "best_der_sd": bd[1],
            "scalarized_mean": sc[0], "scalarized_sd": sc[1],
            "global_front_points": on_global,
            "global_front_share": on_global / len(global_idx) if global_idx else 0.0,
        }
        summary["strategies"][s] = entry
        strategy_rows.append([s] + [entry[k] for k in STRATEGY_TABLE_COLUMNS[1:]])

    tests = {}
    if "fair_ehvi" in per_trial_best:
        fe = per_trial_best["fair_ehvi"]
        for other in ("random", "ei"):
            if other not in per_trial_best:
                continue
            ob = per_trial_best[other]
            common = sorted(set(fe) & set(ob))
            tests[f"fair_ehvi_vs_{other}"] = {
                "best_der": _wilcoxon_entry([fe[t][1] - ob[t][1] for t in common]),
                "best_utility": _wilcoxon_entry([fe[t][0] - ob[t][0] for t in common]),
            }
    summary["wilcoxon"] = tests
    return {"summary": summary, "fronts": front_rows, "strategy_rows": strategy_rows}


STRATEGY_TABLE_COLUMNS = ["strategy", "n_trials", "front_points", "front_utility_mean", "front_utility_sd",
                          "front_der_mean", "front_der_sd", "best_utility_mean", "best_utility_sd",
                          "best_der_mean", "best_der_sd", "scalarized_mean", "scalarized_sd",
                          "global_front_points", "global_front_share"]
FRONTS_COLUMNS = ["strategy", "trial", "iteration", "utility", "der"]


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    Path(path).write_text(buf.getvalue())


def write_report(bundle, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(bundle["summary"], indent=2, sort_keys=True) + "\n")
    _write_csv(out / "fronts.csv", FRONTS_COLUMNS, bundle["fronts"])
    _write_csv(out / "strategies.csv", STRATEGY_TABLE_COLUMNS, bundle["strategy_rows"])
    by_strategy = {}
    for s, _, _, u, d in bundle["fronts"]:
        by_strategy.setdefault(s, []).append((u, d))
    (out / "pareto.svg").write_text(pareto_svg(by_strategy))
    return out


# --- diagnostics --------------------------------------------------------------

GRID_SCAN_POINTS = 21


def diagnose(world, policy: RetrievalPolicy, alpha):
    """Gap decomposition, preference bound, retrieval quality and a utility grid scan."""
    a = as_alpha(alpha, world.shape[2])
    cd = world.context_dist
    s = shared_space(cd[1], cd[0]).weights
    decomposition = decompose_gap(world, policy, a)
    bundle = {
        "alpha": a.tolist(),
        "policy": policy.kind,
        "m": policy.m,
        **decomposition.to_dict(),
        "theorem1_bound": theorem1_bound(world, policy, a),
        "retrieval_quality": {
            "group0": retrieval_quality(world, policy, cd[0]),
            "group1": retrieval_quality(world, policy, cd[1]),
            "shared": retrieval_quality(world, policy, s),
        },
        "shared_space": s.tolist(),
    }
    scan = []
    if world.shape[2] == 2:
        grid = weight_grid(GRID_SCAN_POINTS, 2)
        for g in range(world.n_groups):
            util = utility_surface(world, policy, grid, world.true_prefs[g], cd[g])
            scan.extend((g, float(x0), float(x1), float(u)) for (x0, x1), u in zip(grid, util))
            best = int(np.argmax(util))
            bundle.setdefault("grid_argmax", {})[f"group{g}"] = {"alpha": grid[best].tolist(),
                                                                 "utility": float(util[best])}
    return {"diagnostics": bundle, "grid_scan": scan}


def write_diagnostics(bundle, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "diagnostics.json").write_text(json.dumps(bundle["diagnostics"], indent=2, sort_keys=True) + "\n")
    if bundle["grid_scan"]:
        _write_csv(out / "grid_scan.csv", ["group", "alpha_0", "alpha_1", "utility"], bundle["grid_scan"])
    return out
