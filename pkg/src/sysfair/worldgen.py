"""Finite synthetic recommendation worlds.

A world is a discrete set of user contexts, a corpus of items and K binary
outcome labels. Everything is a dense tensor indexed ``[context, item,
label]`` so every expectation in the analysis is an exact finite sum.
"""
from dataclasses import MISSING, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.special import expit, logit

from . import configio
from .errors import ConfigError, IngestionError

PROB_FLOOR = 1e-6
# logit scale of the low-rank outcome model; sd of u.v is about LOGIT_SCALE
LOGIT_SCALE = 2.0
BIAS_SD = 0.5
STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class WorldConfig:
    n_contexts: int
    n_items: int
    n_labels: int
    group_prevalence: tuple
    context_dist: tuple  # one probability row over contexts per group
    true_prefs: tuple  # one alpha*(g) row per group
    miscalibration: float = 0.0
    latent_dim: int = 4
    seed: int = 0
    label_correlation: float = 0.0  # correlation of each label's item factors with label 0's

    def __post_init__(self):
        object.__setattr__(self, "group_prevalence", tuple(float(x) for x in self.group_prevalence))
        object.__setattr__(self, "context_dist", tuple(tuple(float(x) for x in r) for r in self.context_dist))
        object.__setattr__(self, "true_prefs", tuple(tuple(float(x) for x in r) for r in self.true_prefs))

    @property
    def n_groups(self):
        return len(self.group_prevalence)

    def validate(self):
        for name in ("n_contexts", "n_items", "n_labels", "latent_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(name, "must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        prev = np.asarray(self.group_prevalence)
        if prev.size < 2:
            raise ConfigError("group_prevalence", "need at least two groups")
        _check_stochastic("group_prevalence", prev)
        cd = self.context_dist
        if len(cd) != prev.size:
            raise ConfigError("context_dist", f"expected {prev.size} rows, got {len(cd)}")
        for g, row in enumerate(cd):
            if len(row) != self.n_contexts:
                raise ConfigError("context_dist", f"row {g} has {len(row)} entries, expected {self.n_contexts}")
            _check_stochastic("context_dist", np.asarray(row))
        tp = self.true_prefs
        if len(tp) != prev.size:
            raise ConfigError("true_prefs", f"expected {prev.size} rows, got {len(tp)}")
        for g, row in enumerate(tp):
            if len(row) != self.n_labels:
                raise ConfigError("true_prefs", f"row {g} has {len(row)} entries, expected {self.n_labels}")
            if not all(np.isfinite(row)) or min(row) <= 0:
                raise ConfigError("true_prefs", f"row {g} must be strictly positive")
        if not np.isfinite(self.miscalibration) or self.miscalibration < 0:
            raise ConfigError("miscalibration", "must be a nonnegative real")
        if not -1 <= self.label_correlation <= 1:
            raise ConfigError("label_correlation", "must lie in [-1, 1]")
        return self

    def to_kv(self):
        return {
            "n_contexts": str(self.n_contexts),
            "n_items": str(self.n_items),
            "n_labels": str(self.n_labels),
            "group_prevalence": configio.fmt_vector(self.group_prevalence),
            "context_dist": configio.fmt_matrix(self.context_dist),
            "true_prefs": configio.fmt_matrix(self.true_prefs),
            "miscalibration": configio.fmt_float(self.miscalibration),
            "latent_dim": str(self.latent_dim),
            "seed": str(self.seed),
            "label_correlation": configio.fmt_float(self.label_correlation),
        }

    @classmethod
    def from_kv(cls, kv, defaults=None):
        """Build from parsed key=value pairs; missing keys come from ``defaults``."""
        base = {} if defaults is None else {f.name: getattr(defaults, f.name) for f in fields(cls)}
        parsers = {
            "n_contexts": configio.parse_int,
            "n_items": configio.parse_int,
            "n_labels": configio.parse_int,
            "latent_dim": configio.parse_int,
            "seed": configio.parse_int,
            "miscalibration": configio.parse_float,
            "label_correlation": configio.parse_float,
            "group_prevalence": configio.parse_vector,
            "context_dist": configio.parse_matrix,
            "true_prefs": configio.parse_matrix,
        }
        for key, parse in parsers.items():
            if key in kv:
                base[key] = parse(key, kv[key])
        missing = [f.name for f in fields(cls) if f.name not in base and f.default is MISSING]
        if missing:
            raise ConfigError(missing[0], "required key missing")
        return cls(**base)


def _check_stochastic(name, v):
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ConfigError(name, "entries must be finite and nonnegative")
    if abs(v.sum() - 1.0) > STOCHASTIC_TOL:
        raise ConfigError(name, f"must sum to 1 (got {v.sum()!r})")


@dataclass(frozen=True, eq=False)
class World:
    config: WorldConfig
    outcome_probs: np.ndarray  # p[x, j, k] = E[Y_k^j | X=x]
    scorer_outputs: np.ndarray  # f[x, j, k]

    def __post_init__(self):
        c = self.config
        shape = (c.n_contexts, c.n_items, c.n_labels)
        for name in ("outcome_probs", "scorer_outputs"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} entries must lie in [0, 1]")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def prevalence(self):
        return np.asarray(self.config.group_prevalence)

    @property
    def context_dist(self):
        return np.asarray(self.config.context_dist)

    @property
    def true_prefs(self):
        return np.asarray(self.config.true_prefs)

    @property
    def n_groups(self):
        return self.config.n_groups

    @property
    def shape(self):
        return self.outcome_probs.shape


@dataclass(frozen=True, eq=False)
class UserBatch:
    contexts: np.ndarray
    groups: np.ndarray
    seed: int = field(default=0)

    def __len__(self):
        return len(self.contexts)

    @property
    def entries(self):
        return list(zip(self.contexts.tolist(), self.groups.tolist()))


def generate_world(config: WorldConfig) -> World:
    """Draw a low-rank logistic world.

    ``p[x, j, k] = sigmoid(u_x . v_jk + b_k)`` with Gaussian latent factors;
    ``label_correlation`` couples each label's item factors to label 0's
    (negative values make items trade one outcome against another).
    With ``miscalibration == 0`` the scorer equals ``p`` exactly; otherwise
    each score is perturbed in logit space by ``miscalibration * N(0, 1)``.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    X, M, K, d = config.n_contexts, config.n_items, config.n_labels, config.latent_dim
    u = rng.standard_normal((X, d))
    v = rng.standard_normal((M, K, d))
    rho = config.label_correlation
    v[:, 1:] = rho * v[:, :1] + np.sqrt(1 - rho**2) * v[:, 1:]
    b = rng.normal(0.0, BIAS_SD, size=K)
    logits = np.einsum("xd,jkd->xjk", u, v) * (LOGIT_SCALE / np.sqrt(d)) + b
    p = np.clip(expit(logits), PROB_FLOOR, 1 - PROB_FLOOR)
    if config.miscalibration == 0:
        f = p.copy()
    else:
        eta = rng.standard_normal(p.shape)
        f = np.clip(expit(logit(p) + config.miscalibration * eta), PROB_FLOOR, 1 - PROB_FLOOR)
    return World(config, p, f)


def world_from_arrays(config: WorldConfig, outcome_probs, scorer_outputs=None) -> World:
    """Wrap hand-built tensors (constructed test regimes); scorer defaults to calibrated."""
    p = np.asarray(outcome_probs, dtype=float)
    f = p.copy() if scorer_outputs is None else np.asarray(scorer_outputs, dtype=float)
    return World(config, p, f)


def sample_user_batch(world: World, n: int, seed) -> UserBatch:
    if n < 1:
        raise ValueError("batch size must be at least 1")
    rng = np.random.default_rng(seed)
    G, X = world.n_groups, world.config.n_contexts
    groups = rng.choice(G, size=n, p=world.prevalence)
    contexts = np.empty(n, dtype=np.int64)
    for g in range(G):
        idx = np.flatnonzero(groups == g)
        if idx.size:
            contexts[idx] = rng.choice(X, size=idx.size, p=world.context_dist[g])
    return UserBatch(contexts, groups.astype(np.int64), seed)


def sample_outcomes(world: World, context, item, seed) -> np.ndarray:
    X, M, _ = world.shape
    if not (0 <= context < X and 0 <= item < M):
        raise IndexError(f"(context={context}, item={item}) out of range for world of shape {world.shape}")
    rng = np.random.default_rng(seed)
    probs = world.outcome_probs[context, item]
    return (rng.random(probs.shape) < probs).astype(np.int64)


# --- score-table export / ingestion -------------------------------------------

TABLE_COLUMNS = "context,item,label,score,true_prob"


def export_score_table(world: World, path, sidecar=None):
    """Write ``world`` as a dense CSV score table plus a key=value sidecar."""
    path = Path(path)
    X, M, K = world.shape
    lines = [f"#contexts={X},items={M},labels={K}", TABLE_COLUMNS]
    f, p = world.scorer_outputs, world.outcome_probs
    for x in range(X):
        for j in range(M):
            for k in range(K):
                lines.append(f"{x},{j},{k},{float(f[x, j, k])!r},{float(p[x, j, k])!r}")
    path.write_text("\n".join(lines) + "\n")
    configio.write_kv(sidecar_path(path) if sidecar is None else sidecar, world.config.to_kv())
    return path


def sidecar_path(path):
    return Path(path).with_suffix(".cfg")


def _parse_header(line):
    if not line.startswith("#"):
        raise IngestionError("first line must be '#contexts=<n>,items=<n>,labels=<n>'", 1)
    meta = {}
    for part in line[1:].split(","):
        if "=" not in part:
            raise IngestionError(f"bad header field {part!r}", 1)
        k, v = part.split("=", 1)
        try:
            meta[k.strip()] = int(v)
        except ValueError:
            raise IngestionError(f"bad header value {v!r}", 1) from None
    try:
        dims = meta["contexts"], meta["items"], meta["labels"]
    except KeyError as e:
        raise IngestionError(f"header missing {e.args[0]!r}", 1) from None
    if min(dims) < 1:
        raise IngestionError("header dimensions must be positive", 1)
    return dims


def ingest_score_table(path, sidecar=None) -> World:
    """Load a World from a score table.

    Group prevalence, context distributions and true preferences come from the
    sidecar config (``<table>.cfg`` unless given); tensor dimensions come from
    the table header and must agree with the sidecar if it states them.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise IngestionError("empty file")
    X, M, K = _parse_header(lines[0])
    p = np.full((X, M, K), np.nan)
    f = np.full((X, M, K), np.nan)
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line == TABLE_COLUMNS:
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise IngestionError(f"expected 5 columns, got {len(parts)}", lineno)
        try:
            x, j, k = (int(s) for s in parts[:3])
            score, prob = float(parts[3]), float(parts[4])
        except ValueError:
            raise IngestionError(f"unparseable row {raw!r}", lineno) from None
        if not (0 <= x < X and 0 <= j < M and 0 <= k < K):
            raise IngestionError(f"index ({x},{j},{k}) out of range", lineno)
        for name, val in (("score", score), ("true_prob", prob)):
            if not 0.0 <= val <= 1.0:
                raise IngestionError(f"{name} {val!r} outside [0, 1]", lineno)
        if not np.isnan(f[x, j, k]):
            raise IngestionError(f"duplicate key ({x},{j},{k})", lineno)
        f[x, j, k] = score
        p[x, j, k] = prob
    missing = np.argwhere(np.isnan(f))
    if missing.size:
        x, j, k = missing[0]
        raise IngestionError(f"{len(missing)} missing rows, first ({x},{j},{k})")

    side = sidecar_path(path) if sidecar is None else Path(sidecar)
    if not side.exists():
        raise IngestionError(f"sidecar config {side} not found")
    kv = configio.read_kv(side)
    for key, val in (("n_contexts", X), ("n_items", M), ("n_labels", K)):
        if key in kv and configio.parse_int(key, kv[key]) != val:
            raise IngestionError(f"sidecar {key}={kv[key]} disagrees with table header ({val})")
        kv[key] = str(val)
    config = WorldConfig.from_kv(kv).validate()
    return World(config, p, f)
