"""Config-driven experiment sweeps with reproducible per-trial streams.

Every trial draws its data and mechanism randomness from
``SeedSequence([master_seed, trial_index])``, where trial_index counts trials
across the whole sweep in config order.  Any single record can be replayed
from (config, master_seed, trial_index) alone.
"""
from __future__ import annotations

import csv
import io as _io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import yaml
from scipy import stats

from . import rng as rngmod
from .audit import clopper_pearson
from .errors import ConfigError, PrivMeanError
from .linalg import PsdMatrix, mahalanobis
from .primitives import PrivacyBudget
from .rescaled import C_LAMBDA, discrete_rescaled_pipeline, mechanism_budget, rescaled_gaussian_mechanism
from .synth import FAMILIES, SynthSpec, synthesize
from .tukey import discrete_tukey_pipeline

CSV_COLUMNS = ("mechanism", "n", "d", "eps", "delta", "outcome", "mahalanobis_error", "seconds", "seed")
MECHANISMS = ("tukey", "rescaled")
SWEEP_KEYS = ("mechanism", "family", "n", "d", "eps", "delta", "alpha", "beta")
DEFAULTS = {
    "master_seed": 0,
    "trials": 1,
    "mechanism": "rescaled",
    "family": "gaussian",
    "n": 1000,
    "d": 1,
    "eps": 1.0,
    "delta": 1e-6,
    "alpha": 0.3,
    "beta": 0.05,
    "pipeline": "main",
    "mode": None,
    "sigma_scale": 1.0,
    "mean": 0.0,
    "c_lambda": C_LAMBDA,
    "workers": 1,
}


@dataclass(frozen=True)
class TrialConfig:
    mechanism: str
    family: str
    n: int
    d: int
    eps: float
    delta: float
    alpha: float
    beta: float
    pipeline: str = "main"
    mode: Optional[str] = None
    sigma_scale: float = 1.0
    mean: float = 0.0
    c_lambda: float = C_LAMBDA

    @property
    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.eps, self.delta)

    @property
    def sample_count(self) -> int:
        # the Tukey pipeline pairs n points; the rescaled mechanism splits 3n
        return (2 if self.mechanism == "tukey" else 3) * self.n

    def sigma(self) -> PsdMatrix:
        # a fixed anisotropic covariance so errors are not trivially Euclidean
        d = self.d
        a = np.eye(d) + 0.5 * np.tri(d, d, -1)
        return PsdMatrix(self.sigma_scale * (a @ a.T))

    def declared_budget(self) -> tuple[float, float]:
        eps, delta = self.eps, self.delta
        preprocess = (3 * eps, 3 * delta)
        if self.mechanism == "tukey":
            return preprocess[0] + 2 * eps, preprocess[1] + math.exp(eps) * delta
        e3, d3 = mechanism_budget(self.budget)
        if self.pipeline == "discrete":
            return preprocess[0] + e3, preprocess[1] + d3
        return e3, d3


@dataclass
class ExperimentRecord:
    trial_index: int
    master_seed: int
    config: dict
    outcome: str
    reason: str
    mahalanobis_error: Optional[float]
    seconds: Optional[float]
    ledger_epsilon: float
    ledger_delta: float

    def __post_init__(self):
        assert self.mahalanobis_error is None or self.mahalanobis_error >= 0

    @property
    def seed(self) -> str:
        return f"{self.master_seed}:{self.trial_index}"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, allow_nan=False)

    def csv_row(self) -> list:
        c = self.config
        err = "" if self.mahalanobis_error is None else repr(self.mahalanobis_error)
        secs = "" if self.seconds is None else f"{self.seconds:.6f}"
        return [c["mechanism"], c["n"], c["d"], c["eps"], c["delta"], self.outcome, err, secs, self.seed]


def _mark_line(node) -> int:
    return node.start_mark.line + 1


def load_config(text: str) -> dict:
    """Parse and validate a YAML sweep config; errors carry the offending line."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from None
    if root is None:
        raise ConfigError("empty config", 1)
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("top level must be a mapping", _mark_line(root))
    data = yaml.safe_load(text)
    lines = {}
    for key_node, _ in root.value:
        if key_node.value not in DEFAULTS:
            raise ConfigError(f"unknown key {key_node.value!r}", _mark_line(key_node))
        lines[key_node.value] = _mark_line(key_node)
    cfg = dict(DEFAULTS)
    cfg.update(data)
    for key in SWEEP_KEYS:
        if not isinstance(cfg[key], list):
            cfg[key] = [cfg[key]]
        if not cfg[key]:
            raise ConfigError(f"{key} must not be empty", lines.get(key))
    _validate(cfg, lines)
    return cfg


def _validate(cfg: dict, lines: dict):
    def bad(key, msg):
        raise ConfigError(f"{key}: {msg}", lines.get(key))

    for key, pred, msg in [
        ("mechanism", lambda v: v in MECHANISMS, f"must be one of {MECHANISMS}"),
        ("family", lambda v: v in FAMILIES, f"must be one of {sorted(FAMILIES)}"),
        ("n", lambda v: isinstance(v, int) and v >= 1, "must be a positive integer"),
        ("d", lambda v: isinstance(v, int) and v >= 1, "must be a positive integer"),
        ("eps", lambda v: isinstance(v, (int, float)) and v > 0, "must be positive"),
        ("delta", lambda v: isinstance(v, (int, float)) and 0 < v < 1, "must lie in (0, 1)"),
        ("alpha", lambda v: isinstance(v, (int, float)) and v > 0, "must be positive"),
        ("beta", lambda v: isinstance(v, (int, float)) and 0 < v < 1, "must lie in (0, 1)"),
    ]:
        for v in cfg[key]:
            if not pred(v):
                bad(key, f"{v!r} {msg}")
    if not (isinstance(cfg["trials"], int) and cfg["trials"] >= 0):
        bad("trials", "must be a nonnegative integer")
    if not isinstance(cfg["master_seed"], int) or cfg["master_seed"] < 0:
        bad("master_seed", "must be a nonnegative integer")
    if cfg["pipeline"] not in ("main", "discrete"):
        bad("pipeline", "must be 'main' or 'discrete'")
    if not (isinstance(cfg["workers"], int) and cfg["workers"] >= 1):
        bad("workers", "must be a positive integer")


def grid_points(cfg: dict) -> list[TrialConfig]:
    out = []
    for combo in itertools.product(*(cfg[k] for k in SWEEP_KEYS)):
        kw = dict(zip(SWEEP_KEYS, combo))
        out.append(TrialConfig(
            **kw, pipeline=cfg["pipeline"], mode=cfg["mode"], sigma_scale=float(cfg["sigma_scale"]),
            mean=float(cfg["mean"]), c_lambda=float(cfg["c_lambda"]),
        ))
    return out


def run_trial(tc: TrialConfig, master_seed: int, trial_index: int, timing: bool = False) -> ExperimentRecord:
    rng = rngmod.trial_stream(master_seed, trial_index)
    mu = np.full(tc.d, tc.mean)
    sigma = tc.sigma()
    x = synthesize(SynthSpec(tc.family, mu, sigma, tc.sample_count), rng)
    start = time.perf_counter()
    try:
        if tc.mechanism == "tukey":
            out = discrete_tukey_pipeline(x, tc.budget, tc.alpha, tc.beta, rng, distance_mode=tc.mode or "certificate")
        elif tc.pipeline == "discrete":
            out = discrete_rescaled_pipeline(x, tc.budget, tc.alpha, tc.beta, 1.0, rng, tc.mode or "greedy", tc.c_lambda)
        else:
            out = rescaled_gaussian_mechanism(x, tc.budget, tc.beta, rng, tc.mode or "greedy", c_lambda=tc.c_lambda)
        reason = out.reason
        err = None if out.failed else float(mahalanobis(out.estimate - mu, sigma))
        eps_total, delta_total = out.ledger.total
    except PrivMeanError as exc:
        # preprocessing aborted; account for the full declared budget
        reason, err = f"{type(exc).__name__}: {exc}", None
        eps_total, delta_total = tc.declared_budget()
    seconds = time.perf_counter() - start if timing else None
    return ExperimentRecord(
        trial_index=trial_index,
        master_seed=master_seed,
        config=asdict(tc),
        outcome="FAIL" if err is None else "OK",
        reason=reason,
        mahalanobis_error=err,
        seconds=seconds,
        ledger_epsilon=eps_total,
        ledger_delta=delta_total,
    )


def _run_packed(args):
    return run_trial(*args)


def header_line(cfg: dict) -> str:
    head = {
        "format": "privmean-bench/1",
        "master_seed": cfg["master_seed"],
        "seed_derivation": rngmod.STREAM_DERIVATION,
        "trial_index": "counts trials across grid points in config order",
        "config": {k: cfg[k] for k in sorted(cfg)},
    }
    return "# " + json.dumps(head, sort_keys=True)


def run_experiment(config, out_path=None, timing: bool = False, csv_path=None) -> list[ExperimentRecord]:
    """Run every (grid point, trial) pair; write JSONL (and CSV) in trial order."""
    if isinstance(config, dict):
        cfg = load_config(yaml.safe_dump(config))
    else:
        with open(config) as fh:
            cfg = load_config(fh.read())
    jobs = []
    for tc in grid_points(cfg):
        for _ in range(cfg["trials"]):
            jobs.append((tc, cfg["master_seed"], len(jobs), timing))
    if cfg["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            records = list(pool.map(_run_packed, jobs, chunksize=1))
    else:
        records = [_run_packed(j) for j in jobs]
    if out_path is not None:
        with open(out_path, "w") as fh:
            fh.write(header_line(cfg) + "\n")
            for rec in records:
                fh.write(rec.to_json() + "\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            fh.write(records_to_csv(records))
    return records


def records_to_csv(records) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        w.writerow(rec.csv_row())
    return buf.getvalue()


def read_records(path) -> list[ExperimentRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            out.append(ExperimentRecord(**json.loads(line)))
    return out


def median_interval(values, confidence: float = 0.99) -> tuple[float, float]:
    """Distribution-free order-statistic interval for the median."""
    v = np.sort(np.asarray(values, dtype=float))
    m = len(v)
    if m == 0:
        return math.nan, math.nan
    a = 1 - confidence
    lo = int(stats.binom.ppf(a / 2, m, 0.5))
    hi = int(stats.binom.isf(a / 2, m, 0.5))
    return float(v[max(lo - 1, 0)]), float(v[min(hi, m - 1)])


@dataclass
class GroupSummary:
    key: tuple
    trials: int
    fails: int
    fail_rate_ci: tuple
    median_error: Optional[float]
    median_error_ci: tuple
    success_rate: float = field(default=math.nan)


def summarize(records, alpha: Optional[float] = None) -> list[GroupSummary]:
    groups: dict = {}
    for rec in records:
        c = rec.config
        key = (c["mechanism"], c["family"], c["n"], c["d"], c["eps"], c["delta"])
        groups.setdefault(key, []).append(rec)
    out = []
    for key in sorted(groups):
        recs = groups[key]
        errs = [r.mahalanobis_error for r in recs if r.mahalanobis_error is not None]
        fails = len(recs) - len(errs)
        success = math.nan
        if alpha is not None:
            success = sum(e <= alpha for e in errs) / len(recs)
        out.append(GroupSummary(
            key=key,
            trials=len(recs),
            fails=fails,
            fail_rate_ci=clopper_pearson(fails, len(recs)),
            median_error=float(np.median(errs)) if errs else None,
            median_error_ci=median_interval(errs),
            success_rate=success,
        ))
    return out
