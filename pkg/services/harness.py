# services/harness.py
"""
Experiment orchestration: seeded trials, checkpoint metrics, α sweeps over a
worker pool, the feedback-regime comparison and result files.

Every (α, trial) pair is an independent unit of work. Trial i draws from the
stream seeded with mix_seed(base_seed, i), the same for every α, so α values
are compared on paired instances. Results are always reduced in trial-index
order, which makes serial and parallel runs byte-identical.
"""
from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import DEFAULT_SEED, DEFAULT_WORKERS, MEAN_RANGE, VERSION
from services.family_store import load_family, load_instance
from services.instance import (
    BanditInstance,
    NOISE_LAWS,
    SuperArmFamily,
    make_instance,
    make_perfect_matchings,
    make_restricted_family,
    make_uniform_matroid,
    sample_means,
    true_gaps,
)
from services.mixcombkl import run_mixcombkl
from services.mixcombucb import run_mixcombucb
from services.trace_store import TraceWriter
from utils.errors import CombBanditError, ConfigError, TrialError
from utils.geometry import estimable_base_arms, spectral_constants
from utils.metrics import Checkpoint, aggregate, make_checkpoint, regret
from utils.seeding import FIXED_INSTANCE_INDEX, SEED_MIX_ID, make_rng, mix_seed

log = logging.getLogger(__name__)

ALGOS = ("kl", "ucb")
FAMILY_KINDS = ("uniform-matroid", "restricted", "matching", "file")
SCHEDULES = ("pow2", "final")
FORMATS = ("csv", "json")

CSV_COLUMNS = [
    "algo",
    "alpha",
    "trial",
    "seed",
    "t",
    "cum_regret",
    "mse_mu",
    "mse_M",
    "max_err_mu",
    "max_err_M",
    "pareto_product",
]
METRICS = CSV_COLUMNS[5:]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FamilySpec:
    kind: str = "uniform-matroid"
    d: Optional[int] = None
    m: Optional[int] = None
    d0: Optional[int] = None
    path: Optional[str] = None


def validate_family_spec(spec: FamilySpec) -> FamilySpec:
    if spec.kind not in FAMILY_KINDS:
        raise ConfigError(f"family must be one of {FAMILY_KINDS}, got {spec.kind!r}")
    required = {
        "uniform-matroid": ("d", "m"),
        "matching": ("m",),
        "restricted": ("d0",),
        "file": ("path",),
    }[spec.kind]
    for name in required:
        value = getattr(spec, name)
        if value is None or value == "":
            flag = "--family-file" if name == "path" else f"--{name}"
            raise ConfigError(f"{spec.kind} family needs {flag}")
        if name != "path" and value < 1:
            raise ConfigError(f"--{name} must be >= 1, got {value}")
    if spec.kind == "uniform-matroid" and spec.m > spec.d:
        raise ConfigError(f"m={spec.m} exceeds d={spec.d}")
    return spec


@dataclass(frozen=True)
class MeanSpec:
    """Either U[lo, hi] draws per trial or one explicit vector."""

    lo: float = MEAN_RANGE[0]
    hi: float = MEAN_RANGE[1]
    values: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class ExperimentConfig:
    algo: str
    family: FamilySpec
    n: int
    alphas: Tuple[float, ...]
    trials: int = 1
    seed: int = DEFAULT_SEED
    means: MeanSpec = field(default_factory=MeanSpec)
    checkpoints: str = "pow2"
    noise: str = "bernoulli"
    fixed_instance: bool = False
    strict: bool = False
    workers: int = DEFAULT_WORKERS
    trace_dir: Optional[str] = None

    def validate(self) -> "ExperimentConfig":
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not self.alphas:
            raise ConfigError("alpha grid is empty")
        for a in self.alphas:
            if not (0.0 <= a <= 1.0):
                raise ConfigError(f"alpha values must lie in [0, 1], got {a}")
        if len(set(self.alphas)) != len(self.alphas):
            raise ConfigError("alpha grid has duplicates")
        if self.checkpoints not in SCHEDULES:
            raise ConfigError(f"checkpoint schedule must be one of {SCHEDULES}")
        if self.noise not in NOISE_LAWS:
            raise ConfigError(f"noise must be one of {NOISE_LAWS}")
        self._validate_family()
        if self.means.values is None and not 0.0 <= self.means.lo < self.means.hi <= 1.0:
            raise ConfigError(f"need 0 <= mean-lo < mean-hi <= 1, got {self.means}")
        return self

    def _validate_family(self) -> None:
        validate_family_spec(self.family)
        if self.algo == "kl" and self.family.kind == "restricted":
            raise ConfigError("full-bandit runs need a family with one common arm size")

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["alphas"] = list(self.alphas)
        return out


@dataclass
class TrialResult:
    algo: str
    alpha: float
    trial: int
    seed: int
    mu: np.ndarray
    checkpoints: List[Checkpoint]
    est_super: np.ndarray
    est_base: np.ndarray
    true_super: np.ndarray
    true_base: np.ndarray
    tracked_arms: List[Tuple[int, ...]]
    estimable: List[int]
    warnings: List[str]
    wall_time: float = 0.0

    def rows(self) -> List[Dict[str, Any]]:
        head = {"algo": self.algo, "alpha": self.alpha, "trial": self.trial, "seed": self.seed}
        return [dict(head, **asdict(c)) for c in self.checkpoints]

    def to_dict(self) -> Dict[str, Any]:
        # wall_time stays out so files are reproducible
        return {
            "algo": self.algo,
            "alpha": self.alpha,
            "trial": self.trial,
            "seed": self.seed,
            "mu": self.mu.tolist(),
            "checkpoints": [asdict(c) for c in self.checkpoints],
            "final": {
                "est_super": self.est_super.tolist(),
                "true_super": self.true_super.tolist(),
                "est_base": self.est_base.tolist(),
                "true_base": self.true_base.tolist(),
            },
            "tracked_arms": [[e + 1 for e in arm] for arm in self.tracked_arms],
            "estimable": [e + 1 for e in self.estimable],
            "warnings": list(self.warnings),
        }


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: List[TrialResult]
    summary: pd.DataFrame

    def frame(self) -> pd.DataFrame:
        rows = [row for tr in self.trials for row in tr.rows()]
        return pd.DataFrame(rows, columns=CSV_COLUMNS)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------
def build_family(spec: FamilySpec) -> SuperArmFamily:
    if spec.kind == "uniform-matroid":
        return make_uniform_matroid(spec.d, spec.m)
    if spec.kind == "restricted":
        return make_restricted_family(spec.d0)
    if spec.kind == "matching":
        return make_perfect_matchings(spec.m)
    if spec.kind == "file":
        return load_family(spec.path)
    raise ConfigError(f"unknown family kind {spec.kind!r}")


def checkpoint_schedule(n: int) -> List[int]:
    """Powers of two below n, then n."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    marks = []
    t = 1
    while t < n:
        marks.append(t)
        t *= 2
    marks.append(n)
    return marks


def _fixed_means(config: ExperimentConfig, family: SuperArmFamily) -> Optional[np.ndarray]:
    if config.means.values is not None:
        return np.asarray(config.means.values, dtype=float)
    if config.family.kind == "file":
        try:
            return load_instance(config.family.path).mu
        except CombBanditError:
            return None
    return None


def _build_instance(
    config: ExperimentConfig, family: SuperArmFamily, rng: np.random.Generator
) -> BanditInstance:
    """Explicit means win; otherwise U[lo, hi] draws, shared in fixed-instance mode."""
    mu = _fixed_means(config, family)
    if mu is None:
        if config.fixed_instance:
            shared = make_rng(mix_seed(config.seed, FIXED_INSTANCE_INDEX))
            mu = sample_means(shared, family.d, config.means.lo, config.means.hi)
        else:
            mu = sample_means(rng, family.d, config.means.lo, config.means.hi)
    return make_instance(family, mu, config.noise)


def _trace_path(config: ExperimentConfig, alpha: float, trial_index: int) -> str:
    return os.path.join(config.trace_dir, f"{config.algo}_alpha{alpha:g}_trial{trial_index}.jsonl")


def _play(config, inst, alpha, rng, marks, trace):
    if config.algo == "kl":
        return run_mixcombkl(
            inst, config.n, alpha, rng, checkpoints=marks, trace=trace, strict=config.strict
        )
    return run_mixcombucb(inst, config.n, alpha, rng, checkpoints=marks, trace=trace)


def run_trial(
    config: ExperimentConfig, trial_index: int, alpha: Optional[float] = None
) -> TrialResult:
    alpha = float(config.alphas[0] if alpha is None else alpha)
    seed = mix_seed(config.seed, trial_index)
    log.info("trial %d (algo=%s, alpha=%g) seed=%d", trial_index, config.algo, alpha, seed)
    started = time.perf_counter()
    try:
        family = build_family(config.family)
        rng = make_rng(seed)
        inst = _build_instance(config, family, rng)
        gaps = true_gaps(inst)
        if config.checkpoints == "pow2":
            marks = checkpoint_schedule(config.n)
        else:
            marks = [config.n]

        if config.trace_dir:
            path = _trace_path(config, alpha, trial_index)
            with TraceWriter(path, config.algo, alpha, trial_index) as writer:
                run = _play(config, inst, alpha, rng, marks, writer)
        else:
            run = _play(config, inst, alpha, rng, marks, None)

        tracked = np.asarray(run.tracked, dtype=int)
        estimable = np.asarray(run.estimable, dtype=int)
        true_super = gaps.super_gap[np.ix_(tracked, tracked)]
        true_base = gaps.base_gap[np.ix_(estimable, estimable)]

        checkpoints = []
        for t, rounds, est_super, est_base in run.snapshots:
            cp = make_checkpoint(
                t,
                regret(run.chosen[:rounds], gaps),
                est_super,
                est_base,
                true_super,
                true_base,
            )
            log.debug("trial %d t=%d %s", trial_index, t, cp)
            checkpoints.append(cp)
        _, _, final_super, final_base = run.snapshots[-1]
    except (CombBanditError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        raise TrialError(
            f"trial {trial_index} (alpha={alpha:g}) failed: {e}",
            trial_index=trial_index,
            alpha=alpha,
        ) from e

    wall = time.perf_counter() - started
    log.info("trial %d (alpha=%g) done in %.2fs", trial_index, alpha, wall)
    return TrialResult(
        algo=config.algo,
        alpha=alpha,
        trial=trial_index,
        seed=seed,
        mu=inst.mu,
        checkpoints=checkpoints,
        est_super=final_super,
        est_base=final_base,
        true_super=true_super,
        true_base=true_base,
        tracked_arms=[family.arms[i] for i in tracked],
        estimable=[int(e) for e in estimable],
        warnings=list(run.warnings),
        wall_time=wall,
    )


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------
def _work_items(config: ExperimentConfig) -> List[Tuple[float, int]]:
    return [(float(a), i) for a in config.alphas for i in range(config.trials)]


def _fail(err: TrialError, done: Dict[Tuple[float, int], TrialResult]) -> TrialError:
    completed = sorted(done)
    failed = TrialError(str(err), err.trial_index, err.alpha, completed)
    failed.partial_results = [done[k] for k in completed]
    return failed


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """
    Runs every (α, trial) pair and aggregates per α and checkpoint. On the
    first failure the remaining work is cancelled and a TrialError carrying
    the finished (α, trial) pairs is raised.
    """
    config.validate()
    items = _work_items(config)
    done: Dict[Tuple[float, int], TrialResult] = {}
    started = time.perf_counter()

    if config.workers == 1:
        for alpha, i in items:
            try:
                done[(alpha, i)] = run_trial(config, i, alpha)
            except TrialError as e:
                raise _fail(e, done) from e
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {key: pool.submit(run_trial, config, key[1], key[0]) for key in items}
            for key, fut in futures.items():
                try:
                    done[key] = fut.result()
                except TrialError as e:
                    for other in futures.values():
                        other.cancel()
                    raise _fail(e, done) from e

    trials = [done[key] for key in sorted(done)]
    summary = summarize(trials)
    log.info(
        "%s: %d trials x %d alphas in %.1fs",
        config.algo,
        config.trials,
        len(config.alphas),
        time.perf_counter() - started,
    )
    return ExperimentResult(config=config, trials=trials, summary=summary)


def _agg_mean(values: pd.Series) -> float:
    return aggregate(values.tolist())[0]


def _agg_se(values: pd.Series) -> float:
    se = aggregate(values.tolist())[1]
    return float("nan") if se is None else se


def summarize(trials: Sequence[TrialResult]) -> pd.DataFrame:
    """
    Per (algo, α, t): mean and standard error of every metric, summed in
    trial-index order. ``pareto_of_means`` is mean(max_err_M)·√mean(cum_regret).
    """
    ordered = sorted(trials, key=lambda tr: (tr.alpha, tr.trial))
    frame = pd.DataFrame([row for tr in ordered for row in tr.rows()], columns=CSV_COLUMNS)
    if frame.empty:
        return pd.DataFrame()
    grouped = frame.groupby(["algo", "alpha", "t"], sort=True)
    summary = grouped[METRICS].agg([_agg_mean, _agg_se])
    summary.columns = [
        f"{metric}_{'mean' if fn == '_agg_mean' else 'se'}" for metric, fn in summary.columns
    ]
    summary.insert(0, "trials", grouped.size())
    summary = summary.reset_index()
    summary["pareto_of_means"] = summary["max_err_M_mean"] * np.sqrt(summary["cum_regret_mean"])
    return summary


def final_summary(result: ExperimentResult) -> pd.DataFrame:
    """Summary rows at the horizon only."""
    s = result.summary
    return s[s["t"] == result.config.n].reset_index(drop=True)


def compare_feedback(config: ExperimentConfig) -> pd.DataFrame:
    """
    Full-bandit vs semi-bandit feedback at matched family, n, α grid and
    seeds: one row per α with final regret, max errors and Pareto products.
    """
    results = {algo: run_experiment(replace(config, algo=algo)) for algo in ALGOS}
    cols = ["alpha", "cum_regret_mean", "max_err_M_mean", "max_err_mu_mean", "pareto_of_means"]
    kl = final_summary(results["kl"])[cols]
    ucb = final_summary(results["ucb"])[cols]
    table = kl.merge(ucb, on="alpha", suffixes=("_kl", "_ucb"))
    table["regret_ratio"] = table["cum_regret_mean_kl"] / table["cum_regret_mean_ucb"]
    return table


def inspect_family(family: SuperArmFamily) -> Dict[str, Any]:
    """d, |𝓜|, ρ_min, λ_min and both estimable sets (1-indexed)."""
    constants = spectral_constants(family)
    return {
        "d": family.d,
        "n_arms": len(family),
        "uniform_size": family.uniform_size,
        "max_size": family.max_size,
        "rho_min": constants.rho_min,
        "lambda_min": constants.lambda_min,
        "estimable_kl": [e + 1 for e in estimable_base_arms(family)],
        "estimable_ucb": [int(e) + 1 for e in np.flatnonzero(family.covered())],
    }


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------
def _clean(obj: Any) -> Any:
    """NaN/inf -> None, numpy scalars -> Python."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def _ensure_dir(path: str) -> None:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)


def write_results(result: ExperimentResult, path: str, fmt: str = "csv") -> None:
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got {fmt!r}")
    _ensure_dir(path)
    if fmt == "csv":
        result.frame().to_csv(path, index=False)
        return
    payload = {
        "config": result.config.to_dict(),
        "metadata": {"seed_mix": SEED_MIX_ID, "version": VERSION},
        "trials": [tr.to_dict() for tr in result.trials],
        "summary": result.summary.to_dict(orient="records"),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_clean(payload), f, indent=2, allow_nan=False)


def write_summary(result: ExperimentResult, path: str) -> None:
    _ensure_dir(path)
    result.summary.to_csv(path, index=False)


def write_partial_manifest(path: str, config: ExperimentConfig, err: TrialError) -> str:
    """Writes ``<path>.partial.json`` with the finished trials and the failure."""
    manifest = path + ".partial.json"
    _ensure_dir(manifest)
    payload = {
        "config": config.to_dict(),
        "metadata": {"seed_mix": SEED_MIX_ID, "version": VERSION},
        "failed": {"trial": err.trial_index, "alpha": err.alpha, "error": str(err)},
        "completed": [{"alpha": a, "trial": i} for a, i in err.completed],
        "trials": [tr.to_dict() for tr in getattr(err, "partial_results", [])],
    }
    with open(manifest, "w", encoding="utf-8") as f:
        json.dump(_clean(payload), f, indent=2, allow_nan=False)
    return manifest
