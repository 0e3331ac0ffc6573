"""Benchmark orchestration: seeded experiment runs, evaluation metrics,
bootstrap confidence intervals, the motion-split generalization ablation
and byte-stable CSV export.

Every artifact is stamped with the hash of the fully resolved run
description, and every emitted number is a pure function of that hash
plus the seeds, so reports can be regenerated and diffed bitwise.
"""

from __future__ import annotations

import hashlib
import io
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .env import CollabEnv, EnvConfig
from .errors import ConfigurationError
from .expert import expert_for_task, sample_dataset, evaluate_expert
from .human import generate_synthetic_clip
from .imitation import ImitationConfig, ImitationWrapper
from .learn import CEMConfig, PolicyParams, rollout, train_cem

# evaluation episode seeds live above the 32-bit range that training
# episode seeds are drawn from, so the two sets can never collide
EVAL_SEED_BASE = 2 ** 32


def normalized_return(r: float, r_min: float, r_expert_mean: float) -> float:
    """Linear map sending the reward floor to 0 and the expert mean to 1."""
    if r_expert_mean <= r_min:
        raise ConfigurationError("expert mean return must exceed the floor")
    return (r - r_min) / (r_expert_mean - r_min)


def bootstrap_ci(samples, n_resamples: int = 10_000, level: float = 0.95,
                 seed: int = 0) -> tuple:
    """Percentile bootstrap interval for the mean; deterministic per seed."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise ConfigurationError("bootstrap needs at least 2 samples")
    if not 0.0 < level < 1.0:
        raise ConfigurationError("level must be in (0, 1)")
    rng = np.random.default_rng([seed, x.size])
    idx = rng.integers(x.size, size=(int(n_resamples), x.size))
    means = x[idx].mean(axis=1)
    a = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [a, 100.0 - a])
    return float(lo), float(hi)


def min_return(env_config: EnvConfig) -> float:
    """Reward floor of one episode; the normalization anchor."""
    task = env_config.task
    if task == "reach":
        # distance can never exceed the goal's norm plus the arm's reach
        lo, hi = np.array([[0.35, -0.35, 0.15], [0.60, 0.35, 0.45]])
        corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                            for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        d_max = float(np.linalg.norm(corners, axis=1).max()) + env_config.model.max_reach()
        return -env_config.k_max * d_max
    # the other tasks pay non-negative rewards only
    return 0.0


# -- run descriptions ------------------------------------------------------------


@dataclass
class BenchmarkSpec:
    """Fully resolved description of one training experiment."""

    env: EnvConfig
    method: str = "none"                  # none | rsi | sir | air
    seeds: tuple = (0, 1, 2)
    cem: CEMConfig = field(default_factory=CEMConfig)
    eval_every: int = 10                  # generations between checkpoints
    eval_episodes: int = 100
    imitation: ImitationConfig = None     # defaults per method when None
    dataset_episodes: int = 10            # recorded when the method needs one
    dataset_seed: int = 9000
    r_expert_mean: float = None           # measured when None
    name: str = ""
    tree_hash: str = ""                   # resolved config-file digest, if any

    def __post_init__(self):
        if self.method not in ("none", "rsi", "sir", "air"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if not self.seeds:
            raise ConfigurationError("at least one seed required")
        if not self.name:
            self.name = f"{self.env.task}-{self.method}"

    def config_hash(self) -> str:
        if self.tree_hash:
            return self.tree_hash
        h = hashlib.sha256()
        h.update(self.env.fingerprint().encode())
        im = self.imitation
        parts = (self.method, tuple(self.seeds), self.eval_every,
                 self.eval_episodes, self.dataset_episodes, self.dataset_seed,
                 self.r_expert_mean,
                 None if im is None else (im.mode, im.mix_weight, im.dist_scale,
                                          im.rsi_with_sir),
                 tuple(sorted(vars(self.cem).items())))
        h.update(repr(parts).encode())
        return h.hexdigest()[:16]


@dataclass
class EvalReport:
    """Per-seed training record: one row per checkpoint plus safety totals."""

    name: str
    task: str
    method: str
    seed: int
    config_hash: str
    rows: list = field(default_factory=list)
    curve: list = field(default_factory=list)
    safety: dict = field(default_factory=dict)
    runtime_s: float = 0.0
    incomplete: bool = False


def _evaluate_params(env: CollabEnv, params: PolicyParams, episodes: int,
                     discount: float) -> dict:
    rets = np.zeros(episodes)
    succ = np.zeros(episodes, dtype=bool)
    for i in range(episodes):
        rets[i], succ[i], _ = rollout(env, params, EVAL_SEED_BASE + i, discount)
    return {"returns": rets, "success": succ}


def run_experiment(spec: BenchmarkSpec) -> list:
    """Train every seed, evaluating checkpoints on held-out episode seeds.

    Returns one EvalReport per seed.  Safety totals come from the env's
    own counters; a critical contact anywhere fails the whole run."""
    chash = spec.config_hash()
    r_expert = spec.r_expert_mean
    if r_expert is None:
        res = evaluate_expert(spec.env, expert_for_task(spec.env.task),
                              episodes=50, seed=7000)
        r_expert = float(res["mean_return"])
    r_floor = min_return(spec.env)

    dataset = None
    if spec.method in ("rsi", "sir"):
        dataset = sample_dataset(spec.env, expert_for_task(spec.env.task),
                                 m=spec.dataset_episodes, seed=spec.dataset_seed)

    reports = []
    for seed in spec.seeds:
        t0 = time.time()
        train_env = CollabEnv(spec.env)
        eval_env = CollabEnv(spec.env)

        def factory():
            if spec.method == "none":
                return train_env
            imc = spec.imitation or ImitationConfig(mode=spec.method)
            pol = expert_for_task(spec.env.task) if spec.method == "air" else None
            return ImitationWrapper(train_env, imc, dataset=dataset,
                                    policy=pol, seed=seed)

        report = EvalReport(name=spec.name, task=spec.env.task,
                            method=spec.method, seed=seed, config_hash=chash)

        def checkpoint(gen, params, steps_used):
            ev = _evaluate_params(eval_env, params, spec.eval_episodes,
                                  spec.cem.discount)
            mean_ret = float(ev["returns"].mean())
            lo, hi = bootstrap_ci(ev["returns"], seed=seed)
            report.rows.append({
                "checkpoint": gen + 1,
                "env_steps": steps_used,
                "success_rate": float(ev["success"].mean()),
                "mean_return": mean_ret,
                "normalized_return": normalized_return(mean_ret, r_floor, r_expert),
                "ci_low": lo,
                "ci_high": hi,
                "cost_mean": -mean_ret,
            })

        def cadence_hook(gen, params, steps_used):
            if (gen + 1) % spec.eval_every == 0:
                checkpoint(gen, params, steps_used)

        params, curve = train_cem(factory, spec.cem, seed=seed,
                                  dataset=dataset, checkpoint_hook=cadence_hook)
        if not report.rows or report.rows[-1]["checkpoint"] != curve[-1]["generation"] + 1:
            checkpoint(curve[-1]["generation"], params, curve[-1]["env_steps"])

        counters = dict(train_env.counters)
        for k, v in eval_env.counters.items():
            counters[k] = counters.get(k, 0) + v
        if counters.get("crit", 0) != 0:
            raise ConfigurationError("critical contact during a benchmark run")
        report.safety = counters
        report.runtime_s = time.time() - t0
        budget = spec.cem.step_budget
        report.incomplete = bool(budget) and curve[-1]["env_steps"] >= budget
        report.curve = curve
        reports.append(report)
    return reports


def aggregate_reports(reports: list) -> list:
    """Cross-seed rows per checkpoint with bootstrap CIs over seed means."""
    if not reports:
        return []
    out = []
    n_rows = min(len(r.rows) for r in reports)
    for i in range(n_rows):
        rets = [r.rows[i]["mean_return"] for r in reports]
        succ = [r.rows[i]["success_rate"] for r in reports]
        norm = [r.rows[i]["normalized_return"] for r in reports]
        if len(rets) >= 2:
            lo, hi = bootstrap_ci(rets, seed=i)
        else:
            lo = hi = rets[0]
        out.append({
            "checkpoint": reports[0].rows[i]["checkpoint"],
            "env_steps_max": max(r.rows[i]["env_steps"] for r in reports),
            "seeds": len(reports),
            "success_rate_mean": float(np.mean(succ)),
            "mean_return": float(np.mean(rets)),
            "normalized_return_mean": float(np.mean(norm)),
            "ci_low": lo,
            "ci_high": hi,
            "cost_mean": -float(np.mean(rets)),
        })
    return out


# -- CSV export ------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows: list, columns=None) -> str:
    """Deterministic CSV text: fixed column order, repr floats, LF endings."""
    if not rows:
        return "\n"
    cols = list(columns) if columns else list(rows[0].keys())
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(row[c]) for c in cols) + "\n")
    return buf.getvalue()


def write_report_csv(report: EvalReport, path):
    text = f"# config={report.config_hash} name={report.name} seed={report.seed}\n"
    text += rows_to_csv(report.rows)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def write_aggregate_csv(rows: list, config_hash: str, name: str, path):
    text = f"# config={config_hash} name={name}\n" + rows_to_csv(rows)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


# -- motion-split ablation ---------------------------------------------------------


def make_clip_library(env_config: EnvConfig, n_clips: int = 9) -> tuple:
    """Deterministic family of synthetic clips for one task's template."""
    from .tasks import make_task
    task = make_task(env_config.task)
    return tuple(generate_synthetic_clip(task.clip_template, task.clip_params(),
                                         rng_seed=i) for i in range(n_clips))


def fold_partition(n_clips: int, k_folds: int, n_test: int = 2) -> list:
    """Rotating test windows: fold f holds out clips [f*n_test .. ) mod n."""
    if n_clips < k_folds:
        raise ConfigurationError("need at least as many clips as folds")
    if n_test >= n_clips:
        raise ConfigurationError("test split would swallow every clip")
    folds = []
    for f in range(k_folds):
        test = tuple((f * n_test + j) % n_clips for j in range(n_test))
        train = tuple(i for i in range(n_clips) if i not in test)
        folds.append((train, test))
    return folds


def motion_split_ablation(env_config: EnvConfig, clips: tuple, k_folds: int,
                          seeds: tuple, cem: CEMConfig,
                          eval_episodes: int = 20, null: bool = False) -> list:
    """Train on a clip subset, evaluate the same policy on seen and unseen
    clips; paired means with bootstrap CIs per fold.

    null=True evaluates both arms on the full clip set (train == test), the
    sanity case whose two intervals must overlap."""
    if len(clips) < k_folds:
        raise ConfigurationError("fewer clips than folds")
    folds = fold_partition(len(clips), k_folds)
    out = []
    for f, (train_idx, test_idx) in enumerate(folds):
        if null:
            train_idx = test_idx = tuple(range(len(clips)))
        else:
            assert not set(train_idx) & set(test_idx)
        train_clips = tuple(clips[i] for i in train_idx)
        test_clips = tuple(clips[i] for i in test_idx)
        seen_env = CollabEnv(replace(env_config, clips=train_clips))
        unseen_env = CollabEnv(replace(env_config, clips=test_clips))
        seen_rets, unseen_rets = [], []
        for seed in seeds:
            def factory():
                return CollabEnv(replace(env_config, clips=train_clips))
            params, _ = train_cem(factory, cem, seed=seed)
            for i in range(eval_episodes):
                es = EVAL_SEED_BASE + i
                seen_rets.append(rollout(seen_env, params, es, cem.discount)[0])
                unseen_rets.append(rollout(unseen_env, params, es, cem.discount)[0])
        s_lo, s_hi = bootstrap_ci(seen_rets, seed=f)
        u_lo, u_hi = bootstrap_ci(unseen_rets, seed=f)
        out.append({
            "fold": f,
            "n_train_clips": len(train_idx),
            "n_test_clips": len(test_idx),
            "seen_mean": float(np.mean(seen_rets)),
            "seen_ci_low": s_lo,
            "seen_ci_high": s_hi,
            "unseen_mean": float(np.mean(unseen_rets)),
            "unseen_ci_low": u_lo,
            "unseen_ci_high": u_hi,
            "unseen_within_seen_ci": bool(s_lo <= float(np.mean(unseen_rets)) <= s_hi),
        })
    return out
