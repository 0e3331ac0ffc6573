"""Expert-knowledge injection wrappers: RSI, SIR and AIR.

Three ways to leak expert knowledge into training without cloning:
start episodes from recorded expert states (RSI), mix a state-closeness
term into the reward (SIR), or mix an action-closeness term computed
against a freshly sampled expert action that is never executed (AIR).
The wrapper keeps the environment's step API; both reward components
are reported per step so runs stay auditable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import CollabEnv
from .errors import ConfigurationError, LifecycleError
from .expert import Dataset, ExpertPolicy, OUNoise, noisy_expert_action

MODES = ("none", "rsi", "sir", "air")


def closeness(x, scale: float) -> float:
    """Kernel 2**(-scale * ||x||_2): 1 at zero, halves every 1/scale of norm."""
    if scale <= 0:
        raise ConfigurationError("closeness scale must be > 0")
    return float(2.0 ** (-scale * np.linalg.norm(np.asarray(x, dtype=np.float64))))


@dataclass
class ImitationConfig:
    mode: str = "none"
    mix_weight: float = 0.1       # imitation share of the reward, kept small
    dist_scale: float = 5.0       # closeness kernel decay rate
    rsi_with_sir: bool = True     # sir episodes also start from dataset states

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown imitation mode {self.mode!r}")
        # the env reward must stay dominant
        if not 0.0 <= self.mix_weight <= 0.5:
            raise ConfigurationError("mix_weight must be in [0, 0.5]")
        if self.dist_scale <= 0:
            raise ConfigurationError("dist_scale must be > 0")


class ReferenceCursor:
    """Pointer into one recorded trajectory, advancing lockstep with the
    wrapped episode and saturating at the final record."""

    def __init__(self, recording, index: int):
        if not 0 <= index < recording.n_steps:
            raise ConfigurationError("cursor index outside the recording")
        self.recording = recording
        self.index = index

    def advance(self):
        self.index = min(self.index + 1, self.recording.n_steps - 1)

    @property
    def ref_obs(self) -> np.ndarray:
        return self.recording.obs[self.index]


def check_dataset(dataset: Dataset, env: CollabEnv):
    if dataset.task != env.task.name:
        raise ConfigurationError(
            f"dataset task {dataset.task!r} != env task {env.task.name!r}")
    if dataset.config_hash != env.config.fingerprint():
        raise ConfigurationError(
            "dataset was recorded under a different environment config")


def rsi_reset(dataset: Dataset, env: CollabEnv, rng) -> tuple:
    """Reset the env to a uniformly random record of the dataset.

    Uniform over records, not trajectories, so long trajectories weigh
    proportionally more.  Returns (obs, info, cursor)."""
    check_dataset(dataset, env)
    rng = np.random.default_rng(rng)
    recs = [ep for ep in dataset.episodes if ep.n_steps > 0]
    if not recs:
        raise ConfigurationError("dataset has no records to reset from")
    ends = np.cumsum([ep.n_steps for ep in recs])
    flat = int(rng.integers(ends[-1]))
    i = int(np.searchsorted(ends, flat, side="right"))
    k = flat - (int(ends[i - 1]) if i else 0)
    rec = recs[i]
    if not rec.snapshots:
        raise ConfigurationError("dataset records carry no snapshots")
    obs, info = env.reset(forced_state=rec.snapshots[k])
    if rec.obs is not None and not np.array_equal(obs, rec.obs[k]):
        raise ConfigurationError(
            "restored state does not reproduce the recorded observation")
    return obs, info, ReferenceCursor(rec, k)


class ImitationWrapper:
    """CollabEnv wrapper implementing one injection mode.

    none: passthrough.  rsi: expert-state resets only.  sir: reward
    mixed with state closeness to the lockstep reference record (plus
    RSI resets unless disabled).  air: reward mixed with closeness to a
    noisy expert action sampled exactly once per step and discarded.
    """

    def __init__(self, env: CollabEnv, config: ImitationConfig,
                 dataset: Dataset = None, policy: ExpertPolicy = None,
                 noise: OUNoise = None, seed: int = 0):
        self.env = env
        self.config = config
        self.dataset = dataset
        self.policy = policy
        self.expert_queries = 0
        self._cursor = None
        self._pending_obs = None
        self._rng = np.random.default_rng(seed)
        mode = config.mode
        if mode in ("rsi", "sir") and dataset is None:
            raise ConfigurationError(f"{mode} needs a dataset")
        if mode == "air" and policy is None:
            raise ConfigurationError("air needs an expert policy")
        if dataset is not None:
            check_dataset(dataset, env)
        # the air noise stream belongs to the wrapper, not the env
        self.noise = (noise or OUNoise(dim=env.action_dim, seed=seed + 1)) \
            if mode == "air" else None

    def __getattr__(self, name):
        # everything not overridden falls through to the wrapped env
        return getattr(self.env, name)

    def reset(self, seed: int = None):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        mode = self.config.mode
        if mode == "rsi" or (mode == "sir" and self.config.rsi_with_sir):
            obs, info, self._cursor = rsi_reset(self.dataset, self.env, self._rng)
        else:
            env_seed = seed if seed is not None else int(self._rng.integers(2 ** 31))
            obs, info = self.env.reset(seed=env_seed)
            self._cursor = None
            if mode == "sir":
                # no reference start state: track a random trajectory from its head
                rec = self.dataset.episodes[int(self._rng.integers(len(self.dataset.episodes)))]
                self._cursor = ReferenceCursor(rec, 0)
        if mode == "air":
            self.policy.reset()
            self.noise.reset(int(self._rng.integers(2 ** 31)))
        self._pending_obs = obs
        return obs, info

    def step(self, action):
        if self._pending_obs is None:
            raise LifecycleError("step before reset or after episode end")
        cfg = self.config
        imit = None
        if cfg.mode == "air":
            # sampled at the pre-step state, counted, never executed
            a_ref = noisy_expert_action(self.policy, self.env, self.noise)
            self.expert_queries += 1
            if cfg.mix_weight != 0.0:
                a = np.clip(np.asarray(action, dtype=np.float64),
                            self.env.action_low, self.env.action_high)
                imit = closeness(a - a_ref, cfg.dist_scale)
        elif cfg.mode == "sir" and cfg.mix_weight != 0.0:
            mask = self.env.obs_continuous_mask
            imit = closeness((self._pending_obs - self._cursor.ref_obs)[mask],
                             cfg.dist_scale)
        obs, r, term, trunc, info = self.env.step(action)
        if self._cursor is not None:
            self._cursor.advance()
        self._pending_obs = None if (term or trunc) else obs
        info["reward_env"] = r
        if imit is not None:
            r = (1.0 - cfg.mix_weight) * r + cfg.mix_weight * imit
            info["reward_imitation"] = imit
        return obs, r, term, trunc, info
