"""Cross-entropy-method baseline over a tiny radial-feature policy.

Proof that the environments are learnable end to end without pulling in
a deep-RL stack: a diagonal-Gaussian CEM searches the weights of a
linear-plus-radial-features policy squashed into the action box.  The
whole thing is deterministic under a seed, and an Agent interface is
exposed so external algorithms can drive the same rollout harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import CollabEnv
from .errors import ConfigurationError

MAX_PARAMS = 2000
N_CENTERS = 32


@dataclass
class PolicyParams:
    """Feature map constants plus the trained weight matrix.

    Features: scaled observation, Gaussian bumps around observed states,
    and a bias; action = box-squashed linear readout.  Only `weights`
    is trained; the rest is fitted once from state samples.
    """

    obs_mean: np.ndarray
    obs_scale: np.ndarray
    centers: np.ndarray           # (n_centers, obs_dim), in scaled space
    bandwidth: float
    action_low: np.ndarray
    action_high: np.ndarray
    weights: np.ndarray           # (action_dim, n_features)

    @property
    def obs_dim(self) -> int:
        return self.obs_mean.size

    @property
    def n_features(self) -> int:
        return self.obs_dim + self.centers.shape[0] + 1

    @property
    def n_params(self) -> int:
        return self.weights.size

    def features(self, obs: np.ndarray) -> np.ndarray:
        x = (obs - self.obs_mean) / self.obs_scale
        d2 = np.square(self.centers - x).sum(axis=1)
        rbf = np.exp(-0.5 * d2 / self.bandwidth ** 2)
        return np.concatenate([x, rbf, [1.0]])

    def act(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64).reshape(-1)
        if obs.size != self.obs_dim:
            raise ConfigurationError(
                f"observation has {obs.size} entries, policy expects {self.obs_dim}")
        z = self.weights @ self.features(obs)
        mid = 0.5 * (self.action_low + self.action_high)
        half = 0.5 * (self.action_high - self.action_low)
        return mid + half * np.tanh(z)

    def with_flat(self, theta: np.ndarray) -> "PolicyParams":
        w = np.asarray(theta, dtype=np.float64).reshape(self.weights.shape)
        return PolicyParams(self.obs_mean, self.obs_scale, self.centers,
                            self.bandwidth, self.action_low, self.action_high, w)


def _state_samples(env: CollabEnv, rng, want: int = 256) -> np.ndarray:
    """Observations from uniformly random actions; feature-fit material."""
    out = []
    while len(out) < want:
        obs, _ = env.reset(seed=int(rng.integers(2 ** 31)))
        out.append(obs)
        for _ in range(64):
            a = rng.uniform(env.action_low, env.action_high)
            obs, _, term, trunc, _ = env.step(a)
            out.append(obs)
            if term or trunc or len(out) >= want:
                break
    return np.asarray(out)


def make_policy_template(env: CollabEnv, dataset=None, seed: int = 0,
                         n_centers: int = N_CENTERS) -> PolicyParams:
    """Zero-weight policy whose feature map is fitted to observed states.

    Centers come from recorded expert observations when a dataset is
    given, else from random rollouts of the env itself."""
    rng = np.random.default_rng([seed, 101])
    if dataset is not None:
        samples = np.concatenate([ep.obs for ep in dataset.episodes])
    else:
        samples = _state_samples(env, rng)
    if samples.shape[1] != env.observation_dim:
        raise ConfigurationError("state samples do not match the env's observation size")
    mean = samples.mean(axis=0)
    scale = samples.std(axis=0)
    scale[scale < 1e-8] = 1.0
    scaled = (samples - mean) / scale
    idx = rng.choice(len(scaled), size=min(n_centers, len(scaled)), replace=False)
    centers = scaled[idx]
    if len(centers) > 1:
        d = np.sqrt(np.square(centers[:, None] - centers[None]).sum(axis=2))
        bw = float(np.median(d[d > 0])) if (d > 0).any() else 1.0
    else:
        bw = 1.0
    a_dim = env.action_dim
    n_feat = env.observation_dim + len(centers) + 1
    if a_dim * n_feat > MAX_PARAMS:
        raise ConfigurationError(
            f"policy would need {a_dim * n_feat} parameters (cap {MAX_PARAMS})")
    w = np.zeros((a_dim, n_feat))
    return PolicyParams(mean, scale, centers, bw, env.action_low.copy(),
                        env.action_high.copy(), w)


def rollout(env, params: PolicyParams, seed: int,
            discount: float = 1.0) -> tuple:
    """One seeded episode under the policy: (return, success, steps)."""
    obs, _ = env.reset(seed=seed)
    total, g, steps = 0.0, 1.0, 0
    while True:
        obs, r, term, trunc, _ = env.step(params.act(obs))
        total += g * r
        g *= discount
        steps += 1
        if term or trunc:
            return total, env.episode_success(), steps


# -- pluggable agent interface -------------------------------------------------

class Agent:
    """Minimal episodic control interface for external algorithms."""

    def begin_episode(self, obs):
        pass

    def act(self, obs) -> np.ndarray:
        raise NotImplementedError

    def observe(self, obs, reward, terminated, truncated):
        pass


class PolicyAgent(Agent):
    def __init__(self, params: PolicyParams):
        self.params = params

    def act(self, obs):
        return self.params.act(obs)


def run_agent(env, agent: Agent, episodes: int, seed: int = 0,
              discount: float = 1.0) -> dict:
    returns = np.zeros(episodes)
    succ = np.zeros(episodes, dtype=bool)
    steps = np.zeros(episodes, dtype=np.int64)
    for i in range(episodes):
        obs, _ = env.reset(seed=seed + i)
        agent.begin_episode(obs)
        g = 1.0
        while True:
            obs, r, term, trunc, _ = env.step(agent.act(obs))
            agent.observe(obs, r, term, trunc)
            returns[i] += g * r
            g *= discount
            steps[i] += 1
            if term or trunc:
                break
        succ[i] = env.episode_success()
    return {"returns": returns, "success": succ, "steps": steps,
            "success_rate": float(succ.mean()), "mean_return": float(returns.mean())}


# -- cross-entropy method ------------------------------------------------------

@dataclass
class CEMConfig:
    population: int = 64
    elite_frac: float = 0.125
    generations: int = 30
    episodes_per: int = 3         # seeded episodes averaged per candidate
    eval_episodes: int = 12       # refit-mean evaluation per generation
    init_std: float = 0.5
    discount: float = 1.0
    step_budget: int = None       # stop once this many env steps were consumed
    stop_success: float = None    # stop once the refit mean evaluates this well

    def __post_init__(self):
        if self.population < 2:
            raise ConfigurationError("population must be >= 2")
        if not 0.0 < self.elite_frac < 1.0:
            raise ConfigurationError("elite_frac must be in (0, 1)")
        if self.episodes_per < 1:
            raise ConfigurationError("episodes_per must be >= 1")
        if self.generations < 1:
            raise ConfigurationError("generations must be >= 1")
        if not 0.0 <= self.discount <= 1.0:
            raise ConfigurationError("discount must be in [0, 1]")


def train_cem(env_factory, config: CEMConfig, seed: int = 0,
              dataset=None, checkpoint_hook=None) -> tuple:
    """Diagonal-Gaussian CEM over the policy weights.

    Returns (best PolicyParams, learning curve).  The curve holds one
    dict per generation; `best` is the refit mean of the generation with
    the highest evaluation return.  Fully deterministic under `seed`.
    checkpoint_hook(gen, refit_mean_params, env_steps) fires per
    generation so callers can evaluate on their own envs and seeds."""
    env = env_factory()
    template = make_policy_template(env, dataset=dataset, seed=seed)
    n = template.n_params
    mean = np.zeros(n)
    std = np.full(n, float(config.init_std))
    n_elite = math.ceil(config.elite_frac * config.population)
    rng = np.random.default_rng([seed, 7])
    curve = []
    steps_used = 0
    best = (None, -np.inf)
    for gen in range(config.generations):
        ep_seeds = [int(s) for s in
                    np.random.SeedSequence([seed, gen]).generate_state(config.episodes_per)]
        thetas = mean + std * rng.standard_normal((config.population, n))
        scores = np.zeros(config.population)
        succ_all = []
        for i, theta in enumerate(thetas):
            cand = template.with_flat(theta)
            rets = []
            for es in ep_seeds:
                ret, ok, k = rollout(env, cand, es, config.discount)
                rets.append(ret)
                succ_all.append(ok)
                steps_used += k
            scores[i] = np.mean(rets)
        elite_idx = np.argsort(scores)[::-1][:n_elite]
        elites = thetas[elite_idx]
        mean = elites.mean(axis=0)
        std = elites.std(axis=0)
        # evaluate the refit mean on its own seeds
        mp = template.with_flat(mean)
        eseeds = [int(s) for s in
                  np.random.SeedSequence([seed, gen, 3]).generate_state(config.eval_episodes)]
        erets, esucc = [], []
        for es in eseeds:
            ret, ok, k = rollout(env, mp, es, config.discount)
            erets.append(ret)
            esucc.append(ok)
            steps_used += k
        row = {"generation": gen,
               "pop_return_mean": float(scores.mean()),
               "elite_return_mean": float(scores[elite_idx].mean()),
               "pop_success_rate": float(np.mean(succ_all)),
               "eval_return": float(np.mean(erets)),
               "eval_success_rate": float(np.mean(esucc)),
               "env_steps": steps_used}
        curve.append(row)
        if row["eval_return"] > best[1]:
            best = (mp, row["eval_return"])
        if checkpoint_hook is not None:
            checkpoint_hook(gen, mp, steps_used)
        if config.stop_success is not None and row["eval_success_rate"] >= config.stop_success:
            break
        if config.step_budget is not None and steps_used >= config.step_budget:
            break
    return best[0], curve
