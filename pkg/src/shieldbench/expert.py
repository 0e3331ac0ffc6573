"""Scripted task experts, exploration noise and dataset collection.

Each expert is a small phase machine driving proportional position
control toward hand-written targets.  The handover expert additionally
previews every candidate displacement through the public shield API
before emitting it: near the human only slow motion verifies, and an
unverified command would either freeze mid-plan or, worse, trip the
feasibility filter into resampling a random action while the gripper
holds the payload.

The noisy expert perturbs the deterministic action with discretized
Ornstein-Uhlenbeck noise and is the data-generating policy for the
imitation datasets; datasets verify every stored snapshot by replay
before they are finalized.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _core
from .env import CollabEnv, EnvConfig
from .errors import ConfigurationError, UnreachableTargetError
from .kinematics import COLLISION_MARGIN, batch_link_capsules, inverse_kinematics
from .recording import EpisodeRecording, load_recording, save_recording
from .shield import build_shielded, human_reach_set, verify
from .trajectory import ACTION_PERIOD, DT_SIM, plan_trajectory

# candidate ladder for the shield-previewed step chooser: fractions of the
# remaining gap, then small absolute creeps that stay verifiable right next
# to the human
_STEP_SCALES = (1.0, 0.5, 0.25, 0.12, 0.06)
_CREEPS = (0.006, 0.003)


def careful_step(env: CollabEnv, gap, grip: float):
    """Largest displacement toward `gap` that the shield will accept.

    Candidates are previewed exactly as the environment will execute
    them (same IK seed, same plan, same static check), so an emitted
    step is never resampled; the shield preview covers the first inner
    step plus its braking tail.  Returns (action, held) where held
    means no candidate verified and the action is a hold.
    """
    cur = env.joint_state
    ee = env.task_state()["ee_pos"]
    model = env.model
    n = float(np.linalg.norm(gap))
    cands = []
    if n > 1e-4:
        cands = [np.clip(gap * s, -0.05, 0.05) for s in _STEP_SCALES]
        u = gap / n
        cands += [u * c for c in _CREEPS if n > c]
    for c in cands:
        try:
            q_t = inverse_kinematics(model, ee + c, cur.q)
        except UnreachableTargetError:
            continue
        plan = plan_trajectory(model, cur, q_t, ACTION_PERIOD)
        caps, _ = batch_link_capsules(model, plan.q)
        if int(_core.first_collision_sample(caps, model._self_pairs,
                                            env.obstacles_packed,
                                            COLLISION_MARGIN)) >= 0:
            continue
        sh = build_shielded(model, cur, plan_trajectory(model, cur, q_t, DT_SIM))
        reach = human_reach_set(env.human_state, env.skeleton,
                                env.shield.cfg, sh.horizon)
        if verify(model, sh, reach, env.shield.cfg,
                  env.shield.static_obstacles).safe:
            return np.concatenate([c, [grip]]), False
    return np.array([0.0, 0.0, 0.0, grip]), True


class ExpertPolicy:
    """Deterministic scripted policy: a phase machine over task state.

    Subclasses implement act(env) as a pure function of the environment
    state and the stored phase; actions are clamped to the action box
    by expert_action."""

    task = None
    k_p = 1.0

    def __init__(self):
        self.phase = 0

    def reset(self):
        self.phase = 0

    def act(self, env: CollabEnv) -> np.ndarray:
        raise NotImplementedError


class ReachExpert(ExpertPolicy):
    """Single phase: proportional pull straight toward the goal."""

    task = "reach"

    def act(self, env):
        st = env.task_state()
        d = self.k_p * (st["goal"] - st["ee_pos"])
        return np.concatenate([d, [0.0]])


class PickPlaceExpert(ExpertPolicy):
    """Phases: 0 approach (above the object, then down), 1 grasp,
    2 transport (carry high over the divider, then lower), 3 release.

    Transitions are monotone on nominal rollouts; a dropped payload
    (possible only under exploration noise) falls back to approach.
    """

    task = "pick_place"
    xy_tol = 0.02
    grasp_dist = 0.05
    above = 0.10
    carry_z = 0.28

    def act(self, env):
        st = env.task_state()
        ee = st["ee_pos"]
        goal = st["goal"]
        name = next(iter(st["objects"]))
        pos, att = st["objects"][name]

        if self.phase == 0:
            if att == "ee":
                self.phase = 2
            elif (np.linalg.norm(ee[:2] - pos[:2]) <= self.xy_tol
                  and np.linalg.norm(ee - pos) <= self.grasp_dist):
                self.phase = 1
        if self.phase == 1 and att == "ee":
            self.phase = 2
        if self.phase in (2, 3) and att is None and not st["sigma_target"]:
            self.phase = 0
        if (self.phase == 2
                and np.linalg.norm(ee[:2] - goal[:2]) <= self.xy_tol
                and ee[2] <= goal[2] + 0.05):
            self.phase = 3

        if self.phase == 0:
            if np.linalg.norm(ee[:2] - pos[:2]) > self.xy_tol:
                tgt = pos + [0.0, 0.0, self.above]
            else:
                tgt = pos + [0.0, 0.0, 0.01]
            return np.concatenate([self.k_p * (tgt - ee), [1.0]])
        if self.phase == 1:
            return np.array([0.0, 0.0, 0.0, -1.0])
        if self.phase == 2:
            if np.linalg.norm(ee[:2] - goal[:2]) > self.xy_tol:
                tgt = np.array([goal[0], goal[1], self.carry_z])
            else:
                tgt = goal + [0.0, 0.0, 0.03]
            return np.concatenate([self.k_p * (tgt - ee), [-1.0]])
        return np.array([0.0, 0.0, 0.0, 1.0])


class LiftingExpert(ExpertPolicy):
    """Single phase: hold the board level by tracking the height of the
    human-held far end at the robot's grip station."""

    task = "collaborative_lifting"
    grip_x = 0.27

    def act(self, env):
        st = env.task_state()
        tgt = np.array([self.grip_x, 0.0, st["board_far_end"][2]])
        return np.concatenate([self.k_p * (tgt - st["ee_pos"]), [-1.0]])


class HandoverExpert(ExpertPolicy):
    """Phases: 0 bring (staged transit, then creep to the presentation
    point), 1 offer (open and wait for the human to take the payload:
    the wait loop), 2 withdraw, 3 recover a dropped payload.

    All motion goes through careful_step.  Transit routes are relative
    to the receiving hand; when no progress is made for a window of
    decisions the route switches to an alternative staging, since a hand
    near the arm's reach boundary can wedge the first choice.  The
    presentation point comes from the task; release opens only once the
    payload is inside the transfer ball and parked, and the gripper
    stays open until the object reports human attachment.
    """

    task = "handover"
    release_ball = 0.092
    park_tol = 0.015
    settle_pos = 0.03
    settle_vel = 0.05
    stall_window = 45
    stall_min_progress = 0.008
    rest_point = (0.40, -0.10, 0.88)
    retreat_point = (0.36, -0.10, 0.70)

    def __init__(self):
        super().__init__()
        self._plan = None

    def reset(self):
        self.phase = 0
        self._plan = None

    def _routes(self, P, deep):
        # staging keeps the wrist above and to the open side of the hand;
        # the deep variants trade standoff for reach when the hand rests
        # near the edge of the workspace
        high = [np.array([0.38, P[1] - 0.10, min(P[2] + 0.035, 0.955)])]
        near = [np.array([0.45, P[1] - 0.12, min(P[2] + 0.02, 0.94)])]
        side = [np.array([max(P[0], 0.38), P[1] - 0.14, min(P[2] + 0.02, 0.96)])]
        if deep:
            return [near, high] if P[0] >= 0.47 else [high, near]
        return [side, high]

    def _ensure_plan(self, env):
        if self._plan is not None:
            return self._plan
        task = env.task
        hand_rest = env.receive_hand_pos()
        P = task.present_point(env)
        deep = (hand_rest + task.present_offset)[2] > task.present_z_cap
        routes = self._routes(P, deep)
        self._plan = {
            "P": P, "hand_rest": hand_rest, "routes": routes,
            "vi": 0, "wps": list(routes[0]), "leg": 0,
            "win_gap": None, "win_n": 0,
        }
        return self._plan

    def _stall_ladder(self, pl, gap_now):
        pl["win_n"] += 1
        if pl["win_gap"] is None:
            pl["win_gap"] = gap_now
            pl["win_n"] = 0
        elif pl["win_n"] >= self.stall_window:
            if pl["win_gap"] - gap_now < self.stall_min_progress:
                pl["vi"] = (pl["vi"] + 1) % len(pl["routes"])
                pl["wps"] = ([np.array(self.rest_point)]
                             + list(pl["routes"][pl["vi"]]))
                pl["leg"] = 0
            pl["win_gap"] = None

    def act(self, env):
        st = env.task_state()
        ee = st["ee_pos"]
        name = next(iter(st["objects"]))
        pos, att = st["objects"][name]
        pl = self._ensure_plan(env)
        P = pl["P"]

        if self.phase in (0, 1) and att is None:
            self.phase = 3
        elif self.phase == 3 and att == "ee":
            self.phase = 0
            pl["leg"] = 0
            pl["win_gap"] = None

        if self.phase == 0:
            hand = st["human"]["right_hand"]
            hvel = st["human_vel"]["right_hand"]
            settled = (np.linalg.norm(hand - pl["hand_rest"]) < self.settle_pos
                       and np.linalg.norm(hvel) < self.settle_vel)
            wps = pl["wps"]
            if pl["leg"] < len(wps) and np.linalg.norm(ee - wps[pl["leg"]]) < 0.04:
                pl["leg"] += 1
            if pl["leg"] >= len(wps):
                if (np.linalg.norm(pos - hand) < self.release_ball
                        and np.linalg.norm(P - ee) < self.park_tol):
                    self.phase = 1
                    return np.array([0.0, 0.0, 0.0, 1.0])
                if settled:
                    self._stall_ladder(pl, np.linalg.norm(P - ee))
                a, _ = careful_step(env, P - ee, -1.0)
                return a
            if pl["leg"] == len(wps) - 1 and not settled:
                return np.array([0.0, 0.0, 0.0, -1.0])
            if settled:
                self._stall_ladder(pl, np.linalg.norm(wps[pl["leg"]] - ee))
            a, _ = careful_step(env, wps[pl["leg"]] - ee, -1.0)
            return a
        if self.phase == 1:
            if att == "human":
                self.phase = 2
            return np.array([0.0, 0.0, 0.0, 1.0])
        if self.phase == 2:
            a, _ = careful_step(env, np.array(self.retreat_point) - ee, 1.0)
            return a
        # recover: move onto the dropped payload and close
        gap = pos - ee
        if np.linalg.norm(gap) < 0.04:
            return np.array([0.0, 0.0, 0.0, -1.0])
        a, _ = careful_step(env, gap, -1.0)
        return a


_EXPERTS = {
    cls.task: cls
    for cls in (ReachExpert, PickPlaceExpert, LiftingExpert, HandoverExpert)
}


def expert_for_task(task: str) -> ExpertPolicy:
    if task not in _EXPERTS:
        raise ConfigurationError(f"no expert for task {task!r}; known: {sorted(_EXPERTS)}")
    return _EXPERTS[task]()


def expert_action(policy: ExpertPolicy, env: CollabEnv) -> np.ndarray:
    """Deterministic expert action, clamped to the action box."""
    a = np.asarray(policy.act(env), dtype=np.float64)
    return np.clip(a, env.action_low, env.action_high)


@dataclass
class OUNoise:
    """Discretized Ornstein-Uhlenbeck process, one independent component
    per action channel.

    n_{k+1} = n_k + theta * (0 - n_k) * dt + sigma * sqrt(dt) * xi_k,
    an AR(1) with coefficient (1 - theta*dt).  Owns its rng so a seeded
    instance replays the same noise path.
    """

    dim: int
    theta: float = 4.0
    sigma: float = 0.08
    dt: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.theta * self.dt < 1.0:
            raise ConfigurationError("need 0 < theta*dt < 1 for mean reversion")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")
        self.reset(self.seed)

    def reset(self, seed=None):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.state = np.zeros(self.dim)

    def advance(self) -> np.ndarray:
        xi = self._rng.standard_normal(self.dim)
        self.state = (self.state
                      + self.theta * (0.0 - self.state) * self.dt
                      + self.sigma * np.sqrt(self.dt) * xi)
        return self.state

    def stationary_std(self) -> float:
        a = 1.0 - self.theta * self.dt
        return float(self.sigma * np.sqrt(self.dt / (1.0 - a * a)))


def noisy_expert_action(policy: ExpertPolicy, env: CollabEnv,
                        noise: OUNoise) -> np.ndarray:
    """Expert action plus the current noise state, clamped; the noise
    advances afterwards, so the perturbation applied at step k is n_k."""
    a = expert_action(policy, env) + noise.state
    noise.advance()
    return np.clip(a, env.action_low, env.action_high)


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """Bundle of recorded expert episodes with provenance."""

    task: str
    config_hash: str
    m: int
    seed: int
    theta: float
    sigma: float
    episodes: list

    def all_snapshots(self):
        for ep in self.episodes:
            for snap in ep.snapshots:
                yield snap


def sample_dataset(env_config: EnvConfig, policy: ExpertPolicy,
                   noise_params: dict = None, m: int = 10,
                   seed: int = 0) -> Dataset:
    """Roll out `m` noisy-expert episodes and package them.

    Episode i uses env seed (seed + i) and its own noise stream, so the
    dataset is a pure function of (config, policy, noise params, m,
    seed).  Every record's snapshot is verified by replay before the
    dataset is returned; truncated episodes are kept and flagged."""
    if m < 1:
        raise ConfigurationError("need at least one episode")
    noise_params = dict(noise_params or {})
    theta = float(noise_params.pop("theta", 4.0))
    sigma = float(noise_params.pop("sigma", 0.08))
    if noise_params:
        raise ConfigurationError(f"unknown noise params: {sorted(noise_params)}")
    cfg = replace(env_config, record=True)
    env = CollabEnv(cfg)
    noise = OUNoise(dim=env.action_dim, theta=theta, sigma=sigma,
                    dt=ACTION_PERIOD)
    episodes = []
    for i in range(m):
        env.reset(seed=seed + i)
        policy.reset()
        noise.reset(np.random.default_rng([seed, i]))
        phases = []
        truncated = False
        while True:
            a = noisy_expert_action(policy, env, noise)
            phases.append(policy.phase)
            _, _, term, trunc, _ = env.step(a)
            if term or trunc:
                truncated = trunc and not term
                break
        rec = env.recording()
        rec.phases = np.asarray(phases, dtype=np.int64)
        rec.truncated = bool(truncated)
        _verify_replayable(env, rec)
        episodes.append(rec)
    return Dataset(task=env.task.name, config_hash=env_config.fingerprint(),
                   m=m, seed=seed, theta=theta, sigma=sigma, episodes=episodes)


def _verify_replayable(env: CollabEnv, rec: EpisodeRecording):
    for k in range(rec.n_steps):
        obs, _ = env.reset(forced_state=rec.snapshots[k])
        if not np.array_equal(obs, rec.obs[k]):
            raise ConfigurationError(
                f"snapshot at step {k} does not replay to its stored observation")


def save_dataset(ds: Dataset, path):
    with open(path, "w") as fh:
        fh.write("expert-dataset v1\n")
        fh.write(f"config: {ds.config_hash}\n")
        fh.write(f"task: {ds.task}\n")
        fh.write(f"episodes: {ds.m}\n")
        fh.write(f"seed: {ds.seed}\n")
        fh.write(f"theta: {ds.theta!r}\n")
        fh.write(f"sigma: {ds.sigma!r}\n")
        for ep in ds.episodes:
            save_recording(ep, fh)


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        if fh.readline().strip() != "expert-dataset v1":
            raise ConfigurationError("not an expert dataset file")
        meta = {}
        for _ in range(6):
            key, _, val = fh.readline().strip().partition(": ")
            meta[key] = val
        m = int(meta["episodes"])
        episodes = [load_recording(fh) for _ in range(m)]
    return Dataset(task=meta["task"], config_hash=meta["config"], m=m,
                   seed=int(meta["seed"]), theta=float(meta["theta"]),
                   sigma=float(meta["sigma"]), episodes=episodes)


def evaluate_expert(env_config: EnvConfig, policy: ExpertPolicy,
                    episodes: int = 500, seed: int = 0) -> dict:
    """Deterministic expert rollouts; per-episode success and return."""
    env = CollabEnv(env_config)
    succ = np.zeros(episodes, dtype=np.float64)
    rets = np.zeros(episodes, dtype=np.float64)
    steps = np.zeros(episodes, dtype=np.int64)
    for i in range(episodes):
        env.reset(seed=seed + i)
        policy.reset()
        total = 0.0
        k = 0
        while True:
            _, r, term, trunc, _ = env.step(expert_action(policy, env))
            total += r
            k += 1
            if term or trunc:
                break
        succ[i] = float(env.episode_success())
        rets[i] = total
        steps[i] = k
    return {
        "task": env.task.name,
        "episodes": episodes,
        "success_rate": float(succ.mean()),
        "mean_return": float(rets.mean()),
        "success": succ,
        "returns": rets,
        "steps": steps,
    }
