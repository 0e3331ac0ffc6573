"""Episode recordings: capture, text persistence and safety audit.

One format serves two consumers.  The environment records every inner
simulation step (executed joint state plus the human reference it was
verified against); the expert pipeline stores the same records enriched
with observations, pre-step snapshots and phase labels.  The audit tool
replays the geometry offline and re-checks the safety claims without
trusting the live verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import ConfigurationError
from .human import world_capsules

_FMT = "%.17g"


def _fmt_row(values) -> str:
    return " ".join(_FMT % v for v in np.asarray(values, dtype=np.float64).reshape(-1))


@dataclass
class EpisodeRecording:
    task: str
    shield_mode: str
    dt: float
    steps_per_action: int
    n_joints: int
    n_bodies: int
    seed: int = -1
    actions: np.ndarray = None        # (K, A) raw agent actions
    applied: np.ndarray = None        # (K, A) after the feasibility filter
    q_targets: np.ndarray = None      # (K, n)
    q: np.ndarray = None              # (K, L, n) executed samples
    qd: np.ndarray = None             # (K, L, n)
    gripper: np.ndarray = None        # (K,)
    human_pos: np.ndarray = None      # (K, L, B, 3)
    human_quat: np.ndarray = None     # (K, L, B, 4)
    rewards: np.ndarray = None        # (K,) emitted
    undelayed: np.ndarray = None      # (K,)
    predicates: np.ndarray = None     # (K, 5)
    unsafe_steps: np.ndarray = None   # (K,) shield rejections per step
    obs: np.ndarray = None            # (K, obs_dim) pre-action observations, optional
    snapshots: tuple = ()             # per-step pre-action world snapshots, optional
    phases: np.ndarray = None         # (K,) int labels, optional
    truncated: bool = False           # episode hit the step cap without terminating

    @property
    def n_steps(self) -> int:
        return 0 if self.actions is None else self.actions.shape[0]

    def executed_flat(self):
        """(K*L, n) q and qd of every executed inner sample, in order."""
        k, l, n = self.q.shape
        return self.q.reshape(k * l, n), self.qd.reshape(k * l, n)

    def human_flat(self):
        k, l, b, _ = self.human_pos.shape
        return (self.human_pos.reshape(k * l, b, 3),
                self.human_quat.reshape(k * l, b, 4))


class EpisodeRecorder:
    """Accumulates one episode's worth of step data for a CollabEnv."""

    def __init__(self, env):
        self.env = env
        self._steps = []
        self._inner = None

    def begin_step(self):
        self._inner = _InnerCollector()
        return self._inner

    def end_step(self, snapshot, obs, action, applied, q_target,
                 reward, undelayed, sigma, unsafe_steps):
        self._steps.append({
            "snapshot": snapshot, "obs": None if obs is None else obs.copy(),
            "action": np.array(action, dtype=np.float64),
            "applied": np.array(applied, dtype=np.float64),
            "q_target": np.array(q_target, dtype=np.float64),
            "reward": float(reward), "undelayed": float(undelayed),
            "sigma": np.array(sigma, dtype=np.float64),
            "unsafe": int(unsafe_steps),
            "q": np.array(self._inner.q), "qd": np.array(self._inner.qd),
            "gripper": float(self._inner.gripper),
            "hpos": np.array(self._inner.hpos), "hquat": np.array(self._inner.hquat),
        })
        self._inner = None

    def finish(self) -> EpisodeRecording:
        env, steps = self.env, self._steps
        rec = EpisodeRecording(
            task=env.task.name, shield_mode=env.shield_cfg.mode,
            dt=env.shield_cfg.dt, steps_per_action=env.shield_cfg.steps_per_action,
            n_joints=env.model.n_joints, n_bodies=env.skeleton.n_bodies,
            seed=env._episode_seed)
        if not steps:
            z = np.zeros
            a = env.action_dim
            rec.actions = z((0, a)); rec.applied = z((0, a))
            rec.q_targets = z((0, rec.n_joints))
            rec.q = z((0, rec.steps_per_action, rec.n_joints))
            rec.qd = rec.q.copy(); rec.gripper = z(0)
            rec.human_pos = z((0, rec.steps_per_action, rec.n_bodies, 3))
            rec.human_quat = z((0, rec.steps_per_action, rec.n_bodies, 4))
            rec.rewards = z(0); rec.undelayed = z(0)
            rec.predicates = z((0, 5)); rec.unsafe_steps = z(0, dtype=np.int64)
            return rec
        rec.actions = np.stack([s["action"] for s in steps])
        rec.applied = np.stack([s["applied"] for s in steps])
        rec.q_targets = np.stack([s["q_target"] for s in steps])
        rec.q = np.stack([s["q"] for s in steps])
        rec.qd = np.stack([s["qd"] for s in steps])
        rec.gripper = np.array([s["gripper"] for s in steps])
        rec.human_pos = np.stack([s["hpos"] for s in steps])
        rec.human_quat = np.stack([s["hquat"] for s in steps])
        rec.rewards = np.array([s["reward"] for s in steps])
        rec.undelayed = np.array([s["undelayed"] for s in steps])
        rec.predicates = np.stack([s["sigma"] for s in steps])
        rec.unsafe_steps = np.array([s["unsafe"] for s in steps], dtype=np.int64)
        if steps[0]["obs"] is not None:
            rec.obs = np.stack([s["obs"] for s in steps])
        if steps[0]["snapshot"] is not None:
            rec.snapshots = tuple(s["snapshot"] for s in steps)
        return rec


class _InnerCollector:
    def __init__(self):
        self.q, self.qd = [], []
        self.gripper = 1.0
        self.hpos, self.hquat = [], []

    def add(self, state, human_state):
        self.q.append(state.q.copy())
        self.qd.append(state.q_dot.copy())
        self.gripper = state.gripper
        self.hpos.append(human_state.body_positions.copy())
        self.hquat.append(human_state.body_quats.copy())


# ---------------------------------------------------------------------------
# persistence


def save_recording(rec: EpisodeRecording, fh):
    """Write one recording to an open text file handle."""
    obs_dim = 0 if rec.obs is None else rec.obs.shape[1]
    fh.write("episode-recording v1\n")
    for key, val in (("task", rec.task), ("mode", rec.shield_mode),
                     ("dt", _FMT % rec.dt),
                     ("steps_per_action", rec.steps_per_action),
                     ("n_joints", rec.n_joints), ("n_bodies", rec.n_bodies),
                     ("act_dim", rec.actions.shape[1]), ("obs_dim", obs_dim),
                     ("seed", rec.seed), ("steps", rec.n_steps),
                     ("has_snapshots", int(bool(rec.snapshots))),
                     ("has_phases", int(rec.phases is not None)),
                     ("truncated", int(rec.truncated))):
        fh.write(f"{key}: {val}\n")
    for k in range(rec.n_steps):
        fh.write(f"step: {k}\n")
        fh.write("a: " + _fmt_row(rec.actions[k]) + "\n")
        fh.write("p: " + _fmt_row(rec.applied[k]) + "\n")
        fh.write("t: " + _fmt_row(rec.q_targets[k]) + "\n")
        phase = -1 if rec.phases is None else int(rec.phases[k])
        head = [rec.rewards[k], rec.undelayed[k], rec.gripper[k],
                float(rec.unsafe_steps[k]), float(phase)]
        fh.write("r: " + _fmt_row(np.concatenate([head, rec.predicates[k]])) + "\n")
        for i in range(rec.q.shape[1]):
            fh.write("x: " + _fmt_row(np.concatenate([rec.q[k, i], rec.qd[k, i]])) + "\n")
            fh.write("h: " + _fmt_row(np.concatenate([rec.human_pos[k, i].reshape(-1),
                                                      rec.human_quat[k, i].reshape(-1)])) + "\n")
        if rec.obs is not None:
            fh.write("o: " + _fmt_row(rec.obs[k]) + "\n")
        if rec.snapshots:
            snap = rec.snapshots[k]
            fh.write(f"n: {snap.size} " + _fmt_row(snap) + "\n")


def _expect(line: str, prefix: str) -> str:
    if not line.startswith(prefix):
        raise ConfigurationError(f"recording parse error: expected {prefix!r}, got {line[:30]!r}")
    return line[len(prefix):].strip()


def load_recording(fh) -> EpisodeRecording:
    """Read one recording from an open text file handle."""
    first = fh.readline().strip()
    if first != "episode-recording v1":
        raise ConfigurationError("not an episode recording file")
    meta = {}
    for _ in range(13):
        key, _, val = fh.readline().strip().partition(": ")
        meta[key] = val
    k_steps = int(meta["steps"])
    l = int(meta["steps_per_action"])
    n = int(meta["n_joints"])
    b = int(meta["n_bodies"])
    a = int(meta["act_dim"])
    obs_dim = int(meta["obs_dim"])
    rec = EpisodeRecording(task=meta["task"], shield_mode=meta["mode"],
                           dt=float(meta["dt"]), steps_per_action=l,
                           n_joints=n, n_bodies=b, seed=int(meta["seed"]),
                           truncated=meta["truncated"] == "1")
    rec.actions = np.zeros((k_steps, a)); rec.applied = np.zeros((k_steps, a))
    rec.q_targets = np.zeros((k_steps, n))
    rec.q = np.zeros((k_steps, l, n)); rec.qd = np.zeros((k_steps, l, n))
    rec.gripper = np.zeros(k_steps)
    rec.human_pos = np.zeros((k_steps, l, b, 3))
    rec.human_quat = np.zeros((k_steps, l, b, 4))
    rec.rewards = np.zeros(k_steps); rec.undelayed = np.zeros(k_steps)
    rec.predicates = np.zeros((k_steps, 5))
    rec.unsafe_steps = np.zeros(k_steps, dtype=np.int64)
    has_obs = obs_dim > 0
    has_snap = meta["has_snapshots"] == "1"
    has_phase = meta["has_phases"] == "1"
    if has_obs:
        rec.obs = np.zeros((k_steps, obs_dim))
    if has_phase:
        rec.phases = np.zeros(k_steps, dtype=np.int64)
    snaps = []

    def row(prefix):
        return np.array(_expect(fh.readline().strip(), prefix).split(), dtype=np.float64)

    for k in range(k_steps):
        _expect(fh.readline().strip(), "step:")
        rec.actions[k] = row("a: ")
        rec.applied[k] = row("p: ")
        rec.q_targets[k] = row("t: ")
        r = row("r: ")
        rec.rewards[k], rec.undelayed[k], rec.gripper[k] = r[0], r[1], r[2]
        rec.unsafe_steps[k] = int(r[3])
        if has_phase:
            rec.phases[k] = int(r[4])
        rec.predicates[k] = r[5:10]
        for i in range(l):
            x = row("x: ")
            rec.q[k, i], rec.qd[k, i] = x[:n], x[n:]
            h = row("h: ")
            rec.human_pos[k, i] = h[:3 * b].reshape(b, 3)
            rec.human_quat[k, i] = h[3 * b:].reshape(b, 4)
        if has_obs:
            rec.obs[k] = row("o: ")
        if has_snap:
            vals = row("n: ")
            if int(vals[0]) != vals.size - 1:
                raise ConfigurationError("snapshot length prefix mismatch")
            snaps.append(vals[1:].copy())
    rec.snapshots = tuple(snaps)
    return rec


def save_recording_file(rec: EpisodeRecording, path):
    with open(path, "w") as fh:
        save_recording(rec, fh)


def load_recording_file(path) -> EpisodeRecording:
    with open(path) as fh:
        return load_recording(fh)


# ---------------------------------------------------------------------------
# offline audit


def audit_recording(rec: EpisodeRecording, model, skeleton, v_pfl: float = 0.005,
                    static_obstacles=None, tol: float = 1e-9) -> dict:
    """Re-check limits, step consistency and contact safety of a recording.

    Geometry is recomputed from scratch; the stored predicate flags and
    verdict counts are not trusted.  Contact classification uses the
    same conservative link-speed bound the shield used, so a clean
    report means the recorded episode provably respected its mode.
    """
    if rec.shield_mode not in ("ssm", "pfl"):
        raise ConfigurationError(f"unknown shield mode {rec.shield_mode!r}")
    q, qd = rec.executed_flat()
    hpos, hquat = rec.human_flat()
    violations = []

    lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
    if np.any(q < lo - tol) or np.any(q > hi + tol):
        violations.append("joint position limit exceeded")
    if np.any(np.abs(qd) > model.vel_limits + tol):
        violations.append("joint velocity limit exceeded")
    dv = np.abs(np.diff(qd, axis=0))
    if dv.size and np.any(dv > model.acc_limits * rec.dt + 1e-6):
        violations.append("joint acceleration limit exceeded")
    dq = q[1:] - q[:-1] - qd[1:] * rec.dt
    if dq.size and np.any(np.abs(dq) > 1e-6):
        violations.append("position/velocity integration mismatch")

    caps_r, _ = _batch_caps(model, q)
    rho = model.link_speed_bound_matrix()
    min_gap = np.inf
    contact_samples = 0
    crit_samples = 0
    for i in range(q.shape[0]):
        caps_h = world_capsules(skeleton, hpos[i], hquat[i])
        gap, li, _ = _core.min_capsule_gap_pair(caps_r[i], caps_h)
        min_gap = min(min_gap, float(gap))
        if gap <= 0.0:
            bound = float(rho[int(li)] @ np.abs(qd[i]))
            if rec.shield_mode == "ssm" or bound > v_pfl:
                crit_samples += 1
            else:
                contact_samples += 1
    if crit_samples:
        violations.append("contact above the permitted speed" if rec.shield_mode == "pfl"
                          else "robot-human contact in no-contact mode")
    static_hits = 0
    if static_obstacles is not None:
        obstacles = np.asarray(static_obstacles, dtype=np.float64).reshape(-1, 7)
        if obstacles.shape[0]:
            for i in range(q.shape[0]):
                if np.any(_core.capsule_gaps_pairwise(caps_r[i], obstacles) <= 0.0):
                    static_hits += 1
            if static_hits:
                violations.append("collision with static geometry")
    return {
        "ok": not violations,
        "violations": violations,
        "inner_samples": int(q.shape[0]),
        "min_human_gap": float(min_gap),
        "contact_samples": int(contact_samples),
        "crit_samples": int(crit_samples),
        "static_hits": int(static_hits),
    }


def _batch_caps(model, q):
    from .kinematics import batch_link_capsules
    return batch_link_capsules(model, q)
