"""Provably safe inner-loop filter.

Every inner step combines the next sample of the intended trajectory
with a full braking tail, over-approximates robot occupancy along that
shielded trajectory and human occupancy under a speed cap, and only
releases the intended sample when the two stay disjoint.  Otherwise the
robot follows the most recently validated braking trajectory, whose end
state (full stop) is safe to hold forever.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core
from .errors import ConfigurationError, InternalConsistencyError, LifecycleError
from .human import HumanSkeleton, HumanState
from .kinematics import COLLISION_MARGIN, JointState, RobotModel, batch_link_capsules
from .trajectory import DT_SIM, STEPS_PER_ACTION, JointTrajectory, brake_trajectory, concat

V_PFL_DEFAULT = 0.005  # m/s; contact is tolerated only below this point speed


@dataclass(frozen=True)
class ShieldConfig:
    mode: str = "ssm"                  # "ssm" (no contact) or "pfl" (slow contact)
    v_pfl: float = V_PFL_DEFAULT
    eps_meas: float = 0.0              # measurement error bound, meters
    steps_per_action: int = STEPS_PER_ACTION
    dt: float = DT_SIM
    v_human_max: np.ndarray = None     # per-body override; default from skeleton

    def __post_init__(self):
        if self.mode not in ("ssm", "pfl"):
            raise ConfigurationError(f"mode must be ssm or pfl, got {self.mode!r}")
        if not self.v_pfl > 0:
            raise ConfigurationError("v_pfl must be positive")
        if self.eps_meas < 0:
            raise ConfigurationError("eps_meas must be non-negative")
        if self.steps_per_action < 1:
            raise ConfigurationError("steps_per_action must be >= 1")
        if self.v_human_max is not None:
            v = np.asarray(self.v_human_max, dtype=np.float64).reshape(-1)
            if np.any(v < 0):
                raise ConfigurationError("v_human_max entries must be >= 0")
            object.__setattr__(self, "v_human_max", v)

    def body_speed_caps(self, skeleton: HumanSkeleton) -> np.ndarray:
        if self.v_human_max is None:
            return skeleton.v_max_array()
        if self.v_human_max.size != skeleton.n_bodies:
            raise ConfigurationError("v_human_max length does not match skeleton")
        return self.v_human_max


@dataclass
class ShieldedTrajectory:
    intended_step: JointTrajectory   # exactly one inner interval
    failsafe_tail: JointTrajectory   # brake from the intended step's endpoint

    def combined(self) -> JointTrajectory:
        return concat(self.intended_step, self.failsafe_tail)

    @property
    def horizon(self) -> float:
        return self.intended_step.dt + self.failsafe_tail.t_end - self.failsafe_tail.t0

    @property
    def n_intervals(self) -> int:
        return 1 + self.failsafe_tail.n_samples - 1


@dataclass
class HumanReachSet:
    """Per-interval ball growth around the measured body capsules."""

    base_capsules: np.ndarray   # (B,7) measured
    growth: np.ndarray          # (K,B) radius inflation per interval
    dt: float

    @property
    def n_intervals(self) -> int:
        return self.growth.shape[0]

    def radius_at(self, k: int, body: int) -> float:
        return float(self.base_capsules[body, 6] + self.growth[k, body])


@dataclass
class ShieldVerdict:
    safe: bool
    violating_interval: int = None
    violating_pair: tuple = None      # (robot link index, human body index)
    active_trajectory: str = "intended"

    def __post_init__(self):
        has_violation = self.violating_interval is not None or self.violating_pair is not None
        if self.safe == has_violation:
            raise InternalConsistencyError("verdict fields inconsistent with safe flag")


def build_shielded(model: RobotModel, current: JointState, intended: JointTrajectory) -> ShieldedTrajectory:
    """One intended interval plus the braking tail from its endpoint."""
    if np.any(np.abs(intended.q[0] - current.q) > 1e-9) or \
       np.any(np.abs(intended.qd[0] - current.q_dot) > 1e-9):
        raise InternalConsistencyError("intended trajectory does not start at the current state")
    if intended.n_samples < 2:
        raise InternalConsistencyError("intended trajectory must contain at least one step")
    step = intended.segment(0, 1)
    tail = brake_trajectory(model, step.state_at(1)).at_time(step.t_end)
    return ShieldedTrajectory(step, tail)


def human_reach_set(human: HumanState, skeleton: HumanSkeleton,
                    cfg: ShieldConfig, horizon: float) -> HumanReachSet:
    """Capsules reachable by any human whose per-body speed stays below
    the caps, starting within eps_meas of the measurement."""
    k = int(round(horizon / cfg.dt))
    if k < 1 or abs(k * cfg.dt - horizon) > 1e-9:
        raise ConfigurationError(f"horizon {horizon} not aligned to dt {cfg.dt}")
    caps = human.capsules(skeleton)
    v_max = cfg.body_speed_caps(skeleton)
    steps = np.arange(1, k + 1, dtype=np.float64)[:, None] * cfg.dt
    growth = cfg.eps_meas + steps * v_max[None, :]
    return HumanReachSet(caps, growth, cfg.dt)


def _interval_sag(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """(S-1,) chord-deviation bound for curved link motion per interval."""
    rho = model.link_speed_bound_matrix()
    reach = float(rho[:, 0].max())
    dq_sum = np.abs(np.diff(q, axis=0)).sum(axis=1)
    return reach * dq_sum ** 2 / 8.0


def _pfl_exempt(model: RobotModel, qd: np.ndarray, v_pfl: float) -> np.ndarray:
    """(S-1,L) True where every point of the link provably stays at or
    below v_pfl for the whole interval.  Per-step acceleration is
    constant, so per-joint |velocity| peaks at an interval endpoint."""
    rho = model.link_speed_bound_matrix()          # (L,n)
    vmax = np.maximum(np.abs(qd[:-1]), np.abs(qd[1:]))  # (S-1,n)
    bound = vmax @ rho.T                           # (S-1,L)
    return bound <= v_pfl


def _swept_capsules(caps: np.ndarray, sag: np.ndarray) -> np.ndarray:
    """(S-1,L,7) per-interval capsules covering the motion between
    consecutive samples: midpoint capsule inflated by half the largest
    endpoint displacement plus the curvature sag."""
    a0, a1 = caps[:-1, :, 0:3], caps[1:, :, 0:3]
    b0, b1 = caps[:-1, :, 3:6], caps[1:, :, 3:6]
    move = np.maximum(np.linalg.norm(a1 - a0, axis=2), np.linalg.norm(b1 - b0, axis=2))
    out = np.empty((caps.shape[0] - 1, caps.shape[1], 7))
    out[:, :, 0:3] = 0.5 * (a0 + a1)
    out[:, :, 3:6] = 0.5 * (b0 + b1)
    out[:, :, 6] = caps[:-1, :, 6] + 0.5 * move + sag[:, None]
    return out


def verify(model: RobotModel, shielded: ShieldedTrajectory,
           reach: HumanReachSet, cfg: ShieldConfig,
           static_obstacles: np.ndarray = None) -> ShieldVerdict:
    """Disjointness of swept robot capsules and grown human capsules on
    every inner interval; in PFL mode provably slow links are exempt.

    When ``static_obstacles`` is given the swept capsules must also keep
    the collision margin to them and to each other (non-adjacent links),
    so an accepted failsafe can never run the robot into the scene."""
    traj = shielded.combined()
    if reach.n_intervals != traj.n_samples - 1:
        raise InternalConsistencyError("reach set horizon does not match trajectory")
    caps, _ = batch_link_capsules(model, traj.q)
    sag = _interval_sag(model, traj.q)
    if cfg.mode == "pfl":
        exempt = _pfl_exempt(model, traj.qd, cfg.v_pfl)
    else:
        exempt = np.zeros((traj.n_samples - 1, caps.shape[1]), dtype=bool)
    hit = _core.verify_capsule_sweep(caps, sag, reach.base_capsules, reach.growth,
                                     np.ascontiguousarray(exempt, dtype=np.uint8))
    if hit[0] >= 0:
        return ShieldVerdict(False, violating_interval=int(hit[0]),
                             violating_pair=(int(hit[1]), int(hit[2])))
    if static_obstacles is not None:
        swept = _swept_capsules(caps, sag)
        obstacles = np.asarray(static_obstacles, dtype=np.float64).reshape(-1, 7)
        s = _core.first_collision_sample(np.ascontiguousarray(swept),
                                         model._self_pairs, obstacles,
                                         COLLISION_MARGIN)
        if s >= 0:
            return ShieldVerdict(False, violating_interval=int(s))
    return ShieldVerdict(True)


class SafetyShield:
    """Stateful per-environment filter; owns the last validated failsafe."""

    def __init__(self, model: RobotModel, skeleton: HumanSkeleton, cfg: ShieldConfig,
                 static_obstacles=None):
        self.model = model
        self.skeleton = skeleton
        self.cfg = cfg
        if static_obstacles is None:
            self.static_obstacles = None
        else:
            self.static_obstacles = np.asarray(static_obstacles, dtype=np.float64).reshape(-1, 7)
        self._stored = None
        self._cursor = 0

    def reset(self, state: JointState):
        if np.any(state.q_dot != 0.0):
            raise LifecycleError("episodes must start from a full stop")
        self._stored = JointTrajectory(0.0, self.cfg.dt, state.q[None, :],
                                       np.zeros((1, state.q.size)), True)
        self._cursor = 0

    @property
    def stored_failsafe(self) -> JointTrajectory:
        return self._stored

    def step(self, current: JointState, intended: JointTrajectory, human: HumanState):
        """Next verified-safe joint state plus the verdict that produced it."""
        if self._stored is None:
            raise LifecycleError("step before reset")
        shielded = build_shielded(self.model, current, intended)
        reach = human_reach_set(human, self.skeleton, self.cfg, shielded.horizon)
        verdict = verify(self.model, shielded, reach, self.cfg, self.static_obstacles)
        if verdict.safe:
            nxt = shielded.intended_step.state_at(1, current.gripper)
            self._stored = shielded.failsafe_tail
            self._cursor = 0
        else:
            verdict.active_trajectory = "previous_failsafe"
            self._cursor += 1
            k = min(self._cursor, self._stored.n_samples - 1)
            nxt = self._stored.state_at(k, current.gripper)
            if self._cursor >= self._stored.n_samples:
                nxt.q_dot = np.zeros_like(nxt.q_dot)
        return nxt, verdict

    # -- snapshot support --------------------------------------------------

    def state_vector(self) -> np.ndarray:
        t = self._stored
        head = np.array([float(self._cursor), float(t.n_samples), t.t0], dtype=np.float64)
        return np.concatenate([head, t.q.reshape(-1), t.qd.reshape(-1)])

    def restore_state_vector(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        n = self.model.n_joints
        self._cursor = int(vec[0])
        s = int(vec[1])
        t0 = float(vec[2])
        q = vec[3:3 + s * n].reshape(s, n).copy()
        qd = vec[3 + s * n:3 + 2 * s * n].reshape(s, n).copy()
        self._stored = JointTrajectory(t0, self.cfg.dt, q, qd, bool(np.all(qd[-1] == 0.0)))
