"""Collaborative manipulation environment.

Outer loop: one agent action per control period is converted to a joint
target, filtered for static feasibility (with uniform resampling on
rejection) and then tracked for a fixed number of inner simulation
steps, each of which runs the human forward, passes the planned step
through the safety shield and applies the released state to the world.

Observations are flat float vectors with a published layout, optionally
read through a delay buffer and perturbed by uniform noise.  The whole
world state can be exported to / restored from a flat numeric snapshot,
bitwise, to support reset-to-state training and replay verification.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import ConfigurationError, LifecycleError, UnreachableTargetError
from .geometry import pack_capsules
from .human import (ClipReplay, HumanState, IdleWarpParams, PursuitHuman,
                    StartTransform, _quat_mul, _quat_rotate, default_skeleton,
                    generate_synthetic_clip, sample_clip)
from .kinematics import (COLLISION_MARGIN, JointState, RobotModel,
                         _quat_from_matrix, batch_link_capsules,
                         check_collision_free, inverse_kinematics)
from .shield import SafetyShield, ShieldConfig
from .tasks import Task, make_task
from .trajectory import ACTION_PERIOD, DT_SIM, STEPS_PER_ACTION, plan_trajectory

WORKSPACE_STEP = 0.05      # m per action along each axis
JOINT_STEP = 0.1           # rad per action per joint (joint_delta mode)
K_MAX_DEFAULT = 500
M_RESAMPLE = 100
OBJECT_RADIUS = 0.03

SNAPSHOT_VERSION = 2.0

PREDICATE_NAMES = ("sigma_grip", "sigma_target", "sigma_contact",
                   "sigma_crit", "sigma_col_stat")


def _quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


@dataclass
class ObjectState:
    name: str
    position: np.ndarray
    quat: np.ndarray
    radius: float = OBJECT_RADIUS
    attached_to: str = None          # None | "ee" | "human"
    hand_body: int = -1
    offset_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    offset_quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))


@dataclass
class EnvConfig:
    model: RobotModel
    task: str = "reach"
    clips: tuple = None              # MotionClips; None generates defaults
    n_default_clips: int = 3
    action_mode: str = "workspace"   # or "joint_delta"
    home_q: np.ndarray = None
    eps_obs: float = 0.0
    obs_delay: int = 0
    reward_delay: int = None         # None: task default
    k_max: int = K_MAX_DEFAULT
    m_resample: int = M_RESAMPLE
    seed: int = 0
    human_driver: str = "clip"       # or "pursuit"
    obs_bodies: tuple = ("right_hand", "left_hand", "head")
    eps_meas: float = 0.0
    shield_mode: str = None          # None: task default
    record: bool = False

    def __post_init__(self):
        if self.action_mode not in ("workspace", "joint_delta"):
            raise ConfigurationError(f"unknown action mode {self.action_mode!r}")
        if self.human_driver not in ("clip", "pursuit"):
            raise ConfigurationError(f"unknown human driver {self.human_driver!r}")
        if self.obs_delay < 0 or self.k_max < 1 or self.m_resample < 0:
            raise ConfigurationError("obs_delay/k_max/m_resample out of range")
        if self.eps_obs < 0:
            raise ConfigurationError("eps_obs must be >= 0")
        if self.home_q is None:
            self.home_q = np.zeros(self.model.n_joints)
        self.home_q = self.model.check_q(self.home_q)

    def fingerprint(self) -> str:
        """Hex digest over everything that shapes the dynamics.

        Two configs with equal fingerprints produce bitwise-identical
        episodes for equal reset seeds; datasets and experiment reports
        carry it so results can be traced to an exact setup."""
        h = hashlib.sha256()
        m = self.model
        for part in (m.name, m.dh.tobytes(), m.joint_limits.tobytes(),
                     m.vel_limits.tobytes(), m.acc_limits.tobytes(),
                     m.ee_frame.tobytes(), self.task, self.action_mode,
                     self.home_q.tobytes()):
            h.update(part.encode() if isinstance(part, str) else part)
        if self.clips is None:
            h.update(b"default-clips:%d" % self.n_default_clips)
        else:
            for c in self.clips:
                h.update(c.clip_id.encode())
                h.update(np.ascontiguousarray(c.positions).tobytes())
        h.update(repr((self.eps_obs, self.obs_delay, self.reward_delay,
                       self.k_max, self.m_resample, self.human_driver,
                       tuple(self.obs_bodies), self.eps_meas,
                       self.shield_mode)).encode())
        return h.hexdigest()[:16]


class CollabEnv:
    """Shielded human-robot collaboration environment."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.model = config.model
        self.task: Task = make_task(config.task)
        self.skeleton = default_skeleton()
        self.home_q = config.home_q.copy()
        self.reward_delay = (self.task.reward_delay if config.reward_delay is None
                             else int(config.reward_delay))
        if self.reward_delay < 0:
            raise ConfigurationError("reward_delay must be >= 0")

        mode = config.shield_mode or self.task.shield_mode
        self.shield_cfg = ShieldConfig(mode=mode, eps_meas=config.eps_meas)
        self.static_obstacles = tuple(self.task.obstacles)
        self._obstacles_packed = pack_capsules(list(self.static_obstacles))
        self.shield = SafetyShield(self.model, self.skeleton, self.shield_cfg,
                                   static_obstacles=self._obstacles_packed)

        if config.clips is not None:
            self.clips = tuple(config.clips)
        else:
            self.clips = tuple(
                generate_synthetic_clip(self.task.clip_template,
                                        self.task.clip_params(), rng_seed=i)
                for i in range(config.n_default_clips))
        for c in self.clips:
            if tuple(c.body_names) != self.skeleton.body_names:
                raise ConfigurationError(f"clip {c.clip_id} bodies mismatch skeleton")
        base = self.clips[0]
        self._pursuit_start = base.positions[0].copy()

        self._rho = self.model.link_speed_bound_matrix()
        self._rng = np.random.default_rng(config.seed)
        self._layout = self._build_layout()
        self._obs_dim = sum(s for _, s, _, _ in self._layout)
        self._noise_idx = self._mask_for(lambda noised, pred: noised)
        self._pred_idx = self._mask_for(lambda noised, pred: pred)
        self._alive = False
        self._recorder = None
        self._last_obs = None

    # -- action space -------------------------------------------------------

    @property
    def action_dim(self) -> int:
        if self.config.action_mode == "workspace":
            return 4
        return self.model.n_joints + 1

    @property
    def action_low(self) -> np.ndarray:
        if self.config.action_mode == "workspace":
            return np.array([-WORKSPACE_STEP] * 3 + [-1.0])
        return np.array([-JOINT_STEP] * self.model.n_joints + [-1.0])

    @property
    def action_high(self) -> np.ndarray:
        return -self.action_low

    # -- observation layout --------------------------------------------------

    def _build_layout(self):
        n = self.model.n_joints
        rows = [("q", n, True, False), ("qd", n, True, False),
                ("gripper", 1, False, False),
                ("ee_pos", 3, True, False), ("ee_quat", 4, False, False),
                ("goal_pos_w", 3, True, False), ("goal_pos_e", 3, True, False),
                ("goal_dist", 1, True, False), ("q_goal_residual", n, True, False)]
        for name in self.task.object_names:
            rows += [(f"{name}_pos_w", 3, True, False),
                     (f"{name}_pos_e", 3, True, False),
                     (f"{name}_dist", 1, True, False),
                     (f"{name}_quat", 4, False, False),
                     (f"{name}_attached", 1, False, True)]
        for name, size, noised in self.task.extra_obs_layout():
            rows.append((name, size, noised, False))
        for p in PREDICATE_NAMES:
            rows.append((p, 1, False, True))
        for b in self.config.obs_bodies:
            if b not in self.skeleton.body_names:
                raise ConfigurationError(f"unknown observation body {b!r}")
            rows += [(f"{b}_pos_w", 3, True, False),
                     (f"{b}_pos_e", 3, True, False),
                     (f"{b}_dist", 1, True, False)]
        return tuple(rows)

    def observation_layout(self):
        """Ordered (name, size) pairs of the flat observation vector."""
        return tuple((name, size) for name, size, _, _ in self._layout)

    @property
    def observation_dim(self) -> int:
        return self._obs_dim

    def _mask_for(self, pick):
        mask = np.zeros(self._obs_dim, dtype=bool)
        off = 0
        for _, size, noised, pred in self._layout:
            if pick(noised, pred):
                mask[off:off + size] = True
            off += size
        return mask

    @property
    def obs_noise_mask(self) -> np.ndarray:
        return self._noise_idx.copy()

    @property
    def obs_predicate_mask(self) -> np.ndarray:
        return self._pred_idx.copy()

    @property
    def obs_continuous_mask(self) -> np.ndarray:
        return ~self._pred_idx

    # -- helpers used by tasks and experts ------------------------------------

    def ee_pos(self) -> np.ndarray:
        return self._ee_p.copy()

    def ee_pos_at(self, q) -> np.ndarray:
        T = _core.fk_transforms(self.model.dh, np.asarray(q, dtype=np.float64).reshape(1, -1))[0][-1]
        return (T @ self.model.ee_frame)[:3, 3]

    def goal_distance(self) -> float:
        return float(np.linalg.norm(self._ee_p - self.goal))

    def q_collision_free(self, q) -> bool:
        return check_collision_free(self.model, q, self.static_obstacles)

    def human_body_pos(self, name: str) -> np.ndarray:
        return self.human_state.body_positions[self.skeleton.index(name)].copy()

    def human_grip_midpoint(self) -> np.ndarray:
        return 0.5 * (self.human_body_pos("left_hand") + self.human_body_pos("right_hand"))

    def receive_hand_pos(self) -> np.ndarray:
        """World position of the receiving hand at its settled (idle) pose."""
        if isinstance(self._driver, ClipReplay):
            clip, tf = self._driver.clip, self._driver.transform
        else:
            clip, tf = self.clips[0], StartTransform()
        windows = clip.idle_window_times()
        t_ref = windows[0][0] if windows else clip.duration
        pos, qt = clip.pose_at(t_ref)
        pos, _ = tf.apply(pos, qt)
        return pos[self.skeleton.index("right_hand")].copy()

    @property
    def joint_state(self) -> JointState:
        """Current joint state (copy); planners may not mutate the live one."""
        return JointState(self._cur.q.copy(), self._cur.q_dot.copy(),
                          self._cur.gripper)

    @property
    def obstacles_packed(self) -> np.ndarray:
        """Static obstacle capsules in the packed (n, 7) array layout."""
        return self._obstacles_packed

    def task_state(self) -> dict:
        """Structured ground-truth view for scripted policies."""
        st = {
            "step": self._k,
            "ee_pos": self._ee_p.copy(),
            "gripper": self._cur.gripper,
            "goal": self.goal.copy(),
            "objects": {o.name: (o.position.copy(), o.attached_to) for o in self.objects.values()},
            "human": {b: self.human_body_pos(b) for b in self.config.obs_bodies},
            "human_vel": {b: self.human_state.body_velocities[self.skeleton.index(b)].copy()
                          for b in self.config.obs_bodies},
            "sigma_grip": self.sigma_grip,
            "sigma_target": self.sigma_target,
        }
        if hasattr(self.task, "board_tilt"):
            st["tilt"] = self.task.board_tilt(self)
            st["board_far_end"] = self.human_grip_midpoint()
        return st

    # -- lifecycle -------------------------------------------------------------

    def reset(self, seed: int = None, forced_state: np.ndarray = None):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._episode_seed = -1 if seed is None else int(seed)
        if forced_state is not None:
            self._restore_snapshot(np.asarray(forced_state, dtype=np.float64))
        else:
            self._fresh_episode()
        self._alive = True
        self._recorder = None
        if self.config.record:
            from .recording import EpisodeRecorder
            self._recorder = EpisodeRecorder(self)
        obs = self._observe()
        self._last_obs = obs
        return obs, {"task": self.task.name}

    def _fresh_episode(self):
        rng = self._rng
        if self.config.human_driver == "clip":
            clip, tf, warp = sample_clip(self.clips, rng)
            self._clip_index = next(i for i, c in enumerate(self.clips) if c is clip)
            self._driver = ClipReplay(self.skeleton, clip, tf, warp, dt=DT_SIM)
        else:
            self._clip_index = -1
            self._driver = PursuitHuman(self.skeleton, self._pursuit_start, dt=DT_SIM)
        self.human_state = self._driver.advance(0.0)

        self.objects = {n: ObjectState(n, np.zeros(3), np.array([1.0, 0, 0, 0]))
                        for n in self.task.object_names}
        self.goal = np.zeros(3)
        self.start_q = self.home_q.copy()
        self.start_gripper = 1.0
        self.success_latched = False
        self.task.setup(self, rng)

        q0 = self.model.check_q(self.start_q)
        self._cur = JointState(q0, np.zeros_like(q0), self.start_gripper)
        if not check_collision_free(self.model, q0, self.static_obstacles):
            raise ConfigurationError("initial robot configuration collides with the scene")
        self._refresh_ee()
        for obj in self.objects.values():
            if obj.attached_to == "ee":
                self._capture_ee_offset(obj)
        try:
            self.q_goal = inverse_kinematics(self.model, self.goal, self.home_q)
        except UnreachableTargetError as err:
            self.q_goal = err.best_q

        self.shield.reset(self._cur)
        self._k = 0
        self._t = 0.0
        self.terminated = False
        self.truncated = False
        self._countdown = -1
        self._fifo = deque([0.0] * self.reward_delay)
        self.counters = dict.fromkeys(
            ("contact", "crit", "col_stat", "shield_unsafe", "resamples"), 0)
        self._refresh_predicates()
        self._truth_buf = deque(maxlen=self.config.obs_delay + 1)
        self._truth_buf.append(self._build_truth())

    # -- stepping ---------------------------------------------------------------

    def step(self, action):
        if not self._alive:
            raise LifecycleError("step before reset")
        if self.terminated or self.truncated:
            raise LifecycleError("step after episode end")
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.size != self.action_dim:
            raise ConfigurationError(f"action must have {self.action_dim} entries")
        pre_snapshot = self.snapshot() if self._recorder is not None else None
        action = np.clip(action, self.action_low, self.action_high)

        applied, q_target, g_cmd, resamples = self._filter_action(action)
        self.counters["resamples"] += resamples
        self._cur = JointState(self._cur.q, self._cur.q_dot, g_cmd)

        unsafe_steps = 0
        rec_inner = self._recorder.begin_step() if self._recorder is not None else None
        for _ in range(STEPS_PER_ACTION):
            self._t += DT_SIM
            events = self.task.event_predicates(self)
            if isinstance(self._driver, PursuitHuman):
                caps_now, _ = batch_link_capsules(self.model, self._cur.q)
                self._driver.observe_robot(caps_now[0])
            self.human_state = self._driver.advance(self._t, events)
            intended = plan_trajectory(self.model, self._cur, q_target, DT_SIM)
            nxt, verdict = self.shield.step(self._cur, intended, self.human_state)
            if not verdict.safe:
                unsafe_steps += 1
            self._cur = nxt
            self._refresh_ee()
            self._update_attachments()
            self._grasp_logic()
            self._count_contacts()
            if rec_inner is not None:
                rec_inner.add(self._cur, self.human_state)
        self.counters["shield_unsafe"] += unsafe_steps
        self._k += 1

        self._refresh_predicates()
        r_un = float(self.task.reward(self))
        if not self.success_latched and self.task.success(self):
            self.success_latched = True
            self._countdown = self.reward_delay
        self._fifo.append(r_un)
        reward = float(self._fifo.popleft())

        if self.task.failed(self):
            self.terminated = True
        elif self._countdown >= 0:
            if self._countdown == 0:
                self.terminated = True
            else:
                self._countdown -= 1
        if not self.terminated and self._k >= self.config.k_max:
            self.truncated = True

        self._truth_buf.append(self._build_truth())
        obs = self._observe()
        info = {
            "undelayed_reward": r_un,
            "success": self.episode_success(),
            "predicates": dict(zip(PREDICATE_NAMES, self._sigma_vec().tolist())),
            "shield_unsafe_steps": unsafe_steps,
            "resamples": resamples,
            "applied_action": applied,
            "q_target": q_target,
        }
        if self._recorder is not None:
            self._recorder.end_step(pre_snapshot, self._last_obs, action, applied,
                                    q_target, reward, r_un, self._sigma_vec(),
                                    unsafe_steps)
        self._last_obs = obs
        return obs, reward, self.terminated, self.truncated, info

    def episode_success(self) -> bool:
        if self.task.name == "collaborative_lifting":
            return self.truncated and not self.task.failed(self)
        return self.success_latched

    def recording(self):
        """Finished record of the episode so far (requires record=True)."""
        if self._recorder is None:
            raise LifecycleError("recording was not enabled for this episode")
        return self._recorder.finish()

    # -- action resolution -------------------------------------------------------

    def _resolve_action(self, action):
        if self.config.action_mode == "workspace":
            target = self._ee_p + action[:3]
            r = float(np.linalg.norm(target))
            r_max = self.model.max_reach() - 1e-3
            if r > r_max:
                target = target * (r_max / r)
            try:
                q_t = inverse_kinematics(self.model, target, self._cur.q)
            except UnreachableTargetError as err:
                q_t = err.best_q
        else:
            q_t = self.model.clamp_q(self._cur.q + action[:-1])
        g = 1.0 if action[-1] >= 0.0 else 0.0
        return q_t, g

    def _plan_clear(self, q_target) -> bool:
        plan = plan_trajectory(self.model, self._cur, q_target, ACTION_PERIOD)
        caps, _ = batch_link_capsules(self.model, plan.q)
        hit = _core.first_collision_sample(caps, self.model._self_pairs,
                                           self._obstacles_packed, COLLISION_MARGIN)
        return int(hit) < 0

    def _filter_action(self, action):
        """Static feasibility filter with uniform resampling, then null."""
        a = action
        for attempt in range(self.config.m_resample + 1):
            q_t, g = self._resolve_action(a)
            if self._plan_clear(q_t):
                return a, q_t, g, attempt
            a = self._rng.uniform(self.action_low, self.action_high)
        null = np.zeros(self.action_dim)
        null[-1] = 1.0 if self._cur.gripper >= 0.5 else -1.0
        return null, self._cur.q.copy(), self._cur.gripper, self.config.m_resample + 1

    # -- world bookkeeping ---------------------------------------------------------

    def _refresh_ee(self):
        T = _core.fk_transforms(self.model.dh, self._cur.q.reshape(1, -1))[0][-1]
        T = T @ self.model.ee_frame
        self._ee_p = T[:3, 3].copy()
        self._ee_R = T[:3, :3].copy()
        self._ee_quat = _quat_from_matrix(self._ee_R)

    def _capture_ee_offset(self, obj: ObjectState):
        # held objects keep a world-axis displacement from the grip point
        # (carried like a hung parcel); orientation follows the gripper
        obj.offset_pos = obj.position - self._ee_p
        obj.offset_quat = _quat_mul(_quat_conj(self._ee_quat), obj.quat)

    def _update_attachments(self):
        for obj in self.objects.values():
            if obj.attached_to == "ee":
                obj.position = self._ee_p + obj.offset_pos
                obj.quat = _quat_mul(self._ee_quat, obj.offset_quat)
            elif obj.attached_to == "human":
                hp = self.human_state.body_positions[obj.hand_body]
                hq = self.human_state.body_quats[obj.hand_body]
                obj.position = hp + _quat_rotate(hq, obj.offset_pos)
                obj.quat = _quat_mul(hq, obj.offset_quat)

    def _grasp_logic(self):
        closed = self._cur.gripper < 0.5
        radius = self.model.gripper_grasp_radius
        held = [o for o in self.objects.values() if o.attached_to == "ee"]
        if closed:
            if not held:
                for obj in self.objects.values():
                    if obj.attached_to is None and \
                       np.linalg.norm(obj.position - self._ee_p) <= radius:
                        obj.attached_to = "ee"
                        self._capture_ee_offset(obj)
                        break
        else:
            for obj in held:
                self._release(obj)

    def _release(self, obj: ObjectState):
        # a handover transfer happens when the release point is inside the
        # receiving-hand region; otherwise the object just stays put
        if self.task.name == "handover":
            hand = self.skeleton.index("right_hand")
            hp = self.human_state.body_positions[hand]
            if np.linalg.norm(obj.position - hp) <= self.task.transfer_radius:
                obj.attached_to = "human"
                obj.hand_body = hand
                hq = self.human_state.body_quats[hand]
                obj.offset_pos = _quat_rotate(_quat_conj(hq), obj.position - hp)
                obj.offset_quat = _quat_mul(_quat_conj(hq), obj.quat)
                return
        obj.attached_to = None
        obj.hand_body = -1

    # -- predicates ---------------------------------------------------------------

    def _contact_state(self):
        caps_r, _ = batch_link_capsules(self.model, self._cur.q)
        caps_h = self.human_state.capsules(self.skeleton)
        gap, li, _bi = _core.min_capsule_gap_pair(caps_r[0], caps_h)
        if gap > 0.0:
            return False, False
        bound = float(self._rho[int(li)] @ np.abs(self._cur.q_dot))
        slow = bound <= self.shield_cfg.v_pfl
        return slow, not slow

    def _static_overlap(self) -> bool:
        if self._obstacles_packed.shape[0] == 0:
            return False
        caps_r, _ = batch_link_capsules(self.model, self._cur.q)
        gaps = _core.capsule_gaps_pairwise(caps_r[0], self._obstacles_packed)
        return bool(np.any(gaps <= 0.0))

    def _count_contacts(self):
        contact, crit = self._contact_state()
        self.counters["contact"] += int(contact)
        self.counters["crit"] += int(crit)
        self.counters["col_stat"] += int(self._static_overlap())

    def _refresh_predicates(self):
        self.sigma_grip = any(o.attached_to == "ee" for o in self.objects.values())
        self.sigma_target = bool(self.task.target_predicate(self))
        self.sigma_contact, self.sigma_crit = self._contact_state()
        self.sigma_col_stat = self._static_overlap()

    def _sigma_vec(self) -> np.ndarray:
        return np.array([self.sigma_grip, self.sigma_target, self.sigma_contact,
                         self.sigma_crit, self.sigma_col_stat], dtype=np.float64)

    # -- observations ----------------------------------------------------------------

    def _to_ee_frame(self, p_world) -> np.ndarray:
        return self._ee_R.T @ (p_world - self._ee_p)

    def _build_truth(self) -> np.ndarray:
        parts = [self._cur.q, self._cur.q_dot, [self._cur.gripper],
                 self._ee_p, self._ee_quat,
                 self.goal, self._to_ee_frame(self.goal),
                 [self.goal_distance()], self.q_goal - self._cur.q]
        for name in self.task.object_names:
            obj = self.objects[name]
            parts += [obj.position, self._to_ee_frame(obj.position),
                      [float(np.linalg.norm(obj.position - self._ee_p))],
                      obj.quat, [float(obj.attached_to is not None)]]
        parts.append(self.task.extra_obs_values(self))
        parts.append(self._sigma_vec())
        for b in self.config.obs_bodies:
            p = self.human_state.body_positions[self.skeleton.index(b)]
            parts += [p, self._to_ee_frame(p),
                      [float(np.linalg.norm(p - self._ee_p))]]
        truth = np.concatenate([np.asarray(p, dtype=np.float64).reshape(-1) for p in parts])
        if truth.size != self._obs_dim:
            raise ConfigurationError("observation layout size mismatch")
        return truth

    def _observe(self) -> np.ndarray:
        delayed = self._truth_buf[0] if len(self._truth_buf) <= self.config.obs_delay \
            else self._truth_buf[-(self.config.obs_delay + 1)]
        obs = delayed.copy()
        if self.config.eps_obs > 0.0:
            noise = self._rng.uniform(-self.config.eps_obs, self.config.eps_obs,
                                      size=int(self._noise_idx.sum()))
            obs[self._noise_idx] += noise
        return obs

    # -- snapshots ----------------------------------------------------------------------

    def snapshot(self) -> np.ndarray:
        """Flat float64 copy of the full dynamic world state."""
        head = np.array([
            SNAPSHOT_VERSION, self._k, self._t,
            float(self.terminated), float(self.truncated),
            float(self.success_latched), float(self._countdown),
            float(self.sigma_grip), float(self.sigma_target),
            float(self.sigma_contact), float(self.sigma_crit),
            float(self.sigma_col_stat),
            self.counters["contact"], self.counters["crit"],
            self.counters["col_stat"], self.counters["shield_unsafe"],
            self.counters["resamples"],
            0.0 if isinstance(self._driver, ClipReplay) else 1.0,
            float(self._clip_index),
        ])
        parts = [head, self._cur.q, self._cur.q_dot, [self._cur.gripper],
                 self.goal, self.q_goal]
        for name in self.task.object_names:
            o = self.objects[name]
            code = {None: 0.0, "ee": 1.0, "human": 2.0}[o.attached_to]
            parts += [o.position, o.quat, [code, float(o.hand_body)],
                      o.offset_pos, o.offset_quat]
        if isinstance(self._driver, ClipReplay):
            tf, warp = self._driver.transform, self._driver.warp
            parts += [tf.translation, [tf.yaw], tf.pivot,
                      [float(warp.n_sines)], warp.amplitudes, warp.frequencies]
        else:
            parts += [np.zeros(7), [0.0]]
        parts.append(np.asarray(self._fifo, dtype=np.float64))
        hs = self.human_state
        parts += [hs.body_positions.reshape(-1), hs.body_quats.reshape(-1),
                  hs.body_velocities.reshape(-1), [hs.t_active, float(hs.event_pending)]]
        for vec in (self._driver.state_vector(), self.shield.state_vector()):
            parts += [[float(vec.size)], vec]
        parts.append([float(len(self._truth_buf))])
        parts += list(self._truth_buf)
        return np.concatenate([np.asarray(p, dtype=np.float64).reshape(-1) for p in parts])

    def _restore_snapshot(self, vec: np.ndarray):
        cur = _Cursor(vec)
        if cur.take(1)[0] != SNAPSHOT_VERSION:
            raise ConfigurationError("snapshot version mismatch")
        n = self.model.n_joints
        b = self.skeleton.n_bodies
        head = cur.take(18)
        self._k = int(head[0]); self._t = float(head[1])
        self.terminated = bool(head[2]); self.truncated = bool(head[3])
        self.success_latched = bool(head[4]); self._countdown = int(head[5])
        (self.sigma_grip, self.sigma_target, self.sigma_contact,
         self.sigma_crit, self.sigma_col_stat) = [bool(x) for x in head[6:11]]
        self.counters = dict(zip(("contact", "crit", "col_stat", "shield_unsafe", "resamples"),
                                 (int(x) for x in head[11:16])))
        driver_kind = int(head[16])
        self._clip_index = int(head[17])
        expect_kind = 0 if self.config.human_driver == "clip" else 1
        if driver_kind != expect_kind:
            raise ConfigurationError("snapshot human driver does not match configuration")

        q = cur.take(n); qd = cur.take(n); grip = float(cur.take(1)[0])
        if np.any(q < self.model.joint_limits[:, 0]) or np.any(q > self.model.joint_limits[:, 1]) \
                or not 0.0 <= grip <= 1.0:
            raise ConfigurationError("snapshot joint state out of limits")
        self._cur = JointState(q.copy(), qd.copy(), grip)
        self.goal = cur.take(3).copy()
        self.q_goal = cur.take(n).copy()

        self.objects = {}
        for name in self.task.object_names:
            pos = cur.take(3).copy(); quat = cur.take(4).copy()
            code, hand = cur.take(2)
            if code not in (0.0, 1.0, 2.0) or abs(np.linalg.norm(quat) - 1.0) > 1e-6:
                raise ConfigurationError("snapshot object state invalid")
            obj = ObjectState(name, pos, quat,
                              attached_to={0.0: None, 1.0: "ee", 2.0: "human"}[code],
                              hand_body=int(hand))
            obj.offset_pos = cur.take(3).copy()
            obj.offset_quat = cur.take(4).copy()
            self.objects[name] = obj

        if driver_kind == 0:
            trans = cur.take(3).copy(); yaw = float(cur.take(1)[0]); pivot = cur.take(3).copy()
            n_sines = int(cur.take(1)[0])
            amps = cur.take(n_sines).copy(); freqs = cur.take(n_sines).copy()
            if not 0 <= self._clip_index < len(self.clips):
                raise ConfigurationError("snapshot clip index out of range")
            warp = IdleWarpParams(amps, freqs) if n_sines else IdleWarpParams.none()
            self._driver = ClipReplay(self.skeleton, self.clips[self._clip_index],
                                      StartTransform(trans, yaw, pivot), warp, dt=DT_SIM)
        else:
            cur.take(8)
            self._driver = PursuitHuman(self.skeleton, self._pursuit_start, dt=DT_SIM)

        self._fifo = deque(cur.take(self.reward_delay).tolist())
        hp = cur.take(3 * b).reshape(b, 3).copy()
        hq = cur.take(4 * b).reshape(b, 4).copy()
        hv = cur.take(3 * b).reshape(b, 3).copy()
        t_active, pending = cur.take(2)
        self.human_state = HumanState(hp, hq, hv, float(t_active), bool(pending))

        for restore in (self._driver.restore_state_vector, self.shield.restore_state_vector):
            size = int(cur.take(1)[0])
            restore(cur.take(size))
        n_truth = int(cur.take(1)[0])
        self._truth_buf = deque(maxlen=self.config.obs_delay + 1)
        for _ in range(n_truth):
            self._truth_buf.append(cur.take(self._obs_dim).copy())
        cur.finish()
        self._refresh_ee()


class _Cursor:
    """Sequential reader over a flat snapshot with hard bounds checks."""

    def __init__(self, vec: np.ndarray):
        self.vec = vec
        self.pos = 0

    def take(self, k: int) -> np.ndarray:
        if k < 0 or self.pos + k > self.vec.size:
            raise ConfigurationError("snapshot truncated or malformed")
        out = self.vec[self.pos:self.pos + k]
        self.pos += k
        return out

    def finish(self):
        if self.pos != self.vec.size:
            raise ConfigurationError("snapshot has trailing data")
