"""Reference task definitions.

A task owns the scene (objects, obstacles, goals), the reward, the
success/termination predicates and the wiring of the human clip's
gating event.  Tasks read world state through the environment instance
passed to every hook; all mutable episode state lives in the env so
snapshots stay in one place.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .geometry import Capsule

GOAL_RADIUS = 0.05          # meters; success thresholds for reach/place
TRANSFER_RADIUS = 0.10      # meters; handover release distance
TILT_MAX = 0.35             # radians; lifting failure threshold
LIFT_ANCHOR_X = 0.27        # board robot-end horizontal anchor
HANG_DEPTH = 0.10           # meters the handover package hangs below the grip
PRESENT_DIST = 0.13         # grip-to-hand distance at the handover pose
PRESENT_TILT = np.radians(40.0)  # presentation offset tilt back toward the robot


class Task:
    name = "task"
    shield_mode = "ssm"
    reward_kind = "dense"
    reward_delay = 0
    clip_template = "reach_over_table"
    human_base = (1.15, 0.0, 0.70)
    human_facing = np.pi
    object_names = ()
    obstacles = ()

    def clip_params(self):
        from .human import SynthClipParams
        return SynthClipParams(base=self.human_base, facing=self.human_facing)

    def setup(self, env, rng):
        """Sample the episode's initial scene into env fields."""
        raise NotImplementedError

    def event_predicates(self, env):
        """Names of clip-gating events currently true."""
        return set()

    def target_predicate(self, env) -> bool:
        """Ground-truth value of the task-fulfilled flag."""
        return False

    def reward(self, env) -> float:
        raise NotImplementedError

    def success(self, env) -> bool:
        raise NotImplementedError

    def failed(self, env) -> bool:
        return False

    def uses_object_block(self) -> bool:
        return bool(self.object_names)

    def extra_obs_layout(self):
        """((name, size, noised), ...) appended to the task block."""
        return ()

    def extra_obs_values(self, env) -> np.ndarray:
        return np.zeros(0)


class ReachTask(Task):
    """Drive the end effector to a point goal; dense negative-distance
    reward, terminates on success."""

    name = "reach"
    goal_box = (np.array([0.35, -0.35, 0.15]), np.array([0.60, 0.35, 0.45]))

    def setup(self, env, rng):
        lo, hi = self.goal_box
        env.goal = rng.uniform(lo, hi)
        for _ in range(20):
            jitter = rng.uniform(-0.1, 0.1, size=env.model.n_joints)
            q0 = env.model.clamp_q(env.home_q + jitter)
            if env.q_collision_free(q0):
                break
        else:
            q0 = env.home_q.copy()
        env.start_q = q0

    def event_predicates(self, env):
        return {"goal_reached"} if env.success_latched or self.target_predicate(env) else set()

    def target_predicate(self, env) -> bool:
        return env.goal_distance() < GOAL_RADIUS

    def reward(self, env) -> float:
        return -env.goal_distance()

    def success(self, env) -> bool:
        return env.sigma_target


class PickPlaceTask(Task):
    """Grasp the object at the pick point and release it at the place
    goal; single sparse reward on delivery."""

    name = "pick_place"
    reward_kind = "sparse"
    object_names = ("payload",)
    pick_point = np.array([0.45, -0.25, 0.03])
    place_box = (np.array([0.40, 0.15, 0.02]), np.array([0.50, 0.30, 0.04]))
    obstacles = (Capsule([0.25, 0.0, 0.05], [0.65, 0.0, 0.05], 0.03),)

    def setup(self, env, rng):
        lo, hi = self.place_box
        env.goal = rng.uniform(lo, hi)
        pick = self.pick_point + np.concatenate([rng.uniform(-0.02, 0.02, 2), [0.0]])
        env.objects["payload"].position[:] = pick
        env.start_q = env.home_q.copy()

    def event_predicates(self, env):
        return {"goal_reached"} if env.sigma_grip or env.success_latched else set()

    def target_predicate(self, env) -> bool:
        obj = env.objects["payload"]
        return obj.attached_to is None and \
            float(np.linalg.norm(obj.position - env.goal)) < GOAL_RADIUS

    def reward(self, env) -> float:
        return 1.0 if env.sigma_target and not env.success_latched else 0.0

    def success(self, env) -> bool:
        return env.sigma_target


class CollaborativeLiftingTask(Task):
    """Keep a board level while the human partner raises and lowers the
    far end; dense reward proportional to levelness, fails when the
    board tips past the limit."""

    name = "collaborative_lifting"
    clip_template = "lift_partner"
    human_base = (1.05, 0.0, 0.60)
    tilt_max = TILT_MAX

    def clip_params(self):
        from .human import SynthClipParams
        return SynthClipParams(base=self.human_base, facing=self.human_facing, lift_height=0.20)

    def setup(self, env, rng):
        # start holding the board level with the human grip points
        grip_z = env.human_grip_midpoint()[2]
        from .kinematics import inverse_kinematics
        from .errors import UnreachableTargetError
        anchor = np.array([LIFT_ANCHOR_X, 0.0, grip_z])
        try:
            env.start_q = inverse_kinematics(env.model, anchor, env.home_q)
        except UnreachableTargetError as err:
            env.start_q = err.best_q
        env.goal = anchor

    def board_tilt(self, env) -> float:
        near = env.ee_pos()
        far = env.human_grip_midpoint()
        dz = far[2] - near[2]
        dxy = float(np.linalg.norm(far[:2] - near[:2]))
        return float(np.arctan2(abs(dz), max(dxy, 1e-9)))

    def event_predicates(self, env):
        return {"lift_started"} if self.board_tilt(env) <= 0.5 * self.tilt_max else set()

    def reward(self, env) -> float:
        return 1.0 - self.board_tilt(env) / self.tilt_max

    def success(self, env) -> bool:
        return False  # success = surviving to the horizon; env handles it

    def failed(self, env) -> bool:
        return self.board_tilt(env) > self.tilt_max

    def extra_obs_layout(self):
        return (("tilt", 1, True), ("board_far_end", 3, True))

    def extra_obs_values(self, env) -> np.ndarray:
        return np.concatenate([[self.board_tilt(env)], env.human_grip_midpoint()])


class HandoverTask(Task):
    """Bring the held object to the human's receiving hand and release
    it there; sparse delayed reward, PFL mode.

    The package hangs below the grip point, so the arm itself can stay
    clear of the guarded region around the hand while the payload enters
    the transfer radius."""

    name = "handover"
    shield_mode = "pfl"
    reward_kind = "sparse"
    reward_delay = 2
    clip_template = "receive_object"
    human_base = (0.90, 0.0, 0.58)
    object_names = ("package",)
    transfer_radius = TRANSFER_RADIUS
    hang_offset = (0.0, 0.0, -HANG_DEPTH)
    # presentation pose: grip point offset from the receiving hand, tilted
    # back toward the robot so the wrist stays reachable and outside the
    # hand's safety envelope while the hanging payload dips inside it
    present_offset = (-PRESENT_DIST * np.sin(PRESENT_TILT), 0.0,
                      PRESENT_DIST * np.cos(PRESENT_TILT))
    # when the receiving hand sits high or far the tilted pose leaves the
    # arm's dexterous workspace; fall back to offering the payload along
    # the shoulder-to-hand ray, which minimizes end-effector stretch while
    # keeping the payload inside the transfer radius
    present_z_cap = 0.955
    present_ray_dist = 0.080

    def setup(self, env, rng):
        env.start_q = env.home_q.copy()
        env.objects["package"].position[:] = env.ee_pos_at(env.start_q) + self.hang_offset
        env.objects["package"].attached_to = "ee"
        env.start_gripper = 0.0   # holding the package
        env.goal = env.receive_hand_pos()

    def present_point(self, env) -> np.ndarray:
        """Where to park the grip point before releasing."""
        hand = env.receive_hand_pos()
        p = hand + self.present_offset
        if p[2] > self.present_z_cap:
            shoulder = np.array([0.0, 0.0, env.model.dh[0, 2]])
            ray = hand - shoulder
            obj = hand - self.present_ray_dist * ray / np.linalg.norm(ray)
            p = obj - self.hang_offset
        return p

    def event_predicates(self, env):
        return {"object_placed"} if env.success_latched or self.target_predicate(env) else set()

    def target_predicate(self, env) -> bool:
        return env.objects["package"].attached_to == "human"

    def reward(self, env) -> float:
        return 1.0 if env.sigma_target and not env.success_latched else 0.0

    def success(self, env) -> bool:
        return env.sigma_target


_TASKS = {
    t.name: t for t in (ReachTask, PickPlaceTask, CollaborativeLiftingTask, HandoverTask)
}


def task_library():
    return dict(_TASKS)


def make_task(name: str) -> Task:
    if name not in _TASKS:
        raise ConfigurationError(f"unknown task {name!r}; known: {sorted(_TASKS)}")
    return _TASKS[name]()
