"""Human skeleton, motion clips, replay with idle-phase time warping, and
synthetic clip generation.

Clip files are plain text: a header (task, clip_id, frame_rate, bodies,
one ``idle:`` line per idle window), a ``data:`` marker, then one row per
frame holding the time followed by x y z qw qx qy qz for every body.
Floats are written with repr-exact precision so save/load round-trips
bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .geometry import Capsule

# speed caps shared with the safety layer's reachability bound
V_MAX_LIMB = 2.0     # m/s, hands and arms
V_MAX_TRUNK = 1.0    # m/s, head, torso, pelvis

CLIP_FRAME_RATE = 120.0

# per-episode warp parameter ranges
WARP_SINE_COUNTS = (2, 3)
WARP_AMP_RANGE = (0.05, 0.3)    # seconds
WARP_FREQ_RANGE = (0.5, 3.0)    # rad/s

START_POS_RADIUS = 0.05   # m
START_YAW_RADIUS = 0.1    # rad


# ---------------------------------------------------------------------------
# quaternion helpers, (w,x,y,z) order


def _quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def _quat_rotate(q, v):
    # v + 2 w (u x v) + 2 u x (u x v), u = q vector part
    u = q[..., 1:]
    w = q[..., :1]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def _quat_about_z(angle):
    return np.array([math.cos(angle / 2), 0.0, 0.0, math.sin(angle / 2)])


def _quat_align_x(direction):
    """Quaternion rotating the local +x axis onto `direction`."""
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d)
    if norm < 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    d = d / norm
    c = d[0]  # cos of angle to +x
    if c > 1.0 - 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    if c < -1.0 + 1e-12:
        return np.array([0.0, 0.0, 0.0, 1.0])  # 180 deg about z
    axis = np.cross([1.0, 0.0, 0.0], d)
    axis = axis / np.linalg.norm(axis)
    half = math.acos(max(-1.0, min(1.0, c))) / 2
    return np.concatenate([[math.cos(half)], math.sin(half) * axis])


def _slerp(q0, q1, u):
    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-10:
        out = q0 + u * (q1 - q0)
        return out / np.linalg.norm(out)
    th = math.acos(min(1.0, d))
    s = math.sin(th)
    return (math.sin((1 - u) * th) / s) * q0 + (math.sin(u * th) / s) * q1


# ---------------------------------------------------------------------------
# skeleton


@dataclass(frozen=True)
class BodyDef:
    name: str
    parent: str            # "" for the root
    capsule: Capsule       # body-local frame
    v_max: float           # m/s cap used by validation and the safety layer


@dataclass(frozen=True)
class HumanSkeleton:
    bodies: tuple

    def __post_init__(self):
        names = [b.name for b in self.bodies]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate body names in skeleton")
        for b in self.bodies:
            if b.parent and b.parent not in names:
                raise ConfigurationError(f"unknown parent {b.parent!r} for body {b.name!r}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @property
    def n_bodies(self) -> int:
        return len(self.bodies)

    @property
    def body_names(self) -> tuple:
        return tuple(b.name for b in self.bodies)

    def index(self, name: str) -> int:
        return self._index[name]

    def v_max_array(self) -> np.ndarray:
        return np.array([b.v_max for b in self.bodies])

    def local_capsules(self) -> np.ndarray:
        return np.stack([b.capsule.packed() for b in self.bodies])


def default_skeleton() -> HumanSkeleton:
    def cap(a, b, r):
        return Capsule(np.array(a, dtype=float), np.array(b, dtype=float), r)

    bodies = (
        BodyDef("pelvis", "", cap([0, 0, -0.10], [0, 0, 0.10], 0.12), V_MAX_TRUNK),
        BodyDef("torso", "pelvis", cap([0, 0, -0.22], [0, 0, 0.22], 0.13), V_MAX_TRUNK),
        BodyDef("head", "torso", cap([0, 0, 0], [0, 0, 0], 0.11), V_MAX_TRUNK),
        BodyDef("left_upper_arm", "torso", cap([0, 0, 0], [0.30, 0, 0], 0.05), V_MAX_LIMB),
        BodyDef("left_forearm", "left_upper_arm", cap([0, 0, 0], [0.27, 0, 0], 0.04), V_MAX_LIMB),
        BodyDef("left_hand", "left_forearm", cap([0, 0, 0], [0, 0, 0], 0.05), V_MAX_LIMB),
        BodyDef("right_upper_arm", "torso", cap([0, 0, 0], [0.30, 0, 0], 0.05), V_MAX_LIMB),
        BodyDef("right_forearm", "right_upper_arm", cap([0, 0, 0], [0.27, 0, 0], 0.04), V_MAX_LIMB),
        BodyDef("right_hand", "right_forearm", cap([0, 0, 0], [0, 0, 0], 0.05), V_MAX_LIMB),
    )
    return HumanSkeleton(bodies)


def world_capsules(skeleton: HumanSkeleton, positions, quats) -> np.ndarray:
    """Packed (B,7) world capsules from per-body poses."""
    local = skeleton.local_capsules()
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    quats = np.asarray(quats, dtype=np.float64).reshape(-1, 4)
    out = np.empty((skeleton.n_bodies, 7))
    out[:, 0:3] = _quat_rotate(quats, local[:, 0:3]) + positions
    out[:, 3:6] = _quat_rotate(quats, local[:, 3:6]) + positions
    out[:, 6] = local[:, 6]
    return out


# ---------------------------------------------------------------------------
# motion clips


@dataclass(frozen=True)
class MotionClip:
    task: str
    clip_id: str
    frame_rate: float
    body_names: tuple
    positions: np.ndarray       # (F,B,3)
    quats: np.ndarray           # (F,B,4)
    idle_windows: tuple         # ((start_frame, end_frame), ...)
    event_slots: tuple          # one predicate name per idle window

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        qt = np.asarray(self.quats, dtype=np.float64)
        F, B = pos.shape[0], pos.shape[1]
        if pos.shape != (F, B, 3) or qt.shape != (F, B, 4):
            raise ConfigurationError("positions must be (F,B,3) and quats (F,B,4)")
        if len(self.body_names) != B:
            raise ConfigurationError("body name count does not match pose arrays")
        if not self.frame_rate > 0:
            raise ConfigurationError("frame rate must be positive")
        wins = tuple((int(s), int(e)) for s, e in self.idle_windows)
        if len(self.event_slots) != len(wins):
            raise ConfigurationError("need exactly one event slot per idle window")
        prev_end = -1
        for s, e in wins:
            if not (0 <= s < e < F):
                raise ConfigurationError(f"idle window ({s},{e}) outside clip of {F} frames")
            if s <= prev_end:
                raise ConfigurationError("idle windows must be ordered and non-overlapping")
            prev_end = e
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "quats", qt)
        object.__setattr__(self, "idle_windows", wins)
        object.__setattr__(self, "event_slots", tuple(self.event_slots))

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def duration(self) -> float:
        return (self.n_frames - 1) / self.frame_rate

    def idle_window_times(self) -> tuple:
        return tuple((s / self.frame_rate, e / self.frame_rate) for s, e in self.idle_windows)

    def pose_at(self, t: float):
        """Linear/spherical interpolation at clip time t, clamped to bounds."""
        ft = min(max(t, 0.0), self.duration) * self.frame_rate
        i0 = min(int(math.floor(ft)), self.n_frames - 1)
        i1 = min(i0 + 1, self.n_frames - 1)
        u = ft - i0
        if i1 == i0 or u <= 0.0:
            return self.positions[i0].copy(), self.quats[i0].copy()
        pos = (1.0 - u) * self.positions[i0] + u * self.positions[i1]
        qt = np.stack([
            _slerp(self.quats[i0, b], self.quats[i1, b], u)
            for b in range(self.positions.shape[1])
        ])
        return pos, qt


def save_clip(clip: MotionClip, path):
    lines = ["# motion clip"]
    lines.append(f"task: {clip.task}")
    lines.append(f"clip_id: {clip.clip_id}")
    lines.append(f"frame_rate: {clip.frame_rate:.17g}")
    lines.append("bodies: " + " ".join(clip.body_names))
    for (s, e), slot in zip(clip.idle_windows, clip.event_slots):
        lines.append(f"idle: {s} {e} {slot}")
    lines.append("data:")
    F, B = clip.positions.shape[0], clip.positions.shape[1]
    dt = 1.0 / clip.frame_rate
    for f in range(F):
        row = [f"{f * dt:.17g}"]
        for b in range(B):
            row.extend(f"{v:.17g}" for v in clip.positions[f, b])
            row.extend(f"{v:.17g}" for v in clip.quats[f, b])
        lines.append(" ".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_clip(path) -> MotionClip:
    header = {"task": "", "clip_id": ""}
    idle, slots, rows = [], [], []
    body_names = ()
    frame_rate = 0.0
    in_data = False
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if in_data:
                rows.append(np.array(line.split(), dtype=np.float64))
                continue
            if line == "data:":
                in_data = True
                continue
            key, _, val = line.partition(":")
            val = val.strip()
            if key == "bodies":
                body_names = tuple(val.split())
            elif key == "frame_rate":
                frame_rate = float(val)
            elif key == "idle":
                parts = val.split()
                idle.append((int(parts[0]), int(parts[1])))
                slots.append(parts[2])
            elif key in header:
                header[key] = val
    if not body_names or not rows:
        raise ConfigurationError(f"malformed clip file {path}")
    B = len(body_names)
    data = np.stack(rows)
    if data.shape[1] != 1 + 7 * B:
        raise ConfigurationError(f"clip rows have {data.shape[1]} columns, expected {1 + 7 * B}")
    per = data[:, 1:].reshape(-1, B, 7)
    return MotionClip(header["task"], header["clip_id"], frame_rate, body_names,
                      per[:, :, 0:3].copy(), per[:, :, 3:7].copy(), tuple(idle), tuple(slots))


def clip_endpoint_tracks(clip: MotionClip, skeleton: HumanSkeleton):
    """(F,B,3) world positions of both capsule endpoints per body."""
    local = skeleton.local_capsules()
    a = _quat_rotate(clip.quats, local[None, :, 0:3]) + clip.positions
    b = _quat_rotate(clip.quats, local[None, :, 3:6]) + clip.positions
    return a, b


def validate_clip(clip: MotionClip, skeleton: HumanSkeleton) -> dict:
    """Structural and speed checks; returns a summary dict.

    Idle windows must be stationary: replay may both re-traverse them at
    warped rate and snap back to the window start when the gating event
    fires, so any real motion inside one would break the speed cap.
    """
    if tuple(clip.body_names) != skeleton.body_names:
        raise ConfigurationError("clip bodies do not match skeleton")
    a, b = clip_endpoint_tracks(clip, skeleton)
    dt = 1.0 / clip.frame_rate
    speed = np.maximum(
        np.linalg.norm(np.diff(a, axis=0), axis=2),
        np.linalg.norm(np.diff(b, axis=0), axis=2),
    ) / dt                                        # (F-1,B)
    v_max = skeleton.v_max_array()
    if np.any(speed > v_max[None, :] + 1e-9):
        worst = np.unravel_index(int(np.argmax(speed / v_max[None, :])), speed.shape)
        raise ConfigurationError(
            f"body {clip.body_names[worst[1]]} moves at {speed[worst]:.3f} m/s "
            f"over cap {v_max[worst[1]]:.3f} at frame {worst[0]}")
    for (s, e) in clip.idle_windows:
        if np.any(speed[s:e] > 1e-9):
            raise ConfigurationError(f"idle window ({s},{e}) is not stationary")
    return {
        "task": clip.task,
        "clip_id": clip.clip_id,
        "frames": clip.n_frames,
        "duration": clip.duration,
        "bodies": len(clip.body_names),
        "idle_windows": list(clip.idle_windows),
        "event_slots": list(clip.event_slots),
        "max_speed": float(speed.max()) if speed.size else 0.0,
    }


# ---------------------------------------------------------------------------
# idle-phase time warping


@dataclass(frozen=True)
class IdleWarpParams:
    amplitudes: np.ndarray   # seconds
    frequencies: np.ndarray  # rad/s

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.float64).reshape(-1)
        freq = np.asarray(self.frequencies, dtype=np.float64).reshape(-1)
        if amp.size < 1 or amp.size != freq.size:
            raise ConfigurationError("need matching, non-empty amplitude/frequency lists")
        if np.any(amp < 0) or np.any(freq <= 0):
            raise ConfigurationError("amplitudes must be >= 0 and frequencies > 0")
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "frequencies", freq)

    @property
    def n_sines(self) -> int:
        return self.amplitudes.size

    @property
    def total_amplitude(self) -> float:
        return float(self.amplitudes.sum())

    @staticmethod
    def none() -> "IdleWarpParams":
        return IdleWarpParams(np.zeros(1), np.ones(1))


def warp_time(t: float, t_idle: float, params: IdleWarpParams, event_fired: bool) -> float:
    """Active clip time: identity before the idle keyframe or once the
    gating event fired, otherwise a bounded sum-of-sines oscillation
    around the keyframe (so replay can locally run backward)."""
    if t <= t_idle or event_fired:
        return t
    s = (t - t_idle) * params.frequencies
    return t_idle + float(np.dot(params.amplitudes, np.sin(s)))


@dataclass(frozen=True)
class StartTransform:
    """Small rigid perturbation: yaw about a vertical axis through `pivot`,
    then a translation."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    pivot: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        object.__setattr__(self, "pivot", np.asarray(self.pivot, dtype=np.float64).reshape(3))
        object.__setattr__(self, "yaw", float(self.yaw))

    def apply(self, positions, quats):
        qz = _quat_about_z(self.yaw)
        pos = _quat_rotate(qz[None, :], positions - self.pivot) + self.pivot + self.translation
        qt = np.stack([_quat_mul(qz, q) for q in quats])
        return pos, qt


def sample_clip(clips, rng, r_pos: float = START_POS_RADIUS, r_yaw: float = START_YAW_RADIUS):
    """Per-episode draw: uniform clip choice, start-pose perturbation and
    idle-warp parameters.  Deterministic given the generator state."""
    if len(clips) == 0:
        raise ConfigurationError("no clips to sample from")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    clip = clips[int(rng.integers(len(clips)))]
    trans = rng.uniform(-r_pos, r_pos, size=3)
    yaw = float(rng.uniform(-r_yaw, r_yaw))
    pivot = clip.positions[0, 0].copy()  # first body's start point (root)
    tf = StartTransform(trans, yaw, pivot)
    n = int(rng.integers(WARP_SINE_COUNTS[0], WARP_SINE_COUNTS[-1] + 1))
    amp = rng.uniform(*WARP_AMP_RANGE, size=n)
    freq = rng.uniform(*WARP_FREQ_RANGE, size=n)
    windows = clip.idle_window_times()
    if windows:
        cap = min(e - s for s, e in windows)
        total = amp.sum()
        if total > cap:
            amp *= cap / total
    return clip, tf, IdleWarpParams(amp, freq)


# ---------------------------------------------------------------------------
# replay


@dataclass
class HumanState:
    body_positions: np.ndarray   # (B,3)
    body_quats: np.ndarray       # (B,4)
    body_velocities: np.ndarray  # (B,3) finite difference
    t_active: float
    event_pending: bool

    def capsules(self, skeleton: HumanSkeleton) -> np.ndarray:
        return world_capsules(skeleton, self.body_positions, self.body_quats)


class ClipReplay:
    """Plays a MotionClip against wall-clock time.

    Idle windows freeze progress (modulo the sum-of-sines warp) until
    their gating predicate is reported true, at which point linear
    replay resumes from the window start via a wall-clock offset.
    """

    def __init__(self, skeleton: HumanSkeleton, clip: MotionClip,
                 start_transform: StartTransform = None,
                 warp: IdleWarpParams = None, dt: float = 0.008):
        if tuple(clip.body_names) != skeleton.body_names:
            raise ConfigurationError("clip bodies do not match skeleton")
        self.skeleton = skeleton
        self.clip = clip
        self.transform = start_transform if start_transform is not None else StartTransform()
        self.warp = warp if warp is not None else IdleWarpParams.none()
        self.dt = float(dt)
        self._window_times = clip.idle_window_times()
        self.reset()

    def reset(self):
        self._offset = 0.0
        self._fired = [False] * len(self._window_times)
        self._prev_pos = None

    # -- snapshot support -------------------------------------------------

    def state_vector(self) -> np.ndarray:
        prev = self._prev_pos
        flat = np.full(self.skeleton.n_bodies * 3, np.nan) if prev is None else prev.reshape(-1)
        return np.concatenate([[self._offset, float(prev is not None)],
                               np.array(self._fired, dtype=np.float64), flat])

    def restore_state_vector(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        nw = len(self._window_times)
        self._offset = float(vec[0])
        has_prev = vec[1] != 0.0
        self._fired = [bool(v) for v in vec[2:2 + nw]]
        self._prev_pos = vec[2 + nw:].reshape(-1, 3).copy() if has_prev else None

    # ----------------------------------------------------------------------

    def _active_window(self, tau: float):
        for w, (ts, _te) in enumerate(self._window_times):
            if self._fired[w]:
                continue
            if tau >= ts:
                return w
            break  # windows are ordered; an unfired future window blocks none
        return None

    def advance(self, wall_time: float, events=()) -> HumanState:
        if isinstance(events, bool):
            fired_now = events
            events = ()
        else:
            fired_now = None
        tau = wall_time - self._offset
        w = self._active_window(tau)
        pending = False
        if w is None:
            t_active = tau
        else:
            ts = self._window_times[w][0]
            hit = fired_now if fired_now is not None else (self.clip.event_slots[w] in events)
            if hit:
                self._fired[w] = True
                self._offset = wall_time - ts
                t_active = ts
            else:
                t_active = warp_time(tau, ts, self.warp, False)
                pending = True
        pos, qt = self.clip.pose_at(t_active)
        pos, qt = self.transform.apply(pos, qt)
        if self._prev_pos is None:
            vel = np.zeros_like(pos)
        else:
            vel = (pos - self._prev_pos) / self.dt
        self._prev_pos = pos.copy()
        return HumanState(pos, qt, vel, t_active, pending)


class PursuitHuman:
    """Adversarial stand-in driver: every body runs at its speed cap
    straight toward the nearest point of the robot.  Used to stress the
    safety layer; ignores events and clips entirely."""

    def __init__(self, skeleton: HumanSkeleton, start_positions, dt: float = 0.008):
        self.skeleton = skeleton
        self.dt = float(dt)
        self._start = np.asarray(start_positions, dtype=np.float64).reshape(skeleton.n_bodies, 3).copy()
        self._quats = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (skeleton.n_bodies, 1))
        self._robot_caps = None
        self.reset()

    def reset(self):
        self._pos = self._start.copy()
        self._prev_pos = None

    def observe_robot(self, robot_capsules_packed):
        self._robot_caps = np.asarray(robot_capsules_packed, dtype=np.float64).reshape(-1, 7)

    def state_vector(self) -> np.ndarray:
        prev = self._prev_pos
        flat = np.full(self._pos.size, np.nan) if prev is None else prev.reshape(-1)
        return np.concatenate([[float(prev is not None)], self._pos.reshape(-1), flat])

    def restore_state_vector(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        n = self._pos.size
        has_prev = vec[0] != 0.0
        self._pos = vec[1:1 + n].reshape(-1, 3).copy()
        self._prev_pos = vec[1 + n:].reshape(-1, 3).copy() if has_prev else None

    def _nearest_robot_points(self, points):
        if self._robot_caps is None or self._robot_caps.shape[0] == 0:
            return points
        a = self._robot_caps[:, 0:3]
        ab = self._robot_caps[:, 3:6] - a
        denom = np.einsum("ij,ij->i", ab, ab)
        out = np.empty_like(points)
        for i, p in enumerate(points):
            t = np.where(denom > 1e-12, np.einsum("ij,j->i", ab, p) - np.einsum("ij,ij->i", ab, a), 0.0)
            t = np.clip(np.where(denom > 1e-12, t / np.where(denom > 1e-12, denom, 1.0), 0.0), 0.0, 1.0)
            cand = a + ab * t[:, None]
            out[i] = cand[int(np.argmin(np.linalg.norm(cand - p, axis=1)))]
        return out

    def advance(self, wall_time: float, events=()) -> HumanState:
        target = self._nearest_robot_points(self._pos)
        delta = target - self._pos
        dist = np.linalg.norm(delta, axis=1)
        step = np.minimum(self.skeleton.v_max_array() * self.dt, dist)
        move = np.where(dist[:, None] > 1e-12, delta / np.where(dist[:, None] > 1e-12, dist[:, None], 1.0), 0.0)
        self._pos = self._pos + move * step[:, None]
        if self._prev_pos is None:
            vel = np.zeros_like(self._pos)
        else:
            vel = (self._pos - self._prev_pos) / self.dt
        self._prev_pos = self._pos.copy()
        return HumanState(self._pos.copy(), self._quats.copy(), vel, wall_time, False)


# ---------------------------------------------------------------------------
# synthetic clip generation

TEMPLATE_EVENTS = {
    "reach_over_table": "goal_reached",
    "present_object": "object_taken",
    "receive_object": "object_placed",
    "lift_partner": "lift_started",
}

_ARM_UPPER = 0.30
_ARM_FORE = 0.27
# canonical skeleton layout (person at origin facing +x)
_TORSO_LIFT = np.array([0.0, 0.0, 0.40])
_HEAD_LIFT = np.array([0.0, 0.0, 0.78])
_SHOULDER = {"left": np.array([0.0, 0.22, 0.58]), "right": np.array([0.0, -0.22, 0.58])}
_HAND_REST = {"left": np.array([0.08, 0.30, 0.10]), "right": np.array([0.08, -0.30, 0.10])}


@dataclass(frozen=True)
class SynthClipParams:
    base: tuple = (1.05, 0.0, 0.70)   # pelvis world position
    facing: float = math.pi            # yaw; pi faces the world -x direction
    hold: float = 1.5                  # idle hold length, seconds
    move_time: float = 1.6             # transfer segment length, seconds
    lift_height: float = 0.30
    amplitude_scale: float = 1.0       # 0 freezes the whole clip at rest
    jitter: float = 0.03               # waypoint randomization, meters


def _ease_track(knot_times, knot_values, t):
    """Piecewise cosine-eased interpolation; flat segments stay bitwise flat."""
    values = np.asarray(knot_values, dtype=np.float64)
    if t <= knot_times[0]:
        return values[0].copy()
    if t >= knot_times[-1]:
        return values[-1].copy()
    k = int(np.searchsorted(knot_times, t, side="right")) - 1
    t0, t1 = knot_times[k], knot_times[k + 1]
    p0, p1 = values[k], values[k + 1]
    u = (t - t0) / (t1 - t0)
    s = 0.5 * (1.0 - math.cos(math.pi * u))
    return p0 + (p1 - p0) * s


def _arm_chain(shoulder, hand, side_sign):
    """Elbow point for a two-segment arm, bending down and outward."""
    d = hand - shoulder
    r = float(np.linalg.norm(d))
    lo = abs(_ARM_UPPER - _ARM_FORE) + 1e-6
    hi = _ARM_UPPER + _ARM_FORE - 1e-6
    r_eff = min(max(r, lo), hi)
    dhat = d / r if r > 1e-12 else np.array([1.0, 0.0, 0.0])
    eff_hand = shoulder + dhat * r_eff
    a = (_ARM_UPPER ** 2 - _ARM_FORE ** 2 + r_eff ** 2) / (2.0 * r_eff)
    h = math.sqrt(max(_ARM_UPPER ** 2 - a ** 2, 0.0))
    bend = np.array([-0.3, 0.5 * side_sign, -1.0])
    u = bend - np.dot(bend, dhat) * dhat
    un = np.linalg.norm(u)
    if un < 1e-9:
        u = np.array([-1.0, 0.0, 0.0]) - dhat * np.dot([-1.0, 0.0, 0.0], dhat)
        un = np.linalg.norm(u)
    u = u / un
    elbow = shoulder + a * dhat + h * u
    return elbow, eff_hand


def generate_synthetic_clip(template: str, params: SynthClipParams = None,
                            rng_seed: int = 0) -> MotionClip:
    """Deterministic parametric stand-in for a recorded human motion.

    Every template produces eased waypoint motion with one exactly
    stationary idle window gated by a template-specific event.  Speeds
    are validated against the skeleton caps before returning.
    """
    if template not in TEMPLATE_EVENTS:
        raise ConfigurationError(f"unknown template {template!r}")
    p = params if params is not None else SynthClipParams()
    rng = np.random.default_rng(rng_seed)
    fps = CLIP_FRAME_RATE
    scale = float(p.amplitude_scale)

    def frames(seconds):
        return max(int(round(seconds * fps)), 1)

    jit = lambda: rng.uniform(-p.jitter, p.jitter, size=3) * scale
    hold_s = p.hold + float(rng.uniform(0.0, 0.4))
    move_f = frames(p.move_time + float(rng.uniform(-0.2, 0.2)))
    hold_f = frames(hold_s)
    settle_f = frames(0.8)

    rest_r = _HAND_REST["right"]
    rest_l = _HAND_REST["left"]
    zero3 = np.zeros(3)

    # per-track knots: (frame counts between knots, value list); all tracks
    # share the same knot frames so idle windows freeze everything at once
    if template in ("reach_over_table", "present_object", "receive_object"):
        target = {
            "reach_over_table": np.array([0.45, -0.12, 0.25]),
            "present_object": np.array([0.42, -0.08, 0.28]),
            "receive_object": np.array([0.42, -0.10, 0.26]),
        }[template]
        tgt = rest_r + (target - rest_r) * scale + jit()
        lean = np.array([0.05, 0.0, -0.01]) * scale
        seg_frames = [move_f, hold_f, move_f, settle_f]
        rh = [rest_r, tgt, tgt, rest_r, rest_r]
        lh = [rest_l] * 5
        shift = [zero3, lean, lean, zero3, zero3]
        idle_seg = 1
    else:  # lift_partner
        grip_r = rest_r + (np.array([0.28, -0.22, 0.18]) - rest_r) * scale + jit()
        grip_l = rest_l + (np.array([0.28, 0.22, 0.18]) - rest_l) * scale + jit()
        up = np.array([0.0, 0.0, p.lift_height]) * scale
        sway = np.array([0.0, 0.0, 0.05]) * scale
        rise_f = frames(2.0)
        sway_f = frames(1.0)
        seg_frames = [move_f, hold_f, rise_f, sway_f, sway_f, sway_f, sway_f, rise_f, settle_f]
        rh = [rest_r, grip_r, grip_r, grip_r + up, grip_r + up + sway, grip_r + up - sway,
              grip_r + up + sway, grip_r + up, grip_r, rest_r]
        lh = [rest_l, grip_l, grip_l, grip_l + up, grip_l + up + sway, grip_l + up - sway,
              grip_l + up + sway, grip_l + up, grip_l, rest_l]
        tor = np.array([0.0, 0.0, 0.5]) * up
        shift = [zero3, zero3, zero3, tor, tor, tor, tor, tor, zero3, zero3]
        idle_seg = 1

    knot_frames = np.concatenate([[0], np.cumsum(seg_frames)])
    knot_times = knot_frames / fps
    total_f = int(knot_frames[-1])
    idle_window = (int(knot_frames[idle_seg]), int(knot_frames[idle_seg + 1]))

    skel = default_skeleton()
    names = skel.body_names
    F = total_f + 1
    B = skel.n_bodies
    pos = np.zeros((F, B, 3))
    qt = np.zeros((F, B, 4))
    qt[:, :, 0] = 1.0

    q_face = _quat_about_z(p.facing)
    base = np.asarray(p.base, dtype=np.float64)

    def to_world(pt):
        return _quat_rotate(q_face[None, :], pt[None, :])[0] + base

    i = {n: skel.index(n) for n in names}
    for f in range(F):
        t = f / fps
        sh = _ease_track(knot_times, shift, t)
        hand_r = _ease_track(knot_times, rh, t)
        hand_l = _ease_track(knot_times, lh, t)
        trunk = {
            "pelvis": sh * 0.3,
            "torso": _TORSO_LIFT + sh,
            "head": _HEAD_LIFT + sh,
        }
        for nm, cpos in trunk.items():
            pos[f, i[nm]] = to_world(cpos)
        for side, sign, hand in (("left", 1.0, hand_l), ("right", -1.0, hand_r)):
            shoulder = _SHOULDER[side] + sh
            elbow, eff_hand = _arm_chain(shoulder, hand, sign)
            pos[f, i[f"{side}_upper_arm"]] = to_world(shoulder)
            pos[f, i[f"{side}_forearm"]] = to_world(elbow)
            pos[f, i[f"{side}_hand"]] = to_world(eff_hand)
            qu = _quat_mul(q_face, _quat_align_x(elbow - shoulder))
            qf = _quat_mul(q_face, _quat_align_x(eff_hand - elbow))
            qt[f, i[f"{side}_upper_arm"]] = qu
            qt[f, i[f"{side}_forearm"]] = qf

    clip = MotionClip(
        task=template,
        clip_id=f"{template}_{int(rng_seed):03d}",
        frame_rate=fps,
        body_names=names,
        positions=pos,
        quats=qt,
        idle_windows=(idle_window,),
        event_slots=(TEMPLATE_EVENTS[template],),
    )
    validate_clip(clip, skel)
    return clip
