"""Serial-chain robot model: forward/inverse kinematics and collision checks.

Joint parameters follow the classic four-number-per-row convention
(a, alpha, d, theta_offset); joint j rotates about the z axis of frame
j-1.  One capsule per link, expressed in that link's frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import ConfigurationError, LimitViolationError, UnreachableTargetError
from .geometry import Capsule, pack_capsules, unpack_capsules

# clearance below which a configuration counts as colliding
COLLISION_MARGIN = 0.005

_IK_DAMPING = 1e-2
_IK_MAX_ITERS = 200
_IK_STEP_CLAMP = 0.2
_IK_TOL = 1e-4


@dataclass(frozen=True)
class RobotModel:
    dh: np.ndarray                      # (n,4) rows [a, alpha, d, theta_offset]
    joint_limits: np.ndarray            # (n,2) [min,max] radians
    vel_limits: np.ndarray              # (n,) rad/s
    acc_limits: np.ndarray              # (n,) rad/s^2
    link_capsules: tuple                # one Capsule per link, link-local frame
    ee_frame: np.ndarray = field(default_factory=lambda: np.eye(4))
    gripper_grasp_radius: float = 0.08
    name: str = "robot"
    exempt_self_pairs: tuple = ()       # capsule pairs that touch by construction

    def __post_init__(self):
        dh = np.ascontiguousarray(self.dh, dtype=np.float64).reshape(-1, 4)
        n = dh.shape[0]
        if n < 1:
            raise ConfigurationError("robot needs at least one joint")
        lim = np.ascontiguousarray(self.joint_limits, dtype=np.float64).reshape(n, 2)
        vel = np.ascontiguousarray(self.vel_limits, dtype=np.float64).reshape(n)
        acc = np.ascontiguousarray(self.acc_limits, dtype=np.float64).reshape(n)
        if np.any(lim[:, 0] >= lim[:, 1]):
            raise ConfigurationError("joint limits need min < max")
        if np.any(vel <= 0) or np.any(acc <= 0):
            raise ConfigurationError("velocity and acceleration limits must be positive")
        caps = tuple(self.link_capsules)
        if len(caps) != n:
            raise ConfigurationError(f"expected {n} link capsules, got {len(caps)}")
        ee = np.ascontiguousarray(self.ee_frame, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, "dh", dh)
        object.__setattr__(self, "joint_limits", lim)
        object.__setattr__(self, "vel_limits", vel)
        object.__setattr__(self, "acc_limits", acc)
        object.__setattr__(self, "link_capsules", caps)
        object.__setattr__(self, "ee_frame", ee)
        object.__setattr__(self, "gripper_grasp_radius", float(self.gripper_grasp_radius))
        object.__setattr__(self, "_cap_local", pack_capsules(caps))
        object.__setattr__(self, "_cap_joint", np.arange(n, dtype=np.int64))
        exempt = {tuple(sorted((int(i), int(j)))) for i, j in self.exempt_self_pairs}
        for i, j in exempt:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ConfigurationError(f"bad exempt pair ({i}, {j})")
        object.__setattr__(self, "exempt_self_pairs", tuple(sorted(exempt)))
        pairs = [(i, j) for i in range(n) for j in range(i + 2, n)
                 if (i, j) not in exempt]
        object.__setattr__(
            self, "_self_pairs", np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        )

    @property
    def n_joints(self) -> int:
        return self.dh.shape[0]

    def max_reach(self) -> float:
        """Conservative radius of the reachable ball around the base."""
        seg = np.abs(self.dh[:, 0]) + np.abs(self.dh[:, 2])
        ee = float(np.linalg.norm(self.ee_frame[:3, 3]))
        return float(seg.sum() + ee)

    def clamp_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64).reshape(self.n_joints)
        return np.clip(q, self.joint_limits[:, 0], self.joint_limits[:, 1])

    def check_q(self, q, tol: float = 1e-9) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64).reshape(self.n_joints)
        lo, hi = self.joint_limits[:, 0], self.joint_limits[:, 1]
        if np.any(q < lo - tol) or np.any(q > hi + tol):
            raise LimitViolationError(f"joint position outside limits: {q}")
        return q

    def link_speed_bound_matrix(self) -> np.ndarray:
        """(L,n) matrix rho: speed of any point of link i <= sum_j rho[i,j]|qd_j|.

        rho[i,j] bounds the distance from joint j's axis to any point of
        link i's capsule by chaining segment lengths, so the bound holds
        for every configuration.
        """
        n = self.n_joints
        seg_len = np.sqrt(self.dh[:, 0] ** 2 + self.dh[:, 2] ** 2)
        rho = np.zeros((n, n))
        for i, cap in enumerate(self.link_capsules):
            ext = max(np.linalg.norm(cap.endpoint_a), np.linalg.norm(cap.endpoint_b)) + cap.radius
            for j in range(i + 1):
                rho[i, j] = seg_len[j:i + 1].sum() + ext
        return rho


@dataclass
class JointState:
    q: np.ndarray
    q_dot: np.ndarray
    gripper: float = 1.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64).reshape(-1).copy()
        self.q_dot = np.asarray(self.q_dot, dtype=np.float64).reshape(-1).copy()
        self.gripper = float(self.gripper)
        if self.q.shape != self.q_dot.shape:
            raise ConfigurationError("q and q_dot must have the same length")
        if not 0.0 <= self.gripper <= 1.0:
            raise ConfigurationError(f"gripper aperture must lie in [0,1], got {self.gripper}")

    def validate(self, model: RobotModel, tol: float = 1e-9):
        model.check_q(self.q, tol)
        if np.any(np.abs(self.q_dot) > model.vel_limits + tol):
            raise LimitViolationError(f"joint velocity outside limits: {self.q_dot}")
        return self

    def copy(self) -> "JointState":
        return JointState(self.q.copy(), self.q_dot.copy(), self.gripper)

    @staticmethod
    def rest(model: RobotModel, q=None) -> "JointState":
        q = np.zeros(model.n_joints) if q is None else np.asarray(q, dtype=np.float64)
        return JointState(model.clamp_q(q), np.zeros(model.n_joints))


def _quat_from_matrix(R) -> np.ndarray:
    """Unit quaternion (w,x,y,z) with w >= 0 from a rotation matrix."""
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        if i == 0:
            s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
            q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
        elif i == 1:
            s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
            q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
        else:
            s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
            q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def ee_position(model: RobotModel, q) -> np.ndarray:
    """End-effector point for a single configuration."""
    q = np.asarray(q, dtype=np.float64).reshape(1, -1)
    _, ee = _core.fk_world_capsules(model.dh, q, model._cap_local, model._cap_joint, model.ee_frame)
    return ee[0]


def batch_link_capsules(model: RobotModel, qs):
    """Packed world capsules (S,L,7) and ee positions (S,3) for joint samples."""
    qs = np.atleast_2d(np.asarray(qs, dtype=np.float64))
    return _core.fk_world_capsules(model.dh, qs, model._cap_local, model._cap_joint, model.ee_frame)


def forward_kinematics(model: RobotModel, q):
    """(ee_pose, world link capsules) for one configuration.

    ee_pose is (position (3,), orientation quaternion (w,x,y,z)).
    """
    q = model.check_q(q)
    world = _core.fk_transforms(model.dh, q.reshape(1, -1))[0]
    ee_T = world[-1] @ model.ee_frame
    pose = (ee_T[:3, 3].copy(), _quat_from_matrix(ee_T[:3, :3]))
    caps, _ = batch_link_capsules(model, q)
    return pose, unpack_capsules(caps[0])


def position_jacobian(model: RobotModel, q) -> np.ndarray:
    """(3,n) Jacobian of the ee point w.r.t. joint angles."""
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    n = model.n_joints
    world = _core.fk_transforms(model.dh, q.reshape(1, -1))[0]
    p_ee = (world[-1] @ model.ee_frame)[:3, 3]
    J = np.empty((3, n))
    axis = np.array([0.0, 0.0, 1.0])
    origin = np.zeros(3)
    for j in range(n):
        if j > 0:
            axis = world[j - 1][:3, 2]
            origin = world[j - 1][:3, 3]
        J[:, j] = np.cross(axis, p_ee - origin)
    return J


def inverse_kinematics(model: RobotModel, target_position, q_seed) -> np.ndarray:
    """Damped least-squares position IK, clamped to joint limits.

    Raises UnreachableTargetError (carrying the best iterate) when the
    residual stays above tolerance after the iteration budget.
    """
    target = np.asarray(target_position, dtype=np.float64).reshape(3)
    q = model.clamp_q(model.check_q(q_seed))
    best_q = q.copy()
    best_res = np.inf
    lam2 = _IK_DAMPING ** 2
    for _ in range(_IK_MAX_ITERS):
        err = target - ee_position(model, q)
        res = float(np.linalg.norm(err))
        if res < best_res:
            best_res = res
            best_q = q.copy()
        if res <= _IK_TOL:
            return q
        J = position_jacobian(model, q)
        # dq = J^T (J J^T + lam^2 I)^-1 err
        A = J @ J.T + lam2 * np.eye(3)
        dq = J.T @ np.linalg.solve(A, err)
        step = float(np.max(np.abs(dq)))
        if step > _IK_STEP_CLAMP:
            dq *= _IK_STEP_CLAMP / step
        q = model.clamp_q(q + dq)
    err = target - ee_position(model, q)
    res = float(np.linalg.norm(err))
    if res < best_res:
        best_res = res
        best_q = q.copy()
    if best_res <= _IK_TOL:
        return best_q
    raise UnreachableTargetError(
        f"IK did not converge: residual {best_res:.3e} m after {_IK_MAX_ITERS} iterations",
        best_q=best_q,
        best_residual=best_res,
    )


def check_collision_free(model: RobotModel, q, static_obstacles=()) -> bool:
    """True iff no non-adjacent self pair and no link/obstacle pair is
    closer than the collision margin."""
    q = model.check_q(q)
    caps, _ = batch_link_capsules(model, q)
    obs = pack_capsules(list(static_obstacles))
    hit = _core.first_collision_sample(caps, model._self_pairs, obs, COLLISION_MARGIN)
    return int(hit) < 0
