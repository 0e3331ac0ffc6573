"""Limit-respecting joint trajectories on the fixed inner time grid.

Plans use a discrete trapezoid law derived for the semi-implicit update
q[k+1] = q[k] + v[k+1] dt: each step picks the largest next speed from
which an exact on-grid stop at the goal is still possible.  The law only
looks at the current state, so replanning mid-trajectory reproduces the
remainder of the original plan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InternalConsistencyError, LimitViolationError
from .kinematics import JointState, RobotModel

# inner simulation step; 25 of these make one 0.2 s action interval
DT_SIM = 0.008
STEPS_PER_ACTION = 25
ACTION_PERIOD = DT_SIM * STEPS_PER_ACTION


@dataclass
class JointTrajectory:
    """Uniformly sampled (q, q_dot) rollout starting at t0."""

    t0: float
    dt: float
    q: np.ndarray        # (S,n)
    qd: np.ndarray       # (S,n)
    terminal_velocity_zero: bool = False

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=np.float64))
        self.qd = np.atleast_2d(np.asarray(self.qd, dtype=np.float64))
        if self.q.shape != self.qd.shape:
            raise ConfigurationError("q and qd sample arrays must match in shape")
        if self.q.shape[0] < 1:
            raise ConfigurationError("trajectory needs at least one sample")

    @property
    def n_samples(self) -> int:
        return self.q.shape[0]

    @property
    def n_joints(self) -> int:
        return self.q.shape[1]

    @property
    def t_end(self) -> float:
        return self.t0 + (self.n_samples - 1) * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    def state_at(self, k: int, gripper: float = 1.0) -> JointState:
        return JointState(self.q[k], self.qd[k], gripper)

    def at_time(self, t0: float) -> "JointTrajectory":
        """Same samples re-stamped to start at t0."""
        return JointTrajectory(float(t0), self.dt, self.q, self.qd, self.terminal_velocity_zero)

    def segment(self, k0: int, k1: int) -> "JointTrajectory":
        """Samples k0..k1 inclusive as a new trajectory."""
        if not 0 <= k0 <= k1 < self.n_samples:
            raise ConfigurationError(f"bad segment [{k0},{k1}] of {self.n_samples}")
        term = self.terminal_velocity_zero and k1 == self.n_samples - 1
        return JointTrajectory(self.t0 + k0 * self.dt, self.dt,
                               self.q[k0:k1 + 1].copy(), self.qd[k0:k1 + 1].copy(), term)

    def validate(self, model: RobotModel, tol: float = 1e-9) -> "JointTrajectory":
        lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
        if np.any(self.q < lo - tol) or np.any(self.q > hi + tol):
            raise LimitViolationError("trajectory leaves joint limits")
        if np.any(np.abs(self.qd) > model.vel_limits + tol):
            raise LimitViolationError("trajectory exceeds velocity limits")
        if self.n_samples > 1:
            acc = np.diff(self.qd, axis=0) / self.dt
            if np.any(np.abs(acc) > model.acc_limits + tol):
                raise LimitViolationError("trajectory exceeds acceleration limits")
            dq = np.diff(self.q, axis=0)
            if np.any(np.abs(dq - self.qd[1:] * self.dt) > 1e-9):
                raise InternalConsistencyError("position samples inconsistent with velocities")
        if self.terminal_velocity_zero and np.any(self.qd[-1] != 0.0):
            raise InternalConsistencyError("terminal velocity flagged zero but is not")
        return self


def concat(first: JointTrajectory, second: JointTrajectory) -> JointTrajectory:
    """Join two trajectories where `second` starts at `first`'s last sample."""
    if abs(first.dt - second.dt) > 1e-12:
        raise ConfigurationError("time steps differ")
    if abs(second.t0 - first.t_end) > 1e-9:
        raise ConfigurationError("second trajectory does not start at the first's end")
    if np.any(np.abs(first.q[-1] - second.q[0]) > 1e-9) or np.any(np.abs(first.qd[-1] - second.qd[0]) > 1e-9):
        raise ConfigurationError("trajectory endpoints do not match")
    q = np.vstack([first.q, second.q[1:]])
    qd = np.vstack([first.qd, second.qd[1:]])
    return JointTrajectory(first.t0, first.dt, q, qd, second.terminal_velocity_zero)


def _greedy_speed(d_abs, a, dt):
    """Largest next speed that still allows an exact on-grid stop after
    covering exactly d_abs (per joint)."""
    c = a * dt * dt
    m = np.floor((np.sqrt(1.0 + 8.0 * d_abs / c) - 1.0) / 2.0)
    return d_abs / (dt * (m + 1.0)) + 0.5 * a * dt * m


def _plan_step(q, v, to_q, v_max, a, dt):
    """One control step of the greedy trapezoid law. Returns (q, v) next."""
    d = to_q - q
    w = np.minimum(_greedy_speed(np.abs(d), a, dt), v_max)
    v_des = np.sign(d) * w
    v_next = np.clip(v_des, v - a * dt, v + a * dt)
    q_next = q + v_next * dt
    # the m=0 band lands on the goal in one step; snap away the round-off
    exact = (v_next == v_des) & (np.abs(d) <= a * dt * dt) & (w <= v_max)
    return np.where(exact, to_q, q_next), v_next


def plan_trajectory(model: RobotModel, start: JointState, to_q, horizon: float) -> JointTrajectory:
    """Trapezoid-profile move toward to_q over `horizon` seconds.

    The horizon must be a positive integer multiple of DT_SIM.  If the
    goal is too far, the trajectory simply makes maximal progress.
    """
    start.validate(model)
    to_q = model.check_q(to_q)
    steps_f = horizon / DT_SIM
    steps = int(round(steps_f))
    if steps < 1 or abs(steps_f - steps) > 1e-6:
        raise ConfigurationError(f"horizon {horizon} is not a positive multiple of {DT_SIM}")
    n = model.n_joints
    q = np.empty((steps + 1, n))
    qd = np.empty((steps + 1, n))
    q[0] = start.q
    qd[0] = start.q_dot
    for k in range(steps):
        q[k + 1], qd[k + 1] = _plan_step(q[k], qd[k], to_q, model.vel_limits,
                                         model.acc_limits, DT_SIM)
    term = bool(np.all(qd[-1] == 0.0))
    return JointTrajectory(0.0, DT_SIM, q, qd, term)


def brake_trajectory(model: RobotModel, start: JointState) -> JointTrajectory:
    """Maximal per-joint deceleration to a full stop (the fallback-safe state)."""
    start.validate(model)
    v0 = start.q_dot
    if np.any(v0 != 0.0):
        # exact ceil: any speed epsilon above a multiple of a*dt costs one
        # harmless extra sample rather than a nonzero terminal velocity
        steps = int(np.max(np.ceil(np.abs(v0) / (model.acc_limits * DT_SIM))))
    else:
        steps = 0
    n = model.n_joints
    q = np.empty((steps + 1, n))
    qd = np.empty((steps + 1, n))
    q[0] = start.q
    qd[0] = v0
    dv = model.acc_limits * DT_SIM
    for k in range(steps):
        v = np.sign(qd[k]) * np.maximum(np.abs(qd[k]) - dv, 0.0)
        qd[k + 1] = v
        q[k + 1] = q[k] + v * DT_SIM
    if np.any(qd[-1] != 0.0):
        raise InternalConsistencyError("braking did not reach zero velocity")
    return JointTrajectory(0.0, DT_SIM, q, qd, True)
