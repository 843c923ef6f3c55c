"""Differential-drive AGV model: kinematics, wheel torque dynamics, velocity limits.

The same equations serve two roles: the controllers use the forward-Euler
kinematic update as their prediction model, while the simulator integrates
the full torque-driven plant with RK4 as ground truth. The mismatch between
the two integrators is deliberate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(theta, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


def angle_diff(a: float, b: float) -> float:
    """Shortest signed angle from b to a, in (-pi, pi]."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class Pose:
    """Planar pose (x, y in meters, theta in radians, wrapped to (-pi, pi])."""

    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class VelocityState:
    """Body velocities: v forward (m/s), w yaw rate (rad/s)."""

    v: float
    w: float


@dataclass(frozen=True)
class WheelTorques:
    """Right and left wheel torques in N*m."""

    right: float
    left: float


@dataclass(frozen=True)
class DynamicParams:
    """Physical plant parameters.

    half_track is half the distance between the two drive wheels; v_max is
    the per-wheel speed limit that induces the diamond-shaped (v, w) set.
    """

    mass: float = 30.0
    inertia: float = 0.5
    half_track: float = 0.25
    wheel_radius: float = 0.1
    v_max: float = 0.4

    def __post_init__(self):
        for name in ("mass", "inertia", "half_track", "wheel_radius", "v_max"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"DynamicParams.{name} must be positive")


@dataclass(frozen=True)
class DisturbanceProfile:
    """Time profile for one disturbance channel.

    kind: 'none', 'constant', 'step' (zero before t0), or 'sine'
    (magnitude * sin(2*pi*t/period)). Values are in channel units
    (N for force, N*m for torque).
    """

    kind: str = "none"
    magnitude: float = 0.0
    t0: float = 0.0
    period: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "constant", "step", "sine"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.kind == "sine" and self.period <= 0.0:
            raise ValueError("sine disturbance needs period > 0")

    def __call__(self, t: float) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "constant":
            return self.magnitude
        if self.kind == "step":
            return self.magnitude if t >= self.t0 else 0.0
        return self.magnitude * math.sin(TWO_PI * t / self.period)


@dataclass(frozen=True)
class Disturbance:
    """External force (N) and torque (N*m) acting on the body."""

    force: DisturbanceProfile = DisturbanceProfile()
    torque: DisturbanceProfile = DisturbanceProfile()


ZERO_DISTURBANCE = Disturbance()


def propagate_kinematics(pose: Pose, u: VelocityState, dt: float) -> Pose:
    """One forward-Euler step of the unicycle kinematics.

    This exact update is the prediction model inside every horizon
    optimization, so it stays first order on purpose.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return Pose(
        pose.x + u.v * math.cos(pose.theta) * dt,
        pose.y + u.v * math.sin(pose.theta) * dt,
        wrap_angle(pose.theta + u.w * dt),
    )


def _accelerations(
    u: VelocityState,
    torques: WheelTorques,
    params: DynamicParams,
    dist: Disturbance,
    t: float,
) -> tuple[float, float]:
    dv = (torques.right + torques.left) / (params.mass * params.wheel_radius) - dist.force(t) / params.mass
    dw = (
        params.half_track * (torques.right - torques.left) / (2.0 * params.inertia * params.wheel_radius)
        - dist.torque(t) / params.inertia
    )
    return dv, dw


def propagate_dynamics(
    state: VelocityState,
    torques: WheelTorques,
    params: DynamicParams,
    dist: Disturbance = ZERO_DISTURBANCE,
    t: float = 0.0,
    dt: float = 0.01,
) -> VelocityState:
    """One RK4 step of the torque-driven velocity dynamics.

    Torques are held constant over the step; disturbances are sampled at the
    RK4 substep times. Intended substep is 0.01 s (the low-rate loop period).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")

    def f(vel: tuple[float, float], tau: float) -> tuple[float, float]:
        return _accelerations(VelocityState(*vel), torques, params, dist, tau)

    y = (state.v, state.w)
    k1 = f(y, t)
    k2 = f((y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]), t + 0.5 * dt)
    k3 = f((y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]), t + 0.5 * dt)
    k4 = f((y[0] + dt * k3[0], y[1] + dt * k3[1]), t + dt)
    return VelocityState(
        y[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    )


def propagate_truth(
    pose: Pose,
    vel: VelocityState,
    torques: WheelTorques,
    params: DynamicParams,
    dist: Disturbance = ZERO_DISTURBANCE,
    t: float = 0.0,
    dt: float = 0.01,
) -> tuple[Pose, VelocityState]:
    """One RK4 step of the full 5-state plant (pose + velocities).

    The velocity rows do not depend on pose, so the velocity result is
    identical to propagate_dynamics; the pose rows see the within-step
    velocity variation.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")

    def f(y: tuple[float, ...], tau: float) -> tuple[float, ...]:
        _, _, th, v, w = y
        dv, dw = _accelerations(VelocityState(v, w), torques, params, dist, tau)
        return (v * math.cos(th), v * math.sin(th), w, dv, dw)

    y0 = (pose.x, pose.y, pose.theta, vel.v, vel.w)
    k1 = f(y0, t)
    k2 = f(tuple(a + 0.5 * dt * b for a, b in zip(y0, k1)), t + 0.5 * dt)
    k3 = f(tuple(a + 0.5 * dt * b for a, b in zip(y0, k2)), t + 0.5 * dt)
    k4 = f(tuple(a + dt * b for a, b in zip(y0, k3)), t + dt)
    y1 = tuple(
        a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y0, k1, k2, k3, k4)
    )
    return Pose(y1[0], y1[1], wrap_angle(y1[2])), VelocityState(y1[3], y1[4])


def propagate_kinematic_truth(pose: Pose, u: VelocityState, dt: float) -> Pose:
    """RK4 step of the unicycle under constant commanded velocities.

    Ground-truth pose update for runs where the torque layer is disabled and
    the plant follows velocity commands exactly.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")

    def f(y: tuple[float, float, float]) -> tuple[float, float, float]:
        return (u.v * math.cos(y[2]), u.v * math.sin(y[2]), u.w)

    y0 = (pose.x, pose.y, pose.theta)
    k1 = f(y0)
    k2 = f(tuple(a + 0.5 * dt * b for a, b in zip(y0, k1)))
    k3 = f(tuple(a + 0.5 * dt * b for a, b in zip(y0, k2)))
    k4 = f(tuple(a + dt * b for a, b in zip(y0, k3)))
    x, y, th = (
        a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y0, k1, k2, k3, k4)
    )
    return Pose(x, y, wrap_angle(th))


def wheel_speeds(u: VelocityState, params: DynamicParams) -> tuple[float, float]:
    """Left and right wheel ground speeds for given body velocities."""
    return u.v - params.half_track * u.w, u.v + params.half_track * u.w


def check_velocity_constraint(
    u: VelocityState, params: DynamicParams, c_v: float = 1.0, tol: float = 1e-9
) -> bool:
    """True iff |v| + l_w*c_v*|w| <= v_max (+tol).

    c_v = 1 is the raw per-wheel speed limit written in body velocities;
    c_v > 1 shrinks the admissible turn rate for safety margins.
    """
    if c_v < 1.0:
        raise ValueError("c_v must be >= 1")
    return abs(u.v) + params.half_track * c_v * abs(u.w) <= params.v_max + tol
