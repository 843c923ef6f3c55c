"""Low-level dynamic control of the wheel torques.

Each velocity channel (forward speed and yaw rate) is treated as a scalar
first-order system with unknown drift and uncertain control gain. A
reduced-order observer estimates the lumped "total uncertainty" (drift plus
gain mismatch) from the measured velocity and the applied input; the control
law cancels the estimate, adds proportional feedback and the reference rate,
and passes the result through a smoothed saturation that bounds the command
while staying continuously differentiable. Only the sign of the true control
gain must be known: the nominal gain b0 can be off by large factors.

Channel commands are the torque sum (speed) and torque difference (turn);
wheel torques are recovered by the exact linear transform at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class StiffnessViolation(Exception):
    """Observer update would be unstable at this sample time (dt*L/eps > 1)."""


def sat_eps(value, epsilon: float):
    """Smoothed unity saturation, odd, with a quadratic knee of width epsilon.

    Identity on [0, 1], blends to the constant 1 + epsilon/2 over
    [1, 1 + epsilon], constant beyond; extended as an odd function. The slope
    stays in [0, 1] and the deviation from hard saturation never exceeds
    epsilon/2. Accepts scalars or numpy arrays.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if isinstance(value, (float, int)):
        a = abs(value)
        if a <= 1.0:
            out = a
        elif a <= 1.0 + epsilon:
            out = a - (a - 1.0) ** 2 / (2.0 * epsilon)
        else:
            out = 1.0 + epsilon / 2.0
        return math.copysign(out, value) if value != 0 else 0.0
    arr = np.asarray(value, dtype=float)
    a = np.abs(arr)
    out = np.where(
        a <= 1.0,
        a,
        np.where(a <= 1.0 + epsilon, a - (a - 1.0) ** 2 / (2.0 * epsilon), 1.0 + epsilon / 2.0),
    )
    return np.copysign(out, arr)


@dataclass(frozen=True)
class DynamicCommand:
    """Channel inputs (torque sum u_v, torque difference u_w) and wheel torques."""

    u_v: float
    u_w: float
    torque_right: float
    torque_left: float

    @classmethod
    def from_channel_inputs(cls, u_v: float, u_w: float) -> "DynamicCommand":
        return cls(u_v, u_w, 0.5 * (u_v + u_w), 0.5 * (u_v - u_w))

    @classmethod
    def zero(cls) -> "DynamicCommand":
        return cls(0.0, 0.0, 0.0, 0.0)


def channel_inputs_from_torques(torque_right: float, torque_left: float) -> tuple[float, float]:
    """Inverse of the wheel-torque recovery: (u_v, u_w) = (T_r + T_l, T_r - T_l)."""
    return torque_right + torque_left, torque_right - torque_left


@dataclass
class ResoChannel:
    """One scalar velocity channel: observer state plus saturated control law.

    b0 is the nominal control gain whose sign must match the plant's;
    gain_k < 0 is the tracking feedback gain; sat_bound is the command bound
    M; epsilon sets both the observer speed (time constant epsilon/gain_l)
    and the saturation knee width.
    """

    b0: float = 1.0
    gain_k: float = -5.0
    sat_bound: float = 10.0
    epsilon: float = 0.02
    gain_l: float = 1.0
    state: float | None = None
    xi_hat: float = 0.0
    last_psi: float = 0.0

    def __post_init__(self):
        if self.b0 == 0.0:
            raise ValueError("b0 must be nonzero (its sign is the control direction)")
        if self.gain_k >= 0.0:
            raise ValueError("gain_k must be negative")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.gain_l <= 0.0:
            raise ValueError("gain_l must be positive")
        if self.sat_bound <= 0.0:
            raise ValueError("sat_bound must be positive")

    def guard_sample_time(self, dt: float) -> None:
        """Refuse configurations whose forward-Euler observer update diverges."""
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if dt * self.gain_l / self.epsilon > 1.0 + 1e-12:
            raise StiffnessViolation(
                f"dt*L/epsilon = {dt * self.gain_l / self.epsilon:.3f} > 1; "
                "decrease dt or increase epsilon"
            )

    def observe(self, measured: float, applied_u: float, dt: float) -> float:
        """One observer update; returns the current uncertainty estimate.

        applied_u must be the input actually driving the plant over this
        sample interval. The first call latches the observer state onto the
        measurement so the initial estimate is zero (no startup peaking).
        """
        self.guard_sample_time(dt)
        if self.state is None:
            self.state = measured
        gain = self.gain_l / self.epsilon
        self.state += dt * (gain * (measured - self.state) + self.b0 * applied_u)
        self.xi_hat = gain * (measured - self.state)
        return self.xi_hat

    def control(self, measured: float, reference: float, reference_rate: float = 0.0) -> float:
        """Saturated command from the latest uncertainty estimate.

        Call observe() for the current sample first.
        """
        psi = (self.gain_k * (measured - reference) - self.xi_hat + reference_rate) / self.b0
        self.last_psi = psi
        return self.sat_bound * sat_eps(psi / self.sat_bound, self.epsilon)

    @property
    def saturated(self) -> bool:
        return abs(self.last_psi) > self.sat_bound


@dataclass
class ReferenceRateEstimator:
    """Rates of the zero-order-held velocity commands.

    Backward difference over the command update period, clamped to a slew
    bound; zero until two command samples have been seen.
    """

    period: float
    slew_limit: float = 2.0
    _prev: tuple[float, float] | None = None
    _rates: tuple[float, float] = (0.0, 0.0)

    def push(self, v_r: float, w_r: float) -> None:
        if self._prev is not None:
            lim = self.slew_limit
            dv = (v_r - self._prev[0]) / self.period
            dw = (w_r - self._prev[1]) / self.period
            self._rates = (min(lim, max(-lim, dv)), min(lim, max(-lim, dw)))
        self._prev = (v_r, w_r)

    @property
    def rates(self) -> tuple[float, float]:
        return self._rates


class DualChannelReso:
    """Both velocity channels plus the torque recovery, stepped at the low rate.

    step() consumes the command applied over the current sample interval
    (the caller owns the one-sample actuation delay) and returns the command
    to apply next.
    """

    def __init__(self, v_channel: ResoChannel, w_channel: ResoChannel):
        self.v_channel = v_channel
        self.w_channel = w_channel

    def step(
        self,
        measured_v: float,
        measured_w: float,
        v_ref: float,
        w_ref: float,
        v_ref_rate: float,
        w_ref_rate: float,
        applied: DynamicCommand,
        dt: float,
    ) -> DynamicCommand:
        self.v_channel.observe(measured_v, applied.u_v, dt)
        self.w_channel.observe(measured_w, applied.u_w, dt)
        u_v = self.v_channel.control(measured_v, v_ref, v_ref_rate)
        u_w = self.w_channel.control(measured_w, w_ref, w_ref_rate)
        return DynamicCommand.from_channel_inputs(u_v, u_w)

    @property
    def any_saturated(self) -> bool:
        return self.v_channel.saturated or self.w_channel.saturated


@dataclass
class FilteredPidChannel:
    """Discrete PID with first-order filtered derivative (backward Euler).

    Realizes kp + ki/s + kd*kn*s/(s + kn) at sample time dt; the integral
    term is clamped for anti-windup.
    """

    kp: float
    ki: float
    kd: float
    kn: float
    integral_limit: float = 10.0
    integral: float = 0.0
    derivative: float = 0.0
    prev_error: float = 0.0

    def update(self, error: float, dt: float) -> float:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        self.integral += self.ki * error * dt
        self.integral = min(self.integral_limit, max(-self.integral_limit, self.integral))
        self.derivative = (self.derivative + self.kd * self.kn * (error - self.prev_error)) / (
            1.0 + self.kn * dt
        )
        self.prev_error = error
        return self.kp * error + self.integral + self.derivative


class PidDynamicController:
    """Per-channel filtered-derivative PID baseline mapped to wheel torques.

    Shares the step() contract of DualChannelReso so the simulator can swap
    the two; the applied command and reference rates are ignored.
    """

    def __init__(self, v_channel: FilteredPidChannel, w_channel: FilteredPidChannel):
        self.v_channel = v_channel
        self.w_channel = w_channel

    def step(
        self,
        measured_v: float,
        measured_w: float,
        v_ref: float,
        w_ref: float,
        v_ref_rate: float,
        w_ref_rate: float,
        applied: DynamicCommand,
        dt: float,
    ) -> DynamicCommand:
        u_v = self.v_channel.update(v_ref - measured_v, dt)
        u_w = self.w_channel.update(w_ref - measured_w, dt)
        return DynamicCommand.from_channel_inputs(u_v, u_w)

    @property
    def any_saturated(self) -> bool:
        return False
