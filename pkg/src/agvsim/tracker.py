"""Online kinematic tracking: receding-horizon optimizer and a PID baseline.

Both trackers turn the measured pose into a (v, w) command at the high loop
rate and clamp it to the same feasible input polygon, so comparisons between
them are about the control law, not the limits.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .model import Pose, VelocityState, angle_diff
from .nlp import HorizonProblem, InputSet, SolverFailure, SolverOptions, solve
from .planner import ReferenceTrajectory

STOP = VelocityState(0.0, 0.0)


@dataclass
class TrackerStats:
    solves: int = 0
    total_iterations: int = 0
    max_iterations: int = 0

    def record(self, iterations: int) -> None:
        self.solves += 1
        self.total_iterations += iterations
        self.max_iterations = max(self.max_iterations, iterations)

    @property
    def mean_iterations(self) -> float:
        return self.total_iterations / self.solves if self.solves else 0.0


class MpcTracker:
    """Receding-horizon tracker: solve, apply the first input, repeat.

    The first prediction step spans the remaining time to the next reference
    waypoint; later steps use the trajectory's own segment durations. The
    horizon shrinks near the end of the trajectory, and once the reference is
    exhausted the tracker commands a stop.
    """

    def __init__(
        self,
        reference: ReferenceTrajectory,
        horizon: int,
        q: np.ndarray,
        r: np.ndarray,
        s: np.ndarray,
        input_set: InputSet,
        options: SolverOptions = SolverOptions(),
    ):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.reference = reference
        self.horizon = horizon
        self.q, self.r, self.s = q, r, s
        self.input_set = input_set
        self.options = options
        self.stats = TrackerStats()
        self.u_prev = STOP
        self._warm: np.ndarray | None = None
        self._warm_k: int = -1

    def step(self, measured: Pose, t: float) -> VelocityState:
        ref = self.reference
        times = ref.times
        n_r = len(ref) - 1
        if t >= times[-1] - 1e-12:
            self.u_prev = STOP
            return STOP
        k = min(max(bisect_right(times, t) - 1, 0), n_r - 1)
        first_dt = times[k + 1] - t
        if first_dt < 1e-9:  # numerically on top of a waypoint: start from the next segment
            k += 1
            if k >= n_r:
                self.u_prev = STOP
                return STOP
            first_dt = times[k + 1] - t

        h_eff = min(self.horizon, n_r - k)
        dts = [first_dt] + [times[k + i + 1] - times[k + i] for i in range(1, h_eff)]
        refs = tuple(
            (ref.poses[k + i], VelocityState(ref.v_ref[k + i], ref.w_ref[k + i]))
            for i in range(h_eff + 1)
        )
        problem = HorizonProblem(
            horizon=h_eff,
            initial_pose=measured,
            references=refs,
            step_durations=tuple(dts),
            q=self.q, r=self.r, s=self.s,
            input_set=self.input_set,
            u_prev=self.u_prev,
        )
        sol = solve(problem, self._warm_start(k, h_eff), self.options)
        self.stats.record(sol.iterations)
        if not sol.converged:
            raise SolverFailure(f"tracking solve at t={t:.3f}s (waypoint {k}) did not converge", window=k)
        self._warm = np.array([(u.v, u.w) for u in sol.inputs])
        self._warm_k = k
        self.u_prev = sol.inputs[0]
        return sol.inputs[0]

    def _warm_start(self, k: int, h_eff: int) -> np.ndarray:
        ref = self.reference
        guess = np.array(
            [(ref.v_ref[k + i], ref.w_ref[k + i]) for i in range(h_eff)]
        )
        if self._warm is not None:
            shift = k - self._warm_k
            if 0 <= shift < len(self._warm):
                reused = self._warm[shift : shift + h_eff]
                guess[: len(reused)] = reused
        return guess


@dataclass
class _PidChannel:
    kp: float
    ki: float
    kd: float
    integral_limit: float
    integral: float = 0.0
    prev_error: float = 0.0

    def update(self, error: float, dt: float) -> float:
        self.integral += error * dt
        self.integral = min(self.integral_limit, max(-self.integral_limit, self.integral))
        derivative = (error - self.prev_error) / dt
        self.prev_error = error
        return self.kp * error + self.ki * self.integral + self.kd * derivative


class PidTracker:
    """Reference feedthrough plus PID corrections on decomposed errors.

    The speed channel acts on the along-track error; the turn channel acts on
    the heading-to-path error, a wrapped heading error augmented with an
    arctangent cross-track term that steers back toward the path (and
    vanishes exactly on it). Output is clamped to the feasible polygon.
    """

    def __init__(
        self,
        reference: ReferenceTrajectory,
        linear_gains: tuple[float, float, float],
        angular_gains: tuple[float, float, float],
        input_set: InputSet,
        integral_limit: float = 1.0,
        cross_track_gain: float = 1.0,
    ):
        self.reference = reference
        self.input_set = input_set
        self.cross_track_gain = cross_track_gain
        self.v_pid = _PidChannel(*linear_gains, integral_limit=integral_limit)
        self.w_pid = _PidChannel(*angular_gains, integral_limit=integral_limit)
        self.stats = TrackerStats()

    def step(self, measured: Pose, t: float, dt: float) -> VelocityState:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if t >= self.reference.times[-1] - 1e-12:
            return STOP
        ref_pose, v_ref, w_ref = self.reference.sample(t)
        cos_r, sin_r = math.cos(ref_pose.theta), math.sin(ref_pose.theta)
        dx, dy = ref_pose.x - measured.x, ref_pose.y - measured.y
        e_along = cos_r * dx + sin_r * dy
        # positive when the vehicle sits left of the path direction
        e_cross = sin_r * dx - cos_r * dy
        steer_to_path = math.atan(self.cross_track_gain * e_cross / max(abs(v_ref), 0.05))
        e_heading = angle_diff(ref_pose.theta - steer_to_path, measured.theta)
        v = v_ref + self.v_pid.update(e_along, dt)
        w = w_ref + self.w_pid.update(e_heading, dt)
        return VelocityState(*self.input_set.project(v, w))
