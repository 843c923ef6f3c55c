"""Trajectory planning: timestamping, horizon-based path smoothing, velocity profile.

The pipeline turns a rough grid path into a timed, dynamically sensible
reference: (1) assign constant-speed timestamps, (2) smooth the path by
simulating a tracking optimization along it window by window, (3) fit the
heading against arc length and slow the reference speed where the path
turns, so the planned (v, w) pairs always stay inside the safety diamond.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .model import Pose, VelocityState, angle_diff, wrap_angle
from .nlp import HorizonProblem, InputSet, SolverFailure, SolverOptions, solve
from .output import write_csv_atomic
from .world import GlobalPath


class DegeneratePath(Exception):
    """Consecutive path points coincide, so no direction or timing exists."""


class RankDeficient(Exception):
    """Too few samples to fit a cubic heading polynomial."""


@dataclass(frozen=True)
class TimedPath:
    """Poses with reference times; segment k spans times[k]..times[k+1]."""

    poses: tuple[Pose, ...]
    times: tuple[float, ...]

    def __post_init__(self):
        if len(self.poses) != len(self.times):
            raise ValueError("poses and times must align")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def step_durations(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.times, self.times[1:]))


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Final timed trajectory: poses plus per-waypoint velocity references."""

    poses: tuple[Pose, ...]
    v_ref: tuple[float, ...]
    w_ref: tuple[float, ...]
    times: tuple[float, ...]
    arc_lengths: tuple[float, ...]

    def __post_init__(self):
        n = len(self.poses)
        if not (len(self.v_ref) == len(self.w_ref) == len(self.times) == len(self.arc_lengths) == n):
            raise ValueError("all trajectory columns must align")

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def duration(self) -> float:
        return self.times[-1]

    def segment_at(self, t: float) -> int:
        """Index k with times[k] <= t < times[k+1], clamped to the last segment."""
        k = bisect_right(self.times, t) - 1
        return min(max(k, 0), len(self) - 2)

    def sample(self, t: float) -> tuple[Pose, float, float]:
        """Linearly interpolated (pose, v_ref, w_ref) at time t (clamped)."""
        if t <= self.times[0]:
            return self.poses[0], self.v_ref[0], self.w_ref[0]
        if t >= self.times[-1]:
            return self.poses[-1], self.v_ref[-1], self.w_ref[-1]
        k = self.segment_at(t)
        t0, t1 = self.times[k], self.times[k + 1]
        a = (t - t0) / (t1 - t0)
        p0, p1 = self.poses[k], self.poses[k + 1]
        pose = Pose(
            p0.x + a * (p1.x - p0.x),
            p0.y + a * (p1.y - p0.y),
            wrap_angle(p0.theta + a * angle_diff(p1.theta, p0.theta)),
        )
        v = self.v_ref[k] + a * (self.v_ref[k + 1] - self.v_ref[k])
        w = self.w_ref[k] + a * (self.w_ref[k + 1] - self.w_ref[k])
        return pose, v, w

    def position_at(self, t: float) -> tuple[float, float]:
        pose, _, _ = self.sample(t)
        return pose.x, pose.y

    def write_csv(self, path) -> None:
        rows = [
            (i, p.x, p.y, p.theta, v, w, t)
            for i, (p, v, w, t) in enumerate(zip(self.poses, self.v_ref, self.w_ref, self.times))
        ]
        write_csv_atomic(path, ["i", "x", "y", "theta", "v_ref", "w_ref", "t"], rows)


@dataclass(frozen=True)
class HeadingPolySegment:
    s_start: float
    s_end: float
    coeffs: tuple[float, float, float, float]  # c0..c3 in local s - s_start
    rmse: float


@dataclass(frozen=True)
class HeadingPolyFit:
    """Piecewise cubic heading-vs-arc-length fit; only the derivative is consumed."""

    segments: tuple[HeadingPolySegment, ...]

    def _segment_for(self, s: float) -> HeadingPolySegment:
        for seg in self.segments[:-1]:
            if s < seg.s_end:
                return seg
        return self.segments[-1]

    def theta(self, s: float) -> float:
        seg = self._segment_for(s)
        ds = s - seg.s_start
        c0, c1, c2, c3 = seg.coeffs
        return c0 + ds * (c1 + ds * (c2 + ds * c3))

    def dtheta_ds(self, s: float) -> float:
        seg = self._segment_for(s)
        ds = s - seg.s_start
        c0, c1, c2, c3 = seg.coeffs
        return c1 + ds * (2.0 * c2 + ds * 3.0 * c3)


def segment_headings(points: list[tuple[float, float]]) -> list[float]:
    """Heading of each waypoint from the direction to its successor; the last
    point inherits its predecessor's heading."""
    if len(points) < 2:
        raise DegeneratePath("need at least two points to orient a path")
    headings = []
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        if x1 == x0 and y1 == y0:
            raise DegeneratePath("consecutive path points coincide")
        headings.append(math.atan2(y1 - y0, x1 - x0))
    headings.append(headings[-1])
    return headings


def timestamp_constant_velocity(path: GlobalPath, v_c: float) -> TimedPath:
    """Assign times assuming constant cruise speed v_c along the polyline."""
    if v_c <= 0.0:
        raise ValueError("v_c must be positive")
    if len(path) < 2:
        raise DegeneratePath("need at least two waypoints to timestamp")
    pts = [(p.x, p.y) for p in path.points]
    headings = segment_headings(pts)
    times = [0.0]
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        times.append(times[-1] + math.hypot(x1 - x0, y1 - y0) / v_c)
    poses = tuple(Pose(x, y, th) for (x, y), th in zip(pts, headings))
    return TimedPath(poses, tuple(times))


def smooth_path(
    timed: TimedPath,
    horizon: int,
    update_horizon: int,
    q: np.ndarray,
    r: np.ndarray,
    s: np.ndarray,
    input_set: InputSet,
    v_c: float,
    options: SolverOptions = SolverOptions(),
) -> list[Pose]:
    """Smooth a timed path by windowed tracking optimization along it.

    Each window solves a horizon problem against the raw waypoints with the
    cruise input (v_c, 0) as input reference, keeps the first update_horizon
    predicted states as new path points, and restarts from the last kept
    state. Windows overlap (update_horizon < horizon) so the joins stay
    smooth; the final window shrinks to whatever is left. The output has the
    same length as the input with the first pose kept verbatim.
    """
    n_r = len(timed) - 1
    if not (1 <= update_horizon <= horizon):
        raise ValueError("need 1 <= update_horizon <= horizon")
    if horizon > n_r:
        raise ValueError("horizon must not exceed the number of path segments")

    dts = timed.step_durations
    cruise = VelocityState(v_c, 0.0)
    out: list[Pose | None] = [timed.poses[0]] + [None] * n_r
    z0 = timed.poses[0]
    u_prev = cruise
    k = 0
    window = 0
    while k < n_r:
        h_eff = min(horizon, n_r - k)
        hu_eff = min(update_horizon, h_eff)
        refs = [(timed.poses[k + i], cruise) for i in range(h_eff + 1)]
        problem = HorizonProblem(
            horizon=h_eff,
            initial_pose=z0,
            references=tuple(refs),
            step_durations=dts[k : k + h_eff],
            q=q, r=r, s=s,
            input_set=input_set,
            u_prev=u_prev,
        )
        guess = _inputs_from_references(timed, k, h_eff, input_set)
        sol = solve(problem, guess, options)
        if not sol.converged:
            raise SolverFailure(f"smoothing window {window} (waypoint {k}) did not converge", window=window)
        for i in range(hu_eff):
            out[k + 1 + i] = sol.states[i]
        z0 = sol.states[hu_eff - 1]
        u_prev = sol.inputs[hu_eff - 1]
        k += hu_eff
        window += 1
    assert all(p is not None for p in out)
    return out  # type: ignore[return-value]


def _inputs_from_references(timed: TimedPath, k: int, h_eff: int, input_set: InputSet) -> np.ndarray:
    """Warm start: velocities that would replay the reference waypoints."""
    guess = np.empty((h_eff, 2))
    for i in range(h_eff):
        p0, p1 = timed.poses[k + i], timed.poses[k + i + 1]
        dt = timed.times[k + i + 1] - timed.times[k + i]
        v = math.hypot(p1.x - p0.x, p1.y - p0.y) / dt
        w = angle_diff(p1.theta, p0.theta) / dt
        guess[i] = input_set.project(v, w)
    return guess


def fit_heading_polynomial(path: list[Pose], segment_len: float = 1.0) -> HeadingPolyFit:
    """Least-squares piecewise cubic of unwrapped heading vs arc length.

    Segments cover at most segment_len of arc; any segment with fewer than
    four samples is merged into its neighbor before fitting.
    """
    if segment_len <= 0.0:
        raise ValueError("segment_len must be positive")
    if len(path) < 4:
        raise RankDeficient("need at least four poses for a cubic fit")
    xy = np.array([(p.x, p.y) for p in path])
    seg_d = np.hypot(*np.diff(xy, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg_d)])
    total = float(s[-1])
    if total <= 0.0:
        raise ValueError("path arc length must be positive")
    theta = np.unwrap(np.array([p.theta for p in path]))

    n_seg = max(1, math.ceil(total / segment_len - 1e-12))
    width = total / n_seg
    groups: list[np.ndarray] = []
    for j in range(n_seg):
        lo, hi = j * width, (j + 1) * width
        if j == n_seg - 1:
            mask = (s >= lo - 1e-12) & (s <= total + 1e-12)
        else:
            mask = (s >= lo - 1e-12) & (s < hi)
        groups.append(np.flatnonzero(mask))
    merged: list[np.ndarray] = []
    for idx in groups:
        if merged and (len(idx) < 4 or len(merged[-1]) < 4):
            merged[-1] = np.concatenate([merged[-1], idx])
        else:
            merged.append(idx)
    if len(merged) > 1 and len(merged[-1]) < 4:
        tail = merged.pop()
        merged[-1] = np.concatenate([merged[-1], tail])
    if len(merged[0]) < 4:
        raise RankDeficient("fewer than four samples in the only fitting segment")

    segments = []
    for j, idx in enumerate(merged):
        s_start = float(s[idx[0]])
        s_end = float(s[idx[-1]]) if j == len(merged) - 1 else float(s[merged[j + 1][0]])
        ds = s[idx] - s_start
        vand = np.vander(ds, 4, increasing=True)
        coeffs, *_ = np.linalg.lstsq(vand, theta[idx], rcond=None)
        resid = vand @ coeffs - theta[idx]
        rmse = float(np.sqrt(np.mean(resid**2)))
        segments.append(HeadingPolySegment(s_start, s_end, tuple(coeffs), rmse))
    return HeadingPolyFit(tuple(segments))


def plan_reference_velocity(
    path: list[Pose],
    fit: HeadingPolyFit,
    v_max: float,
    half_track: float,
    c_v: float,
    stop_taper: float = 0.2,
) -> ReferenceTrajectory:
    """Assign per-waypoint speed from path curvature and retime the trajectory.

    Speed is the largest forward velocity that keeps (v, w) inside the
    diamond given the local heading rate dtheta/ds; the last stop_taper
    meters additionally blend the speed to zero so the vehicle halts at the
    goal. Segment travel times use the segment's starting speed.
    """
    if v_max <= 0.0:
        raise ValueError("v_max must be positive")
    if c_v < 1.0:
        raise ValueError("c_v must be >= 1")
    xy = np.array([(p.x, p.y) for p in path])
    seg_d = np.hypot(*np.diff(xy, axis=0).T)
    if (seg_d <= 0.0).any():
        raise DegeneratePath("consecutive path points coincide")
    s = np.concatenate([[0.0], np.cumsum(seg_d)])
    total = float(s[-1])

    v_ref, w_ref = [], []
    for si in s:
        slope = fit.dtheta_ds(float(si))
        v = v_max / (1.0 + abs(half_track * c_v * slope))
        if stop_taper > 0.0:
            v *= min(1.0, (total - float(si)) / stop_taper)
        v_ref.append(v)
        w_ref.append(slope * v)

    times = [0.0]
    for k, d in enumerate(seg_d):
        times.append(times[-1] + float(d) / v_ref[k])
    return ReferenceTrajectory(
        poses=tuple(path),
        v_ref=tuple(v_ref),
        w_ref=tuple(w_ref),
        times=tuple(times),
        arc_lengths=tuple(float(x) for x in s),
    )


def constant_velocity_reference(timed: TimedPath, v_c: float) -> ReferenceTrajectory:
    """Wrap a raw timed path as a trackable trajectory (v_c cruise, no turn rate).

    Used when the smoothing and velocity-planning stages are bypassed and the
    tracker follows the rough geometric path directly.
    """
    xy = np.array([(p.x, p.y) for p in timed.poses])
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(xy, axis=0).T))])
    return ReferenceTrajectory(
        poses=timed.poses,
        v_ref=(v_c,) * len(timed),
        w_ref=(0.0,) * len(timed),
        times=timed.times,
        arc_lengths=tuple(float(x) for x in s),
    )


def heading_roughness(poses: list[Pose]) -> float:
    """Sum of squared wrapped heading increments along a path."""
    return sum(angle_diff(b.theta, a.theta) ** 2 for a, b in zip(poses, poses[1:]))
