"""Finite-horizon trajectory optimization shared by the smoother and tracker.

States are eliminated by rolling the forward-Euler kinematics out from the
initial pose (single shooting), so the only decision variables are the H
input pairs (v, w). The feasible input set is the intersection of the box
0 <= v <= v_max, |w| <= w_max with the safety-scaled diamond
|v| + l_w*c_v*|w| <= v_max; both are handled by exact Euclidean projection
onto the resulting convex polygon. The solver is projected gradient descent
with a spectral (Barzilai-Borwein) initial step and monotone Armijo
backtracking, which keeps the accepted cost sequence nonincreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Pose, VelocityState, wrap_angle


class SolverFailure(Exception):
    """A horizon solve did not converge where convergence is required."""

    def __init__(self, message: str, window: int | None = None):
        super().__init__(message)
        self.window = window


@dataclass(frozen=True)
class InputSet:
    """Feasible (v, w) commands: forward-only box intersected with the diamond."""

    v_max: float
    w_max: float
    half_track: float
    c_v: float = 1.0

    def __post_init__(self):
        if min(self.v_max, self.w_max, self.half_track) <= 0.0:
            raise ValueError("v_max, w_max and half_track must be positive")
        if self.c_v < 1.0:
            raise ValueError("c_v must be >= 1")

    @property
    def diamond_slope(self) -> float:
        return self.half_track * self.c_v

    def contains(self, v: float, w: float, tol: float = 1e-9) -> bool:
        return (
            v >= -tol
            and v <= self.v_max + tol
            and abs(w) <= self.w_max + tol
            and abs(v) + self.diamond_slope * abs(w) <= self.v_max + tol
        )

    def vertices(self) -> list[tuple[float, float]]:
        """Corners of the feasible polygon, counterclockwise."""
        a = self.diamond_slope
        if a * self.w_max < self.v_max - 1e-15:
            vc = self.v_max - a * self.w_max
            return [
                (0.0, -self.w_max),
                (vc, -self.w_max),
                (self.v_max, 0.0),
                (vc, self.w_max),
                (0.0, self.w_max),
            ]
        w0 = min(self.w_max, self.v_max / a)
        return [(0.0, -w0), (self.v_max, 0.0), (0.0, w0)]

    def project(self, v: float, w: float) -> tuple[float, float]:
        """Euclidean projection onto the feasible polygon (exact)."""
        if self.contains(v, w, tol=0.0):
            return v, w
        best = None
        best_d2 = math.inf
        verts = self.vertices()
        for (x0, y0), (x1, y1) in zip(verts, verts[1:] + verts[:1]):
            ex, ey = x1 - x0, y1 - y0
            denom = ex * ex + ey * ey
            t = 0.0 if denom == 0.0 else ((v - x0) * ex + (w - y0) * ey) / denom
            t = min(1.0, max(0.0, t))
            px, py = x0 + t * ex, y0 + t * ey
            d2 = (v - px) ** 2 + (w - py) ** 2
            if d2 < best_d2:
                best_d2 = d2
                best = (px, py)
        return best

    def project_array(self, u: np.ndarray) -> np.ndarray:
        out = u.copy()
        for i in range(out.shape[0]):
            out[i] = self.project(out[i, 0], out[i, 1])
        return out


@dataclass(frozen=True)
class HorizonProblem:
    """One finite-horizon tracking problem.

    references holds H+1 entries (pose, input reference) aligned with the
    rollout: entry 0 pairs with the fixed initial pose, entries 1..H are the
    targets for the predicted states; input references of entries 0..H-1 pair
    with the decision inputs. step_durations has H entries.
    """

    horizon: int
    initial_pose: Pose
    references: tuple[tuple[Pose, VelocityState], ...]
    step_durations: tuple[float, ...]
    q: np.ndarray
    r: np.ndarray
    s: np.ndarray
    input_set: InputSet
    u_prev: VelocityState = VelocityState(0.0, 0.0)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if len(self.references) != self.horizon + 1:
            raise ValueError("need horizon+1 reference entries")
        if len(self.step_durations) != self.horizon:
            raise ValueError("need horizon step durations")
        if any(dt <= 0.0 for dt in self.step_durations):
            raise ValueError("step durations must be positive")
        for name, vec, n in (("q", self.q, 3), ("r", self.r, 2), ("s", self.s, 2)):
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (n,) or (arr <= 0.0).any():
                raise ValueError(f"{name} must be {n} positive diagonal entries")
            object.__setattr__(self, name, arr)

    def reference_inputs(self) -> np.ndarray:
        return np.array([(u.v, u.w) for _, u in self.references[: self.horizon]])


@dataclass(frozen=True)
class HorizonSolution:
    states: tuple[Pose, ...]
    inputs: tuple[VelocityState, ...]
    cost: float
    iterations: int
    converged: bool
    cost_trace: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-6
    max_iters: int = 500
    armijo_slope: float = 1e-4
    contraction: float = 0.5
    step_min: float = 1e-10
    step_max: float = 1e8


def _rollout(problem: HorizonProblem, u: np.ndarray) -> np.ndarray:
    h = problem.horizon
    states = np.empty((h + 1, 3))
    states[0] = (problem.initial_pose.x, problem.initial_pose.y, problem.initial_pose.theta)
    for i in range(h):
        x, y, th = states[i]
        v, w = u[i]
        dt = problem.step_durations[i]
        states[i + 1, 0] = x + v * math.cos(th) * dt
        states[i + 1, 1] = y + v * math.sin(th) * dt
        states[i + 1, 2] = wrap_angle(th + w * dt)
    return states


def _cost_from_states(problem: HorizonProblem, u: np.ndarray, states: np.ndarray) -> float:
    h = problem.horizon
    q, r, s = problem.q, problem.r, problem.s
    total = 0.0
    for i in range(1, h + 1):
        ref = problem.references[i][0]
        dx = ref.x - states[i, 0]
        dy = ref.y - states[i, 1]
        dth = wrap_angle(ref.theta - states[i, 2])
        total += q[0] * dx * dx + q[1] * dy * dy + q[2] * dth * dth
    pv, pw = problem.u_prev.v, problem.u_prev.w
    for i in range(h):
        uref = problem.references[i][1]
        ev, ew = uref.v - u[i, 0], uref.w - u[i, 1]
        total += r[0] * ev * ev + r[1] * ew * ew
        dv, dw = u[i, 0] - pv, u[i, 1] - pw
        total += s[0] * dv * dv + s[1] * dw * dw
        pv, pw = u[i, 0], u[i, 1]
    return total


def evaluate_cost(problem: HorizonProblem, inputs) -> float:
    """Exact horizon cost of an input sequence (heading residuals wrapped)."""
    u = _as_input_array(problem, inputs)
    return _cost_from_states(problem, u, _rollout(problem, u))


def cost_gradient(problem: HorizonProblem, inputs) -> np.ndarray:
    """Analytic gradient of evaluate_cost w.r.t. the (H, 2) input array."""
    u = _as_input_array(problem, inputs)
    states = _rollout(problem, u)
    h = problem.horizon
    q, r, s = problem.q, problem.r, problem.s
    grad = np.zeros((h, 2))

    def state_cost_grad(i: int) -> np.ndarray:
        ref = problem.references[i][0]
        dth = wrap_angle(ref.theta - states[i, 2])
        return np.array(
            [
                -2.0 * q[0] * (ref.x - states[i, 0]),
                -2.0 * q[1] * (ref.y - states[i, 1]),
                -2.0 * q[2] * dth,
            ]
        )

    lam = state_cost_grad(h)
    for i in range(h - 1, -1, -1):
        th = states[i, 2]
        v = u[i, 0]
        dt = problem.step_durations[i]
        c, sn = math.cos(th), math.sin(th)
        grad[i, 0] = dt * (c * lam[0] + sn * lam[1])
        grad[i, 1] = dt * lam[2]
        if i >= 1:
            lam = np.array(
                [lam[0], lam[1], lam[2] + dt * v * (c * lam[1] - sn * lam[0])]
            ) + state_cost_grad(i)

    pv, pw = problem.u_prev.v, problem.u_prev.w
    for i in range(h):
        uref = problem.references[i][1]
        grad[i, 0] += -2.0 * r[0] * (uref.v - u[i, 0]) + 2.0 * s[0] * (u[i, 0] - pv)
        grad[i, 1] += -2.0 * r[1] * (uref.w - u[i, 1]) + 2.0 * s[1] * (u[i, 1] - pw)
        if i + 1 < h:
            grad[i, 0] -= 2.0 * s[0] * (u[i + 1, 0] - u[i, 0])
            grad[i, 1] -= 2.0 * s[1] * (u[i + 1, 1] - u[i, 1])
        pv, pw = u[i, 0], u[i, 1]
    return grad


def _as_input_array(problem: HorizonProblem, inputs) -> np.ndarray:
    if isinstance(inputs, np.ndarray):
        u = np.asarray(inputs, dtype=float)
    else:
        u = np.array([(vi.v, vi.w) if isinstance(vi, VelocityState) else tuple(vi) for vi in inputs], dtype=float)
    if u.shape != (problem.horizon, 2):
        raise ValueError(f"inputs must have shape ({problem.horizon}, 2)")
    return u


def solve(
    problem: HorizonProblem,
    initial_guess,
    options: SolverOptions = SolverOptions(),
) -> HorizonSolution:
    """Local minimizer of the horizon cost over the feasible input polygon.

    The guess is projected onto the feasible set first, so every iterate
    (and the result) is feasible. Returns converged=False instead of raising
    if the projected-gradient norm is still above tolerance at max_iters.
    """
    u = problem.input_set.project_array(_as_input_array(problem, initial_guess))
    cost = evaluate_cost(problem, u)
    grad = cost_gradient(problem, u)
    trace = [cost]
    alpha = 1.0
    converged = False
    iterations = 0

    while True:
        pg = u - problem.input_set.project_array(u - grad)
        if float(np.sqrt((pg * pg).sum())) < options.tol:
            converged = True
            break
        if iterations >= options.max_iters:
            break
        iterations += 1

        direction = problem.input_set.project_array(u - alpha * grad) - u
        if not np.any(direction):
            break  # stationary to machine precision at this step size
        # projection-arc property guarantees slope < 0 whenever direction != 0
        slope = float((grad * direction).sum())
        if slope >= 0.0:
            alpha = max(options.step_min, alpha * options.contraction)
            continue

        lam = 1.0
        accepted = False
        while lam * float(np.abs(direction).max()) > 1e-16:
            u_trial = u + lam * direction
            cost_trial = evaluate_cost(problem, u_trial)
            if cost_trial <= cost + options.armijo_slope * lam * slope:
                accepted = True
                break
            lam *= options.contraction
        if not accepted:
            break  # no measurable descent; report best iterate

        grad_trial = cost_gradient(problem, u_trial)
        s_vec = (u_trial - u).ravel()
        y_vec = (grad_trial - grad).ravel()
        sy = float(s_vec @ y_vec)
        if sy > 0.0:
            alpha = min(options.step_max, max(options.step_min, float(s_vec @ s_vec) / sy))
        else:
            alpha = options.step_max
        u, cost, grad = u_trial, cost_trial, grad_trial
        trace.append(cost)

    states = _rollout(problem, u)
    return HorizonSolution(
        states=tuple(Pose(*states[i]) for i in range(1, problem.horizon + 1)),
        inputs=tuple(VelocityState(u[i, 0], u[i, 1]) for i in range(problem.horizon)),
        cost=cost,
        iterations=iterations,
        converged=converged,
        cost_trace=tuple(trace),
    )
