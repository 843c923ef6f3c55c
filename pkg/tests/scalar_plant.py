"""Scalar first-order plant harness for exercising one observer channel.

Plant: eta' = drift(t, eta) + plant_gain * u, integrated with RK4 under a
zero-order-held input. The loop uses the same one-sample actuation delay as
the full simulator: the command computed at tick n drives the plant over the
next interval, and the observer always sees the input that is actually
active.
"""

from dataclasses import dataclass

import numpy as np

from agvsim.reso import ResoChannel


@dataclass
class ScalarRun:
    t: np.ndarray
    eta: np.ndarray
    xi_true: np.ndarray
    xi_hat: np.ndarray
    u: np.ndarray

    def after(self, t_skip):
        m = self.t >= t_skip
        return self.xi_true[m], self.xi_hat[m], self.eta[m]


def run_scalar_tracking(
    channel: ResoChannel,
    plant_gain: float,
    drift,
    reference,
    reference_rate=None,
    duration: float = 5.0,
    dt: float = 1e-4,
    eta0: float = 0.0,
):
    n = int(round(duration / dt))
    t_arr = np.empty(n)
    eta_arr = np.empty(n)
    xi_true_arr = np.empty(n)
    xi_hat_arr = np.empty(n)
    u_arr = np.empty(n)

    eta = eta0
    pending = 0.0
    for i in range(n):
        t = i * dt
        applied = pending
        xi_hat = channel.observe(eta, applied, dt)
        rho = reference(t)
        rho_dot = reference_rate(t) if reference_rate is not None else 0.0
        pending = channel.control(eta, rho, rho_dot)

        t_arr[i] = t
        eta_arr[i] = eta
        xi_true_arr[i] = drift(t, eta) + (plant_gain - channel.b0) * applied
        xi_hat_arr[i] = xi_hat
        u_arr[i] = applied

        def f(tt, e):
            return drift(tt, e) + plant_gain * applied

        k1 = f(t, eta)
        k2 = f(t + dt / 2, eta + dt / 2 * k1)
        k3 = f(t + dt / 2, eta + dt / 2 * k2)
        k4 = f(t + dt, eta + dt * k3)
        eta += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    return ScalarRun(t_arr, eta_arr, xi_true_arr, xi_hat_arr, u_arr)
