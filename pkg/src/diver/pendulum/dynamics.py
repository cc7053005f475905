"""Pendulum physics and the control law.

Model: theta_dd = (g/l)*sin(theta) + u/(m*l^2) + delta, with torque
disturbance delta held constant over an integration step.  Integration
is classical RK4 on the (theta, theta_dot) state.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import List, Optional, Tuple


@dataclass(frozen=True)
class PendulumState:
    theta: float
    theta_dot: float


@dataclass(frozen=True)
class PendulumParams:
    m: float = 2.0
    l: float = 0.5
    g: float = 9.81
    noise_sigma: float = 1.0
    theta0: float = 0.5

    def __post_init__(self):
        if self.m <= 0 or self.l <= 0:
            raise ValueError("mass and length must be positive")


@dataclass(frozen=True)
class ControllerGains:
    k1: float = 12.5
    k2: float = 2.25

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("gains must be positive")


def control_law(theta: float, theta_dot: float,
                gains: ControllerGains = ControllerGains()) -> float:
    return -gains.k1 * theta - gains.k2 * theta_dot


def angular_accel(theta: float, u: float, delta: float,
                  params: PendulumParams) -> float:
    return (params.g / params.l) * math.sin(theta) \
        + u / (params.m * params.l * params.l) + delta


def dynamics_step(state: PendulumState, u: float, dt: float,
                  noise_sample: float = 0.0,
                  params: PendulumParams = PendulumParams()) -> PendulumState:
    """One RK4 step with u and the disturbance held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")

    def deriv(theta, theta_dot):
        return theta_dot, angular_accel(theta, u, noise_sample, params)

    th, om = state.theta, state.theta_dot
    k1t, k1o = deriv(th, om)
    k2t, k2o = deriv(th + 0.5 * dt * k1t, om + 0.5 * dt * k1o)
    k3t, k3o = deriv(th + 0.5 * dt * k2t, om + 0.5 * dt * k2o)
    k4t, k4o = deriv(th + dt * k3t, om + dt * k3o)
    return PendulumState(
        th + dt / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t),
        om + dt / 6.0 * (k1o + 2 * k2o + 2 * k3o + k4o))


def simulate_closed_loop(duration_s: float,
                         params: PendulumParams = PendulumParams(),
                         gains: ControllerGains = ControllerGains(),
                         dt: float = 0.001, control_period_s: float = 0.01,
                         seed: Optional[int] = None
                         ) -> List[Tuple[float, float, float, float]]:
    """Offline closed loop without networking: the oracle for the
    network benchmark.  Returns (t, theta, theta_dot, u) rows sampled
    once per control period.  Disturbances are drawn per control period
    and held, matching the benchmark's noise model."""
    rng = random.Random(seed)
    state = PendulumState(params.theta0, 0.0)
    steps_per_control = max(1, int(round(control_period_s / dt)))
    n_controls = int(round(duration_s / control_period_s))
    rows = []
    t = 0.0
    for _ in range(n_controls):
        u = control_law(state.theta, state.theta_dot, gains)
        delta = rng.gauss(0.0, params.noise_sigma) if params.noise_sigma > 0 else 0.0
        rows.append((t, state.theta, state.theta_dot, u))
        for _ in range(steps_per_control):
            state = dynamics_step(state, u, dt, delta, params)
        t += control_period_s
    rows.append((t, state.theta, state.theta_dot,
                 control_law(state.theta, state.theta_dot, gains)))
    return rows
