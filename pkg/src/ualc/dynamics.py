"""Kinematic bicycle model, rear-axle reference, forward Euler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MAX_STEER, ConfigError, DomainError, VehicleState


@dataclass(frozen=True)
class BicycleParams:
    wheelbase: float = 2.7  # m
    dt: float = 0.05  # s, 20 Hz

    def __post_init__(self):
        if self.wheelbase <= 0 or self.dt <= 0:
            raise ConfigError("wheelbase and dt must be positive")


def euler_step(x, y, heading, speed, steering, accel, wheelbase, dt):
    """One Euler step on scalars or broadcastable arrays.

    Position and heading use the speed at the start of the step.
    """
    x_next = x + speed * np.cos(heading) * dt
    y_next = y + speed * np.sin(heading) * dt
    heading_next = heading + speed / wheelbase * np.tan(steering) * dt
    speed_next = np.maximum(0.0, speed + accel * dt)
    return x_next, y_next, heading_next, speed_next


def step(state: VehicleState, steering: float, accel: float, params: BicycleParams = BicycleParams()) -> VehicleState:
    if abs(steering) > MAX_STEER + 1e-12:
        raise DomainError(f"steering {steering:.4f} rad exceeds 50 deg")
    x, y, heading, speed = euler_step(
        state.x, state.y, state.heading, state.speed, steering, accel, params.wheelbase, params.dt
    )
    return VehicleState(float(x), float(y), float(heading), float(speed), float(steering))


def turning_radius(steering: float, wheelbase: float = 2.7) -> float:
    """Rear-axle radius ``L / tan(delta)`` of the steady-state turn."""
    return wheelbase / np.tan(steering)
