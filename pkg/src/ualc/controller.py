"""Lateral MPC with bounded-lane terms, speed adaptation and longitudinal PID."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    MAX_HEADING,
    MAX_STEER,
    ConfigError,
    HorizonRangeError,
    PolyCurve,
    VehicleState,
)

RUNNING_TERMS = ("path", "left_bound", "right_bound", "heading", "heading_rate", "steer_penalty")
TERMINAL_TERMS = RUNNING_TERMS[:4]


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 20
    dt: float = 0.05
    wheelbase: float = 2.7
    running_weights: tuple = (1.0, 1.0, 1.0, 1.0, 0.1, 0.01)
    terminal_weights: tuple = (1.0, 1.0, 1.0, 1.0)
    stage_weights: Optional[tuple] = None  # per-stage running weights, shape (horizon, 6)
    max_steer: float = MAX_STEER
    max_heading: float = MAX_HEADING
    solver_iters: int = 50
    solver_tol: float = 1e-12
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.horizon < 1 or self.dt <= 0 or self.wheelbase <= 0:
            raise ConfigError("horizon must be >= 1, dt and wheelbase positive")
        if len(self.running_weights) != len(RUNNING_TERMS) or len(self.terminal_weights) != len(TERMINAL_TERMS):
            raise ConfigError("running weights need 6 entries, terminal weights 4")
        if min(self.running_weights) < 0 or min(self.terminal_weights) < 0:
            raise ConfigError("weights must be non-negative")
        if self.stage_weights is not None:
            w = np.asarray(self.stage_weights, dtype=float)
            if w.shape != (self.horizon, len(RUNNING_TERMS)) or np.any(w < 0):
                raise ConfigError("stage_weights must be non-negative with shape (horizon, 6)")
        if not (0 < self.max_steer <= MAX_STEER + 1e-12 and 0 < self.max_heading <= MAX_HEADING + 1e-12):
            raise ConfigError("steering/heading limits must lie in (0, 50 deg] / (0, 90 deg]")
        if self.solver_iters < 1 or self.solver_tol < 0:
            raise ConfigError("solver_iters must be >= 1 and solver_tol >= 0")

    def running_weight_matrix(self) -> np.ndarray:
        if self.stage_weights is not None:
            return np.asarray(self.stage_weights, dtype=float)
        return np.tile(np.asarray(self.running_weights, dtype=float), (self.horizon, 1))


@dataclass
class MpcSolution:
    steering: float
    controls: np.ndarray
    states: np.ndarray  # (N + 1, 3): x, y, heading
    cost: float
    cost_history: list = field(default_factory=list)
    iterations: int = 0


def _horner(coeffs, x):
    c0, c1, c2, c3 = coeffs
    return c0 + x * (c1 + x * (c2 + x * c3))


class LaneKeepingProblem:
    """Residual form of the tracking cost for a batch of steering sequences.

    Curves are in the same frame as the initial state. Speed is constant over
    the horizon.
    """

    def __init__(self, state: VehicleState, p_d: PolyCurve, p_l: PolyCurve, p_r: PolyCurve, cfg: MpcConfig, speed: Optional[float] = None):
        self.cfg = cfg
        self.x0, self.y0, self.h0 = state.x, state.y, state.heading
        self.v = state.speed if speed is None else float(speed)
        self.p_d, self.p_l, self.p_r = p_d, p_l, p_r
        d = np.asarray(p_d.coeffs)
        self._d1 = (d[1], 2 * d[2], 3 * d[3])
        self._d2 = (2 * d[2], 6 * d[3])
        lo = max(c.valid_range[0] for c in (p_d, p_l, p_r))
        hi = min(c.valid_range[1] for c in (p_d, p_l, p_r))
        self.valid = (lo, hi)
        self._sqrt_run = np.sqrt(cfg.running_weight_matrix())  # (N, 6)
        self._sqrt_term = np.sqrt(np.asarray(cfg.terminal_weights, dtype=float))

    def rollout(self, u: np.ndarray):
        """States after each control; u has shape (B, N). Returns x, y, h of shape (B, N + 1)."""
        cfg = self.cfg
        B, N = u.shape
        x = np.empty((B, N + 1))
        y = np.empty((B, N + 1))
        h = np.empty((B, N + 1))
        x[:, 0], y[:, 0], h[:, 0] = self.x0, self.y0, self.h0
        step = self.v * cfg.dt
        yaw_gain = step / cfg.wheelbase
        tan_u = np.tan(u)
        for i in range(N):
            hi = h[:, i]
            x[:, i + 1] = x[:, i] + step * np.cos(hi)
            y[:, i + 1] = y[:, i] + step * np.sin(hi)
            h[:, i + 1] = np.clip(hi + yaw_gain * tan_u[:, i], -cfg.max_heading, cfg.max_heading)
        return x, y, h

    def residuals(self, u: np.ndarray) -> np.ndarray:
        """Weighted residual vectors, shape (B, 6N + 4); cost is the squared norm."""
        u = np.atleast_2d(u)
        x, y, h = self.rollout(u)
        xs, ys, hs = x[:, 1:], y[:, 1:], h[:, 1:]
        lo, hi = self.valid
        if not (np.all(np.isfinite(xs)) and xs.min() >= lo and xs.max() <= hi):
            raise HorizonRangeError(f"horizon reaches x outside [{lo}, {hi}]")
        pd = _horner(self.p_d.coeffs, xs)
        slope = self._d1[0] + xs * (self._d1[1] + xs * self._d1[2])
        curv2 = self._d2[0] + xs * self._d2[1]
        kappa = curv2 / (1.0 + slope**2) ** 1.5
        path_err = pd - ys
        left = np.exp(-(_horner(self.p_l.coeffs, xs) - ys))
        right = np.exp(_horner(self.p_r.coeffs, xs) - ys)
        head_err = hs - np.arctan(slope)
        rate_err = np.diff(h, axis=1) / self.cfg.dt - self.v * kappa
        running = np.stack([path_err, left, right, head_err, rate_err, u**2], axis=2) * self._sqrt_run
        terminal = np.stack([path_err[:, -1], left[:, -1], right[:, -1], head_err[:, -1]], axis=1) * self._sqrt_term
        out = np.concatenate([running.reshape(u.shape[0], -1), terminal], axis=1)
        if not np.all(np.isfinite(out)):
            raise HorizonRangeError("non-finite MPC cost")
        return out

    def cost(self, u) -> np.ndarray:
        r = self.residuals(u)
        return np.einsum("ij,ij->i", r, r)

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        """Central-difference Jacobian of the residuals, shape (M, N)."""
        N = u.size
        h = self.cfg.fd_step
        eye = np.eye(N) * h
        batch = np.vstack([u + eye, u - eye])
        r = self.residuals(batch)
        return ((r[:N] - r[N:]) / (2 * h)).T


def solve_mpc(problem: LaneKeepingProblem, u0: Optional[np.ndarray] = None) -> MpcSolution:
    """Projected damped Gauss-Newton descent from ``u0`` (zeros by default).

    A step is only accepted when it lowers the cost, so the recorded cost
    history never increases. Steering is projected onto the box every
    iteration.
    """
    cfg = problem.cfg
    N = cfg.horizon
    lim = cfg.max_steer
    u = np.zeros(N) if u0 is None else np.clip(np.asarray(u0, dtype=float), -lim, lim)
    r = problem.residuals(u)[0]
    cost = float(r @ r)
    history = [cost]
    lam = 1e-4
    iterations = 0
    for _ in range(cfg.solver_iters):
        iterations += 1
        J = problem.jacobian(u)
        g = J.T @ r
        H = J.T @ J
        scale = max(float(np.max(np.diag(H))), 1e-12)
        new = None
        for _ in range(16):
            try:
                delta = np.linalg.solve(H + lam * scale * np.eye(N), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = np.clip(u + delta, -lim, lim)
            r_c = problem.residuals(cand)[0]
            c_c = float(r_c @ r_c)
            if c_c < cost:
                new = (cand, r_c, c_c)
                lam = max(lam / 5.0, 1e-10)
                break
            lam *= 8.0
        if new is None:
            # projected gradient fallback with backtracking
            step = 1.0 / scale
            for _ in range(30):
                cand = np.clip(u - step * g, -lim, lim)
                r_c = problem.residuals(cand)[0]
                c_c = float(r_c @ r_c)
                if c_c < cost:
                    new = (cand, r_c, c_c)
                    break
                step *= 0.5
        if new is None:
            break
        improvement = cost - new[2]
        u, r, cost = new
        history.append(cost)
        if improvement <= cfg.solver_tol:
            break
    x, y, h = problem.rollout(u[None, :])
    states = np.stack([x[0], y[0], h[0]], axis=1)
    return MpcSolution(float(u[0]), u, states, cost, history, iterations)


def mpc_steer(
    state: VehicleState,
    p_d: PolyCurve,
    p_l: PolyCurve,
    p_r: PolyCurve,
    cfg: MpcConfig = MpcConfig(),
    speed: Optional[float] = None,
) -> MpcSolution:
    """First steering command of the optimized sequence, plus the predicted states."""
    return solve_mpc(LaneKeepingProblem(state, p_d, p_l, p_r, cfg, speed))


@dataclass(frozen=True)
class SpeedAdaptConfig:
    alpha_max: float = 4.0  # m/s^2
    v_min: float = 5.0  # m/s
    v_ref: float = 20.0  # m/s cruise
    dt: float = 0.05

    def __post_init__(self):
        if self.alpha_max <= 0 or self.dt <= 0:
            raise ConfigError("alpha_max and dt must be positive")
        if not 0 < self.v_min <= self.v_ref:
            raise ConfigError("need 0 < v_min <= v_ref")


def adapt_speed(v_current: float, conf: float, cfg: SpeedAdaptConfig = SpeedAdaptConfig(), conf_threshold: float = 0.5) -> float:
    """Emergency brake ramp while confidence is low, cruise otherwise."""
    if conf < conf_threshold:
        return max(v_current - cfg.alpha_max * cfg.dt, cfg.v_min)
    return cfg.v_ref


@dataclass(frozen=True)
class PidGains:
    kp: float = 20.0
    ki: float = 0.5
    kd: float = 0.0
    dt: float = 0.05
    accel_min: float = -4.0
    accel_max: float = 2.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.kp, self.ki, self.kd)):
            raise ConfigError("PID gains must be finite")
        if self.dt <= 0 or not self.accel_min < self.accel_max:
            raise ConfigError("need dt > 0 and accel_min < accel_max")


class LongitudinalPID:
    """PID on speed error with conditional-integration anti-windup."""

    def __init__(self, gains: PidGains = PidGains()):
        self.gains = gains
        self.integral = 0.0
        self.prev_error: Optional[float] = None

    def reset(self):
        self.integral = 0.0
        self.prev_error = None

    def step(self, v_current: float, v_ref: float) -> float:
        g = self.gains
        error = v_ref - v_current
        deriv = 0.0 if self.prev_error is None else (error - self.prev_error) / g.dt
        self.prev_error = error
        candidate = self.integral + error * g.dt
        raw = g.kp * error + g.ki * candidate + g.kd * deriv
        out = min(g.accel_max, max(g.accel_min, raw))
        # freeze the integrator while saturated in the direction of the error
        if out == raw or (raw > out and error < 0) or (raw < out and error > 0):
            self.integral = candidate
        else:
            out = min(g.accel_max, max(g.accel_min, g.kp * error + g.ki * self.integral + g.kd * deriv))
        return out
