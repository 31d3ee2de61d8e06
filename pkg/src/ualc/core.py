"""Shared domain types and conventions.

Frames are ego-relative: ``s`` is distance ahead of the vehicle along its
heading, lateral offsets are positive to the left. Angles are radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

N_POINTS = 192
STATION_SPACING = 0.5
POLY_DEGREE = 3
MAX_STEER = math.radians(50.0)
MAX_HEADING = math.pi / 2


class RangeError(ValueError):
    """Evaluation outside a curve's valid range."""


class HorizonRangeError(RangeError):
    """MPC horizon left the range where the reference curves are defined."""


class DomainError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class RankError(np.linalg.LinAlgError):
    """Least-squares system is rank deficient."""


class DegenerateWeightsError(ValueError):
    pass


def default_stations(n: int = N_POINTS, spacing: float = STATION_SPACING) -> np.ndarray:
    """Stations ``spacing * i`` for ``i = 1..n``."""
    return spacing * np.arange(1, n + 1, dtype=float)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class VehicleState:
    x: float  # m, longitudinal (world)
    y: float  # m, lateral (world), positive left
    heading: float  # rad, 0 along road axis
    speed: float  # m/s
    steering: float = 0.0  # rad, front wheel

    def __post_init__(self):
        if not self.speed >= 0.0:
            raise DomainError(f"speed must be >= 0, got {self.speed}")
        if abs(self.heading) > MAX_HEADING + 1e-12:
            raise DomainError(f"|heading| must be <= pi/2, got {self.heading}")
        if abs(self.steering) > MAX_STEER + 1e-12:
            raise DomainError(f"|steering| must be <= 50 deg, got {self.steering}")


@dataclass(frozen=True)
class PolyCurve:
    """Cubic lateral offset as a function of distance ahead.

    ``coeffs`` are lowest degree first.
    """

    coeffs: tuple
    valid_range: tuple = (0.0, N_POINTS * STATION_SPACING)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if len(coeffs) != POLY_DEGREE + 1:
            raise ShapeError(f"expected {POLY_DEGREE + 1} coefficients, got {len(coeffs)}")
        lo, hi = (float(v) for v in self.valid_range)
        if not lo < hi:
            raise DomainError(f"empty valid range {self.valid_range}")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "valid_range", (lo, hi))

    def __call__(self, s):
        return eval_poly(self, s)

    def raw(self, s):
        """Evaluate without the range check (extrapolation)."""
        return np.polynomial.polynomial.polyval(s, self.coeffs)

    def derivative(self, s, order: int = 1):
        d = np.polynomial.polynomial.polyder(self.coeffs, order)
        return np.polynomial.polynomial.polyval(s, d)

    def scaled(self, factor: float) -> "PolyCurve":
        return PolyCurve(tuple(factor * c for c in self.coeffs), self.valid_range)

    def shifted(self, offset: float) -> "PolyCurve":
        c = list(self.coeffs)
        c[0] += offset
        return PolyCurve(tuple(c), self.valid_range)


def combine_curves(weights, curves) -> PolyCurve:
    """Linear combination of curves sharing a valid range."""
    curves = list(curves)
    ranges = {c.valid_range for c in curves}
    if len(ranges) != 1:
        raise DomainError(f"curves have different valid ranges: {sorted(ranges)}")
    coeffs = np.zeros(POLY_DEGREE + 1)
    for w, c in zip(weights, curves):
        coeffs += w * np.asarray(c.coeffs)
    return PolyCurve(tuple(coeffs), curves[0].valid_range)


def eval_poly(curve: PolyCurve, s):
    """Evaluate ``sum(coeffs[k] * s**k)``; raises RangeError outside valid_range."""
    lo, hi = curve.valid_range
    arr = np.asarray(s, dtype=float)
    if arr.size and (np.any(~np.isfinite(arr)) or arr.min() < lo or arr.max() > hi):
        raise RangeError(f"s outside valid range [{lo}, {hi}]")
    out = np.polynomial.polynomial.polyval(arr, curve.coeffs)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class LanePointSet:
    offsets: np.ndarray
    stations: np.ndarray = field(default_factory=default_stations)

    def __post_init__(self):
        offsets = _frozen(self.offsets)
        stations = _frozen(self.stations)
        if offsets.shape != (N_POINTS,) or stations.shape != (N_POINTS,):
            raise ShapeError(f"lane point sets hold exactly {N_POINTS} points")
        if stations[0] < 0 or np.any(np.diff(stations) <= 0):
            raise DomainError("stations must be non-negative and strictly increasing")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "stations", stations)


@dataclass(frozen=True, eq=False)
class UncertaintyProfile:
    """Per-point variances; ``sigma_total_sq`` is always data + model."""

    sigma_data_sq: np.ndarray
    sigma_model_sq: np.ndarray
    sigma_total_sq: np.ndarray = field(init=False)

    def __post_init__(self):
        data = _frozen(self.sigma_data_sq)
        model = _frozen(self.sigma_model_sq)
        if data.shape != model.shape or data.ndim != 1:
            raise ShapeError(f"variance shapes differ: {data.shape} vs {model.shape}")
        if np.any(data < 0) or np.any(model < 0):
            raise DomainError("variances must be non-negative")
        object.__setattr__(self, "sigma_data_sq", data)
        object.__setattr__(self, "sigma_model_sq", model)
        object.__setattr__(self, "sigma_total_sq", _frozen(data + model))

    @classmethod
    def data_only(cls, sigma_data_sq) -> "UncertaintyProfile":
        d = np.asarray(sigma_data_sq, dtype=float)
        return cls(d, np.zeros_like(d))

    @property
    def sigma_total(self) -> np.ndarray:
        return np.sqrt(self.sigma_total_sq)

    @property
    def sigma_data(self) -> np.ndarray:
        return np.sqrt(self.sigma_data_sq)


def combine_confidence(left: float, right: float, mode: str = "product") -> float:
    if mode == "product":
        return left * right
    if mode == "min":
        return min(left, right)
    raise ConfigError(f"unknown confidence combiner {mode!r}")


@dataclass(frozen=True, eq=False)
class PerceptionFrame:
    left: LanePointSet
    right: LanePointSet
    path: LanePointSet
    left_unc: UncertaintyProfile
    right_unc: UncertaintyProfile
    path_unc: UncertaintyProfile
    left_conf: float
    right_conf: float
    lr_conf: float
    tick: int
    timestamp: float
    pose: tuple = (0.0, 0.0, 0.0)  # world (x, y, heading) of the ego at capture

    def __post_init__(self):
        for name in ("left_conf", "right_conf", "lr_conf"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")
