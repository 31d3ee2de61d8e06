"""Synthetic lane perception with data/model uncertainty and an attack channel.

The generative model stands in for the perception network. Each predicted
point is ground truth plus a set of internal noise components; the data
variance head reports the exact variance of those components, and
Monte-Carlo dropout masks them to obtain a model variance.

The attack channel emulates a dirty road patch at the output level: while
the patch is inside the lookahead window, lane confidences fall toward a
floor, the predicted path is pushed sideways, and noise far ahead grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .core import (
    ConfigError,
    LanePointSet,
    PerceptionFrame,
    ShapeError,
    DomainError,
    UncertaintyProfile,
    VehicleState,
    combine_confidence,
    default_stations,
)

SIDES = ("left", "right", "path")


@dataclass(frozen=True)
class Road:
    """Straight or constant-curvature road, centerline ``Y = k X^2 / 2``.

    Lane lines sit at ``+-lane_width/2`` from the centerline; the parabola is
    the small-angle form of a circular arc.
    """

    lane_width: float = 3.7
    length: float = 1000.0
    curvature: float = 0.0
    lateral_extent: float = 7.4  # |deviation| beyond this leaves the road
    start: float = -200.0  # m, road begins before the origin to allow a lead-in

    def __post_init__(self):
        if self.lane_width <= 0 or self.length <= 0 or self.lateral_extent <= 0:
            raise ConfigError("road dimensions must be positive")

    def center(self, x):
        return 0.5 * self.curvature * np.asarray(x, dtype=float) ** 2

    def center_slope(self, x):
        return self.curvature * np.asarray(x, dtype=float)

    def deviation(self, state: VehicleState) -> float:
        """Signed lateral distance from lane center, positive left."""
        return float(state.y - self.center(state.x))

    def contains(self, state: VehicleState) -> bool:
        return self.start <= state.x <= self.length and abs(self.deviation(state)) <= self.lateral_extent


@dataclass(frozen=True)
class PerceptionConfig:
    base_noise_sigma: float = 0.05  # m
    noise_growth: float = 0.02  # 1/m
    mc_samples: int = 20
    dropout_rate: float = 0.2
    seed: int = 0
    benign_conf: float = 0.9
    lookahead: float = 96.0  # m, window in which a patch affects perception
    station_spacing: float = 0.5
    conf_combiner: str = "product"

    def __post_init__(self):
        if self.mc_samples < 2:
            raise ConfigError("mc_samples must be >= 2")
        if not 0.0 < self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in (0, 1)")
        if self.base_noise_sigma <= 0 or self.noise_growth < 0:
            raise ConfigError("noise parameters must be positive")
        if not 0.0 <= self.benign_conf <= 1.0:
            raise ConfigError("benign_conf must lie in [0, 1]")
        if self.lookahead <= 0 or self.station_spacing <= 0:
            raise ConfigError("lookahead and station_spacing must be positive")
        combine_confidence(1.0, 1.0, self.conf_combiner)

    @property
    def stations(self) -> np.ndarray:
        return default_stations(spacing=self.station_spacing)


@dataclass(frozen=True)
class AttackSpec:
    """Emulated dirty-patch attack.

    ``strength`` plays the role of the perturbation area ratio. Its effect is
    ``strength ** strength_exponent`` so that partial patches remain
    effective; 0 and 1 map to themselves.
    """

    patch_start: float = 40.0  # m along the road
    patch_length: float = 96.0  # m
    strength: float = 0.0
    path_bias_gain: float = 1.5  # m, positive pushes the predicted path left
    conf_floor: float = 0.1  # overall confidence under full attack
    strength_exponent: float = 0.25
    uncertainty_gain: float = 8.0
    frame_jitter: float = 0.0  # per-frame fraction of the attack that may fail

    def __post_init__(self):
        if self.patch_length <= 0:
            raise ConfigError("patch_length must be positive")
        if not 0.0 <= self.strength <= 1.0:
            raise ConfigError("strength must lie in [0, 1]")
        if not 0.0 <= self.conf_floor <= 1.0:
            raise ConfigError("conf_floor must lie in [0, 1]")
        if self.strength_exponent <= 0 or self.uncertainty_gain < 0:
            raise ConfigError("strength_exponent must be positive, uncertainty_gain non-negative")
        if not 0.0 <= self.frame_jitter <= 1.0:
            raise ConfigError("frame_jitter must lie in [0, 1]")

    @property
    def effectiveness(self) -> float:
        return self.strength**self.strength_exponent if self.strength > 0 else 0.0

    def overlap(self, x: float, lookahead: float, road_end: float = math.inf) -> float:
        """Fraction of the lookahead window covered by the patch."""
        lo, hi = x, min(x + lookahead, road_end)
        covered = min(hi, self.patch_start + self.patch_length) - max(lo, self.patch_start)
        return max(0.0, covered) / min(lookahead, self.patch_length)

    def level(self, x: float, lookahead: float, road_end: float = math.inf, jitter_draw: float = 0.0) -> float:
        """Attack level in [0, 1] for one frame; ``jitter_draw`` is uniform in [0, 1)."""
        base = self.effectiveness * self.overlap(x, lookahead, road_end)
        return base * (1.0 - self.frame_jitter * jitter_draw)


NO_ATTACK = AttackSpec(strength=0.0)


class LaneModel(NamedTuple):
    """One output head: prediction = base + scaled_mask @ components."""

    base: np.ndarray  # (n,)
    components: np.ndarray  # (K, n)
    variance: np.ndarray  # (n,), variance of the random components

    def forward(self, scaled_mask=None) -> np.ndarray:
        if scaled_mask is None:
            return self.base + self.components.sum(axis=0)
        return self.base + scaled_mask @ self.components


def ego_lateral_offsets(road: Road, state: VehicleState, stations, line_offset: float) -> np.ndarray:
    """Lateral offset, in the ego frame, of the road line at ``line_offset``.

    Solves for ``l`` such that the world point at ego coordinates ``(s, l)``
    lies on ``Y = center(X) + line_offset``.
    """
    s = np.asarray(stations, dtype=float)
    c, sn = math.cos(state.heading), math.sin(state.heading)
    lat = road.center(state.x + s * c) + line_offset - state.y - s * sn
    for _ in range(6):
        wx = state.x + s * c - lat * sn
        resid = state.y + s * sn + lat * c - road.center(wx) - line_offset
        lat = lat - resid / (c + road.center_slope(wx) * sn)
        if np.max(np.abs(resid)) < 1e-13:
            break
    return lat


def confidences(level: float, attack: AttackSpec, cfg: PerceptionConfig) -> tuple[float, float, float]:
    if cfg.conf_combiner == "product":
        lane_floor = math.sqrt(attack.conf_floor)
    else:
        lane_floor = attack.conf_floor
    lane = cfg.benign_conf - (cfg.benign_conf - lane_floor) * level
    lane = min(1.0, max(0.0, lane))
    return lane, lane, combine_confidence(lane, lane, cfg.conf_combiner)


def noise_sigma(stations, level: float, attack: AttackSpec, cfg: PerceptionConfig) -> np.ndarray:
    s = np.asarray(stations, dtype=float)
    benign = cfg.base_noise_sigma * (1.0 + cfg.noise_growth * s)
    return benign * (1.0 + attack.uncertainty_gain * level * s / s[-1])


def _rng(cfg: PerceptionConfig, tick: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, tick, stream])


def lane_models(road: Road, state: VehicleState, attack: AttackSpec, cfg: PerceptionConfig, tick: int):
    """Build the three output heads for one tick; returns (models, level)."""
    stations = cfg.stations
    rng = _rng(cfg, tick, 0)
    z = rng.standard_normal((3, stations.size))
    level = attack.level(state.x, cfg.lookahead, road.length, jitter_draw=rng.random())
    sigma = noise_sigma(stations, level, attack, cfg)
    truth = {
        "left": ego_lateral_offsets(road, state, stations, 0.5 * road.lane_width),
        "right": ego_lateral_offsets(road, state, stations, -0.5 * road.lane_width),
        "path": ego_lateral_offsets(road, state, stations, 0.0),
    }
    models = {}
    for i, side in enumerate(SIDES):
        comps = np.diag(sigma * z[i])
        if side == "path":
            bias = np.full((1, stations.size), attack.path_bias_gain * level)
            comps = np.vstack([comps, bias])
        models[side] = LaneModel(truth[side], comps, sigma**2)
    return models, level


def observe(
    road: Road,
    state: VehicleState,
    attack: AttackSpec = NO_ATTACK,
    cfg: PerceptionConfig = PerceptionConfig(),
    tick: int = 0,
    dt: float = 0.05,
) -> PerceptionFrame:
    """One perception frame with data variance only (model variance zero)."""
    models, level = lane_models(road, state, attack, cfg, tick)
    left_conf, right_conf, lr_conf = confidences(level, attack, cfg)
    stations = cfg.stations
    pts = {side: LanePointSet(m.forward(), stations) for side, m in models.items()}
    unc = {side: UncertaintyProfile.data_only(m.variance) for side, m in models.items()}
    return PerceptionFrame(
        left=pts["left"],
        right=pts["right"],
        path=pts["path"],
        left_unc=unc["left"],
        right_unc=unc["right"],
        path_unc=unc["path"],
        left_conf=left_conf,
        right_conf=right_conf,
        lr_conf=lr_conf,
        tick=tick,
        timestamp=tick * dt,
        pose=(state.x, state.y, state.heading),
    )


def dropout_masks(n_components: int, T: int, dropout: float, seed) -> np.ndarray:
    """(T, K) Bernoulli(1 - dropout) keep masks, rescaled by 1 / (1 - dropout)."""
    if T < 2:
        raise ConfigError("Monte-Carlo dropout needs T >= 2 samples")
    if not 0.0 < dropout < 1.0:
        raise ConfigError("dropout rate must lie in (0, 1)")
    keep = np.random.default_rng(seed).random((T, n_components)) >= dropout
    return keep / (1.0 - dropout)


def mc_samples(forward: Callable[[np.ndarray], np.ndarray], n_components: int, T: int, dropout: float, seed) -> np.ndarray:
    """Evaluate ``forward`` under T dropout masks; rows in sample order."""
    masks = dropout_masks(n_components, T, dropout, seed)
    return np.stack([np.asarray(forward(m), dtype=float) for m in masks])


def sample_variance(samples) -> np.ndarray:
    """Population variance over axis 0: ``mean((mu_t - mean(mu))**2)``."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    # shifting by the first sample is exact for identical samples and
    # leaves the variance unchanged otherwise
    centered = samples - samples[0]
    mean = centered.sum(axis=0) / samples.shape[0]
    return ((centered - mean) ** 2).sum(axis=0) / samples.shape[0]


def mc_model_uncertainty(forward, n_components: int, T: int = 20, dropout: float = 0.2, seed=0) -> UncertaintyProfile:
    """Model variance by Monte-Carlo dropout; data variance left at zero."""
    var = sample_variance(mc_samples(forward, n_components, T, dropout, seed))
    return UncertaintyProfile(np.zeros_like(var), var)


def total_variance(data: UncertaintyProfile, model: UncertaintyProfile) -> UncertaintyProfile:
    if data.sigma_data_sq.shape != model.sigma_model_sq.shape:
        raise ShapeError(f"point counts differ: {data.sigma_data_sq.shape} vs {model.sigma_model_sq.shape}")
    return UncertaintyProfile(data.sigma_data_sq, model.sigma_model_sq)


def nll_loss(y, mu, sigma_sq):
    """Gaussian negative log-likelihood without the constant; mean over arrays."""
    sigma_sq = np.asarray(sigma_sq, dtype=float)
    if np.any(~(sigma_sq > 0)):
        raise DomainError("sigma_sq must be positive")
    resid = np.asarray(y, dtype=float) - np.asarray(mu, dtype=float)
    loss = np.log(sigma_sq) / 2.0 + resid**2 / (2.0 * sigma_sq)
    return float(np.mean(loss))


def estimate_uncertainty(
    frame: PerceptionFrame,
    road: Road,
    state: VehicleState,
    attack: AttackSpec = NO_ATTACK,
    cfg: PerceptionConfig = PerceptionConfig(),
) -> PerceptionFrame:
    """Fill model variance by MC dropout and form the total variance per head."""
    models, _ = lane_models(road, state, attack, cfg, frame.tick)
    updated = {}
    for i, side in enumerate(SIDES):
        m = models[side]
        model = mc_model_uncertainty(
            m.forward, m.components.shape[0], cfg.mc_samples, cfg.dropout_rate, seed=[cfg.seed, frame.tick, 1 + i]
        )
        updated[f"{side}_unc"] = total_variance(getattr(frame, f"{side}_unc"), model)
    return replace(frame, **updated)
