"""Desired-path planning: confidence-weighted fusion, uncertainty-aware blend, state cache."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .bounding import fit_plain_lane
from .core import (
    ConfigError,
    LanePointSet,
    DegenerateWeightsError,
    PerceptionFrame,
    PolyCurve,
    UncertaintyProfile,
    combine_curves,
)


@dataclass(frozen=True)
class PlannerConfig:
    conf_threshold: float = 0.5
    cache_size: int = 7  # frames, 0.35 s at 20 Hz
    lane_width: float = 3.7
    uncertainty_source: str = "total"  # which sigma feeds left_sum/right_sum

    def __post_init__(self):
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise ConfigError("conf_threshold must lie in [0, 1]")
        if self.cache_size < 1:
            raise ConfigError("cache_size must be >= 1")
        if self.lane_width <= 0:
            raise ConfigError("lane_width must be positive")
        if self.uncertainty_source not in ("total", "data"):
            raise ConfigError(f"unknown uncertainty source {self.uncertainty_source!r}")


def fuse_lanes(p_left: PolyCurve, p_right: PolyCurve, p_path: PolyCurve, c_left, c_right, c_path, lane_width=3.7) -> PolyCurve:
    """Confidence-weighted average of lane-derived centerlines and the predicted path."""
    total = c_left + c_right + c_path
    if not total > 0:
        raise DegenerateWeightsError("all fusion weights are zero")
    half = 0.5 * lane_width
    left_center = p_left.shifted(-half)
    right_center = p_right.shifted(half)
    return combine_curves(
        [c_left / total, c_right / total, c_path / total],
        [left_center, right_center, p_path],
    )


def baseline_desired_path(frame: PerceptionFrame, lane_width: float = 3.7) -> PolyCurve:
    """Original fusion: lanes weighted by their confidence, path by ``1 - lr_conf``."""
    return fuse_lanes(
        fit_plain_lane(frame.left),
        fit_plain_lane(frame.right),
        fit_plain_lane(frame.path),
        frame.left_conf,
        frame.right_conf,
        1.0 - frame.lr_conf,
        lane_width,
    )


def lane_weights(left_unc: UncertaintyProfile, right_unc: UncertaintyProfile, source: str = "total") -> tuple[float, float]:
    """Weights for the bounded lanes; the less uncertain lane gets more weight."""
    if source == "total":
        left_sum = float(np.sum(left_unc.sigma_total))
        right_sum = float(np.sum(right_unc.sigma_total))
    else:
        left_sum = float(np.sum(left_unc.sigma_data))
        right_sum = float(np.sum(right_unc.sigma_data))
    total = left_sum + right_sum
    if total == 0.0:
        return 0.5, 0.5
    return right_sum / total, left_sum / total


def desired_path(
    p_left: PolyCurve,
    p_right: PolyCurve,
    left_unc: UncertaintyProfile,
    right_unc: UncertaintyProfile,
    lr_conf: float,
    frame: PerceptionFrame,
    cfg: PlannerConfig = PlannerConfig(),
    p_openpilot: Optional[PolyCurve] = None,
) -> PolyCurve:
    """Uncertainty-aware desired path.

    High confidence returns the baseline fusion unchanged. Below the
    threshold the bounded lanes are blended by inverse accumulated
    uncertainty, and the result is mixed with the baseline using ``lr_conf``
    as the baseline's share.
    """
    if p_openpilot is None:
        p_openpilot = baseline_desired_path(frame, cfg.lane_width)
    if lr_conf >= cfg.conf_threshold:
        return p_openpilot
    w_left, w_right = lane_weights(left_unc, right_unc, cfg.uncertainty_source)
    p_weighted = combine_curves([w_left, w_right], [p_left, p_right])
    return combine_curves([1.0 - lr_conf, lr_conf], [p_weighted, p_openpilot])


class StateCache:
    """FIFO ring buffer of the most recent k perception frames."""

    def __init__(self, k: int = 7):
        if k < 1:
            raise ConfigError("cache size must be >= 1")
        self.k = k
        self._frames: deque[PerceptionFrame] = deque(maxlen=k)

    def push(self, frame: PerceptionFrame) -> None:
        self._frames.append(frame)

    def __len__(self):
        return len(self._frames)

    def __iter__(self):
        return iter(self._frames)

    def frames(self) -> list[PerceptionFrame]:
        return list(self._frames)

    def best(self) -> PerceptionFrame:
        """Highest-confidence cached frame; ties go to the most recent."""
        if not self._frames:
            raise LookupError("state cache is empty")
        best = None
        for frame in self._frames:
            if best is None or frame.lr_conf >= best.lr_conf:
                best = frame
        return best


def _resample(stations, src_stations, values):
    """Linear interpolation, held constant past both ends."""
    return np.interp(stations, src_stations, values)


def reproject_frame(frame: PerceptionFrame, pose) -> PerceptionFrame:
    """Express a cached frame in the ego frame at ``pose``.

    Points are moved through the world frame and resampled onto the original
    stations; variances travel with their points.
    """
    if tuple(pose) == tuple(frame.pose):
        return frame
    xo, yo, ho = frame.pose
    xn, yn, hn = pose
    co, so = math.cos(ho), math.sin(ho)
    cn, sn = math.cos(hn), math.sin(hn)
    updates = {"pose": tuple(pose)}
    for side in ("left", "right", "path"):
        pts: LanePointSet = getattr(frame, side)
        unc: UncertaintyProfile = getattr(frame, f"{side}_unc")
        s, l = pts.stations, pts.offsets
        dx = xo + s * co - l * so - xn
        dy = yo + s * so + l * co - yn
        s_new = dx * cn + dy * sn
        l_new = -dx * sn + dy * cn
        order = np.argsort(s_new, kind="stable")
        s_new, l_new = s_new[order], l_new[order]
        updates[side] = LanePointSet(_resample(pts.stations, s_new, l_new), pts.stations)
        data = np.maximum(_resample(pts.stations, s_new, unc.sigma_data_sq[order]), 0.0)
        model = np.maximum(_resample(pts.stations, s_new, unc.sigma_model_sq[order]), 0.0)
        updates[f"{side}_unc"] = UncertaintyProfile(data, model)
    return replace(frame, **updates)


def cache_select(cache: StateCache, current: PerceptionFrame, conf_threshold: float = 0.5, reproject: bool = True) -> PerceptionFrame:
    """Current frame when confident, otherwise the most confident cached frame.

    The cached frame is re-expressed in the current ego frame unless
    ``reproject`` is False.
    """
    if current.lr_conf >= conf_threshold:
        return current
    best = cache.best()
    if reproject and best is not current:
        return reproject_frame(best, current.pose)
    return best
