"""Per-tick orchestration for the baseline and the uncertainty-aware pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bounding import fit_bounded_lane, fit_plain_lane
from .controller import (
    LongitudinalPID,
    MpcConfig,
    MpcSolution,
    PidGains,
    SpeedAdaptConfig,
    adapt_speed,
    mpc_steer,
)
from .core import PerceptionFrame, PolyCurve, VehicleState
from .perception import NO_ATTACK, AttackSpec, PerceptionConfig, Road, estimate_uncertainty, observe
from .planner import PlannerConfig, StateCache, baseline_desired_path, cache_select, desired_path

VARIANTS = ("baseline", "mitigated", "mitigated_no_cache")


@dataclass(frozen=True)
class PipelineConfig:
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    speed: SpeedAdaptConfig = field(default_factory=SpeedAdaptConfig)
    pid: PidGains = field(default_factory=PidGains)


@dataclass
class TickResult:
    steering: float
    accel: float
    v_ref: float
    lr_conf: float
    low_confidence: bool
    frame: PerceptionFrame
    selected: PerceptionFrame
    desired: PolyCurve
    p_left: PolyCurve
    p_right: PolyCurve
    mpc: MpcSolution

    @property
    def sigma_left_sum(self) -> float:
        return float(np.sum(self.selected.left_unc.sigma_total))

    @property
    def sigma_right_sum(self) -> float:
        return float(np.sum(self.selected.right_unc.sigma_total))


def ego_origin(state: VehicleState) -> VehicleState:
    """The vehicle expressed in its own frame."""
    return VehicleState(0.0, 0.0, 0.0, state.speed, state.steering)


class BaselinePipeline:
    """Confidence-weighted fusion, plain lane terms in the MPC, constant cruise reference."""

    variant = "baseline"

    def __init__(self, road: Road, attack: AttackSpec = NO_ATTACK, cfg: PipelineConfig = PipelineConfig()):
        self.road = road
        self.attack = attack
        self.cfg = cfg
        self.pid = LongitudinalPID(cfg.pid)

    def tick(self, state: VehicleState, tick: int) -> TickResult:
        cfg = self.cfg
        frame = observe(self.road, state, self.attack, cfg.perception, tick, cfg.mpc.dt)
        p_l = fit_plain_lane(frame.left)
        p_r = fit_plain_lane(frame.right)
        p_d = baseline_desired_path(frame, cfg.planner.lane_width)
        v_ref = cfg.speed.v_ref
        sol = mpc_steer(ego_origin(state), p_d, p_l, p_r, cfg.mpc, speed=v_ref)
        accel = self.pid.step(state.speed, v_ref)
        return TickResult(sol.steering, accel, v_ref, frame.lr_conf, False, frame, frame, p_d, p_l, p_r, sol)


class UncertaintyAwarePipeline:
    """Uncertainty estimation, state cache, bounded-lane planning, speed adaptation, MPC."""

    def __init__(self, road: Road, attack: AttackSpec = NO_ATTACK, cfg: PipelineConfig = PipelineConfig(), use_cache: bool = True):
        self.road = road
        self.attack = attack
        self.cfg = cfg
        self.use_cache = use_cache
        self.cache = StateCache(cfg.planner.cache_size)
        self.pid = LongitudinalPID(cfg.pid)

    @property
    def variant(self) -> str:
        return "mitigated" if self.use_cache else "mitigated_no_cache"

    def tick(self, state: VehicleState, tick: int) -> TickResult:
        cfg = self.cfg
        thr = cfg.planner.conf_threshold
        frame = observe(self.road, state, self.attack, cfg.perception, tick, cfg.mpc.dt)
        frame = estimate_uncertainty(frame, self.road, state, self.attack, cfg.perception)
        self.cache.push(frame)
        conf = frame.lr_conf
        selected = cache_select(self.cache, frame, thr) if self.use_cache else frame
        p_l = fit_bounded_lane(selected.left, selected.left_unc, "left")
        p_r = fit_bounded_lane(selected.right, selected.right_unc, "right")
        p_d = desired_path(p_l, p_r, selected.left_unc, selected.right_unc, conf, selected, cfg.planner)
        v_ref = adapt_speed(state.speed, conf, cfg.speed, thr)
        sol = mpc_steer(ego_origin(state), p_d, p_l, p_r, cfg.mpc, speed=v_ref)
        accel = self.pid.step(state.speed, v_ref)
        return TickResult(sol.steering, accel, v_ref, conf, conf < thr, frame, selected, p_d, p_l, p_r, sol)


def make_pipeline(variant: str, road: Road, attack: AttackSpec, cfg: PipelineConfig):
    if variant == "baseline":
        return BaselinePipeline(road, attack, cfg)
    if variant == "mitigated":
        return UncertaintyAwarePipeline(road, attack, cfg, use_cache=True)
    if variant == "mitigated_no_cache":
        return UncertaintyAwarePipeline(road, attack, cfg, use_cache=False)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
