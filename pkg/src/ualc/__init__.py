"""Uncertainty-aware lane centering under adversarial perception attacks."""

from .core import PerceptionFrame, PolyCurve, UncertaintyProfile, VehicleState
from .harness import RunResult, export, mitigation_pct, run_scenario, sweep
from .perception import AttackSpec, PerceptionConfig, Road
from .pipeline import VARIANTS, BaselinePipeline, UncertaintyAwarePipeline
from .scenario import ScenarioConfig, load_scenario, reference_attack

__all__ = [
    "AttackSpec",
    "BaselinePipeline",
    "PerceptionConfig",
    "PerceptionFrame",
    "PolyCurve",
    "Road",
    "RunResult",
    "ScenarioConfig",
    "UncertaintyAwarePipeline",
    "UncertaintyProfile",
    "VARIANTS",
    "VehicleState",
    "export",
    "load_scenario",
    "mitigation_pct",
    "reference_attack",
    "run_scenario",
    "sweep",
]
