"""Evolutionary scheduling of campus activities and battery dispatch
against forecasted electricity load and prices."""

from .kernels import BACKEND as KERNEL_BACKEND
from .model import (
    Activity,
    Battery,
    Building,
    Horizon,
    Instance,
    InstanceError,
    ParseError,
    SeriesFrame,
    generate_synthetic_instance,
    parse_instance,
    serialize_instance,
)
from .objective import (
    CostBreakdown,
    Schedule,
    evaluate_schedule,
    mase,
    schedule_cost,
    total_load_series,
)
from .precedence import PrecedenceInfo, allowed_weekdays, compute_levels

__version__ = "0.1.0"

__all__ = [
    "Activity",
    "Battery",
    "Building",
    "CostBreakdown",
    "Horizon",
    "Instance",
    "InstanceError",
    "KERNEL_BACKEND",
    "ParseError",
    "PrecedenceInfo",
    "Schedule",
    "SeriesFrame",
    "allowed_weekdays",
    "compute_levels",
    "evaluate_schedule",
    "generate_synthetic_instance",
    "mase",
    "parse_instance",
    "schedule_cost",
    "serialize_instance",
    "total_load_series",
]
