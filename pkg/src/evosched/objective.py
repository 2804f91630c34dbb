"""Schedule representation, total load accumulation and cost evaluation.

The cost of a schedule is
    energy + peak - reward
with energy = sum_t 0.25 * l_t * e_t / 1000 (load in kW, price in $/MWh),
peak = 0.005 * (max_t l_t)^2, and reward = sum_i d_i * (value_i - o_i * penalty_i)
over the once-off activities. The peak term is charged literally, also when
the maximum load is negative (net export).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Activity, Horizon, Instance, SeriesFrame

INFEASIBLE_COST = 200_000.0
RECURRING_WEEKS = 4


@dataclass(frozen=True)
class RecurringPlacement:
    weekday: int  # 0=Mon .. 4=Fri
    start_slot_of_day: int
    room_ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class OnceOffPlacement:
    start_slot: int  # absolute slot index
    room_ids: tuple[int, ...] = ()
    scheduled: bool = True
    outside_working_hours: bool = False


@dataclass
class Schedule:
    recurring: dict[int, RecurringPlacement] = field(default_factory=dict)
    once_off: dict[int, OnceOffPlacement] = field(default_factory=dict)
    battery_actions: np.ndarray | None = None  # (n_batteries, n_slots), -1/0/+1


@dataclass(frozen=True)
class CostBreakdown:
    energy_cost: float
    peak_cost: float
    once_off_reward: float
    total: float
    peak_kw: float


def recurring_days(horizon: Horizon, weekday: int) -> list[int]:
    """Calendar day indices of the 4 weekly occurrences starting the first Monday."""
    first = horizon.first_monday_day_index + weekday
    return [first + 7 * k for k in range(RECURRING_WEEKS)]


def occupied_slots(horizon: Horizon, activity: Activity, placement) -> np.ndarray:
    """Absolute slot indices occupied by a placed activity."""
    if activity.kind == "recurring":
        starts = [
            d * horizon.slots_per_day + placement.start_slot_of_day
            for d in recurring_days(horizon, placement.weekday)
        ]
    else:
        starts = [placement.start_slot]
    return np.concatenate(
        [np.arange(s, s + activity.duration_slots) for s in starts]
    )


def within_working_hours(horizon: Horizon, start_slot: int, duration: int) -> bool:
    """True when every occupied slot lies inside working hours of a working day."""
    day, slot_of_day = divmod(start_slot, horizon.slots_per_day)
    return (
        horizon.is_working_day(day)
        and horizon.working_start_slot_of_day <= slot_of_day
        and slot_of_day + duration <= horizon.working_end_slot_of_day
    )


def placement_day(horizon: Horizon, activity: Activity, placement) -> int:
    """Calendar day used for precedence comparison (first occurrence for recurring)."""
    if activity.kind == "recurring":
        return horizon.first_monday_day_index + placement.weekday
    return placement.start_slot // horizon.slots_per_day


def battery_grid_effects(instance: Instance, actions: np.ndarray) -> np.ndarray:
    """Per-slot kW seen by the grid for a (n_batteries, n_slots) action array.

    Charging draws max_power_kw from the grid; discharging delivers
    max_power_kw * sqrt(efficiency), so a full cycle returns efficiency
    times the drawn energy.
    """
    effect = np.zeros(actions.shape[1])
    for battery, acts in zip(instance.batteries, actions):
        p = battery.max_power_kw
        effect += np.where(acts > 0, p, 0.0)
        effect -= np.where(acts < 0, p * math.sqrt(battery.efficiency), 0.0)
    return effect


def total_load_series(
    instance: Instance, schedule: Schedule, base_load: SeriesFrame | None = None
) -> SeriesFrame:
    """Base load plus activity draws plus battery grid effects, per slot."""
    base = instance.base_load if base_load is None else base_load
    load = np.array(base.values, dtype=float)
    for aid, placement in schedule.recurring.items():
        activity = instance.activity_by_id(aid)
        for slot_start in (
            d * instance.horizon.slots_per_day + placement.start_slot_of_day
            for d in recurring_days(instance.horizon, placement.weekday)
        ):
            load[slot_start:slot_start + activity.duration_slots] += activity.power_kw
    for aid, placement in schedule.once_off.items():
        if not placement.scheduled:
            continue
        activity = instance.activity_by_id(aid)
        load[placement.start_slot:placement.start_slot + activity.duration_slots] += activity.power_kw
    if schedule.battery_actions is not None and len(instance.batteries) > 0:
        load += battery_grid_effects(instance, schedule.battery_actions)
    return SeriesFrame(start_timestamp=base.start_timestamp, values=load)


def energy_cost_of_load(load: np.ndarray, price: np.ndarray) -> float:
    return float(np.sum(0.25 * load * price) / 1000.0)


def schedule_cost(instance: Instance, schedule: Schedule, load: SeriesFrame) -> CostBreakdown:
    """Evaluate the objective for a pre-computed total load series."""
    values = load.values
    if len(values) != instance.horizon.n_slots:
        raise ValueError("load length does not match the horizon")
    energy = energy_cost_of_load(values, instance.price.values)
    peak_kw = float(np.max(values)) if len(values) else 0.0
    peak = 0.005 * peak_kw**2
    reward = 0.0
    for aid, placement in schedule.once_off.items():
        if placement.scheduled:
            activity = instance.activity_by_id(aid)
            o = 1.0 if placement.outside_working_hours else 0.0
            reward += activity.value - o * activity.penalty
    return CostBreakdown(
        energy_cost=energy,
        peak_cost=peak,
        once_off_reward=reward,
        total=energy + peak - reward,
        peak_kw=peak_kw,
    )


def evaluate_schedule(
    instance: Instance, schedule: Schedule, base_load: SeriesFrame | None = None
) -> CostBreakdown:
    """Convenience wrapper: accumulate the load and evaluate the objective."""
    return schedule_cost(instance, schedule, total_load_series(instance, schedule, base_load))


class MaseDenominatorError(ValueError):
    """Raised when the in-sample seasonal-naive error of the training series is zero."""


def mase(
    forecast: SeriesFrame | np.ndarray,
    actual: SeriesFrame | np.ndarray,
    training: SeriesFrame | np.ndarray,
    season_length: int,
) -> float:
    """Mean absolute scaled error against the in-sample seasonal-naive baseline.

    numerator   = sum_k |F_k - Y_k| over the forecast horizon
    denominator = (h / (M - S)) * sum_{k=S+1..M} |Y_k - Y_{k-S}| on training
    """
    f = np.asarray(forecast.values if isinstance(forecast, SeriesFrame) else forecast, dtype=float)
    y = np.asarray(actual.values if isinstance(actual, SeriesFrame) else actual, dtype=float)
    train = np.asarray(training.values if isinstance(training, SeriesFrame) else training, dtype=float)
    if f.shape != y.shape:
        raise ValueError("forecast and actual must have the same length")
    h = len(f)
    big_m = len(train)
    if big_m <= season_length:
        raise ValueError("training series must be longer than one season")
    numerator = float(np.sum(np.abs(f - y)))
    seasonal_diffs = np.abs(train[season_length:] - train[:-season_length])
    denominator = h / (big_m - season_length) * float(np.sum(seasonal_diffs))
    if denominator == 0.0:
        raise MaseDenominatorError(
            "seasonal-naive in-sample error is zero; MASE is undefined"
        )
    return numerator / denominator
