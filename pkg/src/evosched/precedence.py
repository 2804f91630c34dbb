"""Precedence levels over the activity DAG and admissible weekday windows.

The level of an activity is the minimum number of days that must come
before it (longest predecessor chain); the level-after value is the
minimum number of days needed after it (longest successor chain).
"""

from __future__ import annotations

from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter

from .model import Activity, Instance, InstanceError


@dataclass(frozen=True)
class PrecedenceInfo:
    level: dict[int, int]
    level_after: dict[int, int]


def compute_levels(instance: Instance) -> PrecedenceInfo:
    """Longest-chain depth before (level) and after (level_after) each activity."""
    preds = {a.id: a.precedences for a in instance.activities}
    succs: dict[int, list[int]] = {aid: [] for aid in preds}
    for aid, ps in preds.items():
        for p in ps:
            succs[p].append(aid)
    try:
        order = list(TopologicalSorter(preds).static_order())
    except CycleError as exc:  # parser should have rejected this already
        raise InstanceError(f"precedence cycle: {exc.args[1]}") from exc
    level = {aid: 0 for aid in preds}
    for aid in order:
        for p in preds[aid]:
            level[aid] = max(level[aid], level[p] + 1)
    level_after = {aid: 0 for aid in preds}
    for aid in reversed(order):
        for s in succs[aid]:
            level_after[aid] = max(level_after[aid], level_after[s] + 1)
    return PrecedenceInfo(level=level, level_after=level_after)


def allowed_weekdays(activity: Activity, info: PrecedenceInfo) -> set[int]:
    """Weekdays (0=Mon .. 4=Fri) on which a recurring activity may start.

    The first `level` and last `level_after` weekdays are removed; the
    result is empty when level + level_after > 4, meaning the instance
    cannot be scheduled.
    """
    if activity.kind != "recurring":
        raise ValueError(f"activity {activity.id} is not recurring")
    x = info.level[activity.id]
    y = info.level_after[activity.id]
    return set(range(x, 5 - y))
