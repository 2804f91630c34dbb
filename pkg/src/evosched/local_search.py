"""One-activity-at-a-time schedule improvement.

Two passes over all activities (recurring first, then by ascending
precedence level): pass 1 tries times within days that keep every
activity schedulable, pass 2 tries all times that respect the placed
predecessors, which may reschedule or discard dependent once-off
activities through the repair chain. Strictly better candidates are
adopted immediately; the scan then continues from the new incumbent.

Variant "drop" removes all once-off activities from the base schedule
first; pass 2 schedules profitable ones back in.
"""

from __future__ import annotations

from .decode import Decoder, EvaluatedIndividual, PlacementMap, schedule_to_placements
from .model import Instance, SeriesFrame
from .objective import Schedule

KEEP, DROP = "keep", "drop"


def _day_bounds(decoder: Decoder, pm: PlacementMap, aid: int, strict: bool) -> tuple[int, int]:
    """[lo, hi] calendar-day window for activity `aid` given current placements.

    strict=True (pass 1) also keeps the activity before its placed
    successors and inside the level/level-after window.
    """
    inst = decoder.instance
    h = inst.horizon
    info = decoder.info
    day_of: dict[int, int] = {}
    for rid, (w, _) in pm.recurring.items():
        day_of[rid] = h.first_monday_day_index + w
    for oid, slot in pm.once_off.items():
        if slot is not None:
            day_of[oid] = slot // h.slots_per_day
    activity = inst.activity_by_id(aid)
    pred_days = [day_of[p] for p in activity.precedences if p in day_of]
    lo = max(pred_days) + 1 if pred_days else 0
    hi = h.n_days - 1
    if strict:
        lo = max(lo, info.level[aid])
        hi = min(hi, h.n_days - 1 - info.level_after[aid])
        succ_days = [
            day_of[s.id]
            for s in inst.activities
            if aid in s.precedences and s.id in day_of and s.id != aid
        ]
        if succ_days:
            hi = min(hi, min(succ_days) - 1)
    return lo, hi


def _candidates(decoder: Decoder, pm: PlacementMap, aid: int, pass_i: int):
    """Ordered (day, time) candidates for one activity, increasing day then time."""
    inst = decoder.instance
    h = inst.horizon
    activity = inst.activity_by_id(aid)
    strict = pass_i == 1
    lo, hi = _day_bounds(decoder, pm, aid, strict)
    if activity.kind == "recurring":
        if strict:
            weekdays = decoder.layout.day_options[aid]
        else:
            weekdays = tuple(
                w for w in range(5) if h.first_monday_day_index + 21 + w < h.n_days
            )
        times = range(
            h.working_start_slot_of_day,
            h.working_end_slot_of_day - activity.duration_slots + 1,
        )
        for w in weekdays:
            if not lo <= h.first_monday_day_index + w <= hi:
                continue
            for t in times:
                yield ("recurring", w, t)
    else:
        for day in range(max(lo, 0), hi + 1):
            base = day * h.slots_per_day
            top = min(h.slots_per_day, h.n_slots - base - activity.duration_slots + 1)
            for s in range(top):
                yield ("once_off", None, base + s)


def _apply(pm: PlacementMap, aid: int, candidate) -> PlacementMap:
    kind, weekday, t = candidate
    out = pm.copy()
    if kind == "recurring":
        out.recurring[aid] = (weekday, t)
    else:
        out.once_off[aid] = t
    return out


def improve_schedule(
    instance: Instance,
    base: Schedule,
    variant: str = KEEP,
    load_forecast: SeriesFrame | None = None,
    decoder: Decoder | None = None,
    max_evaluations: int | None = None,
) -> EvaluatedIndividual:
    """Improve a feasible base schedule; the result never costs more.

    max_evaluations caps the number of candidate evaluations (a
    deterministic budget); the scan simply stops early, which preserves
    monotonicity.
    """
    if variant not in (KEEP, DROP):
        raise ValueError(f"variant must be '{KEEP}' or '{DROP}'")
    if decoder is None:
        decoder = Decoder(instance, load_forecast=load_forecast)
    pm = schedule_to_placements(instance, base)
    original = decoder.evaluate_placements(pm)
    if variant == DROP:
        pm = pm.copy()
        pm.once_off = {aid: None for aid in pm.once_off}
        incumbent = decoder.evaluate_placements(pm)
    else:
        incumbent = original
    evals = 0

    info = decoder.info
    order = sorted(
        instance.activities,
        key=lambda a: (a.kind != "recurring", info.level[a.id], a.id),
    )
    for pass_i in (1, 2):
        for activity in order:
            if activity.kind == "once_off" and pass_i == 1 and pm.once_off.get(activity.id) is None:
                continue  # unscheduled once-off are only re-attempted in pass 2
            current = (
                pm.recurring.get(activity.id)
                if activity.kind == "recurring"
                else pm.once_off.get(activity.id)
            )
            for candidate in _candidates(decoder, pm, activity.id, pass_i):
                kind, w, t = candidate
                if kind == "recurring" and current == (w, t):
                    continue
                if kind == "once_off" and current == t:
                    continue
                if max_evaluations is not None and evals >= max_evaluations:
                    return incumbent if incumbent.cost <= original.cost else original
                trial_pm = _apply(pm, activity.id, candidate)
                trial = decoder.evaluate_placements(trial_pm)
                evals += 1
                if trial.cost < incumbent.cost:
                    pm, incumbent = trial_pm, trial
                    current = (w, t) if kind == "recurring" else t
    # dropping once-off activities must never leave the result worse than
    # the untouched base schedule
    return incumbent if incumbent.cost <= original.cost else original


def evaluate_time_candidates(
    instance: Instance,
    schedule: Schedule,
    activity_id: int,
    candidates,
    load_forecast: SeriesFrame | None = None,
    decoder: Decoder | None = None,
):
    """argmin cost over the given candidates plus "no move".

    Candidates are (kind, weekday, start) tuples as produced by the
    internal enumeration; ties break to the earliest candidate (and "no
    move" wins a tie with any candidate).
    """
    if decoder is None:
        decoder = Decoder(instance, load_forecast=load_forecast)
    pm = schedule_to_placements(instance, schedule)
    best_candidate = None
    best = decoder.evaluate_placements(pm)
    for candidate in candidates:
        trial = decoder.evaluate_placements(_apply(pm, activity_id, candidate))
        if trial.cost < best.cost:
            best, best_candidate = trial, candidate
    return best_candidate, best
