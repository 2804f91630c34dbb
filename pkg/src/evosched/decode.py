"""Genome decoding and the repair chain that turns raw genes into a
feasible schedule: precedence enforcement, room assignment and once-off
pruning. Repair failures are encoded as the sentinel cost 200 000 instead
of exceptions so population evaluation never stops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Activity, Instance, SeriesFrame
from .objective import (
    INFEASIBLE_COST,
    CostBreakdown,
    OnceOffPlacement,
    RecurringPlacement,
    Schedule,
    evaluate_schedule,
    recurring_days,
    within_working_hours,
)
from .precedence import PrecedenceInfo, allowed_weekdays, compute_levels


class UnschedulableInstanceError(ValueError):
    """Raised when some recurring activity has no admissible weekday at all."""


@dataclass
class PlacementMap:
    """Days and times fixed for all activities, before rooms and pruning.

    A once-off entry of None means the activity is not attempted (d_i = 0).
    """

    recurring: dict[int, tuple[int, int]] = field(default_factory=dict)  # id -> (weekday, start_slot_of_day)
    once_off: dict[int, int | None] = field(default_factory=dict)  # id -> absolute start slot

    def copy(self) -> "PlacementMap":
        return PlacementMap(recurring=dict(self.recurring), once_off=dict(self.once_off))


@dataclass
class EvaluatedIndividual:
    genome: np.ndarray | None
    schedule: Schedule | None
    cost: float
    breakdown: CostBreakdown | None = None


@dataclass(frozen=True)
class GeneLayout:
    """Gene vector structure: (day, time) per recurring, one time gene per once-off."""

    recurring_ids: tuple[int, ...]
    once_off_ids: tuple[int, ...]
    day_options: dict[int, tuple[int, ...]]  # recurring id -> admissible weekdays
    n_options: np.ndarray  # option count per gene

    @property
    def n_genes(self) -> int:
        return 2 * len(self.recurring_ids) + len(self.once_off_ids)


def clamp_gene(gene: float, n_options: int) -> int:
    """floor + clamp mapping from a real gene to an option index."""
    return int(min(max(np.floor(gene), 0), n_options - 1))


class Decoder:
    """Shared immutable context for decoding genomes of one instance."""

    def __init__(
        self,
        instance: Instance,
        info: PrecedenceInfo | None = None,
        load_forecast: SeriesFrame | None = None,
    ):
        self.instance = instance
        self.info = info if info is not None else compute_levels(instance)
        self.load_forecast = load_forecast
        self.layout = self._build_layout()
        self._repair_order = sorted(
            instance.activities, key=lambda a: (self.info.level[a.id], a.id)
        )
        self._oo_ancestors = self._once_off_ancestors()

    def _build_layout(self) -> GeneLayout:
        inst = self.instance
        h = inst.horizon
        recurring_ids, once_off_ids = [], []
        day_options: dict[int, tuple[int, ...]] = {}
        counts: list[int] = []
        for a in inst.recurring:
            days = sorted(allowed_weekdays(a, self.info))
            # 4th weekly occurrence must end inside the horizon
            days = [
                w for w in days
                if h.first_monday_day_index + 21 + w < h.n_days
            ]
            if not days:
                raise UnschedulableInstanceError(
                    f"recurring activity {a.id} has no admissible weekday"
                )
            n_times = h.working_end_slot_of_day - h.working_start_slot_of_day - a.duration_slots + 1
            if n_times <= 0:
                raise UnschedulableInstanceError(
                    f"recurring activity {a.id} does not fit in the working window"
                )
            recurring_ids.append(a.id)
            day_options[a.id] = tuple(days)
            counts.extend([len(days), n_times])
        for a in inst.once_off:
            once_off_ids.append(a.id)
            counts.append(h.n_slots - a.duration_slots + 1)
        return GeneLayout(
            recurring_ids=tuple(recurring_ids),
            once_off_ids=tuple(once_off_ids),
            day_options=day_options,
            n_options=np.array(counts, dtype=np.int64),
        )

    def _once_off_ancestors(self) -> dict[int, frozenset[int]]:
        """Transitive predecessors restricted to once-off activities."""
        anc: dict[int, frozenset[int]] = {}

        def collect(aid: int) -> frozenset[int]:
            if aid in anc:
                return anc[aid]
            acc: set[int] = set()
            for p in self.instance.activity_by_id(aid).precedences:
                if self.instance.activity_by_id(p).kind == "once_off":
                    acc.add(p)
                acc |= collect(p)
            anc[aid] = frozenset(acc)
            return anc[aid]

        for a in self.instance.activities:
            collect(a.id)
        return anc

    # -- gene mapping --------------------------------------------------

    def genome_to_placements(self, genome: np.ndarray) -> PlacementMap:
        inst = self.instance
        h = inst.horizon
        pm = PlacementMap()
        g = 0
        for aid in self.layout.recurring_ids:
            days = self.layout.day_options[aid]
            weekday = days[clamp_gene(genome[g], len(days))]
            t_idx = clamp_gene(genome[g + 1], int(self.layout.n_options[g + 1]))
            pm.recurring[aid] = (weekday, h.working_start_slot_of_day + t_idx)
            g += 2
        for aid in self.layout.once_off_ids:
            pm.once_off[aid] = clamp_gene(genome[g], int(self.layout.n_options[g]))
            g += 1
        return pm

    # -- repair chain --------------------------------------------------

    def enforce_precedence(self, pm: PlacementMap) -> PlacementMap | None:
        """Push activities after their latest predecessor day, keeping time of day.

        Once-off activities pushed past the end of the month are discarded.
        Returns None when a recurring activity cannot satisfy its
        predecessors within Mon-Fri of the first week.
        """
        inst = self.instance
        h = inst.horizon
        out = pm.copy()
        day: dict[int, int | None] = {}
        for a in self._repair_order:
            if a.kind == "recurring":
                weekday, start = out.recurring[a.id]
                my_day = h.first_monday_day_index + weekday
            else:
                slot = out.once_off[a.id]
                if slot is None:
                    day[a.id] = None
                    continue
                my_day = slot // h.slots_per_day
            pred_days = [
                day[p] for p in a.precedences
                if day.get(p) is not None
            ]
            latest = max(pred_days) if pred_days else None
            if latest is not None and my_day <= latest:
                new_day = latest + 1
                if a.kind == "recurring":
                    weekday = new_day - h.first_monday_day_index
                    if weekday > 4 or h.first_monday_day_index + 21 + weekday >= h.n_days:
                        return None
                    out.recurring[a.id] = (weekday, start)
                    my_day = new_day
                else:
                    slot_of_day = out.once_off[a.id] % h.slots_per_day
                    new_slot = new_day * h.slots_per_day + slot_of_day
                    if new_day >= h.n_days or new_slot + a.duration_slots > h.n_slots:
                        out.once_off[a.id] = None
                        day[a.id] = None
                        continue
                    out.once_off[a.id] = new_slot
                    my_day = new_day
            # once-off with a discarded once-off predecessor cannot be kept
            if a.kind == "once_off" and any(
                day.get(p, 0) is None
                and inst.activity_by_id(p).kind == "once_off"
                for p in a.precedences
            ):
                out.once_off[a.id] = None
                day[a.id] = None
                continue
            day[a.id] = my_day
        return out

    def assign_rooms(self, pm: PlacementMap) -> Schedule | None:
        """Greedy room assignment, largest duration*rooms first, lowest room ids.

        When rooms are unavailable the start time is shifted within the same
        day, closest to the original time first (earlier wins ties); failure
        to fit on the selected day makes the whole individual infeasible.
        """
        inst = self.instance
        h = inst.horizon
        occupancy = np.zeros((inst.total_rooms, h.n_slots), dtype=bool)
        schedule = Schedule()

        def try_place(activity: Activity, starts: list[int]) -> tuple[int, tuple[int, ...]] | None:
            for s in starts:
                if activity.kind == "recurring":
                    windows = [
                        slice(d * h.slots_per_day + s, d * h.slots_per_day + s + activity.duration_slots)
                        for d in recurring_days(h, current_weekday)
                    ]
                else:
                    windows = [slice(s, s + activity.duration_slots)]
                busy = np.zeros(inst.total_rooms, dtype=bool)
                for w in windows:
                    busy |= occupancy[:, w].any(axis=1)
                free = np.flatnonzero(~busy)
                if len(free) >= activity.n_rooms:
                    rooms = tuple(int(r) for r in free[: activity.n_rooms])
                    for w in windows:
                        for r in rooms:
                            occupancy[r, w] = True
                    return s, rooms
            return None

        ordered = [inst.activity_by_id(aid) for aid in pm.recurring]
        ordered.sort(key=lambda a: (-a.duration_slots * a.n_rooms, a.id))
        ordered_oo = [
            inst.activity_by_id(aid) for aid, slot in pm.once_off.items() if slot is not None
        ]
        ordered_oo.sort(key=lambda a: (-a.duration_slots * a.n_rooms, a.id))

        for activity in ordered:
            current_weekday, original = pm.recurring[activity.id]
            lo = h.working_start_slot_of_day
            hi = h.working_end_slot_of_day - activity.duration_slots
            candidates = sorted(range(lo, hi + 1), key=lambda s: (abs(s - original), s))
            placed = try_place(activity, candidates)
            if placed is None:
                return None
            start, rooms = placed
            schedule.recurring[activity.id] = RecurringPlacement(
                weekday=current_weekday, start_slot_of_day=start, room_ids=rooms
            )
        for activity in ordered_oo:
            current_weekday = None
            original = pm.once_off[activity.id]
            day = original // h.slots_per_day
            lo = day * h.slots_per_day
            hi = min(lo + h.slots_per_day - 1, h.n_slots - activity.duration_slots)
            candidates = sorted(range(lo, hi + 1), key=lambda s: (abs(s - original), s))
            placed = try_place(activity, candidates)
            if placed is None:
                return None
            start, rooms = placed
            schedule.once_off[activity.id] = OnceOffPlacement(
                start_slot=start,
                room_ids=rooms,
                scheduled=True,
                outside_working_hours=not within_working_hours(h, start, activity.duration_slots),
            )
        for aid, slot in pm.once_off.items():
            if slot is None:
                schedule.once_off[aid] = OnceOffPlacement(start_slot=0, room_ids=(), scheduled=False)
        return schedule

    def prune_once_off(self, schedule: Schedule) -> Schedule:
        """Keep once-off activities in order of most negative benefit.

        The benefit of an activity sums, over itself and its not-yet-kept
        once-off ancestors, the energy cost of running it minus its value
        plus any incurred out-of-hours penalty; the peak term is excluded.
        Activities whose remaining benefit is >= 0 are discarded.
        """
        inst = self.instance
        h = inst.horizon
        price = inst.price.values

        def contrib(aid: int) -> float:
            placement = schedule.once_off[aid]
            activity = inst.activity_by_id(aid)
            sl = slice(placement.start_slot, placement.start_slot + activity.duration_slots)
            energy = float(np.sum(0.25 * activity.power_kw * price[sl]) / 1000.0)
            o = 1.0 if placement.outside_working_hours else 0.0
            return energy - activity.value + o * activity.penalty

        remaining = {aid for aid, p in schedule.once_off.items() if p.scheduled}
        kept: set[int] = set()
        while remaining:
            best_id, best_benefit = None, 0.0
            for aid in sorted(remaining):
                required = (self._oo_ancestors[aid] - kept)
                if not required <= remaining:
                    continue  # needs an ancestor that was never scheduled
                benefit = contrib(aid) + sum(contrib(r) for r in required & remaining)
                if benefit < best_benefit:
                    best_id, best_benefit = aid, benefit
            if best_id is None:
                break
            group = {best_id} | (self._oo_ancestors[best_id] & remaining)
            kept |= group
            remaining -= group
        for aid in remaining:
            schedule.once_off[aid] = OnceOffPlacement(start_slot=0, room_ids=(), scheduled=False)
        return schedule

    # -- full pipeline -------------------------------------------------

    def evaluate_placements(self, pm: PlacementMap, genome: np.ndarray | None = None) -> EvaluatedIndividual:
        repaired = self.enforce_precedence(pm)
        if repaired is None:
            return EvaluatedIndividual(genome=genome, schedule=None, cost=INFEASIBLE_COST)
        schedule = self.assign_rooms(repaired)
        if schedule is None:
            return EvaluatedIndividual(genome=genome, schedule=None, cost=INFEASIBLE_COST)
        schedule = self.prune_once_off(schedule)
        if len(self.instance.batteries) > 0:
            schedule.battery_actions = np.zeros(
                (len(self.instance.batteries), self.instance.horizon.n_slots), dtype=np.int8
            )
        breakdown = evaluate_schedule(self.instance, schedule, self.load_forecast)
        return EvaluatedIndividual(
            genome=genome, schedule=schedule, cost=breakdown.total, breakdown=breakdown
        )

    def evaluate(self, genome: np.ndarray) -> EvaluatedIndividual:
        genome = np.asarray(genome, dtype=float)
        if len(genome) != self.layout.n_genes:
            raise ValueError(
                f"genome length {len(genome)} != expected {self.layout.n_genes}"
            )
        return self.evaluate_placements(self.genome_to_placements(genome), genome=genome)


def decode_and_repair(
    instance: Instance,
    info: PrecedenceInfo,
    genome: np.ndarray,
    load_forecast: SeriesFrame | None = None,
) -> EvaluatedIndividual:
    """One-shot decode; build a Decoder once instead when evaluating many genomes."""
    return Decoder(instance, info, load_forecast).evaluate(genome)


def schedule_to_placements(instance: Instance, schedule: Schedule) -> PlacementMap:
    pm = PlacementMap()
    for aid, p in schedule.recurring.items():
        pm.recurring[aid] = (p.weekday, p.start_slot_of_day)
    for aid, p in schedule.once_off.items():
        pm.once_off[aid] = p.start_slot if p.scheduled else None
    return pm


def check_schedule(instance: Instance, schedule: Schedule) -> list[str]:
    """Structural feasibility check; returns a list of violation messages."""
    inst = instance
    h = inst.horizon
    violations: list[str] = []
    usage = np.zeros((inst.total_rooms, h.n_slots), dtype=np.int16)

    day_of: dict[int, int | None] = {}
    for a in inst.activities:
        if a.kind == "recurring":
            if a.id not in schedule.recurring:
                violations.append(f"recurring {a.id} missing from schedule")
                day_of[a.id] = None
                continue
            p = schedule.recurring[a.id]
            if not 0 <= p.weekday <= 4:
                violations.append(f"recurring {a.id} on weekday {p.weekday}")
            if not (
                h.working_start_slot_of_day
                <= p.start_slot_of_day
                <= h.working_end_slot_of_day - a.duration_slots
            ):
                violations.append(f"recurring {a.id} outside working hours")
            last_day = h.first_monday_day_index + 21 + p.weekday
            if last_day >= h.n_days:
                violations.append(f"recurring {a.id} occurrence past horizon")
                day_of[a.id] = None
                continue
            if len(set(p.room_ids)) != a.n_rooms:
                violations.append(f"recurring {a.id} has {len(set(p.room_ids))} rooms, needs {a.n_rooms}")
            for d in recurring_days(h, p.weekday):
                sl = slice(d * h.slots_per_day + p.start_slot_of_day,
                           d * h.slots_per_day + p.start_slot_of_day + a.duration_slots)
                for r in p.room_ids:
                    usage[r, sl] += 1
            day_of[a.id] = h.first_monday_day_index + p.weekday
        else:
            p = schedule.once_off.get(a.id)
            if p is None or not p.scheduled:
                day_of[a.id] = None
                continue
            if p.start_slot < 0 or p.start_slot + a.duration_slots > h.n_slots:
                violations.append(f"once-off {a.id} outside horizon")
                day_of[a.id] = None
                continue
            if len(set(p.room_ids)) != a.n_rooms:
                violations.append(f"once-off {a.id} has {len(set(p.room_ids))} rooms, needs {a.n_rooms}")
            sl = slice(p.start_slot, p.start_slot + a.duration_slots)
            for r in p.room_ids:
                usage[r, sl] += 1
            expected_o = not within_working_hours(h, p.start_slot, a.duration_slots)
            if p.outside_working_hours != expected_o:
                violations.append(f"once-off {a.id} has wrong outside_working_hours flag")
            day_of[a.id] = p.start_slot // h.slots_per_day

    if np.any(usage > 1):
        violations.append("room double-booked")

    for a in inst.activities:
        if day_of.get(a.id) is None:
            continue
        for pid in a.precedences:
            pred = inst.activity_by_id(pid)
            pd = day_of.get(pid)
            if pd is None:
                if a.kind == "once_off" and pred.kind == "once_off":
                    violations.append(f"once-off {a.id} kept without ancestor {pid}")
                continue
            if day_of[a.id] <= pd:
                violations.append(
                    f"activity {a.id} on day {day_of[a.id]} not after predecessor {pid} on day {pd}"
                )
    return violations
