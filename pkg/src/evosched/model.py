"""Problem data model: horizon, buildings, batteries, activities, series.

Instances are immutable after validation and safe to share between worker
processes. File formats: an instance is a JSON document referencing two
series CSVs (price in $/MWh, base load in kW), both on a 15-minute grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta
from functools import cached_property
from pathlib import Path

import numpy as np

SLOTS_PER_DAY = 96
WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


class InstanceError(ValueError):
    """Raised when an instance violates a structural invariant."""


class ParseError(ValueError):
    """Raised when an instance or series file cannot be read."""


@dataclass(frozen=True)
class Horizon:
    n_slots: int
    first_weekday: int  # weekday of day 0, 0=Monday
    working_start_slot_of_day: int = 36  # 9:00
    working_end_slot_of_day: int = 68  # 17:00
    slots_per_day: int = SLOTS_PER_DAY
    first_monday_day_index: int = 0

    def __post_init__(self):
        if self.n_slots <= 0 or self.n_slots % self.slots_per_day != 0:
            raise InstanceError(
                f"n_slots must be a positive multiple of {self.slots_per_day}, got {self.n_slots}"
            )
        if not (0 <= self.working_start_slot_of_day < self.working_end_slot_of_day <= self.slots_per_day):
            raise InstanceError("working window must satisfy 0 <= start < end <= slots_per_day")
        if not 0 <= self.first_weekday < 7:
            raise InstanceError(f"first_weekday out of range: {self.first_weekday}")
        if not 0 <= self.first_monday_day_index < 7:
            raise InstanceError(f"first_monday_day_index out of range: {self.first_monday_day_index}")
        if (self.first_weekday + self.first_monday_day_index) % 7 != 0:
            raise InstanceError("first_monday_day_index inconsistent with first_weekday")

    @property
    def n_days(self) -> int:
        return self.n_slots // self.slots_per_day

    def weekday_of_day(self, day: int) -> int:
        return (self.first_weekday + day) % 7

    def is_working_day(self, day: int) -> bool:
        return self.weekday_of_day(day) < 5


@dataclass(frozen=True)
class Building:
    id: int
    n_rooms: int

    def __post_init__(self):
        if self.n_rooms < 0:
            raise InstanceError(f"building {self.id}: n_rooms must be >= 0")


@dataclass(frozen=True)
class Battery:
    id: int
    capacity_kwh: float
    max_power_kw: float
    efficiency: float

    def __post_init__(self):
        if self.capacity_kwh <= 0:
            raise InstanceError(f"battery {self.id}: capacity must be > 0")
        if self.max_power_kw <= 0:
            raise InstanceError(f"battery {self.id}: max power must be > 0")
        if not 0 < self.efficiency <= 1:
            raise InstanceError(f"battery {self.id}: efficiency must be in (0, 1]")

    @property
    def soc_step_kwh(self) -> float:
        """Energy moved in or out of storage by one 15-minute full-power action."""
        return 0.25 * self.max_power_kw

    @property
    def n_soc_steps(self) -> int:
        """Largest reachable state-of-charge level on the 0.25*p lattice."""
        return int(np.floor(self.capacity_kwh / self.soc_step_kwh + 1e-9))


RECURRING = "recurring"
ONCE_OFF = "once_off"


@dataclass(frozen=True)
class Activity:
    id: int
    kind: str
    power_kw: float
    duration_slots: int
    n_rooms: int
    value: float = 0.0
    penalty: float = 0.0
    precedences: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in (RECURRING, ONCE_OFF):
            raise InstanceError(f"activity {self.id}: unknown kind {self.kind!r}")
        if self.duration_slots < 1:
            raise InstanceError(f"activity {self.id}: duration must be >= 1")
        if self.n_rooms < 1:
            raise InstanceError(f"activity {self.id}: n_rooms must be >= 1")
        if self.power_kw < 0:
            raise InstanceError(f"activity {self.id}: power must be >= 0")
        if self.value < 0 or self.penalty < 0:
            raise InstanceError(f"activity {self.id}: value and penalty must be >= 0")
        object.__setattr__(self, "precedences", tuple(self.precedences))


@dataclass(frozen=True)
class SeriesFrame:
    """A regular 15-minute time series."""

    start_timestamp: datetime
    values: np.ndarray
    step_minutes: int = 15

    def __post_init__(self):
        if self.step_minutes != 15:
            raise InstanceError(f"step_minutes must be 15, got {self.step_minutes}")
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise InstanceError("series contains non-finite values")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SeriesFrame)
            and self.start_timestamp == other.start_timestamp
            and np.array_equal(self.values, other.values)
        )

    def timestamps(self) -> list[datetime]:
        step = timedelta(minutes=self.step_minutes)
        return [self.start_timestamp + i * step for i in range(len(self.values))]

    @classmethod
    def from_csv(cls, path: str | Path) -> "SeriesFrame":
        path = Path(path)
        try:
            lines = path.read_text().strip().splitlines()
        except OSError as exc:
            raise ParseError(f"cannot read series file {path}: {exc}") from exc
        if not lines or lines[0].strip().lower() != "timestamp,value":
            raise ParseError(f"{path}: expected header 'timestamp,value'")
        stamps, values = [], []
        for ln in lines[1:]:
            ts, _, val = ln.partition(",")
            try:
                stamps.append(datetime.fromisoformat(ts.strip()))
                values.append(float(val))
            except ValueError as exc:
                raise ParseError(f"{path}: bad row {ln!r}") from exc
        if not stamps:
            raise ParseError(f"{path}: empty series")
        step = timedelta(minutes=15)
        for i in range(1, len(stamps)):
            if stamps[i] - stamps[i - 1] != step:
                raise ParseError(f"{path}: irregular timestamp at row {i + 1}")
        return cls(start_timestamp=stamps[0], values=np.array(values))

    def to_csv(self, path: str | Path) -> None:
        step = timedelta(minutes=self.step_minutes)
        with open(path, "w") as fh:
            fh.write("timestamp,value\n")
            for i, v in enumerate(self.values):
                fh.write(f"{(self.start_timestamp + i * step).isoformat()},{float(v)!r}\n")


@dataclass(frozen=True)
class Instance:
    horizon: Horizon
    buildings: tuple[Building, ...]
    batteries: tuple[Battery, ...]
    activities: tuple[Activity, ...]
    price: SeriesFrame  # $/MWh per slot
    base_load: SeriesFrame  # kW per slot

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(self.buildings))
        object.__setattr__(self, "batteries", tuple(self.batteries))
        object.__setattr__(self, "activities", tuple(self.activities))
        validate_instance(self)

    @property
    def total_rooms(self) -> int:
        return sum(b.n_rooms for b in self.buildings)

    @property
    def recurring(self) -> list[Activity]:
        return [a for a in self.activities if a.kind == RECURRING]

    @property
    def once_off(self) -> list[Activity]:
        return [a for a in self.activities if a.kind == ONCE_OFF]

    @property
    def size_class(self) -> str:
        n_rec, n_oo = len(self.recurring), len(self.once_off)
        if (n_rec, n_oo) == (50, 20):
            return "small"
        if (n_rec, n_oo) == (200, 100):
            return "large"
        return "custom"

    def activity_by_id(self, aid: int) -> Activity:
        return self._by_id[aid]

    @cached_property
    def _by_id(self) -> dict[int, Activity]:
        return {a.id: a for a in self.activities}


def _find_cycle(activities: tuple[Activity, ...]) -> list[int] | None:
    """Return one cycle as a list of activity ids, or None if the graph is acyclic."""
    preds = {a.id: a.precedences for a in activities}
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {aid: WHITE for aid in preds}
    stack_path: list[int] = []

    def dfs(u: int) -> list[int] | None:
        color[u] = GRAY
        stack_path.append(u)
        for v in preds[u]:
            if color[v] == GRAY:
                return stack_path[stack_path.index(v):] + [v]
            if color[v] == WHITE:
                found = dfs(v)
                if found:
                    return found
        stack_path.pop()
        color[u] = BLACK
        return None

    for aid in preds:
        if color[aid] == WHITE:
            found = dfs(aid)
            if found:
                return found
    return None


def validate_instance(inst: Instance) -> None:
    """Check every cross-field invariant; raise InstanceError naming the first violation."""
    h = inst.horizon
    if len(inst.price) != h.n_slots:
        raise InstanceError(
            f"price series length {len(inst.price)} != n_slots {h.n_slots}"
        )
    if len(inst.base_load) != h.n_slots:
        raise InstanceError(
            f"base_load series length {len(inst.base_load)} != n_slots {h.n_slots}"
        )
    ids = [a.id for a in inst.activities]
    if len(ids) != len(set(ids)):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise InstanceError(f"duplicate activity id {dup}")
    known = set(ids)
    for a in inst.activities:
        for p in a.precedences:
            if p not in known:
                raise InstanceError(f"activity {a.id}: unknown precedence id {p}")
            if p == a.id:
                raise InstanceError(f"activity {a.id}: self-precedence")
    cycle = _find_cycle(inst.activities)
    if cycle is not None:
        raise InstanceError("precedence cycle: " + " -> ".join(map(str, cycle)))


# ---------------------------------------------------------------------------
# JSON (de)serialization
# ---------------------------------------------------------------------------

def parse_instance(path: str | Path) -> Instance:
    """Load an instance JSON file plus its referenced series CSVs."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    try:
        h = doc["horizon"]
        horizon = Horizon(
            n_slots=h["n_slots"],
            first_weekday=h["first_weekday"],
            working_start_slot_of_day=h["working_start_slot_of_day"],
            working_end_slot_of_day=h["working_end_slot_of_day"],
            first_monday_day_index=h["first_monday_day_index"],
        )
        buildings = tuple(Building(id=b["id"], n_rooms=b["n_rooms"]) for b in doc["buildings"])
        batteries = tuple(
            Battery(
                id=b["id"],
                capacity_kwh=b["capacity_kwh"],
                max_power_kw=b["max_power_kw"],
                efficiency=b["efficiency"],
            )
            for b in doc["batteries"]
        )
        activities = tuple(
            Activity(
                id=a["id"],
                kind=a["kind"],
                power_kw=a["power_kw"],
                duration_slots=a["duration_slots"],
                n_rooms=a["n_rooms"],
                value=a.get("value", 0.0),
                penalty=a.get("penalty", 0.0),
                precedences=tuple(a.get("precedences", ())),
            )
            for a in doc["activities"]
        )
        price = SeriesFrame.from_csv(path.parent / doc["price_csv"])
        base_load = SeriesFrame.from_csv(path.parent / doc["base_load_csv"])
    except KeyError as exc:
        raise ParseError(f"{path}: missing key {exc}") from exc
    return Instance(
        horizon=horizon,
        buildings=buildings,
        batteries=batteries,
        activities=activities,
        price=price,
        base_load=base_load,
    )


def serialize_instance(inst: Instance, path: str | Path) -> None:
    """Write instance JSON next to its two series CSVs (<stem>_price.csv etc.)."""
    path = Path(path)
    price_csv = path.stem + "_price.csv"
    base_csv = path.stem + "_base_load.csv"
    inst.price.to_csv(path.parent / price_csv)
    inst.base_load.to_csv(path.parent / base_csv)
    doc = {
        "horizon": {
            "n_slots": inst.horizon.n_slots,
            "first_weekday": inst.horizon.first_weekday,
            "working_start_slot_of_day": inst.horizon.working_start_slot_of_day,
            "working_end_slot_of_day": inst.horizon.working_end_slot_of_day,
            "first_monday_day_index": inst.horizon.first_monday_day_index,
        },
        "buildings": [{"id": b.id, "n_rooms": b.n_rooms} for b in inst.buildings],
        "batteries": [
            {
                "id": b.id,
                "capacity_kwh": b.capacity_kwh,
                "max_power_kw": b.max_power_kw,
                "efficiency": b.efficiency,
            }
            for b in inst.batteries
        ],
        "activities": [
            {
                "id": a.id,
                "kind": a.kind,
                "power_kw": a.power_kw,
                "duration_slots": a.duration_slots,
                "n_rooms": a.n_rooms,
                "value": a.value,
                "penalty": a.penalty,
                "precedences": list(a.precedences),
            }
            for a in inst.activities
        ],
        "price_csv": price_csv,
        "base_load_csv": base_csv,
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Synthetic instances
# ---------------------------------------------------------------------------

def _layered_dag(rng: np.random.Generator, ids: list[int], max_depth: int = 4) -> dict[int, list[int]]:
    """Random DAG with longest chain <= max_depth nodes, edges from lower to higher layer."""
    layers = rng.integers(0, max_depth, size=len(ids))
    preds: dict[int, list[int]] = {i: [] for i in ids}
    by_layer: dict[int, list[int]] = {}
    for aid, lay in zip(ids, layers):
        by_layer.setdefault(int(lay), []).append(aid)
    for aid, lay in zip(ids, layers):
        lay = int(lay)
        if lay == 0:
            continue
        candidates = [i for lo in range(lay) for i in by_layer.get(lo, [])]
        if not candidates or rng.random() < 0.4:
            continue
        k = min(len(candidates), int(rng.integers(1, 3)))
        chosen = rng.choice(len(candidates), size=k, replace=False)
        preds[aid] = sorted(candidates[c] for c in chosen)
    return preds


def _daily_weekly_series(
    rng: np.random.Generator, horizon: Horizon, base: float, daily_amp: float,
    weekend_drop: float, noise: float,
) -> np.ndarray:
    t = np.arange(horizon.n_slots)
    slot_of_day = t % horizon.slots_per_day
    day = t // horizon.slots_per_day
    weekday = (horizon.first_weekday + day) % 7
    daily = daily_amp * np.sin(2 * np.pi * (slot_of_day - 24) / horizon.slots_per_day) ** 2
    weekly = np.where(weekday >= 5, -weekend_drop, 0.0)
    return base + daily + weekly + rng.normal(0.0, noise, size=horizon.n_slots)


def generate_synthetic_instance(size: str, seed: int, n_days: int = 30) -> Instance:
    """Deterministic random instance with the small/large activity counts.

    Battery capacities are exact multiples of 0.25 * max_power_kw so the
    state-of-charge lattice used by the dispatch solver is exact.
    """
    if size == "small":
        n_rec, n_oo, n_buildings, rooms_each = 50, 20, 6, 6
    elif size == "large":
        n_rec, n_oo, n_buildings, rooms_each = 200, 100, 6, 20
    else:
        raise ValueError(f"size must be 'small' or 'large', got {size!r}")
    rng = np.random.default_rng(seed)
    # keep the first Monday within the first 3 days so 4 weekly occurrences fit
    first_weekday = int(rng.choice([0, 5, 6]))
    horizon = Horizon(
        n_slots=n_days * SLOTS_PER_DAY,
        first_weekday=first_weekday,
        first_monday_day_index=(7 - first_weekday) % 7,
    )
    buildings = tuple(Building(id=i, n_rooms=rooms_each) for i in range(n_buildings))
    batteries = []
    for i in range(2):
        p = float(rng.choice([50.0, 75.0, 100.0, 150.0]))
        steps = int(rng.integers(4, 17))
        batteries.append(
            Battery(
                id=i,
                capacity_kwh=steps * 0.25 * p,
                max_power_kw=p,
                efficiency=float(np.round(rng.uniform(0.8, 1.0), 3)),
            )
        )

    ids_rec = list(range(n_rec))
    ids_oo = list(range(n_rec, n_rec + n_oo))
    preds = _layered_dag(rng, ids_rec)
    preds.update(_layered_dag(rng, ids_oo))
    # a few recurring -> once-off edges; never once-off -> recurring, which
    # could make a first-week recurring slot unreachable
    for oid in ids_oo:
        if rng.random() < 0.15:
            preds[oid] = sorted(set(preds[oid]) | {int(rng.choice(ids_rec))})

    activities = []
    for aid in ids_rec:
        activities.append(
            Activity(
                id=aid,
                kind=RECURRING,
                power_kw=float(np.round(rng.uniform(5.0, 40.0), 1)),
                duration_slots=int(rng.integers(2, 13)),
                n_rooms=int(rng.integers(1, 4)),
                precedences=tuple(preds[aid]),
            )
        )
    for aid in ids_oo:
        value = float(np.round(rng.uniform(20.0, 500.0), 2))
        activities.append(
            Activity(
                id=aid,
                kind=ONCE_OFF,
                power_kw=float(np.round(rng.uniform(5.0, 40.0), 1)),
                duration_slots=int(rng.integers(2, 13)),
                n_rooms=int(rng.integers(1, 4)),
                value=value,
                penalty=float(np.round(rng.uniform(0.0, value), 2)),
                precedences=tuple(preds[aid]),
            )
        )

    start = datetime(2020, 11, 2)
    price = SeriesFrame(
        start_timestamp=start,
        values=_daily_weekly_series(rng, horizon, base=40.0, daily_amp=60.0,
                                    weekend_drop=10.0, noise=8.0),
    )
    base_load = SeriesFrame(
        start_timestamp=start,
        values=np.maximum(
            _daily_weekly_series(rng, horizon, base=200.0, daily_amp=180.0,
                                 weekend_drop=120.0, noise=15.0),
            0.0,
        ),
    )
    return Instance(
        horizon=horizon,
        buildings=buildings,
        batteries=tuple(batteries),
        activities=tuple(activities),
        price=price,
        base_load=base_load,
    )
