"""Shared builders for hand-crafted instances used across the test suite."""

from datetime import datetime

import numpy as np
import pytest

from evosched.model import (
    Activity,
    Battery,
    Building,
    Horizon,
    Instance,
    SeriesFrame,
)

START = datetime(2020, 11, 2)


def series(values) -> SeriesFrame:
    return SeriesFrame(start_timestamp=START, values=np.asarray(values, dtype=float))


def rec(aid, power=10.0, duration=4, rooms=1, preds=()):
    return Activity(
        id=aid, kind="recurring", power_kw=power, duration_slots=duration,
        n_rooms=rooms, precedences=tuple(preds),
    )


def oo(aid, power=10.0, duration=4, rooms=1, value=0.0, penalty=0.0, preds=()):
    return Activity(
        id=aid, kind="once_off", power_kw=power, duration_slots=duration,
        n_rooms=rooms, value=value, penalty=penalty, precedences=tuple(preds),
    )


def make_instance(
    activities=(),
    n_days=30,
    first_weekday=0,
    rooms=3,
    batteries=(),
    price=None,
    base=None,
):
    """Instance with flat price/base load unless overridden."""
    horizon = Horizon(
        n_slots=n_days * 96,
        first_weekday=first_weekday,
        first_monday_day_index=(7 - first_weekday) % 7,
    )
    if price is None:
        price = np.full(horizon.n_slots, 50.0)
    if base is None:
        base = np.full(horizon.n_slots, 100.0)
    return Instance(
        horizon=horizon,
        buildings=(Building(id=0, n_rooms=rooms),),
        batteries=tuple(batteries),
        activities=tuple(activities),
        price=series(price),
        base_load=series(base),
    )


def battery(bid=0, power=100.0, steps=4, efficiency=0.9):
    return Battery(
        id=bid,
        capacity_kwh=steps * 0.25 * power,
        max_power_kw=power,
        efficiency=efficiency,
    )


@pytest.fixture(scope="session")
def small_instance():
    from evosched.model import generate_synthetic_instance

    return generate_synthetic_instance("small", seed=0)
