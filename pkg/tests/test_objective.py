"""Load accumulation, cost evaluation and the scaled forecast error."""

import numpy as np
import pytest

from evosched.objective import (
    MaseDenominatorError,
    OnceOffPlacement,
    RecurringPlacement,
    Schedule,
    evaluate_schedule,
    mase,
    recurring_days,
    schedule_cost,
    total_load_series,
    within_working_hours,
)

from .conftest import battery, make_instance, oo, rec, series


def naive_cost(instance, schedule, load_values):
    """Independent straightforward restatement of the objective."""
    total = 0.0
    for l, e in zip(load_values, instance.price.values):
        total += 0.25 * l * e / 1000.0
    total += 0.005 * max(load_values) ** 2
    for aid, p in schedule.once_off.items():
        if p.scheduled:
            a = instance.activity_by_id(aid)
            o = 1.0 if p.outside_working_hours else 0.0
            total -= a.value - o * a.penalty
    return total


def naive_load(instance, schedule):
    """Slot-by-slot accumulation written independently of the implementation."""
    h = instance.horizon
    out = [float(v) for v in instance.base_load.values]
    for aid, p in schedule.recurring.items():
        a = instance.activity_by_id(aid)
        for week in range(4):
            day = h.first_monday_day_index + p.weekday + 7 * week
            start = day * 96 + p.start_slot_of_day
            for t in range(start, start + a.duration_slots):
                out[t] += a.power_kw
    for aid, p in schedule.once_off.items():
        if p.scheduled:
            a = instance.activity_by_id(aid)
            for t in range(p.start_slot, p.start_slot + a.duration_slots):
                out[t] += a.power_kw
    return out


class TestTotalLoad:
    def test_empty_schedule_is_base_load(self):
        inst = make_instance([])
        load = total_load_series(inst, Schedule())
        assert np.array_equal(load.values, inst.base_load.values)

    def test_recurring_four_weekly_bumps(self):
        inst = make_instance([rec(0, power=10.0, duration=4)], base=np.zeros(30 * 96))
        sched = Schedule(recurring={0: RecurringPlacement(weekday=0, start_slot_of_day=36)})
        load = total_load_series(inst, sched).values
        expected = np.zeros(30 * 96)
        for day in (0, 7, 14, 21):
            expected[day * 96 + 36: day * 96 + 40] = 10.0
        assert np.array_equal(load, expected)

    def test_random_schedule_matches_naive_accumulation(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            acts = [rec(0, duration=int(rng.integers(1, 8)))] + [
                oo(i, power=float(rng.uniform(1, 30)), duration=int(rng.integers(1, 10)))
                for i in range(1, 4)
            ]
            inst = make_instance(acts, base=rng.uniform(0, 50, size=30 * 96))
            sched = Schedule(
                recurring={0: RecurringPlacement(int(rng.integers(0, 5)), int(rng.integers(36, 60)))},
                once_off={
                    i: OnceOffPlacement(start_slot=int(rng.integers(0, 2 * 96 - 10)))
                    for i in range(1, 4)
                },
            )
            assert np.allclose(total_load_series(inst, sched).values, naive_load(inst, sched))

    def test_battery_actions_change_load(self):
        b = battery(power=100.0, efficiency=0.81)
        inst = make_instance([], n_days=1, batteries=[b], base=np.zeros(96))
        actions = np.zeros((1, 96), dtype=np.int8)
        actions[0, 0] = 1
        actions[0, 1] = -1
        load = total_load_series(inst, Schedule(battery_actions=actions)).values
        assert load[0] == pytest.approx(100.0)
        assert load[1] == pytest.approx(-90.0)  # 100 * sqrt(0.81)
        assert np.all(load[2:] == 0.0)


class TestCost:
    def test_zero_load_zero_cost(self):
        inst = make_instance([], n_days=1, base=np.zeros(96))
        assert evaluate_schedule(inst, Schedule()).total == 0.0

    def test_hand_case_51_25(self):
        # one slot at 100 kW and 50 $/MWh: 0.25*100*50/1000 + 0.005*100^2
        price = np.zeros(96)
        price[0] = 50.0
        inst = make_instance([], n_days=1, base=np.zeros(96), price=price)
        load = np.zeros(96)
        load[0] = 100.0
        bd = schedule_cost(inst, Schedule(), series(load))
        assert bd.total == 51.25
        assert bd.energy_cost == 1.25
        assert bd.peak_cost == 50.0

    def test_negative_peak_still_squared(self):
        inst = make_instance([], n_days=1, base=np.full(96, -40.0), price=np.zeros(96))
        bd = evaluate_schedule(inst, Schedule())
        assert bd.peak_kw == -40.0
        assert bd.peak_cost == pytest.approx(0.005 * 1600)

    def test_random_schedules_match_independent_evaluator(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            acts = [
                oo(
                    i,
                    power=float(rng.uniform(0, 20)),
                    duration=int(rng.integers(1, 6)),
                    value=float(rng.uniform(0, 100)),
                    penalty=float(rng.uniform(0, 50)),
                )
                for i in range(3)
            ]
            n_slots = 96
            inst = make_instance(
                acts, n_days=1,
                base=rng.uniform(-20, 80, size=n_slots),
                price=rng.uniform(-10, 120, size=n_slots),
            )
            sched = Schedule()
            for i in range(3):
                start = int(rng.integers(0, n_slots - 6))
                sched.once_off[i] = OnceOffPlacement(
                    start_slot=start,
                    scheduled=bool(rng.random() < 0.8),
                    outside_working_hours=not within_working_hours(
                        inst.horizon, start, acts[i].duration_slots
                    ),
                )
            load = total_load_series(inst, sched)
            bd = schedule_cost(inst, sched, load)
            assert bd.total == pytest.approx(
                naive_cost(inst, sched, list(load.values)), abs=1e-9
            )

    def test_reward_only_counts_scheduled(self):
        inst = make_instance([oo(0, value=100.0, penalty=30.0)], n_days=1)
        sched = Schedule(once_off={0: OnceOffPlacement(start_slot=0, scheduled=False)})
        assert evaluate_schedule(inst, sched).once_off_reward == 0.0
        sched = Schedule(
            once_off={0: OnceOffPlacement(start_slot=0, scheduled=True, outside_working_hours=True)}
        )
        assert evaluate_schedule(inst, sched).once_off_reward == pytest.approx(70.0)

    def test_load_length_mismatch(self):
        inst = make_instance([], n_days=1)
        with pytest.raises(ValueError):
            schedule_cost(inst, Schedule(), series(np.zeros(10)))


class TestHelpers:
    def test_recurring_days(self):
        h = make_instance([], first_weekday=6).horizon
        assert h.first_monday_day_index == 1
        assert recurring_days(h, 2) == [3, 10, 17, 24]

    def test_within_working_hours(self):
        h = make_instance([]).horizon
        assert within_working_hours(h, 36, 4)
        assert within_working_hours(h, 64, 4)
        assert not within_working_hours(h, 65, 4)  # runs past 17:00
        assert not within_working_hours(h, 30, 4)  # starts before 9:00
        assert not within_working_hours(h, 5 * 96 + 40, 4)  # Saturday


class TestMase:
    def test_perfect_forecast(self):
        train = np.array([1.0, 2.0, 3.0, 1.0, 2.0, 4.0])
        assert mase(np.array([5.0, 6.0]), np.array([5.0, 6.0]), train, 3) == 0.0

    def test_symmetric_case_is_one(self):
        # denominator (2/4)*4 = 2 equals numerator |1-0|+|1-0| = 2
        train = np.array([0.0, 0.0, 1.0, 1.0, 0.0, 0.0])
        value = mase(np.array([1.0, 1.0]), np.array([0.0, 0.0]), train, 2)
        assert value == pytest.approx(1.0, abs=1e-9)

    def test_zero_denominator_raises(self):
        train = np.array([1.0, 2.0, 1.0, 2.0, 1.0, 2.0])
        with pytest.raises(MaseDenominatorError):
            mase(np.array([2.0, 1.0]), np.array([1.0, 2.0]), train, 2)

    def test_training_too_short(self):
        with pytest.raises(ValueError):
            mase(np.array([1.0]), np.array([1.0]), np.array([1.0, 2.0]), 2)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mase(np.array([1.0]), np.array([1.0, 2.0]), np.array([1.0, 2.0, 3.0]), 1)

    def test_accepts_series_frames(self):
        train = series([0.0, 0.0, 1.0, 1.0, 0.0, 0.0])
        assert mase(series([1.0, 1.0]), series([0.0, 0.0]), train, 2) == pytest.approx(1.0)
