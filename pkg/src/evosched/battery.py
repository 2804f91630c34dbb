"""Battery dispatch against a fixed activity load.

Replaces a MIP formulation with an exact per-battery solver: enumerate
candidate peak caps, solve a state-of-charge DP under each cap, and pick
the cap minimizing energy plus the squared-peak tariff. Two batteries are
coordinated by best-response rounds. A brute-force oracle over all joint
action sequences verifies exactness on small horizons.

Efficiency convention (grid side): charging draws max_power_kw from the
grid and raises SoC by 0.25*max_power_kw; discharging lowers SoC by
0.25*max_power_kw and delivers max_power_kw*sqrt(efficiency) to the grid,
so a full cycle returns `efficiency` times the energy drawn.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .kernels import CAP_EPS, dp_min_energy
from .model import Battery, Instance, SeriesFrame
from .objective import energy_cost_of_load

MAX_ROUNDS = 10
BRUTE_FORCE_MAX_T = 7

CHARGE, HOLD, DISCHARGE = 1, 0, -1


@dataclass
class DispatchPlan:
    actions: np.ndarray  # (n_batteries, n_slots), values -1/0/+1
    soc: np.ndarray  # (n_batteries, n_slots), kWh after each slot
    resulting_load: SeriesFrame
    total_cost: float


def battery_effect(battery: Battery, actions: np.ndarray) -> np.ndarray:
    """Grid-side kW added by one battery's action sequence."""
    p = battery.max_power_kw
    return np.where(actions > 0, p, 0.0) - np.where(
        actions < 0, p * math.sqrt(battery.efficiency), 0.0
    )


def soc_trajectory(battery: Battery, actions: np.ndarray) -> np.ndarray:
    """SoC in kWh after each slot; raises if the sequence is infeasible."""
    steps = np.cumsum(actions.astype(np.int64))
    if np.any(steps < 0) or np.any(steps > battery.n_soc_steps):
        raise ValueError("action sequence violates SoC bounds")
    return steps * battery.soc_step_kwh


def _dispatch_cost(load: np.ndarray, price: np.ndarray) -> float:
    peak = float(np.max(load)) if len(load) else 0.0
    return energy_cost_of_load(load, price) + 0.005 * peak**2


def candidate_peak_caps(residual: np.ndarray, battery: Battery) -> np.ndarray:
    """Sorted unique achievable per-slot load values, pruned below the
    smallest peak any feasible plan can attain."""
    p = battery.max_power_kw
    sqrt_eta = math.sqrt(battery.efficiency)
    caps = np.unique(np.concatenate([residual, residual + p, residual - p * sqrt_eta]))
    # any plan holds at t=0 at best (SoC starts empty) and can lower slot t
    # to at most residual_t - p*sqrt_eta
    floor = max(float(residual[0]), float(np.max(residual - p * sqrt_eta)))
    return caps[caps >= floor - CAP_EPS]


def _reconstruct(
    battery: Battery, residual: np.ndarray, price: np.ndarray, cap: float
) -> np.ndarray:
    """Backtracked action sequence whose resulting load peaks exactly at `cap`.

    State is (attained-the-peak flag, SoC level); mirrors the kernel DP.
    """
    p = battery.max_power_kw
    sqrt_eta = math.sqrt(battery.efficiency)
    n_soc = battery.n_soc_steps
    T = len(residual)
    inf = np.inf
    cost = np.full((2, n_soc + 1), inf)
    cost[0, 0] = 0.0
    back_action = np.zeros((T, 2, n_soc + 1), dtype=np.int8)
    back_attained = np.zeros((T, 2, n_soc + 1), dtype=np.int8)
    for t in range(T):
        r = residual[t]
        moves = (
            (HOLD, r, 0.0, 0),
            (CHARGE, r + p, 0.25 * p * price[t] / 1000.0, 1),
            (DISCHARGE, r - p * sqrt_eta, -0.25 * p * sqrt_eta * price[t] / 1000.0, -1),
        )
        new = np.full((2, n_soc + 1), inf)
        for s in range(n_soc + 1):
            for attained in (0, 1):
                best, b_act, b_prev = inf, HOLD, attained
                for action, v, delta, dsoc in moves:
                    if v > cap + CAP_EPS:
                        continue
                    eq = abs(v - cap) <= CAP_EPS
                    prev_s = s - dsoc
                    if not 0 <= prev_s <= n_soc:
                        continue
                    if attained == 0:
                        if eq:
                            continue
                        cand = cost[0, prev_s] + delta
                        if cand < best:
                            best, b_act, b_prev = cand, action, 0
                    else:
                        cand = cost[1, prev_s] + delta
                        if cand < best:
                            best, b_act, b_prev = cand, action, 1
                        if eq:
                            cand = cost[0, prev_s] + delta
                            if cand < best:
                                best, b_act, b_prev = cand, action, 0
                new[attained, s] = best
                back_action[t, attained, s] = b_act
                back_attained[t, attained, s] = b_prev
        cost = new
    s = int(np.argmin(cost[1]))
    if not np.isfinite(cost[1, s]):
        raise ValueError(f"no feasible plan peaking at {cap}")
    actions = np.zeros(T, dtype=np.int8)
    attained = 1
    for t in range(T - 1, -1, -1):
        a = int(back_action[t, attained, s])
        actions[t] = a
        prev = int(back_attained[t, attained, s])
        s -= a
        attained = prev
    return actions


def single_battery_best_response(
    battery: Battery, residual_load: SeriesFrame | np.ndarray, price: SeriesFrame | np.ndarray
) -> np.ndarray:
    """Exactly optimal per-slot actions for one battery against a residual load."""
    residual = np.asarray(
        residual_load.values if isinstance(residual_load, SeriesFrame) else residual_load,
        dtype=float,
    )
    e = np.asarray(price.values if isinstance(price, SeriesFrame) else price, dtype=float)
    n_soc = battery.n_soc_steps
    if n_soc < 1 or len(residual) == 0:
        return np.zeros(len(residual), dtype=np.int8)
    sqrt_eta = math.sqrt(battery.efficiency)
    caps = candidate_peak_caps(residual, battery)
    deltas = dp_min_energy(
        residual, e, battery.max_power_kw, sqrt_eta, n_soc, caps
    )
    # deltas[i] is the min energy among plans peaking exactly at caps[i];
    # every plan's peak is a candidate value, so this scan is exact
    scores = deltas + 0.005 * caps**2
    best = int(np.argmin(scores))
    if not np.isfinite(scores[best]):
        return np.zeros(len(residual), dtype=np.int8)
    return _reconstruct(battery, residual, e, float(caps[best]))


def optimize_dispatch(instance: Instance, activity_load: SeriesFrame) -> DispatchPlan:
    """Coordinate-descent dispatch for all batteries of an instance.

    Starts from all-hold and repeats exact single-battery best responses
    (the other batteries' grid effects folded into the load) until a full
    round brings no cost decrease or MAX_ROUNDS rounds elapse.
    """
    load = np.asarray(activity_load.values, dtype=float)
    price = instance.price.values
    n_b = len(instance.batteries)
    T = len(load)

    def descent(order: list[int]) -> tuple[np.ndarray, float]:
        acts = np.zeros((n_b, T), dtype=np.int8)
        effects = np.zeros((n_b, T))
        cost = _dispatch_cost(load, price)
        for _ in range(MAX_ROUNDS):
            for i in order:
                battery = instance.batteries[i]
                residual = load + effects.sum(axis=0) - effects[i]
                acts[i] = single_battery_best_response(battery, residual, price)
                effects[i] = battery_effect(battery, acts[i])
            new_cost = _dispatch_cost(load + effects.sum(axis=0), price)
            if new_cost >= cost - 1e-9:
                cost = min(cost, new_cost)
                break
            cost = new_cost
        return acts, cost

    actions = np.zeros((n_b, T), dtype=np.int8)
    if n_b > 0:
        # one descent per starting battery: the first responder's step alone
        # already matches its solo plan, so the best rotation is never worse
        # than any single-battery plan (or all-hold)
        best_cost = np.inf
        for k in range(n_b):
            order = [(k + j) % n_b for j in range(n_b)]
            acts, cost = descent(order)
            if cost < best_cost:
                actions, best_cost = acts, cost
    resulting = load + sum(
        (battery_effect(b, actions[i]) for i, b in enumerate(instance.batteries)),
        np.zeros(T),
    )
    soc = np.stack(
        [soc_trajectory(b, actions[i]) for i, b in enumerate(instance.batteries)]
    ) if n_b else np.zeros((0, T))
    return DispatchPlan(
        actions=actions,
        soc=soc,
        resulting_load=SeriesFrame(
            start_timestamp=activity_load.start_timestamp, values=resulting
        ),
        total_cost=_dispatch_cost(resulting, price),
    )


def _feasible_sequences(battery: Battery, T: int) -> np.ndarray:
    """All (n, T) action sequences respecting SoC bounds from an empty start."""
    seqs = []
    for combo in itertools.product((DISCHARGE, HOLD, CHARGE), repeat=T):
        soc = 0
        for a in combo:
            soc += a
            if soc < 0 or soc > battery.n_soc_steps:
                break
        else:
            seqs.append(combo)
    return np.array(seqs, dtype=np.int8).reshape(-1, T)


def brute_force_dispatch(
    batteries: list[Battery], load: np.ndarray, price: np.ndarray
) -> tuple[np.ndarray, float]:
    """Exhaustive joint optimum; verification oracle for small horizons only."""
    load = np.asarray(load, dtype=float)
    price = np.asarray(price, dtype=float)
    T = len(load)
    if T > BRUTE_FORCE_MAX_T:
        raise ValueError(f"brute force limited to T <= {BRUTE_FORCE_MAX_T}")
    if len(batteries) > 2:
        raise ValueError("brute force limited to 2 batteries")
    if not batteries:
        return np.zeros((0, T), dtype=np.int8), _dispatch_cost(load, price)
    seq_sets = [_feasible_sequences(b, T) for b in batteries]
    eff_sets = [
        np.stack([battery_effect(b, s) for s in seqs])
        for b, seqs in zip(batteries, seq_sets)
    ]
    best_cost, best_actions = np.inf, None
    if len(batteries) == 1:
        resulting = load + eff_sets[0]
        costs = 0.25 * resulting @ price / 1000.0 + 0.005 * resulting.max(axis=1) ** 2
        i = int(np.argmin(costs))
        return seq_sets[0][i][None, :], float(costs[i])
    for i in range(len(seq_sets[0])):
        resulting = load + eff_sets[0][i] + eff_sets[1]
        costs = 0.25 * resulting @ price / 1000.0 + 0.005 * resulting.max(axis=1) ** 2
        j = int(np.argmin(costs))
        if costs[j] < best_cost:
            best_cost = float(costs[j])
            best_actions = np.stack([seq_sets[0][i], seq_sets[1][j]])
    return best_actions, best_cost
