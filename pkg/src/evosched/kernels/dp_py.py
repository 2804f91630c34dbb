"""Pure-numpy fallback for the battery dispatch DP kernel.

Vectorizes the state-of-charge recursion across all candidate peak values
at once; the compiled kernel loops over candidates with plain C loops.
Both must return identical results (same transition order, same
tolerance), which the kernel tests assert.
"""

from __future__ import annotations

import numpy as np

CAP_EPS = 1e-9


def dp_min_energy(
    residual: np.ndarray,
    price: np.ndarray,
    p: float,
    sqrt_eta: float,
    n_soc: int,
    caps: np.ndarray,
) -> np.ndarray:
    """Minimum battery energy-cost delta for each candidate peak value.

    For each candidate M, runs a forward DP over the SoC lattice
    (multiples of 0.25*p) with per-slot actions hold / charge / discharge,
    requiring the resulting load to stay <= M at every slot and to reach
    exactly M at least once; the peak term is then 0.005*M^2 and not
    monotone in M, so the attained flag is part of the state. Start SoC
    is 0; no terminal constraint. Returns +inf for unattainable candidates.
    """
    T = len(residual)
    n_caps = len(caps)
    caps = np.asarray(caps, dtype=float)
    inf = np.inf
    # cost0: peak value not attained yet; cost1: attained
    cost0 = np.full((n_caps, n_soc + 1), inf)
    cost1 = np.full((n_caps, n_soc + 1), inf)
    cost0[:, 0] = 0.0
    for t in range(T):
        values = (residual[t], residual[t] + p, residual[t] - p * sqrt_eta)
        deltas = (0.0, 0.25 * p * price[t] / 1000.0, -0.25 * p * sqrt_eta * price[t] / 1000.0)
        new0 = np.full_like(cost0, inf)
        new1 = np.full_like(cost1, inf)
        for action, (v, delta) in enumerate(zip(values, deltas)):
            ok = v <= caps + CAP_EPS
            eq = np.abs(v - caps) <= CAP_EPS
            if action == 0:
                from0 = cost0 + delta
                from1 = cost1 + delta
            elif action == 1:
                from0 = np.full_like(cost0, inf)
                from0[:, 1:] = cost0[:, :-1] + delta
                from1 = np.full_like(cost1, inf)
                from1[:, 1:] = cost1[:, :-1] + delta
            else:
                from0 = np.full_like(cost0, inf)
                from0[:, :-1] = cost0[:, 1:] + delta
                from1 = np.full_like(cost1, inf)
                from1[:, :-1] = cost1[:, 1:] + delta
            from0[~ok, :] = inf
            from1[~ok, :] = inf
            stays0 = np.where((~eq)[:, None], from0, inf)
            hits1 = np.where(eq[:, None], from0, inf)
            new0 = np.minimum(new0, stays0)
            new1 = np.minimum(new1, np.minimum(hits1, from1))
        cost0, cost1 = new0, new1
    return cost1.min(axis=1)
