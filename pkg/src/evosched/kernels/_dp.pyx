# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled battery dispatch DP kernel; see dp_py for the reference semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double CAP_EPS = 1e-9
cdef double INF = float("inf")


cdef inline double _min3(double a, double b, double c) noexcept nogil:
    cdef double m = a
    if b < m:
        m = b
    if c < m:
        m = c
    return m


def dp_min_energy(
    cnp.float64_t[::1] residual,
    cnp.float64_t[::1] price,
    double p,
    double sqrt_eta,
    int n_soc,
    cnp.float64_t[::1] caps,
):
    """Minimum energy-cost delta for each candidate peak value (+inf if unattainable)."""
    cdef Py_ssize_t T = residual.shape[0]
    cdef Py_ssize_t n_caps = caps.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n_caps, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] buf = np.empty((4, n_soc + 1), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] b = buf
    cdef double cap, r, v_hold, v_charge, v_discharge
    cdef double d_charge, d_discharge, best, x
    cdef bint hold_ok, charge_ok, discharge_ok, hold_eq, charge_eq, discharge_eq
    cdef Py_ssize_t c, t, s
    cdef Py_ssize_t C0 = 0, C1 = 1, N0 = 2, N1 = 3, tmp

    for c in range(n_caps):
        cap = caps[c]
        C0, C1, N0, N1 = 0, 1, 2, 3
        for s in range(n_soc + 1):
            b[C0, s] = INF
            b[C1, s] = INF
        b[C0, 0] = 0.0
        for t in range(T):
            r = residual[t]
            v_hold = r
            v_charge = r + p
            v_discharge = r - p * sqrt_eta
            d_charge = 0.25 * p * price[t] / 1000.0
            d_discharge = -0.25 * p * sqrt_eta * price[t] / 1000.0
            hold_ok = v_hold <= cap + CAP_EPS
            charge_ok = v_charge <= cap + CAP_EPS
            discharge_ok = v_discharge <= cap + CAP_EPS
            hold_eq = (v_hold - cap if v_hold > cap else cap - v_hold) <= CAP_EPS
            charge_eq = (v_charge - cap if v_charge > cap else cap - v_charge) <= CAP_EPS
            discharge_eq = (v_discharge - cap if v_discharge > cap else cap - v_discharge) <= CAP_EPS
            for s in range(n_soc + 1):
                # not-attained state: actions strictly below the candidate value
                best = INF
                if hold_ok and not hold_eq:
                    best = b[C0, s]
                if charge_ok and not charge_eq and s >= 1:
                    x = b[C0, s - 1] + d_charge
                    if x < best:
                        best = x
                if discharge_ok and not discharge_eq and s < n_soc:
                    x = b[C0, s + 1] + d_discharge
                    if x < best:
                        best = x
                b[N0, s] = best
                # attained state: already attained, or hitting the value now
                best = INF
                if hold_ok:
                    x = b[C1, s]
                    if hold_eq and b[C0, s] < x:
                        x = b[C0, s]
                    if x < best:
                        best = x
                if charge_ok and s >= 1:
                    x = b[C1, s - 1]
                    if charge_eq and b[C0, s - 1] < x:
                        x = b[C0, s - 1]
                    x = x + d_charge
                    if x < best:
                        best = x
                if discharge_ok and s < n_soc:
                    x = b[C1, s + 1]
                    if discharge_eq and b[C0, s + 1] < x:
                        x = b[C0, s + 1]
                    x = x + d_discharge
                    if x < best:
                        best = x
                b[N1, s] = best
            tmp = C0; C0 = N0; N0 = tmp
            tmp = C1; C1 = N1; N1 = tmp
        best = INF
        for s in range(n_soc + 1):
            if b[C1, s] < best:
                best = b[C1, s]
        out[c] = best
    return out
