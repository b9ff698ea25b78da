"""Discrete-time core of the switched-capacitor simulator.

Between switching instants the 2:1 network is linear and time-invariant:

    d/dt [vc_0 .. vc_{N-1}, v_out] = A_c x + B_c [v_in, i_load]

Each step is advanced with the exact discretisation of that system for a
first-order-hold supply (v_in linear across the step) and zero-order-hold
load current.  Switching instants are placed on the step grid, so one
period is a fixed sequence of configurations and the matrices are built
once per distinct configuration.
"""

from functools import lru_cache

import numpy as np
from numba import njit
from scipy.linalg import expm

CHARGE = 1       # flying cap in series between supply and output
DISCHARGE = -1   # flying cap across output and ground
OPEN = 0         # non-overlap dead time


def phase_schedule(n_phases, steps_per_slot, eps_steps):
    """Connection state of every phase at every step of one period.

    Phase i is offset by i slots (i*T/N).  Each half period is shortened by
    ``eps_steps`` of dead time at its end.
    """
    period = n_phases * steps_per_slot
    half = period // 2
    k = np.arange(period)
    state = np.zeros((period, n_phases), dtype=np.int8)
    for i in range(n_phases):
        local = (k - i * steps_per_slot) % period
        charging = local < half - eps_steps
        discharging = (local >= half) & (local < period - eps_steps)
        state[:, i] = np.where(charging, CHARGE, np.where(discharging, DISCHARGE, OPEN))
    return state


def continuous_matrices(state, c_fly, r_path, c_node):
    n = len(state)
    a = np.zeros((n + 1, n + 1))
    b = np.zeros((n + 1, 2))
    g = 1.0 / r_path
    for i, s in enumerate(state):
        if s == CHARGE:
            # i_k = (v_in - vc - v_out)/R flows through the cap into the output
            a[i, i] -= g / c_fly
            a[i, n] -= g / c_fly
            b[i, 0] += g / c_fly
            a[n, i] -= g / c_node
            a[n, n] -= g / c_node
            b[n, 0] += g / c_node
        elif s == DISCHARGE:
            # i_k = (vc - v_out)/R leaves the cap into the output
            a[i, i] -= g / c_fly
            a[i, n] += g / c_fly
            a[n, i] += g / c_node
            a[n, n] -= g / c_node
    b[n, 1] = -1.0 / c_node
    return a, b


def discretize(a, b, h):
    """Exact FOH/ZOH discretisation via one augmented matrix exponential."""
    n, m = b.shape
    big = np.zeros((n + 2 * m, n + 2 * m))
    big[:n, :n] = a * h
    big[:n, n:n + m] = b * h
    big[n:n + m, n + m:] = np.eye(m)
    e = expm(big)
    phi = e[:n, :n]
    g0 = e[:n, n:n + m]
    g1 = e[:n, n + m:]
    return phi, g0, g1


@lru_cache(maxsize=64)
def step_tables(n_phases, steps_per_slot, eps_steps, c_fly, r_path, c_node, h):
    """(config index per step, phi, g0, g1, schedule) for one switching period."""
    sched = phase_schedule(n_phases, steps_per_slot, eps_steps)
    keys = {}
    index = np.empty(len(sched), dtype=np.int64)
    mats = []
    for k, row in enumerate(sched):
        key = row.tobytes()
        if key not in keys:
            keys[key] = len(mats)
            mats.append(discretize(*continuous_matrices(row, c_fly, r_path, c_node), h))
        index[k] = keys[key]
    phi = np.ascontiguousarray(np.array([m[0] for m in mats]))
    g0 = np.ascontiguousarray(np.array([m[1] for m in mats]))
    g1 = np.ascontiguousarray(np.array([m[2] for m in mats]))
    sched.setflags(write=False)
    return index, phi, g0, g1, sched


@njit(cache=True)
def integrate(x0, v_in, power, cfg_index, phi, g0, g1, v_max, record):
    """March the network over ``len(v_in) - 1`` steps.

    Returns (v_out, i_load, states, n_done).  ``n_done`` is short of the full
    length when v_out left [0, v_max]; the caller turns that into an error.
    """
    n_steps = v_in.shape[0] - 1
    n = x0.shape[0]
    period = cfg_index.shape[0]
    v_out = np.empty(n_steps + 1)
    i_load = np.zeros(n_steps + 1)
    if record:
        states = np.empty((n_steps + 1, n))
    else:
        states = np.empty((1, n))
    x = x0.copy()
    y = np.empty(n)
    v_out[0] = x[n - 1]
    if record:
        states[0] = x
    for k in range(n_steps):
        c = cfg_index[k % period]
        vo = x[n - 1]
        il = power[k] / vo if vo > 1e-6 else 0.0
        i_load[k] = il
        u0 = v_in[k]
        du = v_in[k + 1] - u0
        for r in range(n):
            acc = g0[c, r, 0] * u0 + g0[c, r, 1] * il + g1[c, r, 0] * du
            for j in range(n):
                acc += phi[c, r, j] * x[j]
            y[r] = acc
        for r in range(n):
            x[r] = y[r]
        vo = x[n - 1]
        v_out[k + 1] = vo
        if record:
            states[k + 1] = x
        if not (vo >= 0.0 and vo <= v_max):
            return v_out, i_load, states, k + 1
    i_load[n_steps] = power[n_steps] / x[n - 1] if x[n - 1] > 1e-6 else 0.0
    return v_out, i_load, states, n_steps
