"""On-chip multiphase 2:1 switched-capacitor regulator.

Two views of the same converter live here:

* a first-order low-pass abstraction built from the slow/fast switching
  limit output impedances (``equivalent_impedance``, ``lpf_transfer_magnitude``),
* a discrete-time simulation of the switched network (``simulate``).

Interleaving convention: the converter is cut into ``n_phases`` identical
slices.  Each slice gets ``c_fly_per_phase`` of flying capacitance and
switches of ``n_phases * r_on`` ohms, so ``r_on`` is the resistance the
switches would have in an unsliced converter and the fast-switching-limit
impedance does not depend on the phase count.
"""

from dataclasses import dataclass, field, replace
import csv
import math
from typing import NamedTuple, Optional

import numpy as np

from . import _kernel
from .errors import (ConfigurationError, InfeasibleError, NonConvergenceError,
                     ResolutionError, TransientWindowError)
from .waveforms import GlitchWaveform, sample

STEADY_TOL_V = 1e-4


@dataclass(frozen=True)
class RegulatorConfig:
    n_phases: int = 1
    c_fly_per_phase: float = 1e-9
    r_on: float = 0.75
    f_sw: float = 60e6
    beta_top: float = 2.0
    gamma_top: float = 0.25
    epsilon_nonoverlap: float = 50e-12
    optimal_region: bool = True

    def __post_init__(self):
        if int(self.n_phases) != self.n_phases or self.n_phases < 1:
            raise ConfigurationError(f"n_phases must be a positive integer, got {self.n_phases!r}")
        if not self.c_fly_per_phase > 0:
            raise ConfigurationError("c_fly_per_phase must be > 0")
        if not self.r_on > 0:
            raise ConfigurationError("r_on must be > 0")
        if not self.f_sw > 0:
            raise ConfigurationError("f_sw must be > 0")
        if not 0 <= self.epsilon_nonoverlap < self.period / 2:
            raise ConfigurationError("epsilon_nonoverlap must lie in [0, T_s/2)")

    @classmethod
    def from_total(cls, c_tot, n_phases=1, **kw):
        return cls(n_phases=n_phases, c_fly_per_phase=c_tot / n_phases, **kw)

    @property
    def conversion_ratio(self):
        return 2

    @property
    def c_tot(self):
        return self.n_phases * self.c_fly_per_phase

    @property
    def period(self):
        return 1.0 / self.f_sw

    @property
    def phase_path_resistance(self):
        """Series resistance of one slice's conduction path (two sliced switches)."""
        return 2.0 * self.n_phases * self.r_on

    def with_phases(self, n, hold="c_tot"):
        """Re-slice into ``n`` phases, holding either total or per-phase capacitance."""
        if hold == "c_tot":
            return replace(self, n_phases=n, c_fly_per_phase=self.c_tot / n)
        if hold == "per_phase":
            return replace(self, n_phases=n)
        raise ValueError(f"hold must be 'c_tot' or 'per_phase', got {hold!r}")

    def with_c_tot(self, c_tot):
        return replace(self, c_fly_per_phase=c_tot / self.n_phases)


@dataclass(frozen=True)
class LoadModel:
    """Electrical model of the cryptographic load.

    Defaults describe an AES S-box drawing 256 uW on average (156.3 to
    387.22 uW) from a 0.9 V rail at a 200 MHz clock; ``r_l`` is the Ohmic
    equivalent V^2/P of the average draw.
    """
    r_l: float = 0.9 ** 2 / 256e-6
    c_l: float = 20e-12
    c_out: float = 8e-9
    p_avg: float = 256e-6
    p_min: float = 156.3e-6
    p_max: float = 387.22e-6
    v_nominal: float = 0.9
    v_tol_low: float = 0.81
    v_tol_high: float = 0.99
    clock_hz: float = 200e6

    def __post_init__(self):
        if not self.r_l > 0:
            raise ConfigurationError("r_l must be > 0")
        if self.c_l < 0 or self.c_out < 0:
            raise ConfigurationError("c_l and c_out must be >= 0")
        if not self.p_min <= self.p_avg <= self.p_max:
            raise ConfigurationError("need p_min <= p_avg <= p_max")
        if self.p_min < 0:
            raise ConfigurationError("load power must be >= 0")
        if not self.v_tol_low < self.v_nominal < self.v_tol_high:
            raise ConfigurationError("need v_tol_low < v_nominal < v_tol_high")
        if not self.clock_hz > 0:
            raise ConfigurationError("clock_hz must be > 0")

    @property
    def node_capacitance(self):
        return self.c_l + self.c_out

    def constant(self, power):
        """Copy of this load drawing a fixed ``power``."""
        return replace(self, p_avg=power, p_min=power, p_max=power)


class Impedance(NamedTuple):
    r_fsl: float
    r_ssl: float
    r_eq: float


class PhaseEvent(NamedTuple):
    time: float
    phase: int
    connected: bool  # True when the slice connects to the supply


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    dt: float
    v_out: np.ndarray
    v_in: np.ndarray
    phase_events: list = field(default_factory=list)
    steady_state_reached_at: Optional[float] = None
    period: Optional[float] = None
    t0: float = 0.0
    i_load: Optional[np.ndarray] = None
    states: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if len(self.v_out) != len(self.v_in):
            raise ValueError("v_out and v_in must have the same length")

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self.v_out))

    def index_at(self, t):
        return int(math.floor((t - self.t0) / self.dt + 1e-9))


# ---------------------------------------------------------------------------
# analytic model

def equivalent_impedance(cfg):
    r_fsl = cfg.beta_top * cfg.r_on
    r_ssl = cfg.gamma_top / (cfg.c_tot * cfg.f_sw)
    return Impedance(r_fsl, r_ssl, math.hypot(r_fsl, r_ssl))


def _lpf_capacitance(cfg, load):
    return load.c_l + load.c_out + cfg.c_tot


def lpf_transfer_magnitude(cfg, load, f_in):
    """|Vout/Vin| of the first-order model in its optimal region (R_eq/R_L = 1)."""
    if not cfg.optimal_region:
        raise ConfigurationError(
            "optimal-region form requested for a config without the optimal-region flag; "
            "use lpf_transfer_magnitude_general")
    f_in = np.asarray(f_in, dtype=float)
    wrc = 2 * np.pi * f_in * load.r_l * _lpf_capacitance(cfg, load)
    g = 1.0 / np.sqrt(1.0 + wrc * wrc)
    return float(g) if g.ndim == 0 else g


def lpf_transfer_magnitude_general(cfg, load, f_in):
    """|Vout/Vin| = 1/|R_eq/R_L + j 2 pi f R_L C|, exactly as the model is written.

    The DC gain is R_L/R_eq and is not renormalised.
    """
    f_in = np.asarray(f_in, dtype=float)
    ratio = equivalent_impedance(cfg).r_eq / load.r_l
    wrc = 2 * np.pi * f_in * load.r_l * _lpf_capacitance(cfg, load)
    g = 1.0 / np.sqrt(ratio * ratio + wrc * wrc)
    return float(g) if g.ndim == 0 else g


def cutoff_frequency(load, c_eq):
    c = load.c_l + load.c_out + c_eq
    if not c > 0:
        raise ValueError("total capacitance must be > 0")
    return 1.0 / (2 * math.pi * load.r_l * c)


# ---------------------------------------------------------------------------
# switched simulation

def _step_size(cfg, dt):
    limit = cfg.period / (200 * cfg.n_phases)
    if dt is None:
        dt = limit
        if cfg.epsilon_nonoverlap > 0:
            dt = min(dt, cfg.epsilon_nonoverlap / 4)
    elif dt > limit * (1 + 1e-9):
        raise ResolutionError(f"dt={dt:.3g}s exceeds T_s/(200 N) = {limit:.3g}s")
    steps_per_slot = math.ceil(cfg.period / (cfg.n_phases * dt) - 1e-9)
    h = cfg.period / (cfg.n_phases * steps_per_slot)
    return h, steps_per_slot, int(round(cfg.epsilon_nonoverlap / h))


def _load_power(load, n_samples, h, seed):
    if load.p_min == load.p_max:
        return np.full(n_samples, float(load.p_min))
    rng = np.random.default_rng(seed)
    cycle = np.floor(np.arange(n_samples) * h * load.clock_hz + 1e-9).astype(np.int64)
    draws = rng.uniform(load.p_min, load.p_max, size=int(cycle[-1]) + 1)
    return draws[cycle]


def _phase_events(n_phases, steps_per_slot, eps_steps, n_steps, h):
    period = n_phases * steps_per_slot
    on = []
    for p in range(n_steps // period + 1):
        for i in range(n_phases):
            k = p * period + i * steps_per_slot
            on.append((k, i, True))
            on.append((k + period // 2 - eps_steps, i, False))
    on = sorted(e for e in on if e[0] <= n_steps)
    return [PhaseEvent(k * h, i, c) for k, i, c in on]


def _steady_state_time(v_out, period_steps, h, tol):
    n_windows = len(v_out) // period_steps
    means = [v_out[w * period_steps:(w + 1) * period_steps].mean() for w in range(n_windows)]
    for w in range(1, n_windows):
        if abs(means[w] - means[w - 1]) < tol:
            return w * period_steps * h
    return None


def simulate(cfg, load, supply, duration, dt=None, seed=0, record_states=False,
             steady_tol=STEADY_TOL_V):
    """Simulate the regulator output rail for ``duration`` seconds.

    ``dt`` is an upper bound; the step actually used divides T_s/N exactly
    and is reported as ``trace.dt``.  The default step also resolves the
    non-overlap dead time with at least four steps.  Load power is redrawn
    uniformly from [p_min, p_max] once per load clock cycle using ``seed``.
    """
    if duration < 10 * cfg.period * (1 - 1e-9):
        raise ValueError("duration must cover at least 10 switching periods")
    if not load.node_capacitance > 0:
        raise ConfigurationError("output node needs c_out + c_l > 0")
    h, steps_per_slot, eps_steps = _step_size(cfg, dt)
    n_steps = int(round(duration / h))
    v_in = sample(supply, h, (n_steps + 1) * h).samples
    power = _load_power(load, n_steps + 1, h, seed)

    n = cfg.n_phases
    index, phi, g0, g1, _ = _kernel.step_tables(
        n, steps_per_slot, eps_steps, float(cfg.c_fly_per_phase),
        float(cfg.phase_path_resistance), float(load.node_capacitance), h)

    v_half = v_in[0] / 2.0
    r_eq = equivalent_impedance(cfg).r_eq
    i_avg = load.p_avg / v_half if v_half > 0 else 0.0
    x0 = np.full(n + 1, v_half)
    x0[n] = v_half - i_avg * r_eq
    v_max = 2.0 * float(np.max(np.abs(v_in)))

    v_out, i_load, states, done = _kernel.integrate(
        x0, v_in, power, index, phi, g0, g1, v_max, record_states)
    if done < n_steps:
        raise NonConvergenceError(
            f"v_out={v_out[done]:.4g} V left [0, {v_max:.4g}] V at t={done * h:.4g} s")

    period_steps = n * steps_per_slot
    return SimulationTrace(
        dt=h, v_out=v_out, v_in=v_in,
        phase_events=_phase_events(n, steps_per_slot, eps_steps, n_steps, h),
        steady_state_reached_at=_steady_state_time(v_out, period_steps, h, steady_tol),
        period=cfg.period, i_load=i_load,
        states=states if record_states else None)


def direct_supply_trace(load, supply, duration, dt):
    """Trace for an unprotected load: the supply deviation lands on the load rail unfiltered."""
    v_in = sample(supply, dt, duration).samples
    return SimulationTrace(dt=dt, v_out=load.v_nominal + (v_in - supply.nominal_v), v_in=v_in,
                           steady_state_reached_at=0.0)


def glitch_onset_index(trace, tol=1e-9):
    moved = np.flatnonzero(np.abs(trace.v_in - trace.v_in[0]) > tol)
    return int(moved[0]) if len(moved) else None


def _steady_index(trace):
    if trace.steady_state_reached_at is None:
        raise TransientWindowError("trace never reached steady state")
    start = trace.index_at(trace.steady_state_reached_at)
    onset = glitch_onset_index(trace)
    if onset is not None and start > onset:
        raise TransientWindowError("steady state reached only after the glitch began")
    return start, onset


def peak_glitch_at_load(trace, v_nominal):
    """Largest |v_out - v_nominal| after the start-up transient."""
    start, _ = _steady_index(trace)
    return float(np.max(np.abs(trace.v_out[start:] - v_nominal)))


def output_ripple(trace):
    """Peak-to-peak v_out over the last glitch-free steady-state period."""
    if trace.period is None:
        raise TransientWindowError("trace carries no switching period")
    start, onset = _steady_index(trace)
    p = int(round(trace.period / trace.dt))
    stop = onset if onset is not None else len(trace.v_out)
    if stop - start < p:
        raise TransientWindowError("no full glitch-free period in steady state")
    w = trace.v_out[stop - p:stop]
    return float(w.max() - w.min())


class ChargeAudit(NamedTuple):
    max_node_error: float      # worst per-period node imbalance / charge moved in that period
    max_cap_error: float       # same for the flying capacitors
    charge_per_period: float   # mean charge moved through the phases per period


def charge_audit(trace, cfg, load):
    """Check capacitor charge bookkeeping against Ohm's-law branch currents.

    For every step, the charge each slice moves is integrated (trapezoid)
    from its resistor current.  The output-node capacitor must account for
    that charge minus the load's, and each flying capacitor for its own.
    Residuals are summed per period and divided by the total charge moved
    through the slices in that period.
    """
    if trace.states is None:
        raise ValueError("trace was simulated without record_states=True")
    h = trace.dt
    n = cfg.n_phases
    steps_per_slot = int(round(cfg.period / (n * h)))
    eps_steps = int(round(cfg.epsilon_nonoverlap / h))
    sched = _kernel.phase_schedule(n, steps_per_slot, eps_steps).astype(float)
    period = len(sched)
    x = trace.states
    vc, vo, vin = x[:, :n], x[:, n], trace.v_in
    n_steps = len(vo) - 1
    sig = sched[np.arange(n_steps) % period]           # (steps, N)
    r = cfg.phase_path_resistance

    def branch(k0, k1):
        # current into the output node through each slice, using the step's configuration
        charging = (vin[k0][:, None] - vc[k0] - vo[k0][:, None]) / r
        discharging = (vc[k0] - vo[k0][:, None]) / r
        return np.where(sig == 1, charging, np.where(sig == -1, discharging, 0.0))

    ks = np.arange(n_steps)
    q = 0.5 * (branch(ks, ks) + branch(ks + 1, ks + 1)) * h
    node_res = load.node_capacitance * np.diff(vo) - (q.sum(axis=1) - trace.i_load[:-1] * h)
    cap_res = cfg.c_fly_per_phase * np.diff(vc, axis=0) - sig * q

    n_periods = n_steps // period
    moved = np.abs(q[:n_periods * period]).sum(axis=1).reshape(n_periods, period).sum(axis=1)
    node = np.abs(node_res[:n_periods * period]).reshape(n_periods, period).sum(axis=1)
    cap = np.abs(cap_res[:n_periods * period]).sum(axis=1).reshape(n_periods, period).sum(axis=1)
    return ChargeAudit(float(np.max(node / moved)), float(np.max(cap / moved)), float(moved.mean()))


def write_trace_csv(trace, fh, decimate=1):
    """Write (t_seconds, v_in, v_out) rows, keeping every ``decimate``-th sample."""
    if int(decimate) != decimate or decimate < 1:
        raise ValueError("decimate must be a positive integer")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t_seconds", "v_in", "v_out"])
    t = trace.times
    for i in range(0, len(t), int(decimate)):
        w.writerow([format(t[i], ".12g"), format(trace.v_in[i], ".12g"), format(trace.v_out[i], ".12g")])


# ---------------------------------------------------------------------------
# operating point and overhead

class OperatingPoint(NamedTuple):
    config: RegulatorConfig
    r_eq_over_r_l: float
    r_fsl: float
    r_ssl: float


def balanced_switching_frequency(c_tot, r_on, beta_top=2.0, gamma_top=0.25):
    """f_sw at which the slow- and fast-limit impedances are equal."""
    return gamma_top / (c_tot * beta_top * r_on)


def optimize_operating_point(load, c_tot_budget, r_on_range, f_sw_range, n_phases=1,
                             beta_top=2.0, gamma_top=0.25, points=241, **cfg_kw):
    """Pick (r_on, f_sw) driving R_eq/R_L to 1 at the given capacitance budget.

    Among points equally close to R_eq = R_L the one with R_FSL = R_SSL is
    preferred, then the lower switching frequency.  Raises InfeasibleError
    (carrying the best point) when R_eq/R_L ends up outside [0.5, 2].
    """
    r_lo, r_hi = r_on_range
    f_lo, f_hi = f_sw_range
    if not (0 < r_lo <= r_hi and 0 < f_lo <= f_hi):
        raise ValueError("ranges must be non-empty and positive")
    rl = load.r_l

    def point(r_on, f):
        r_fsl = beta_top * r_on
        r_ssl = gamma_top / (c_tot_budget * f)
        ratio = math.hypot(r_fsl, r_ssl) / rl
        key = (round(abs(ratio - 1.0), 12), abs(math.log(r_fsl / r_ssl)), f)
        return key, r_on, f, ratio, r_fsl, r_ssl

    cands = []
    for f in np.geomspace(f_lo, f_hi, points) if f_hi > f_lo else [f_lo]:
        r_ssl = gamma_top / (c_tot_budget * f)
        r_on = math.sqrt(rl * rl - r_ssl * r_ssl) / beta_top if r_ssl < rl else r_lo
        cands.append(point(min(max(r_on, r_lo), r_hi), float(f)))
    for r_on in np.geomspace(r_lo, r_hi, points) if r_hi > r_lo else [r_lo]:
        r_fsl = beta_top * r_on
        f = gamma_top / (c_tot_budget * math.sqrt(rl * rl - r_fsl * r_fsl)) if r_fsl < rl else f_hi
        cands.append(point(float(r_on), min(max(f, f_lo), f_hi)))
    f_bal = math.sqrt(2.0) * gamma_top / (c_tot_budget * rl)
    r_bal = rl / (math.sqrt(2.0) * beta_top)
    cands.append(point(min(max(r_bal, r_lo), r_hi), min(max(f_bal, f_lo), f_hi)))

    _, r_on, f, ratio, r_fsl, r_ssl = min(cands)
    cfg = RegulatorConfig.from_total(c_tot_budget, n_phases, r_on=r_on, f_sw=f,
                                     beta_top=beta_top, gamma_top=gamma_top, **cfg_kw)
    best = OperatingPoint(cfg, ratio, r_fsl, r_ssl)
    if not 0.5 <= ratio <= 2.0:
        raise InfeasibleError(f"best R_eq/R_L = {ratio:.4g} outside [0.5, 2]", best=best)
    return best


class Overhead(NamedTuple):
    area_pct: float
    efficiency_pct: float


# measured area and efficiency overhead against phase count
OVERHEAD_TABLE = {
    1: Overhead(0.0, 84.4),
    2: Overhead(2.62, 84.54),
    4: Overhead(3.93, 84.68),
    8: Overhead(4.58, 84.9),
    16: Overhead(4.9, 85.56),
    24: Overhead(5.02, 86.0),
    32: Overhead(5.07, 85.41),
}


def overhead_estimate(n_phases):
    """Area and efficiency for ``n_phases``.

    Table phase counts return the table row verbatim.  Between rows the
    values are interpolated linearly in log2(N); from 32 to 64 phases they
    saturate at the 32-phase row.
    """
    if int(n_phases) != n_phases or n_phases < 1:
        raise ValueError("n_phases must be a positive integer")
    if n_phases > 64:
        raise ValueError("overhead model covers at most 64 phases")
    n_phases = int(n_phases)
    if n_phases in OVERHEAD_TABLE:
        return OVERHEAD_TABLE[n_phases]
    if n_phases > 32:
        return OVERHEAD_TABLE[32]
    anchors = sorted(OVERHEAD_TABLE)
    hi = next(a for a in anchors if a > n_phases)
    lo = anchors[anchors.index(hi) - 1]
    w = (math.log2(n_phases) - math.log2(lo)) / (math.log2(hi) - math.log2(lo))
    a, b = OVERHEAD_TABLE[lo], OVERHEAD_TABLE[hi]
    return Overhead(a.area_pct + w * (b.area_pct - a.area_pct),
                    a.efficiency_pct + w * (b.efficiency_pct - a.efficiency_pct))


__all__ = [
    "RegulatorConfig", "LoadModel", "SimulationTrace", "PhaseEvent", "Impedance",
    "equivalent_impedance", "lpf_transfer_magnitude", "lpf_transfer_magnitude_general",
    "cutoff_frequency", "simulate", "direct_supply_trace", "peak_glitch_at_load",
    "output_ripple", "charge_audit", "write_trace_csv", "optimize_operating_point",
    "balanced_switching_frequency", "overhead_estimate", "OVERHEAD_TABLE", "GlitchWaveform",
]
