"""Supply-rail waveforms: the trapezoidal glitch and its attacker-model checks.

A glitch is a trapezoidal deviation superposed on a nominal rail::

              t_r     t_g     t_f
             <--> <---------> <-->
                  ___________
                 /           \\
    ____________/             \\____________   nominal_v
               t_start

``amplitude`` is signed: positive for an over-voltage glitch, negative for
an under-voltage one.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ResolutionError

CC_CLOCK_MIN_HZ = 50e6
CC_CLOCK_MAX_HZ = 1e9


@dataclass(frozen=True)
class GlitchWaveform:
    nominal_v: float
    amplitude: float = 0.0
    t_start: float = 0.0
    t_r: float = 0.0
    t_g: float = 0.0
    t_f: float = 0.0

    def __post_init__(self):
        for name in ("t_start", "t_r", "t_g", "t_f"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    @property
    def total_duration(self):
        """Rise + flat top + fall."""
        return self.t_r + self.t_g + self.t_f

    @property
    def t_end(self):
        return self.t_start + self.total_duration

    @property
    def frequency(self):
        """Equivalent glitch frequency 1/(t_r + t_g + t_f); inf for a zero-width glitch."""
        d = self.total_duration
        return math.inf if d == 0 else 1.0 / d

    def shifted(self, t_start):
        return GlitchWaveform(self.nominal_v, self.amplitude, t_start, self.t_r, self.t_g, self.t_f)

    def scaled(self, factor):
        return GlitchWaveform(self.nominal_v, self.amplitude * factor, self.t_start,
                              self.t_r, self.t_g, self.t_f)

    def with_total_duration(self, total):
        """Same edges, flat top stretched so that t_r + t_g + t_f == total."""
        t_g = total - self.t_r - self.t_f
        if t_g < 0:
            raise ValueError("total duration shorter than the rise and fall edges")
        return GlitchWaveform(self.nominal_v, self.amplitude, self.t_start, self.t_r, t_g, self.t_f)


@dataclass(frozen=True, eq=False)
class SampledTrace:
    dt: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if len(self.samples) == 0:
            raise ValueError("samples must be non-empty")

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self.samples))


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str


def deviation(g, t):
    """Glitch deviation from the nominal rail at time(s) ``t`` (vectorised)."""
    t = np.asarray(t, dtype=float)
    x = t - g.t_start
    a = g.amplitude
    top_end = g.t_r + g.t_g
    end = top_end + g.t_f
    out = np.zeros_like(x)
    if a == 0:
        return out
    if g.t_r > 0:
        rising = (x >= 0) & (x < g.t_r)
        out = np.where(rising, a * x / g.t_r, out)
    flat = (x >= g.t_r) & (x <= top_end)
    out = np.where(flat, a, out)
    if g.t_f > 0:
        falling = (x > top_end) & (x <= end)
        out = np.where(falling, a * (end - x) / g.t_f, out)
    return out


def glitch_value(g, t):
    """Rail voltage at time ``t``: nominal plus the trapezoidal deviation."""
    v = g.nominal_v + deviation(g, t)
    return float(v) if np.ndim(v) == 0 else v


def sample(g, dt, duration, t0=0.0):
    """Sample the rail on a uniform grid of ``round(duration/dt)`` points.

    Raises ResolutionError if ``dt`` is more than a quarter of a nonzero edge.
    """
    if not dt > 0 or not duration > 0:
        raise ValueError("dt and duration must be > 0")
    edges = [e for e in (g.t_r, g.t_f) if e > 0]
    if edges and dt > min(edges) / 4 * (1 + 1e-9):
        raise ResolutionError(
            f"dt={dt:.3g}s too coarse for glitch edges (need <= {min(edges) / 4:.3g}s)")
    n = max(1, int(round(duration / dt)))
    t = t0 + dt * np.arange(n)
    return SampledTrace(dt=dt, samples=g.nominal_v + deviation(g, t), t0=t0)


def check_attacker_model(g, cc_clock_hz, cc_nominal_v):
    """Return the list of threat-model rules ``g`` breaks (empty when it complies).

    Rules: CC clock within [50 MHz, 1 GHz]; glitch at least half a CC clock
    period long; peak rail magnitude at most twice the CC nominal voltage.
    """
    out = []
    if not CC_CLOCK_MIN_HZ <= cc_clock_hz <= CC_CLOCK_MAX_HZ:
        out.append(Violation("clock-out-of-range",
                             f"CC clock {cc_clock_hz:.4g} Hz outside [50 MHz, 1 GHz]"))
    half_period = 1.0 / (2.0 * cc_clock_hz)
    if g.total_duration < half_period * (1 - 1e-12):
        out.append(Violation("too-short-duration",
                             f"glitch lasts {g.total_duration:.4g} s < half CC period {half_period:.4g} s"))
    peak = abs(g.nominal_v + g.amplitude)
    limit = 2.0 * cc_nominal_v
    if peak > limit * (1 + 1e-12):
        out.append(Violation("exceeds-2x-nominal",
                             f"peak {peak:.4g} V above 2x nominal {limit:.4g} V"))
    return out
