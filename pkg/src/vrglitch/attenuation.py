"""Closed-form attenuation maths for interleaved regulators.

* glitch energy handed to the load when each of the N phases connects to a
  glitched supply (``transmitted_glitch_energy``, ``energy_vs_phases``),
* the equal-tap FIR filter the interleaving forms (``fir_response``),
* the Nyquist-style guard on glitch duration (``nyquist_margin``).
"""

from dataclasses import dataclass
import csv
import math
from typing import NamedTuple

import numpy as np

from .waveforms import deviation


@dataclass(frozen=True)
class PhaseSampledGlitch:
    """Glitch deviation seen at each of the ``n`` phase-connection instants of one period."""
    v_g: tuple
    n: int
    c_tot: float

    def __post_init__(self):
        object.__setattr__(self, "v_g", tuple(float(v) for v in self.v_g))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if len(self.v_g) != self.n:
            raise ValueError(f"expected {self.n} samples, got {len(self.v_g)}")
        if not self.c_tot > 0:
            raise ValueError("c_tot must be > 0")

    @property
    def nonzero_count(self):
        return sum(1 for v in self.v_g if v != 0.0)


def transmitted_glitch_energy(g):
    """E = C_tot/(2N) * sum(v_g^2)."""
    return g.c_tot / (2 * g.n) * math.fsum(v * v for v in g.v_g)


def phase_samples(glitch, f_sw, n, phi):
    """Deviation at connection instants ``phi + k*T/n`` (relative to glitch start).

    Only instants inside one period starting at the glitch are kept, so at
    most ``n`` are nonzero; the rest of the vector is zero padded.
    """
    period = 1.0 / f_sw
    span = min(glitch.total_duration, period)
    step = period / n
    k = np.arange(n)
    t = phi + k * step
    t = t[t <= span]
    vals = deviation(glitch.shifted(0.0), t) if len(t) else np.zeros(0)
    out = np.zeros(n)
    out[:len(vals)] = vals
    return out


def _alignment_candidates(glitch, f_sw, n):
    # sum of squared piecewise-linear samples is piecewise convex in the
    # alignment, so its maximum sits on a breakpoint of some sample
    step = 1.0 / (f_sw * n)
    g = glitch.shifted(0.0)
    marks = [0.0, g.t_r, g.t_r + g.t_g, g.total_duration, min(g.total_duration, 1.0 / f_sw)]
    cands = {0.0}
    for b in marks:
        cands.add(math.fmod(b, step))
    return sorted(c for c in cands if 0.0 <= c < step)


def worst_case_samples(glitch, f_sw, n):
    best, best_e = None, -1.0
    for phi in _alignment_candidates(glitch, f_sw, n):
        v = phase_samples(glitch, f_sw, n, phi)
        e = float(np.dot(v, v))
        if e > best_e:
            best, best_e = v, e
    return best


class EnergyRow(NamedTuple):
    n: int
    energy_j: float
    nonzero_samples: int
    precondition_ok: bool   # fewer than n/2 nonzero samples and glitch shorter than T_s/2


def energy_vs_phases(glitch, c_tot, f_sw, n_list, alignment="worst", trials=256, seed=0):
    """Transmitted glitch energy for each phase count.

    ``alignment="worst"`` picks the glitch phase that maximises the energy;
    ``"random"`` averages over ``trials`` uniformly drawn alignments.
    Rows violating the small-glitch precondition are flagged, not dropped.
    """
    rows = []
    half_period = 0.5 / f_sw
    for n in n_list:
        if alignment == "worst":
            v = worst_case_samples(glitch, f_sw, n)
            e = transmitted_glitch_energy(PhaseSampledGlitch(v, n, c_tot))
            nz = int(np.count_nonzero(v))
        elif alignment == "random":
            rng = np.random.default_rng([seed, n])
            step = 1.0 / (f_sw * n)
            es, nz = [], 0
            for phi in rng.uniform(0.0, step, trials):
                v = phase_samples(glitch, f_sw, n, phi)
                es.append(transmitted_glitch_energy(PhaseSampledGlitch(v, n, c_tot)))
                nz = max(nz, int(np.count_nonzero(v)))
            e = math.fsum(es) / trials
        else:
            raise ValueError(f"alignment must be 'worst' or 'random', got {alignment!r}")
        ok = nz < n / 2 and glitch.total_duration < half_period
        rows.append(EnergyRow(int(n), e, nz, ok))
    return rows


@dataclass(frozen=True)
class FirSpec:
    n_taps: int
    coefficients: tuple
    sample_rate: float

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if int(self.n_taps) != self.n_taps or self.n_taps < 1:
            raise ValueError("n_taps must be a positive integer")
        if len(self.coefficients) != self.n_taps:
            raise ValueError("need one coefficient per tap")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")

    @classmethod
    def moving_average(cls, n_phases, f_sw):
        """Equal-tap filter of an N-phase regulator, one tap per phase connection."""
        return cls(n_phases, (1.0 / n_phases,) * n_phases, n_phases * f_sw)


def fir_response(spec, f):
    """|sum_i b_i exp(-j 2 pi f i / fs)| by direct summation."""
    f = np.asarray(f, dtype=float)
    i = np.arange(spec.n_taps)
    w = -2j * np.pi * np.multiply.outer(f, i) / spec.sample_rate
    h = np.abs(np.exp(w) @ np.asarray(spec.coefficients))
    return float(h) if h.ndim == 0 else h


def fir_response_closed_form(n, sample_rate, f):
    """|sin(pi f N/fs) / (N sin(pi f/fs))|, the equal-tap response (1 where the ratio is 0/0)."""
    f = np.asarray(f, dtype=float)
    x = np.pi * f / sample_rate
    den = n * np.sin(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.abs(np.sin(n * x) / den)
    h = np.where(np.abs(den) < 1e-300, 1.0, h)
    return float(h) if h.ndim == 0 else h


class NyquistMargin(NamedTuple):
    protected: bool
    max_protected_duration: float


def nyquist_margin(f_sw, glitch):
    """Glitches shorter than 1/(2 f_sw) are spread over the interleave and attenuated."""
    if not f_sw > 0:
        raise ValueError("f_sw must be > 0")
    limit = 1.0 / (2.0 * f_sw)
    return NyquistMargin(glitch.total_duration < limit, limit)


def write_energy_csv(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n_phases", "energy_joules"])
    for r in rows:
        w.writerow([r.n, format(r.energy_j, ".12g")])


def write_fir_csv(spec, freqs, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["f_hz", "magnitude"])
    for f, m in zip(freqs, np.atleast_1d(fir_response(spec, freqs))):
        w.writerow([format(float(f), ".12g"), format(float(m), ".12g")])
