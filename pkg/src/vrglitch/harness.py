"""Fault campaigns and parameter sweeps.

A campaign repeats one glitch attack ``trials`` times.  Trial ``i`` uses
seed ``base_seed + i`` for everything random in it: the glitch start
(uniform over one switching period), the load-power profile, the fault
mask, the countermeasure PRNG and, with ``key_policy="random"``, the key and
plaintext.  A trial counts as a fault when the load output differs from
the correct one.  ``exploitable`` trials are faults the countermeasure did
not infect.
"""

from dataclasses import dataclass, field, replace
import csv
from fractions import Fraction
import io
import json
import math
from typing import NamedTuple, Optional

import numpy as np

from . import attenuation
from .errors import VrGlitchError
from .infective import DetectorConfig, end_to_end, sub_seeds
from .regulator import LoadModel, RegulatorConfig
from .target import FaultModel
from .waveforms import GlitchWaveform

FIPS_KEY = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
FIPS_PLAINTEXT = bytes.fromhex("00112233445566778899aabbccddeeff")
DEFAULT_PERIOD = 1.0 / 60e6


@dataclass(frozen=True)
class CampaignSpec:
    glitch: GlitchWaveform
    fault_model: FaultModel
    trials: int = 1000
    base_seed: int = 0
    regulator: Optional[RegulatorConfig] = field(default_factory=RegulatorConfig)
    detector: Optional[DetectorConfig] = None
    load: LoadModel = field(default_factory=LoadModel)
    randomize_start: bool = True
    alignment_period: Optional[float] = None
    key_policy: str = "fixed"
    key: bytes = FIPS_KEY
    plaintext: bytes = FIPS_PLAINTEXT
    duration: Optional[float] = None

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.base_seed < 0:
            raise ValueError("base_seed must be >= 0")
        if self.key_policy not in ("fixed", "random"):
            raise ValueError("key_policy must be 'fixed' or 'random'")

    @property
    def period(self):
        """Window over which the glitch start is randomised."""
        if self.alignment_period is not None:
            return self.alignment_period
        return self.regulator.period if self.regulator is not None else DEFAULT_PERIOD

    @property
    def sim_duration(self):
        if self.duration is not None:
            return self.duration
        return max(10 * self.period, self.fault_model.evaluation_window[1])


def default_scenario(n_phases=1, trials=2000, base_seed=0, protected=True, detector=False,
                     c_tot=1e-9, f_sw=60e6, **cfg_kw):
    """1.8 V rail regulated to 0.9 V, hit by a +2 V, 0.5/1/0.5 ns glitch.

    The glitch template starts at 5 T_s (after the regulator has settled)
    and the load evaluates from 5 T_s to 10 T_s.
    """
    cfg = RegulatorConfig.from_total(c_tot, n_phases, f_sw=f_sw, **cfg_kw)
    t = cfg.period
    fm = FaultModel(0.81, 0.99, (5 * t, 10 * t))
    return CampaignSpec(
        glitch=GlitchWaveform(1.8, 2.0, 5 * t, 0.5e-9, 1e-9, 0.5e-9),
        fault_model=fm,
        trials=trials,
        base_seed=base_seed,
        regulator=cfg if protected else None,
        detector=DetectorConfig.from_fault_model(fm) if detector else None,
        alignment_period=t,
    )


class TrialRecord(NamedTuple):
    seed: int
    faulted: bool           # output differs from the correct one
    contaminated: bool
    peak_deviation: float   # volts, nan for errored trials
    rail_fault: bool        # rail left the fault window
    t_start: float
    triggered: bool = False
    ciphertext: str = ""    # hex of the load output
    correct: str = ""       # hex of the fault-free output
    error: str = ""


def _pct(count, total):
    return float(Fraction(100 * count, total)) if total else math.nan


@dataclass(frozen=True)
class FaultCampaignResult:
    trials: int
    faults: int
    contaminated_count: int
    exploitable_count: int
    errors: int
    per_trial: tuple

    @property
    def completed(self):
        return self.trials - self.errors

    @property
    def success_rate(self):
        """Exact fault fraction over completed trials."""
        return Fraction(self.faults, self.completed) if self.completed else None

    @property
    def success_rate_pct(self):
        return _pct(self.faults, self.completed)

    @property
    def fault_coverage_pct(self):
        return 100.0 - self.success_rate_pct if self.completed else math.nan

    @property
    def exploitable_rate_pct(self):
        return _pct(self.exploitable_count, self.completed)

    @property
    def peak_deviation(self):
        """Largest rail deviation over all completed trials."""
        v = [r.peak_deviation for r in self.per_trial if not r.error]
        return max(v) if v else math.nan

    @property
    def mean_peak_deviation(self):
        v = [r.peak_deviation for r in self.per_trial if not r.error]
        return math.fsum(v) / len(v) if v else math.nan

    def summary(self):
        doc = {
            "trials": self.trials,
            "faults": self.faults,
            "errors": self.errors,
            "contaminated_count": self.contaminated_count,
            "exploitable_count": self.exploitable_count,
            "success_rate_pct": self.success_rate_pct,
            "fault_coverage_pct": self.fault_coverage_pct,
            "exploitable_rate_pct": self.exploitable_rate_pct,
            "peak_deviation_v": self.peak_deviation,
            "mean_peak_deviation_v": self.mean_peak_deviation,
        }
        return {k: _plain(v) for k, v in doc.items()}

    def to_json(self):
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"

    def trials_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "faulted", "contaminated", "peak_deviation_volts", "rail_fault",
                    "t_start_seconds", "triggered", "ciphertext", "correct", "error"])
        for r in self.per_trial:
            w.writerow([r.seed, _cell(r.faulted), _cell(r.contaminated), _cell(r.peak_deviation),
                        _cell(r.rail_fault), _cell(r.t_start), _cell(r.triggered), r.ciphertext,
                        r.correct, r.error])
        return buf.getvalue()


def run_trial(spec, i):
    seed = spec.base_seed + i
    rng = np.random.default_rng(sub_seeds(seed, 4)[3])
    offset = float(rng.uniform(0.0, spec.period)) if spec.randomize_start else 0.0
    if spec.key_policy == "random":
        key, pt = rng.bytes(16), rng.bytes(16)
    else:
        key, pt = spec.key, spec.plaintext
    glitch = spec.glitch.shifted(spec.glitch.t_start + offset)
    try:
        r = end_to_end(spec.regulator, spec.load, spec.detector, spec.fault_model, glitch,
                       key, pt, seed, duration=spec.sim_duration)
    except (VrGlitchError, ArithmeticError) as e:
        return TrialRecord(seed, False, False, math.nan, False, glitch.t_start,
                           error=f"{type(e).__name__}: {e}")
    return TrialRecord(seed, r.ciphertext != r.correct, r.contaminated, r.peak_deviation,
                       r.faulted, glitch.t_start, r.triggered, r.ciphertext.hex(), r.correct.hex())


def run_campaign(spec, progress=None):
    """Run all trials in seed order.  Errored trials are kept and counted, not dropped."""
    records = []
    for i in range(spec.trials):
        records.append(run_trial(spec, i))
        if progress is not None:
            progress(i + 1, spec.trials)
    ok = [r for r in records if not r.error]
    return FaultCampaignResult(
        trials=spec.trials,
        faults=sum(r.faulted for r in ok),
        contaminated_count=sum(r.contaminated for r in ok),
        exploitable_count=sum(r.faulted and not r.contaminated for r in ok),
        errors=len(records) - len(ok),
        per_trial=tuple(records),
    )


# ---------------------------------------------------------------------------
# tables

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def _parse_cell(s):
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _plain(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


@dataclass(frozen=True)
class SweepTable:
    kind: str
    columns: tuple
    rows: tuple
    verdicts: dict = field(default_factory=dict)
    annotations: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self):
        doc = {
            "kind": self.kind,
            "columns": list(self.columns),
            "rows": [[_plain(v) for v in row] for row in self.rows],
            "verdicts": {k: bool(v) for k, v in self.verdicts.items()},
            "annotations": {k: _plain(v) for k, v in self.annotations.items()},
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def column(self, name):
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def where(self, **match):
        idx = {k: self.columns.index(k) for k in match}
        return [row for row in self.rows if all(row[i] == match[k] for k, i in idx.items())]


def parse_csv(text):
    """(columns, rows) of an emitted table, numbers parsed back to int/float."""
    rows = list(csv.reader(io.StringIO(text)))
    return tuple(rows[0]), tuple(tuple(_parse_cell(c) for c in r) for r in rows[1:])


def non_increasing(values, rel_tol=0.0):
    return all(b <= a * (1 + rel_tol) for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# sweeps

PHASE_LIST = (1, 2, 4, 8, 16, 32)
CAP_LIST = (0.5e-9, 0.75e-9, 1e-9, 1.5e-9, 2e-9, 3e-9)
FREQ_LIST = (30e6, 40e6, 50e6, 60e6)
DURATION_LIST = tuple(d * 1e-9 for d in range(1, 32, 2))
CAMPAIGN_COLUMNS = ("success_rate_pct", "fault_coverage_pct", "exploitable_rate_pct",
                    "peak_deviation_v", "mean_peak_deviation_v", "trials", "faults", "errors")


def _campaign_cells(res):
    return (res.success_rate_pct, res.fault_coverage_pct, res.exploitable_rate_pct,
            res.peak_deviation, res.mean_peak_deviation, res.trials, res.faults, res.errors)


def _base_regulator(spec):
    return spec.regulator if spec.regulator is not None else RegulatorConfig()


def phase_spec(spec, n, hold="c_tot"):
    """Campaign for one phase-count row; ``n=None`` removes the regulator."""
    if n is None:
        return replace(spec, regulator=None, alignment_period=spec.period)
    return replace(spec, regulator=_base_regulator(spec).with_phases(n, hold),
                   alignment_period=spec.period)


def sweep_phases(spec, n_list=PHASE_LIST, include_unprotected=True, hold="c_tot", progress=None):
    rows = []
    results = {}
    for n in ((None,) if include_unprotected else ()) + tuple(n_list):
        res = run_campaign(phase_spec(spec, n, hold))
        results[n] = res
        rows.append(("none" if n is None else n,) + _campaign_cells(res))
        if progress:
            progress("phases", n)
    regulated = [results[n] for n in n_list]
    verdicts = {
        "success_rate_non_increasing": non_increasing([r.success_rate_pct for r in regulated]),
        "peak_deviation_non_increasing": non_increasing([r.peak_deviation for r in regulated]),
    }
    notes = {}
    if include_unprotected:
        verdicts["unprotected_coverage_zero"] = results[None].fault_coverage_pct == 0.0
    if len(n_list) >= 2:
        span = results[n_list[-1]].fault_coverage_pct - results[n_list[0]].fault_coverage_pct
        notes["coverage_span_pct"] = span
    return SweepTable("phases", ("n_phases",) + CAMPAIGN_COLUMNS, tuple(rows), verdicts, notes)


def capacitor_spec(spec, c_tot):
    return replace(spec, regulator=_base_regulator(spec).with_c_tot(c_tot))


def octave_slope(cs, values, c_lo):
    """Relative change of ``values`` per octave of capacitance between c_lo and 2*c_lo."""
    x = np.log2(np.asarray(cs, dtype=float))
    lo = np.interp(math.log2(c_lo), x, values)
    hi = np.interp(math.log2(2 * c_lo), x, values)
    return float((hi - lo) / lo)


def sweep_capacitor(spec, c_list=CAP_LIST, progress=None):
    """Peak deviation against total flying capacitance.

    The energy column is the worst-case transmitted energy of the glitch at
    the regulator's phase count.
    """
    cfg = _base_regulator(spec)
    rows = []
    for c in c_list:
        res = run_campaign(capacitor_spec(spec, c))
        e = attenuation.energy_vs_phases(spec.glitch, c, cfg.f_sw, [cfg.n_phases])[0].energy_j
        rows.append((c, res.peak_deviation, res.mean_peak_deviation, e))
        if progress:
            progress("capacitor", c)
    peaks = [r[1] for r in rows]
    first = octave_slope(c_list, peaks, c_list[0])
    last = octave_slope(c_list, peaks, c_list[-1] / 2)
    verdicts = {
        "increases_overall": peaks[-1] >= peaks[0],
        "saturates": abs(last) < 0.05,
        "last_octave_below_quarter_of_first": first > 0 and last < 0.25 * first,
    }
    notes = {"first_octave_slope": first, "last_octave_slope": last}
    return SweepTable("capacitor", ("c_tot_f", "peak_deviation_v", "mean_peak_deviation_v",
                                    "energy_j"), tuple(rows), verdicts, notes)


def frequency_spec(spec, f_sw, n):
    """Row campaign at ``f_sw``: glitch start, evaluation window and run length scale with T_s."""
    cfg = replace(_base_regulator(spec), f_sw=f_sw).with_phases(n)
    k = cfg.period / spec.period
    fm = spec.fault_model
    return replace(
        spec, regulator=cfg, alignment_period=cfg.period,
        glitch=spec.glitch.shifted(spec.glitch.t_start * k),
        fault_model=replace(fm, evaluation_window=tuple(t * k for t in fm.evaluation_window)),
        duration=None if spec.duration is None else spec.duration * k)


def sweep_frequency(spec, f_list=FREQ_LIST, n_list=(1, 32), progress=None):
    rows = []
    for n in n_list:
        for f in f_list:
            res = run_campaign(frequency_spec(spec, f, n))
            rows.append((f, n, res.peak_deviation, res.mean_peak_deviation))
            if progress:
                progress("frequency", (n, f))
    peak = {(r[1], r[0]): r[2] for r in rows}
    verdicts = {f"non_increasing_in_f_n{n}": non_increasing([peak[n, f] for f in f_list])
                for n in n_list}
    verdicts["largest_n_dominates"] = all(peak[max(n_list), f] <= peak[min(n_list), f] for f in f_list)
    return SweepTable("frequency", ("f_sw_hz", "n_phases", "peak_deviation_v",
                                    "mean_peak_deviation_v"), tuple(rows), verdicts)


def duration_spec(spec, total, n):
    g = spec.glitch.with_total_duration(total)
    return replace(phase_spec(spec, n), glitch=g)


def sweep_duration(spec, durations=DURATION_LIST, n_list=(None, 1, 16, 32), progress=None,
                   reference=10e-9):
    """Peak deviation against total glitch length, with the Nyquist guard annotated per row."""
    f_sw = _base_regulator(spec).f_sw
    rows = []
    peak = {}
    for d in durations:
        g = spec.glitch.with_total_duration(d)
        guard = attenuation.nyquist_margin(f_sw, g)
        for n in n_list:
            res = run_campaign(duration_spec(spec, d, n))
            peak[d, n] = res.peak_deviation
            rows.append((d, g.t_g, "none" if n is None else n, res.peak_deviation,
                         res.mean_peak_deviation, guard.protected, guard.max_protected_duration))
            if progress:
                progress("duration", (d, n))
    verdicts = {"ordered_at_every_duration": all(
        non_increasing([peak[d, n] for n in n_list]) for d in durations)}
    notes = {"max_protected_duration_s": 1.0 / (2.0 * f_sw)}
    lo, hi = min(x for x in n_list if x is not None), max(x for x in n_list if x is not None)
    for n in (lo, hi):
        if (reference, n) not in peak:
            peak[reference, n] = run_campaign(duration_spec(spec, reference, n)).peak_deviation
    ratio = peak[reference, hi] / peak[reference, lo]
    notes["reference_duration_s"] = reference
    notes[f"ratio_n{hi}_over_n{lo}_at_reference"] = ratio
    verdicts["halved_at_reference_duration"] = ratio <= 0.5 * 1.3
    return SweepTable("duration", ("t_total_s", "t_g_s", "n_phases", "peak_deviation_v",
                                   "mean_peak_deviation_v", "nyquist_protected",
                                   "max_protected_duration_s"), tuple(rows), verdicts, notes)


SWEEPS = {
    "phases": sweep_phases,
    "capacitor": sweep_capacitor,
    "frequency": sweep_frequency,
    "duration": sweep_duration,
}
