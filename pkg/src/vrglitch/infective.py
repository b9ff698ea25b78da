"""Glitch detector and infective last-round-key contamination.

The detector is a pair of comparators on the regulated rail.  When it
fires, a fresh 16-byte PRNG mask is XORed into the round-10 subkey so the
faulty ciphertext carries no usable difference.

The PRNG is Marsaglia's xorshift128.  It is deterministic and easy to port,
but it is not a cryptographic generator; it only stands in for the
hardware PRNG in simulation.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import regulator, target
from .errors import WindowError

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class DetectorConfig:
    v_ref_low: float
    v_ref_high: float
    latch: bool = True

    def __post_init__(self):
        if not self.v_ref_low < self.v_ref_high:
            raise ValueError("need v_ref_low < v_ref_high")

    @classmethod
    def from_fault_model(cls, fm, margin=0.02, latch=True):
        """References inside the fault window, pulled in by ``margin`` of its width on each side."""
        w = fm.v_fault_high - fm.v_fault_low
        return cls(fm.v_fault_low + margin * w, fm.v_fault_high - margin * w, latch)

    def within(self, fm):
        """True when the reference window sits inside the fault window."""
        return fm.v_fault_low <= self.v_ref_low and self.v_ref_high <= fm.v_fault_high


class Detection(NamedTuple):
    triggered: bool
    first_event_index: Optional[int]
    event_indices: list


def detect(trace, cfg, window):
    """Samples in ``window`` strictly below v_ref_low or strictly above v_ref_high."""
    t0, t1 = window
    if not t1 > t0:
        raise WindowError("detection window is empty")
    i0, i1 = target.window_indices(trace, window)
    seg = np.asarray(trace.v_out[i0:i1 + 1])
    ev = (i0 + np.flatnonzero((seg < cfg.v_ref_low) | (seg > cfg.v_ref_high))).tolist()
    return Detection(bool(ev), ev[0] if ev else None, ev)


# ---------------------------------------------------------------------------
# PRNG

@dataclass(frozen=True)
class PrngState:
    """xorshift128 state packed as x<<96 | y<<64 | z<<32 | w."""
    state: int

    def __post_init__(self):
        if not 0 < self.state < 1 << 128:
            raise ValueError("PRNG state must be a nonzero 128-bit integer")

    @classmethod
    def from_words(cls, x, y, z, w):
        return cls((x << 96) | (y << 64) | (z << 32) | w)

    @property
    def words(self):
        s = self.state
        return (s >> 96) & MASK32, (s >> 64) & MASK32, (s >> 32) & MASK32, s & MASK32


def splitmix64(s):
    """One splitmix64 step: returns (output, next_state)."""
    s = (s + 0x9E3779B97F4A7C15) & MASK64
    z = s
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31), s


def seed_state(seed):
    """Expand a u64 seed to a 128-bit state: two splitmix64 outputs, high word first."""
    if not 0 <= seed <= MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    hi, s = splitmix64(seed)
    lo, _ = splitmix64(s)
    return PrngState((hi << 64) | lo or 1)


def xorshift128_step(x, y, z, w):
    t = (x ^ (x << 11)) & MASK32
    w2 = (w ^ (w >> 19) ^ t ^ (t >> 8)) & MASK32
    return y, z, w, w2


def prng_next(s):
    """(16-byte mask, next state).  Four 32-bit outputs, big-endian; all-zero masks are redrawn."""
    x, y, z, w = s.words
    while True:
        out = []
        for _ in range(4):
            x, y, z, w = xorshift128_step(x, y, z, w)
            out.append(w)
        mask = b"".join(v.to_bytes(4, "big") for v in out)
        if any(mask):
            return mask, PrngState.from_words(x, y, z, w)


class InfectiveResult(NamedTuple):
    ciphertext: bytes
    contaminated: bool
    prng: PrngState


def infective_encrypt(key, plaintext, triggered, prng):
    if not triggered:
        return InfectiveResult(target.aes128_encrypt(key, plaintext), False, prng)
    mask, nxt = prng_next(prng)
    ct = target.aes128_encrypt_traced(key, plaintext, last_round_key_mask=mask).ciphertext
    return InfectiveResult(ct, True, nxt)


# ---------------------------------------------------------------------------
# full pipeline

class EndToEnd(NamedTuple):
    ciphertext: bytes
    faulted: bool         # the rail left the fault window during evaluation
    contaminated: bool    # the countermeasure infected the last round
    triggered: bool
    correct: bytes
    peak_deviation: float
    trace: object


def sub_seeds(seed, k=3):
    """``k`` independent 64-bit seeds derived from one trial seed."""
    return [int(v) for v in np.random.SeedSequence(seed).generate_state(k, np.uint64)]


def rail_trace(cfg, load, glitch, duration, seed, dt_direct=None):
    """Load rail for one trial: simulated through the regulator, or direct when ``cfg`` is None."""
    if cfg is None:
        edges = [e for e in (glitch.t_r, glitch.t_f) if e > 0]
        dt = dt_direct or (min(edges) / 8 if edges else duration / 10000)
        return regulator.direct_supply_trace(load, glitch, duration, dt)
    return regulator.simulate(cfg, load, glitch, duration, seed=seed)


def end_to_end(cfg, load, det, fm, glitch, key, plaintext, seed, duration=None, dt_direct=None):
    """Regulator, then detector on the regulated rail, then the load with infection.

    ``cfg=None`` applies the supply directly to the load; ``det=None`` runs
    without the countermeasure.  With a non-latching detector only events in
    the last-round time slot (where the round-10 key is consumed) infect.
    """
    if duration is None:
        base = cfg.period if cfg is not None else 1.0 / 60e6
        duration = max(10 * base, fm.evaluation_window[1])
    s_load, s_fault, s_prng = sub_seeds(seed)
    trace = rail_trace(cfg, load, glitch, duration, s_load, dt_direct)

    mask = None
    triggered = False
    if det is not None:
        d = detect(trace, det, fm.evaluation_window)
        events = d.event_indices
        if not det.latch:
            events = [i for i in events if target.round_at(fm, trace.t0 + i * trace.dt) == 10]
        triggered = bool(events)
        if triggered:
            mask, _ = prng_next(seed_state(s_prng))

    ev = target.evaluate_under_supply(trace, fm, key, plaintext, s_fault, last_round_mask=mask)
    peak = regulator.peak_glitch_at_load(trace, load.v_nominal)
    return EndToEnd(ev.ciphertext, ev.faulted, mask is not None, triggered,
                    target.reference_output(fm, key, plaintext), peak, trace)
