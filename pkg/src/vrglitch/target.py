"""Cryptographic load: AES-128 with fault taps and a supply-driven fault model.

The cipher is a plain table-driven byte implementation.  Rounds are
numbered 1..10; ``round_taps`` / ``fault`` refer to the state *entering*
that round (after the previous round's AddRoundKey).
"""

from dataclasses import dataclass
import math
from typing import NamedTuple, Optional

import numpy as np

from .errors import WindowError

SBOX = bytes.fromhex(
    "637c777bf26b6fc53001672bfed7ab76ca82c97dfa5947f0add4a2af9ca472c0"
    "b7fd9326363ff7cc34a5e5f171d8311504c723c31896059a071280e2eb27b275"
    "09832c1a1b6e5aa0523bd6b329e32f8453d100ed20fcb15b6acbbe394a4c58cf"
    "d0efaafb434d338545f9027f503c9fa851a3408f929d38f5bcb6da2110fff3d2"
    "cd0c13ec5f974417c4a77e3d645d197360814fdc222a908846eeb814de5e0bdb"
    "e0323a0a4906245cc2d3ac629195e479e7c8376d8dd54ea96c56f4ea657aae08"
    "ba78252e1ca6b4c6e8dd741f4bbd8b8a703eb5664803f60e613557b986c11d9e"
    "e1f8981169d98e949b1e87e9ce5528df8ca1890dbfe6426841992d0fb054bb16"
)
INV_SBOX = bytes(SBOX.index(i) for i in range(256))

_RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)


def sbox(b):
    return SBOX[b]


def inv_sbox(b):
    return INV_SBOX[b]


def _xtime(a):
    a <<= 1
    return (a ^ 0x11B) & 0xFF if a & 0x100 else a


def _gmul(a, b):
    p = 0
    while b:
        if b & 1:
            p ^= a
        a = _xtime(a)
        b >>= 1
    return p


def _check16(name, value):
    value = bytes(value)
    if len(value) != 16:
        raise ValueError(f"{name} must be 16 bytes, got {len(value)}")
    return value


def expand_key(key):
    """The 11 round keys of AES-128 as 16-byte strings."""
    key = _check16("key", key)
    w = [list(key[i:i + 4]) for i in range(0, 16, 4)]
    for i in range(4, 44):
        t = list(w[i - 1])
        if i % 4 == 0:
            t = [SBOX[b] for b in t[1:] + t[:1]]
            t[0] ^= _RCON[i // 4 - 1]
        w.append([a ^ b for a, b in zip(w[i - 4], t)])
    return [bytes(sum(w[4 * r:4 * r + 4], [])) for r in range(11)]


# state layout: byte index = 4*column + row (the standard column-major order)

def _sub_bytes(s):
    return [SBOX[b] for b in s]


def _inv_sub_bytes(s):
    return [INV_SBOX[b] for b in s]


def _shift_rows(s):
    return [s[4 * ((c + r) % 4) + r] for c in range(4) for r in range(4)]


def _inv_shift_rows(s):
    return [s[4 * ((c - r) % 4) + r] for c in range(4) for r in range(4)]


def _mix_columns(s):
    out = []
    for c in range(4):
        a0, a1, a2, a3 = s[4 * c:4 * c + 4]
        out += [
            _xtime(a0) ^ _xtime(a1) ^ a1 ^ a2 ^ a3,
            a0 ^ _xtime(a1) ^ _xtime(a2) ^ a2 ^ a3,
            a0 ^ a1 ^ _xtime(a2) ^ _xtime(a3) ^ a3,
            _xtime(a0) ^ a0 ^ a1 ^ a2 ^ _xtime(a3),
        ]
    return out


_INV_MIX = (0x0E, 0x0B, 0x0D, 0x09)


def _inv_mix_columns(s):
    out = []
    for c in range(4):
        col = s[4 * c:4 * c + 4]
        for r in range(4):
            coeffs = _INV_MIX[4 - r:] + _INV_MIX[:4 - r]
            out.append(_gmul(col[0], coeffs[0]) ^ _gmul(col[1], coeffs[1])
                       ^ _gmul(col[2], coeffs[2]) ^ _gmul(col[3], coeffs[3]))
    return out


def _xor(a, b):
    return [x ^ y for x, y in zip(a, b)]


class Encryption(NamedTuple):
    ciphertext: bytes
    round_taps: tuple   # round_taps[r-1] = state entering round r, r = 1..10


def aes128_encrypt_traced(key, plaintext, fault=None, last_round_key_mask=None):
    """AES-128 with per-round state taps.

    ``fault`` is ``(round_index, mask)``: the mask is XORed into the state
    entering that round.  ``last_round_key_mask`` is XORed into the round-10
    subkey.
    """
    rks = expand_key(key)
    if last_round_key_mask is not None:
        rks[10] = bytes(_xor(rks[10], _check16("mask", last_round_key_mask)))
    s = _xor(_check16("plaintext", plaintext), rks[0])
    taps = []
    for r in range(1, 11):
        if fault is not None and fault[0] == r:
            s = _xor(s, _check16("fault mask", fault[1]))
        taps.append(bytes(s))
        s = _shift_rows(_sub_bytes(s))
        if r < 10:
            s = _mix_columns(s)
        s = _xor(s, rks[r])
    return Encryption(bytes(s), tuple(taps))


def aes128_encrypt(key, plaintext):
    return aes128_encrypt_traced(key, plaintext).ciphertext


def aes128_decrypt(key, ciphertext):
    rks = expand_key(key)
    s = _xor(_check16("ciphertext", ciphertext), rks[10])
    for r in range(10, 0, -1):
        if r < 10:
            s = _inv_mix_columns(s)
        s = _inv_sub_bytes(_inv_shift_rows(s))
        s = _xor(s, rks[r - 1])
    return bytes(s)


class FaultPropagation(NamedTuple):
    correct_ct: bytes
    faulty_ct: bytes
    e2: bytes


def propagate_fault(key, plaintext, round_index, e1):
    """Inject ``e1`` entering ``round_index`` and report the ciphertext difference."""
    if not 1 <= round_index <= 10:
        raise ValueError("round_index must be in 1..10")
    e1 = _check16("e1", e1)
    if not any(e1):
        raise ValueError("e1 must be nonzero")
    good = aes128_encrypt(key, plaintext)
    bad = aes128_encrypt_traced(key, plaintext, fault=(round_index, e1)).ciphertext
    return FaultPropagation(good, bad, bytes(a ^ b for a, b in zip(good, bad)))


def sbox_layer(key, plaintext):
    """S-box-only load: SubBytes(plaintext XOR key)."""
    return bytes(SBOX[a ^ b] for a, b in zip(_check16("key", key), _check16("plaintext", plaintext)))


def to_hex(b):
    return bytes(b).hex()


def from_hex(s, n=16):
    b = bytes.fromhex(s)
    if len(b) != n:
        raise ValueError(f"expected {2 * n} hex characters, got {len(s)}")
    return b


# ---------------------------------------------------------------------------
# supply-driven fault model

EFFECTS = ("byte_xor_random", "bit_flip", "stuck_output")
MODES = ("aes", "sbox")


@dataclass(frozen=True)
class FaultModel:
    """Voltage window the load tolerates, and what happens when it is left.

    ``effect`` is ``byte_xor_random`` (one random byte XORed with a random
    nonzero value), ``bit_flip`` (``flip_bits`` distinct random bits) or
    ``stuck_output`` (the output reads all zeros).  ``mode="aes"`` runs the
    full cipher with the ten rounds spread evenly over the evaluation
    window; ``mode="sbox"`` treats the window as a single S-box layer.
    """
    v_fault_low: float = 0.81
    v_fault_high: float = 0.99
    evaluation_window: tuple = (0.0, 1.0)
    effect: str = "byte_xor_random"
    flip_bits: int = 1
    mode: str = "aes"

    def __post_init__(self):
        object.__setattr__(self, "evaluation_window", tuple(float(t) for t in self.evaluation_window))
        if not self.v_fault_low < self.v_fault_high:
            raise ValueError("need v_fault_low < v_fault_high")
        t0, t1 = self.evaluation_window
        if not 0 <= t0 < t1:
            raise ValueError("evaluation window must be non-empty and start at t >= 0")
        if self.effect not in EFFECTS:
            raise ValueError(f"effect must be one of {EFFECTS}")
        if self.effect == "bit_flip" and not 1 <= self.flip_bits <= 128:
            raise ValueError("flip_bits must be in 1..128")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


def window_indices(trace, window):
    """Inclusive sample index range of ``trace`` covering ``window``."""
    t0, t1 = window
    n = len(trace.v_out)
    end = trace.t0 + (n - 1) * trace.dt
    slack = 1e-9 * trace.dt
    if t0 < trace.t0 - slack or t1 > end + trace.dt * (1 + 1e-9) or t1 <= t0:
        raise WindowError(f"window [{t0:.4g}, {t1:.4g}] s not inside trace [{trace.t0:.4g}, {end:.4g}] s")
    i0 = max(0, math.ceil((t0 - trace.t0) / trace.dt - 1e-9))
    i1 = min(n - 1, math.floor((t1 - trace.t0) / trace.dt + 1e-9))
    if i1 < i0:
        raise WindowError("window contains no samples")
    return i0, i1


def fault_mask(effect, rng, flip_bits=1):
    if effect == "byte_xor_random":
        m = bytearray(16)
        m[int(rng.integers(16))] = int(rng.integers(1, 256))
        return bytes(m)
    if effect == "bit_flip":
        bits = rng.choice(128, size=flip_bits, replace=False)
        v = 0
        for b in bits:
            v |= 1 << int(b)
        return v.to_bytes(16, "big")
    raise ValueError(f"effect {effect!r} has no XOR mask")


class SupplyEvaluation(NamedTuple):
    ciphertext: bytes
    faulted: bool
    fault_sample_index: Optional[int]
    fault_round: Optional[int]


def round_at(fm, t):
    """Round (1..10) whose time slot contains ``t``; the S-box mode has a single slot."""
    if fm.mode == "sbox":
        return 1
    t0, t1 = fm.evaluation_window
    return min(10, 1 + int((t - t0) / (t1 - t0) * 10))


def evaluate_under_supply(trace, fm, key, plaintext, seed, last_round_mask=None):
    """Run the load against the rail in ``trace`` and apply the fault model.

    The load faults iff some v_out sample in the evaluation window lies
    strictly outside [v_fault_low, v_fault_high].  ``last_round_mask``
    infects the round-10 key (or the S-box output in S-box mode).
    """
    i0, i1 = window_indices(trace, fm.evaluation_window)
    seg = np.asarray(trace.v_out[i0:i1 + 1])
    bad = np.flatnonzero((seg < fm.v_fault_low) | (seg > fm.v_fault_high))
    idx = int(i0 + bad[0]) if len(bad) else None

    fault = None
    stuck = False
    rnd = None
    if idx is not None:
        rnd = round_at(fm, trace.t0 + idx * trace.dt)
        if fm.effect == "stuck_output":
            stuck = True
        else:
            fault = (rnd, fault_mask(fm.effect, np.random.default_rng(seed), fm.flip_bits))

    if fm.mode == "aes":
        ct = aes128_encrypt_traced(key, plaintext, fault=fault,
                                   last_round_key_mask=last_round_mask).ciphertext
    else:
        out = sbox_layer(key, plaintext)
        for m in (fault[1] if fault else None, last_round_mask):
            if m is not None:
                out = bytes(a ^ b for a, b in zip(out, m))
        ct = out
    if stuck:
        ct = bytes(16)
    return SupplyEvaluation(ct, idx is not None, idx, rnd)


def reference_output(fm, key, plaintext):
    """Fault-free output of the load in the fault model's mode."""
    return aes128_encrypt(key, plaintext) if fm.mode == "aes" else sbox_layer(key, plaintext)
