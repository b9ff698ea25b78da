"""INI configuration for the command line.

Sections mirror the library types.  Every key is optional; unknown sections
or keys are rejected.  Times are in seconds, capacitances in farads.  Keys
left unset that depend on the switching period (glitch start, evaluation
window, run length) follow it: glitch at 5 T_s, window [5 T_s, 10 T_s].

Example::

    [regulator]
    n_phases = 32
    c_tot = 1e-9

    [glitch]
    amplitude = -2.0

    [campaign]
    trials = 500
"""

import configparser
from dataclasses import dataclass
import math
from typing import Optional

from .errors import ConfigurationError
from .harness import CampaignSpec, DURATION_LIST, CAP_LIST, FREQ_LIST, PHASE_LIST
from .infective import DetectorConfig
from .regulator import LoadModel, RegulatorConfig
from .target import FaultModel, from_hex
from .waveforms import GlitchWaveform


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _phases(s):
    return tuple(None if x.lower() == "none" else int(x) for x in s.replace(",", " ").split())


SCHEMA = {
    "regulator": {
        "enabled": _bool, "n_phases": int, "c_tot": float, "c_fly_per_phase": float,
        "r_on": float, "f_sw": float, "beta_top": float, "gamma_top": float,
        "epsilon_nonoverlap": float, "optimal_region": _bool,
    },
    "load": {
        "r_l": float, "c_l": float, "c_out": float, "p_avg": float, "p_min": float,
        "p_max": float, "v_nominal": float, "v_tol_low": float, "v_tol_high": float,
        "clock_hz": float,
    },
    "glitch": {
        "nominal_v": float, "amplitude": float, "t_start": float, "t_r": float,
        "t_g": float, "t_f": float,
    },
    "fault": {
        "v_fault_low": float, "v_fault_high": float, "window_start": float,
        "window_end": float, "effect": str, "flip_bits": int, "mode": str,
    },
    "detector": {
        "enabled": _bool, "v_ref_low": float, "v_ref_high": float, "latch": _bool,
        "margin": float,
    },
    "campaign": {
        "trials": int, "seed": int, "randomize_start": _bool, "key_policy": str,
        "key": str, "plaintext": str, "duration": float,
    },
    "sweep": {
        "n_list": _phases, "c_list": _floats, "f_list": _floats, "durations": _floats,
        "hold": str,
    },
    "simulate": {"duration": float, "dt": float, "decimate": int, "seed": int},
    "analyze": {"f_min": float, "f_max": float, "points": int},
}


@dataclass(frozen=True)
class Settings:
    spec: CampaignSpec
    n_list: tuple
    c_list: tuple
    f_list: tuple
    durations: tuple
    hold: str
    sim_duration: Optional[float]
    sim_dt: Optional[float]
    decimate: int
    sim_seed: int
    f_min: float
    f_max: float
    points: int


def read_values(path=None, text=None, overrides=()):
    """Typed {section: {key: value}} from an INI file/text plus ``section.key=value`` overrides."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        if path is not None:
            with open(path) as fh:
                cp.read_file(fh)
        if text is not None:
            cp.read_string(text)
    except (OSError, configparser.Error) as e:
        raise ConfigurationError(f"cannot read config: {e}") from e
    raw = {s: dict(cp[s]) for s in cp.sections()}
    for item in overrides:
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigurationError(f"override must look like section.key=value, got {item!r}")
        raw.setdefault(section, {})[key] = value.strip()

    out = {}
    for section, items in raw.items():
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, value in items.items():
            if key not in SCHEMA[section]:
                raise ConfigurationError(f"unknown key {section}.{key}")
            try:
                out.setdefault(section, {})[key] = SCHEMA[section][key](value)
            except ValueError as e:
                raise ConfigurationError(f"bad value for {section}.{key}: {e}") from e
    return out


def build(values):
    """Turn typed config values into a campaign spec and command parameters."""
    v = {s: dict(values.get(s, {})) for s in SCHEMA}
    try:
        reg = v["regulator"]
        enabled = reg.pop("enabled", True)
        if "c_tot" in reg and "c_fly_per_phase" in reg:
            raise ConfigurationError("give either regulator.c_tot or regulator.c_fly_per_phase")
        n = reg.get("n_phases", 1)
        c_tot = reg.pop("c_tot", 1e-9)
        reg.setdefault("c_fly_per_phase", c_tot / n)
        cfg = RegulatorConfig(**reg)
        period = cfg.period

        load = LoadModel(**v["load"])

        g = v["glitch"]
        glitch = GlitchWaveform(
            nominal_v=g.get("nominal_v", 1.8), amplitude=g.get("amplitude", 2.0),
            t_start=g.get("t_start", 5 * period), t_r=g.get("t_r", 0.5e-9),
            t_g=g.get("t_g", 1e-9), t_f=g.get("t_f", 0.5e-9))

        f = v["fault"]
        fm = FaultModel(
            v_fault_low=f.get("v_fault_low", load.v_tol_low),
            v_fault_high=f.get("v_fault_high", load.v_tol_high),
            evaluation_window=(f.get("window_start", 5 * period), f.get("window_end", 10 * period)),
            effect=f.get("effect", "byte_xor_random"), flip_bits=f.get("flip_bits", 1),
            mode=f.get("mode", "aes"))

        d = v["detector"]
        det = None
        if d.get("enabled", False):
            base = DetectorConfig.from_fault_model(fm, d.get("margin", 0.02), d.get("latch", True))
            det = DetectorConfig(d.get("v_ref_low", base.v_ref_low),
                                 d.get("v_ref_high", base.v_ref_high), base.latch)

        c = v["campaign"]
        kw = {}
        if "key" in c:
            kw["key"] = from_hex(c["key"])
        if "plaintext" in c:
            kw["plaintext"] = from_hex(c["plaintext"])
        seed = c.get("seed", 0)
        if not 0 <= seed < 2 ** 64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        spec = CampaignSpec(
            glitch=glitch, fault_model=fm, trials=c.get("trials", 1000), base_seed=seed,
            regulator=cfg if enabled else None, detector=det, load=load,
            randomize_start=c.get("randomize_start", True), alignment_period=period,
            key_policy=c.get("key_policy", "fixed"), duration=c.get("duration"), **kw)

        s = v["sweep"]
        sim = v["simulate"]
        an = v["analyze"]
        settings = Settings(
            spec=spec,
            n_list=s.get("n_list", (None,) + PHASE_LIST),
            c_list=s.get("c_list", CAP_LIST),
            f_list=s.get("f_list", FREQ_LIST),
            durations=s.get("durations", DURATION_LIST),
            hold=s.get("hold", "c_tot"),
            sim_duration=sim.get("duration"),
            sim_dt=sim.get("dt"),
            decimate=sim.get("decimate", 1),
            sim_seed=sim.get("seed", seed),
            f_min=an.get("f_min", 1e3),
            f_max=an.get("f_max", 1e9),
            points=an.get("points", 61),
        )
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigurationError(str(e)) from e
    if settings.hold not in ("c_tot", "per_phase"):
        raise ConfigurationError("sweep.hold must be c_tot or per_phase")
    if settings.decimate < 1 or settings.points < 2 or not 0 < settings.f_min < settings.f_max:
        raise ConfigurationError("bad simulate/analyze parameters")
    if any(x is not None and x < 1 for x in settings.n_list):
        raise ConfigurationError("sweep.n_list entries must be >= 1 or none")
    if not all(math.isfinite(x) and x > 0 for x in settings.c_list + settings.f_list + settings.durations):
        raise ConfigurationError("sweep lists must be positive")
    return settings


def load_settings(path=None, overrides=(), text=None):
    return build(read_values(path, text, overrides))
