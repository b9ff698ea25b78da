"""Command line entry point: ``vrglitch <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical or
simulation error, 3 invariant violation found by ``check``.
"""

import argparse
from dataclasses import replace
import io
import json
import math
import os
import sys

import numpy as np

from . import attenuation, harness, regulator, target
from .config import load_settings
from .errors import ConfigurationError, SimulationError, VrGlitchError
from .waveforms import check_attacker_model

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_INVARIANT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(s):
    v = int(s)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=_u64, help="base seed (u64)")
    common.add_argument("--trials", type=_positive, help="trials per campaign")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = _Parser(prog="vrglitch", description="Voltage-glitch attacks on a multiphase SC regulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("simulate", parents=[common], help="simulate one trace")
    s.add_argument("--decimate", type=_positive, help="keep every k-th sample")
    a = sub.add_parser("analyze", parents=[common], help="LPF, FIR and energy tables")
    a.add_argument("--table", choices=("lpf", "fir", "energy", "all"), default="all")
    sub.add_parser("campaign", parents=[common], help="run a fault campaign")
    w = sub.add_parser("sweep", parents=[common], help="parameter sweep")
    w.add_argument("kind", choices=sorted(harness.SWEEPS))
    c = sub.add_parser("check", parents=[common], help="attacker-model and soundness checks")
    c.add_argument("--strict", action="store_true", help="attacker-model violations also fail")
    return p


def _settings(args):
    st = load_settings(args.config, args.set)
    spec = st.spec
    if args.seed is not None:
        spec = replace(spec, base_seed=args.seed)
        st = replace(st, sim_seed=args.seed)
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    return replace(st, spec=spec)


def _emit(args, files, stdout_text):
    """Write ``files`` ({name: text}) under --out, or print ``stdout_text``."""
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for name, text in files.items():
            with open(os.path.join(args.out, name), "w", newline="") as fh:
                fh.write(text)
    else:
        sys.stdout.write(stdout_text)


def _json(doc):
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def cmd_simulate(args, st):
    spec = st.spec
    duration = st.sim_duration or spec.sim_duration
    if spec.regulator is None:
        trace = regulator.direct_supply_trace(spec.load, spec.glitch, duration,
                                              st.sim_dt or spec.glitch.t_r / 8 or 1e-11)
    else:
        trace = regulator.simulate(spec.regulator, spec.load, spec.glitch, duration,
                                   dt=st.sim_dt, seed=st.sim_seed)
    buf = io.StringIO()
    regulator.write_trace_csv(trace, buf, args.decimate or st.decimate)
    summary = {
        "dt_s": trace.dt,
        "samples": len(trace.v_out),
        "steady_state_reached_at_s": trace.steady_state_reached_at,
        "peak_deviation_v": regulator.peak_glitch_at_load(trace, spec.load.v_nominal),
    }
    try:
        summary["ripple_v"] = regulator.output_ripple(trace)
    except VrGlitchError:
        summary["ripple_v"] = None
    text = buf.getvalue() if args.format == "csv" else _json(summary)
    _emit(args, {"trace.csv": buf.getvalue(), "summary.json": _json(summary)}, text)
    return EXIT_OK


def _csv(header, rows):
    return harness.SweepTable("", tuple(header), tuple(tuple(r) for r in rows)).to_csv()


def cmd_analyze(args, st):
    spec = st.spec
    cfg = spec.regulator or regulator.RegulatorConfig()
    load = spec.load
    freqs = np.geomspace(st.f_min, st.f_max, st.points)
    general = regulator.lpf_transfer_magnitude_general(cfg, load, freqs)
    optimal = (regulator.lpf_transfer_magnitude(cfg, load, freqs) if cfg.optimal_region
               else [math.nan] * len(freqs))
    tables = {
        "lpf": _csv(("f_hz", "gain_optimal_region", "gain_general"),
                    [(float(f), float(a), float(b)) for f, a, b in zip(freqs, optimal, general)]),
    }
    fir = attenuation.FirSpec.moving_average(cfg.n_phases, cfg.f_sw)
    ffir = np.linspace(0.0, fir.sample_rate, st.points)
    tables["fir"] = _csv(("f_hz", "magnitude"),
                         [(float(f), float(m)) for f, m in zip(ffir, np.atleast_1d(attenuation.fir_response(fir, ffir)))])
    rows = attenuation.energy_vs_phases(spec.glitch, cfg.c_tot, cfg.f_sw, harness.PHASE_LIST)
    tables["energy"] = _csv(("n_phases", "energy_joules", "nonzero_samples", "precondition_ok"),
                            [tuple(r) for r in rows])
    z = regulator.equivalent_impedance(cfg)
    info = {
        "r_fsl_ohm": z.r_fsl, "r_ssl_ohm": z.r_ssl, "r_eq_ohm": z.r_eq,
        "r_eq_over_r_l": z.r_eq / load.r_l,
        "f_3db_hz": regulator.cutoff_frequency(load, cfg.c_tot),
        "nyquist_max_protected_duration_s": attenuation.nyquist_margin(cfg.f_sw, spec.glitch).max_protected_duration,
        "glitch_protected": attenuation.nyquist_margin(cfg.f_sw, spec.glitch).protected,
    }
    names = ("lpf", "fir", "energy") if args.table == "all" else (args.table,)
    files = {f"{n}.csv": tables[n] for n in names}
    files["analysis.json"] = _json(info)
    if args.format == "csv":
        text = "\n".join(tables[n] for n in names)
    else:
        text = _json(dict(info, tables={n: tables[n] for n in names}))
    _emit(args, files, text)
    return EXIT_OK


def cmd_campaign(args, st):
    res = harness.run_campaign(st.spec)
    text = res.trials_csv() if args.format == "csv" else res.to_json()
    _emit(args, {"campaign.json": res.to_json(), "trials.csv": res.trials_csv()}, text)
    return EXIT_OK


def cmd_sweep(args, st):
    spec = st.spec
    if args.kind == "phases":
        n_list = tuple(n for n in st.n_list if n is not None)
        tab = harness.sweep_phases(spec, n_list, include_unprotected=None in st.n_list,
                                   hold=st.hold)
    elif args.kind == "capacitor":
        tab = harness.sweep_capacitor(spec, st.c_list)
    elif args.kind == "frequency":
        tab = harness.sweep_frequency(spec, st.f_list)
    else:
        tab = harness.sweep_duration(spec, st.durations)
    text = tab.to_csv() if args.format == "csv" else tab.to_json()
    _emit(args, {f"sweep_{args.kind}.csv": tab.to_csv(), f"sweep_{args.kind}.json": tab.to_json()},
          text)
    return EXIT_OK


def self_check():
    """Cheap identities that must hold in any build; returns failing check names."""
    failed = []
    cfg = regulator.RegulatorConfig()
    load = regulator.LoadModel()
    z = regulator.equivalent_impedance(cfg)
    if not math.isclose(z.r_eq ** 2, z.r_fsl ** 2 + z.r_ssl ** 2, rel_tol=1e-12):
        failed.append("impedance-quadrature")
    fc = regulator.cutoff_frequency(load, cfg.c_tot)
    if not math.isclose(regulator.lpf_transfer_magnitude(cfg, load, fc), 2 ** -0.5, rel_tol=1e-9):
        failed.append("lpf-half-power")
    for n in (1, 4, 32):
        if not math.isclose(attenuation.fir_response(attenuation.FirSpec.moving_average(n, 1.0), 0.0), 1.0):
            failed.append(f"fir-dc-n{n}")
    if regulator.overhead_estimate(16) != (4.9, 85.56):
        failed.append("overhead-table")
    if target.aes128_encrypt(harness.FIPS_KEY, harness.FIPS_PLAINTEXT).hex() != "69c4e0d86a7b0430d8cdb78070b4c55a":
        failed.append("aes-vector")
    return failed


def cmd_check(args, st):
    spec = st.spec
    viol = check_attacker_model(spec.glitch, spec.load.clock_hz, spec.load.v_nominal)
    det = spec.detector
    report = {
        "attacker_model_violations": [{"code": v.code, "detail": v.detail} for v in viol],
        "detector_enabled": det is not None,
        "detector_within_fault_window": None if det is None else det.within(spec.fault_model),
        "self_check_failures": self_check(),
    }
    bad = bool(report["self_check_failures"]) or report["detector_within_fault_window"] is False
    if args.strict and viol:
        bad = True
    report["ok"] = not bad
    if args.format == "csv":
        rows = [("attacker_model", v.code, v.detail) for v in viol]
        rows.append(("detector_within_fault_window", str(report["detector_within_fault_window"]).lower(), ""))
        rows += [("self_check", f, "failed") for f in report["self_check_failures"]]
        text = _csv(("check", "result", "detail"), rows)
    else:
        text = _json(report)
    _emit(args, {"check.json": _json(report)}, text)
    return EXIT_INVARIANT if bad else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "campaign": cmd_campaign,
    "sweep": cmd_sweep,
    "check": cmd_check,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        st = _settings(args)
        return COMMANDS[args.command](args, st)
    except ConfigurationError as e:
        print(f"vrglitch: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, VrGlitchError, ArithmeticError) as e:
        print(f"vrglitch: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"vrglitch: invalid input: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"vrglitch: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
