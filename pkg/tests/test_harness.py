from dataclasses import replace
from fractions import Fraction
import math

import pytest

from vrglitch.harness import (FaultCampaignResult, TrialRecord, capacitor_spec, default_scenario,
                              duration_spec, frequency_spec, parse_csv, phase_spec, run_campaign,
                              sweep_capacitor, sweep_duration, sweep_frequency, sweep_phases)
from vrglitch.target import aes128_encrypt


def result(trials, faults, errors=0):
    rec = TrialRecord(0, False, False, 0.1, False, 0.0)
    return FaultCampaignResult(trials, faults, 0, faults, errors, (rec,) * trials)


class TestRates:
    def test_zero_faults(self):
        r = result(100, 0)
        assert r.success_rate_pct == 0.0 and r.fault_coverage_pct == 100.0

    def test_exact_arithmetic(self):
        r = result(1000, 55)
        assert r.success_rate == Fraction(11, 200)
        assert r.success_rate_pct == 5.5 and r.fault_coverage_pct == 94.5

    def test_errors_excluded_from_denominator(self):
        r = result(10, 3, errors=4)
        assert r.completed == 6 and r.success_rate_pct == 50.0

    def test_summary_json_has_no_nan(self):
        rec = TrialRecord(0, False, False, math.nan, False, 0.0, error="boom")
        r = FaultCampaignResult(1, 0, 0, 0, 1, (rec,))
        assert "NaN" not in r.to_json() and r.summary()["success_rate_pct"] is None


class TestCampaign:
    def test_unprotected_always_faults(self):
        res = run_campaign(default_scenario(trials=40, protected=False))
        assert res.faults == 40 and res.success_rate_pct == 100.0 and res.fault_coverage_pct == 0.0
        assert all(r.rail_fault for r in res.per_trial)

    def test_seeds_and_records(self):
        res = run_campaign(default_scenario(trials=5, base_seed=1000))
        assert [r.seed for r in res.per_trial] == list(range(1000, 1005))
        correct = aes128_encrypt(res_key(), res_pt()).hex()
        assert all(r.correct == correct for r in res.per_trial)
        assert all(0 <= r.t_start - 5 / 60e6 < 1 / 60e6 for r in res.per_trial)

    def test_deterministic(self):
        spec = default_scenario(trials=20, detector=True)
        a, b = run_campaign(spec), run_campaign(spec)
        assert a == b and a.trials_csv() == b.trials_csv() and a.to_json() == b.to_json()

    def test_seed_changes_outcome(self):
        a = run_campaign(default_scenario(trials=20, base_seed=0))
        b = run_campaign(default_scenario(trials=20, base_seed=99))
        assert [r.t_start for r in a.per_trial] != [r.t_start for r in b.per_trial]

    def test_random_keys(self):
        spec = replace(default_scenario(trials=4), key_policy="random")
        res = run_campaign(spec)
        assert len({r.correct for r in res.per_trial}) == 4

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            default_scenario(trials=0)
        with pytest.raises(ValueError):
            replace(default_scenario(trials=1), key_policy="sometimes")

    def test_errors_are_counted(self):
        # an evaluation window past the end of the run breaks every trial
        spec = default_scenario(trials=3)
        spec = replace(spec, duration=10 / 60e6,
                       fault_model=replace(spec.fault_model, evaluation_window=(5 / 60e6, 12 / 60e6)))
        res = run_campaign(spec)
        assert res.errors == 3 and all(r.error.startswith("WindowError") for r in res.per_trial)
        assert math.isnan(res.success_rate_pct)


def res_key():
    return default_scenario(trials=1).key


def res_pt():
    return default_scenario(trials=1).plaintext


class TestSweeps:
    def test_phase_rows_reproducible(self):
        spec = default_scenario(trials=30)
        tab = sweep_phases(spec, (1, 4, 32))
        assert tab.column("n_phases") == ["none", 1, 4, 32]
        assert tab.verdicts["unprotected_coverage_zero"]
        for n in (None, 4):
            row = tab.where(n_phases="none" if n is None else n)[0]
            res = run_campaign(phase_spec(spec, n))
            assert row[1] == res.success_rate_pct and row[4] == res.peak_deviation

    def test_csv_round_trip(self):
        tab = sweep_phases(default_scenario(trials=10), (1, 2))
        cols, rows = parse_csv(tab.to_csv())
        assert cols == tab.columns
        for got, want in zip(rows, tab.rows):
            for g, w in zip(got, want):
                assert g == w if not isinstance(w, float) else g == float(format(w, ".12g"))

    def test_capacitor_endpoint(self):
        spec = default_scenario(trials=20)
        tab = sweep_capacitor(spec, (0.5e-9, 1e-9, 2e-9))
        direct = run_campaign(capacitor_spec(spec, 0.5e-9))
        assert tab.rows[0][1] == direct.peak_deviation
        assert tab.verdicts["increases_overall"]
        assert tab.rows[0][3] < tab.rows[-1][3]

    def test_frequency_dominance(self):
        tab = sweep_frequency(default_scenario(trials=40))
        assert tab.verdicts["largest_n_dominates"]
        row = tab.where(f_sw_hz=30e6, n_phases=1)[0]
        assert row[2] == run_campaign(frequency_spec(default_scenario(trials=40), 30e6, 1)).peak_deviation

    @pytest.mark.xfail(strict=True, reason="the simulated peak grows with f_sw at fixed C_tot "
                       "because the per-phase charging path conducts more often")
    def test_frequency_non_increasing(self):
        tab = sweep_frequency(default_scenario(trials=40))
        assert tab.verdicts["non_increasing_in_f_n1"] and tab.verdicts["non_increasing_in_f_n32"]

    def test_duration_ordering(self):
        tab = sweep_duration(default_scenario(trials=20), (1e-9, 9e-9))
        assert tab.verdicts["ordered_at_every_duration"]
        assert tab.annotations["max_protected_duration_s"] == pytest.approx(1 / 120e6)

    @pytest.mark.xfail(strict=True, reason="at 10 ns the N=32/N=1 peak ratio is about 0.7, "
                       "just above the 0.65 trend bound")
    def test_duration_halved_at_10ns(self):
        spec = default_scenario(trials=100)
        a = run_campaign(duration_spec(spec, 10e-9, 1)).peak_deviation
        b = run_campaign(duration_spec(spec, 10e-9, 32)).peak_deviation
        assert b <= 0.65 * a

    def test_nyquist_flags_at_30mhz(self):
        spec = default_scenario(trials=3, f_sw=30e6)
        tab = sweep_duration(spec, (15e-9, 19e-9), n_list=(None, 1), reference=15e-9)
        flags = {r[0]: r[5] for r in tab.rows}
        assert flags == {15e-9: True, 19e-9: False}
        assert tab.annotations["max_protected_duration_s"] == pytest.approx(16.6667e-9, rel=1e-4)
