"""Acceptance suite: one class per criterion, tagged with ``criterion(n)``.

The terminal summary prints PASS/FAIL per criterion (see conftest.py).
"""

import cmath
import math
import subprocess
import sys

import numpy as np
import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from vrglitch import attenuation, harness, regulator, target
from vrglitch.cli import main
from vrglitch.harness import FaultCampaignResult, TrialRecord, default_scenario, run_campaign
from vrglitch.regulator import LoadModel, RegulatorConfig
from vrglitch.waveforms import GlitchWaveform

pytestmark = pytest.mark.acceptance

REL = 1e-12
FLAT = GlitchWaveform(1.8)


def close(a, b):
    return abs(a - b) <= REL * abs(b)


def reference_aes(key, pt):
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(pt) + enc.finalize()


@pytest.mark.criterion(1)
class TestFormulaExactness:
    def test_impedance(self):
        z = regulator.equivalent_impedance(RegulatorConfig(r_on=1.0, c_fly_per_phase=1e-9, f_sw=50e6))
        assert close(z.r_fsl, 2.0) and close(z.r_ssl, 5.0)
        assert close(z.r_eq, math.sqrt(29.0))
        zero = regulator.equivalent_impedance(RegulatorConfig(r_on=1.0, beta_top=0.0, f_sw=50e6))
        assert close(zero.r_eq, 5.0)

    def test_lpf_optimal_region(self):
        cfg = RegulatorConfig(c_fly_per_phase=0.5e-9)
        load = LoadModel(r_l=3164.0, c_l=0.1e-9, c_out=0.4e-9)
        f3 = 1 / (2 * math.pi * 3164.0 * 1e-9)
        assert regulator.lpf_transfer_magnitude(cfg, load, 0.0) == 1.0
        assert close(regulator.cutoff_frequency(load, cfg.c_tot), f3)
        assert close(regulator.lpf_transfer_magnitude(cfg, load, f3), 1 / math.sqrt(2))
        assert f3 == pytest.approx(50.3e3, rel=1e-3)
        for f in (1e3, 1e5, 1e7):
            assert close(regulator.lpf_transfer_magnitude(cfg, load, f),
                         1 / abs(1 + 2j * math.pi * f * 3164.0 * 1e-9))

    def test_lpf_general(self):
        cfg = RegulatorConfig(r_on=1.0, c_fly_per_phase=1e-9, f_sw=50e6, optimal_region=False)
        load = LoadModel(r_l=10.0, c_l=0.0, c_out=1e-9)
        r_eq = math.sqrt(29.0)
        for f in (0.0, 1e6, 3e7):
            want = 1 / abs(r_eq / 10.0 + 2j * math.pi * f * 10.0 * 2e-9)
            assert close(regulator.lpf_transfer_magnitude_general(cfg, load, f), want)

    def test_cutoff_endpoints(self):
        load = LoadModel(r_l=3164.0, c_l=0.0, c_out=0.0)
        for c, approx in ((0.5e-12, 100.6e6), (3e-9, 16.8e3)):
            want = 1 / (2 * math.pi * 3164.0 * c)
            assert close(regulator.cutoff_frequency(load, c), want)
            assert want == pytest.approx(approx, rel=5e-3)   # stated to three digits

    def test_glitch_energy(self):
        e = attenuation.transmitted_glitch_energy
        assert close(e(attenuation.PhaseSampledGlitch((1.0, 0.0), 2, 1e-9)), 0.25e-9)
        assert close(e(attenuation.PhaseSampledGlitch((2.0, 1.0, 0.0, 0.0), 4, 2e-9)), 1.25e-9)
        assert e(attenuation.PhaseSampledGlitch((0.0,) * 8, 8, 1e-9)) == 0.0

    def test_success_metric(self):
        rec = TrialRecord(0, False, False, 0.0, False, 0.0)
        for trials, faults, pct in ((1000, 55, 5.5), (100, 0, 0.0), (2000, 1027, 51.35)):
            r = FaultCampaignResult(trials, faults, 0, 0, 0, (rec,) * trials)
            assert r.faults == faults and isinstance(r.faults, int)
            assert r.success_rate.numerator * trials == faults * r.success_rate.denominator
            assert r.success_rate_pct == pct and r.fault_coverage_pct == 100 - pct


@pytest.mark.criterion(2)
class TestAesCorrectness:
    def test_standard_vector(self):
        assert target.aes128_encrypt(harness.FIPS_KEY, harness.FIPS_PLAINTEXT).hex() == \
            "69c4e0d86a7b0430d8cdb78070b4c55a"

    def test_random_vectors(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            key, pt = rng.bytes(16), rng.bytes(16)
            ct = target.aes128_encrypt(key, pt)
            assert ct == reference_aes(key, pt)
            assert target.aes128_decrypt(key, ct) == pt


@pytest.mark.criterion(3)
class TestOverheadTable:
    ROWS = {1: (0.0, 84.4), 2: (2.62, 84.54), 4: (3.93, 84.68), 8: (4.58, 84.9),
            16: (4.9, 85.56), 32: (5.07, 85.41)}

    def test_rows(self):
        for n, row in self.ROWS.items():
            assert tuple(regulator.overhead_estimate(n)) == row
        assert len(regulator.OVERHEAD_TABLE) == 7
        for n, row in regulator.OVERHEAD_TABLE.items():
            assert tuple(regulator.overhead_estimate(n)) == tuple(row)


def equal_taps(n, fs):
    return attenuation.FirSpec(n, (1.0 / n,) * n, fs)


@pytest.mark.criterion(4)
class TestFirProperties:
    def test_dc_and_nulls(self):
        for n in (1, 2, 4, 8, 16, 32):
            spec = equal_taps(n, 60e6)
            assert attenuation.fir_response(spec, 0.0) == pytest.approx(1.0, abs=1e-15)
            for k in range(1, n):
                assert attenuation.fir_response(spec, k * 60e6 / n) < 1e-9

    def test_regulator_taps(self):
        spec = attenuation.FirSpec.moving_average(8, 30e6)
        assert spec.sample_rate == 240e6 and spec.coefficients == (0.125,) * 8

    def test_reference_point(self):
        spec = equal_taps(4, 1.0)
        want = abs(math.sin(math.pi / 2) / (4 * math.sin(math.pi / 8)))
        assert attenuation.fir_response(spec, 1 / 8) == pytest.approx(want, rel=1e-12)
        direct = abs(sum(cmath.exp(-2j * math.pi * i / 8) for i in range(4)) / 4)
        assert want == pytest.approx(direct, rel=1e-12)

    def test_closed_form_agreement(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(1, 65))
            fs = float(rng.uniform(1e6, 1e9))
            f = float(rng.uniform(0, 2 * fs))
            spec = equal_taps(n, fs)
            a = attenuation.fir_response(spec, f)
            b = attenuation.fir_response_closed_form(n, fs, f)
            assert abs(a - b) < 1e-12


@pytest.mark.criterion(5)
class TestSimulatorPhysics:
    def test_unloaded(self):
        cfg = RegulatorConfig()
        tr = regulator.simulate(cfg, LoadModel().constant(0.0), FLAT, 20 * cfg.period)
        p = int(round(cfg.period / tr.dt))
        assert abs(tr.v_out[-p:].mean() - 0.9) < 1e-3

    @pytest.mark.parametrize("c_tot", [0.5e-9, 1e-9, 2e-9])
    @pytest.mark.parametrize("f_sw", [30e6, 45e6, 60e6])
    def test_loaded_grid(self, c_tot, f_sw):
        cfg = RegulatorConfig.from_total(c_tot, 1, f_sw=f_sw)
        tr = regulator.simulate(cfg, LoadModel().constant(9e-3), FLAT, 40 * cfg.period)
        p = int(round(cfg.period / tr.dt))
        i = tr.i_load[-p:].mean()
        predicted = 0.9 - i * regulator.equivalent_impedance(cfg).r_eq
        assert tr.v_out[-p:].mean() == pytest.approx(predicted, rel=0.05)

    @pytest.mark.parametrize("n", [1, 8])
    def test_charge_conservation(self, n):
        cfg = RegulatorConfig.from_total(1e-9, n)
        g = GlitchWaveform(1.8, 2.0, 5.3 * cfg.period, 0.5e-9, 1e-9, 0.5e-9)
        tr = regulator.simulate(cfg, LoadModel(), g, 10 * cfg.period, record_states=True)
        audit = regulator.charge_audit(tr, cfg, LoadModel())
        assert audit.max_node_error < 1e-3 and audit.max_cap_error < 1e-3


@pytest.fixture(scope="module")
def phase_table():
    return harness.sweep_phases(default_scenario(trials=2000))


@pytest.mark.criterion(6)
class TestMonotoneProtection:
    def test_success_rate_non_increasing(self, phase_table):
        rates = [r[1] for r in phase_table.rows[1:]]
        assert harness.non_increasing(rates), rates

    def test_peak_non_increasing(self, phase_table):
        peaks = phase_table.column("peak_deviation_v")[1:]
        assert harness.non_increasing(peaks), peaks

    def test_unprotected_anchor(self, phase_table):
        assert phase_table.where(n_phases="none")[0][2] == 0.0

    def test_coverage_span(self, phase_table):
        cov = dict(zip(phase_table.column("n_phases"), phase_table.column("fault_coverage_pct")))
        assert cov[1] > 0
        assert cov[32] >= cov[16] >= cov[1]
        assert cov[32] - cov[1] >= 40


@pytest.mark.criterion(7)
class TestCapacitorSaturation:
    def test_shape(self):
        tab = harness.sweep_capacitor(default_scenario(trials=500))
        c = tab.column("c_tot_f")
        peaks = tab.column("peak_deviation_v")
        assert c[0] == 0.5e-9 and c[-1] == 3e-9
        assert peaks[-1] > peaks[0]
        first = harness.octave_slope(c, peaks, 0.5e-9)
        last = harness.octave_slope(c, peaks, 1.5e-9)
        assert first > 0 and last < 0.25 * first


@pytest.mark.criterion(8)
class TestNyquistGuard:
    def test_guard_at_30mhz(self):
        m = attenuation.nyquist_margin(30e6, GlitchWaveform(1.8, 2.0, 0.0, 0.5e-9, 0.0, 0.5e-9))
        assert m.max_protected_duration == pytest.approx(16.67e-9, rel=0.01)
        assert m.protected

    def test_durations_flagged(self):
        base = GlitchWaveform(1.8, 2.0, 0.0, 0.5e-9, 1e-9, 0.5e-9)
        for d in harness.DURATION_LIST:
            m = attenuation.nyquist_margin(30e6, base.with_total_duration(d))
            assert m.protected == (d < 1 / 60e6)
        assert not attenuation.nyquist_margin(30e6, base.with_total_duration(31e-9)).protected


@pytest.fixture(scope="module")
def campaign():
    spec = default_scenario(trials=10_000, detector=True)
    assert spec.detector.within(spec.fault_model)
    return run_campaign(spec)


@pytest.mark.criterion(9)
class TestInfectiveSoundness:
    def test_no_exploitable_faults(self, campaign):
        assert campaign.errors == 0
        assert campaign.faults > 0
        assert not [r for r in campaign.per_trial if r.rail_fault and not r.contaminated]
        assert campaign.exploitable_count == 0

    def test_untriggered_match_aes(self, campaign):
        correct = reference_aes(harness.FIPS_KEY, harness.FIPS_PLAINTEXT).hex()
        quiet = [r for r in campaign.per_trial if not r.triggered]
        assert quiet and all(r.ciphertext == correct for r in quiet)

    def test_contaminated_never_correct(self, campaign):
        bad = [r for r in campaign.per_trial if r.contaminated]
        assert bad and all(r.ciphertext != r.correct for r in bad)


@pytest.mark.criterion(10)
class TestDeterminism:
    ARGS = ["sweep", "phases", "--trials", "100", "--seed", "11"]

    def run(self, out):
        assert main(self.ARGS + ["--out", str(out)]) == 0
        return {p.name: p.read_bytes() for p in out.iterdir()}

    def test_repeated_sweeps(self, tmp_path):
        a = self.run(tmp_path / "a")
        b = self.run(tmp_path / "b")
        assert set(a) == {"sweep_phases.csv", "sweep_phases.json"}
        assert a == b

    def test_separate_process(self, tmp_path):
        a = self.run(tmp_path / "a")
        out = tmp_path / "p"
        subprocess.run([sys.executable, "-m", "vrglitch"] + self.ARGS + ["--out", str(out)], check=True)
        assert {p.name: p.read_bytes() for p in out.iterdir()} == a
