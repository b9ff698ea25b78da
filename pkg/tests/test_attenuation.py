import cmath
import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vrglitch.attenuation import (FirSpec, PhaseSampledGlitch, energy_vs_phases, fir_response,
                                  fir_response_closed_form, nyquist_margin, phase_samples,
                                  transmitted_glitch_energy, write_energy_csv)
from vrglitch.waveforms import GlitchWaveform

F_SW = 60e6
TRIANGLE = GlitchWaveform(1.8, 2.0, 0.0, 0.5e-9, 0.0, 0.5e-9)


class TestEnergy:
    def test_two_phase(self):
        e = transmitted_glitch_energy(PhaseSampledGlitch([1, 0], 2, 1e-9))
        assert e == pytest.approx(0.25e-9, rel=1e-12)

    def test_zero(self):
        assert transmitted_glitch_energy(PhaseSampledGlitch([0] * 8, 8, 1e-9)) == 0.0

    def test_four_phase(self):
        e = transmitted_glitch_energy(PhaseSampledGlitch([2, 1, 0, 0], 4, 2e-9))
        assert e == pytest.approx(1.25e-9, rel=1e-12)

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=16), st.floats(-4, 4))
    def test_quadratic_scaling(self, v, alpha):
        g = PhaseSampledGlitch(v, len(v), 1e-9)
        s = PhaseSampledGlitch([alpha * x for x in v], len(v), 1e-9)
        e = transmitted_glitch_energy(g)
        assert e >= 0
        assert transmitted_glitch_energy(s) == pytest.approx(alpha ** 2 * e, rel=1e-12, abs=1e-30)

    def test_length_checked(self):
        with pytest.raises(ValueError):
            PhaseSampledGlitch([1, 2], 3, 1e-9)


class TestEnergyVsPhases:
    def test_single_phase_full_amplitude(self):
        (row,) = energy_vs_phases(TRIANGLE, 1e-9, F_SW, [1])
        assert row.energy_j == pytest.approx(0.5e-9 * 2.0 ** 2, rel=1e-12)

    def test_monotone_and_matches_brute_force(self):
        rows = energy_vs_phases(TRIANGLE, 1e-9, F_SW, range(1, 33))
        energies = [r.energy_j for r in rows]
        assert all(b <= a for a, b in zip(energies, energies[1:]))
        for n in (3, 7, 17, 24, 32):
            grid = np.linspace(0, 1 / (F_SW * n), 4001)
            brute = max(float(np.dot(v, v)) for v in (phase_samples(TRIANGLE, F_SW, n, p) for p in grid))
            assert rows[n - 1].energy_j == pytest.approx(1e-9 / (2 * n) * brute, rel=1e-6)

    def test_vanishes_for_short_glitch(self):
        short = GlitchWaveform(1.8, 2.0, 0.0, 0.1e-9, 0.0, 0.1e-9)
        rows = energy_vs_phases(short, 1e-9, F_SW, [1, 8, 64, 512])
        assert rows[-1].energy_j < rows[0].energy_j / 100
        assert all(r.precondition_ok for r in rows[2:])

    def test_precondition_flagged_per_row(self):
        long = GlitchWaveform(1.8, 2.0, 0.0, 0.5e-9, 12e-9, 0.5e-9)
        rows = energy_vs_phases(long, 1e-9, F_SW, [1, 4, 32])
        assert not any(r.precondition_ok for r in rows)
        assert len(rows) == 3

    def test_random_alignment_below_worst(self):
        worst = energy_vs_phases(TRIANGLE, 1e-9, F_SW, [4, 16])
        rand = energy_vs_phases(TRIANGLE, 1e-9, F_SW, [4, 16], alignment="random", trials=200)
        for w, r in zip(worst, rand):
            assert 0 < r.energy_j <= w.energy_j

    def test_csv(self):
        buf = io.StringIO()
        write_energy_csv(energy_vs_phases(TRIANGLE, 1e-9, F_SW, [1, 2]), buf)
        assert buf.getvalue().splitlines() == ["n_phases,energy_joules", "1,2e-09", "2,1e-09"]


def direct_sum(n, fs, f):
    return abs(sum(cmath.exp(-2j * math.pi * f * i / fs) for i in range(n)) / n)


class TestFir:
    def test_single_tap_is_identity(self):
        spec = FirSpec.moving_average(1, F_SW)
        np.testing.assert_allclose(fir_response(spec, np.linspace(0, 1e9, 50)), 1.0, rtol=1e-15)

    @pytest.mark.parametrize("n", [2, 4, 7, 32])
    def test_nulls(self, n):
        spec = FirSpec.moving_average(n, F_SW)
        for k in range(1, n):
            assert fir_response(spec, k * spec.sample_rate / n) < 1e-9

    def test_known_value(self):
        spec = FirSpec.moving_average(4, F_SW)
        assert fir_response(spec, spec.sample_rate / 8) == pytest.approx(0.6533, abs=1e-4)
        assert fir_response(spec, spec.sample_rate / 8) == pytest.approx(direct_sum(4, spec.sample_rate, spec.sample_rate / 8), abs=1e-14)

    @pytest.mark.parametrize("n", [1, 3, 16, 32])
    def test_dc(self, n):
        assert fir_response(FirSpec.moving_average(n, F_SW), 0.0) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("n", [2, 5, 32])
    def test_main_lobe_decreasing(self, n):
        spec = FirSpec.moving_average(n, F_SW)
        h = fir_response(spec, np.linspace(0, spec.sample_rate / n, 1000))
        assert np.all(np.diff(h) < 0)

    def test_equal_coefficients(self):
        spec = FirSpec.moving_average(8, F_SW)
        assert len(set(spec.coefficients)) == 1 and math.fsum(spec.coefficients) == pytest.approx(1.0)
        assert spec.sample_rate == 8 * F_SW


class TestNyquist:
    def test_thirty_megahertz(self):
        m = nyquist_margin(30e6, TRIANGLE)
        assert m.max_protected_duration == pytest.approx(16.67e-9, rel=1e-3)
        assert m.protected

    def test_long_glitch_unprotected(self):
        g = GlitchWaveform(1.8, 2.0, 0.0, 0.5e-9, 30e-9, 0.5e-9)
        assert not nyquist_margin(30e6, g).protected
