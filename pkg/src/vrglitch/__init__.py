"""Behavioral simulator for voltage-glitch attacks on a regulated cryptographic load."""

from .errors import (ConfigurationError, InfeasibleError, NonConvergenceError, ResolutionError,
                     SimulationError, TransientWindowError, VrGlitchError, WindowError)
from .waveforms import GlitchWaveform, SampledTrace, check_attacker_model, glitch_value, sample
from .regulator import (LoadModel, RegulatorConfig, SimulationTrace, cutoff_frequency,
                        equivalent_impedance, lpf_transfer_magnitude,
                        lpf_transfer_magnitude_general, optimize_operating_point,
                        output_ripple, overhead_estimate, peak_glitch_at_load, simulate)
from .attenuation import (FirSpec, PhaseSampledGlitch, energy_vs_phases, fir_response,
                          nyquist_margin, transmitted_glitch_energy)
from .target import (FaultModel, aes128_decrypt, aes128_encrypt, evaluate_under_supply,
                     propagate_fault, sbox)
from .infective import DetectorConfig, PrngState, detect, end_to_end, infective_encrypt, prng_next
from .harness import (CampaignSpec, FaultCampaignResult, SweepTable, default_scenario,
                      run_campaign, sweep_capacitor, sweep_duration, sweep_frequency,
                      sweep_phases)

__version__ = "0.1.0"
