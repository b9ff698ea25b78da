"""One +2 V glitch through a 1-phase and a 32-phase regulator, with the detector on.

Run: python3 demos/single_glitch.py
"""

from vrglitch.harness import FIPS_KEY, FIPS_PLAINTEXT, default_scenario
from vrglitch.infective import end_to_end


def main():
    for n in (1, 32):
        spec = default_scenario(n_phases=n, detector=True)
        t = spec.period
        # land the glitch a third of a period after the window opens
        glitch = spec.glitch.shifted(5.3 * t)
        r = end_to_end(spec.regulator, spec.load, spec.detector, spec.fault_model, glitch,
                       FIPS_KEY, FIPS_PLAINTEXT, seed=1)
        print(f"N={n:2d}  peak {r.peak_deviation * 1e3:6.1f} mV  faulted={r.faulted}  "
              f"triggered={r.triggered}  contaminated={r.contaminated}")
        print(f"      ciphertext {r.ciphertext.hex()}")
        print(f"      correct    {r.correct.hex()}")


if __name__ == "__main__":
    main()
