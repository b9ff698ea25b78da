"""Fault rate and rail peak against phase count for the default scenario.

Run: python3 demos/phase_sweep.py [trials]
"""

import sys

from vrglitch.harness import default_scenario, sweep_phases


def main():
    trials = int(sys.argv[1]) if len(sys.argv) > 1 else 300
    tab = sweep_phases(default_scenario(trials=trials))
    print(f"{'N':>5} {'success %':>10} {'coverage %':>11} {'peak mV':>9}")
    for row in tab.rows:
        n, success, coverage, _, peak = row[:5]
        print(f"{n!s:>5} {success:10.2f} {coverage:11.2f} {peak * 1e3:9.1f}")
    for name, ok in tab.verdicts.items():
        print(f"{name}: {ok}")


if __name__ == "__main__":
    main()
