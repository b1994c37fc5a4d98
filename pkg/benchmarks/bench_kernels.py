"""Compare the numba-compiled and pure-numpy laser integrators.

Run ``python benchmarks/bench_kernels.py [n_pulses]``.  Both paths integrate
the same gain-switched drive with the same noise stream; the script reports
wall time per run and the largest field difference between them.
"""

import argparse
import time

import numpy as np

from wtqkd.harness.bridge import calibration_drive
from wtqkd.laser.dynamics import simulate
from wtqkd.laser.kernels import NUMBA_ENABLED
from wtqkd.laser.params import load_preset


def timed(preset, drive, backend, repeats):
    best, trace = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        trace = simulate(preset.laser, drive, preset.injection, 1, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, trace


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("n_pulses", nargs="?", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    preset = load_preset()
    drive = calibration_drive(preset.drive, args.n_pulses)
    print(f"{args.n_pulses} pulses, {drive.samples.size} samples, {preset.laser.mode_count} modes")
    results = {}
    backends = ["numba", "numpy"] if NUMBA_ENABLED else ["numpy"]
    for backend in backends:
        if backend == "numba":
            simulate(preset.laser, calibration_drive(preset.drive, 2), preset.injection, 1, backend="numba")
        results[backend] = timed(preset, drive, backend, args.repeats)
        print(f"{backend:>6}: {results[backend][0]:.3f} s")
    if len(results) == 2:
        a, b = results["numba"][1], results["numpy"][1]
        diff = np.max(np.abs(a.field - b.field)) / np.max(np.abs(a.field))
        print(f"speed-up {results['numpy'][0] / results['numba'][0]:.1f}x, max relative field difference {diff:.2e}")
    else:
        print("numba disabled (WTQKD_DISABLE_NUMBA set or numba missing)")


if __name__ == "__main__":
    main()
