"""Independent reference computations used by the tests.

Nothing here imports the package; each oracle is written from first
principles so that it can catch mistakes in the implementation.
"""

from __future__ import annotations

import math


def binary_entropy(p: float) -> float:
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def poisson(n: int, mean: float) -> float:
    return math.exp(-mean) * mean**n / math.factorial(n)


def photon_yield(n: int, eta: float, y0: float) -> float:
    """Click probability for an n-photon state through transmittance eta."""
    return 1.0 - (1.0 - y0) * (1.0 - eta) ** n


def photon_error(n: int, eta: float, y0: float, e_opt: float) -> float:
    """Error rate of n-photon detections.

    A click caused only by background is wrong half the time; when at least
    one photon arrives the outcome is wrong with probability e_opt.
    """
    yn = photon_yield(n, eta, y0)
    if yn == 0:
        return 0.0
    arrive = 1.0 - (1.0 - eta) ** n
    return (0.5 * y0 * (1.0 - arrive) + e_opt * arrive) / yn


def poisson_mixture(mean: float, eta: float, y0: float, e_opt: float, n_max: int = 50):
    """Gain and QBER of a phase-randomised coherent state by explicit photon-number sums."""
    q = 0.0
    eq = 0.0
    for n in range(n_max + 1):
        w = poisson(n, mean)
        yn = photon_yield(n, eta, y0)
        q += w * yn
        eq += w * yn * photon_error(n, eta, y0, e_opt)
    return q, eq / q if q > 0 else 0.5


def gaussian(t, amplitude, center, fwhm, offset=0.0):
    sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return [amplitude * math.exp(-0.5 * ((x - center) / sigma) ** 2) + offset for x in t]
