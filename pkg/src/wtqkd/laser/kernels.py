"""Fixed-step stochastic integrators for the multimode rate equations.

Two interchangeable implementations advance the same state over one chunk of
drive samples:

* :func:`advance_loops` - explicit scalar loops, compiled with numba when
  available (see :mod:`wtqkd._accel`);
* :func:`advance_numpy` - vectorised over modes with plain numpy.

State vector layout: ``state = [Re E, Im E, N, S_0, ..., S_{M-1}]`` where E is
the injected-mode field (|E|^2 in photons), N the carrier density (m^-3) and
S_m the side-mode photon numbers.  The injected mode's entry in S is unused
and stays zero because its side-mode gain weight is zeroed by the caller.

``p`` packs the scalar coefficients, all in SI units (seconds):

    0 g0         Gamma * v_g * sigma_g            [m^3/s]
    1 n_tr       transparency density             [m^-3]
    2 inv_tp     1 / photon lifetime              [1/s]
    3 inv_tn     1 / carrier lifetime             [1/s]
    4 alpha      linewidth enhancement
    5 beta       spontaneous coupling into the gain peak
    6 eps        gain compression per photon
    7 qv         q * V                            [C m^3]
    8 vol        active volume                    [m^3]
    9 drive_re   Re(kappa * A_inj * e^{i phi})    [sqrt(photon)/s]
   10 drive_im   Im(...)
   11 d_omega    mode minus injection angular frequency [rad/s]
   12 g_inj      gain-envelope weight of the injected mode

The refractive (alpha) term is driven by the uncompressed gain, so gain
compression produces adiabatic chirp.

The drift is integrated with classical RK4 substeps.  The Langevin terms
enter as one Euler-Maruyama kick per drive sample interval, so ``xi_e`` and
``xi_s`` hold one row per interval.  Photon numbers are floored at zero.
"""

from __future__ import annotations

import math

import numpy as np

from .._accel import NUMBA_ENABLED, njit

N_PARAMS = 13


@njit
def _drift_loops(er, ei, n, s, current, p, lside, out):
    g0 = p[0]
    n_tr = p[1]
    inv_tp = p[2]
    inv_tn = p[3]
    alpha = p[4]
    beta = p[5]
    eps = p[6]
    qv = p[7]
    vol = p[8]
    drive_re = p[9]
    drive_im = p[10]
    d_omega = p[11]
    g_inj = p[12]
    m = s.shape[0]
    pe = er * er + ei * ei
    stot = pe
    for j in range(m):
        stot += s[j]
    glin = g0 * (n - n_tr)
    gn = glin / (1.0 + eps * stot)
    rsp = n * vol * inv_tn
    net = gn * g_inj - inv_tp
    chirp = alpha * (glin * g_inj - inv_tp)
    der = 0.5 * (net * er - chirp * ei) + d_omega * ei + drive_re
    dei = 0.5 * (net * ei + chirp * er) - d_omega * er + drive_im
    stim = gn * g_inj * pe
    for j in range(m):
        gm = gn * lside[j]
        out[j] = (gm - inv_tp) * s[j] + beta * lside[j] * rsp
        stim += gm * s[j]
    dn = current / qv - n * inv_tn - stim / vol
    return der, dei, dn


@njit
def advance_loops(state, currents, substeps, dt, p, lside, xi_e, xi_s, out_fields, out_s):
    """Integrate ``currents.size - 1`` sample intervals in place.

    ``currents`` are in amperes at the sample instants; inside an interval the
    current is interpolated linearly.  Row ``k`` of the outputs receives the
    state at the end of interval ``k``.  Returns the index of the first step
    with a non-finite state, or -1.
    """
    m = lside.shape[0]
    er = state[0]
    ei = state[1]
    n = state[2]
    s = state[3:].copy()
    k1 = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    tmp = np.empty(m)
    beta = p[5]
    vol = p[8]
    inv_tn = p[3]
    g_inj = p[12]
    step = 0
    n_intervals = currents.shape[0] - 1
    for k in range(n_intervals):
        i0 = currents[k]
        di = (currents[k + 1] - i0) / substeps
        for sub in range(substeps):
            ia = i0 + di * sub
            ib = ia + 0.5 * di
            ic = ia + di
            a_er, a_ei, a_n = _drift_loops(er, ei, n, s, ia, p, lside, k1)
            h = 0.5 * dt
            for j in range(m):
                tmp[j] = s[j] + h * k1[j]
            b_er, b_ei, b_n = _drift_loops(er + h * a_er, ei + h * a_ei, n + h * a_n, tmp, ib, p, lside, k2)
            for j in range(m):
                tmp[j] = s[j] + h * k2[j]
            c_er, c_ei, c_n = _drift_loops(er + h * b_er, ei + h * b_ei, n + h * b_n, tmp, ib, p, lside, k3)
            for j in range(m):
                tmp[j] = s[j] + dt * k3[j]
            d_er, d_ei, d_n = _drift_loops(er + dt * c_er, ei + dt * c_ei, n + dt * c_n, tmp, ic, p, lside, k4)
            w = dt / 6.0
            er += w * (a_er + 2.0 * b_er + 2.0 * c_er + d_er)
            ei += w * (a_ei + 2.0 * b_ei + 2.0 * c_ei + d_ei)
            n += w * (a_n + 2.0 * b_n + 2.0 * c_n + d_n)
            bad = not (math.isfinite(er) and math.isfinite(ei) and math.isfinite(n))
            for j in range(m):
                v = s[j] + w * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if not math.isfinite(v):
                    bad = True
                s[j] = max(v, 0.0)
            if bad:
                state[0] = er
                state[1] = ei
                state[2] = n
                state[3:] = s
                return step
            step += 1
        # Langevin kick over the whole sample interval
        rsp = beta * max(n, 0.0) * vol * inv_tn * dt * substeps
        amp = math.sqrt(0.5 * rsp * g_inj)
        er += amp * xi_e[k, 0]
        ei += amp * xi_e[k, 1]
        for j in range(m):
            v = s[j]
            if v > 0.0:
                v += math.sqrt(2.0 * rsp * lside[j] * v) * xi_s[k, j]
            s[j] = max(v, 0.0)
        out_fields[k, 0] = er
        out_fields[k, 1] = ei
        out_fields[k, 2] = n
        for j in range(m):
            out_s[k, j] = s[j]
    state[0] = er
    state[1] = ei
    state[2] = n
    state[3:] = s
    return -1


def _drift_numpy(e, n, s, current, p, lside):
    g0, n_tr, inv_tp, inv_tn, alpha, beta, eps, qv, vol, drive_re, drive_im, d_omega, g_inj = p
    pe = e.real * e.real + e.imag * e.imag
    glin = g0 * (n - n_tr)
    gn = glin / (1.0 + eps * (pe + s.sum()))
    net = gn * g_inj - inv_tp
    chirp = alpha * (glin * g_inj - inv_tp)
    de = 0.5 * (net + 1j * chirp) * e - 1j * d_omega * e + complex(drive_re, drive_im)
    gm = gn * lside
    ds = (gm - inv_tp) * s + beta * lside * (n * vol * inv_tn)
    dn = current / qv - n * inv_tn - (gn * g_inj * pe + gm @ s) / vol
    return de, dn, ds


def advance_numpy(state, currents, substeps, dt, p, lside, xi_e, xi_s, out_fields, out_s):
    """Vectorised twin of :func:`advance_loops` with the same contract."""
    p = tuple(float(x) for x in p)
    beta, vol, inv_tn, g_inj = p[5], p[8], p[3], p[12]
    e = complex(state[0], state[1])
    n = float(state[2])
    s = np.array(state[3:], dtype=float)
    step = 0
    for k in range(currents.shape[0] - 1):
        i0 = currents[k]
        di = (currents[k + 1] - i0) / substeps
        for sub in range(substeps):
            ia = i0 + di * sub
            h = 0.5 * dt
            a_e, a_n, a_s = _drift_numpy(e, n, s, ia, p, lside)
            b_e, b_n, b_s = _drift_numpy(e + h * a_e, n + h * a_n, s + h * a_s, ia + 0.5 * di, p, lside)
            c_e, c_n, c_s = _drift_numpy(e + h * b_e, n + h * b_n, s + h * b_s, ia + 0.5 * di, p, lside)
            d_e, d_n, d_s = _drift_numpy(e + dt * c_e, n + dt * c_n, s + dt * c_s, ia + di, p, lside)
            w = dt / 6.0
            e = e + w * (a_e + 2.0 * b_e + 2.0 * c_e + d_e)
            n = n + w * (a_n + 2.0 * b_n + 2.0 * c_n + d_n)
            s = np.maximum(s + w * (a_s + 2.0 * b_s + 2.0 * c_s + d_s), 0.0)
            if not (math.isfinite(e.real) and math.isfinite(e.imag) and math.isfinite(n) and np.all(np.isfinite(s))):
                state[:] = np.concatenate(([e.real, e.imag, n], s))
                return step
            step += 1
        rsp = beta * max(n, 0.0) * vol * inv_tn * dt * substeps
        e = e + math.sqrt(0.5 * rsp * g_inj) * complex(xi_e[k, 0], xi_e[k, 1])
        pos = s > 0.0
        s = np.where(pos, s + np.sqrt(2.0 * rsp * lside * np.where(pos, s, 0.0)) * xi_s[k], 0.0)
        np.maximum(s, 0.0, out=s)
        out_fields[k] = (e.real, e.imag, n)
        out_s[k] = s
    state[:] = np.concatenate(([e.real, e.imag, n], s))
    return -1


def default_backend() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def get_advance(backend: str | None = None):
    """Return the chunk integrator for ``backend`` ('numba', 'loops' or 'numpy').

    ``None`` picks numba-compiled loops when numba is enabled and the
    vectorised numpy path otherwise.  'loops' runs :func:`advance_loops`
    whether or not it was compiled.
    """
    backend = backend or default_backend()
    if backend in ("numba", "loops"):
        if backend == "numba" and not NUMBA_ENABLED:
            raise RuntimeError("numba backend requested but numba is disabled")
        return advance_loops
    if backend == "numpy":
        return advance_numpy
    raise ValueError(f"unknown backend {backend!r}")
