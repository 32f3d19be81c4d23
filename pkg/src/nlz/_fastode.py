"""Compiled DOP853 propagator specialized to the two-level system.

The generic scipy solver spends ~20 microseconds of Python overhead per
right-hand-side evaluation, which dominates the cost of the long highly
oscillatory spans (total phase ~1e5 rad per scattering run).  This module
runs the same embedded RK 8(5,3) scheme (Hairer's DOP853 tableau, taken
from scipy) inside a numba-compiled loop with the affine nonlinearity
inlined: PI step-size control, the combined 5th/3rd-order error estimate,
and the 7th-order dense interpolant for sample-grid output.

Only affine nonlinearities go through this path; opaque callables use the
scipy fallback in :mod:`nlz.dynamics`.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dc

_A = np.ascontiguousarray(_dc.A)
_B = np.ascontiguousarray(_dc.B)
_C = np.ascontiguousarray(_dc.C)
_E3 = np.ascontiguousarray(_dc.E3)
_E5 = np.ascontiguousarray(_dc.E5)
_D = np.ascontiguousarray(_dc.D)

STATUS_OK = 0
STATUS_UNDERFLOW = -1
STATUS_MAXSTEPS = -2

_SAFETY = 0.9
_MIN_FACTOR = 0.333
_MAX_FACTOR = 6.0
_BETA = 0.05              # PI controller memory weight
_EXPO1 = 1.0 / 8.0 - _BETA * 0.2
_MAX_STEPS = 80_000_000


@njit(cache=True)
def _rhs(s, y, out, g, gh, n, delta, f1c, f2c, qc):
    p = 0.0
    q = 0.0
    for i in range(n):
        p += y[i].real * y[i].real + y[i].imag * y[i].imag
    for i in range(n, 2 * n):
        q += y[i].real * y[i].real + y[i].imag * y[i].imag
    f1 = f1c[0] + f1c[1] * p + f1c[2] * q
    f2 = f2c[0] + f2c[1] * p + f2c[2] * q
    c1 = s + delta * f1
    c2 = s - delta * f2
    for i in range(n):
        acc = c1 * y[i]
        for j in range(n):
            acc += g[i, j] * y[n + j]
        out[i] = 1j * acc
    for i in range(n):
        acc = -c2 * y[n + i]
        for j in range(n):
            acc += gh[i, j] * y[j]
        out[n + i] = 1j * acc
    out[2 * n] = 0.5 * delta * (f1 + f2)
    out[2 * n + 1] = qc[0] + qc[1] * p + qc[2] * q


@njit(cache=True)
def _error_norm(kk, h, scale, e3, e5, dim):
    err5sq = 0.0
    err3sq = 0.0
    for i in range(dim):
        a5 = 0.0 + 0.0j
        a3 = 0.0 + 0.0j
        for m in range(13):
            a5 += kk[m, i] * e5[m]
            a3 += kk[m, i] * e3[m]
        a5 /= scale[i]
        a3 /= scale[i]
        err5sq += a5.real * a5.real + a5.imag * a5.imag
        err3sq += a3.real * a3.real + a3.imag * a3.imag
    if err5sq == 0.0 and err3sq == 0.0:
        return 0.0
    denom = err5sq + 0.01 * err3sq
    return abs(h) * err5sq / np.sqrt(denom * dim)


@njit(cache=True)
def _dense_coeffs(kk, f_interp, t, h, y_old, y_new, g, gh, n, delta, f1c, f2c, qc,
                  a, c, d, dim):
    # three extra stages for the 7th-order interpolant
    tmp = np.empty(dim, dtype=np.complex128)
    for srow in range(13, 16):
        for i in range(dim):
            acc = 0.0 + 0.0j
            for m in range(srow):
                av = a[srow, m]
                if av != 0.0:
                    acc += av * kk[m, i]
            tmp[i] = y_old[i] + h * acc
        _rhs(t + c[srow] * h, tmp, kk[srow], g, gh, n, delta, f1c, f2c, qc)
    for i in range(dim):
        dy = y_new[i] - y_old[i]
        f_interp[0, i] = dy
        f_interp[1, i] = h * kk[0, i] - dy
        f_interp[2, i] = 2.0 * dy - h * (kk[12, i] + kk[0, i])
        for r in range(4):
            acc = 0.0 + 0.0j
            for m in range(16):
                dv = d[r, m]
                if dv != 0.0:
                    acc += dv * kk[m, i]
            f_interp[3 + r, i] = h * acc
    return kk


@njit(cache=True)
def _dense_eval(f_interp, y_old, t_old, h, t, out, dim):
    x = (t - t_old) / h
    for i in range(dim):
        acc = 0.0 + 0.0j
        for rev in range(7):
            row = 6 - rev
            acc += f_interp[row, i]
            if rev % 2 == 0:
                acc *= x
            else:
                acc *= 1.0 - x
        out[i] = y_old[i] + acc


@njit(cache=True)
def _initial_step(t0, y0, f0, direction, rtol, atol, g, gh, n, delta, f1c, f2c, qc, dim):
    d0 = 0.0
    d1 = 0.0
    for i in range(dim):
        sc = atol + rtol * abs(y0[i])
        d0 += (abs(y0[i]) / sc) ** 2
        d1 += (abs(f0[i]) / sc) ** 2
    d0 = np.sqrt(d0 / dim)
    d1 = np.sqrt(d1 / dim)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    y1 = np.empty(dim, dtype=np.complex128)
    f1 = np.empty(dim, dtype=np.complex128)
    for i in range(dim):
        y1[i] = y0[i] + h0 * direction * f0[i]
    _rhs(t0 + h0 * direction, y1, f1, g, gh, n, delta, f1c, f2c, qc)
    d2 = 0.0
    for i in range(dim):
        sc = atol + rtol * abs(y0[i])
        d2 += (abs(f1[i] - f0[i]) / sc) ** 2
    d2 = np.sqrt(d2 / dim) / h0
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / dm) ** (1.0 / 8.0)
    return min(100.0 * h0, h1)


@njit(cache=True)
def _propagate(y0, t0, t1, rtol, atol, g, gh, delta, f1c, f2c, qc, s_eval,
               a, b, c, e3, e5, d, cap):
    dim = y0.shape[0]
    n = (dim - 2) // 2
    direction = 1.0 if t1 > t0 else -1.0

    kk = np.zeros((16, dim), dtype=np.complex128)
    f_interp = np.zeros((7, dim), dtype=np.complex128)
    y = y0.copy()
    y_new = np.empty(dim, dtype=np.complex128)
    scale = np.empty(dim, dtype=np.float64)
    t = t0

    n_eval = s_eval.shape[0]
    y_eval = np.zeros((n_eval, dim), dtype=np.complex128)
    ieval = 0

    # decimating storage of accepted steps
    step_s = np.zeros(cap, dtype=np.float64)
    step_y = np.zeros((cap, dim), dtype=np.complex128)
    nstore = 0
    stride = 1
    istep = 0

    norm0 = 0.0
    for i in range(2 * n):
        norm0 += y[i].real * y[i].real + y[i].imag * y[i].imag
    maxdrift = 0.0

    _rhs(t, y, kk[0], g, gh, n, delta, f1c, f2c, qc)
    nfev = 1
    h = _initial_step(t, y, kk[0], direction, rtol, atol, g, gh, n, delta, f1c, f2c, qc, dim)
    nfev += 1
    if h > abs(t1 - t0):
        h = abs(t1 - t0)
    err_old = 1e-4
    nsteps = 0
    naccept = 0
    status = STATUS_OK

    step_s[0] = t
    step_y[0] = y
    nstore = 1

    while direction * (t1 - t) > 0.0:
        nsteps += 1
        if nsteps > _MAX_STEPS:
            status = STATUS_MAXSTEPS
            break
        if h < 1e-12 * max(1.0, abs(t)):
            status = STATUS_UNDERFLOW
            break
        if h > direction * (t1 - t):
            h = direction * (t1 - t)
        hs = h * direction

        # stages 1..11
        for srow in range(1, 12):
            for i in range(dim):
                acc = 0.0 + 0.0j
                for m in range(srow):
                    av = a[srow, m]
                    if av != 0.0:
                        acc += av * kk[m, i]
                y_new[i] = y[i] + hs * acc
            _rhs(t + c[srow] * hs, y_new, kk[srow], g, gh, n, delta, f1c, f2c, qc)
        # 5th/8th order solution from B
        for i in range(dim):
            acc = 0.0 + 0.0j
            for m in range(12):
                bv = b[m]
                if bv != 0.0:
                    acc += bv * kk[m, i]
            y_new[i] = y[i] + hs * acc
        t_new = t + hs
        _rhs(t_new, y_new, kk[12], g, gh, n, delta, f1c, f2c, qc)
        nfev += 12

        for i in range(dim):
            ya = abs(y[i])
            yb = abs(y_new[i])
            scale[i] = atol + rtol * (ya if ya > yb else yb)
        err = _error_norm(kk, hs, scale, e3, e5, dim)

        if err <= 1.0:
            # accepted
            if n_eval > 0 and ieval < n_eval:
                t_lo = t if direction > 0 else t_new
                t_hi = t_new if direction > 0 else t
                need = False
                j = ieval
                while j < n_eval:
                    sv = s_eval[j]
                    if direction * (sv - t_new) > 1e-14:
                        break
                    if sv >= t_lo - 1e-14 and sv <= t_hi + 1e-14:
                        need = True
                    j += 1
                if need:
                    _dense_coeffs(kk, f_interp, t, hs, y, y_new, g, gh, n,
                                  delta, f1c, f2c, qc, a, c, d, dim)
                    nfev += 3
                    while ieval < n_eval:
                        sv = s_eval[ieval]
                        if direction * (sv - t_new) > 1e-14:
                            break
                        _dense_eval(f_interp, y, t, hs, sv, y_eval[ieval], dim)
                        ieval += 1

            t = t_new
            for i in range(dim):
                y[i] = y_new[i]
                kk[0, i] = kk[12, i]
            naccept += 1
            istep += 1

            nrm = 0.0
            for i in range(2 * n):
                nrm += y[i].real * y[i].real + y[i].imag * y[i].imag
            dv = abs(nrm - norm0)
            if dv > maxdrift:
                maxdrift = dv

            if istep % stride == 0:
                if nstore == cap:
                    half = cap // 2
                    for m in range(half):
                        step_s[m] = step_s[2 * m + 1]
                        step_y[m] = step_y[2 * m + 1]
                    nstore = half
                    stride *= 2
                else:
                    step_s[nstore] = t
                    step_y[nstore] = y
                    nstore += 1

            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err ** (-_EXPO1) * err_old ** _BETA
                if factor > _MAX_FACTOR:
                    factor = _MAX_FACTOR
                elif factor < _MIN_FACTOR:
                    factor = _MIN_FACTOR
            h *= factor
            err_old = max(err, 1e-4)
        else:
            factor = _SAFETY * err ** (-_EXPO1)
            if factor < _MIN_FACTOR:
                factor = _MIN_FACTOR
            elif factor > 1.0:
                factor = 1.0
            h *= factor

    # make sure the exact final state is the last stored step
    if status == STATUS_OK:
        if nstore == cap:
            nstore -= 1
        step_s[nstore] = t
        step_y[nstore] = y
        nstore += 1

    return (status, t, y, y_eval, ieval, step_s[:nstore].copy(),
            step_y[:nstore].copy(), naccept, nfev, maxdrift)


def propagate(y0, s_from, s_to, rtol, atol, g_matrix, delta, f1_coeffs, f2_coeffs,
              quad_coeffs=None, s_eval=None, cap=2048):
    """Run the compiled propagator; returns a plain dict of results."""
    y0 = np.ascontiguousarray(y0, dtype=np.complex128)
    g = np.ascontiguousarray(g_matrix, dtype=np.complex128)
    gh = np.ascontiguousarray(g_matrix.conj().T, dtype=np.complex128)
    f1c = np.asarray(f1_coeffs, dtype=np.float64)
    f2c = np.asarray(f2_coeffs, dtype=np.float64)
    qc = np.asarray(quad_coeffs if quad_coeffs is not None else (0.0, 0.0, 0.0),
                    dtype=np.float64)
    ev = np.asarray([] if s_eval is None else s_eval, dtype=np.float64)
    (status, t_last, y_last, y_eval, neval, step_s, step_y,
     nsteps, nfev, maxdrift) = _propagate(
        y0, float(s_from), float(s_to), float(rtol), float(atol), g, gh,
        float(delta), f1c, f2c, qc, ev, _A, _B, _C, _E3, _E5, _D, int(cap))
    return {
        "status": int(status),
        "t_last": float(t_last),
        "y_final": y_last,
        "y_eval": y_eval,
        "n_eval_done": int(neval),
        "step_s": step_s,
        "step_y": step_y,
        "nsteps": int(nsteps),
        "nfev": int(nfev),
        "max_drift": float(maxdrift),
    }
