"""Small deterministic fitting helpers used by the asymptotic analysis.

All solvers here reduce to numpy.linalg.lstsq on fixed designs, so results
are bit-reproducible for identical inputs.
"""

from __future__ import annotations

import numpy as np


def intercept_inv_s(s, y, power: int = 1):
    """Weighted least squares for y(s) = b0 + b1/s^power on a sample grid.

    The misfit of the model is O(1/s^power) (oscillatory), so the fit uses
    weights proportional to s^power: minimize
    sum_k s_k^(2 power) |y_k - b0 - b1/s_k^power|^2.  Works for real or
    complex y; y may be (m,) or (m, d) (componentwise fit).

    Returns
    -------
    b0, b1 : intercept(s) and 1/s^power coefficient(s)
    max_misfit : max_k |y_k - fit_k| (unweighted)
    stderr : standard-error estimate of the intercept from the weighted
        residuals (scalar, conservative max over components)
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y)
    squeeze = y.ndim == 1
    yy = y[:, None] if squeeze else y
    w = np.abs(s) ** power
    x = np.column_stack([np.ones_like(s), 1.0 / s ** power])
    xw = x * w[:, None]
    yw = yy * w[:, None]
    beta, *_ = np.linalg.lstsq(xw, yw, rcond=None)
    fit = x @ beta
    misfit = yy - fit
    max_misfit = float(np.max(np.abs(misfit))) if misfit.size else 0.0
    # intercept covariance from the weighted normal equations
    m = len(s)
    dof = max(m - 2, 1)
    cov00 = np.linalg.inv(xw.T @ xw)[0, 0].real
    sw2 = np.sum(np.abs(misfit * w[:, None]) ** 2, axis=0) / dof
    stderr = float(np.sqrt(np.max(sw2.real) * cov00))
    b0, b1 = beta[0], beta[1]
    if squeeze:
        b0, b1 = b0[0], b1[0]
    return b0, b1, max_misfit, stderr


def loglog_slope(x, y):
    """Least-squares slope of log|y| against log|x| (y entries must be nonzero)."""
    x = np.log(np.abs(np.asarray(x, dtype=float)))
    y = np.log(np.abs(np.asarray(y, dtype=float)))
    design = np.column_stack([np.ones_like(x), x])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(beta[1])


def fit_decay_exponent(s, dev, bins: int = 8, floor: float = 1e-14):
    """Decay exponent of |dev| ~ C * s^p for oscillatory deviations.

    The deviations typically look like cos(s^2 + ...) / s^a, so a pointwise
    log-log fit is polluted by near-zeros of the oscillation.  Binning
    |dev| geometrically in s and averaging within each bin removes the
    oscillation (the mean of |cos| is a constant factor, which does not
    bias the slope).

    Returns None when the deviations sit at the numerical floor.
    """
    s = np.abs(np.asarray(s, dtype=float))
    dev = np.abs(np.asarray(dev, dtype=float))
    if np.max(dev) < floor:
        return None
    order = np.argsort(s)
    s, dev = s[order], dev[order]
    edges = np.geomspace(s[0] * 0.999, s[-1] * 1.001, bins + 1)
    xs, ys = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (s >= lo) & (s < hi)
        if np.count_nonzero(mask) == 0:
            continue
        xs.append(np.exp(np.mean(np.log(s[mask]))))
        ys.append(np.mean(dev[mask]))
    if len(xs) < 3:
        return None
    return loglog_slope(np.asarray(xs), np.asarray(ys))


def align_global_phase(reference, value):
    """Best single phase theta minimizing |value - e^{i theta} reference|.

    Returns (theta, distance).  Arrays of any common shape; the Frobenius
    inner product fixes theta = arg <reference, value>.
    """
    ref = np.asarray(reference, dtype=complex).ravel()
    val = np.asarray(value, dtype=complex).ravel()
    inner = np.vdot(ref, val)
    theta = float(np.angle(inner)) if inner != 0 else 0.0
    dist = float(np.linalg.norm(val - np.exp(1j * theta) * ref))
    return theta, dist


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    out = (theta + np.pi) % (2.0 * np.pi) - np.pi
    return float(np.pi) if out == -np.pi else float(out)
