"""Asymptotic scattering states, wave operators, and the scattering map.

Outgoing/incoming profiles are defined by the normal form

    u1(s) ~ exp(i delta F1 s + i phi(s, GG*)) omega1
    u2(s) ~ exp(i delta F2 s - i phi(s, G*G)) omega2

with the long-range phase phi(s, lambda) = s^2/2 + (lambda/2) ln|s|.  The
same formulas hold verbatim at s -> -infinity (negative sample grids).

Extraction strips the explicit phases on a geometric sample grid, optionally
inverts the first-order corrected ansatz (the -+ G/(2s) cross terms, which
upgrades the per-sample error from O(1/s) to O(1/s^2)), and fits
omega + d/s componentwise.  Wave operators are built by backward shooting
from a geometric ladder of start times, with a Richardson-extrapolated value
at s = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import ModelConfig, Trajectory, integrate
from .errors import ConvergenceError, ExtractionError, NumericError
from .fitting import (align_global_phase, fit_decay_exponent, intercept_inv_s,
                      loglog_slope, wrap_angle)
from .operators import phase_unitary, projectors

DEFAULT_WAVE_BASE = 50.0
DEFAULT_WAVE_RATIO = 1.5
DEFAULT_WAVE_COUNT = 6


@dataclass(frozen=True)
class ExtractionGrid:
    """Geometric sample grid s_k = direction * s0 * ratio^k, k = 0..count-1."""

    s0: float = 40.0
    ratio: float = 1.052
    count: int = 32
    direction: int = +1

    def __post_init__(self):
        if self.s0 < 20.0:
            raise ValueError("s0 must be >= 20 (asymptotic regime)")
        if not (1.0 < self.ratio <= 2.0):
            raise ValueError("ratio must lie in (1, 2]")
        if self.count < 5:
            raise ValueError("count must be >= 5")
        if self.direction not in (+1, -1):
            raise ValueError("direction must be +1 or -1")

    @property
    def points(self) -> np.ndarray:
        return self.direction * self.s0 * self.ratio ** np.arange(self.count)

    @property
    def s_extreme(self) -> float:
        return float(self.s0 * self.ratio ** (self.count - 1))

    @classmethod
    def spanning(cls, s0: float, s_max: float, count: int = 32,
                 direction: int = +1, margin: float = 0.98) -> "ExtractionGrid":
        """Grid from s0 out to margin*s_max with the given number of points."""
        top = margin * s_max
        if top <= s0:
            raise ValueError("s_max too small for the requested s0")
        ratio = (top / s0) ** (1.0 / (count - 1))
        ratio = min(max(ratio, 1.0 + 1e-6), 2.0)
        return cls(s0=s0, ratio=ratio, count=count, direction=direction)


@dataclass
class NormLimits:
    """Intercepts of the 1/s fit to the component norms on the grid."""

    omega: tuple
    coeffs: tuple
    residual: float      # standard-error estimate of the intercepts
    max_misfit: float    # worst pointwise deviation of the fit
    points: np.ndarray
    values: np.ndarray


@dataclass
class AsymptoticState:
    """Extracted scattering data at one end of the time axis."""

    omega1: np.ndarray
    omega2: np.ndarray
    Omega: tuple
    drift: tuple
    residual: float
    phi: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.omega1, self.omega2])

    @property
    def norms_sq(self) -> tuple:
        return (float(np.vdot(self.omega1, self.omega1).real),
                float(np.vdot(self.omega2, self.omega2).real))


def _values_at(traj: Trajectory, pts: np.ndarray) -> np.ndarray:
    """States at the requested sample points (evaluation grid or dense)."""
    if traj.s is not None:
        idx = {round(float(s), 9): i for i, s in enumerate(traj.s)}
        rows = [idx.get(round(float(p), 9)) for p in pts]
        if all(r is not None for r in rows):
            return traj.u[rows]
    return traj.u_at(pts)


def _phase_operators(s: float, model: ModelConfig, rates: tuple) -> tuple:
    """(U1, U2) with U1 = e^{i r1 s} e^{i phi(s, GG*)}, U2 = e^{i r2 s} e^{-i phi(s, G*G)}."""
    g = model.g
    u1 = np.exp(1j * rates[0] * s) * phase_unitary(s, g.gram_left, +1)
    u2 = np.exp(1j * rates[1] * s) * phase_unitary(s, g.gram_right, -1)
    return u1, u2


def asymptotic_ansatz(s: float, omega1, omega2, model: ModelConfig,
                      rates: Optional[tuple] = None, cross: bool = True) -> np.ndarray:
    """Evaluate the (optionally corrected) asymptotic normal form at time s.

    With ``cross`` the -+ G/(2s) terms are included, which reduces the
    residual of the free equation from O(1/s) to O(1/s^2); the same formula
    is valid at both ends of the time axis (s carries its sign).
    """
    omega1 = np.atleast_1d(np.asarray(omega1, dtype=complex))
    omega2 = np.atleast_1d(np.asarray(omega2, dtype=complex))
    if rates is None:
        p = np.vdot(omega1, omega1).real
        q = np.vdot(omega2, omega2).real
        f1, f2 = model.f_values(p, q)
        rates = (model.delta * f1, model.delta * f2)
    u1op, u2op = _phase_operators(s, model, rates)
    a = u1op @ omega1
    b = u2op @ omega2
    if cross:
        g = model.g.matrix
        c = 1.0 / (2.0 * s)
        return np.concatenate([a - c * (g @ b), b + c * (g.conj().T @ a)])
    return np.concatenate([a, b])


def extract_norm_limits(traj: Trajectory, grid: ExtractionGrid) -> NormLimits:
    """Fit |u_j(s_k)|^2 = Omega_j + c_j / s_k on the extraction grid.

    The deviation from the limit is O(1/s) and oscillatory, so the fit is
    weighted (weights ~ s).  ``residual`` reports the standard-error
    estimate of the intercepts; above 1e-3 the limit is considered
    unresolved (typically S_max is too small).
    """
    pts = grid.points
    u = _values_at(traj, pts)
    n = traj.model.dim
    p = np.einsum("ij,ij->i", u[:, :n].conj(), u[:, :n]).real
    q = np.einsum("ij,ij->i", u[:, n:].conj(), u[:, n:]).real
    y = np.column_stack([p, q])
    b0, b1, max_misfit, stderr = intercept_inv_s(pts, y)
    omega = np.real(b0)
    if stderr > 1e-3:
        raise ExtractionError(
            f"norm-limit fit did not converge (stderr {stderr:.2e} > 1e-3); "
            "increase S_max or move the grid outward"
        )
    total = float(omega.sum())
    if abs(total - 1.0) > 1e-6:
        raise ExtractionError(f"norm limits violate conservation: sum = {total!r}")
    omega = np.clip(omega, 0.0, None)
    return NormLimits(
        omega=(float(omega[0]), float(omega[1])),
        coeffs=(float(np.real(b1[0])), float(np.real(b1[1]))),
        residual=stderr, max_misfit=max_misfit, points=pts, values=y,
    )


def _refine_rates(pts, hat1, hat2, rates, norms):
    """Linear-regression refinement of the drift rates on unwrapped phases."""
    refined = list(rates)
    for j, hat in enumerate((hat1, hat2)):
        if norms[j] < 1e-6:
            continue
        comp = int(np.argmax(np.mean(np.abs(hat), axis=0)))
        theta = np.unwrap(np.angle(hat[:, comp]))
        design = np.column_stack([np.ones_like(pts), pts, 1.0 / pts])
        beta, *_ = np.linalg.lstsq(design, theta, rcond=None)
        refined[j] += float(beta[1])
    return tuple(refined)


def extract_scattering_state(traj: Trajectory, grid: ExtractionGrid,
                             model: Optional[ModelConfig] = None,
                             corrector: bool = True) -> AsymptoticState:
    """Extract the asymptotic profile (omega1, omega2) from a trajectory.

    Steps: norm limits -> drift rates delta*f_j(Omega) (refined by phase
    regression) -> per-sample phase stripping -> optional inversion of the
    corrected ansatz -> componentwise intercept fit omega_j + d_j/s.

    ``residual`` is the worst pointwise deviation of the final fit; above
    1e-2 the extraction is considered failed.
    """
    model = model or traj.model
    if abs(grid.s0) < 1.0:
        raise ExtractionError("extraction grid enters the log-phase singular region |s| < 1")
    limits = extract_norm_limits(traj, grid)
    f1, f2 = model.f_values(*limits.omega)
    rates = (model.delta * f1, model.delta * f2)
    pts = grid.points
    u = _values_at(traj, pts)
    n = model.dim
    g = model.g.matrix

    def strip(rates):
        hat1 = np.empty((len(pts), n), dtype=complex)
        hat2 = np.empty((len(pts), n), dtype=complex)
        for k, s in enumerate(pts):
            u1op, u2op = _phase_operators(s, model, rates)
            hat1[k] = u1op.conj().T @ u[k, :n]
            hat2[k] = u2op.conj().T @ u[k, n:]
        return hat1, hat2

    hat1, hat2 = strip(rates)
    if model.delta != 0.0:
        rates = _refine_rates(pts, hat1, hat2, rates, limits.omega)
        hat1, hat2 = strip(rates)

    if corrector and not model.g.is_zero:
        nu1 = np.empty_like(hat1)
        nu2 = np.empty_like(hat2)
        eye = np.eye(n, dtype=complex)
        for k, s in enumerate(pts):
            u1op, u2op = _phase_operators(s, model, rates)
            c = 1.0 / (2.0 * s)
            block = np.block([
                [eye, -c * (u1op.conj().T @ g @ u2op)],
                [c * (u2op.conj().T @ g.conj().T @ u1op), eye],
            ])
            sol = np.linalg.solve(block, np.concatenate([hat1[k], hat2[k]]))
            nu1[k], nu2[k] = sol[:n], sol[n:]
    else:
        nu1, nu2 = hat1, hat2

    om1, d1, mis1, _ = intercept_inv_s(pts, nu1)
    om2, d2, mis2, _ = intercept_inv_s(pts, nu2)
    residual = max(mis1, mis2)
    if residual > 1e-2:
        raise ExtractionError(
            f"scattering-state fit residual {residual:.2e} > 1e-2 (extraction failed)"
        )
    om1 = np.atleast_1d(om1)
    om2 = np.atleast_1d(om2)
    dev1 = np.linalg.norm(nu1 - om1[None, :], axis=1)
    dev2 = np.linalg.norm(nu2 - om2[None, :], axis=1)
    return AsymptoticState(
        omega1=om1, omega2=om2,
        Omega=limits.omega, drift=rates, residual=float(residual),
        diagnostics={
            "grid": grid, "corrector": corrector,
            "norm_limits": limits,
            "sample_deviation": (dev1, dev2),
            "fit_coeffs": (np.atleast_1d(d1), np.atleast_1d(d2)),
        },
    )


@dataclass
class WaveOperatorResult:
    """Backward-shooting wave operator: value at s = 0 and ladder diagnostics."""

    u0: np.ndarray
    levels: np.ndarray
    u0_levels: np.ndarray
    cauchy: np.ndarray
    slope: float
    phi: float = 0.0


def default_wave_levels(base: float = DEFAULT_WAVE_BASE, ratio: float = DEFAULT_WAVE_RATIO,
                        count: int = DEFAULT_WAVE_COUNT) -> np.ndarray:
    return base * ratio ** np.arange(count)


def wave_operator(omega1, omega2, model: ModelConfig, direction: int = +1,
                  levels: Optional[Sequence[float]] = None,
                  tol: float = 1e-10) -> WaveOperatorResult:
    """Solution at s = 0 with prescribed asymptotic data at direction*infinity.

    For each ladder level n the corrected normal form seeds the solution at
    s = direction*n and is integrated back to 0; successive values at 0 are
    Cauchy with differences O(1/n), and the returned value is the Richardson
    extrapolation of the last two levels.
    """
    omega1 = np.atleast_1d(np.asarray(omega1, dtype=complex))
    omega2 = np.atleast_1d(np.asarray(omega2, dtype=complex))
    total = np.vdot(omega1, omega1).real + np.vdot(omega2, omega2).real
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"asymptotic state must be normalized: |omega|^2 = {total!r}")
    if direction not in (+1, -1):
        raise ValueError("direction must be +1 or -1")
    levels = np.asarray(default_wave_levels() if levels is None else levels, dtype=float)
    if len(levels) < 2:
        raise ValueError("need at least two ladder levels")
    u0s = []
    for n in levels:
        start = asymptotic_ansatz(direction * n, omega1, omega2, model)
        traj = integrate(start, direction * n, 0.0, model, tol=tol, max_store=4)
        u0s.append(traj.final_u)
    u0s = np.asarray(u0s)
    cauchy = np.linalg.norm(np.diff(u0s, axis=0), axis=1)
    if np.median(cauchy[1:] / cauchy[:-1]) >= 1.0:
        raise ConvergenceError("wave-operator ladder is not converging (non-decreasing differences)")
    slope = loglog_slope(levels[:-1], cauchy)
    n_last, n_prev = levels[-1], levels[-2]
    u_star = u0s[-1] + (u0s[-1] - u0s[-2]) * (n_prev / (n_last - n_prev))
    return WaveOperatorResult(u0=u_star, levels=levels, u0_levels=u0s,
                              cauchy=cauchy, slope=slope, phi=0.0)


@dataclass
class ScatteringResult:
    """Full scattering map alpha -> omega with the antisymmetric phase phi."""

    alpha: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    phi: float
    state: AsymptoticState
    diagnostics: dict = field(default_factory=dict)

    @property
    def omega_flat(self) -> np.ndarray:
        return np.concatenate([self.omega1, self.omega2])


def scattering_map(alpha, model: ModelConfig, s_max: float = 200.0,
                   tol: float = 1e-10, grid: Optional[ExtractionGrid] = None,
                   wave_levels: Optional[Sequence[float]] = None,
                   corrector: bool = True) -> ScatteringResult:
    """Compose wave operator at -infinity, propagation, and extraction at +infinity.

    phi is reported as the half-difference of the two components' residual
    phases against the closed-form linear image of alpha (phi enters u1 as
    +phi and u2 as -phi in the wave-operator normal form); the symmetric
    half is returned among the diagnostics.  For f1 = f2 the contract
    |phi| <= 1e-3 is enforced.
    """
    from .linear import slin_matrix

    alpha = np.asarray(alpha, dtype=complex).ravel()
    n = model.dim
    if alpha.shape != (2 * n,):
        raise ValueError(f"alpha must be a flat vector of length {2 * n}")
    wop = wave_operator(alpha[:n], alpha[n:], model, direction=-1,
                        levels=wave_levels, tol=tol)
    if grid is None:
        grid = ExtractionGrid.spanning(40.0, s_max)
    traj = integrate(wop.u0, 0.0, s_max, model, tol=tol, s_eval=grid.points)
    state = extract_scattering_state(traj, grid, model, corrector=corrector)

    omega_ref = slin_matrix(model.g) @ alpha
    ref1, ref2 = omega_ref[:n], omega_ref[n:]
    phi = 0.0
    theta1 = theta2 = None
    if np.linalg.norm(ref1) > 1e-6 and np.linalg.norm(state.omega1) > 1e-6:
        theta1 = float(np.angle(np.vdot(ref1, state.omega1)))
    if np.linalg.norm(ref2) > 1e-6 and np.linalg.norm(state.omega2) > 1e-6:
        theta2 = float(np.angle(np.vdot(ref2, state.omega2)))
    if theta1 is not None and theta2 is not None:
        phi = 0.5 * wrap_angle(theta1 - theta2)
        if model.nonlinearity.is_symmetric and abs(phi) > 1e-3:
            raise NumericError(
                f"f1 = f2 requires phi = 0 but measured |phi| = {abs(phi):.2e}"
            )
    diagnostics = {
        "wave_operator": wop,
        "extraction_residual": state.residual,
        "norm_residual": state.diagnostics["norm_limits"].residual,
        "theta": (theta1, theta2),
        "symmetric_phase": 0.5 * wrap_angle(theta1 + theta2)
        if (theta1 is not None and theta2 is not None) else None,
        "grid": grid,
    }
    result = ScatteringResult(alpha=alpha, omega1=state.omega1, omega2=state.omega2,
                              phi=phi, state=state, diagnostics=diagnostics)
    return result


@dataclass
class PopulationSeries:
    """Projected mode populations |Pi+- v|^2 with convergence-rate fits."""

    s: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    limit_plus: float
    limit_minus: float
    exponent_plus: Optional[float]
    exponent_minus: Optional[float]


def mode_populations(traj: Trajectory, grid: ExtractionGrid,
                     model: Optional[ModelConfig] = None) -> PopulationSeries:
    """Populations of the adiabatic branches along the gauge-reduced flow.

    The projectors are evaluated at sigma(s) = s + m(u(s)).  Limits come
    from a weighted 1/s^2 intercept fit; the decay exponent of the
    deviation is fitted on binned log-log data (expected -2 within +-0.4),
    and reported as None when the series is constant to rounding.
    """
    model = model or traj.model
    pts = grid.points
    u = _values_at(traj, pts)
    n = model.dim
    plus = np.empty(len(pts))
    minus = np.empty(len(pts))
    for k, s in enumerate(pts):
        p = np.vdot(u[k, :n], u[k, :n]).real
        q = np.vdot(u[k, n:], u[k, n:]).real
        _, m_small = model.m_scalars(p, q)
        pair = projectors(s, m_small, model.g)
        plus[k] = np.linalg.norm(pair.pi_plus @ u[k]) ** 2
        minus[k] = np.linalg.norm(pair.pi_minus @ u[k]) ** 2
    lim_p, _, _, _ = intercept_inv_s(pts, plus, power=2)
    lim_m, _, _, _ = intercept_inv_s(pts, minus, power=2)
    cut = max(5, len(pts) - len(pts) // 4)
    exp_p = fit_decay_exponent(pts[:cut], plus[:cut] - lim_p.real, floor=1e-12)
    exp_m = fit_decay_exponent(pts[:cut], minus[:cut] - lim_m.real, floor=1e-12)
    return PopulationSeries(s=pts, plus=plus, minus=minus,
                            limit_plus=float(lim_p.real), limit_minus=float(lim_m.real),
                            exponent_plus=exp_p, exponent_minus=exp_m)
