"""The nonlinear two-level system and its long-time integration.

The dynamical unknown is u = (u1, u2) in H^2 with H = C^n, evolving under

    -i du/ds = V(s) u + delta * diag(F1(u) Id, F2(u) Id) u,
    V(s) = s J + K,   Fj(u) = fj(|u1|^2, |u2|^2),

with the conserved total norm |u1|^2 + |u2|^2.  Integration uses an
adaptive embedded Runge-Kutta scheme of order 8(5,3) (scipy's DOP853) and
accumulates the gauge integral of M(u) = (delta/2)(F1+F2) with the same
quadrature order by augmenting the state vector.

Model presets mirror the three physical reductions (two-level condensate,
accelerated optical lattice, double well).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError, NumericError
from .operators import CouplingOperator, scalar_coupling

DEFAULT_TOL = 1e-11
DEFAULT_S_MAX = 200.0


@dataclass(frozen=True)
class Affine:
    """Affine nonlinearity coefficient set: f(p, q) = c0 + cp*p + cq*q."""

    c0: float = 0.0
    cp: float = 0.0
    cq: float = 0.0

    def __call__(self, p, q):
        return self.c0 + self.cp * p + self.cq * q


NonlinearFn = Union[Affine, Callable[[float, float], float]]


@dataclass(frozen=True)
class NonlinearitySpec:
    """Nonlinearity data: strength delta and the two functions f1, f2.

    Each fj is either an :class:`Affine` coefficient triple or an opaque
    callable (p, q) -> real defined for p, q >= 0.  The affine form covers
    all built-in presets exactly.
    """

    delta: float
    f1: NonlinearFn = Affine()
    f2: NonlinearFn = Affine()

    def __post_init__(self):
        for name, f in (("f1", self.f1), ("f2", self.f2)):
            for p, q in ((0.0, 0.0), (0.3, 0.7), (1.0, 0.0), (0.5, 0.5)):
                val = f(p, q)
                if not np.isfinite(val) or abs(np.imag(complex(val))) > 0:
                    raise ValueError(f"{name}({p}, {q}) is not a finite real number")

    @property
    def is_symmetric(self) -> bool:
        """True when f1 and f2 are verifiably the same function."""
        if isinstance(self.f1, Affine) and isinstance(self.f2, Affine):
            return self.f1 == self.f2
        return self.f1 is self.f2


def linear_spec() -> NonlinearitySpec:
    return NonlinearitySpec(delta=0.0)


@dataclass(frozen=True)
class ModelConfig:
    """A complete model: coupling G, nonlinearity, cutoff radius, provenance."""

    g: CouplingOperator
    nonlinearity: NonlinearitySpec
    r: float
    provenance: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.g.dim

    @property
    def delta(self) -> float:
        return self.nonlinearity.delta

    def f_values(self, p: float, q: float) -> tuple:
        """(F1, F2) at squared norms (p, q)."""
        return float(self.nonlinearity.f1(p, q)), float(self.nonlinearity.f2(p, q))

    def m_scalars(self, p: float, q: float) -> tuple:
        """(M, m) = (delta/2)(F1 +- F2) at squared norms (p, q)."""
        f1, f2 = self.f_values(p, q)
        d = self.nonlinearity.delta
        return 0.5 * d * (f1 + f2), 0.5 * d * (f1 - f2)

    def linearized(self) -> "ModelConfig":
        """The delta = 0 model with the same coupling and cutoff."""
        return ModelConfig(
            g=self.g,
            nonlinearity=linear_spec(),
            r=self.r,
            provenance={**self.provenance, "linearized": True},
        )


def default_radius(g: CouplingOperator) -> float:
    # 2*sigma_max >= sqrt(2)*sigma_max keeps Theta_R = Id with margin.
    return max(1.0, 2.0 * g.norm)


def make_model(g: CouplingOperator, nonlinearity: NonlinearitySpec, r: Optional[float] = None,
               provenance: Optional[dict] = None) -> ModelConfig:
    return ModelConfig(
        g=g,
        nonlinearity=nonlinearity,
        r=default_radius(g) if r is None else float(r),
        provenance=provenance or {},
    )


@dataclass(frozen=True)
class TwoLevelState:
    """Normalized pair (u1, u2) at time s."""

    u1: np.ndarray
    u2: np.ndarray
    s: float = 0.0

    def __post_init__(self):
        u1 = np.atleast_1d(np.asarray(self.u1, dtype=complex))
        u2 = np.atleast_1d(np.asarray(self.u2, dtype=complex))
        if u1.shape != u2.shape or u1.ndim != 1:
            raise ValueError("u1 and u2 must be 1-d arrays of the same length")
        total = np.vdot(u1, u1).real + np.vdot(u2, u2).real
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"state is not normalized: |u1|^2+|u2|^2 = {total!r}")
        u1.flags.writeable = False
        u2.flags.writeable = False
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)

    @classmethod
    def normalized(cls, u1, u2, s: float = 0.0) -> "TwoLevelState":
        u1 = np.atleast_1d(np.asarray(u1, dtype=complex))
        u2 = np.atleast_1d(np.asarray(u2, dtype=complex))
        total = np.sqrt(np.vdot(u1, u1).real + np.vdot(u2, u2).real)
        if total == 0.0:
            raise ValueError("cannot normalize the zero state")
        return cls(u1 / total, u2 / total, s)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.u1, self.u2])

    @property
    def norms_sq(self) -> tuple:
        return (np.vdot(self.u1, self.u1).real, np.vdot(self.u2, self.u2).real)


def split_components(u: np.ndarray, n: int) -> tuple:
    return u[:n], u[n:]


def rhs(s: float, u: np.ndarray, model: ModelConfig) -> np.ndarray:
    """du/ds = i (V(s) u + delta F(u) u) for the flat vector u = (u1, u2)."""
    n = model.dim
    u1, u2 = u[:n], u[n:]
    p = np.vdot(u1, u1).real
    q = np.vdot(u2, u2).real
    f1, f2 = model.f_values(p, q)
    d = model.delta
    g = model.g.matrix
    du = np.empty_like(u)
    du[:n] = 1j * ((s + d * f1) * u1 + g @ u2)
    du[n:] = 1j * (g.conj().T @ u1 - (s - d * f2) * u2)
    return du


def compute_Mm(state, model: ModelConfig) -> tuple:
    """(M, m) evaluated on a TwoLevelState or flat state vector."""
    if isinstance(state, TwoLevelState):
        p, q = state.norms_sq
    else:
        u = np.asarray(state, dtype=complex)
        n = model.dim
        p = np.vdot(u[:n], u[:n]).real
        q = np.vdot(u[n:], u[n:]).real
    return model.m_scalars(p, q)


@dataclass
class Trajectory:
    """A single integration run with per-sample gauge integral.

    ``steps_*`` hold (a subsample of) the accepted solver steps, which are
    exact solver states; ``s``/``u``/``gauge`` hold values interpolated on
    the requested evaluation grid.  ``gauge`` entries are the accumulated
    integral of M(u) from ``s_from``; ``gauge_at_origin`` rebases them so
    that int_0^s M = gauge(s) - gauge_at_origin whenever 0 lies in the span.
    """

    model: ModelConfig
    s_from: float
    s_to: float
    tol: float
    steps_s: np.ndarray
    steps_u: np.ndarray
    steps_gauge: np.ndarray
    s: Optional[np.ndarray]
    u: Optional[np.ndarray]
    gauge: Optional[np.ndarray]
    extra: Optional[np.ndarray]
    final_u: np.ndarray
    final_gauge: float
    final_extra: float
    gauge_at_origin: float
    nsteps: int
    nfev: int
    norm_drift: float
    max_step_drift: float
    sol: object = None

    @property
    def span(self) -> tuple:
        return (min(self.s_from, self.s_to), max(self.s_from, self.s_to))

    def u_at(self, s):
        """Dense evaluation of the state (requires the run to keep `sol`)."""
        if self.sol is None:
            raise NumericError("trajectory was integrated without dense output")
        y = np.atleast_2d(np.asarray(self.sol(s)).T)
        return y[:, : 2 * self.model.dim]

    def gauge_at(self, s):
        if self.sol is None:
            raise NumericError("trajectory was integrated without dense output")
        y = np.atleast_2d(np.asarray(self.sol(s)).T)
        return y[:, 2 * self.model.dim].real

    def norms_sq_at_samples(self) -> tuple:
        n = self.model.dim
        p = np.einsum("ij,ij->i", self.u[:, :n].conj(), self.u[:, :n]).real
        q = np.einsum("ij,ij->i", self.u[:, n:].conj(), self.u[:, n:]).real
        return p, q


def _subsample(idx_len: int, max_store: int) -> np.ndarray:
    if idx_len <= max_store:
        return np.arange(idx_len)
    idx = np.linspace(0, idx_len - 1, max_store).round().astype(int)
    return np.unique(idx)


def integrate(state0, s_from: float, s_to: float, model: ModelConfig,
              tol: float = DEFAULT_TOL, s_eval: Optional[Sequence[float]] = None,
              extra_quad: Optional[Callable[[float, np.ndarray], float]] = None,
              keep_dense: bool = False, max_store: int = 2048) -> Trajectory:
    """Integrate the system from s_from to s_to.

    Parameters
    ----------
    state0:
        TwoLevelState or flat complex vector of length 2n, the value at
        ``s_from``.
    tol:
        Absolute and relative tolerance for the embedded RK integrator,
        required to lie in [1e-13, 1e-6].
    s_eval:
        Optional evaluation grid (must lie inside the span); values there
        are interpolated with the integrator's dense output.
    extra_quad:
        Optional scalar integrand (s, u) -> real accumulated alongside the
        gauge integral (used for the perturbative quadratures).
    keep_dense:
        Keep the dense-output object for later evaluation.

    Raises
    ------
    IntegrationError
        On step-size underflow; the exception carries the last good state.
    """
    if not (1e-13 <= tol <= 1e-6):
        raise ValueError(f"tol must be in [1e-13, 1e-6], got {tol}")
    if s_to == s_from:
        raise ValueError("empty integration span")
    u0 = state0.flat if isinstance(state0, TwoLevelState) else np.asarray(state0, dtype=complex)
    n = model.dim
    if u0.shape != (2 * n,):
        raise ValueError(f"state vector has shape {u0.shape}, expected ({2 * n},)")

    has_extra = extra_quad is not None
    y0 = np.concatenate([u0, [0.0], [0.0] if has_extra else []]).astype(complex)
    nn = 2 * n

    def f(s, y):
        u = y[:nn]
        du = rhs(s, u, model)
        p = np.vdot(u[:n], u[:n]).real
        q = np.vdot(u[n:], u[n:]).real
        m_big, _ = model.m_scalars(p, q)
        if has_extra:
            return np.concatenate([du, [m_big, extra_quad(s, u)]])
        return np.concatenate([du, [m_big]])

    need_dense = keep_dense or s_eval is not None
    res = solve_ivp(f, (s_from, s_to), y0, method="DOP853", rtol=tol, atol=tol,
                    dense_output=need_dense)
    if not res.success:
        last_s = float(res.t[-1]) if res.t.size else s_from
        last_u = res.y[:nn, -1] if res.t.size else u0
        raise IntegrationError(
            f"integration failed at s = {last_s:.6g}: {res.message}",
            s=last_s, state=last_u,
        )

    ts = res.t
    ys = res.y.T
    norm0 = np.vdot(u0, u0).real
    norms = np.einsum("ij,ij->i", ys[:, :nn].conj(), ys[:, :nn]).real
    drift = abs(norms[-1] - norm0)
    max_drift = float(np.max(np.abs(norms - norm0)))
    bound = 100.0 * tol * abs(s_to - s_from)
    if drift > max(bound, 1e-14):
        raise NumericError(
            f"norm drift {drift:.3e} exceeds the contract bound {bound:.3e}"
        )

    keep = _subsample(len(ts), max_store)
    samples = eval_u = eval_gauge = eval_extra = None
    if s_eval is not None:
        samples = np.sort(np.asarray(s_eval, dtype=float))
        if s_to < s_from:
            samples = samples[::-1]
        lo, hi = min(s_from, s_to), max(s_from, s_to)
        if samples.size and (samples.min() < lo - 1e-9 or samples.max() > hi + 1e-9):
            raise ValueError("s_eval points fall outside the integration span")
        yy = res.sol(samples).T if samples.size else np.empty((0, y0.size))
        eval_u = yy[:, :nn]
        eval_gauge = yy[:, nn].real
        eval_extra = yy[:, nn + 1].real if has_extra else None

    if res.sol is not None:
        lo, hi = min(s_from, s_to), max(s_from, s_to)
        gauge_origin = float(res.sol(0.0)[nn].real) if lo <= 0.0 <= hi else 0.0
    else:
        gauge_origin = 0.0

    return Trajectory(
        model=model, s_from=s_from, s_to=s_to, tol=tol,
        steps_s=ts[keep], steps_u=ys[keep][:, :nn], steps_gauge=ys[keep][:, nn].real,
        s=samples, u=eval_u, gauge=eval_gauge, extra=eval_extra,
        final_u=ys[-1, :nn].copy(), final_gauge=float(ys[-1, nn].real),
        final_extra=float(ys[-1, nn + 1].real) if has_extra else 0.0,
        gauge_at_origin=gauge_origin,
        nsteps=len(ts) - 1, nfev=res.nfev,
        norm_drift=float(drift), max_step_drift=max_drift,
        sol=res.sol if keep_dense else None,
    )


@dataclass
class GaugeTrajectory:
    """Samples of v(s) = u(s) exp(-i int_0^s M), the gauge-reduced unknown."""

    s: np.ndarray
    v: np.ndarray
    model: ModelConfig


def gauge_to_v(traj: Trajectory, model: Optional[ModelConfig] = None) -> GaugeTrajectory:
    """Apply the gauge transform removing the scalar part M of the nonlinearity.

    Component norms are unchanged sample by sample (the factor is a unit
    scalar).  Uses the evaluation-grid samples when present, otherwise the
    stored solver steps.
    """
    model = model or traj.model
    if traj.s is not None:
        s, u, gauge = traj.s, traj.u, traj.gauge
    else:
        s, u, gauge = traj.steps_s, traj.steps_u, traj.steps_gauge
    phase = np.exp(-1j * (gauge - traj.gauge_at_origin))
    return GaugeTrajectory(s=np.asarray(s, float), v=u * phase[:, None], model=model)


# ---------------------------------------------------------------------------
# Presets from the physical reductions
# ---------------------------------------------------------------------------

def preset_physics(gamma1: float, z: float, delta_phys: float) -> ModelConfig:
    """Two-level condensate model with level separation gamma1*t and coupling z.

    After s = t*sqrt(gamma1): G = z/sqrt(gamma1), and
    Fj(u) = (-1)^j * delta * gamma1^{-1/2} * (|u2|^2 - |u1|^2).
    """
    if gamma1 <= 0:
        raise ValueError("gamma1 must be positive")
    root = np.sqrt(gamma1)
    g = scalar_coupling(z / root)
    spec = NonlinearitySpec(
        delta=delta_phys / root,
        f1=Affine(0.0, 1.0, -1.0),
        f2=Affine(0.0, -1.0, 1.0),
    )
    prov = {
        "preset": "physics",
        "gamma1": gamma1, "z": z, "delta_phys": delta_phys,
        "transition_coefficient": float(np.exp(-np.pi * z * z / gamma1)),
    }
    return make_model(g, spec, provenance=prov)


def preset_bloch(alpha: float, v: float, eps: float) -> ModelConfig:
    """Accelerated optical-lattice model reduced to the band-edge pair.

    After s = t*sqrt(alpha/2): G = v/sqrt(2 alpha) and
    F(u) = eps (2 alpha)^{-1/2} diag(|u2|^2, |u1|^2).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    root = np.sqrt(2.0 * alpha)
    g = scalar_coupling(v / root)
    spec = NonlinearitySpec(delta=eps / root, f1=Affine(cq=1.0), f2=Affine(cp=1.0))
    prov = {
        "preset": "bloch",
        "alpha": alpha, "v": v, "eps": eps,
        "transition_coefficient": float(np.exp(-np.pi * v * v / (2.0 * alpha))),
    }
    return make_model(g, spec, provenance=prov)


def preset_doublewell(omega: float, alpha: float, delta_phys: float) -> ModelConfig:
    """Double-well envelope model: G = -omega/sqrt(alpha), Fj(u) = |uj|^2/sqrt(alpha)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    root = np.sqrt(alpha)
    g = scalar_coupling(-omega / root)
    spec = NonlinearitySpec(delta=delta_phys / root, f1=Affine(cp=1.0), f2=Affine(cq=1.0))
    prov = {
        "preset": "doublewell",
        "omega": omega, "alpha": alpha, "delta_phys": delta_phys,
        "transition_coefficient": float(np.exp(-np.pi * omega * omega / alpha)),
    }
    return make_model(g, spec, provenance=prov)
