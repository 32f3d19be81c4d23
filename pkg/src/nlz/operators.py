"""Finite-dimensional operator kernel for the two-level avoided-crossing system.

Everything here is plain dense linear algebra on n x n (coupling) and
2n x 2n (block) complex matrices:

- ``CouplingOperator`` wraps the coupling G together with its Hermitian
  grams GG* and G*G;
- ``hermitian_funcalc`` is the scalar functional calculus chi(A) through an
  eigendecomposition;
- ``phase_unitary`` builds exp(+-i (s^2/2 + A/2 * ln|s|));
- ``theta_cutoff`` builds the smooth spectral cutoff Theta_R;
- ``projectors`` builds the adiabatic frame (Lambda, Pi+, Pi-) of
  V(sigma) = sigma*J + K.

All values are immutable after construction and every operation is a pure
function, so the module is safe to use from concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError

HERMITICITY_TOL = 1e-10


def _as_complex_matrix(m) -> np.ndarray:
    a = np.atleast_2d(np.asarray(m, dtype=complex))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def bump(u):
    """Smooth bump profile: 1 on [-1/2, 1/2], 0 outside (-1, 1).

    On 1/2 < |u| < 1 the profile is exp(1 - 1/(1 - (2|u|-1)^2)), which glues
    smoothly (all derivatives vanish) at both ends.
    """
    u = np.abs(np.asarray(u, dtype=float))
    out = np.zeros_like(u)
    out[u <= 0.5] = 1.0
    mid = (u > 0.5) & (u < 1.0)
    t = 2.0 * u[mid] - 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - t * t))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CouplingOperator:
    """The coupling operator G on H = C^n, with derived Hermitian blocks.

    Attributes
    ----------
    matrix:
        The n x n complex matrix G.
    kind:
        One of ``scalar-real``, ``scalar-complex``, ``quaternion-2x2``,
        ``general-matrix``; informational tag only.
    """

    matrix: np.ndarray
    kind: str = "general-matrix"
    _svals: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = _as_complex_matrix(self.matrix)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        sv = np.linalg.svd(m, compute_uv=False)
        sv.flags.writeable = False
        object.__setattr__(self, "_svals", sv)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def adjoint(self) -> np.ndarray:
        return self.matrix.conj().T

    @property
    def gram_left(self) -> np.ndarray:
        """GG*, Hermitian positive semidefinite."""
        return self.matrix @ self.matrix.conj().T

    @property
    def gram_right(self) -> np.ndarray:
        """G*G, Hermitian positive semidefinite."""
        return self.matrix.conj().T @ self.matrix

    @property
    def norm(self) -> float:
        """Largest singular value of G."""
        return float(self._svals[0]) if self._svals.size else 0.0

    @property
    def is_zero(self) -> bool:
        return self.norm == 0.0


def scalar_coupling(z) -> CouplingOperator:
    """Coupling G = z on H = C (cases G real and G complex)."""
    z = complex(z)
    kind = "scalar-real" if z.imag == 0.0 else "scalar-complex"
    return CouplingOperator(np.array([[z]]), kind=kind)


def quaternion_coupling(z1, z2, z3, z4) -> CouplingOperator:
    """Quaternion coupling q(z) = z1 + z2 i + z3 j + z4 k as a 2x2 matrix.

    With the standard embedding, GG* = G*G = |z|^2 Id, so the commutation
    property holds trivially.
    """
    g = np.array(
        [
            [z1 + 1j * z2, z3 + 1j * z4],
            [-z3 + 1j * z4, z1 - 1j * z2],
        ]
    )
    return CouplingOperator(g, kind="quaternion-2x2")


def matrix_coupling(m) -> CouplingOperator:
    return CouplingOperator(_as_complex_matrix(m), kind="general-matrix")


def _check_hermitian(a: np.ndarray, tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Validate Hermiticity to `tol` (relative) and return the symmetrized matrix."""
    defect = np.max(np.abs(a - a.conj().T))
    scale = 1.0 + np.max(np.abs(a))
    if defect > tol * scale:
        raise NumericError(
            f"matrix is not Hermitian: defect {defect:.3e} exceeds {tol:.1e}*(1+|A|)"
        )
    return 0.5 * (a + a.conj().T)


def hermitian_funcalc(a, f) -> np.ndarray:
    """Apply a scalar function to a Hermitian PSD matrix by eigendecomposition.

    Returns Q diag(f(d_i)) Q* where A = Q diag(d_i) Q*.  Eigenvalues below
    -1e-10*|A| raise; small negative eigenvalues are clamped to zero so that
    functions defined on [0, inf) stay applicable.
    """
    a = _check_hermitian(_as_complex_matrix(a))
    try:
        d, q = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    scale = max(1.0, float(np.max(np.abs(d)))) if d.size else 1.0
    if np.any(d < -1e-10 * scale):
        raise NumericError(f"matrix is not positive semidefinite: min eigenvalue {d.min():.3e}")
    d = np.clip(d, 0.0, None)
    fd = np.asarray([f(x) for x in d], dtype=complex)
    return (q * fd) @ q.conj().T


def phase_unitary(s: float, a, sign: int = +1) -> np.ndarray:
    """Unitary exp(sign * i * (s^2/2 + A/2 * ln|s|)) for Hermitian PSD A.

    The log term makes s = 0 a genuine singularity; it is rejected.
    """
    if s == 0.0:
        raise ValueError("phase_unitary is singular at s = 0 (logarithmic phase)")
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    s2 = 0.5 * s * s
    logs = 0.5 * np.log(abs(s))
    return hermitian_funcalc(a, lambda lam: np.exp(1j * sign * (s2 + lam * logs)))


def block_j(n: int) -> np.ndarray:
    """J = diag(Id_n, -Id_n)."""
    return np.diag(np.concatenate([np.ones(n), -np.ones(n)])).astype(complex)


def block_k(g: CouplingOperator) -> np.ndarray:
    """K = V(0) = [[0, G], [G*, 0]]."""
    n = g.dim
    k = np.zeros((2 * n, 2 * n), dtype=complex)
    k[:n, n:] = g.matrix
    k[n:, :n] = g.adjoint
    return k


def v_matrix(s: float, g: CouplingOperator) -> np.ndarray:
    """V(s) = s J + K, Hermitian for real s."""
    return s * block_j(g.dim) + block_k(g)


def block_diag2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """diag(A, B) acting on H^2 (both blocks n x n)."""
    n = a.shape[0]
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    out[:n, :n] = a
    out[n:, n:] = b
    return out


def theta_cutoff(r: float, g: CouplingOperator) -> np.ndarray:
    """Spectral cutoff Theta_R = diag(theta(GG*/R^2), theta(G*G/R^2)).

    Commutes with V(s) for all s.  When R >= sqrt(2) * (largest singular
    value of G) every spectral argument is <= 1/2, so the result is exactly
    the identity.
    """
    if r <= 0:
        raise ValueError("cutoff radius R must be positive")
    r2 = r * r
    n = g.dim
    if g.norm ** 2 <= 0.5 * r2:
        return np.eye(2 * n, dtype=complex)
    top = hermitian_funcalc(g.gram_left, lambda lam: bump(lam / r2))
    bot = hermitian_funcalc(g.gram_right, lambda lam: bump(lam / r2))
    return block_diag2(top, bot)


@dataclass(frozen=True)
class ProjectorPair:
    """Adiabatic frame of V(sigma): Lambda and the orthogonal projectors Pi+-.

    Lambda = diag(sqrt(sigma^2 + GG*), sqrt(sigma^2 + G*G)) is Hermitian
    positive definite and Pi+- = (Id +- Lambda^{-1} V(sigma)) / 2 project on
    the +-Lambda spectral branches.
    """

    pi_plus: np.ndarray
    pi_minus: np.ndarray
    lam: np.ndarray
    sigma: float

    def __post_init__(self):
        for m in (self.pi_plus, self.pi_minus, self.lam):
            m.flags.writeable = False


def projectors(s: float, m_value: float, g: CouplingOperator) -> ProjectorPair:
    """Build (Pi+, Pi-, Lambda) at sigma = s + m_value.

    Raises if Lambda is singular, i.e. sigma = 0 while G has a zero singular
    value.
    """
    sigma = s + m_value
    s2 = sigma * sigma
    smin = min(float(g._svals[-1]) if g._svals.size else 0.0, g.norm)
    if s2 + smin * smin <= 0.0:
        raise NumericError("Lambda is singular: sigma = 0 and G has a zero singular value")
    lam_top = hermitian_funcalc(g.gram_left, lambda x: np.sqrt(s2 + x))
    lam_bot = hermitian_funcalc(g.gram_right, lambda x: np.sqrt(s2 + x))
    lam = block_diag2(lam_top, lam_bot)
    if np.linalg.cond(lam) > 1e14:
        raise NumericError("Lambda is numerically singular")
    v = v_matrix(sigma, g)
    lam_inv_v = np.linalg.solve(lam, v)
    eye = np.eye(2 * g.dim, dtype=complex)
    pi_plus = 0.5 * (eye + lam_inv_v)
    pi_minus = 0.5 * (eye - lam_inv_v)
    return ProjectorPair(pi_plus=pi_plus, pi_minus=pi_minus, lam=lam, sigma=sigma)
