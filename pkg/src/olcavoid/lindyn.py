"""Linear time-invariant perturbation dynamics.

The model is ``x_{t+1} = A x_t + B u_t + D w_t`` in coordinates relative to a
nominal plan. A stabilizing gain ``K`` turns it into the closed loop
``x_{t+1} = Atil x_t + B (u_t - K x_t) + D w_t`` with ``Atil = A + B K``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ContractViolation, ReconstructionUnavailable, StabilizationFailed


def _as_matrix(a, name):
    a = np.array(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ContractViolation(f"{name} must be a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LinSystem:
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        D = _as_matrix(np.eye(A.shape[0]) if self.D is None else self.D, "D")
        if A.shape[0] != A.shape[1]:
            raise ContractViolation(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0] or D.shape[0] != A.shape[0]:
            raise ContractViolation("B and D must have as many rows as A")
        if B.shape[1] > A.shape[0] or np.linalg.matrix_rank(B) != B.shape[1]:
            raise ContractViolation("B must have full column rank with d_u <= d_x")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "D", D)

    @property
    def d_x(self):
        return self.A.shape[0]

    @property
    def d_u(self):
        return self.B.shape[1]

    @property
    def d_w(self):
        return self.D.shape[1]


def _spectral_norm(a):
    return float(np.linalg.norm(a, 2))


@dataclass(frozen=True)
class StabilizedSystem:
    """A system together with a stabilizing feedback gain.

    ``gamma`` and ``kappa`` certify ``||Atil^n|| <= kappa (1 - gamma)^n``. When
    ``||Atil||_2 < 1`` the certificate is the plain spectral norm (``kappa = 1``);
    otherwise it is taken in the Lyapunov-weighted norm ``||S x||`` and
    ``kappa = cond(S)``.
    """

    base: LinSystem
    K: np.ndarray
    Atil: np.ndarray = field(init=False)
    gamma: float = field(init=False)
    kappa: float = field(init=False)
    beta: float = field(init=False)
    weight: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        K = _as_matrix(self.K, "K")
        if K.shape != (self.base.d_u, self.base.d_x):
            raise ContractViolation(f"K must be {self.base.d_u}x{self.base.d_x}, got {K.shape}")
        Atil = self.base.A + self.base.B @ K
        Atil.setflags(write=False)
        gamma, kappa, S = stability_certificate(Atil)
        beta = max(_spectral_norm(Atil), _spectral_norm(self.base.B),
                   _spectral_norm(self.base.D), _spectral_norm(K))
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "Atil", Atil)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "weight", S)

    @property
    def d_x(self):
        return self.base.d_x

    @property
    def d_u(self):
        return self.base.d_u

    @property
    def d_w(self):
        return self.base.d_w


def stability_certificate(Atil):
    """Return ``(gamma, kappa, S)`` with ``||S Atil S^-1||_2 = 1 - gamma``.

    Raises StabilizationFailed when Atil has spectral radius >= 1.
    """
    n = Atil.shape[0]
    norm = _spectral_norm(Atil)
    if norm < 1.0:
        return 1.0 - norm, 1.0, np.eye(n)
    rho = float(np.max(np.abs(np.linalg.eigvals(Atil))))
    if rho >= 1.0:
        raise StabilizationFailed(f"closed loop is unstable (spectral radius {rho:.6f})")
    target = 0.5 * (1.0 + rho)
    # (Atil/target)^T P (Atil/target) - P + I = 0  =>  Atil^T P Atil <= target^2 P
    P = scipy.linalg.solve_discrete_lyapunov((Atil / target).T, np.eye(n))
    P = 0.5 * (P + P.T)
    S = np.real(scipy.linalg.sqrtm(P))
    contracted = _spectral_norm(S @ Atil @ np.linalg.inv(S))
    if contracted >= 1.0:
        raise StabilizationFailed(f"no contracting weighted norm found ({contracted:.6f})")
    return 1.0 - contracted, float(np.linalg.cond(S)), S


@dataclass(frozen=True)
class Bounds:
    """Norm bounds used by the regret analysis.

    ``C_x`` is the radius of the long-run reachable set of the state when
    ``||w|| <= C_w`` and ``||M||_F <= D_M``; it is a property so it tracks ``H`` and
    ``D_M``. With one-padding the residual input satisfies
    ``||u_res|| <= D_M sqrt(H) sqrt(C_w^2 + 1)``, hence the padded ``C_w``.
    """

    C_w: float
    C_u: float
    xi: float
    H: int
    D_M: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("C_w", "C_u", "xi", "D_M", "beta", "gamma"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be strictly positive")
        if self.H < 1:
            raise ContractViolation("H must be >= 1")

    @classmethod
    def for_system(cls, ss: StabilizedSystem, *, C_w, C_u, xi, H, D_M):
        return cls(C_w=C_w, C_u=C_u, xi=xi, H=H, D_M=D_M, beta=ss.beta, gamma=ss.gamma)

    @property
    def C_x(self):
        padded = np.sqrt(self.C_w ** 2 + 1.0)
        return 2.0 * self.beta * self.H * max(self.D_M, 1.0) * padded / self.gamma


def _check_vec(v, n, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ContractViolation(f"{name} must have shape ({n},), got {v.shape}")
    return v


def step(sys: LinSystem, x, u, w):
    """One step of ``A x + B u + D w``."""
    x = _check_vec(x, sys.d_x, "x")
    u = _check_vec(u, sys.d_u, "u")
    w = _check_vec(w, sys.d_w, "w")
    return sys.A @ x + sys.B @ u + sys.D @ w


def reconstruct_disturbance(sys: LinSystem, x_t, u_t, x_next):
    """Recover ``w_t = D^{-1}(x_{t+1} - A x_t - B u_t)``."""
    if sys.d_w != sys.d_x:
        raise ReconstructionUnavailable("D is not square")
    x_t = _check_vec(x_t, sys.d_x, "x_t")
    u_t = _check_vec(u_t, sys.d_u, "u_t")
    x_next = _check_vec(x_next, sys.d_x, "x_next")
    resid = x_next - sys.A @ x_t - sys.B @ u_t
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(sys.D, check_finite=False)
    except (ValueError, np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
        raise ReconstructionUnavailable(str(exc)) from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * max(1.0, np.abs(sys.D).max())):
        raise ReconstructionUnavailable("D is singular")
    return scipy.linalg.lu_solve(lu, resid, check_finite=False)


def riccati_gain(A, B, Q, R, *, tol=1e-10, max_iter=10_000):
    """Infinite-horizon discrete LQR gain by fixed-point Riccati iteration.

    Returns ``K`` with the convention ``u = K x`` (so ``K = -(R + B'PB)^-1 B'PA``).
    """
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    P = Q.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        return _riccati_loop(A, B, Q, R, P, tol, max_iter)


def _riccati_loop(A, B, Q, R, P, tol, max_iter):
    for _ in range(max_iter):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ gain
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            break
        if np.max(np.abs(P_next - P)) <= tol * max(1.0, np.max(np.abs(P_next))):
            P = P_next
            BtP = B.T @ P
            return -np.linalg.solve(R + BtP @ B, BtP @ A), P
        P = P_next
    raise StabilizationFailed(f"Riccati iteration did not converge in {max_iter} iterations")


def stabilize(sys: LinSystem, Q_lqr, R_lqr):
    """Stabilize ``sys`` with the LQR gain for ``(Q_lqr, R_lqr)``."""
    Q = np.atleast_2d(np.asarray(Q_lqr, dtype=float))
    R = np.atleast_2d(np.asarray(R_lqr, dtype=float))
    if Q.shape == (1, 1):
        Q = Q[0, 0] * np.eye(sys.d_x)
    if R.shape == (1, 1):
        R = R[0, 0] * np.eye(sys.d_u)
    K, _ = riccati_gain(sys.A, sys.B, Q, R)
    return StabilizedSystem(sys, K)


def with_gain(sys: LinSystem, K):
    """Wrap a user-supplied gain; raises StabilizationFailed if it does not stabilize."""
    return StabilizedSystem(sys, K)


def double_integrator(dt):
    """Planar double integrator with state (px, py, vx, vy) and input (ax, ay)."""
    if not dt > 0:
        raise ContractViolation("dt must be positive")
    I2 = np.eye(2)
    Z2 = np.zeros((2, 2))
    A = np.block([[I2, dt * I2], [Z2, I2]])
    B = np.vstack([0.5 * dt ** 2 * I2, dt * I2])
    return LinSystem(A, B, np.eye(4))


def system_from_config(cfg: dict):
    """Build a LinSystem (and optional gain) from a mapping of row-major lists.

    Recognized keys: ``A``, ``B``, ``D``, ``K``, or ``preset = "double_integrator"``
    with ``dt``. Returns ``(LinSystem, K or None)``.
    """
    if cfg.get("preset") == "double_integrator":
        sys = double_integrator(float(cfg.get("dt", 0.1)))
    elif "preset" in cfg:
        raise ContractViolation(f"unknown system preset {cfg['preset']!r}")
    else:
        if "A" not in cfg or "B" not in cfg:
            raise ContractViolation("system config needs A and B")
        sys = LinSystem(cfg["A"], cfg["B"], cfg.get("D"))
    K = cfg.get("K")
    return sys, (None if K is None else np.array(K, dtype=float))
