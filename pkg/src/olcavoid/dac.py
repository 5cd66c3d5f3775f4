"""Disturbance-action policies and counterfactual state evaluation.

A policy is a stack of gains ``M[1..H]``, each ``d_u x (d_w + 1)``. Disturbances
are one-padded, ``wt = (w, 1)``, so the last column of every gain acts as a
constant bias and the action is

    u_t = K x_t + sum_{i=1..H} M[i] wt_{t-i}.

Internally the stack is kept as an ``(H, d_u, d_w + 1)`` array. The flat form
``[M[1] | M[2] | ... | M[H]]`` has shape ``(d_u, H (d_w + 1))`` and its
column-major vectorization is the decision vector ``m`` of the trust-region
subproblems, so that ``M_flat @ b == kron(b, I_du) @ m``.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .lindyn import StabilizedSystem

_NORM_SLACK = 1e-9


@dataclass(frozen=True)
class DacPolicy:
    M: np.ndarray
    D_M: float

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        if M.ndim != 3 or M.shape[0] < 1:
            raise ContractViolation(f"M must have shape (H, d_u, d_w+1), got {M.shape}")
        if not self.D_M > 0:
            raise ContractViolation("D_M must be positive")
        if np.linalg.norm(M) > self.D_M * (1 + _NORM_SLACK) + 1e-15:
            raise ContractViolation(
                f"||M||_F = {np.linalg.norm(M):.6g} exceeds D_M = {self.D_M:.6g}")
        M.setflags(write=False)
        object.__setattr__(self, "M", M)

    @property
    def H(self):
        return self.M.shape[0]

    @property
    def d_u(self):
        return self.M.shape[1]

    @property
    def d_w(self):
        return self.M.shape[2] - 1

    @property
    def flat(self):
        """``[M[1] | ... | M[H]]`` as a ``d_u x H(d_w+1)`` matrix."""
        return np.concatenate(list(self.M), axis=1)

    @property
    def vec(self):
        return self.flat.ravel(order="F")

    @property
    def bias(self):
        """Constant action produced by the one-pad columns."""
        return self.M[:, :, -1].sum(axis=0)

    @classmethod
    def zeros(cls, H, d_u, d_w, D_M):
        return cls(np.zeros((H, d_u, d_w + 1)), D_M)

    @classmethod
    def from_flat(cls, flat, H, D_M, *, project=False):
        flat = np.asarray(flat, dtype=float)
        d_u, cols = flat.shape
        if cols % H:
            raise ContractViolation(f"flat width {cols} is not a multiple of H={H}")
        if project:
            flat = project_ball(flat, D_M)
        return cls(flat.reshape(d_u, H, cols // H).transpose(1, 0, 2), D_M)

    @classmethod
    def from_vec(cls, m, H, d_u, D_M, *, project=False):
        m = np.asarray(m, dtype=float)
        return cls.from_flat(m.reshape(d_u, -1, order="F"), H, D_M, project=project)

    def to_dict(self):
        return {"H": self.H, "D_M": self.D_M, "d_u": self.d_u, "d_w": self.d_w,
                "M": [blk.tolist() for blk in self.M]}

    @classmethod
    def from_dict(cls, d):
        M = np.array(d["M"], dtype=float).reshape(int(d["H"]), int(d["d_u"]), int(d["d_w"]) + 1)
        return cls(M, float(d["D_M"]))


def project_ball(a, radius):
    """Euclidean (Frobenius) projection onto the ball of the given radius."""
    n = np.linalg.norm(a)
    return a if n <= radius else a * (radius / n)


def fold_bias(policy: DacPolicy, b):
    """Return a policy whose one-pad columns additionally produce the constant ``b``."""
    M = np.array(policy.M)
    M[0, :, -1] += np.asarray(b, dtype=float)
    return DacPolicy(M, max(policy.D_M, float(np.linalg.norm(M))))


def save_policy(policy: DacPolicy, path):
    with open(path, "w") as fh:
        json.dump(policy.to_dict(), fh, indent=1)


def load_policy(path):
    with open(path) as fh:
        return DacPolicy.from_dict(json.load(fh))


class DisturbanceHistory:
    """Newest-first buffer of one-padded disturbances.

    Entries older than what has been observed read as ``(0, ..., 0, 1)``, i.e. a
    zero disturbance that still drives the bias channel.
    """

    def __init__(self, d_w, capacity):
        if capacity < 1:
            raise ContractViolation("capacity must be >= 1")
        self.d_w = d_w
        self.capacity = capacity
        self._buf = deque(maxlen=capacity)
        self.t = 0
        self._pad = np.zeros(d_w + 1)
        self._pad[-1] = 1.0
        self._pad.setflags(write=False)

    def push(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.d_w,):
            raise ContractViolation(f"w must have shape ({self.d_w},), got {w.shape}")
        self._buf.appendleft(np.append(w, 1.0))
        self.t += 1

    def __len__(self):
        return len(self._buf)

    def padded(self, lag):
        """One-padded disturbance ``lag`` steps back from the newest (lag 0)."""
        if lag < len(self._buf):
            return self._buf[lag]
        return self._pad

    def stack(self, n, start=0):
        """Concatenate ``padded(start), ..., padded(start + n - 1)``."""
        return np.concatenate([self.padded(start + k) for k in range(n)])

    def snapshot(self):
        other = DisturbanceHistory(self.d_w, self.capacity)
        other._buf = deque(self._buf, maxlen=self.capacity)
        other.t = self.t
        return other


def residual(policy: DacPolicy, hist: DisturbanceHistory):
    """``sum_i M[i] wt_{t-i}`` given a history whose newest entry is ``wt_{t-1}``."""
    return policy.flat @ hist.stack(policy.H)


def control(policy: DacPolicy, ss: StabilizedSystem, x_t, hist: DisturbanceHistory, bias=None):
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape != (ss.d_x,) or policy.d_u != ss.d_u or policy.d_w != ss.d_w:
        raise ContractViolation("policy, state and system dimensions disagree")
    u = ss.K @ x_t + residual(policy, hist)
    if bias is not None:
        u = u + np.asarray(bias, dtype=float)
    return u


def _padded_D(ss):
    return np.hstack([ss.base.D, np.zeros((ss.d_x, 1))])


def psi(ss: StabilizedSystem, M_window, i):
    """Disturbance-to-state transfer matrix for lag ``i``.

    ``M_window[j]`` is the policy played at time ``t - j`` for ``j = 0..H``.
    """
    H = M_window[0].H
    if len(M_window) != H + 1:
        raise ContractViolation(f"M_window must hold H+1={H + 1} policies")
    if not 0 <= i <= 2 * H:
        raise ContractViolation(f"lag {i} outside [0, {2 * H}]")
    Atil, B = ss.Atil, ss.base.B
    out = np.zeros((ss.d_x, ss.d_w + 1))
    if i <= H:
        out += np.linalg.matrix_power(Atil, i) @ _padded_D(ss)
    for j in range(H + 1):
        k = i - j
        if 1 <= k <= H:
            out += np.linalg.matrix_power(Atil, j) @ B @ M_window[j].M[k - 1]
    return out


def counterfactual_state(ss: StabilizedSystem, M_window, hist: DisturbanceHistory):
    """Truncated-memory estimate ``y_{t+1} = sum_{i=0..2H} Psi_i wt_{t-i}``.

    ``hist`` must have ``wt_t`` as its newest entry. The ``Atil^{H+1} x_{t-H}``
    term of the exact state is dropped. No input was applied before the first
    pushed disturbance, so window slots older than that count as zero policies;
    with a zero initial state the estimate is then exact for ``t <= H``.
    """
    H = M_window[0].H
    if hist.t < H + 1:
        zero = DacPolicy.zeros(H, M_window[0].d_u, M_window[0].d_w, M_window[0].D_M)
        M_window = [m if j < hist.t else zero for j, m in enumerate(M_window)]
    y = np.zeros(ss.d_x)
    for i in range(2 * H + 1):
        y += psi(ss, M_window, i) @ hist.padded(i)
    return y


def counterfactual_rollout(ss: StabilizedSystem, policy: DacPolicy, disturbances, x0=None):
    """Replay a disturbance log under one fixed policy with the exact recursion.

    Returns ``(states, residuals)`` where ``states[t]`` is ``x_t`` for
    ``t = 0..T`` and ``residuals[t]`` is the residual input applied at ``t``.
    """
    W = np.atleast_2d(np.asarray(disturbances, dtype=float))
    T = W.shape[0]
    x = np.zeros(ss.d_x) if x0 is None else np.asarray(x0, dtype=float)
    hist = DisturbanceHistory(ss.d_w, policy.H)
    flat = policy.flat
    states = np.empty((T + 1, ss.d_x))
    residuals = np.empty((T, ss.d_u))
    states[0] = x
    for t in range(T):
        r = flat @ hist.stack(policy.H)
        residuals[t] = r
        x = ss.Atil @ x + ss.base.B @ r + ss.base.D @ W[t]
        states[t + 1] = x
        hist.push(W[t])
    return states, residuals
