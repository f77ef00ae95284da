"""Condensed discrete-time MPC, the comparison method.

States are eliminated with the stacked prediction ``y = S_x x_k + S_u u`` so
the QP is over the ``p * m`` future inputs only. Output bounds give ``2 p q``
inequality rows; optional input bounds append ``2 p m`` more.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .qp import QpProblem, QpResult, WarmStart, solve_qp

DEFAULT_BOUND = 1e6


def double_integrator(n_axes: int, Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold matrices, state ordered [positions, velocities]."""
    if Ts <= 0:
        raise ValueError(f"sample time must be positive, got {Ts}")
    I = np.eye(n_axes)
    Z = np.zeros((n_axes, n_axes))
    Ad = np.block([[I, Ts * I], [Z, I]])
    Bd = np.vstack([0.5 * Ts**2 * I, Ts * I])
    return Ad, Bd


@dataclass(frozen=True)
class DiscreteMpcSpec:
    Ad: np.ndarray
    Bd: np.ndarray
    p: int
    W_u: np.ndarray
    W_y: np.ndarray
    y_r: np.ndarray
    Ts: float = 0.5
    y_min: np.ndarray | None = None
    y_max: np.ndarray | None = None
    u_min: np.ndarray | None = None
    u_max: np.ndarray | None = None
    mass: float = 1.0

    def __post_init__(self):
        Ad = np.atleast_2d(np.asarray(self.Ad, dtype=float))
        Bd = np.atleast_2d(np.asarray(self.Bd, dtype=float))
        q, m = Bd.shape
        if Ad.shape != (q, q):
            raise ValueError(f"Ad shape {Ad.shape} inconsistent with Bd {Bd.shape}")
        if self.p < 1:
            raise ValueError(f"horizon must be >= 1, got {self.p}")
        if self.Ts <= 0:
            raise ValueError("sample time must be positive")
        W_u = np.diag(np.broadcast_to(np.asarray(self.W_u, float), (m,))) if np.ndim(self.W_u) < 2 else np.asarray(self.W_u, float)
        W_y = np.diag(np.broadcast_to(np.asarray(self.W_y, float), (q,))) if np.ndim(self.W_y) < 2 else np.asarray(self.W_y, float)
        vec = lambda v, k, fill: np.full(k, fill) if v is None else np.broadcast_to(np.asarray(v, float), (k,)).copy()
        for name, value in (
            ("Ad", Ad), ("Bd", Bd), ("W_u", W_u), ("W_y", W_y),
            ("y_r", vec(self.y_r, q, 0.0)),
            ("y_min", vec(self.y_min, q, -DEFAULT_BOUND)),
            ("y_max", vec(self.y_max, q, DEFAULT_BOUND)),
        ):
            object.__setattr__(self, name, value)
        if self.u_min is not None or self.u_max is not None:
            object.__setattr__(self, "u_min", vec(self.u_min, m, -DEFAULT_BOUND))
            object.__setattr__(self, "u_max", vec(self.u_max, m, DEFAULT_BOUND))

    @classmethod
    def double_integrator(cls, n_axes: int = 1, Ts: float = 0.5, p: int = 5, W_u=1.0, W_pos=1.0,
                          W_vel=0.0, target=None, **kw) -> "DiscreteMpcSpec":
        Ad, Bd = double_integrator(n_axes, Ts)
        W_y = np.concatenate([np.full(n_axes, W_pos), np.full(n_axes, W_vel)])
        y_r = np.zeros(2 * n_axes) if target is None else np.asarray(target, float)
        return cls(Ad, Bd, p, W_u, W_y, y_r, Ts=Ts, **kw)

    @property
    def q(self) -> int:
        return self.Ad.shape[0]

    @property
    def m(self) -> int:
        return self.Bd.shape[1]

    @property
    def dim(self) -> int:
        return self.p * self.m

    @property
    def has_input_bounds(self) -> bool:
        return self.u_min is not None

    @property
    def n_in(self) -> int:
        return 2 * self.p * self.q + (2 * self.p * self.m if self.has_input_bounds else 0)

    @cached_property
    def condensed(self) -> tuple[np.ndarray, np.ndarray]:
        return condense(self)

    @cached_property
    def _qp_matrices(self):
        S_x, S_u = self.condensed
        p = self.p
        Wy = np.kron(np.eye(p), self.W_y)
        Wu = np.kron(np.eye(p), self.W_u)
        H = 2.0 * (S_u.T @ Wy @ S_u + Wu)
        H = 0.5 * (H + H.T)
        A_in = np.vstack([S_u, -S_u])
        if self.has_input_bounds:
            A_in = np.vstack([A_in, np.eye(self.dim), -np.eye(self.dim)])
        return H, A_in, Wy

    def linear_terms(self, x_now, y_r=None) -> tuple[np.ndarray, np.ndarray]:
        S_x, S_u = self.condensed
        H, A_in, Wy = self._qp_matrices
        x_now = np.asarray(x_now, float).reshape(self.q)
        yr = self.y_r if y_r is None else np.asarray(y_r, float).reshape(self.q)
        free = S_x @ x_now
        f = 2.0 * S_u.T @ Wy @ (free - np.tile(yr, self.p))
        b = [np.tile(self.y_max, self.p) - free, free - np.tile(self.y_min, self.p)]
        if self.has_input_bounds:
            b += [np.tile(self.u_max, self.p), -np.tile(self.u_min, self.p)]
        return f, np.concatenate(b)

    def build_qp(self, x_now, y_r=None) -> QpProblem:
        H, A_in, _ = self._qp_matrices
        f, b = self.linear_terms(x_now, y_r)
        return QpProblem(H, f, None, None, A_in, b)


def condense(spec: DiscreteMpcSpec) -> tuple[np.ndarray, np.ndarray]:
    """Stacked predictions of x_{k+1} ... x_{k+p}.

    S_x is (p q, q); S_u is (p q, p m), lower block triangular.
    """
    Ad, Bd, p = spec.Ad, spec.Bd, spec.p
    q, m = Bd.shape
    S_x = np.zeros((p * q, q))
    S_u = np.zeros((p * q, p * m))
    powers = [np.eye(q)]
    for _ in range(p):
        powers.append(Ad @ powers[-1])
    for i in range(p):
        S_x[i * q : (i + 1) * q] = powers[i + 1]
        for j in range(i + 1):
            S_u[i * q : (i + 1) * q, j * m : (j + 1) * m] = powers[i - j] @ Bd
    return S_x, S_u


@dataclass
class DiscreteSolution:
    u_seq: np.ndarray  # (p, m), in the units of Bd's input
    u_now: np.ndarray
    qp: QpResult = field(repr=False)


class DiscreteMpcController:
    """Condensed-MPC session with warm start; single-threaded."""

    def __init__(self, spec: DiscreteMpcSpec, warm_start: bool = True):
        self.spec = spec
        self.warm_start = warm_start
        self.problem: QpProblem | None = None
        self.last: QpResult | None = None

    def solve(self, x_now, y_r=None, warm: WarmStart | None = None) -> DiscreteSolution:
        f, b = self.spec.linear_terms(x_now, y_r)
        if self.problem is None:
            self.problem = self.spec.build_qp(x_now, y_r)
        else:
            self.problem.update_linear_terms(f, b)
        if warm is None and self.warm_start and self.last is not None:
            warm = self.last.warm_start()
        res = solve_qp(self.problem, warm)
        self.last = res
        u_seq = res.x.reshape(self.spec.p, self.spec.m)
        return DiscreteSolution(u_seq, u_seq[0].copy(), res)


def solve_discrete_step(spec: DiscreteMpcSpec, x_now, warm: WarmStart | None = None) -> np.ndarray:
    """First input of the condensed QP solution (acceleration units of Bd)."""
    res = solve_qp(spec.build_qp(x_now), warm)
    return res.x[: spec.m].copy()
