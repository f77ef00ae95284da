"""Quadratic program for integral-Chebyshev MPC of double-integrator axes.

Each axis ``a`` carries its own coefficient block ``alpha_a`` with
``x_a''(tau) = T(tau) alpha_a`` in computational units; one slack variable is
shared by every softened row. The decision vector is
``chi = [alpha_1, ..., alpha_q, eps]``.

Only the linear cost ``f`` and the inequality right-hand side ``b`` depend on
the current state and target, so :class:`Mpc3Controller` builds ``H``,
``A_eq`` and ``A_in`` once and updates ``f``/``b`` in place every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .chebyshev import ChebyshevBasis, DomainError, TimeMap, integration_rows, chebyshev_matrix
from .qp import QpProblem, QpResult, WarmStart, solve_qp

DEFAULT_BOUND = 1e6


@dataclass(frozen=True)
class AxisSpec:
    W_u: float = 1.0
    W_x: float = 1.0
    W_xp: float = 0.0
    x_target: float = 0.0
    v_target: float = 0.0
    u_min: float = -DEFAULT_BOUND
    u_max: float = DEFAULT_BOUND
    V_u: float = 0.0
    v_min: float = -DEFAULT_BOUND
    v_max: float = DEFAULT_BOUND
    V_xp: float = 0.0

    def __post_init__(self):
        if not self.u_min < self.u_max:
            raise ValueError(f"need u_min < u_max, got {self.u_min}, {self.u_max}")
        if not self.v_min < self.v_max:
            raise ValueError(f"need v_min < v_max, got {self.v_min}, {self.v_max}")
        weights = (self.W_u, self.W_x, self.W_xp)
        if min(weights) < 0 or max(weights) <= 0:
            raise ValueError(f"weights must be >= 0 with one positive, got {weights}")
        if self.V_u < 0 or self.V_xp < 0:
            raise ValueError("softness factors must be >= 0")


def scale_to_computational(dt: float, value, kind: str = "velocity", mass: float = 1.0):
    """Physical velocity (m/s) or force (N) to tau-domain units."""
    if dt <= 0:
        raise ValueError(f"horizon must be positive, got {dt}")
    half = 0.5 * dt
    if kind == "velocity":
        return np.asarray(value, dtype=float) * half
    if kind == "control":
        return np.asarray(value, dtype=float) * half**2 / mass
    raise ValueError(f"unknown quantity {kind!r}")


def scale_to_physical(dt: float, value, kind: str = "velocity", mass: float = 1.0):
    if dt <= 0:
        raise ValueError(f"horizon must be positive, got {dt}")
    half = 0.5 * dt
    if kind == "velocity":
        return np.asarray(value, dtype=float) / half
    if kind == "control":
        return np.asarray(value, dtype=float) * mass / half**2
    raise ValueError(f"unknown quantity {kind!r}")


class _Structure(NamedTuple):
    H: np.ndarray
    A_eq: np.ndarray
    A_in: np.ndarray
    f_gamma: np.ndarray  # dt * sum w_i gamma_i
    f_gamma_tau: np.ndarray  # dt * sum w_i gamma_i (tau_i + 1)
    f_beta: np.ndarray  # dt * sum w_i beta_i


@dataclass(frozen=True)
class TranscriptionSpec:
    basis: ChebyshevBasis
    horizon: TimeMap
    axes: tuple[AxisSpec, ...]
    rho: float = 1e4
    mass: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if not self.axes:
            raise ValueError("need at least one axis")
        if self.rho <= 0:
            raise ValueError(f"slack weight must be positive, got {self.rho}")
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")

    @classmethod
    def create(cls, n: int = 3, dt: float = 2.5, axes: Sequence[AxisSpec] = (AxisSpec(),),
               rho: float = 1e4, mass: float = 1.0, t0: float = 0.0) -> "TranscriptionSpec":
        return cls(ChebyshevBasis.build(n), TimeMap(t0, t0 + dt), tuple(axes), rho, mass)

    @property
    def q(self) -> int:
        return len(self.axes)

    @property
    def n(self) -> int:
        return self.basis.order

    @property
    def dim(self) -> int:
        return self.q * (self.n + 1) + 1

    @property
    def dt(self) -> float:
        return self.horizon.dt

    def block(self, axis: int) -> slice:
        k = self.n + 1
        return slice(axis * k, (axis + 1) * k)

    @cached_property
    def structure(self) -> _Structure:
        b = self.basis
        k, q, dt = b.size, self.q, self.dt
        w = b.weights
        TtT = (b.T_mat.T * w) @ b.T_mat
        GtG = (b.gamma_mat.T * w) @ b.gamma_mat
        BtB = (b.beta_mat.T * w) @ b.beta_mat

        H = np.zeros((self.dim, self.dim))
        A_eq = np.zeros((2 * q, self.dim))
        A_in = np.zeros((4 * k * q, self.dim))
        for a, ax in enumerate(self.axes):
            blk = self.block(a)
            H[blk, blk] = dt * (ax.W_u * TtT + ax.W_x * GtG + ax.W_xp * BtB)
            A_eq[2 * a, blk] = b.gamma_start
            A_eq[2 * a + 1, blk] = b.beta_start
            r = 4 * k * a
            A_in[r : r + k, blk] = b.T_mat
            A_in[r + k : r + 2 * k, blk] = -b.T_mat
            A_in[r + 2 * k : r + 3 * k, blk] = b.beta_mat
            A_in[r + 3 * k : r + 4 * k, blk] = -b.beta_mat
            A_in[r : r + 2 * k, -1] = -ax.V_u
            A_in[r + 2 * k : r + 4 * k, -1] = -ax.V_xp
        H[-1, -1] = self.rho
        H = 0.5 * (H + H.T)
        for arr in (H, A_eq, A_in):
            arr.setflags(write=False)
        return _Structure(
            H, A_eq, A_in,
            f_gamma=dt * (w @ b.gamma_mat),
            f_gamma_tau=dt * ((w * (b.nodes + 1.0)) @ b.gamma_mat),
            f_beta=dt * (w @ b.beta_mat),
        )

    def targets(self, x_target=None, v_target=None) -> tuple[np.ndarray, np.ndarray]:
        xt = np.array([ax.x_target for ax in self.axes]) if x_target is None else np.asarray(x_target, float)
        vt = np.array([ax.v_target for ax in self.axes]) if v_target is None else np.asarray(v_target, float)
        return xt.reshape(self.q), vt.reshape(self.q)

    def linear_terms(self, x_now, v_now, x_target=None, v_target=None) -> tuple[np.ndarray, np.ndarray]:
        """The state-dependent ``f`` and ``b_in``."""
        x_now = np.asarray(x_now, dtype=float).reshape(self.q)
        v_now = np.asarray(v_now, dtype=float).reshape(self.q)
        if not (np.all(np.isfinite(x_now)) and np.all(np.isfinite(v_now))):
            raise ValueError("current state must be finite")
        xt, vt = self.targets(x_target, v_target)
        s = self.structure
        half = 0.5 * self.dt
        k = self.n + 1
        f = np.zeros(self.dim)
        b = np.empty(4 * k * self.q)
        for a, ax in enumerate(self.axes):
            xp0 = half * v_now[a]
            f[self.block(a)] = (
                ax.W_x * (s.f_gamma_tau * xp0 + s.f_gamma * (x_now[a] - xt[a]))
                + ax.W_xp * s.f_beta * (xp0 - half * vt[a])
            )
            r = 4 * k * a
            b[r : r + k] = half**2 * ax.u_max / self.mass
            b[r + k : r + 2 * k] = -half**2 * ax.u_min / self.mass
            b[r + 2 * k : r + 3 * k] = half * ax.v_max - xp0
            b[r + 3 * k : r + 4 * k] = -half * ax.v_min + xp0
        return f, b


def build_qp(spec: TranscriptionSpec, x_now, v_now, x_target=None, v_target=None) -> QpProblem:
    s = spec.structure
    f, b = spec.linear_terms(x_now, v_now, x_target, v_target)
    return QpProblem(s.H, f, s.A_eq, np.zeros(2 * spec.q), s.A_in, b)


@dataclass
class ControlSolution:
    alpha: np.ndarray  # (q, n+1), computational units
    epsilon: float
    u_now: np.ndarray  # (q,), newtons
    objective: float
    x_now: np.ndarray
    v_now: np.ndarray
    chi: np.ndarray = field(repr=False)
    qp: QpResult | None = field(default=None, repr=False)


def extract_solution(spec: TranscriptionSpec, result: QpResult, x_now, v_now) -> ControlSolution:
    chi = result.x
    alpha = chi[:-1].reshape(spec.q, spec.n + 1)
    u_comp = alpha @ spec.basis.T_start[0]
    return ControlSolution(
        alpha=alpha,
        epsilon=float(chi[-1]),
        u_now=scale_to_physical(spec.dt, u_comp, "control", spec.mass),
        objective=result.objective,
        x_now=np.asarray(x_now, dtype=float).reshape(spec.q).copy(),
        v_now=np.asarray(v_now, dtype=float).reshape(spec.q).copy(),
        chi=chi,
        qp=result,
    )


class Mpc3Controller:
    """Receding-horizon session: one cached QP, warm-started from the last solve.

    Not thread-safe; give each closed-loop run its own controller.
    """

    def __init__(self, spec: TranscriptionSpec, warm_start: bool = True):
        self.spec = spec
        self.warm_start = warm_start
        self.problem: QpProblem | None = None
        self.last: QpResult | None = None

    def prepare(self, x_now, v_now, x_target=None, v_target=None) -> QpProblem:
        f, b = self.spec.linear_terms(x_now, v_now, x_target, v_target)
        if self.problem is None:
            s = self.spec.structure
            self.problem = QpProblem(s.H, f, s.A_eq, np.zeros(2 * self.spec.q), s.A_in, b)
        else:
            self.problem.update_linear_terms(f, b)
        return self.problem

    def solve(self, x_now, v_now, x_target=None, v_target=None, warm: WarmStart | None = None) -> ControlSolution:
        problem = self.prepare(x_now, v_now, x_target, v_target)
        if warm is None and self.warm_start and self.last is not None:
            warm = self.last.warm_start()
        result = solve_qp(problem, warm)
        self.last = result
        return extract_solution(self.spec, result, x_now, v_now)

    def solve_problem(self, problem: QpProblem, x_now, v_now, warm: WarmStart | None = None) -> ControlSolution:
        """Solve a modified copy of the step problem (e.g. with avoidance rows)."""
        result = solve_qp(problem, warm)
        self.last = QpResult(
            result.x, result.duals_eq, result.duals_in[: self.problem.n_in],
            tuple(i for i in result.active_set if i < self.problem.n_in),
            result.iterations, result.status, result.objective,
        )
        return extract_solution(self.spec, result, x_now, v_now)


def solve_step(spec: TranscriptionSpec, x_now, v_now, warm: WarmStart | None = None) -> ControlSolution:
    problem = build_qp(spec, x_now, v_now)
    return extract_solution(spec, solve_qp(problem, warm), x_now, v_now)


class SampledTrajectory(NamedTuple):
    t: np.ndarray
    x: np.ndarray  # (len(t), q) m
    v: np.ndarray  # m/s
    u: np.ndarray  # N


def sample_tau(solution: ControlSolution, spec: TranscriptionSpec, tau) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Position, tau-velocity and tau-acceleration in computational units."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(np.abs(tau) > 1.0 + 1e-12):
        raise DomainError("tau outside [-1, 1]")
    half = 0.5 * spec.dt
    beta, gamma = integration_rows(tau, spec.n)
    T = chebyshev_matrix(tau, spec.n)
    xp0 = half * solution.v_now
    x = gamma @ solution.alpha.T + np.outer(tau + 1.0, xp0) + solution.x_now
    xp = beta @ solution.alpha.T + xp0
    xpp = T @ solution.alpha.T
    return x, xp, xpp


def sample_trajectory(solution: ControlSolution, spec: TranscriptionSpec, times) -> SampledTrajectory:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    tau = np.atleast_1d(spec.horizon.to_tau(times))
    x, xp, xpp = sample_tau(solution, spec, tau)
    return SampledTrajectory(
        times,
        x,
        scale_to_physical(spec.dt, xp, "velocity"),
        scale_to_physical(spec.dt, xpp, "control", spec.mass),
    )
