"""Chebyshev basis, Chebyshev-Gauss nodes, Fejer quadrature and the integral
collocation operators.

Everything downstream treats a :class:`ChebyshevBasis` as a bag of constant
matrices. Nodes are stored in decreasing order (``tau_0`` closest to +1) and
every matrix row follows that order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DOMAIN_TOL = 1e-12


class DomainError(ValueError):
    """Argument outside the interval a map or polynomial is defined on."""


class ConvergenceError(RuntimeError):
    """Fixed-point iteration did not reach tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def eval_chebyshev(j: int, tau: float) -> float:
    """T_j(tau) by the three-term recurrence."""
    if j < 0:
        raise ValueError(f"polynomial index must be >= 0, got {j}")
    if abs(tau) > 1.0 + DOMAIN_TOL:
        raise DomainError(f"tau={tau!r} outside [-1, 1]")
    if j == 0:
        return 1.0
    t_prev, t_cur = 1.0, float(tau)
    for _ in range(j - 1):
        t_prev, t_cur = t_cur, 2.0 * tau * t_cur - t_prev
    return t_cur


def chebyshev_matrix(tau, n: int) -> np.ndarray:
    """Rows ``[T_0(tau_k), ..., T_n(tau_k)]`` for every entry of ``tau``.

    Vectorised form of :func:`eval_chebyshev`; no domain check so that the
    antiderivative series (degree n+2) can reuse it.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    out = np.empty((tau.size, n + 1))
    out[:, 0] = 1.0
    if n >= 1:
        out[:, 1] = tau
    for j in range(2, n + 1):
        out[:, j] = 2.0 * tau * out[:, j - 1] - out[:, j - 2]
    return out


def cg_nodes(n: int) -> np.ndarray:
    """Roots of T_{n+1}, in decreasing order."""
    if n < 1:
        raise ValueError(f"order must be >= 1, got {n}")
    k = np.arange(1, n + 2)
    return np.cos((k - 0.5) * np.pi / (n + 1))


def quadrature_weights(n: int) -> np.ndarray:
    """Fejer's first rule on the ``n + 1`` Chebyshev-Gauss nodes.

    Interpolatory, so exact for polynomials of degree <= n, and all weights
    are positive.
    """
    if n < 1:
        raise ValueError(f"order must be >= 1, got {n}")
    m = n + 1
    theta = (np.arange(1, m + 1) - 0.5) * np.pi / m
    j = np.arange(1, m // 2 + 1)
    series = np.cos(2.0 * np.outer(theta, j)) / (4.0 * j**2 - 1.0)
    return (2.0 / m) * (1.0 - 2.0 * series.sum(axis=1))


def _antiderivative_matrix(m: int) -> np.ndarray:
    """Map Chebyshev coefficients of length m to an antiderivative of length m+1.

    Uses int T_0 = T_1, int T_1 = T_2/4 and
    int T_j = T_{j+1}/(2(j+1)) - T_{j-1}/(2(j-1)) for j >= 2. The constant
    term is left at zero; callers pin it.
    """
    K = np.zeros((m + 1, m))
    K[1, 0] = 1.0
    if m > 1:
        K[2, 1] = 0.25
    for j in range(2, m):
        K[j + 1, j] += 1.0 / (2.0 * (j + 1))
        K[j - 1, j] -= 1.0 / (2.0 * (j - 1))
    return K


def _pin_at_minus_one(coeffs: np.ndarray) -> np.ndarray:
    """Shift the constant term of each coefficient column so it vanishes at -1."""
    signs = (-1.0) ** np.arange(coeffs.shape[0])
    out = coeffs.copy()
    out[0, :] -= signs @ coeffs
    return out


def integration_coefficients(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev coefficients of the first and second integration operators.

    Column j of the first result holds the series of int_{-1}^{tau} T_j and has
    length n+2; the second result holds the double integral (length n+3).
    """
    K1 = _antiderivative_matrix(n + 1)
    first = _pin_at_minus_one(K1)
    K2 = _antiderivative_matrix(n + 2)
    second = _pin_at_minus_one(K2 @ first)
    return first, second


def integration_rows(tau, n: int) -> tuple[np.ndarray, np.ndarray]:
    """beta(tau) and gamma(tau) row functionals for each entry of ``tau``."""
    first, second = integration_coefficients(n)
    beta = chebyshev_matrix(tau, n + 1) @ first
    gamma = chebyshev_matrix(tau, n + 2) @ second
    return beta, gamma


def integration_operators(n: int):
    """Return ``(beta_mat, gamma_mat, beta_start, gamma_start)`` at the CG nodes."""
    if n < 1:
        raise ValueError(f"order must be >= 1, got {n}")
    beta_mat, gamma_mat = integration_rows(cg_nodes(n), n)
    # Both operators vanish at -1 by construction; drop the rounding residue.
    beta_start = np.zeros((1, n + 1))
    gamma_start = np.zeros((1, n + 1))
    return beta_mat, gamma_mat, beta_start, gamma_start


@dataclass(frozen=True)
class ChebyshevBasis:
    order: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    T_mat: np.ndarray = field(repr=False)
    beta_mat: np.ndarray = field(repr=False)
    gamma_mat: np.ndarray = field(repr=False)
    T_start: np.ndarray = field(repr=False)
    beta_start: np.ndarray = field(repr=False)
    gamma_start: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, n: int) -> "ChebyshevBasis":
        nodes = cg_nodes(n)
        beta_mat, gamma_mat, beta_start, gamma_start = integration_operators(n)
        arrays = dict(
            nodes=nodes,
            weights=quadrature_weights(n),
            T_mat=chebyshev_matrix(nodes, n),
            beta_mat=beta_mat,
            gamma_mat=gamma_mat,
            T_start=chebyshev_matrix(-1.0, n),
            beta_start=beta_start,
            gamma_start=gamma_start,
        )
        for a in arrays.values():
            a.setflags(write=False)
        return cls(order=n, **arrays)

    @property
    def size(self) -> int:
        return self.order + 1

    def T_row(self, tau) -> np.ndarray:
        return chebyshev_matrix(tau, self.order)

    def beta_row(self, tau) -> np.ndarray:
        return integration_rows(tau, self.order)[0]

    def gamma_row(self, tau) -> np.ndarray:
        return integration_rows(tau, self.order)[1]


@dataclass(frozen=True)
class TimeMap:
    """Affine map between [t0, tf] and [-1, 1]."""

    t0: float
    tf: float

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ValueError(f"need tf > t0, got t0={self.t0}, tf={self.tf}")

    @property
    def dt(self) -> float:
        return self.tf - self.t0

    def to_tau(self, t):
        t = np.asarray(t, dtype=float)
        slack = DOMAIN_TOL * max(1.0, abs(self.t0), abs(self.tf))
        if np.any(t < self.t0 - slack) or np.any(t > self.tf + slack):
            raise DomainError(f"time outside [{self.t0}, {self.tf}]")
        # clamp so in-range times never map past the ends by roundoff
        tau = np.clip((2.0 * t - (self.tf + self.t0)) / self.dt, -1.0, 1.0)
        return float(tau) if tau.ndim == 0 else tau

    def to_time(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(np.abs(tau) > 1.0 + DOMAIN_TOL):
            raise DomainError("tau outside [-1, 1]")
        t = np.clip(0.5 * (tau * self.dt + self.tf + self.t0), self.t0, self.tf)
        return float(t) if t.ndim == 0 else t


def time_to_tau(tmap: TimeMap, t):
    return tmap.to_tau(t)


def tau_to_time(tmap: TimeMap, tau):
    return tmap.to_time(tau)


@dataclass
class PropagationResult:
    x_final: np.ndarray
    v_final: np.ndarray
    coefficients: np.ndarray
    iterations: int
    residual: float


def icc_propagate(
    dynamics: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    x0,
    v0,
    tmap: TimeMap,
    n: int,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> PropagationResult:
    """Integrate ``xdd = dynamics(t, x, xd)`` over ``tmap`` by integral collocation.

    ``dynamics`` is called with node times of shape ``(n+1,)`` and states of
    shape ``(n+1, d)``; it returns accelerations of shape ``(n+1, d)``.
    Picard iteration on the coefficients stops when the largest coefficient
    change drops below ``tol``.
    """
    if n < 3:
        raise ValueError(f"order must be >= 3 for propagation, got {n}")
    basis = ChebyshevBasis.build(n)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    half = 0.5 * tmap.dt
    xp0 = half * v0
    t_nodes = tmap.to_time(basis.nodes)
    T_inv = np.linalg.inv(basis.T_mat)
    drift = np.outer(basis.nodes + 1.0, xp0) + x0

    alpha = np.zeros((basis.size, x0.size))
    residual = np.inf
    for it in range(1, max_iter + 1):
        x = basis.gamma_mat @ alpha + drift
        xd = (basis.beta_mat @ alpha + xp0) / half
        acc = np.asarray(dynamics(t_nodes, x, xd), dtype=float).reshape(x.shape)
        new = T_inv @ (half**2 * acc)
        residual = float(np.max(np.abs(new - alpha)))
        alpha = new
        if residual < tol:
            break
    else:
        raise ConvergenceError(
            f"integral collocation did not converge in {max_iter} iterations "
            f"(last coefficient change {residual:.3e})",
            residual=residual,
            iterations=max_iter,
        )

    beta_end, gamma_end = integration_rows(1.0, n)
    x_final = gamma_end @ alpha + 2.0 * xp0 + x0
    v_final = (beta_end @ alpha + xp0) / half
    return PropagationResult(x_final.ravel(), v_final.ravel(), alpha, it, residual)
