"""Dense solvers: primal active-set QP with warm start, two-phase simplex LP.

Both are written for the small problems this package produces (tens of
variables, at most a few hundred rows). Everything is dense numpy and the
pivoting rules are fixed so repeated solves are bit-identical.

QP convention::

    minimize    0.5 x' H x + f' x
    subject to  A_eq x == b_eq
                A_in x <= b_in

Multipliers follow ``H x + f + A_eq' nu + A_in' lam = 0`` with ``lam >= 0``.
The LP uses the same sign convention with ``H = 0``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

# Phase-1 objective above this means the constraints have no common point.
PHASE1_TOL = 1e-9
FEAS_TOL = 1e-9
PIVOT_TOL = 1e-11


class QpError(RuntimeError):
    pass


class InfeasibleError(QpError):
    """No point satisfies the constraints.

    ``certificate`` holds ``(y_eq, y_in)`` with ``y_in >= 0``,
    ``A_eq' y_eq + A_in' y_in = 0`` and ``b_eq' y_eq + b_in' y_in < 0``.
    """

    def __init__(self, message: str, certificate=None, phase1_objective: float = np.nan):
        super().__init__(message)
        self.certificate = certificate
        self.phase1_objective = phase1_objective


class UnboundedError(QpError):
    pass


def _as_matrix(A, d: int) -> np.ndarray:
    if A is None:
        return np.zeros((0, d))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return np.zeros((0, d))
    return A


def _as_vector(b, m: int) -> np.ndarray:
    if b is None:
        return np.zeros(m)
    return np.atleast_1d(np.asarray(b, dtype=float)).ravel()


# ---------------------------------------------------------------------------
# Linear programming
# ---------------------------------------------------------------------------


@dataclass
class LpResult:
    status: str  # "optimal", "infeasible", "unbounded"
    x: np.ndarray | None
    objective: float
    duals_in: np.ndarray
    duals_eq: np.ndarray
    iterations: int
    certificate: tuple | None = None


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _simplex(T, basis, n_cols, cost_row, max_iter):
    """Bland-rule primal simplex on tableau ``T`` (rhs in last column).

    ``cost_row`` is the reduced-cost row, updated in place alongside ``T``.
    Returns ("optimal" | "unbounded", iterations).
    """
    its = 0
    while its < max_iter:
        negative = np.nonzero(cost_row[:n_cols] < -PIVOT_TOL)[0]
        if negative.size == 0:
            return "optimal", its
        j = int(negative[0])
        col = T[:, j]
        rows = np.nonzero(col > PIVOT_TOL)[0]
        if rows.size == 0:
            return "unbounded", its
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, r, j)
        cost_row -= cost_row[j] * T[r]
        basis[r] = j
        its += 1
    raise QpError(f"simplex exceeded {max_iter} pivots")


def solve_lp(c, A_in=None, b_in=None, A_eq=None, b_eq=None, max_iter: int | None = None) -> LpResult:
    """Minimize ``c' x`` over free ``x`` with two-phase dense simplex.

    Infeasibility and unboundedness are reported through ``status``.
    """
    c = np.asarray(c, dtype=float).ravel()
    d = c.size
    A_in = _as_matrix(A_in, d)
    A_eq = _as_matrix(A_eq, d)
    b_in = _as_vector(b_in, A_in.shape[0])
    b_eq = _as_vector(b_eq, A_eq.shape[0])
    m_in, m_eq = A_in.shape[0], A_eq.shape[0]
    m = m_in + m_eq

    # Standard form: [x+, x-, slack] >= 0, rows flipped so rhs >= 0.
    A_std = np.zeros((m, 2 * d + m_in))
    A_std[:m_in, :d] = A_in
    A_std[:m_in, d : 2 * d] = -A_in
    A_std[:m_in, 2 * d :] = np.eye(m_in)
    A_std[m_in:, :d] = A_eq
    A_std[m_in:, d : 2 * d] = -A_eq
    rhs = np.concatenate([b_in, b_eq])
    sign = np.where(rhs < 0, -1.0, 1.0)
    A_std *= sign[:, None]
    rhs = rhs * sign
    n_std = A_std.shape[1]

    needs_art = [i for i in range(m) if not (i < m_in and sign[i] > 0)]
    n_art = len(needs_art)
    T = np.zeros((m, n_std + n_art + 1))
    T[:, :n_std] = A_std
    T[:, -1] = rhs
    basis = [0] * m
    for i in range(m_in):
        if sign[i] > 0:
            basis[i] = 2 * d + i
    for k, i in enumerate(needs_art):
        T[i, n_std + k] = 1.0
        basis[i] = n_std + k

    if max_iter is None:
        max_iter = 50 * (m + n_std + n_art) + 100
    total_its = 0

    phase1_obj = 0.0
    if n_art:
        cost = np.zeros(n_std + n_art + 1)
        cost[n_std : n_std + n_art] = 1.0
        for i in needs_art:
            cost -= T[i]
        status, its = _simplex(T, basis, n_std + n_art, cost, max_iter)
        total_its += its
        phase1_obj = -cost[-1]
        if phase1_obj > PHASE1_TOL:
            B = np.concatenate([A_std, np.zeros((m, n_art))], axis=1)
            for k, i in enumerate(needs_art):
                B[i, n_std + k] = 1.0
            c1 = np.zeros(n_std + n_art)
            c1[n_std:] = 1.0
            pi = np.linalg.lstsq(B[:, basis].T, c1[basis], rcond=None)[0]
            y = -sign * pi
            cert = (y[m_in:], np.maximum(y[:m_in], 0.0))
            return LpResult("infeasible", None, np.nan, np.zeros(m_in), np.zeros(m_eq),
                            total_its, certificate=cert)
        # Drive zero-level artificials out of the basis; drop redundant rows.
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= n_std:
                cand = np.nonzero(np.abs(T[r, :n_std]) > 1e-9)[0]
                if cand.size:
                    _pivot(T, r, int(cand[0]))
                    basis[r] = int(cand[0])
                else:
                    keep[r] = False
        T = np.concatenate([T[keep, :n_std], T[keep, -1:]], axis=1)
        basis = [b for b, k in zip(basis, keep) if k]
    else:
        keep = np.ones(m, dtype=bool)

    c_std = np.concatenate([c, -c, np.zeros(m_in)])
    cost = np.concatenate([c_std, [0.0]])
    for r, bj in enumerate(basis):
        cost -= c_std[bj] * T[r]
    status, its = _simplex(T, basis, n_std, cost, max_iter)
    total_its += its
    if status == "unbounded":
        return LpResult("unbounded", None, -np.inf, np.zeros(m_in), np.zeros(m_eq), total_its)

    z = np.zeros(n_std)
    z[basis] = T[:, -1]
    x = z[:d] - z[d : 2 * d]

    rows = np.nonzero(keep)[0]
    pi_kept = np.linalg.solve(A_std[np.ix_(rows, basis)].T, c_std[basis])
    pi = np.zeros(m)
    pi[rows] = pi_kept
    y = -sign * pi
    lam = y[:m_in]
    lam[np.abs(lam) < 1e-13] = 0.0
    return LpResult("optimal", x, float(c @ x), lam, y[m_in:], total_its)


# ---------------------------------------------------------------------------
# Quadratic programming
# ---------------------------------------------------------------------------


@dataclass
class WarmStart:
    chi0: np.ndarray | None = None
    active_set: tuple[int, ...] = ()

    def __post_init__(self):
        if len(set(self.active_set)) != len(self.active_set):
            raise ValueError("duplicate indices in warm-start active set")
        self.active_set = tuple(int(i) for i in self.active_set)


class _Factorization:
    """Equality elimination and reduced-Hessian factor, shared by every solve
    of problems with the same ``H`` and ``A_eq``."""

    def __init__(self, H: np.ndarray, A_eq: np.ndarray):
        d = H.shape[0]
        scale = max(1.0, float(np.abs(H).max(initial=0.0)))
        if A_eq.shape[0]:
            U, s, Vt = np.linalg.svd(A_eq)
            tol = max(A_eq.shape) * np.finfo(float).eps * max(s.max(initial=0.0), 1.0)
            r = int(np.sum(s > tol))
        else:
            U, s, Vt, r = np.zeros((0, 0)), np.zeros(0), np.eye(d), 0
        self.rank = r
        self.U_r = U[:, :r]
        self.s_r = s[:r]
        self.V_r = Vt[:r].T
        self.Z = Vt[r:].T.copy()
        self.Hr = self.Z.T @ H @ self.Z
        self.Hr = 0.5 * (self.Hr + self.Hr.T)
        self.chol = None
        if self.Hr.shape[0]:
            w = np.linalg.eigvalsh(self.Hr)
            if w[0] > 1e-12 * scale:
                self.chol = cho_factor(self.Hr, lower=True)
        self.count = 1

    def particular(self, b_eq: np.ndarray) -> np.ndarray:
        if self.rank == 0:
            return np.zeros(self.Z.shape[0])
        return self.V_r @ ((self.U_r.T @ b_eq) / self.s_r)


@dataclass
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    _factor: _Factorization | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        d = self.H.shape[0]
        if self.H.shape != (d, d):
            raise ValueError(f"H must be square, got {self.H.shape}")
        scale = max(1.0, float(np.abs(self.H).max(initial=0.0)))
        if np.abs(self.H - self.H.T).max(initial=0.0) > 1e-10 * scale:
            raise ValueError("H is not symmetric")
        self.f = _as_vector(self.f, d)
        self.A_eq = _as_matrix(self.A_eq, d)
        self.A_in = _as_matrix(self.A_in, d)
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0])
        self.b_in = _as_vector(self.b_in, self.A_in.shape[0])
        if self.f.size != d:
            raise ValueError(f"f has length {self.f.size}, expected {d}")
        for name, A, b in (("eq", self.A_eq, self.b_eq), ("in", self.A_in, self.b_in)):
            if A.shape[1] != d:
                raise ValueError(f"A_{name} has {A.shape[1]} columns, expected {d}")
            if b.size != A.shape[0]:
                raise ValueError(f"b_{name} has length {b.size}, expected {A.shape[0]}")
        for a in (self.H, self.A_eq, self.A_in):
            a.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def n_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def n_in(self) -> int:
        return self.A_in.shape[0]

    def factorization(self) -> _Factorization:
        if self._factor is None:
            self._factor = _Factorization(self.H, self.A_eq)
        return self._factor

    def update_linear_terms(self, f_new, b_new) -> "QpProblem":
        """Replace ``f`` and ``b_in`` in place; the cached factorization stays."""
        f_new = np.asarray(f_new, dtype=float).ravel()
        b_new = np.asarray(b_new, dtype=float).ravel()
        if f_new.shape != self.f.shape:
            raise ValueError(f"f has length {f_new.size}, expected {self.f.size}")
        if b_new.shape != self.b_in.shape:
            raise ValueError(f"b has length {b_new.size}, expected {self.b_in.size}")
        self.f = f_new.copy()
        self.b_in = b_new.copy()
        return self

    def with_inequalities(self, rows, rhs) -> "QpProblem":
        """New problem with extra inequality rows appended; shares the factor."""
        rows = _as_matrix(rows, self.dim)
        extra = QpProblem(
            self.H, self.f.copy(), self.A_eq, self.b_eq.copy(),
            np.vstack([self.A_in, rows]), np.concatenate([self.b_in, _as_vector(rhs, rows.shape[0])]),
        )
        extra._factor = self._factor
        return extra

    def nbytes(self) -> int:
        """Footprint of the problem data (entries times 8 bytes)."""
        return 8 * (self.H.size + self.f.size + self.A_eq.size + self.b_eq.size
                    + self.A_in.size + self.b_in.size)


def update_linear_terms(problem: QpProblem, f_new, b_new) -> QpProblem:
    return problem.update_linear_terms(f_new, b_new)


@dataclass
class QpResult:
    x: np.ndarray
    duals_eq: np.ndarray
    duals_in: np.ndarray
    active_set: tuple[int, ...]
    iterations: int
    status: str  # "optimal" or "max_iter"
    objective: float
    phase1: bool = False
    factorizations: int = 0
    wall_time: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def warm_start(self) -> WarmStart:
        return WarmStart(self.x.copy(), self.active_set)


def kkt_residuals(problem: QpProblem, x, duals_eq, duals_in) -> dict:
    """Stationarity, primal, complementarity and dual-feasibility residuals."""
    x = np.asarray(x, dtype=float)
    grad = problem.H @ x + problem.f + problem.A_eq.T @ duals_eq + problem.A_in.T @ duals_in
    eq_viol = problem.A_eq @ x - problem.b_eq
    in_slack = problem.b_in - problem.A_in @ x
    return {
        "stationarity": float(np.abs(grad).max(initial=0.0)),
        "primal": float(max(np.abs(eq_viol).max(initial=0.0), (-in_slack).max(initial=0.0))),
        "complementarity": float(np.abs(duals_in * in_slack).max(initial=0.0)),
        "dual": float((-duals_in).max(initial=0.0)),
    }


class _Reduced:
    """The problem restated over y with x = x_p + Z y and no equalities."""

    def __init__(self, problem: QpProblem, fac: _Factorization):
        self.fac = fac
        self.x_p = fac.particular(problem.b_eq)
        Z = fac.Z
        self.g = Z.T @ (problem.H @ self.x_p + problem.f)
        self.C = problem.A_in @ Z
        self.e = problem.b_in - problem.A_in @ self.x_p
        self.row_norm = np.maximum(np.linalg.norm(self.C, axis=1), 1.0)

    def violation(self, y) -> np.ndarray:
        return (self.C @ y - self.e) / self.row_norm

    def feasible(self, y) -> bool:
        return bool(np.all(self.violation(y) <= FEAS_TOL)) if self.C.shape[0] else True

    def independent(self, candidates) -> list[int]:
        """Greedy lowest-index-first subset of rows with independent normals."""
        chosen: list[int] = []
        Q = np.zeros((self.C.shape[1], 0))
        for i in candidates:
            row = self.C[i]
            nrm = np.linalg.norm(row)
            if nrm == 0.0:
                continue
            res = row - Q @ (Q.T @ row)
            rn = np.linalg.norm(res)
            if rn > 1e-9 * nrm and Q.shape[1] < self.C.shape[1]:
                chosen.append(int(i))
                Q = np.column_stack([Q, res / rn])
        return chosen

    def eqp_point(self, W: list[int], y_ref: np.ndarray | None = None):
        """Minimizer of the reduced objective on ``C_W y = e_W`` (PD case).

        Returns (point, multipliers) or None when the working rows are singular.
        """
        L = self.fac.chol
        Hg = cho_solve(L, self.g)
        if not W:
            return -Hg, np.zeros(0)
        CW = self.C[W]
        M = solve_triangular(L[0], CW.T, lower=True)
        S = M.T @ M
        try:
            mu = np.linalg.solve(S, -(self.e[W] + CW @ Hg))
        except np.linalg.LinAlgError:
            return None
        y = -cho_solve(L, self.g + CW.T @ mu)
        return y, mu

    def eqp_step(self, y, W: list[int]):
        """Null-space step for a semidefinite reduced Hessian.

        Returns (step, multipliers, is_ray) where ``is_ray`` marks a zero-curvature
        descent direction along which the objective decreases without bound.
        """
        Hr = self.fac.Hr
        g = Hr @ y + self.g
        dim = Hr.shape[0]
        if W:
            CW = self.C[W]
            q, _ = np.linalg.qr(CW.T, mode="complete")
            N = q[:, len(W):]
        else:
            CW = np.zeros((0, dim))
            N = np.eye(dim)
        if N.shape[1] == 0:
            p = np.zeros(dim)
            is_ray = False
        else:
            Hz = N.T @ Hr @ N
            gz = N.T @ g
            w, V = np.linalg.eigh(0.5 * (Hz + Hz.T))
            tol = 1e-10 * max(1.0, float(np.abs(w).max(initial=0.0)))
            zero = w <= tol
            gz_null = V[:, zero] @ (V[:, zero].T @ gz)
            if np.linalg.norm(gz_null) > 1e-10 * max(1.0, np.linalg.norm(g)):
                p = -N @ gz_null
                is_ray = True
            else:
                pos = ~zero
                p = -N @ (V[:, pos] @ ((V[:, pos].T @ gz) / w[pos]))
                is_ray = False
        if W:
            mu = np.linalg.lstsq(CW.T, -(g + Hr @ p), rcond=None)[0] if not is_ray else np.zeros(len(W))
        else:
            mu = np.zeros(0)
        return p, mu, is_ray


def _phase1(red: _Reduced):
    """Feasible point of ``C y <= e`` by minimizing the largest violation."""
    k = red.C.shape[1]
    m = red.C.shape[0]
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A = np.zeros((m + 1, k + 1))
    A[:m, :k] = red.C / red.row_norm[:, None]
    A[:m, -1] = -1.0
    A[m, -1] = -1.0
    b = np.concatenate([red.e / red.row_norm, [0.0]])
    lp = solve_lp(c, A, b)
    if lp.status != "optimal":
        raise QpError(f"phase-1 LP returned {lp.status}")
    return lp.x[:k], lp.objective, lp.duals_in[:m] / red.row_norm


def solve_qp(problem: QpProblem, warm: WarmStart | None = None, max_iter: int | None = None) -> QpResult:
    """Primal active-set solve.

    With a warm start the solver first tries ``warm.chi0`` (projected onto the
    equality manifold), then the equality-constrained minimizer on
    ``warm.active_set``; a phase-1 LP runs only if neither is feasible.
    Blocking ties go to the lowest row index, as do ties among negative
    multipliers.
    """
    t_start = time.perf_counter()
    d = problem.dim
    built = problem._factor is None
    fac = problem.factorization()
    if max_iter is None:
        max_iter = 50 * d

    if fac.rank and problem.n_eq:
        x_p = fac.particular(problem.b_eq)
        resid = problem.b_eq - problem.A_eq @ x_p
        if np.abs(resid).max() > 1e-9 * max(1.0, np.abs(problem.b_eq).max()):
            raise InfeasibleError("equality constraints are inconsistent", (-resid, np.zeros(problem.n_in)))
    elif problem.n_eq and np.abs(problem.b_eq).max(initial=0.0) > 1e-9:
        resid = problem.b_eq.copy()
        raise InfeasibleError("equality constraints are inconsistent", (-resid, np.zeros(problem.n_in)))

    red = _Reduced(problem, fac)
    k = fac.Z.shape[1]
    pd = fac.chol is not None or k == 0
    m = red.C.shape[0]

    y = None
    W: list[int] = []
    used_phase1 = False
    if warm is not None:
        bad = [i for i in warm.active_set if not 0 <= i < m]
        if bad:
            raise ValueError(f"warm-start active set has out-of-range rows {bad}")
        if warm.chi0 is not None:
            chi0 = np.asarray(warm.chi0, dtype=float).ravel()
            if chi0.size != d:
                raise ValueError(f"warm start has length {chi0.size}, expected {d}")
            y0 = fac.Z.T @ (chi0 - red.x_p)
            if red.feasible(y0):
                viol = red.violation(y0)
                y = y0
                W = red.independent([i for i in sorted(warm.active_set) if viol[i] >= -FEAS_TOL])
        if y is None and warm.active_set and pd and k:
            W0 = red.independent(sorted(warm.active_set))
            sol = red.eqp_point(W0)
            if sol is not None and red.feasible(sol[0]):
                y, W = sol[0], W0
    if y is None:
        if m == 0 or red.feasible(np.zeros(k)):
            y = np.zeros(k)
            W = red.independent(np.nonzero(red.violation(y) >= -FEAS_TOL)[0]) if m else []
        else:
            y, t_star, lam1 = _phase1(red)
            used_phase1 = True
            if t_star > PHASE1_TOL:
                y_in = np.maximum(lam1, 0.0)
                y_eq = np.zeros(problem.n_eq)
                if problem.n_eq:
                    y_eq = -np.linalg.lstsq(problem.A_eq.T, problem.A_in.T @ y_in, rcond=None)[0]
                raise InfeasibleError(
                    f"inequality region is empty (phase-1 objective {t_star:.3e})",
                    (y_eq, y_in), phase1_objective=t_star,
                )
            viol = red.violation(y)
            W = red.independent(np.nonzero(viol >= -1e-8)[0])

    status = "max_iter"
    mu = np.zeros(len(W))
    its = 0
    y_scale = 1.0
    at_minimizer = False  # y already minimizes over the current working set
    while its < max_iter:
        its += 1
        y_scale = max(1.0, float(np.abs(y).max(initial=0.0)))
        if k == 0:
            p, mu, is_ray = np.zeros(0), np.zeros(len(W)), False
        elif pd:
            sol = red.eqp_point(W)
            if sol is None:
                p, mu, is_ray = red.eqp_step(y, W)
            else:
                p, mu, is_ray = sol[0] - y, sol[1], False
        else:
            p, mu, is_ray = red.eqp_step(y, W)
        # A vertex (k working rows) or a point reached by a full step admits
        # no further move; any computed step there is roundoff.
        if not is_ray and (at_minimizer or len(W) == k):
            p = np.zeros(k)
        at_minimizer = False

        if not is_ray and np.abs(p).max(initial=0.0) <= 1e-12 * y_scale:
            if len(W) == 0:
                status = "optimal"
                break
            g_scale = max(1.0, float(np.abs(red.g).max(initial=0.0)))
            neg = np.nonzero(mu < -1e-11 * g_scale)[0]
            if neg.size == 0:
                status = "optimal"
                break
            worst = mu[neg].min()
            drop = min((W[i] for i in neg if mu[i] <= worst + 1e-14 * g_scale))
            W.remove(drop)
            continue

        alpha = np.inf if is_ray else 1.0
        block = None
        if m:
            Cp = red.C @ p
            in_w = np.zeros(m, dtype=bool)
            in_w[W] = True
            cand = np.nonzero((~in_w) & (Cp > 1e-12 * red.row_norm * max(1.0, np.abs(p).max())))[0]
            if cand.size:
                gap = np.maximum(red.e[cand] - red.C[cand] @ y, 0.0)
                ratios = gap / Cp[cand]
                rmin = ratios.min()
                if rmin < alpha:
                    alpha = rmin
                    ties = cand[ratios <= rmin + 1e-15 * max(1.0, rmin)]
                    block = int(ties.min())
        if not np.isfinite(alpha):
            raise UnboundedError("objective decreases without bound along a feasible ray")
        y = y + alpha * p
        if block is not None:
            if len(red.independent(W + [block])) == len(W) + 1:
                W.append(block)
        elif not is_ray:
            at_minimizer = True

    x = red.x_p + fac.Z @ y
    lam = np.zeros(m)
    if status == "optimal" and W:
        lam[W] = np.where(mu < 0.0, 0.0, mu)
    nu = np.zeros(problem.n_eq)
    if problem.n_eq:
        r = problem.H @ x + problem.f + problem.A_in.T @ lam
        nu = np.linalg.lstsq(problem.A_eq.T, -r, rcond=None)[0]
    obj = float(0.5 * x @ problem.H @ x + problem.f @ x)
    return QpResult(
        x=x,
        duals_eq=nu,
        duals_in=lam,
        active_set=tuple(sorted(W)),
        iterations=its,
        status=status,
        objective=obj,
        phase1=used_phase1,
        factorizations=int(built),
        wall_time=time.perf_counter() - t_start,
    )
