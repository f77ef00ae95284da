"""Polytope scaling-factor collision detection and avoidance rows.

Each body is ``{x : A R' (x - r) <= b}`` with ``b > 0`` so the body contains
its centre. Inflating both bodies about their centres by ``s`` and asking for
the smallest ``s`` with a common point is a 4-variable LP in ``(x, s)``; its
multipliers give ``ds/dr`` for the chaser.

With rotations fixed, the optimal value is convex in the chaser position (an
LP value is convex in its right-hand side, which is linear in ``r``), so any
optimal multiplier yields a supporting plane ``s(r) >= s0 + g (r - r0)``.
The avoidance rows rely on that.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .qp import QpProblem, QpError, solve_lp
from .transcription import ControlSolution, TranscriptionSpec, sample_tau

ACTIVE_TOL = 1e-9


class DegeneratePolytopeError(ValueError):
    pass


def _rotation_ok(R: np.ndarray) -> bool:
    return R.shape == (3, 3) and np.abs(R @ R.T - np.eye(3)).max() <= 1e-10


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Polytope:
    A_body: np.ndarray
    b_body: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A_body, dtype=float))
        b = np.asarray(self.b_body, dtype=float).ravel()
        r = np.asarray(self.center, dtype=float).ravel()
        R = np.asarray(self.rotation, dtype=float)
        if A.shape[1] != 3 or A.shape[0] != b.size:
            raise DegeneratePolytopeError(f"half-space data has shapes {A.shape}, {b.shape}")
        if np.any(b <= 0):
            raise DegeneratePolytopeError("body-frame polytope must contain the origin strictly (b > 0)")
        if r.size != 3:
            raise ValueError("center must be a 3-vector")
        if not _rotation_ok(R):
            raise ValueError("rotation is not orthonormal")
        object.__setattr__(self, "A_body", A)
        object.__setattr__(self, "b_body", b)
        object.__setattr__(self, "center", r)
        object.__setattr__(self, "rotation", R)

    @classmethod
    def box(cls, half_widths, center=(0.0, 0.0, 0.0), rotation=None) -> "Polytope":
        h = np.broadcast_to(np.asarray(half_widths, dtype=float), (3,))
        A = np.vstack([np.eye(3), -np.eye(3)])
        return cls(A, np.concatenate([h, h]), np.asarray(center, float), np.eye(3) if rotation is None else rotation)

    @classmethod
    def from_vertices(cls, vertices, center=(0.0, 0.0, 0.0), rotation=None) -> "Polytope":
        """Half-space form of the hull of body-frame ``vertices``."""
        from scipy.spatial import ConvexHull

        V = np.asarray(vertices, dtype=float)
        hull = ConvexHull(V)
        A = hull.equations[:, :3]
        b = -hull.equations[:, 3]
        # Coplanar facets come out as duplicate triangles.
        keys = np.round(np.column_stack([A, b]), 12)
        _, idx = np.unique(keys, axis=0, return_index=True)
        idx = np.sort(idx)
        return cls(A[idx], b[idx], np.asarray(center, float), np.eye(3) if rotation is None else rotation)

    def moved(self, center) -> "Polytope":
        return replace(self, center=np.asarray(center, dtype=float))

    def world_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """``(G, h)`` with the body described as ``G x <= h`` in the world frame."""
        G = self.A_body @ self.rotation.T
        return G, self.b_body + G @ self.center

    def contains(self, x, scale: float = 1.0, tol: float = 1e-9) -> bool:
        G = self.A_body @ self.rotation.T
        return bool(np.all(G @ (np.asarray(x, float) - self.center) <= scale * self.b_body + tol))


@dataclass
class CollisionResult:
    s: float
    witness: np.ndarray
    grad_rc: np.ndarray
    n_active: int = 0
    degenerate: bool = False


def scaling_factor(chaser: Polytope, target: Polytope) -> CollisionResult:
    """Smallest uniform inflation about both centres at which the bodies meet."""
    Gc = chaser.A_body @ chaser.rotation.T
    Gt = target.A_body @ target.rotation.T
    hc, ht = chaser.A_body.shape[0], target.A_body.shape[0]
    A = np.zeros((hc + ht, 4))
    A[:hc, :3] = Gc
    A[:hc, 3] = -chaser.b_body
    A[hc:, :3] = Gt
    A[hc:, 3] = -target.b_body
    b = np.concatenate([Gc @ chaser.center, Gt @ target.center])
    lp = solve_lp(np.array([0.0, 0.0, 0.0, 1.0]), A, b)
    if lp.status != "optimal":
        raise QpError(f"scaling-factor LP returned {lp.status}")
    x, s = lp.x[:3], float(lp.x[3])
    lam_c = lp.duals_in[:hc]
    grad = -chaser.rotation @ (chaser.A_body.T @ lam_c)
    slack = b - A @ lp.x
    n_active = int(np.sum(np.abs(slack) <= ACTIVE_TOL * max(1.0, s)))
    return CollisionResult(s, x.copy(), grad, n_active, n_active > 4)


@dataclass
class GradientCheck:
    max_deviation: float
    smooth: bool
    dual: np.ndarray
    central: np.ndarray


def _s_at(chaser: Polytope, target: Polytope, r) -> float:
    return scaling_factor(chaser.moved(r), target).s


def gradient_check(chaser: Polytope, target: Polytope, h: float | None = None) -> GradientCheck:
    """Compare the multiplier gradient with central differences.

    One-sided differences that disagree mark a kink in ``s``; such
    configurations are reported as not smooth.
    """
    if h is None:
        scale = float(np.abs(chaser.b_body).max() + np.abs(target.b_body).max())
        h = 1e-6 * scale
    res = scaling_factor(chaser, target)
    s0 = res.s
    central = np.zeros(3)
    smooth = True
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        sp = _s_at(chaser, target, chaser.center + e)
        sm = _s_at(chaser, target, chaser.center - e)
        central[k] = (sp - sm) / (2 * h)
        fwd, bwd = (sp - s0) / h, (s0 - sm) / h
        if abs(fwd - bwd) > 1e-4 * max(1.0, abs(central[k])):
            smooth = False
    dev = float(np.abs(res.grad_rc - central).max())
    return GradientCheck(dev, smooth, res.grad_rc, central)


@dataclass
class AvoidanceReport:
    problem: QpProblem
    injected: bool
    node_s: np.ndarray
    rows: int


def node_positions(solution: ControlSolution, spec: TranscriptionSpec, axes=(0, 1, 2)) -> np.ndarray:
    """Planned chaser positions at the collocation nodes, shape (n+1, 3)."""
    x, _, _ = sample_tau(solution, spec, spec.basis.nodes)
    return x[:, list(axes)]


def inject_avoidance(
    problem: QpProblem,
    spec: TranscriptionSpec,
    solution: ControlSolution,
    chaser: Polytope,
    target: Polytope,
    s_thr: float = 1.5,
    softness: float = 0.0,
    axes=(0, 1, 2),
) -> AvoidanceReport:
    """Append linearised ``s >= s_thr`` rows at every node that violates it.

    Node positions are ``gamma_i alpha_a + x'_a(-1)(tau_i + 1) + x_a(-1)``, so
    the row ``g . r_i >= s_thr - s_i + g . r0_i`` becomes a row over the
    coefficient blocks with the initial-condition part moved to the rhs. A
    positive ``softness`` lets the shared slack relax these rows too.
    """
    basis = spec.basis
    r_nodes = node_positions(solution, spec, axes)
    half = 0.5 * spec.dt
    drift = np.outer(basis.nodes + 1.0, half * solution.v_now[list(axes)]) + solution.x_now[list(axes)]
    node_s = np.empty(basis.size)
    rows, rhs = [], []
    for i in range(basis.size):
        res = scaling_factor(chaser.moved(r_nodes[i]), target)
        node_s[i] = res.s
        if res.s >= s_thr:
            continue
        g = res.grad_rc
        row = np.zeros(problem.dim)
        for k, a in enumerate(axes):
            row[spec.block(a)] = -g[k] * basis.gamma_mat[i]
        row[-1] = -softness
        rows.append(row)
        rhs.append(-(s_thr - res.s + g @ r_nodes[i]) + g @ drift[i])
    if not rows:
        return AvoidanceReport(problem, False, node_s, 0)
    return AvoidanceReport(problem.with_inequalities(np.array(rows), np.array(rhs)), True, node_s, len(rows))
