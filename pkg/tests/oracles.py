"""Slow, independent reference solvers used only by the tests."""

import itertools

import numpy as np


def project_box_hyperplane(y, lo, hi, a, c):
    """Euclidean projection onto {lo <= x <= hi, a.x = c} (a has no zeros).

    x(mu) = clip(y - mu a) is piecewise linear and a.x(mu) is non-increasing,
    so the root lies between two breakpoints and is found exactly there.
    """
    bps = np.unique(np.concatenate([(y - lo) / a, (y - hi) / a]))
    X = np.clip(y[None, :] - bps[:, None] * a[None, :], lo, hi)
    g = X @ a - c
    k = np.searchsorted(-g, 0.0)  # g decreasing along bps
    k = min(max(k, 1), len(bps) - 1)
    g0, g1 = g[k - 1], g[k]
    mu = bps[k - 1] if g0 == g1 else bps[k - 1] + (bps[k] - bps[k - 1]) * g0 / (g0 - g1)
    return np.clip(y - mu * a, lo, hi)


def projected_gradient(H, f, lo, hi, a, c, tol=1e-10, max_iter=200000):
    L = np.linalg.eigvalsh(H)[-1]
    x = project_box_hyperplane(np.zeros(len(f)), lo, hi, a, c)
    for _ in range(max_iter):
        nxt = project_box_hyperplane(x - (H @ x + f) / L, lo, hi, a, c)
        if np.abs(nxt - x).max() < tol:
            return nxt
        x = nxt
    return x


def vertex_enumeration(c, A, b):
    """min c.x over {A x <= b} by checking every basic solution."""
    m, d = A.shape
    best = np.inf
    for rows in itertools.combinations(range(m), d):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + 1e-9):
            best = min(best, c @ x)
    return best


def random_strictly_convex_qp(rng, d):
    """H with eigenvalues in [1, 10], box in [-1, 1]^d-ish, one equality through a box point."""
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    H = Q @ np.diag(rng.uniform(1.0, 10.0, d)) @ Q.T
    H = 0.5 * (H + H.T)
    f = rng.normal(scale=5.0, size=d)
    lo = -rng.uniform(0.2, 1.0, d)
    hi = rng.uniform(0.2, 1.0, d)
    a = rng.choice([-1.0, 1.0], d) * rng.uniform(0.5, 1.5, d)
    c = a @ rng.uniform(lo, hi)
    return H, f, lo, hi, a, c


def scale_feasible(chaser, target, sigma):
    """Do the two bodies, each inflated by sigma about its centre, intersect?"""
    from scipy.optimize import linprog

    Gc, Gt = chaser.A_body @ chaser.rotation.T, target.A_body @ target.rotation.T
    A = np.vstack([Gc, Gt])
    b = np.concatenate([sigma * chaser.b_body + Gc @ chaser.center, sigma * target.b_body + Gt @ target.center])
    res = linprog(np.zeros(3), A_ub=A, b_ub=b, bounds=[(None, None)] * 3, method="highs")
    return res.status == 0


def bisection_scaling(chaser, target, tol=1e-9):
    lo, hi = 0.0, 1.0
    while not scale_feasible(chaser, target, hi):
        lo, hi = hi, 2 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if scale_feasible(chaser, target, mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def grid_scaling(chaser, target, lo, hi, points=81):
    """min over a witness grid of the larger of the two body gauges."""
    g = np.linspace(lo, hi, points)
    X = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)

    def gauge(P):
        G = P.A_body @ P.rotation.T
        return ((X - P.center) @ G.T / P.b_body).max(axis=1)

    return float(np.maximum(gauge(chaser), gauge(target)).min())
