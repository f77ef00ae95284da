"""Closed-loop docking simulation and Monte Carlo harness.

The truth plant is a 3-axis double integrator with additive Gaussian noise on
the velocity after every control period. Guidance switches between three
modes (APPROACH, ALIGN, DOCK); collision avoidance runs only inside the
activation radius and never in DOCK.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .collision import Polytope, inject_avoidance, scaling_factor
from .config import GuidanceConfig, ScenarioConfig
from .qp import QpError
from .baseline import DiscreteMpcController, DiscreteMpcSpec
from .transcription import AxisSpec, Mpc3Controller, TranscriptionSpec


class Mode(enum.IntEnum):
    APPROACH = 0
    ALIGN = 1
    DOCK = 2


class SimulationError(RuntimeError):
    """Closed-loop run aborted; ``trajectory`` holds everything up to the failure."""

    def __init__(self, message: str, step: int, trajectory: "SimTrajectory | None" = None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory


@dataclass
class PlantState:
    r: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.r)) and np.all(np.isfinite(self.v))):
            raise ValueError("plant state must be finite")


def step_plant(
    state: PlantState,
    u,
    mass: float,
    dt_step: float,
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
    perturbation: Callable[[PlantState, np.ndarray], PlantState] | None = None,
) -> PlantState:
    """Exact zero-order-hold update, then the perturbation hook, then noise."""
    if dt_step <= 0:
        raise ValueError(f"step must be positive, got {dt_step}")
    a = np.asarray(u, dtype=float).reshape(3) / mass
    nxt = PlantState(state.r + state.v * dt_step + 0.5 * a * dt_step**2, state.v + a * dt_step, state.t + dt_step)
    if perturbation is not None:
        nxt = perturbation(nxt, a)
    if noise_std > 0:
        if rng is None:
            raise ValueError("noise requested without a random generator")
        nxt.v = nxt.v + rng.normal(0.0, noise_std, 3)
    return nxt


@dataclass(frozen=True)
class GuidanceGeometry:
    """Derived points of the three-mode guidance law."""

    target: np.ndarray
    normal: np.ndarray
    approach_point: np.ndarray
    align_point: np.ndarray
    dock_point: np.ndarray
    radii: tuple[float, float]
    hysteresis: float

    @classmethod
    def from_config(cls, g: GuidanceConfig, target_half_width: float, chaser_half_width: float) -> "GuidanceGeometry":
        c = np.asarray(g.target_center, float)
        n = np.asarray(g.port_normal, float)
        n = n / np.linalg.norm(n)
        port = c + target_half_width * n
        return cls(
            target=c,
            normal=n,
            approach_point=np.asarray(g.approach_waypoint, float),
            align_point=port + g.align_standoff * n,
            dock_point=port + chaser_half_width * n,
            radii=(g.approach_radius, g.align_radius),
            hysteresis=g.hysteresis,
        )

    def setpoint(self, mode: Mode) -> np.ndarray:
        return (self.approach_point, self.align_point, self.dock_point)[mode]


def guidance_update(state: PlantState, geometry: GuidanceGeometry, mode: Mode) -> tuple[np.ndarray, np.ndarray, Mode]:
    """Commanded position/velocity for the (possibly updated) mode.

    Mode k hands over to k+1 once the chaser is within ``radii[k]`` of the
    mode-k setpoint; it falls back only if that distance grows past
    ``hysteresis * radii[k]``.
    """
    mode = Mode(mode)
    if mode < Mode.DOCK:
        d = np.linalg.norm(state.r - geometry.setpoint(mode))
        if d <= geometry.radii[mode]:
            mode = Mode(mode + 1)
    if mode > Mode.APPROACH:
        prev = Mode(mode - 1)
        d = np.linalg.norm(state.r - geometry.setpoint(prev))
        if d > geometry.hysteresis * geometry.radii[prev]:
            mode = prev
    return geometry.setpoint(mode).copy(), np.zeros(3), mode


@dataclass
class SimTrajectory:
    t: list = field(default_factory=list)
    r: list = field(default_factory=list)
    v: list = field(default_factory=list)
    u: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    s: list = field(default_factory=list)
    mode: list = field(default_factory=list)
    avoidance: list = field(default_factory=list)
    status: str = "running"  # docked | timeout | collision | solver_error
    collided: bool = False
    qp_iterations: list = field(default_factory=list)

    def append(self, t, r, v, u, eps, s, mode, active, its):
        self.t.append(float(t))
        self.r.append(np.array(r, dtype=float))
        self.v.append(np.array(v, dtype=float))
        self.u.append(np.array(u, dtype=float))
        self.epsilon.append(float(eps))
        self.s.append(float(s))
        self.mode.append(int(mode))
        self.avoidance.append(bool(active))
        self.qp_iterations.append(int(its))

    def __len__(self) -> int:
        return len(self.t)

    def arrays(self) -> dict:
        return {
            "t": np.array(self.t),
            "r": np.array(self.r).reshape(-1, 3),
            "v": np.array(self.v).reshape(-1, 3),
            "u": np.array(self.u).reshape(-1, 3),
            "epsilon": np.array(self.epsilon),
            "s": np.array(self.s),
            "mode": np.array(self.mode, dtype=int),
            "avoidance": np.array(self.avoidance, dtype=bool),
        }

    @property
    def docked(self) -> bool:
        return self.status == "docked"

    def summary(self, Ts: float) -> dict:
        a = self.arrays()
        active = a["avoidance"]
        return {
            "status": self.status,
            "docked": self.docked,
            "steps": len(self),
            "min_s": float(a["s"].min()) if len(self) else math.nan,
            "min_s_active": float(a["s"][active].min()) if active.any() else math.nan,
            "max_abs_v": float(np.abs(a["v"]).max()) if len(self) else math.nan,
            "total_effort": float(np.abs(a["u"]).sum() * Ts),
            "control_tv": float(np.abs(np.diff(a["u"], axis=0)).sum()) if len(self) > 1 else 0.0,
        }


def run_docking(cfg: ScenarioConfig, seed: int | None = None, collision_enabled: bool | None = None,
                perturbation=None, observer=None) -> SimTrajectory:
    """Guidance, MPC solve (plus avoidance re-solve), plant step, until docked.

    ``observer(step, solution, spec)`` sees the plan that was applied at each step.

    Raises :class:`SimulationError` on timeout or solver failure; the partial
    trajectory is attached to the exception.
    """
    pc, tc, gc, cc, rc = cfg.plant, cfg.transcription, cfg.guidance, cfg.collision, cfg.run
    enabled = cc.enabled if collision_enabled is None else collision_enabled
    rng = np.random.default_rng(pc.seed if seed is None else seed)
    spec = tc.spec(pc.mass)
    ctrl = Mpc3Controller(spec)
    geom = GuidanceGeometry.from_config(gc, cc.target_half_width, cc.chaser_half_width)
    chaser = cc.chaser()
    target = cc.target(geom.target)

    state = PlantState(rc.initial_position, rc.initial_velocity, 0.0)
    mode = Mode.APPROACH
    traj = SimTrajectory()
    max_steps = int(math.floor(rc.timeout / rc.Ts + 1e-9))
    for step in range(max_steps + 1):
        r_cmd, v_cmd, mode = guidance_update(state, geom, mode)
        s_now = scaling_factor(chaser.moved(state.r), target).s
        active = enabled and mode != Mode.DOCK and np.linalg.norm(state.r - geom.target) <= cc.activation_radius
        if active and s_now < 1.0:
            traj.collided = True

        if mode == Mode.DOCK and np.linalg.norm(state.r - geom.dock_point) <= gc.dock_tol \
                and np.linalg.norm(state.v) <= gc.dock_vel_tol:
            traj.append(state.t, state.r, state.v, np.zeros(3), 0.0, s_now, mode, active, 0)
            traj.status = "collision" if traj.collided else "docked"
            return traj
        if step == max_steps:
            traj.append(state.t, state.r, state.v, np.zeros(3), 0.0, s_now, mode, active, 0)
            break

        try:
            sol = ctrl.solve(state.r, state.v, x_target=r_cmd, v_target=v_cmd)
            its = sol.qp.iterations
            if active:
                rep = inject_avoidance(ctrl.problem, spec, sol, chaser, target, cc.s_thr, cc.softness)
                if rep.injected:
                    sol = ctrl.solve_problem(rep.problem, state.r, state.v, warm=sol.qp.warm_start())
                    its += sol.qp.iterations
        except QpError as exc:
            traj.status = "solver_error"
            raise SimulationError(f"solver failure at step {step}: {exc}", step, traj) from exc

        if observer is not None:
            observer(step, sol, spec)
        traj.append(state.t, state.r, state.v, sol.u_now, sol.epsilon, s_now, mode, active, its)
        state = step_plant(state, sol.u_now, pc.mass, rc.Ts, pc.noise_std, rng, perturbation)

    traj.status = "timeout"
    raise SimulationError(f"timeout after {rc.timeout} s without docking", len(traj), traj)


@dataclass
class RunSummary:
    run: int
    seed: int
    status: str
    docked: bool
    steps: int
    min_s: float
    min_s_active: float
    max_abs_v: float
    total_effort: float
    control_tv: float
    collided: bool
    s: np.ndarray = field(repr=False)
    avoidance: np.ndarray = field(repr=False)


@dataclass
class MonteCarloResult:
    runs: list[RunSummary]
    quantiles: tuple[float, ...]
    band: np.ndarray  # (steps, len(quantiles)) of s, NaN where no run is alive

    @property
    def n_docked(self) -> int:
        return sum(r.docked for r in self.runs)

    @property
    def n_collided(self) -> int:
        return sum(r.collided for r in self.runs)

    @property
    def min_s_active(self) -> float:
        vals = [r.min_s_active for r in self.runs if not math.isnan(r.min_s_active)]
        return min(vals) if vals else math.nan


def run_seeds(master_seed: int, runs: int) -> list[int]:
    """Per-run seeds derived deterministically from the master seed."""
    children = np.random.SeedSequence(master_seed).spawn(runs)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _one_run(args) -> RunSummary:
    cfg, idx, seed = args
    try:
        traj = run_docking(cfg, seed=seed)
    except SimulationError as exc:
        traj = exc.trajectory if exc.trajectory is not None else SimTrajectory(status="solver_error")
    a = traj.arrays()
    summ = traj.summary(cfg.run.Ts)
    return RunSummary(
        run=idx, seed=seed, status=traj.status, docked=traj.docked, steps=len(traj),
        min_s=summ["min_s"], min_s_active=summ["min_s_active"], max_abs_v=summ["max_abs_v"],
        total_effort=summ["total_effort"], control_tv=summ["control_tv"], collided=traj.collided, s=a["s"], avoidance=a["avoidance"],
    )


def run_monte_carlo(cfg: ScenarioConfig, runs: int | None = None, seed: int | None = None,
                    jobs: int = 1, quantiles=(0.0, 0.05, 0.5, 0.95, 1.0)) -> MonteCarloResult:
    """Independent noisy docking runs from the same initial pose.

    A failed run is recorded with its status instead of aborting the batch.
    """
    runs = cfg.run.mc_runs if runs is None else runs
    seed = cfg.plant.seed if seed is None else seed
    tasks = [(cfg, i, s) for i, s in enumerate(run_seeds(seed, runs))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_run, tasks, chunksize=max(1, runs // (4 * jobs))))
    else:
        results = [_one_run(t) for t in tasks]
    longest = max(len(r.s) for r in results)
    stack = np.full((len(results), longest), np.nan)
    for i, r in enumerate(results):
        stack[i, : len(r.s)] = r.s
    band = np.full((longest, len(quantiles)), np.nan)
    alive = ~np.isnan(stack)
    for k in range(longest):
        col = stack[alive[:, k], k]
        if col.size:
            band[k] = np.quantile(col, quantiles)
    return MonteCarloResult(results, tuple(quantiles), band)


@dataclass
class ComparisonResult:
    t: np.ndarray
    x_cheb: np.ndarray
    x_discrete: np.ndarray
    u_cheb: np.ndarray
    u_discrete: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(np.abs(self.x_cheb - self.x_discrete).max())


def compare_double_integrator(x0: float = 1.0, steps: int = 40, Ts: float = 0.5, p: int = 5, n: int = 3,
                              cheb_weights=(1.0, 1.6, 0.5), discrete_weights=(1.0, 1.0, 0.0)) -> ComparisonResult:
    """1-DoF regulation to the origin under both controllers, noiseless.

    ``cheb_weights`` is (W_u, W_x, W_xp) with the horizon ``p * Ts``;
    ``discrete_weights`` is (W_u, W_pos, W_vel). The two weight sets are not
    equivalent, the defaults are a matched pair.
    """
    Wu, Wx, Wxp = cheb_weights
    spec = TranscriptionSpec.create(n=n, dt=p * Ts, axes=[AxisSpec(W_u=Wu, W_x=Wx, W_xp=Wxp)])
    cheb = Mpc3Controller(spec)
    dspec = DiscreteMpcSpec.double_integrator(1, Ts, p, W_u=discrete_weights[0], W_pos=discrete_weights[1],
                                              W_vel=discrete_weights[2])
    disc = DiscreteMpcController(dspec)

    xc, vc = x0, 0.0
    xd = np.array([x0, 0.0])
    xs_c, xs_d, us_c, us_d = [xc], [x0], [], []
    for _ in range(steps):
        u = float(cheb.solve([xc], [vc]).u_now[0])
        xc, vc = xc + vc * Ts + 0.5 * u * Ts**2, vc + u * Ts
        ud = disc.solve(xd).u_now
        xd = dspec.Ad @ xd + dspec.Bd @ ud
        xs_c.append(xc)
        xs_d.append(float(xd[0]))
        us_c.append(u)
        us_d.append(float(ud[0]))
    return ComparisonResult(np.arange(steps + 1) * Ts, np.array(xs_c), np.array(xs_d), np.array(us_c), np.array(us_d))
