"""Command-line entry point: sim, bench, mc, selftest, dump-basis.

Every CSV starts with a ``# schema=1`` comment line. Exit codes: 0 success,
1 bad config or arguments, 2 runtime or solver failure; ``selftest`` returns
the number of failed suites (capped at 125).
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import chebyshev
from .baseline import DiscreteMpcSpec
from .collision import Polytope, scaling_factor
from .config import ConfigError, ScenarioConfig, load_config
from .qp import QpError, QpProblem, kkt_residuals, solve_qp
from .simulation import Mode, SimTrajectory, SimulationError, run_docking, run_monte_carlo
from .transcription import TranscriptionSpec, build_qp

SCHEMA = "# schema=1"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def default_config_path() -> Path:
    return Path(str(resources.files("chebmpc") / "data" / "default.yaml"))


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {v}")
    return v


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config or default_config_path())
    if getattr(args, "seed", None) is not None:
        cfg.plant.seed = args.seed
    return cfg


def _num(x) -> str:
    """Shortest round-trip text for a float (nan and inf included)."""
    return repr(float(x))


def _open_csv(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="")
    fh.write(SCHEMA + "\n")
    return fh, csv.writer(fh)


# ----------------------------------------------------------------------- sim

TRAJ_COLUMNS = ["t", "r_x", "r_y", "r_z", "v_x", "v_y", "v_z", "u_x", "u_y", "u_z", "epsilon", "s", "mode"]


def write_trajectory(traj: SimTrajectory, path: Path) -> None:
    fh, w = _open_csv(path)
    with fh:
        w.writerow(TRAJ_COLUMNS)
        for k in range(len(traj)):
            w.writerow([_num(traj.t[k]), *map(_num, traj.r[k]), *map(_num, traj.v[k]), *map(_num, traj.u[k]),
                        _num(traj.epsilon[k]), _num(traj.s[k]), Mode(traj.mode[k]).name])


def format_summary(summary: dict) -> str:
    keys = ("status", "docked", "steps", "min_s", "min_s_active", "max_abs_v", "total_effort", "control_tv")
    lines = ["summary:"]
    for k in keys:
        v = summary[k]
        lines.append(f"  {k}: {v:.6g}" if isinstance(v, float) else f"  {k}: {v}")
    return "\n".join(lines)


def cmd_sim(args) -> int:
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or "trajectory.csv")
    code = EXIT_OK
    try:
        traj = run_docking(cfg)
    except SimulationError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        traj = exc.trajectory or SimTrajectory(status="solver_error")
        code = EXIT_RUNTIME
    try:
        write_trajectory(traj, out)
    except OSError as exc:
        print(f"cannot write {out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(format_summary(traj.summary(cfg.run.Ts)))
    if traj.collided:
        code = EXIT_RUNTIME
    return code


# --------------------------------------------------------------------- bench

BENCH_COLUMNS = ["method", "q", "p", "n", "dim", "n_eq", "n_in", "bytes", "cold_us", "warm_us"]


@dataclass
class BenchmarkCase:
    method: str
    q: int
    p: int
    n: int = 3
    repeats: int = 5
    Ts: float = 0.5
    offset: float = 0.1  # initial position error per axis, m; large values saturate the bounds

    def __post_init__(self):
        if self.method not in ("mpc3", "discrete"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.repeats < 3:
            raise ValueError("repeats must be >= 3")
        if self.q < 1 or self.p < 1 or self.n < 1:
            raise ValueError("q, p and n must be positive")
        if self.method == "discrete" and self.q % 2:
            raise ValueError("discrete double integrator needs an even state dimension q")


def _bench_problem(case: BenchmarkCase, cfg: ScenarioConfig):
    """Problem plus a ``next_terms(x)`` for the warm re-solve one step later."""
    tc = cfg.transcription
    if case.method == "mpc3":
        spec = TranscriptionSpec.create(n=case.n, dt=case.p * case.Ts, axes=[tc.axis()] * case.q, rho=tc.rho)
        x0, v0 = np.full(case.q, case.offset), np.zeros(case.q)
        build = lambda x: build_qp(spec, x, v0, np.zeros(case.q), v0)
        terms = lambda x: spec.linear_terms(x, v0, np.zeros(case.q), v0)
        return build, terms, x0
    m = case.q // 2
    big = 1e6
    spec = DiscreteMpcSpec.double_integrator(
        n_axes=m, Ts=case.Ts, p=case.p, W_u=tc.W_u, W_pos=tc.W_x, W_vel=tc.W_xp,
        y_min=np.concatenate([np.full(m, -big), np.full(m, -tc.v_max)]),
        y_max=np.concatenate([np.full(m, big), np.full(m, tc.v_max)]),
    )
    x0 = np.concatenate([np.full(m, case.offset), np.zeros(m)])
    return spec.build_qp, spec.linear_terms, x0


def _time_us(fn) -> float:
    t0 = time.perf_counter_ns()
    fn()
    return (time.perf_counter_ns() - t0) / 1e3


def _bench_timers(case: BenchmarkCase, cfg: ScenarioConfig):
    """The problem plus cold and warm re-solve closures at a slightly shifted state."""
    build, terms, x0 = _bench_problem(case, cfg)
    problem = build(x0)
    first = solve_qp(problem)
    shifted = x0 * 0.99  # one small step toward the target
    f1, b1 = terms(shifted)

    def cold():
        solve_qp(build(shifted))

    def warm():
        problem.update_linear_terms(f1, b1)
        solve_qp(problem, first.warm_start())

    return problem, cold, warm


def run_bench_cases(cases: list[BenchmarkCase], cfg: ScenarioConfig | None = None) -> list[dict]:
    """Median cold and warm solve times per case.

    Cases are timed round-robin, one sample of each per round, so slow drift
    in machine load spreads over all cases instead of skewing one of them.
    """
    cfg = cfg or ScenarioConfig()
    timers = [_bench_timers(c, cfg) for c in cases]
    for _, cold, warm in timers:  # warmup
        cold()
        warm()
    samples = [([], []) for _ in cases]
    for rnd in range(max(c.repeats for c in cases)):
        for case, (_, cold, warm), (cs, ws) in zip(cases, timers, samples):
            if rnd < case.repeats:
                cs.append(_time_us(cold))
                ws.append(_time_us(warm))
    rows = []
    for case, (problem, _, _), (cs, ws) in zip(cases, timers, samples):
        rows.append({
            "method": case.method, "q": case.q, "p": case.p, "n": case.n if case.method == "mpc3" else "",
            "dim": problem.dim, "n_eq": problem.n_eq, "n_in": problem.n_in, "bytes": problem.nbytes(),
            "cold_us": round(statistics.median(cs), 1), "warm_us": round(statistics.median(ws), 1),
        })
    return rows


def cmd_bench(args) -> int:
    try:
        cfg = _load(args) if args.config else ScenarioConfig()
        cases = [
            BenchmarkCase(method, q, p, args.n, args.repeats, offset=args.offset)
            for method in args.methods.split(",")
            for q in args.q
            for p in args.p
            if not (method == "discrete" and q % 2)
        ]
        if not cases:
            raise ValueError("no benchmark cases selected")
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or "bench.csv")
    try:
        fh, w = _open_csv(out)
        with fh:
            w.writerow(BENCH_COLUMNS)
            for row in run_bench_cases(cases, cfg):
                w.writerow([row[c] for c in BENCH_COLUMNS])
                print(",".join(str(row[c]) for c in BENCH_COLUMNS))
    except (QpError, OSError) as exc:
        print(f"benchmark failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# ------------------------------------------------------------------------ mc

RUN_COLUMNS = ["run", "seed", "status", "docked", "collided", "steps", "min_s", "min_s_active",
               "max_abs_v", "total_effort", "control_tv"]


def write_monte_carlo(result, Ts: float, out_dir: Path) -> tuple[Path, Path]:
    runs_path, band_path = out_dir / "runs.csv", out_dir / "s_band.csv"
    fh, w = _open_csv(runs_path)
    with fh:
        w.writerow(RUN_COLUMNS)
        for r in result.runs:
            w.writerow([r.run, r.seed, r.status, int(r.docked), int(r.collided), r.steps,
                        _num(r.min_s), _num(r.min_s_active), _num(r.max_abs_v), _num(r.total_effort), _num(r.control_tv)])
    fh, w = _open_csv(band_path)
    with fh:
        w.writerow(["step", "t", *[f"q{q:g}" for q in result.quantiles]])
        for k, row in enumerate(result.band):
            w.writerow([k, _num(k * Ts), *map(_num, row)])
    return runs_path, band_path


def cmd_mc(args) -> int:
    try:
        cfg = _load(args)
        if args.runs is not None:
            if args.runs < 1:
                raise ConfigError("runs must be >= 1")
            cfg.run.mc_runs = args.runs
        if args.jobs < 1:
            raise ConfigError("jobs must be >= 1")
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or "mc")
    try:
        result = run_monte_carlo(cfg, jobs=args.jobs)
        runs_path, band_path = write_monte_carlo(result, cfg.run.Ts, out)
    except (QpError, OSError) as exc:
        print(f"monte carlo failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    n = len(result.runs)
    print(f"runs: {n}  docked: {result.n_docked}  collided: {result.n_collided}  "
          f"min_s_active: {result.min_s_active:.6g}")
    if n == 1:
        r = result.runs[0]
        print(format_summary({**r.__dict__}))
    print(f"wrote {runs_path} and {band_path}")
    return EXIT_OK


# ------------------------------------------------------------------ selftest

def _suite_quadrature(corrupt_weights: bool = False) -> str | None:
    for n in range(1, 16):
        w = chebyshev.quadrature_weights(n)
        if corrupt_weights:
            w = w * (1.0 + 1e-3)
        tau = chebyshev.cg_nodes(n)
        for k in range(n + 1):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            err = abs(w @ tau**k - exact)
            if err > 1e-12 * max(1.0, abs(exact)):
                return f"n={n} degree {k}: moment error {err:.3g}"
    return None


def _suite_integration(corrupt_weights: bool = False) -> str | None:
    from numpy.polynomial import chebyshev as npc

    rng = np.random.default_rng(1)
    for n in (3, 7, 12):
        tau = rng.uniform(-1, 1, 8)
        beta, gamma = chebyshev.integration_rows(tau, n)
        for j in range(n + 1):
            c = np.zeros(n + 1)
            c[j] = 1.0
            b_ref = npc.chebval(tau, npc.chebint(c, lbnd=-1))
            g_ref = npc.chebval(tau, npc.chebint(c, m=2, lbnd=-1))
            err = max(np.abs(beta[:, j] - b_ref).max(), np.abs(gamma[:, j] - g_ref).max())
            if err > 1e-10:
                return f"n={n} column {j}: operator error {err:.3g}"
        basis = chebyshev.ChebyshevBasis.build(n)
        if np.abs(basis.beta_start).max() or np.abs(basis.gamma_start).max():
            return f"n={n}: operators do not vanish at the start"
    return None


def _suite_qp(corrupt_weights: bool = False) -> str | None:
    rng = np.random.default_rng(2)
    for trial in range(10):
        d = int(rng.integers(2, 8))
        M = rng.normal(size=(d, d))
        x_feas = rng.normal(size=d)
        A_eq, A_in = rng.normal(size=(1, d)), rng.normal(size=(2 * d, d))
        prob = QpProblem(M @ M.T + 0.5 * np.eye(d), rng.normal(size=d), A_eq, A_eq @ x_feas,
                         A_in, A_in @ x_feas + rng.uniform(0.0, 1.0, 2 * d))
        res = solve_qp(prob)
        worst = max(kkt_residuals(prob, res.x, res.duals_eq, res.duals_in).values())
        if worst > 1e-8:
            return f"trial {trial}: KKT residual {worst:.3g}"
        again = solve_qp(prob, res.warm_start())
        if again.iterations > 1:
            return f"trial {trial}: warm re-solve took {again.iterations} iterations"
    return None


def _suite_dcol(corrupt_weights: bool = False) -> str | None:
    target = Polytope.box(0.5)
    for d in (0.5, 1.0, 2.0):
        res = scaling_factor(Polytope.box(0.5, center=(d, 0.0, 0.0)), target)
        if abs(res.s - d) > 1e-8 or np.abs(res.grad_rc - [1.0, 0.0, 0.0]).max() > 1e-8:
            return f"d={d}: s={res.s!r}, grad={res.grad_rc}"
    return None


SUITES = {
    "quadrature": _suite_quadrature,
    "integration": _suite_integration,
    "qp": _suite_qp,
    "dcol": _suite_dcol,
}


def run_selftest(corrupt_weights: bool = False, out=None) -> int:
    out = out or sys.stdout
    failed = 0
    for name, suite in SUITES.items():
        try:
            msg = suite(corrupt_weights=corrupt_weights)
        except Exception as exc:  # a crashing suite counts as a failure
            msg = f"{type(exc).__name__}: {exc}"
        print(f"{name}: {'PASS' if msg is None else 'FAIL ' + msg}", file=out)
        failed += msg is not None
    return min(failed, 125)


def cmd_selftest(args) -> int:
    return run_selftest(corrupt_weights=args.inject_fault == "weights")


# ---------------------------------------------------------------- dump-basis

def cmd_dump_basis(args) -> int:
    if args.n < 1:
        print("config error: n must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    basis = chebyshev.ChebyshevBasis.build(args.n)
    n = args.n
    out = Path(args.out or f"basis_n{n}.csv")
    try:
        fh, w = _open_csv(out)
        with fh:
            w.writerow(["point", "tau", "weight", *[f"T{j}" for j in range(n + 1)],
                        *[f"beta{j}" for j in range(n + 1)], *[f"gamma{j}" for j in range(n + 1)]])
            w.writerow(["start", _num(-1.0), "", *map(_num, basis.T_start.ravel()),
                        *map(_num, basis.beta_start.ravel()), *map(_num, basis.gamma_start.ravel())])
            for i in range(basis.size):
                w.writerow([i, _num(basis.nodes[i]), _num(basis.weights[i]), *map(_num, basis.T_mat[i]),
                            *map(_num, basis.beta_mat[i]), *map(_num, basis.gamma_mat[i])])
    except OSError as exc:
        print(f"cannot write {out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chebmpc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="run one docking scenario")
    p.add_argument("--config", type=Path, help="scenario YAML (default: bundled scenario)")
    p.add_argument("--out", type=Path, help="trajectory CSV (default: trajectory.csv)")
    p.add_argument("--seed", type=_u64, help="override plant.seed")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("bench", help="problem sizes and solve times")
    p.add_argument("--config", type=Path, help="take weights and bounds from this scenario")
    p.add_argument("--out", type=Path, help="CSV path (default: bench.csv)")
    p.add_argument("--methods", default="mpc3,discrete")
    p.add_argument("--q", type=_int_list, default=[6], help="comma-separated state/axis counts")
    p.add_argument("--p", type=_int_list, default=[5, 10, 15, 20], help="comma-separated horizons in samples")
    p.add_argument("--n", type=int, default=3, help="Chebyshev order")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--offset", type=float, default=0.1, help="initial position error per axis, m")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("mc", help="Monte Carlo docking batch")
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, help="output directory (default: mc)")
    p.add_argument("--seed", type=_u64, help="master seed")
    p.add_argument("--runs", type=int, help="override run.mc_runs")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("selftest", help="operator oracle checks")
    p.add_argument("--inject-fault", choices=["weights"], help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("dump-basis", help="write basis matrices to CSV")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_dump_basis)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
