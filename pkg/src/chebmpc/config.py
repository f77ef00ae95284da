"""Scenario configuration: nested dataclasses plus a YAML loader.

Field names mirror :class:`~chebmpc.transcription.AxisSpec` and
:class:`~chebmpc.transcription.TranscriptionSpec`. Unknown keys are errors so
typos do not silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .collision import Polytope
from .transcription import AxisSpec, TranscriptionSpec


class ConfigError(ValueError):
    """Invalid scenario file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass
class PlantConfig:
    mass: float = 1.0  # kg
    noise_std: float = 1e-4  # m/s per control step
    seed: int = 0


@dataclass
class TranscriptionConfig:
    n: int = 3
    dt: float = 2.5  # prediction horizon, s
    rho: float = 1e4
    W_u: float = 1.0
    W_x: float = 0.1
    W_xp: float = 1.0
    u_max: float = 0.01  # N per axis
    V_u: float = 0.01
    v_max: float = 0.02  # m/s per axis
    V_xp: float = 0.1

    def axis(self) -> AxisSpec:
        return AxisSpec(
            W_u=self.W_u, W_x=self.W_x, W_xp=self.W_xp,
            u_min=-self.u_max, u_max=self.u_max, V_u=self.V_u,
            v_min=-self.v_max, v_max=self.v_max, V_xp=self.V_xp,
        )

    def spec(self, mass: float, q: int = 3) -> TranscriptionSpec:
        return TranscriptionSpec.create(n=self.n, dt=self.dt, axes=[self.axis()] * q, rho=self.rho, mass=mass)


@dataclass
class GuidanceConfig:
    target_center: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    port_normal: list[float] = field(default_factory=lambda: [1.0, 0.0, 0.0])
    approach_waypoint: list[float] = field(default_factory=lambda: [0.16, 0.16, 0.0])
    align_standoff: float = 0.11  # port to alignment point, m
    approach_radius: float = 0.25  # APPROACH -> ALIGN, around the approach waypoint
    align_radius: float = 0.15  # ALIGN -> DOCK, around the alignment point
    hysteresis: float = 1.1
    dock_tol: float = 0.01  # m
    dock_vel_tol: float = 0.005  # m/s


@dataclass
class CollisionConfig:
    enabled: bool = True
    chaser_half_width: float = 0.05
    target_half_width: float = 0.05
    # Optional hull overrides, body frame: vertex lists, or rows [a_x, a_y, a_z, b] meaning a.x <= b.
    chaser_vertices: list[list[float]] | None = None
    target_vertices: list[list[float]] | None = None
    chaser_halfspaces: list[list[float]] | None = None
    target_halfspaces: list[list[float]] | None = None
    s_thr: float = 1.5
    activation_radius: float = 0.4
    softness: float = 1.0  # slack weight on the avoidance rows

    @staticmethod
    def _hull(half_width, vertices, halfspaces, center) -> Polytope:
        if halfspaces is not None:
            rows = np.asarray(halfspaces, dtype=float)
            if rows.ndim != 2 or rows.shape[1] != 4:
                raise ConfigError("half-space rows must be [a_x, a_y, a_z, b]")
            return Polytope(rows[:, :3], rows[:, 3], np.asarray(center, float))
        if vertices is not None:
            return Polytope.from_vertices(vertices, center=center)
        return Polytope.box(half_width, center=center)

    def chaser(self) -> Polytope:
        return self._hull(self.chaser_half_width, self.chaser_vertices, self.chaser_halfspaces, (0.0, 0.0, 0.0))

    def target(self, center) -> Polytope:
        return self._hull(self.target_half_width, self.target_vertices, self.target_halfspaces, center)


@dataclass
class RunConfig:
    Ts: float = 0.5  # control period, s
    timeout: float = 400.0  # s
    mc_runs: int = 500
    initial_position: list[float] = field(default_factory=lambda: [-0.8, -0.4, 0.0])
    initial_velocity: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])


@dataclass
class ScenarioConfig:
    plant: PlantConfig = field(default_factory=PlantConfig)
    transcription: TranscriptionConfig = field(default_factory=TranscriptionConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    collision: CollisionConfig = field(default_factory=CollisionConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> "ScenarioConfig":
        p, t, g, c, r = self.plant, self.transcription, self.guidance, self.collision, self.run
        checks = [
            (p.mass > 0, "plant.mass must be positive"),
            (p.noise_std >= 0, "plant.noise_std must be >= 0"),
            (t.n >= 1, "transcription.n must be >= 1"),
            (t.dt > 0, "transcription.dt must be positive"),
            (t.rho > 0, "transcription.rho must be positive"),
            (t.u_max > 0 and t.v_max > 0, "transcription bounds must be positive"),
            (g.approach_radius > g.align_radius > 0, "guidance radii must be strictly decreasing"),
            (g.hysteresis >= 1.0, "guidance.hysteresis must be >= 1"),
            (c.s_thr > 0 and c.activation_radius > 0, "collision thresholds must be positive"),
            (r.Ts > 0, "run.Ts must be positive"),
            (r.timeout >= 0, "run.timeout must be >= 0"),
            (r.mc_runs >= 1, "run.mc_runs must be >= 1"),
            (np.linalg.norm(g.port_normal) > 0, "guidance.port_normal must be non-zero"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for name in ("target_center", "port_normal", "approach_waypoint"):
            if len(getattr(g, name)) != 3:
                raise ConfigError(f"guidance.{name} must have 3 entries")
        for name in ("initial_position", "initial_velocity"):
            if len(getattr(r, name)) != 3:
                raise ConfigError(f"run.{name} must have 3 entries")
        if c.chaser_half_width <= 0 or c.target_half_width <= 0:
            raise ConfigError("collision half widths must be positive")
        try:
            c.chaser()
            c.target(g.target_center)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"invalid collision hull: {exc}") from exc
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTION_TYPES = {
    "plant": PlantConfig,
    "transcription": TranscriptionConfig,
    "guidance": GuidanceConfig,
    "collision": CollisionConfig,
    "run": RunConfig,
}


def _line_of(node: yaml.Node, key: str) -> int | None:
    if isinstance(node, yaml.MappingNode):
        for k, _ in node.value:
            if k.value == key:
                return k.start_mark.line + 1
    return None


def _coerce(value: Any, default: Any, where: str, line: int | None):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true/false", line)
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer", line)
        return value
    if isinstance(default, float):
        # YAML 1.1 reads "1.0e4" (no exponent sign) as a string.
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                raise ConfigError(f"{where} must be a number", line) from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number", line)
        return float(value)
    return value


def config_from_dict(data: dict | None, root: yaml.Node | None = None) -> ScenarioConfig:
    cfg = ScenarioConfig()
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping of sections")
    for section, body in data.items():
        line = _line_of(root, section) if root is not None else None
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown section {section!r}", line)
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a mapping", line)
        sub_node = None
        if isinstance(root, yaml.MappingNode):
            sub_node = next((v for k, v in root.value if k.value == section), None)
        target = getattr(cfg, section)
        names = {f.name for f in dataclasses.fields(target)}
        for key, value in body.items():
            kline = _line_of(sub_node, key) if sub_node is not None else None
            if key not in names:
                raise ConfigError(f"unknown key {section}.{key}", kline)
            setattr(target, key, _coerce(value, getattr(target, key), f"{section}.{key}", kline))
    try:
        return cfg.validate()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"YAML syntax error: {exc.problem}", line) from exc
    return config_from_dict(data, root)


def dump_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
