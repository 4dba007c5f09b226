"""Declarative scenario description, validation and YAML round-tripping.

Every field has a default, so an empty file yields the reference
15-node, 150-minute scenario. Unknown keys are rejected and every
violation is reported with its dotted key path.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

SCHEMES = ("proposed", "avg", "rec", "def", "hp", "tprp")
MAX_NODES = 127

# Fifteen nodes over the 130 m square with the root in the middle. Nodes 4,
# 12 and 13 sit on relay positions with two or three children each, and
# every one of those children can also reach an honest parent.
REFERENCE_POSITIONS: dict[int, tuple[float, float]] = {
    1: (65.0, 65.0),
    2: (45.0, 47.0),
    3: (92.0, 45.0),
    4: (68.0, 92.0),
    5: (38.0, 98.0),
    6: (90.0, 80.0),
    7: (55.0, 117.0),
    8: (48.0, 16.0),
    9: (10.0, 84.0),
    10: (84.0, 14.0),
    11: (86.0, 116.0),
    12: (64.0, 37.0),
    13: (34.0, 68.0),
    14: (12.0, 56.0),
    15: (116.0, 112.0),
}
REFERENCE_ATTACKERS = (4, 12, 13)


class ScenarioError(ValueError):
    def __init__(self, violations: list[str]) -> None:
        self.violations = violations
        super().__init__("invalid scenario:\n  " + "\n  ".join(violations))


@dataclass
class TopologyConfig:
    nodes: int = 15
    root: int = 1
    area: float = 130.0
    layout: str = "reference"  # reference | random | explicit
    positions: dict[int, list[float]] | None = None
    placement_seed: int | None = None


@dataclass
class RadioConfig:
    tx_range: float = 50.0
    interference_range: float = 100.0
    exponent: float = 2.0
    max_attempts: int = 8
    bitrate: float = 250_000.0


@dataclass
class TrafficConfig:
    packet_size: int = 46
    data_period: float = 60.0
    duration: float = 9000.0
    jitter: float = 0.1
    start: float = 60.0


@dataclass
class RplConfig:
    rank_unit: int = 256
    hysteresis: int = 192
    trickle_imin: float = 4.0
    trickle_imax: float = 1048.0
    global_repair_threshold: int = 3
    dis_retry_limit: int = 5
    dao_period: float = 600.0
    max_link_failures: int = 3


@dataclass
class AttackSettings:
    drop_non_rpl: bool = True
    pfr: bool = True
    badmouth: bool = True
    epsilon: float = 0.02
    window: float | None = None
    neighbor_sample: float = 1.0
    num_victims: int = 1
    mix: float = 0.5


@dataclass
class AttackSection:
    ids: list[int] | None = None
    start: float = 0.0
    drop_non_rpl: bool = True
    pfr: bool = True
    badmouth: bool = True
    epsilon: float = 0.02
    window: float | None = None
    neighbor_sample: float = 1.0
    num_victims: int = 1
    mix: float = 0.5
    overrides: dict[int, dict[str, Any]] = field(default_factory=dict)

    def settings_for(self, node: int) -> AttackSettings:
        base = {f.name: getattr(self, f.name) for f in dataclasses.fields(AttackSettings)}
        base.update(self.overrides.get(node, {}))
        return AttackSettings(**base)


@dataclass
class DefenseConfig:
    scheme: str = "proposed"
    threshold: float = 0.5
    window: float = 300.0
    lambda_g: float = 0.2
    lambda_b: float = 0.0
    w_s: float | None = None
    w_d: float | None = None
    recovery_windows: int = 2
    attribution: str = "path"
    granularity: str = "window"
    threshold_grid: list[float] = field(default_factory=lambda: [round(0.1 * i, 1) for i in range(1, 10)])
    baseline_threshold: float = 0.5
    heartbeat_period: float = 60.0
    tprp_dishonest: bool = True
    monitor_cpu_ops: int = 20
    notify_repeats: int = 2


@dataclass
class EnergyConfig:
    e_tx: float = 17.4
    e_rx: float = 18.8
    e_cpu: float = 0.4
    p_idle: float = 30.0
    # share of time a sleeping radio spends listening; promiscuous nodes listen always
    duty_cycle: float = 0.1


@dataclass
class SweepGrid:
    lambdas: list[float] = field(default_factory=list)
    lambda_b: list[float] = field(default_factory=list)
    offsets: list[float] = field(default_factory=list)
    w_s: list[float] = field(default_factory=list)
    mixes: list[float] = field(default_factory=list)
    schemes: list[str] = field(default_factory=list)
    repetitions: int = 1
    seeds: list[int] | None = None


@dataclass
class ScenarioConfig:
    seed: int = 1
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    rpl: RplConfig = field(default_factory=RplConfig)
    attack: AttackSection = field(default_factory=AttackSection)
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    sweep: SweepGrid | None = None

    @property
    def attackers(self) -> list[int]:
        return list(self.attack.ids or [])

    def positions(self) -> dict[int, tuple[float, float]]:
        return resolve_positions(self)


def _is_dataclass_type(tp: Any) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _coerce(tp: Any, value: Any, path: str, errors: list[str]) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or (origin is not None and str(origin) == "<class 'types.UnionType'>"):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path, errors)
    if _is_dataclass_type(tp):
        return _build(tp, value, path, errors)
    if tp is Any:
        return value
    if origin is list:
        if not isinstance(value, (list, tuple)):
            errors.append(f"{path}: expected a list, got {type(value).__name__}")
            return []
        return [_coerce(args[0], v, f"{path}[{i}]", errors) for i, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, dict):
            errors.append(f"{path}: expected a mapping, got {type(value).__name__}")
            return {}
        return {_coerce(args[0], k, f"{path}.{k}", errors): _coerce(args[1], v, f"{path}.{k}", errors)
                for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            errors.append(f"{path}: expected true/false, got {value!r}")
        return bool(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, str) and value.strip().lstrip("-").isdigit():
                return int(value)
            errors.append(f"{path}: expected an integer, got {value!r}")
            return 0
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number, got {value!r}")
            return 0.0
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string, got {value!r}")
        return str(value)
    return value


def _build(cls: type, data: Any, path: str, errors: list[str]) -> Any:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        errors.append(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
        return cls()
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            errors.append(f"{_join(path, key)}: unknown key")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _coerce(hints[f.name], data[f.name], _join(path, f.name), errors)
    return cls(**kwargs)


def _join(path: str, key: Any) -> str:
    return f"{path}.{key}" if path else str(key)


def from_dict(data: dict | None) -> ScenarioConfig:
    errors: list[str] = []
    config = _build(ScenarioConfig, data or {}, "", errors)
    if not errors:
        _fill_defaults(config, data or {})
        errors.extend(validate(config))
    if errors:
        raise ScenarioError(errors)
    return config


def _fill_defaults(config: ScenarioConfig, raw: dict) -> None:
    d = config.defense
    if d.w_s is None and d.w_d is None:
        d.w_s, d.w_d = 0.3, 0.7
    elif d.w_d is None:
        d.w_d = round(1.0 - d.w_s, 12)
    elif d.w_s is None:
        d.w_s = round(1.0 - d.w_d, 12)
    t = config.topology
    if t.positions is not None and "layout" not in (raw.get("topology") or {}):
        t.layout = "explicit"
    if t.layout == "reference" and t.positions is None:
        t.positions = {n: [x, y] for n, (x, y) in REFERENCE_POSITIONS.items()}
    if config.attack.ids is None:
        config.attack.ids = list(REFERENCE_ATTACKERS) if t.layout == "reference" else _default_attackers(t.nodes)
    if t.layout == "random" and t.placement_seed is None:
        t.placement_seed = config.seed


def _default_attackers(n: int) -> list[int]:
    return [i for i in range(max(2, n - 2), n + 1)]


def validate(config: ScenarioConfig) -> list[str]:
    errors = []
    t = config.topology
    if not 2 <= t.nodes <= MAX_NODES:
        errors.append(f"topology.nodes: must lie in [2, {MAX_NODES}] (notification ids are 7 bits)")
    if not 1 <= t.root <= t.nodes:
        errors.append("topology.root: must be a node id in [1, nodes]")
    if t.area <= 0:
        errors.append("topology.area: must be positive")
    if t.layout not in ("reference", "random", "explicit"):
        errors.append(f"topology.layout: unknown layout {t.layout!r}")
    if t.layout == "reference" and t.nodes != len(REFERENCE_POSITIONS):
        errors.append(f"topology.nodes: the reference layout has {len(REFERENCE_POSITIONS)} nodes")
    if t.layout == "explicit" and not t.positions:
        errors.append("topology.positions: required for the explicit layout")
    if t.positions:
        if sorted(t.positions) != list(range(1, t.nodes + 1)):
            errors.append("topology.positions: ids must be exactly 1..nodes")
        for nid, pos in t.positions.items():
            if len(pos) != 2 or not all(0 <= c <= t.area for c in pos):
                errors.append(f"topology.positions.{nid}: must be [x, y] inside the area")
    r = config.radio
    if r.tx_range <= 0:
        errors.append("radio.tx_range: must be positive")
    if r.interference_range < r.tx_range:
        errors.append("radio.interference_range: must be at least tx_range")
    if r.max_attempts < 1:
        errors.append("radio.max_attempts: must be >= 1")
    tr = config.traffic
    for name in ("packet_size", "data_period", "duration"):
        if getattr(tr, name) <= 0:
            errors.append(f"traffic.{name}: must be positive")
    if not 0 <= tr.jitter < 1:
        errors.append("traffic.jitter: must lie in [0, 1)")
    rp = config.rpl
    if rp.trickle_imin <= 0 or rp.trickle_imax < rp.trickle_imin:
        errors.append("rpl.trickle_imax: must be >= trickle_imin > 0")
    if rp.global_repair_threshold < 1:
        errors.append("rpl.global_repair_threshold: must be >= 1")
    a = config.attack
    for i, nid in enumerate(a.ids or []):
        if nid == t.root:
            errors.append(f"attack.ids[{i}]: the root ({nid}) cannot be an attacker")
        elif not 1 <= nid <= t.nodes:
            errors.append(f"attack.ids[{i}]: {nid} is not a node id")
    if len(set(a.ids or [])) != len(a.ids or []):
        errors.append("attack.ids: duplicate ids")
    if not 0 < a.epsilon < 1:
        errors.append("attack.epsilon: must lie in (0, 1)")
    if not 0 <= a.mix <= 1:
        errors.append("attack.mix: must lie in [0, 1]")
    if a.num_victims < 0:
        errors.append("attack.num_victims: must be nonnegative")
    if not 0 < a.neighbor_sample <= 1:
        errors.append("attack.neighbor_sample: must lie in (0, 1]")
    settings_keys = {f.name for f in dataclasses.fields(AttackSettings)}
    for nid, override in a.overrides.items():
        if nid not in (a.ids or []):
            errors.append(f"attack.overrides.{nid}: not an attacker id")
        for key in override:
            if key not in settings_keys:
                errors.append(f"attack.overrides.{nid}.{key}: unknown key")
    d = config.defense
    if d.scheme not in SCHEMES:
        errors.append(f"defense.scheme: must be one of {', '.join(SCHEMES)}")
    if not 0 < d.threshold < 1:
        errors.append("defense.threshold: must lie in (0, 1)")
    if d.window <= 0:
        errors.append("defense.window: must be positive")
    for name in ("lambda_g", "lambda_b"):
        if getattr(d, name) < 0:
            errors.append(f"defense.{name}: must be nonnegative")
    if d.w_s is not None and d.w_d is not None:
        if d.w_s < 0 or d.w_d < 0 or abs(d.w_s + d.w_d - 1) > 1e-9:
            errors.append("defense.w_s: w_s and w_d must be nonnegative and sum to 1")
    if d.recovery_windows < 0:
        errors.append("defense.recovery_windows: must be nonnegative")
    if d.attribution not in ("source", "path"):
        errors.append("defense.attribution: must be 'source' or 'path'")
    if d.granularity not in ("packet", "window"):
        errors.append("defense.granularity: must be 'packet' or 'window'")
    if not d.threshold_grid or any(not 0 < x < 1 for x in d.threshold_grid):
        errors.append("defense.threshold_grid: values must lie in (0, 1)")
    if d.heartbeat_period <= 0:
        errors.append("defense.heartbeat_period: must be positive")
    for name in ("e_tx", "e_rx", "e_cpu", "p_idle"):
        if getattr(config.energy, name) < 0:
            errors.append(f"energy.{name}: must be nonnegative")
    if not 0 < config.energy.duty_cycle <= 1:
        errors.append("energy.duty_cycle: must lie in (0, 1]")
    s = config.sweep
    if s is not None:
        if s.repetitions < 1:
            errors.append("sweep.repetitions: must be >= 1")
        for i, w in enumerate(s.w_s):
            if not 0 <= w <= 1:
                errors.append(f"sweep.w_s[{i}]: must lie in [0, 1]")
        for i, m in enumerate(s.mixes):
            if not 0 <= m <= 1:
                errors.append(f"sweep.mixes[{i}]: must lie in [0, 1]")
        for i, name in enumerate(s.schemes):
            if name not in SCHEMES:
                errors.append(f"sweep.schemes[{i}]: unknown scheme {name!r}")
    return errors


def resolve_positions(config: ScenarioConfig) -> dict[int, tuple[float, float]]:
    t = config.topology
    if t.positions:
        return {int(k): (float(v[0]), float(v[1])) for k, v in sorted(t.positions.items())}
    return random_placement(t.nodes, t.area, config.radio.tx_range, t.placement_seed or 0, t.root)


def random_placement(n: int, area: float, tx_range: float, seed: int, root: int = 1,
                     max_tries: int = 10_000) -> dict[int, tuple[float, float]]:
    """Uniform placement, rejection-sampled until the radio graph is connected."""
    import numpy as np

    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        pts = rng.uniform(0.0, area, size=(n, 2))
        dist = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
        adj = dist <= tx_range
        seen = {root - 1}
        frontier = [root - 1]
        while frontier:
            i = frontier.pop()
            for j in np.flatnonzero(adj[i]):
                if j not in seen:
                    seen.add(int(j))
                    frontier.append(int(j))
        if len(seen) == n:
            return {i + 1: (round(float(x), 3), round(float(y), 3)) for i, (x, y) in enumerate(pts)}
    raise ScenarioError([f"topology: no connected placement found after {max_tries} tries"])


def load_scenario(path: str | Path) -> ScenarioConfig:
    text = Path(path).read_text()
    data = yaml.safe_load(text) if text.strip() else {}
    if data is not None and not isinstance(data, dict):
        raise ScenarioError(["<root>: scenario file must hold a mapping"])
    return from_dict(data)


def to_dict(config: ScenarioConfig) -> dict:
    return dataclasses.asdict(config)


def emit_scenario(config: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=False)


def with_overrides(config: ScenarioConfig, **sections: dict) -> ScenarioConfig:
    """Copy of ``config`` with per-section field overrides, re-validated."""
    data = to_dict(config)
    for section, values in sections.items():
        if isinstance(values, dict) and isinstance(data.get(section), dict):
            data[section].update(values)
        else:
            data[section] = values
    return from_dict(data)
