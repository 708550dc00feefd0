"""Scenario configuration for the three-level monitoring simulator.

A scenario is a YAML document with nested sections (topology, signals,
events, fusion, detection, energy). Every field has a default except the
topology, the seed, and the horizon; validation collects all problems at
once and reports them with dotted field paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import yaml

from ..core import SensorKind


class ConfigError(ValueError):
    """Scenario configuration is invalid; `errors` lists every offence."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    cluster_id: str
    position: float
    sensors: tuple[SensorKind, ...]


@dataclass(frozen=True)
class ClusterSpec:
    cluster_id: str
    peers: tuple[str, ...] = ()


@dataclass(frozen=True)
class UavVisit:
    start: int
    end: int
    cluster_id: str

    def covers(self, tick: int, cluster_id: str) -> bool:
        return self.cluster_id == cluster_id and self.start <= tick <= self.end


@dataclass(frozen=True)
class Topology:
    nodes: tuple[NodeSpec, ...]
    cluster_heads: tuple[ClusterSpec, ...]
    gateway_id: str = "gw"
    uav_patrol: tuple[UavVisit, ...] = ()

    def cluster_ids(self) -> list[str]:
        return [c.cluster_id for c in self.cluster_heads]

    def members_of(self, cluster_id: str) -> list[NodeSpec]:
        return [n for n in self.nodes if n.cluster_id == cluster_id]

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def peer_edges(self) -> list[tuple[str, str]]:
        """Undirected cluster-head links, deduplicated and sorted."""
        edges = set()
        for c in self.cluster_heads:
            for p in c.peers:
                edges.add(tuple(sorted((c.cluster_id, p))))
        return sorted(edges)


@dataclass(frozen=True)
class SignalSpec:
    """Ground-truth model for one analog kind: baseline + drift*t + noise."""

    baseline: float
    drift: float = 0.0
    noise_std: float = 0.0


@dataclass(frozen=True)
class EventSpec:
    kind: str  # "leak" | "intrusion"
    start: int
    end: int
    location: float
    magnitude: float = 0.0
    radius: float = 50.0


@dataclass(frozen=True)
class FusionConfig:
    """Placement and tuning of the fusion methods along the pipeline."""

    node_ekf: bool = True
    ekf_q: float = 0.1
    ekf_r: float = 0.1
    report_delta: float = 1.0
    cluster_fusvaf: bool = True
    fusvaf_alpha: float = 1.0
    fusvaf_omega: float = 1.0
    # constant prediction weight: a cluster-wide excursion (leak front) must
    # not zero out the fusion denominator while the gate is still catching up
    fusvaf_adaptive_alpha: bool = False
    gate_k_sigma: float = 3.0
    gate_w_min: Optional[float] = None  # None: derived per kind from noise_std
    gate_w_max: float = 100.0
    # gate memory of half a reporting window keeps cluster fusion responsive
    # within one window when the whole cluster moves (leak onset)
    gate_window: int = 5
    consensus_policy: str = "on_detection"  # "off" | "on_detection"
    consensus_tol: float = 1e-9
    consensus_max_iter: int = 1000


@dataclass(frozen=True)
class DetectionConfig:
    window: int = 10
    leak_threshold: float = 20.0
    leak_persistence: int = 2
    fault_persistence: int = 3


@dataclass(frozen=True)
class EnergyConfig:
    """Radio cost in microcontroller-op equivalents plus per-op compute charges."""

    ops_per_bit: int = 1000
    per_op_cost: float = 1.0
    sample_bits: int = 32
    ekf_ops_per_update: int = 50
    fusvaf_ops_per_value: int = 20
    aggregation_ops_per_value: int = 1
    consensus_ops_per_value: int = 5


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    horizon: int
    topology: Topology
    signals: dict
    events: tuple[EventSpec, ...] = ()
    fusion: FusionConfig = FusionConfig()
    detection: DetectionConfig = DetectionConfig()
    energy: EnergyConfig = EnergyConfig()

    def gate_floor(self, kind: SensorKind) -> float:
        """Gate half-width floor for a kind; derived from the scenario's
        noise level when not set explicitly."""
        if self.fusion.gate_w_min is not None:
            return self.fusion.gate_w_min
        noise = self.signals[kind].noise_std if kind in self.signals else 0.0
        slack = self.fusion.report_delta if self.fusion.node_ekf else noise
        return max(0.1, 4.0 * noise + slack)


def _build_section(cls, data, prefix, errors, converters=None):
    converters = converters or {}
    if not isinstance(data, dict):
        errors.append(f"{prefix}: expected a mapping, got {type(data).__name__}")
        return None
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            errors.append(f"{prefix}.{key}: unknown key")
    kwargs = {}
    for key, value in data.items():
        if key in known:
            kwargs[key] = converters[key](value) if key in converters else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{prefix}: {exc}")
        return None


def _parse_kind(value, where, errors):
    try:
        return SensorKind(value)
    except ValueError:
        errors.append(f"{where}: unknown sensor kind {value!r}")
        return None


def scenario_from_dict(data: dict, name: str = "scenario") -> ScenarioConfig:
    """Build and validate a ScenarioConfig; raises ConfigError on any problem."""
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a mapping"])

    known_top = {"name", "seed", "horizon", "topology", "signals", "events",
                 "fusion", "detection", "energy"}
    for key in data:
        if key not in known_top:
            errors.append(f"{key}: unknown key")

    name = data.get("name", name)
    seed = data.get("seed")
    if seed is None:
        errors.append("seed: required for reproducibility")
        seed = 0
    elif not isinstance(seed, int) or isinstance(seed, bool):
        errors.append(f"seed: expected an integer, got {seed!r}")
        seed = 0
    horizon = data.get("horizon")
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 1:
        errors.append(f"horizon: expected a positive integer, got {horizon!r}")
        horizon = 1

    topology = _parse_topology(data.get("topology"), errors)
    signals = _parse_signals(data.get("signals", {}), errors)
    events = _parse_events(data.get("events", []), horizon, errors)
    fusion = _build_section(
        FusionConfig,
        data.get("fusion", {}),
        "fusion",
        errors,
        # YAML 1.1 reads a bare `off` as boolean False
        converters={"consensus_policy": lambda v: "off" if v is False else v},
    )
    detection = _build_section(DetectionConfig, data.get("detection", {}), "detection", errors)
    energy = _build_section(EnergyConfig, data.get("energy", {}), "energy", errors)

    if fusion is not None:
        _check_fusion(fusion, errors)
    if detection is not None:
        _check_detection(detection, errors)
    if energy is not None:
        _check_energy(energy, errors)
    if topology is not None:
        _check_topology(topology, errors)
        _check_cross(topology, signals, events, errors)

    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(
        name=str(name),
        seed=seed,
        horizon=horizon,
        topology=topology,
        signals=signals,
        events=tuple(events),
        fusion=fusion,
        detection=detection,
        energy=energy,
    )


def _parse_topology(data, errors) -> Optional[Topology]:
    if data is None:
        errors.append("topology: required")
        return None
    if not isinstance(data, dict):
        errors.append("topology: expected a mapping")
        return None
    nodes = []
    for i, raw in enumerate(data.get("nodes", []) or []):
        prefix = f"topology.nodes[{i}]"
        if not isinstance(raw, dict):
            errors.append(f"{prefix}: expected a mapping")
            continue
        kinds = []
        for s in raw.get("sensors", []) or []:
            kind = _parse_kind(s, f"{prefix}.sensors", errors)
            if kind is not None:
                kinds.append(kind)
        node = _build_section(
            NodeSpec,
            {**raw, "sensors": tuple(kinds)},
            prefix,
            errors,
            converters={"position": float},
        )
        if node is not None:
            nodes.append(node)
    heads = []
    for i, raw in enumerate(data.get("cluster_heads", []) or []):
        prefix = f"topology.cluster_heads[{i}]"
        if not isinstance(raw, dict):
            errors.append(f"{prefix}: expected a mapping")
            continue
        head = _build_section(
            ClusterSpec, {**raw, "peers": tuple(raw.get("peers", []) or [])}, prefix, errors
        )
        if head is not None:
            heads.append(head)
    patrol = []
    uav = data.get("uav") or {}
    if not isinstance(uav, dict):
        errors.append("topology.uav: expected a mapping")
        uav = {}
    for i, raw in enumerate(uav.get("patrol", []) or []):
        visit = _build_section(UavVisit, raw, f"topology.uav.patrol[{i}]", errors)
        if visit is not None:
            patrol.append(visit)
    gateway_id = data.get("gateway_id", "gw")
    known = {"nodes", "cluster_heads", "uav", "gateway_id"}
    for key in data:
        if key not in known:
            errors.append(f"topology.{key}: unknown key")
    return Topology(tuple(nodes), tuple(heads), str(gateway_id), tuple(patrol))


def _parse_signals(data, errors) -> dict:
    signals = {}
    if not isinstance(data, dict):
        errors.append("signals: expected a mapping")
        return signals
    for key, raw in data.items():
        kind = _parse_kind(key, "signals", errors)
        if kind is None:
            continue
        if kind.is_binary:
            errors.append(f"signals.{key}: binary kinds take no signal spec")
            continue
        spec = _build_section(SignalSpec, raw, f"signals.{key}", errors)
        if spec is None:
            continue
        if spec.noise_std < 0:
            errors.append(f"signals.{key}.noise_std: must be non-negative")
        signals[kind] = spec
    return signals


def _parse_events(data, horizon, errors) -> list[EventSpec]:
    events = []
    if not isinstance(data, list):
        errors.append("events: expected a list")
        return events
    for i, raw in enumerate(data):
        prefix = f"events[{i}]"
        event = _build_section(EventSpec, raw, prefix, errors,
                               converters={"location": float, "magnitude": float,
                                           "radius": float})
        if event is None:
            continue
        if event.kind not in ("leak", "intrusion"):
            errors.append(f"{prefix}.kind: must be 'leak' or 'intrusion', got {event.kind!r}")
        if event.start < 0:
            errors.append(f"{prefix}.start: must be non-negative")
        if event.end < event.start:
            errors.append(f"{prefix}.end: must be >= start")
        if event.end >= horizon:
            errors.append(f"{prefix}.end: tick {event.end} outside horizon {horizon}")
        if event.kind == "leak" and event.magnitude <= 0:
            errors.append(f"{prefix}.magnitude: leak needs a positive magnitude")
        if event.kind == "leak" and event.radius <= 0:
            errors.append(f"{prefix}.radius: must be positive")
        if event.location < 0:
            errors.append(f"{prefix}.location: must be non-negative")
        events.append(event)
    return events


def _check_topology(topology: Topology, errors) -> None:
    if not topology.nodes:
        errors.append("topology.nodes: at least one node required")
    if not topology.cluster_heads:
        errors.append("topology.cluster_heads: at least one cluster head required")
    seen_nodes = set()
    for n in topology.nodes:
        if n.node_id in seen_nodes:
            errors.append(f"topology.nodes: duplicate node_id {n.node_id!r}")
        seen_nodes.add(n.node_id)
        if n.position < 0:
            errors.append(f"topology.nodes[{n.node_id}].position: must be non-negative")
        if not n.sensors:
            errors.append(f"topology.nodes[{n.node_id}].sensors: at least one sensor required")
    cluster_ids = set()
    for c in topology.cluster_heads:
        if c.cluster_id in cluster_ids:
            errors.append(f"topology.cluster_heads: duplicate cluster_id {c.cluster_id!r}")
        cluster_ids.add(c.cluster_id)
    for n in topology.nodes:
        if n.cluster_id not in cluster_ids:
            errors.append(
                f"topology.nodes[{n.node_id}].cluster_id: unknown cluster {n.cluster_id!r}"
            )
    for c in topology.cluster_heads:
        if not any(n.cluster_id == c.cluster_id for n in topology.nodes):
            errors.append(f"topology.cluster_heads[{c.cluster_id}]: cluster has no member nodes")
        for p in c.peers:
            if p not in cluster_ids:
                errors.append(f"topology.cluster_heads[{c.cluster_id}].peers: unknown cluster {p!r}")
            if p == c.cluster_id:
                errors.append(f"topology.cluster_heads[{c.cluster_id}].peers: self link")
    if len(cluster_ids) > 1 and not _peer_graph_connected(topology):
        errors.append("topology.cluster_heads: peer graph must be connected")
    for v in topology.uav_patrol:
        if v.cluster_id not in cluster_ids:
            errors.append(f"topology.uav.patrol: unknown cluster {v.cluster_id!r}")
        if v.end < v.start:
            errors.append("topology.uav.patrol: end must be >= start")


def _peer_graph_connected(topology: Topology) -> bool:
    ids = topology.cluster_ids()
    adj = {c: set() for c in ids}
    for a, b in topology.peer_edges():
        if a in adj and b in adj:
            adj[a].add(b)
            adj[b].add(a)
    seen = {ids[0]}
    stack = [ids[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(ids)


def _check_cross(topology, signals, events, errors) -> None:
    used_analog = {k for n in topology.nodes for k in n.sensors if not k.is_binary}
    for kind in sorted(used_analog, key=lambda k: k.value):
        if kind not in signals:
            errors.append(f"signals.{kind.value}: required (kind appears in topology)")
    has_binary = any(k.is_binary for n in topology.nodes for k in n.sensors)
    for i, e in enumerate(events):
        if e.kind == "intrusion" and not has_binary:
            errors.append(f"events[{i}]: intrusion needs a node with pir/magnetic sensors")
        if e.kind == "leak" and not any(
            SensorKind.PRESSURE in n.sensors for n in topology.nodes
        ):
            errors.append(f"events[{i}]: leak needs a node with a pressure sensor")


def _check_fusion(fusion: FusionConfig, errors) -> None:
    if fusion.ekf_q <= 0 or fusion.ekf_r <= 0:
        errors.append("fusion.ekf_q/ekf_r: must be positive")
    if fusion.report_delta < 0:
        errors.append("fusion.report_delta: must be non-negative")
    if fusion.fusvaf_alpha < 0:
        errors.append("fusion.fusvaf_alpha: must be non-negative")
    if fusion.fusvaf_omega <= 0:
        errors.append("fusion.fusvaf_omega: must be positive")
    if fusion.gate_k_sigma <= 0:
        errors.append("fusion.gate_k_sigma: must be positive")
    if fusion.gate_w_min is not None and fusion.gate_w_min <= 0:
        errors.append("fusion.gate_w_min: must be positive")
    if fusion.gate_w_max <= 0:
        errors.append("fusion.gate_w_max: must be positive")
    if fusion.gate_window < 1:
        errors.append("fusion.gate_window: must be >= 1")
    if fusion.consensus_policy not in ("off", "on_detection"):
        errors.append(
            f"fusion.consensus_policy: must be 'off' or 'on_detection', got "
            f"{fusion.consensus_policy!r}"
        )
    if fusion.consensus_tol <= 0:
        errors.append("fusion.consensus_tol: must be positive")
    if fusion.consensus_max_iter < 1:
        errors.append("fusion.consensus_max_iter: must be >= 1")


def _check_detection(detection: DetectionConfig, errors) -> None:
    if detection.window < 1:
        errors.append("detection.window: must be >= 1")
    if detection.leak_threshold <= 0:
        errors.append("detection.leak_threshold: must be positive")
    if detection.leak_persistence < 1:
        errors.append("detection.leak_persistence: must be >= 1")
    if detection.fault_persistence < 1:
        errors.append("detection.fault_persistence: must be >= 1")


def _check_energy(energy: EnergyConfig, errors) -> None:
    if not 1000 <= energy.ops_per_bit <= 3000:
        errors.append(
            f"energy.ops_per_bit: must lie in [1000, 3000], got {energy.ops_per_bit}"
        )
    if energy.per_op_cost <= 0:
        errors.append("energy.per_op_cost: must be positive")
    if energy.sample_bits < 1:
        errors.append("energy.sample_bits: must be >= 1")
    for fname in ("ekf_ops_per_update", "fusvaf_ops_per_value",
                  "aggregation_ops_per_value", "consensus_ops_per_value"):
        if getattr(energy, fname) < 0:
            errors.append(f"energy.{fname}: must be non-negative")


def apply_overrides(data: dict, overrides) -> dict:
    """Apply `dotted.path=value` overrides onto a raw config mapping.

    Values are parsed as YAML scalars. Sections the document omitted (all
    defaults) are created on the way; key names themselves are checked by
    scenario validation, so an override of a non-existent key still fails
    with a config error naming it. Returns a copy, leaving the input
    untouched.
    """
    import copy

    result = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError([f"override {item!r}: expected key=value"])
        path, _, raw_value = item.partition("=")
        keys = path.strip().split(".")
        if not all(keys):
            raise ConfigError([f"override {path!r}: malformed key path"])
        target = result
        for k in keys[:-1]:
            if k not in target:
                target[k] = {}
            target = target[k]
            if not isinstance(target, dict):
                raise ConfigError([f"override {path!r}: {k} is not a section"])
        target[keys[-1]] = yaml.safe_load(raw_value)
    return result


def load_scenario(path, overrides=(), seed: Optional[int] = None) -> ScenarioConfig:
    """Load, override, and validate a scenario YAML file."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: invalid YAML: {exc}"]) from None
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    if overrides:
        data = apply_overrides(data, overrides)
    config = scenario_from_dict(data, name=path.stem)
    if seed is not None:
        config = replace(config, seed=seed)
    return config
