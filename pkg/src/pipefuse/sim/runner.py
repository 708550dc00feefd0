"""End-to-end simulation: world -> node stage -> cluster stage -> detection,
with on-demand consensus across cluster heads and full message/energy
accounting. Deterministic for a fixed (config, seed)."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..consensus import DisconnectedGraphError
from ..core import SensorKind
from .config import ScenarioConfig
from .detect import attach_consensus, detect_events
from .metrics import RunMetrics, match_events, tally_messages
from .stages import (
    ClusterStageResult,
    Message,
    MessageKind,
    NodeStageResult,
    cluster_stage,
    consensus_stage,
    hold_series,
    node_stage,
)
from .world import WorldData, generate_world


@dataclass
class SimulationResult:
    config: ScenarioConfig
    world: WorldData
    node_results: dict
    cluster_results: dict
    window_series: dict
    reported_series: dict
    detections: list
    consensus_runs: list
    messages: list
    metrics: RunMetrics


def _rmse(reported, truth) -> float:
    total = 0.0
    count = 0
    for tick, value in reported:
        total += (value - truth[tick]) ** 2
        count += 1
    return math.sqrt(total / count) if count else float("nan")


def run_simulation(config: ScenarioConfig) -> SimulationResult:
    world = generate_world(config)
    topology = config.topology
    gateway = topology.gateway_id

    # level 1: per-node pre-processing and report-on-change
    node_results: dict = {}
    messages: list = []
    ops = 0
    for key in world.stream_keys():
        node_id, kind = key
        dst = topology.node(node_id).cluster_id
        result = node_stage(world.traces[key], config, dst)
        node_results[key] = result
        messages.extend(result.messages)
        ops += result.ops

    # level 2: cluster-head fusion and aggregation
    cluster_results: dict = {}
    window_series: dict = {}
    suspected = []
    cluster_kinds = sorted(
        {
            (n.cluster_id, kind)
            for n in topology.nodes
            for kind in n.sensors
        },
        key=lambda ck: (ck[0], ck[1].value),
    )
    for cluster_id, kind in cluster_kinds:
        member_reports = {
            n.node_id: node_results[(n.node_id, kind)].reports
            for n in topology.members_of(cluster_id)
            if kind in n.sensors
        }
        result = cluster_stage(cluster_id, kind, member_reports, config, gateway)
        cluster_results[(cluster_id, kind)] = result
        window_series[(cluster_id, kind)] = result.windows
        messages.extend(result.messages)
        ops += result.ops
        suspected.extend(
            (cluster_id, kind, node_id, w) for node_id, w in result.suspected_faulty
        )

    # level 3: detection at the gateway, consensus on demand
    detections = detect_events(window_series, config)
    consensus_runs = []
    if config.fusion.consensus_policy == "on_detection" and len(topology.cluster_heads) >= 2:
        updated = []
        for det in detections:
            if det.kind != "leak":
                updated.append(det)
                continue
            estimates = _latest_pressure_estimates(window_series, det.window_index)
            if len(estimates) < 2:
                updated.append(det)
                continue
            try:
                stage = consensus_stage(estimates, config, det.tick)
            except DisconnectedGraphError:
                # clusters without a pressure estimate can sever the peer
                # graph; the alert still goes out, just without agreement
                updated.append(det)
                continue
            messages.extend(stage.messages)
            ops += stage.ops
            consensus_runs.append(stage)
            updated.append(attach_consensus(det, stage.agreed))
        detections = updated
    for det in detections:
        messages.append(
            Message(gateway, "gcc", det.tick, config.energy.sample_bits, MessageKind.ALERT)
        )

    # estimation quality: zero-order-hold reconstruction vs ground truth
    reported_series: dict = {}
    rmse_per_stream: dict = {}
    for key in world.stream_keys():
        node_id, kind = key
        held = hold_series(node_results[key].reports, config.horizon)
        reported_series[key] = held
        if not kind.is_binary:
            rmse_per_stream[f"{node_id}:{kind.value}"] = _rmse(held, world.truth[key])

    rmse_values = [rmse_per_stream[k] for k in sorted(rmse_per_stream)]
    rmse_mean = sum(rmse_values) / len(rmse_values) if rmse_values else float("nan")
    rmse_max = max(rmse_values) if rmse_values else float("nan")

    node_ids = {n.node_id for n in topology.nodes}
    cluster_ids = set(topology.cluster_ids())
    levels = tally_messages(messages, node_ids, cluster_ids, gateway)
    total_bits = sum(m.payload_bits for m in messages)
    energy = config.energy
    radio_energy = float(total_bits * energy.ops_per_bit) * energy.per_op_cost
    compute_energy = float(ops) * energy.per_op_cost

    event_outcomes, false_positives = match_events(config, detections)
    metrics = RunMetrics(
        scenario=config.name,
        seed=config.seed,
        horizon=config.horizon,
        node=levels["node"],
        cluster=levels["cluster"],
        consensus=levels["consensus"],
        alert=levels["alert"],
        total_messages=len(messages),
        total_bits=total_bits,
        compute_ops=ops,
        radio_energy=radio_energy,
        compute_energy=compute_energy,
        total_energy=radio_energy + compute_energy,
        rmse_per_stream=rmse_per_stream,
        rmse_mean=rmse_mean,
        rmse_max=rmse_max,
        detections=tuple(detections),
        event_outcomes=tuple(event_outcomes),
        false_positives=false_positives,
        suspected_faulty=tuple(suspected),
    )
    return SimulationResult(
        config=config,
        world=world,
        node_results=node_results,
        cluster_results=cluster_results,
        window_series=window_series,
        reported_series=reported_series,
        detections=detections,
        consensus_runs=consensus_runs,
        messages=messages,
        metrics=metrics,
    )


def _latest_pressure_estimates(window_series: dict, window_index: int) -> dict:
    """Each cluster's most recent window-fused pressure at or before the
    given window; clusters without one are left out."""
    estimates = {}
    for (cluster_id, kind), windows in window_series.items():
        if kind != SensorKind.PRESSURE:
            continue
        value = None
        for s in windows:
            if s.index > window_index:
                break
            if s.fused is not None:
                value = s.fused
        if value is not None:
            estimates[cluster_id] = value
    return estimates
