"""Run metrics: message/bit accounting, energy, estimation error, detections.

Radio-equivalent energy charges every transmitted bit at ops_per_bit
microcontroller operations; compute energy charges the ops the node and
cluster stages actually spent. All CSV output is deterministic: float cells
use repr() and no wall-clock data is ever written.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .config import ScenarioConfig
from .stages import MessageKind


@dataclass(frozen=True)
class LevelTally:
    messages: int = 0
    bits: int = 0


@dataclass(frozen=True)
class EventOutcome:
    """How one injected event fared: matched detection and its latency."""

    index: int
    kind: str
    start: int
    detected_tick: Optional[int]
    latency: Optional[int]
    validated: bool


@dataclass(frozen=True)
class RunMetrics:
    scenario: str
    seed: int
    horizon: int
    node: LevelTally
    cluster: LevelTally
    consensus: LevelTally
    alert: LevelTally
    total_messages: int
    total_bits: int
    compute_ops: int
    radio_energy: float
    compute_energy: float
    total_energy: float
    rmse_per_stream: dict
    rmse_mean: float
    rmse_max: float
    detections: tuple
    event_outcomes: tuple
    false_positives: int
    suspected_faulty: tuple


def tally_messages(messages, node_ids, cluster_ids, gateway_id) -> dict:
    """Split the message log into the architecture's levels."""
    levels = {"node": [0, 0], "cluster": [0, 0], "consensus": [0, 0], "alert": [0, 0]}
    for m in messages:
        if m.kind == MessageKind.CONSENSUS:
            level = "consensus"
        elif m.kind == MessageKind.ALERT:
            level = "alert"
        elif m.src in node_ids:
            level = "node"
        else:
            level = "cluster"
        levels[level][0] += 1
        levels[level][1] += m.payload_bits
    return {k: LevelTally(messages=v[0], bits=v[1]) for k, v in levels.items()}


def match_events(config: ScenarioConfig, detections) -> tuple[list, int]:
    """Pair injected events with detections.

    A leak event is consistent with any later leak detection (the
    depression persists); an intrusion with a detection up to one reporting
    window past its end. Each event's latency comes from its earliest
    consistent detection; only detections consistent with no event at all
    count as false positives (several clusters may flag one leak).
    """
    window = config.detection.window

    def consistent(event, det):
        if det.kind != event.kind or det.tick < event.start:
            return False
        if event.kind == "intrusion" and det.tick > event.end + window:
            return False
        return True

    outcomes = []
    explained = set()
    for i, event in enumerate(config.events):
        first = None
        for j, det in enumerate(detections):
            if consistent(event, det):
                explained.add(j)
                if first is None:
                    first = det
        if first is None:
            outcomes.append(EventOutcome(i, event.kind, event.start, None, None, False))
        else:
            outcomes.append(
                EventOutcome(
                    i, event.kind, event.start, first.tick, first.tick - event.start,
                    first.validated,
                )
            )
    false_positives = len(detections) - len(explained)
    return outcomes, false_positives


_METRICS_COLUMNS = [
    "scenario", "seed", "horizon",
    "node_messages", "node_bits",
    "cluster_messages", "cluster_bits",
    "consensus_messages", "consensus_bits",
    "alert_messages", "alert_bits",
    "total_messages", "total_bits",
    "compute_ops", "radio_energy", "compute_energy", "total_energy",
    "rmse_mean", "rmse_max",
    "events", "detections", "detected_events", "false_positives",
    "mean_detection_latency", "validated_detections",
]


def metrics_row(m: RunMetrics) -> dict:
    latencies = [o.latency for o in m.event_outcomes if o.latency is not None]
    mean_latency = sum(latencies) / len(latencies) if latencies else float("nan")
    return {
        "scenario": m.scenario,
        "seed": m.seed,
        "horizon": m.horizon,
        "node_messages": m.node.messages,
        "node_bits": m.node.bits,
        "cluster_messages": m.cluster.messages,
        "cluster_bits": m.cluster.bits,
        "consensus_messages": m.consensus.messages,
        "consensus_bits": m.consensus.bits,
        "alert_messages": m.alert.messages,
        "alert_bits": m.alert.bits,
        "total_messages": m.total_messages,
        "total_bits": m.total_bits,
        "compute_ops": m.compute_ops,
        "radio_energy": repr(m.radio_energy),
        "compute_energy": repr(m.compute_energy),
        "total_energy": repr(m.total_energy),
        "rmse_mean": repr(m.rmse_mean),
        "rmse_max": repr(m.rmse_max),
        "events": len(m.event_outcomes),
        "detections": len(m.detections),
        "detected_events": sum(1 for o in m.event_outcomes if o.latency is not None),
        "false_positives": m.false_positives,
        "mean_detection_latency": repr(mean_latency),
        "validated_detections": sum(1 for d in m.detections if d.validated),
    }


def write_metrics_csv(metrics_list, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=_METRICS_COLUMNS)
        writer.writeheader()
        for m in metrics_list:
            writer.writerow(metrics_row(m))


def write_detections_csv(detections, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["kind", "tick", "cluster_id", "sensor_kind", "window", "validated",
             "consensus_value"]
        )
        for d in detections:
            writer.writerow([
                d.kind, d.tick, d.cluster_id, d.sensor_kind.value, d.window_index,
                int(d.validated),
                "" if d.consensus_value is None else repr(d.consensus_value),
            ])


def write_stream_csv(truth, measured, reported, path) -> None:
    """Per-stream estimate trail: `tick,truth,measurement,reported,abs_error`."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tick", "truth", "measurement", "reported", "abs_error"])
        for tick, (tr, me, re) in enumerate(zip(truth, measured, reported)):
            err = "" if re is None else repr(abs(re - tr))
            writer.writerow([
                tick, repr(float(tr)), repr(float(me)),
                "" if re is None else repr(float(re)), err,
            ])


def write_consensus_runs_csv(runs, path) -> None:
    """All consensus invocations of a run: `run,iteration,mse`."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "iteration", "mse"])
        for run_index, result in enumerate(runs):
            for i, mse in enumerate(result.mse_history):
                writer.writerow([run_index, i, repr(mse)])


def write_summary(result, out_dir: Path, files: list) -> Path:
    """Human-readable run summary; lists every artifact written."""
    m = result.metrics
    lines = [
        f"scenario: {m.scenario}",
        f"seed: {m.seed}",
        f"horizon: {m.horizon} ticks",
        "",
        f"messages: node={m.node.messages} cluster={m.cluster.messages} "
        f"consensus={m.consensus.messages} alert={m.alert.messages} "
        f"total={m.total_messages}",
        f"bits: total={m.total_bits}",
        f"energy: radio={m.radio_energy} compute={m.compute_energy} "
        f"total={m.total_energy}",
        f"estimation rmse: mean={m.rmse_mean:.6g} max={m.rmse_max:.6g}",
        f"events: {len(m.event_outcomes)} injected, "
        f"{sum(1 for o in m.event_outcomes if o.latency is not None)} detected, "
        f"{m.false_positives} false positives",
    ]
    for o in m.event_outcomes:
        status = (
            f"detected at tick {o.detected_tick} (latency {o.latency})"
            if o.latency is not None
            else "not detected"
        )
        validated = " [validated]" if o.validated else ""
        lines.append(f"  event {o.index} ({o.kind} @ {o.start}): {status}{validated}")
    if m.suspected_faulty:
        lines.append("suspected faulty nodes:")
        for cluster_id, kind, node_id, window in m.suspected_faulty:
            lines.append(
                f"  {node_id} ({kind.value}) in {cluster_id}, window {window}"
            )
    lines.append("")
    lines.append("artifacts:")
    for f in files:
        lines.append(f"  {f}")
    lines.append("")
    path = out_dir / "summary.txt"
    path.write_text("\n".join(lines), encoding="utf-8")
    return path
