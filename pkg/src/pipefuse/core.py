"""Shared domain types: sensor measurements, per-sensor traces, CSV ingestion.

A trace is the raw material every fusion method consumes: an ordered,
strictly increasing sequence of (tick, value) readings from one sensor on
one node. Ticks are abstract non-negative integers, not wall-clock time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

import math


class SensorKind(str, Enum):
    PRESSURE = "pressure"
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"
    PIR = "pir"
    MAGNETIC = "magnetic"

    @property
    def is_binary(self) -> bool:
        """Presence-type sensors report exactly 0.0 or 1.0."""
        return self in (SensorKind.PIR, SensorKind.MAGNETIC)


ANALOG_KINDS = (SensorKind.PRESSURE, SensorKind.TEMPERATURE, SensorKind.HUMIDITY)
BINARY_KINDS = (SensorKind.PIR, SensorKind.MAGNETIC)


class TraceError(ValueError):
    """A trace file or reading sequence violates the trace contract."""


class MixedSensorKindError(ValueError):
    """Traces of different sensor kinds cannot be merged."""


@dataclass(frozen=True)
class Measurement:
    """One timestamped scalar reading from a named sensor on a named node."""

    node_id: str
    sensor_kind: SensorKind
    timestamp: int
    value: float

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.timestamp}")
        if not math.isfinite(self.value):
            raise ValueError(f"value must be finite, got {self.value}")
        if self.sensor_kind.is_binary and self.value not in (0.0, 1.0):
            raise ValueError(
                f"{self.sensor_kind.value} readings must be exactly 0.0 or 1.0, "
                f"got {self.value}"
            )


@dataclass(frozen=True)
class Trace:
    """Readings for one (node_id, sensor_kind), strictly increasing in time."""

    readings: tuple[Measurement, ...]

    def __post_init__(self):
        if not self.readings:
            raise TraceError("trace must contain at least one reading")
        first = self.readings[0]
        prev_ts = None
        for m in self.readings:
            if m.node_id != first.node_id or m.sensor_kind != first.sensor_kind:
                raise TraceError(
                    "all readings in a trace must share node_id and sensor_kind"
                )
            if prev_ts is not None and m.timestamp <= prev_ts:
                kind = "duplicate" if m.timestamp == prev_ts else "non-monotone"
                raise TraceError(
                    f"{kind} timestamp {m.timestamp} after {prev_ts} in trace "
                    f"({first.node_id}, {first.sensor_kind.value})"
                )
            prev_ts = m.timestamp

    @property
    def node_id(self) -> str:
        return self.readings[0].node_id

    @property
    def sensor_kind(self) -> SensorKind:
        return self.readings[0].sensor_kind

    @property
    def timestamps(self) -> tuple[int, ...]:
        return tuple(m.timestamp for m in self.readings)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(m.value for m in self.readings)

    def __len__(self) -> int:
        return len(self.readings)


def trace_from_pairs(pairs, node_id: str, sensor_kind: SensorKind) -> Trace:
    """Build a Trace from (timestamp, value) pairs."""
    return Trace(
        tuple(Measurement(node_id, sensor_kind, int(t), float(v)) for t, v in pairs)
    )


CSV_HEADER = ["timestamp", "value"]


def load_trace(path, node_id: str, sensor_kind: SensorKind) -> Trace:
    """Read a `timestamp,value` CSV into a Trace.

    Raises TraceError for a missing/garbled header, malformed rows (with the
    1-based data row number), an empty file, or timestamps that are not
    strictly increasing.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceError(f"{path}: empty file") from None
        if [c.strip() for c in header] != CSV_HEADER:
            raise TraceError(f"{path}: expected header 'timestamp,value', got {header!r}")
        readings = []
        for row_num, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 2:
                raise TraceError(f"{path}: row {row_num}: expected 2 fields, got {len(row)}")
            try:
                ts = int(row[0])
                value = float(row[1])
            except ValueError as exc:
                raise TraceError(f"{path}: row {row_num}: {exc}") from None
            try:
                readings.append(Measurement(node_id, sensor_kind, ts, value))
            except ValueError as exc:
                raise TraceError(f"{path}: row {row_num}: {exc}") from None
    if not readings:
        raise TraceError(f"{path}: no data rows")
    try:
        return Trace(tuple(readings))
    except TraceError as exc:
        raise TraceError(f"{path}: {exc}") from None


def save_trace(trace: Trace, path) -> None:
    """Write a Trace as a `timestamp,value` CSV (inverse of load_trace)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for m in trace.readings:
            writer.writerow([m.timestamp, repr(m.value)])


def merge_traces(traces: Iterable[Trace]) -> list[tuple[int, list[Measurement]]]:
    """Time-align traces of one sensor kind into per-tick measurement groups.

    For every tick present in any trace, emits the measurements of the traces
    that have that tick; a trace missing a tick simply contributes nothing
    (no interpolation). Within a group, measurements keep the input trace
    order. Raises MixedSensorKindError if kinds differ.
    """
    traces = list(traces)
    if not traces:
        return []
    kinds = {t.sensor_kind for t in traces}
    if len(kinds) > 1:
        raise MixedSensorKindError(
            f"cannot merge traces of mixed sensor kinds: {sorted(k.value for k in kinds)}"
        )
    by_tick: dict[int, list[Measurement]] = {}
    for trace in traces:
        for m in trace.readings:
            by_tick.setdefault(m.timestamp, []).append(m)
    return [(tick, by_tick[tick]) for tick in sorted(by_tick)]
