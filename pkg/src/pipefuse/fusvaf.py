"""Fuzzy validation gating and confidence-weighted fusion of redundant readings.

Each incoming value gets a confidence in [0, 1] from a piecewise bell curve
centered on the current prediction; readings outside the gate get zero and
are excluded from the weighted fusion, which blends the surviving readings
with the prediction itself. The gate re-centers on every new prediction and
its width tracks the median absolute residual of a sliding window, so a
single faulty sensor cannot inflate it.
"""

from __future__ import annotations

import csv
import math
import statistics
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import Trace, merge_traces
from . import ekf


class DegenerateDenominatorError(ArithmeticError):
    """All measurements invalidated and no prediction weight: nothing to fuse."""


@dataclass(frozen=True)
class ValidationGate:
    """Acceptance interval (v_l, v_r) around prediction x_hat.

    a_l and a_r shape the left/right bell flanks; smaller values make
    confidence fall off faster away from x_hat.
    """

    x_hat: float
    v_l: float
    v_r: float
    a_l: float
    a_r: float

    def __post_init__(self):
        vals = (self.x_hat, self.v_l, self.v_r, self.a_l, self.a_r)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"gate parameters must be finite, got {vals}")
        if not (self.v_l < self.x_hat < self.v_r):
            raise ValueError(
                f"gate must satisfy v_l < x_hat < v_r, got "
                f"({self.v_l}, {self.x_hat}, {self.v_r})"
            )
        if self.a_l <= 0 or self.a_r <= 0:
            raise ValueError(f"shape parameters must be positive, got {self.a_l}, {self.a_r}")

    @classmethod
    def symmetric(cls, center: float, half_width: float) -> "ValidationGate":
        """Gate of +-half_width around center with flank shape half_width/2."""
        if half_width <= 0:
            raise ValueError(f"half_width must be positive, got {half_width}")
        return cls(
            x_hat=center,
            v_l=center - half_width,
            v_r=center + half_width,
            a_l=half_width / 2.0,
            a_r=half_width / 2.0,
        )

    @property
    def width(self) -> float:
        return self.v_r - self.v_l


@dataclass(frozen=True)
class FusionParams:
    """Weight of the prediction in the fused value: alpha / omega."""

    alpha: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.omega <= 0:
            raise ValueError(f"omega must be positive, got {self.omega}")


def _bell_branch(dev: float, reach: float, a: float) -> float:
    # (exp(-(dev/a)^2) - exp(-(reach/a)^2)) / (1 - exp(-(reach/a)^2)),
    # written with expm1 so near-flat gates (a >> reach) stay accurate.
    num = math.expm1(-((dev / a) ** 2)) - math.expm1(-((reach / a) ** 2))
    den = -math.expm1(-((reach / a) ** 2))
    return num / den


def confidence(gate: ValidationGate, z: float) -> float:
    """Confidence in [0, 1] of reading z under the gate.

    1 at z = x_hat, falling bell-shaped to exactly 0 at both gate
    boundaries, 0 outside.
    """
    if z <= gate.v_l or z > gate.v_r:
        return 0.0
    if z <= gate.x_hat:
        sigma = _bell_branch(gate.x_hat - z, gate.x_hat - gate.v_l, gate.a_l)
    else:
        sigma = _bell_branch(gate.x_hat - z, gate.x_hat - gate.v_r, gate.a_r)
    return min(1.0, max(0.0, sigma))


def _fuse_weighted(pairs, x_hat: float, alpha: float, omega: float) -> float:
    # pairs sorted for exact permutation invariance of the running sums.
    num = 0.0
    den = 0.0
    for z, sigma in sorted(pairs):
        num += z * sigma
        den += sigma
    if den == 0.0:
        if alpha == 0.0:
            raise DegenerateDenominatorError(
                "all measurements invalidated and alpha = 0: no information to fuse"
            )
        return x_hat
    return (num + alpha * x_hat / omega) / (den + alpha / omega)


def fuse(gate: ValidationGate, params: FusionParams, measurements: Iterable[float]) -> float:
    """Confidence-weighted mean of the measurements and the prediction.

    Returns (sum z_i*sigma_i + alpha*x_hat/omega) / (sum sigma_i + alpha/omega).
    With no surviving measurement and alpha > 0 the prediction is returned
    unchanged; with alpha = 0 as well, DegenerateDenominatorError is raised.
    """
    pairs = [(z, confidence(gate, z)) for z in measurements]
    return _fuse_weighted(pairs, gate.x_hat, params.alpha, params.omega)


@dataclass(frozen=True)
class GateAdaptation:
    """Width rule for the sliding gate.

    half-width = clamp(k_sigma * median(|residual|), w_min, w_max) over the
    last `window` ticks; for the first `window` ticks the configured
    initial half-width is used instead (warm-up).
    """

    k_sigma: float = 3.0
    w_min: float = 0.1
    w_max: float = 100.0
    window: int = 10
    initial_half_width: Optional[float] = None

    def __post_init__(self):
        if self.k_sigma <= 0 or self.w_min <= 0 or self.w_max < self.w_min:
            raise ValueError("require k_sigma > 0 and 0 < w_min <= w_max")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.initial_half_width is not None and self.initial_half_width <= 0:
            raise ValueError("initial_half_width must be positive")

    @property
    def warmup_half_width(self) -> float:
        return self.initial_half_width if self.initial_half_width is not None else self.w_max


def adapt_gate(
    gate: ValidationGate,
    recent_residuals: Sequence[float],
    new_prediction: float,
    adaptation: GateAdaptation = GateAdaptation(),
) -> ValidationGate:
    """Re-center the gate at new_prediction and re-derive its width.

    The half-width follows the median absolute residual (clamped), so a
    larger residual dispersion never yields a narrower gate and a single
    outlier residual barely moves it.
    """
    if not recent_residuals:
        raise ValueError("residual window must be non-empty")
    if not math.isfinite(new_prediction):
        raise ValueError(f"new_prediction must be finite, got {new_prediction}")
    spread = statistics.median(abs(r) for r in recent_residuals)
    half_width = min(max(adaptation.k_sigma * spread, adaptation.w_min), adaptation.w_max)
    return ValidationGate.symmetric(new_prediction, half_width)


class SmoothingPredictor:
    """Exponential smoothing fallback predictor: level <- beta*obs + (1-beta)*level."""

    def __init__(self, beta: float = 0.5):
        if not 0 < beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {beta}")
        self.beta = beta
        self._level: Optional[float] = None

    def predict(self) -> Optional[float]:
        return self._level

    def observe(self, value: float) -> None:
        if self._level is None:
            self._level = value
        else:
            self._level = self.beta * value + (1.0 - self.beta) * self._level


class EkfPredictor:
    """Default predictor: scalar random-walk Kalman filter over fused values."""

    def __init__(self, q: float = 0.1, r: float = 0.1, p0: float = 1.0):
        self._model = ekf.random_walk_model(q, r)
        self._p0 = p0
        self._state: Optional[ekf.FilterState] = None

    def predict(self) -> Optional[float]:
        if self._state is None:
            return None
        return float(self._state.x_hat[0])

    def observe(self, value: float) -> None:
        if self._state is None:
            self._state = ekf.FilterState(x_hat=[value], P=[[self._p0]])
        else:
            prior = ekf.predict(self._state, self._model)
            self._state = ekf.update(prior, [value], self._model)


@dataclass(frozen=True)
class SensorReading:
    node_id: str
    value: float
    sigma: float


@dataclass(frozen=True)
class FusionPoint:
    """Fused output for one tick, with per-node confidences and the gate
    that produced them, for fault-detection inspection."""

    tick: int
    fused: float
    predicted: float
    readings: tuple[SensorReading, ...]
    warmup: bool
    gate: ValidationGate

    def sigma_of(self, node_id: str) -> Optional[float]:
        for r in self.readings:
            if r.node_id == node_id:
                return r.sigma
        return None


def fusvaf_stream(
    traces: Sequence[Trace],
    params: FusionParams = FusionParams(),
    predictor=None,
    adaptation: GateAdaptation = GateAdaptation(),
    adaptive_alpha: bool = True,
) -> list[FusionPoint]:
    """Run gate-validate-fuse over time-aligned traces.

    Per tick: predict, assign confidences, fuse, then feed the fused value
    back to the predictor and the residual window that sizes the next gate.
    With adaptive_alpha the prediction weight for a tick is the previous
    tick's total confidence (params.alpha seeds the first tick); otherwise
    params.alpha is used throughout. Outputs during gate warm-up are
    flagged.

    On the very first tick, before the predictor has seen anything, the
    prediction falls back to the mean of that tick's measurements.
    """
    if not traces:
        raise ValueError("at least one trace is required")
    if predictor is None:
        predictor = EkfPredictor()
    merged = merge_traces(traces)
    order = {t.node_id: i for i, t in enumerate(traces)}

    residual_window: deque = deque(maxlen=adaptation.window)
    alpha = params.alpha
    points = []
    for ticks_seen, (tick, group) in enumerate(merged):
        group = sorted(group, key=lambda m: order[m.node_id])
        predicted = predictor.predict()
        if predicted is None:
            predicted = sum(m.value for m in group) / len(group)
        warmup = ticks_seen < adaptation.window
        if warmup:
            gate = ValidationGate.symmetric(predicted, adaptation.warmup_half_width)
        else:
            residuals = [r for per_tick in residual_window for r in per_tick]
            gate = adapt_gate(gate, residuals, predicted, adaptation)
        pairs = [(m.value, confidence(gate, m.value)) for m in group]
        try:
            fused = _fuse_weighted(pairs, predicted, alpha, params.omega)
        except DegenerateDenominatorError as exc:
            raise DegenerateDenominatorError(f"tick {tick}: {exc}") from None
        predictor.observe(fused)
        residual_window.append([abs(m.value - fused) for m in group])
        if adaptive_alpha:
            alpha = sum(sigma for _, sigma in pairs)
        points.append(
            FusionPoint(
                tick=tick,
                fused=fused,
                predicted=predicted,
                readings=tuple(
                    SensorReading(m.node_id, m.value, sigma)
                    for m, (_, sigma) in zip(group, pairs)
                ),
                warmup=warmup,
                gate=gate,
            )
        )
    return points


def write_fusion_csv(points: Sequence[FusionPoint], node_ids: Sequence[str], path) -> None:
    """Emit `tick,fused,pred,z_1,sigma_1,...,z_n,sigma_n` rows.

    Column index i follows the order of node_ids; ticks where a node did
    not report leave its z/sigma cells empty.
    """
    path = Path(path)
    header = ["tick", "fused", "pred"]
    for i in range(1, len(node_ids) + 1):
        header += [f"z_{i}", f"sigma_{i}"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for p in points:
            by_node = {r.node_id: r for r in p.readings}
            row = [p.tick, repr(p.fused), repr(p.predicted)]
            for node_id in node_ids:
                r = by_node.get(node_id)
                row += ["", ""] if r is None else [repr(r.value), repr(r.sigma)]
            writer.writerow(row)
