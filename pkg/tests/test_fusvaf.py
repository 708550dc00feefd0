import numpy as np
import pytest
from hypothesis import given, strategies as st

from pipefuse.core import SensorKind, trace_from_pairs
from pipefuse.fusvaf import (
    DegenerateDenominatorError,
    EkfPredictor,
    FusionParams,
    GateAdaptation,
    SmoothingPredictor,
    ValidationGate,
    adapt_gate,
    confidence,
    fuse,
    fusvaf_stream,
)


@st.composite
def gates(draw):
    x_hat = draw(st.floats(-50, 50))
    w_l = draw(st.floats(0.1, 20))
    w_r = draw(st.floats(0.1, 20))
    a_l = draw(st.floats(0.05, 10))
    a_r = draw(st.floats(0.05, 10))
    return ValidationGate(x_hat, x_hat - w_l, x_hat + w_r, a_l, a_r)


class TestGateValidation:
    def test_prediction_outside_boundaries_rejected(self):
        with pytest.raises(ValueError):
            ValidationGate(x_hat=5.0, v_l=1.0, v_r=4.0, a_l=1.0, a_r=1.0)

    def test_nonpositive_shape_rejected(self):
        with pytest.raises(ValueError):
            ValidationGate(0.0, -1.0, 1.0, 0.0, 1.0)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            FusionParams(alpha=-0.1)
        with pytest.raises(ValueError):
            FusionParams(omega=0.0)


class TestConfidence:
    def test_unity_at_prediction(self):
        gate = ValidationGate(0.0, -2.0, 2.0, 1.0, 1.0)
        assert confidence(gate, 0.0) == 1.0

    def test_zero_below_left_boundary(self):
        gate = ValidationGate(0.0, -2.0, 2.0, 1.0, 1.0)
        assert confidence(gate, -3.0) == 0.0

    def test_zero_exactly_at_boundaries(self):
        gate = ValidationGate(0.0, -2.0, 2.0, 1.0, 1.0)
        assert confidence(gate, -2.0) == 0.0
        assert confidence(gate, 2.0) == 0.0

    @given(gate=gates(), z=st.floats(-200, 200))
    def test_range(self, gate, z):
        sigma = confidence(gate, z)
        assert 0.0 <= sigma <= 1.0

    @given(gate=gates(), data=st.data())
    def test_monotone_on_each_side(self, gate, data):
        # right side: x_hat <= z1 <= z2 <= v_r implies sigma(z1) >= sigma(z2)
        z1 = data.draw(st.floats(gate.x_hat, gate.v_r))
        z2 = data.draw(st.floats(z1, gate.v_r))
        assert confidence(gate, z1) >= confidence(gate, z2) - 1e-12
        # left side mirror
        z3 = data.draw(st.floats(gate.v_l, gate.x_hat))
        z4 = data.draw(st.floats(z3, gate.x_hat))
        assert confidence(gate, z4) >= confidence(gate, z3) - 1e-12

    @given(gate=gates())
    def test_continuity_at_prediction_and_boundaries(self, gate):
        span = gate.width
        eps = 1e-9 * span
        assert confidence(gate, gate.x_hat - eps) == pytest.approx(1.0, abs=1e-6)
        assert confidence(gate, gate.x_hat + eps) == pytest.approx(1.0, abs=1e-6)
        assert confidence(gate, gate.v_l + eps) == pytest.approx(0.0, abs=1e-6)
        assert confidence(gate, gate.v_r - eps) == pytest.approx(0.0, abs=1e-6)
        assert confidence(gate, gate.v_r + eps) == 0.0


class TestFuse:
    def test_prediction_is_fixed_point(self):
        gate = ValidationGate(0.0, -10.0, 10.0, 4.0, 4.0)
        assert fuse(gate, FusionParams(1.0, 1.0), [0.0]) == pytest.approx(0.0, abs=1e-12)

    def test_all_rejected_returns_prediction(self):
        gate = ValidationGate(0.0, -10.0, 10.0, 4.0, 4.0)
        assert fuse(gate, FusionParams(1.0, 1.0), [50.0, -70.0]) == 0.0

    def test_empty_measurements_return_prediction(self):
        gate = ValidationGate(3.0, -10.0, 10.0, 4.0, 4.0)
        assert fuse(gate, FusionParams(1.0, 1.0), []) == 3.0

    def test_symmetric_pair_with_zero_alpha(self):
        gate = ValidationGate(0.0, -10.0, 10.0, 4.0, 4.0)
        assert fuse(gate, FusionParams(alpha=0.0), [-1.0, 1.0]) == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_denominator(self):
        gate = ValidationGate(0.0, -1.0, 1.0, 0.5, 0.5)
        with pytest.raises(DegenerateDenominatorError):
            fuse(gate, FusionParams(alpha=0.0), [5.0, -5.0])

    @given(gate=gates(), zs=st.lists(st.floats(-60, 60), min_size=1, max_size=8),
           alpha=st.floats(0, 10), omega=st.floats(0.1, 10))
    def test_convex_combination_bound(self, gate, zs, alpha, omega):
        valid = [z for z in zs if confidence(gate, z) > 0]
        try:
            fused = fuse(gate, FusionParams(alpha, omega), zs)
        except DegenerateDenominatorError:
            assert alpha == 0 and not valid
            return
        bounds = valid + [gate.x_hat]
        assert min(bounds) - 1e-9 <= fused <= max(bounds) + 1e-9

    @given(gate=gates(), zs=st.lists(st.floats(-60, 60), min_size=2, max_size=8),
           alpha=st.floats(0.1, 10))
    def test_permutation_invariance_exact(self, gate, zs, alpha):
        params = FusionParams(alpha, 1.0)
        forward = fuse(gate, params, zs)
        assert fuse(gate, params, list(reversed(zs))) == forward
        rng = np.random.default_rng(0)
        shuffled = list(zs)
        rng.shuffle(shuffled)
        assert fuse(gate, params, shuffled) == forward

    @given(gate=gates(), zs=st.lists(st.floats(-60, 60), min_size=1, max_size=6))
    def test_alpha_pulls_toward_prediction(self, gate, zs):
        dist = None
        for alpha in (0.0, 1.0, 10.0, 100.0, 1e4):
            fused = fuse(gate, FusionParams(alpha, 1.0), zs) if alpha else None
            if fused is None:
                try:
                    fused = fuse(gate, FusionParams(0.0, 1.0), zs)
                except DegenerateDenominatorError:
                    continue
            d = abs(fused - gate.x_hat)
            if dist is not None:
                assert d <= dist + 1e-9
            dist = d


class TestAdaptGate:
    def test_zero_residuals_clamp_to_floor(self):
        gate = ValidationGate.symmetric(0.0, 5.0)
        adapted = adapt_gate(gate, [0.0] * 10, 1.0, GateAdaptation(w_min=0.1))
        assert adapted.x_hat == 1.0
        assert adapted.v_r - adapted.x_hat == pytest.approx(0.1)

    def test_constant_residuals_give_k_sigma_width(self):
        adaptation = GateAdaptation(k_sigma=3.0, w_min=0.1, w_max=100.0)
        gate = ValidationGate.symmetric(0.0, 5.0)
        adapted = adapt_gate(gate, [2.0] * 7, 0.0, adaptation)
        assert adapted.v_r == pytest.approx(6.0)
        assert adapted.v_l == pytest.approx(-6.0)
        assert adapted.a_l == pytest.approx(3.0)

    def test_median_homogeneity(self):
        adaptation = GateAdaptation(k_sigma=3.0, w_min=0.01, w_max=1000.0)
        gate = ValidationGate.symmetric(0.0, 5.0)
        residuals = [0.5, 1.0, 2.0, 3.0, 4.0]
        w1 = adapt_gate(gate, residuals, 0.0, adaptation).v_r
        w2 = adapt_gate(gate, [2 * r for r in residuals], 0.0, adaptation).v_r
        assert w2 == pytest.approx(2 * w1)

    @given(data=st.data())
    def test_wider_dispersion_never_narrows(self, data):
        adaptation = GateAdaptation()
        gate = ValidationGate.symmetric(0.0, 5.0)
        base = data.draw(st.lists(st.floats(0, 50), min_size=1, max_size=20))
        bumps = data.draw(
            st.lists(st.floats(0, 10), min_size=len(base), max_size=len(base))
        )
        inflated = [r + b for r, b in zip(base, bumps)]
        w_base = adapt_gate(gate, base, 0.0, adaptation).width
        w_more = adapt_gate(gate, inflated, 0.0, adaptation).width
        assert w_more >= w_base - 1e-12

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            adapt_gate(ValidationGate.symmetric(0.0, 1.0), [], 0.0)


def temp_trace(node_id, values, start=0):
    return trace_from_pairs(
        [(start + i, v) for i, v in enumerate(values)], node_id, SensorKind.TEMPERATURE
    )


class TestPredictors:
    def test_smoothing_predictor(self):
        p = SmoothingPredictor(beta=0.5)
        assert p.predict() is None
        p.observe(10.0)
        assert p.predict() == 10.0
        p.observe(20.0)
        assert p.predict() == 15.0

    def test_ekf_predictor_tracks_constant(self):
        p = EkfPredictor(q=0.1, r=0.1)
        for _ in range(20):
            p.observe(7.0)
        assert p.predict() == pytest.approx(7.0, abs=1e-6)


class TestFusvafStream:
    def test_identical_traces_fuse_to_common_value(self):
        values = [20.0 + 0.01 * t for t in range(40)]
        traces = [temp_trace("a", values), temp_trace("b", values)]
        points = fusvaf_stream(traces, FusionParams(1.0, 1.0))
        assert len(points) == 40
        for point, v in zip(points, values):
            if not point.warmup:
                assert point.fused == pytest.approx(v, abs=0.05)

    def test_spike_is_invalidated_and_fused_stays_tight(self):
        rng = np.random.default_rng(5)
        clean = 20.0 + rng.normal(0, 0.05, size=60)
        spiked = clean.copy()
        spike_tick = 40
        spiked[spike_tick] += 500.0
        traces = [temp_trace("good", clean), temp_trace("bad", spiked)]
        points = fusvaf_stream(traces, FusionParams(1.0, 1.0),
                               adaptation=GateAdaptation(initial_half_width=5.0))
        point = points[spike_tick]
        assert point.sigma_of("bad") == 0.0
        gate_width = 100.0  # w_max ceiling; spike is far beyond any gate
        assert abs(point.fused - clean[spike_tick]) < gate_width

    def test_warmup_flags(self):
        points = fusvaf_stream(
            [temp_trace("a", [20.0] * 30)],
            adaptation=GateAdaptation(window=10),
        )
        assert all(p.warmup for p in points[:10])
        assert not any(p.warmup for p in points[10:])

    def test_envelope_property(self):
        rng = np.random.default_rng(11)
        a = 22.0 + np.cumsum(rng.normal(0, 0.05, size=80))
        b = a + rng.normal(0, 0.1, size=80)
        traces = [temp_trace("a", a), temp_trace("b", b)]
        # gate floor sized to the sensor noise, as a deployment would
        points = fusvaf_stream(traces, FusionParams(1.0, 1.0),
                               adaptation=GateAdaptation(w_min=0.5))
        for p in points:
            zs = [r.value for r in p.readings]
            lo = min(zs + [p.predicted])
            hi = max(zs + [p.predicted])
            assert lo - 1e-9 <= p.fused <= hi + 1e-9

    def test_degenerate_denominator_reports_tick(self):
        # adaptive alpha drops to 0 once everything is rejected; the next
        # fully-rejected tick has no information at all
        values = [0.0] * 12 + [500.0, 500.0]
        stream = [temp_trace("a", values)]
        adaptation = GateAdaptation(window=2, initial_half_width=1.0, w_max=1.0)
        with pytest.raises(DegenerateDenominatorError, match="tick 13"):
            fusvaf_stream(stream, FusionParams(1.0, 1.0), adaptation=adaptation)

    def test_constant_alpha_survives_total_rejection(self):
        values = [0.0] * 12 + [500.0, 500.0]
        stream = [temp_trace("a", values)]
        adaptation = GateAdaptation(window=2, initial_half_width=1.0, w_max=1.0)
        points = fusvaf_stream(
            stream, FusionParams(1.0, 1.0), adaptation=adaptation, adaptive_alpha=False
        )
        assert len(points) == 14

    def test_requires_traces(self):
        with pytest.raises(ValueError):
            fusvaf_stream([], FusionParams())
