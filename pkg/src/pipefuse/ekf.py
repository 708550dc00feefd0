"""Extended Kalman filtering for nonlinear discrete-time state estimation.

Predict/update are pure functions over immutable state, so any number of
filters can run side by side. Covariances are re-symmetrized after every
propagation step; the update uses the plain (I - KH)P covariance form.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import csv

import numpy as np

from .core import Trace

# Tolerated eigenvalue negativity of a covariance before it is rejected.
EPS_SYM = 1e-9


class NumericFailureError(ArithmeticError):
    """A model function or matrix operation produced non-finite values."""


class SingularBracketError(NumericFailureError):
    """The innovation covariance H P H^T + R is not invertible.

    Usually signals a misconfigured (rank-deficient or zero) measurement
    noise covariance R.
    """


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} must be finite")
    if not np.allclose(m, m.T, atol=1e-12, rtol=0):
        raise ValueError(f"{name} must be symmetric")
    return m


@dataclass(frozen=True)
class ProcessModel:
    """Nonlinear state-space model x' = f(x) + w, y = h(x) + v.

    Q and R are the covariances of the process noise w and measurement
    noise v. Analytic Jacobians are optional; central differences are used
    when they are absent.
    """

    state_dim: int
    f: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    Q: np.ndarray
    R: np.ndarray
    F_jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    H_jac: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError(f"state_dim must be positive, got {self.state_dim}")
        q = _as_matrix(self.Q, "Q")
        r = _as_matrix(self.R, "R")
        if q.shape != (self.state_dim, self.state_dim):
            raise ValueError(f"Q must be {self.state_dim}x{self.state_dim}, got {q.shape}")
        if np.any(np.diag(q) < 0) or np.any(np.diag(r) < 0):
            raise ValueError("Q and R must have non-negative diagonals")
        object.__setattr__(self, "Q", _freeze(q))
        object.__setattr__(self, "R", _freeze(r))

    @property
    def measurement_dim(self) -> int:
        return self.R.shape[0]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FilterState:
    """Estimate x_hat with covariance P at a given tick."""

    x_hat: np.ndarray
    P: np.ndarray
    tick: int = 0

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x_hat, dtype=float))
        p = np.atleast_2d(np.asarray(self.P, dtype=float))
        n = x.shape[0]
        if x.ndim != 1 or p.shape != (n, n):
            raise ValueError(f"shape mismatch: x_hat {x.shape}, P {p.shape}")
        if self.tick < 0:
            raise ValueError(f"tick must be non-negative, got {self.tick}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise NumericFailureError("filter state contains non-finite values")
        if not np.allclose(p, p.T, atol=1e-9, rtol=1e-9):
            raise ValueError("P must be symmetric")
        if np.any(np.diag(p) < 0):
            raise ValueError("P diagonal must be non-negative")
        if np.min(np.linalg.eigvalsh(p)) < -EPS_SYM * max(1.0, float(np.max(np.abs(p)))):
            raise ValueError("P must be positive semi-definite (within tolerance)")
        object.__setattr__(self, "x_hat", _freeze(x))
        object.__setattr__(self, "P", _freeze(p))

    @property
    def dim(self) -> int:
        return self.x_hat.shape[0]


def numeric_jacobian(fn, x, eps=None) -> np.ndarray:
    """Central-difference Jacobian of fn at x.

    Column j is (fn(x + e_j*eps_j) - fn(x - e_j*eps_j)) / (2*eps_j). `eps`
    may be a scalar, a per-component vector, or None for the default step
    1e-6 * max(1, |x_j|).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.shape[0]
    if eps is None:
        steps = 1e-6 * np.maximum(1.0, np.abs(x))
    else:
        steps = np.broadcast_to(np.asarray(eps, dtype=float), (n,)).copy()
        if np.any(steps <= 0):
            raise ValueError("eps must be positive")
    cols = []
    with np.errstate(invalid="ignore"):  # divergent probes are caught below
        for j in range(n):
            dx = np.zeros(n)
            dx[j] = steps[j]
            hi = np.atleast_1d(np.asarray(fn(x + dx), dtype=float))
            lo = np.atleast_1d(np.asarray(fn(x - dx), dtype=float))
            cols.append((hi - lo) / (2.0 * steps[j]))
    jac = np.column_stack(cols)
    if not np.all(np.isfinite(jac)):
        raise NumericFailureError("numeric Jacobian produced non-finite values")
    return jac


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def _jacobian_of(fn, analytic, x) -> np.ndarray:
    if analytic is not None:
        jac = np.atleast_2d(np.asarray(analytic(x), dtype=float))
        if not np.all(np.isfinite(jac)):
            raise NumericFailureError("analytic Jacobian produced non-finite values")
        return jac
    return numeric_jacobian(fn, x)


def predict(state: FilterState, model: ProcessModel) -> FilterState:
    """Propagate the estimate one step: x' = f(x), P' = F P F^T + Q."""
    x1 = np.atleast_1d(np.asarray(model.f(state.x_hat), dtype=float))
    if not np.all(np.isfinite(x1)):
        raise NumericFailureError("state transition produced non-finite values")
    F = _jacobian_of(model.f, model.F_jac, state.x_hat)
    P1 = _symmetrize(F @ state.P @ F.T + model.Q)
    return FilterState(x_hat=x1, P=P1, tick=state.tick + 1)


def update(prior: FilterState, y, model: ProcessModel) -> FilterState:
    """Fold measurement y into the prior.

    Innovation uses the nonlinear h; the gain solves
    K = P H^T (H P H^T + R)^(-1) with H evaluated at the prior.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    z_pred = np.atleast_1d(np.asarray(model.h(prior.x_hat), dtype=float))
    if y.shape != z_pred.shape:
        raise ValueError(f"measurement dim {y.shape[0]} != h output dim {z_pred.shape[0]}")
    H = _jacobian_of(model.h, model.H_jac, prior.x_hat)
    S = H @ prior.P @ H.T + model.R
    PHt = prior.P @ H.T
    try:
        # K = PHt @ inv(S); solve on the transposed system avoids forming inv(S).
        K = np.linalg.solve(S.T, PHt.T).T
    except np.linalg.LinAlgError:
        raise SingularBracketError(
            "innovation covariance H P H^T + R is singular; check R"
        ) from None
    if not np.all(np.isfinite(K)):
        raise SingularBracketError(
            "innovation covariance H P H^T + R is ill-conditioned; check R"
        )
    innovation = y - z_pred
    x1 = prior.x_hat + K @ innovation
    P1 = _symmetrize((np.eye(prior.dim) - K @ H) @ prior.P)
    return FilterState(x_hat=x1, P=P1, tick=prior.tick)


@dataclass(frozen=True)
class FilterPoint:
    """One filtered measurement: posterior state plus the raw innovation."""

    tick: int
    measurement: float
    state: FilterState
    innovation: np.ndarray

    @property
    def estimate(self) -> float:
        return float(self.state.x_hat[0])

    @property
    def variance(self) -> float:
        return float(self.state.P[0, 0])


def run_filter(model: ProcessModel, init: FilterState, measurements: Trace) -> list[FilterPoint]:
    """Filter a scalar-measurement trace, one predict+update per reading.

    Output has one posterior per measurement. Innovation magnitudes are
    surfaced in the points so callers can watch for divergence.
    """
    points = []
    state = init
    for m in measurements.readings:
        try:
            prior = predict(state, model)
            z_pred = np.atleast_1d(np.asarray(model.h(prior.x_hat), dtype=float))
            state = update(prior, [m.value], model)
        except (NumericFailureError, ValueError) as exc:
            raise type(exc)(f"tick {m.timestamp}: {exc}") from exc
        innovation = np.array([m.value]) - z_pred
        points.append(FilterPoint(m.timestamp, m.value, state, innovation))
    return points


def random_walk_model(q: float, r: float) -> ProcessModel:
    """Scalar random-walk model: identity dynamics and direct observation."""
    identity = lambda x: x
    one = lambda x: np.array([[1.0]])
    return ProcessModel(
        state_dim=1,
        f=identity,
        h=identity,
        Q=np.array([[q]]),
        R=np.array([[r]]),
        F_jac=one,
        H_jac=one,
    )


def write_filter_csv(points: Sequence[FilterPoint], path) -> None:
    """Emit `tick,measurement,estimate,variance` rows for plotting."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tick", "measurement", "estimate", "variance"])
        for p in points:
            writer.writerow([p.tick, repr(p.measurement), repr(p.estimate), repr(p.variance)])
