"""Synchronous averaging consensus over an undirected peer graph.

Agents repeatedly replace their estimate with a Metropolis-weighted average
of their neighbors' estimates; on a connected graph this drives every agent
to the mean of the initial values while preserving that mean at every
iteration. Dispersion (mean squared deviation from the current mean) is the
progress metric and stop condition.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DisconnectedGraphError(ValueError):
    """Consensus cannot reach a common value on a disconnected graph."""


@dataclass(frozen=True)
class CommGraph:
    """Undirected peer graph on agents 0..n-1 (no self-loops)."""

    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"graph needs at least one agent, got n={self.n}")
        normalized = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop on agent {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(normalized))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "CommGraph":
        return cls(n=n, edges=frozenset((int(i), int(j)) for i, j in edges))

    @classmethod
    def complete(cls, n: int) -> "CommGraph":
        return cls.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    @classmethod
    def path(cls, n: int) -> "CommGraph":
        return cls.from_edges(n, [(i, i + 1) for i in range(n - 1)])

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        adj = {i: [] for i in range(self.n)}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == self.n


@dataclass(frozen=True)
class ConsensusState:
    """Per-agent local estimates at one iteration."""

    estimates: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        est = np.atleast_1d(np.asarray(self.estimates, dtype=float))
        if est.ndim != 1:
            raise ValueError(f"estimates must be a vector, got shape {est.shape}")
        if self.iteration < 0:
            raise ValueError(f"iteration must be non-negative, got {self.iteration}")
        est = np.array(est)
        est.flags.writeable = False
        object.__setattr__(self, "estimates", est)

    @property
    def n(self) -> int:
        return self.estimates.shape[0]


def metropolis_weights(graph: CommGraph) -> np.ndarray:
    """Doubly stochastic weight matrix W_ij = 1/(1 + max(d_i, d_j)) on edges.

    Diagonal entries absorb the remaining mass. Requires a connected graph.
    """
    if not graph.is_connected():
        raise DisconnectedGraphError(
            f"graph with {graph.n} agents and {len(graph.edges)} edges is not connected"
        )
    d = graph.degrees()
    W = np.zeros((graph.n, graph.n))
    for i, j in graph.edges:
        w = 1.0 / (1.0 + max(d[i], d[j]))
        W[i, j] = w
        W[j, i] = w
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return W


def consensus_step(state: ConsensusState, W: np.ndarray) -> ConsensusState:
    """One synchronous averaging round: estimates' = W @ estimates."""
    W = np.asarray(W, dtype=float)
    if W.shape != (state.n, state.n):
        raise ValueError(f"weight matrix shape {W.shape} does not match n={state.n}")
    return ConsensusState(estimates=W @ state.estimates, iteration=state.iteration + 1)


def mse_dispersion(state: ConsensusState) -> float:
    """Mean squared deviation of the estimates from their average."""
    mean = float(np.mean(state.estimates))
    return float(np.mean((state.estimates - mean) ** 2))


@dataclass(frozen=True)
class ConsensusRun:
    """Outcome of an iterated consensus: final estimates plus the MSE decay."""

    estimates: np.ndarray
    iterations: int
    mse_history: tuple[float, ...]
    converged: bool


def run_consensus(
    initial: ConsensusState,
    graph: CommGraph,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> ConsensusRun:
    """Iterate consensus steps until dispersion < tol or max_iter is hit.

    mse_history holds one entry per iteration including iteration 0. A run
    that exhausts max_iter is returned with converged=False rather than
    raising: the caller decides whether a loose agreement is usable.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if initial.n != graph.n:
        raise ValueError(f"state has {initial.n} estimates but graph has {graph.n} agents")
    W = metropolis_weights(graph)
    state = initial
    history = [mse_dispersion(state)]
    iterations = 0
    while history[-1] >= tol and iterations < max_iter:
        state = consensus_step(state, W)
        history.append(mse_dispersion(state))
        iterations += 1
    return ConsensusRun(
        estimates=state.estimates,
        iterations=iterations,
        mse_history=tuple(history),
        converged=history[-1] < tol,
    )


def write_mse_csv(mse_history: Sequence[float], path) -> None:
    """Emit `iteration,mse` rows (the agreement decay curve)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mse"])
        for i, mse in enumerate(mse_history):
            writer.writerow([i, repr(mse)])
