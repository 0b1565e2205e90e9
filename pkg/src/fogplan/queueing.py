"""M/M/c waiting times for services sharing a node's processing units.

A node with ``n`` units of rate ``mu`` splits its capacity among deployed
services in proportion to their per-request processing demand.  Each
service then behaves as an M/M/n queue whose units run at ``f * mu``.

Waiting times are returned as floats with two sentinel values:
``nan`` when the service is not deployed (no capacity share, the wait is
undefined) and ``inf`` when the queue is unstable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnstableQueueError


def service_fraction(x, L_P) -> np.ndarray:
    """Capacity share of each service on one node, proportional to ``x * L_P``."""
    demand = np.asarray(x, dtype=float) * np.asarray(L_P, dtype=float)
    total = demand.sum()
    if total == 0:
        return np.zeros_like(demand)
    return demand / total


def erlang_c(n: int, rho: float) -> float:
    """Probability that an arrival to an M/M/n queue with utilization ``rho`` waits."""
    if n < 1 or int(n) != n:
        raise ValueError(f"number of units must be a positive integer, got {n}")
    if rho < 0:
        raise ValueError(f"utilization must be non-negative, got {rho}")
    if rho >= 1:
        raise UnstableQueueError(f"utilization {rho} >= 1")
    offered = n * rho
    b = 1.0
    for m in range(1, int(n) + 1):
        b = offered * b / (m + offered * b)
    return b / (1.0 - rho * (1.0 - b))


def erlang_c_array(n, rho) -> np.ndarray:
    """Vectorized :func:`erlang_c` for ``0 <= rho < 1``; other entries give nan."""
    n, rho = np.broadcast_arrays(np.asarray(n, dtype=np.int64), np.asarray(rho, dtype=float))
    ok = (rho >= 0) & (rho < 1) & (n >= 1)
    r = np.where(ok, rho, 0.0)
    offered = n * r
    b = np.ones(r.shape)
    top = int(n.max()) if n.size else 0
    for m in range(1, top + 1):
        step = offered * b / (m + offered * b)
        b = np.where(m <= n, step, b)
    out = b / (1.0 - r * (1.0 - b))
    return np.where(ok, out, np.nan)


@dataclass(frozen=True)
class QueueLoad:
    Lambda: float  # instruction arrival rate, MIPS
    f: float  # capacity share
    n: int
    mu: float  # MIPS per unit

    @property
    def K_P(self) -> float:
        return self.n * self.mu

    @property
    def rho(self) -> float:
        if self.f <= 0:
            return math.nan
        return self.Lambda / (self.f * self.K_P)


def stability_check(load: QueueLoad) -> bool:
    return load.Lambda < load.f * load.K_P


def waiting_time(load: QueueLoad) -> float:
    """Processing plus queueing delay: ``1/(f mu) + P_Q / (f K_P - Lambda)``.

    The first term is the service-time term exactly as the model states it.
    """
    if load.f <= 0:
        return math.nan
    if not stability_check(load):
        return math.inf
    capacity = load.f * load.K_P
    pq = erlang_c(load.n, load.Lambda / capacity)
    return 1.0 / (load.f * load.mu) + pq / (capacity - load.Lambda)


def waiting_times(Lambda, f, n, mu) -> np.ndarray:
    """Vectorized :func:`waiting_time` over broadcastable arrays."""
    Lambda, f, n, mu = np.broadcast_arrays(
        np.asarray(Lambda, float), np.asarray(f, float), np.asarray(n, np.int64), np.asarray(mu, float)
    )
    capacity = f * (n * mu)
    deployed = f > 0
    stable = deployed & (Lambda < capacity)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        rho = np.where(stable, Lambda / np.where(stable, capacity, 1.0), 0.0)
        pq = erlang_c_array(n, rho)
        w = 1.0 / (f * mu) + pq / (capacity - Lambda)
    return np.where(stable, w, np.where(deployed, np.inf, np.nan))
