"""Service delay, delay violation and the eight per-interval cost terms.

The array kernels (``*_batch``) accept placements with any number of
leading batch dimensions, ``(..., services, fogs)``, so the same code
evaluates one placement per simulation step or a block of candidate
placements for the exhaustive solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .model import FogNode, Link, Placement, Scenario, ScenarioArrays, ServiceSpec
from .queueing import waiting_times

SCOPES = ("full", "budget")


@dataclass(frozen=True)
class CostBreakdown:
    proc_cloud: float = 0.0
    proc_fog: float = 0.0
    stor_cloud: float = 0.0
    stor_fog: float = 0.0
    comm_fog_cloud: float = 0.0
    comm_fog_fog: float = 0.0
    deploy: float = 0.0
    violation_penalty: float = 0.0

    @property
    def total(self) -> float:
        return (
            self.proc_cloud + self.proc_fog + self.stor_cloud + self.stor_fog
            + self.comm_fog_cloud + self.comm_fog_fog + self.deploy + self.violation_penalty
        )

    def __add__(self, other: CostBreakdown) -> CostBreakdown:
        return CostBreakdown(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> dict[str, float]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["total"] = self.total
        return d


@dataclass(frozen=True)
class DelayReport:
    d: np.ndarray  # (services, fogs), seconds
    v: np.ndarray  # (services, fogs), binary
    V_pct: np.ndarray  # (services,)


# ---------------------------------------------------------------------------
# scalar forms


def service_delay(
    service: ServiceSpec,
    fog: FogNode,
    link: Link,
    x: int,
    w_fog: float,
    w_cloud: float,
    scope: str = "full",
) -> float:
    """Average delay of service requests arriving at ``fog``.

    ``link`` is the fog -> cloud link of the routed cloud server; ``w_fog`` and
    ``w_cloud`` are waiting times (nan/inf for undefined or unstable queues).
    """
    bits = 8.0 * (service.l_rq + service.l_rp)
    if x:
        wait = w_fog
        delay = wait if scope == "budget" else 2 * fog.d_iot + wait + bits / fog.r_iot
    else:
        wait = w_cloud
        delay = 2 * link.d + wait + bits / link.r
        if scope != "budget":
            delay += 2 * fog.d_iot + bits / fog.r_iot
    if math.isnan(wait) or math.isinf(wait):
        return math.inf
    return delay


def violation_percentage(delays, th: float, lam) -> float:
    """Traffic-weighted share (in percent) of fog nodes whose delay exceeds ``th``."""
    d = np.asarray(delays, dtype=float)
    lam = np.asarray(lam, dtype=float)
    total = lam.sum()
    if total <= 0:
        return 0.0
    v = d > th
    # hit <= total, but the product can still round past 100
    return min(100.0, 100.0 * lam[v].sum() / total)


def violation_penalty(service: ServiceSpec, V_pct: float, lam, tau: float | None = None) -> float:
    """Penalty owed for one interval, summed over the fog nodes' incoming rates."""
    tau = service.tau if tau is None else tau
    excess = max(0.0, V_pct - service.allowed_violation_pct)
    return float(sum(excess * lam_j * service.p * tau for lam_j in np.atleast_1d(lam)))


# ---------------------------------------------------------------------------
# array kernels


def fog_fractions(arr: ScenarioArrays, x: np.ndarray) -> np.ndarray:
    demand = x * arr.L_P[:, None]
    total = demand.sum(axis=-2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, demand / np.where(total > 0, total, 1.0), 0.0)


def cloud_fractions(arr: ScenarioArrays, x_cloud: np.ndarray) -> np.ndarray:
    return fog_fractions(arr, x_cloud)


def cloud_rates(arr: ScenarioArrays, x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Requests/s forwarded to each cloud server, ``(..., services, clouds)``."""
    out = lam * (1 - x)
    return np.einsum("...af,afc->...ac", out, arr.route_onehot)


def fog_waits_batch(arr: ScenarioArrays, x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    f = fog_fractions(arr, x)
    Lambda = arr.L_P[:, None] * lam * x
    return waiting_times(Lambda, f, arr.fog_n, arr.fog_mu)


def cloud_waits_batch(arr: ScenarioArrays, x_cloud: np.ndarray, lam_cloud: np.ndarray) -> np.ndarray:
    f = cloud_fractions(arr, x_cloud)
    Lambda = arr.L_P[:, None] * lam_cloud * x_cloud
    return waiting_times(Lambda, f, arr.cloud_n, arr.cloud_mu)


def branch_delays_batch(arr: ScenarioArrays, w_fog, w_cloud, scope: str = "full"):
    """Fog-branch and cloud-branch delays per (service, fog), ignoring placement."""
    bits = arr.payload_bits[:, None]
    route = np.broadcast_to(arr.route, w_cloud.shape[:-1] + (arr.route.shape[1],))
    w_routed = np.take_along_axis(w_cloud, route, axis=-1)
    w_fog = np.where(np.isnan(w_fog), np.inf, w_fog)
    w_routed = np.where(np.isnan(w_routed), np.inf, w_routed)
    cloud = 2 * arr.d_fc + w_routed + bits / arr.r_fc
    if scope == "budget":
        return w_fog, cloud
    iot = 2 * arr.d_iot + bits / arr.r_iot
    return iot + w_fog, iot + cloud


def delay_batch(arr: ScenarioArrays, x, x_cloud, lam, scope: str = "full") -> np.ndarray:
    if scope not in SCOPES:
        raise ValueError(f"unknown delay scope {scope!r}")
    w_fog = fog_waits_batch(arr, x, lam)
    w_cloud = cloud_waits_batch(arr, x_cloud, cloud_rates(arr, x, lam))
    fog, cloud = branch_delays_batch(arr, w_fog, w_cloud, scope)
    return np.where(x == 1, fog, cloud)


def violation_batch(arr: ScenarioArrays, d: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Per-service violation percentage, ``(..., services)``."""
    v = d > arr.th[:, None]
    total = lam.sum(axis=-1)
    hit = np.where(v, lam, 0.0).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        pct = np.minimum(100.0, 100.0 * hit / np.where(total > 0, total, 1.0))
        return np.where(total > 0, pct, 0.0)


def service_costs_batch(
    arr: ScenarioArrays, x, x_cloud, x_cur, lam, V_pct, duration=None
) -> dict[str, np.ndarray]:
    """Per-service contribution to each cost term, each ``(..., services)``."""
    T = arr.tau if duration is None else np.broadcast_to(np.asarray(duration, float), arr.tau.shape)
    lam_cloud = cloud_rates(arr, x, lam)
    lam_out = lam * (1 - x)
    return {
        "proc_cloud": (lam_cloud * x_cloud * arr.cloud_C_P).sum(axis=-1) * arr.L_P * T,
        "proc_fog": (lam * x * arr.fog_C_P).sum(axis=-1) * arr.L_P * T,
        "stor_cloud": (x_cloud * arr.cloud_C_S).sum(axis=-1) * arr.L_S * T,
        "stor_fog": (x * arr.fog_C_S).sum(axis=-1) * arr.L_S * T,
        "comm_fog_cloud": (arr.u_fc * lam_out).sum(axis=-1) * (arr.l_rq + arr.l_rp) * T,
        "comm_fog_fog": np.broadcast_to(arr.ff_comm * arr.l_rq * T, V_pct.shape),
        "deploy": ((1 - x_cur) * x * arr.u_fsc).sum(axis=-1) * arr.L_S,
        "violation_penalty": np.maximum(0.0, V_pct - arr.allowed) * lam.sum(axis=-1) * arr.p * T,
    }


# ---------------------------------------------------------------------------
# scenario-level helpers


def _lam(scenario: Scenario, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    A, F, _ = scenario.shape
    if lam.shape != (A, F):
        raise ValueError(f"rate matrix has shape {lam.shape}, expected {(A, F)}")
    return lam


def waits(scenario: Scenario, placement: Placement, lam) -> tuple[np.ndarray, np.ndarray]:
    """Fog waits ``(services, fogs)`` and cloud waits ``(services, clouds)``."""
    arr, lam = scenario.arrays, _lam(scenario, lam)
    w_fog = fog_waits_batch(arr, placement.x, lam)
    w_cloud = cloud_waits_batch(arr, placement.x_cloud, cloud_rates(arr, placement.x, lam))
    return w_fog, w_cloud


def cloud_traffic(scenario: Scenario, placement: Placement, lam) -> np.ndarray:
    return cloud_rates(scenario.arrays, placement.x, _lam(scenario, lam))


def delay_matrix(scenario: Scenario, placement: Placement, lam, scope: str = "full") -> np.ndarray:
    return delay_batch(scenario.arrays, placement.x, placement.x_cloud, _lam(scenario, lam), scope)


def evaluate(scenario: Scenario, placement: Placement, lam, scope: str = "full") -> DelayReport:
    arr, lam = scenario.arrays, _lam(scenario, lam)
    d = delay_batch(arr, placement.x, placement.x_cloud, lam, scope)
    return DelayReport(d=d, v=(d > arr.th[:, None]).astype(np.int8), V_pct=violation_batch(arr, d, lam))


def cost_breakdown(
    scenario: Scenario,
    placement: Placement,
    lam,
    scope: str = "full",
    duration: float | None = None,
    services=None,
) -> CostBreakdown:
    """Cost of holding ``placement`` for one interval under rates ``lam``.

    ``duration`` overrides each service's own interval length; ``services``
    restricts the sums to a subset of service indices.
    """
    arr, lam = scenario.arrays, _lam(scenario, lam)
    d = delay_batch(arr, placement.x, placement.x_cloud, lam, scope)
    V = violation_batch(arr, d, lam)
    terms = service_costs_batch(arr, placement.x, placement.x_cloud, placement.x_cur, lam, V, duration)
    mask = np.ones(len(arr.tau), bool)
    if services is not None:
        mask = np.zeros(len(arr.tau), bool)
        mask[list(services)] = True
    return CostBreakdown(**{name: float(vals[mask].sum()) for name, vals in terms.items()})

