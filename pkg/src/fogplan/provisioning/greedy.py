"""Per-service greedy provisioning: Min-Viol, Min-Cost and the baselines.

Each decision works on one service at a time against a shared, mutable
placement.  The other services' placements are frozen for the duration of
the decision, so the capacity share a service would get on each fog node
(and hence its fog-branch delay) is fixed; only the cloud-side load moves
as nodes are deployed or released.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..metrics import CostBreakdown
from ..model import Placement, Scenario
from ..queueing import QueueLoad, waiting_time

# cost terms that shrink when a service moves from the cloud onto a fog node
CLOUD_SIDE = ("comm_fog_cloud", "proc_cloud", "stor_cloud", "violation_penalty")
FOG_SIDE = ("deploy", "proc_fog", "stor_fog")


@dataclass
class DecisionInput:
    scenario: Scenario
    service: int
    placement: Placement  # mutated in place by the algorithms
    lam: np.ndarray  # incoming rate per fog node for this service
    scope: str = "full"
    cloud_access: bool = True


@dataclass
class DecisionOutcome:
    service: int
    placement: Placement
    deploy_actions: list[tuple[str, str]] = field(default_factory=list)
    release_actions: list[tuple[str, str]] = field(default_factory=list)
    V_pct_final: float = 0.0
    predicted_cost: CostBreakdown = field(default_factory=CostBreakdown)
    elapsed: float = 0.0


def cloud_rule(scenario: Scenario, service: int, lam_out, cloud_access: bool = True) -> np.ndarray:
    """Cloud hosting row for one service: host on ``k`` iff traffic is forwarded to ``k``."""
    arr = scenario.arrays
    C = len(scenario.topology.clouds)
    if not cloud_access:
        return np.ones(C, np.int8)
    forwarded = np.asarray(lam_out, float) @ arr.route_onehot[service]
    return (forwarded > 0).astype(np.int8)


class _ServiceView:
    """Delay and cost model of one service with every other service held fixed."""

    def __init__(self, inp: DecisionInput):
        scn, a = inp.scenario, inp.service
        arr = scn.arrays
        self.inp = inp
        self.a = a
        x, xc = inp.placement.x, inp.placement.x_cloud
        lam = [float(v) for v in inp.lam]
        if len(lam) != len(scn.topology.fogs):
            raise ValueError(f"service {a}: {len(lam)} rates for {len(scn.topology.fogs)} fog nodes")
        self.lam = lam
        self.total = sum(lam)
        self.th = float(arr.th[a])
        self.target = float(arr.allowed[a])
        self.route = [int(k) for k in arr.route[a]]
        L = float(arr.L_P[a])
        self.L = L
        budget = inp.scope == "budget"

        others_fog = arr.L_P @ x - x[a] * L
        used_S = arr.L_S @ x - x[a] * arr.L_S[a] + arr.L_S[a]
        used_M = arr.L_M @ x - x[a] * arr.L_M[a] + arr.L_M[a]
        fits = (used_S <= arr.fog_K_S) & (used_M <= arr.fog_K_M)
        others_cloud = arr.L_P @ xc - xc[a] * L
        self.others_cloud = [float(v) for v in others_cloud]
        self.cloud_n = [int(n) for n in arr.cloud_n]
        self.cloud_mu = [float(m) for m in arr.cloud_mu]

        bits = float(arr.payload_bits[a])
        self.fog_delay = []
        self.cloud_base = []
        self.fits = []
        for j in range(len(lam)):
            iot = 0.0 if budget else 2 * float(arr.d_iot[j]) + bits / float(arr.r_iot[j])
            share = L / (float(others_fog[j]) + L)
            w = waiting_time(QueueLoad(L * lam[j], share, int(arr.fog_n[j]), float(arr.fog_mu[j])))
            self.fog_delay.append(iot + w)
            self.cloud_base.append(iot + 2 * float(arr.d_fc[a, j]) + bits / float(arr.r_fc[a, j]))
            self.fits.append(bool(fits[j]))

    def cloud_rule(self, x_row) -> list[int]:
        if not self.inp.cloud_access:
            return [1] * len(self.cloud_n)
        fwd = self.forwarded(x_row)
        return [1 if r > 0 else 0 for r in fwd]

    def forwarded(self, x_row) -> list[float]:
        fwd = [0.0] * len(self.cloud_n)
        for j, k in enumerate(self.route):
            if not x_row[j]:
                fwd[k] += self.lam[j]
        return fwd

    def cloud_waits(self, x_row, xc_row) -> list[float]:
        fwd = self.forwarded(x_row)
        out = []
        for k, hosted in enumerate(xc_row):
            if not hosted:
                out.append(math.inf)
                continue
            share = self.L / (self.others_cloud[k] + self.L)
            out.append(waiting_time(QueueLoad(self.L * fwd[k], share, self.cloud_n[k], self.cloud_mu[k])))
        return out

    def delays(self, x_row, xc_row) -> list[float]:
        w_cloud = self.cloud_waits(x_row, xc_row)
        return [
            self.fog_delay[j] if x_row[j] else self.cloud_base[j] + w_cloud[k]
            for j, k in enumerate(self.route)
        ]

    def violation(self, x_row, xc_row) -> float:
        if self.total <= 0:
            return 0.0
        w_cloud = self.cloud_waits(x_row, xc_row)
        th, hit = self.th, 0.0
        for j, k in enumerate(self.route):
            d = self.fog_delay[j] if x_row[j] else self.cloud_base[j] + w_cloud[k]
            if d > th:
                hit += self.lam[j]
        return min(100.0, 100.0 * hit / self.total)

    def costs(self, x_row, xc_row) -> dict[str, float]:
        """This service's share of each cost term over one of its intervals."""
        arr, a = self.inp.scenario.arrays, self.a
        x = np.asarray(x_row, float)
        xc = np.asarray(xc_row, float)
        lam = np.asarray(self.lam)
        fwd = np.asarray(self.forwarded(x_row))
        tau = float(arr.tau[a])
        V = self.violation(x_row, xc_row)
        x_cur = self.inp.placement.x_cur[a]
        return {
            "proc_cloud": float((arr.cloud_C_P * fwd * xc).sum()) * self.L * tau,
            "proc_fog": float((arr.fog_C_P * lam * x).sum()) * self.L * tau,
            "stor_cloud": float((arr.cloud_C_S * xc).sum()) * float(arr.L_S[a]) * tau,
            "stor_fog": float((arr.fog_C_S * x).sum()) * float(arr.L_S[a]) * tau,
            "comm_fog_cloud": float((arr.u_fc[a] * lam * (1 - x)).sum())
            * float(arr.l_rq[a] + arr.l_rp[a]) * tau,
            "deploy": float((arr.u_fsc * (1 - x_cur) * x).sum()) * float(arr.L_S[a]),
            "violation_penalty": max(0.0, V - self.target) * self.total * float(arr.p[a]) * tau,
        }


def _sorted_fogs(lam) -> list[int]:
    # descending traffic, ties by ascending index
    return sorted(range(len(lam)), key=lambda j: (-lam[j], j))


def _finish(inp: DecisionInput, view: _ServiceView, before, x_row, started: float) -> DecisionOutcome:
    a, placement = inp.service, inp.placement
    xc_row = view.cloud_rule(x_row)
    placement.x[a] = x_row
    placement.x_cloud[a] = xc_row
    fogs = inp.scenario.topology.fogs
    deploy = [(fogs[j].id, "deploy") for j in range(len(x_row)) if x_row[j] and not before[j]]
    release = [(fogs[j].id, "release") for j in range(len(x_row)) if before[j] and not x_row[j]]
    arr = inp.scenario.arrays
    comm_ff = float(arr.ff_comm[a] * arr.l_rq[a] * arr.tau[a])
    return DecisionOutcome(
        service=a,
        placement=placement,
        deploy_actions=deploy,
        release_actions=release,
        V_pct_final=view.violation(x_row, xc_row),
        predicted_cost=CostBreakdown(comm_fog_fog=comm_ff, **view.costs(x_row, xc_row)),
        elapsed=time.perf_counter() - started,
    )


def calc_viol_perc(inp: DecisionInput) -> float:
    """Violation percentage of the service under the input placement (pure)."""
    view = _ServiceView(inp)
    a = inp.service
    return view.violation(list(inp.placement.x[a]), list(inp.placement.x_cloud[a]))


def min_viol(inp: DecisionInput) -> DecisionOutcome:
    """Deploy on the busiest fog nodes until the violation target holds, then
    release from the quietest nodes while it keeps holding."""
    started = time.perf_counter()
    view = _ServiceView(inp)
    a = inp.service
    before = [int(v) for v in inp.placement.x[a]]
    x = before.copy()
    xc = view.cloud_rule(x)
    order = _sorted_fogs(view.lam)
    target = view.target

    V = view.violation(x, xc)
    pos = 0
    while pos < len(order) and V > target:
        j = order[pos]
        pos += 1
        if not x[j] and view.fits[j]:
            x[j] = 1
            V = view.violation(x, xc)

    for j in reversed(order):
        if not x[j]:
            continue
        x[j] = 0
        trial = xc.copy()
        trial[view.route[j]] = 1
        V_try = view.violation(x, trial)
        if V_try <= target:
            xc, V = trial, V_try
        else:
            x[j] = 1
            break
    return _finish(inp, view, before, x, started)


def _tentative_costs(view: _ServiceView, x, xc, j: int, value: int):
    trial = x.copy()
    trial[j] = value
    trial_xc = view.cloud_rule(trial) if view.inp.cloud_access else xc
    return trial, trial_xc, view.costs(trial, trial_xc)


def min_cost(inp: DecisionInput) -> DecisionOutcome:
    """Deploy where one interval's savings beat the expenses, then release where
    the reverse holds."""
    started = time.perf_counter()
    view = _ServiceView(inp)
    a = inp.service
    before = [int(v) for v in inp.placement.x[a]]
    x = before.copy()
    xc = view.cloud_rule(x)
    order = _sorted_fogs(view.lam)
    now = view.costs(x, xc)

    for j in order:
        if x[j] or not view.fits[j]:
            continue
        trial, trial_xc, after = _tentative_costs(view, x, xc, j, 1)
        savings = sum(now[t] - after[t] for t in CLOUD_SIDE)
        expenses = sum(after[t] - now[t] for t in FOG_SIDE)
        if savings > expenses:
            x, xc, now = trial, trial_xc, after

    for j in reversed(order):
        if not x[j]:
            continue
        trial, trial_xc, after = _tentative_costs(view, x, xc, j, 0)
        savings = sum(now[t] - after[t] for t in FOG_SIDE)
        expenses = sum(after[t] - now[t] for t in CLOUD_SIDE)
        if savings > expenses:
            x, xc, now = trial, trial_xc, after
    return _finish(inp, view, before, x, started)


def all_cloud(inp: DecisionInput) -> DecisionOutcome:
    started = time.perf_counter()
    view = _ServiceView(inp)
    before = [int(v) for v in inp.placement.x[inp.service]]
    return _finish(inp, view, before, [0] * len(before), started)


def static_fog(scenario: Scenario, average_lam, scope: str = "full", cloud_access: bool = True) -> Placement:
    """One-time Min-Cost placement of every service from whole-trace average rates."""
    average_lam = np.asarray(average_lam, float)
    placement = scenario.empty_placement()
    for a in range(len(scenario.services)):
        min_cost(DecisionInput(scenario, a, placement, average_lam[a], scope, cloud_access))
    return placement
