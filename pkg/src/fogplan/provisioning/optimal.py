"""Exhaustive minimization of the total interval cost over all fog placements.

Cloud hosting is not searched: given the fog placement it is fixed by the
forwarding rule (host wherever traffic is forwarded), so only the
``services x fogs`` fog bits are enumerated, in blocks, with the array
kernels from :mod:`fogplan.metrics`.
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import InstanceTooLargeError
from ..metrics import cloud_rates, cloud_waits_batch, cost_breakdown, fog_waits_batch, violation_batch
from ..model import Placement, Scenario

log = logging.getLogger(__name__)

DEFAULT_LIMIT = 20
# candidates whose batched total is this close to the best get re-scored exactly
_RESCORE_RTOL = 1e-9


def _candidates(start: int, stop: int, A: int, F: int) -> np.ndarray:
    n_bits = A * F
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n_bits - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.int8).reshape(-1, A, F)


def _fog_delay_table(arr, lam: np.ndarray, scope: str) -> np.ndarray:
    """Fog-branch delay for every possible column of fog bits, ``(2**A, A, F)``.

    A service's fog wait on node ``j`` depends only on which services share
    node ``j``, so it can be tabulated once per rate matrix.
    """
    A, F = lam.shape
    combos = _candidates(0, 1 << A, 1, A)[:, 0, :]  # (2**A, A), row c = binary digits of c
    cols = np.broadcast_to(combos[:, :, None], (1 << A, A, F))
    w = fog_waits_batch(arr, cols, lam)
    w = np.where(np.isnan(w), np.inf, w)
    if scope == "budget":
        return w
    return 2 * arr.d_iot + w + arr.payload_bits[:, None] / arr.r_iot


def evaluate_candidates(
    scenario: Scenario, X: np.ndarray, lam: np.ndarray, x_cur: np.ndarray,
    scope: str = "full", cloud_access: bool = True, table: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Total cost and feasibility for a block of fog placements ``(N, services, fogs)``.

    Terms linear in the fog bits are folded into one coefficient matrix; only
    cloud storage and the violation penalty are evaluated per candidate.
    """
    arr = scenario.arrays
    A, F = lam.shape
    if table is None:
        table = _fog_delay_table(arr, lam, scope)
    code = np.einsum("naf,a->nf", X.astype(np.int64), 1 << np.arange(A - 1, -1, -1, dtype=np.int64))
    fog = table.transpose(0, 2, 1)[code, np.arange(F)].transpose(0, 2, 1)

    lam_cloud = cloud_rates(arr, X, lam)
    if cloud_access:
        Xc = (lam_cloud > 0).astype(np.int8)
    else:
        Xc = np.ones(lam_cloud.shape, np.int8)
    w_cloud = cloud_waits_batch(arr, Xc, lam_cloud)

    feasible = np.einsum("naf,a->nf", X, arr.L_S) <= arr.fog_K_S
    feasible &= np.einsum("naf,a->nf", X, arr.L_M) <= arr.fog_K_M
    feasible = feasible.all(axis=-1)
    if scenario.enforce_cloud_capacity:
        feasible &= (np.einsum("nac,a->nc", Xc, arr.L_S) <= arr.cloud_K_S).all(axis=-1)
        feasible &= (np.einsum("nac,a->nc", Xc, arr.L_M) <= arr.cloud_K_M).all(axis=-1)
    feasible &= (np.isfinite(fog) | (X == 0)).all(axis=(-2, -1))
    feasible &= (np.isfinite(w_cloud) | (Xc == 0)).all(axis=(-2, -1))

    w_routed = np.take_along_axis(w_cloud, np.broadcast_to(arr.route, X.shape), axis=-1)
    w_routed = np.where(np.isnan(w_routed), np.inf, w_routed)
    cloud = 2 * arr.d_fc + w_routed + arr.payload_bits[:, None] / arr.r_fc
    if scope != "budget":
        cloud = cloud + 2 * arr.d_iot + arr.payload_bits[:, None] / arr.r_iot
    d = np.where(X == 1, fog, cloud)
    V = violation_batch(arr, d, lam)

    tau = arr.tau[:, None]
    cloud_C_P = arr.cloud_C_P[arr.route]
    on_fog = (
        lam * arr.fog_C_P * arr.L_P[:, None] * tau
        + arr.fog_C_S * arr.L_S[:, None] * tau
        + (1 - x_cur) * arr.u_fsc * arr.L_S[:, None]
    )
    on_cloud = lam * (arr.u_fc * (arr.l_rq + arr.l_rp)[:, None] + cloud_C_P * arr.L_P[:, None]) * tau
    base = on_cloud.sum() + (arr.ff_comm * arr.l_rq * arr.tau).sum()
    total = base + np.einsum("naf,af->n", X, on_fog - on_cloud)
    total += np.einsum("nac,c,a->n", Xc, arr.cloud_C_S, arr.L_S * arr.tau)
    total += (np.maximum(0.0, V - arr.allowed) * (lam.sum(axis=-1) * arr.p * arr.tau)).sum(axis=-1)
    return total, feasible


def solve_optimal(
    scenario: Scenario,
    lam,
    placement: Placement | None = None,
    scope: str = "full",
    cloud_access: bool = True,
    limit: int = DEFAULT_LIMIT,
    block: int = 1 << 15,
) -> Placement:
    """Return the feasible placement with the lowest total cost.

    ``placement`` supplies the prior fog placement (``x_cur``) that decides
    which deployments are charged.  Ties go to fewer fog deployments, then to
    the lexicographically smallest fog matrix.
    """
    A, F, C = scenario.shape
    n_bits = A * F
    if n_bits > limit:
        raise InstanceTooLargeError(
            f"{A} services x {F} fog nodes = {n_bits} placement bits exceeds the exhaustive "
            f"limit of {limit}; use min_viol or min_cost for instances this size"
        )
    lam = np.asarray(lam, float)
    x_cur = placement.x_cur if placement is not None else np.zeros((A, F), np.int8)

    table = _fog_delay_table(scenario.arrays, lam, scope)
    best = np.inf
    near: list[tuple[float, int]] = []
    for start in range(0, 1 << n_bits, block):
        stop = min(start + block, 1 << n_bits)
        X = _candidates(start, stop, A, F)
        total, feasible = evaluate_candidates(scenario, X, lam, x_cur, scope, cloud_access, table)
        total = np.where(feasible, total, np.inf)
        low = total.min()
        if not np.isfinite(low):
            continue
        best = min(best, low)
        cutoff = best + _RESCORE_RTOL * max(abs(best), 1.0)
        near = [(t, i) for t, i in near if t <= cutoff]
        near.extend((float(total[i]), start + int(i)) for i in np.flatnonzero(total <= cutoff))

    if not near:
        log.warning("no feasible placement; falling back to all-cloud")
        candidates = [0]
    else:
        candidates = [i for _, i in near]

    def build(i: int) -> Placement:
        x = _candidates(i, i + 1, A, F)[0]
        lam_out = lam * (1 - x)
        if cloud_access:
            xc = ((lam_out[:, :, None] * scenario.arrays.route_onehot).sum(axis=1) > 0).astype(np.int8)
        else:
            xc = np.ones((A, C), np.int8)
        return Placement(x, xc, x_cur.copy())

    scored = []
    for i in candidates:
        p = build(i)
        scored.append((cost_breakdown(scenario, p, lam, scope).total, i, p))
    low = min(s[0] for s in scored)
    ties = [s for s in scored if s[0] == low]
    ties.sort(key=lambda s: (int(s[2].x.sum()), s[1]))
    return ties[0][2]
