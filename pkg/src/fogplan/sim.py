"""Discrete-time simulation of periodic fog service provisioning.

Time advances one traffic frame at a time.  Every ``tau`` seconds the policy
sees the average rates of the window that just ended (the first decision
sees the first frame) and updates the placement one service at a time.
Metrics and costs are evaluated per frame and aggregated per interval.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError
from .metrics import SCOPES, CostBreakdown, cloud_rates, cost_breakdown, delay_batch, violation_batch
from .model import Placement, Scenario
from .provisioning import POLICIES, DecisionInput, all_cloud, min_cost, min_viol, solve_optimal, static_fog
from .traffic import TraceFrame, child_seed

GREEDY = {"min_viol": min_viol, "min_cost": min_cost, "all_cloud": all_cloud}

METRICS_HEADER = [
    "t_start", "policy", "avg_delay_ms", "violation_pct", "cost_total",
    "cost_proc_fog", "cost_proc_cloud", "cost_stor_fog", "cost_stor_cloud",
    "cost_comm_fc", "cost_comm_ff", "cost_deploy", "cost_penalty",
    "fog_services", "cloud_services",
]
METRICS_FORMAT = "fogplan-metrics/1"


@dataclass(frozen=True)
class SimConfig:
    policy: str = "min_viol"
    traffic_step: float = 60.0
    tau: float = 120.0
    startup_delay: float = 0.050
    horizon: float = 7200.0
    seed: int = 0
    scope: str = "full"
    cloud_access: bool = True
    exhaustive_limit: int = 20

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; choose from {', '.join(POLICIES)}")
        if self.scope not in SCOPES:
            raise ConfigError(f"unknown scope {self.scope!r}")
        if self.traffic_step <= 0 or self.tau <= 0:
            raise ConfigError("traffic_step and tau must be positive")
        ratio = self.tau / self.traffic_step
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError(f"tau={self.tau} is not a multiple of traffic_step={self.traffic_step}")
        if not 0 <= self.startup_delay < self.tau:
            raise ConfigError("startup_delay must lie in [0, tau)")
        if self.horizon < self.tau:
            raise ConfigError("horizon must be at least tau")

    @property
    def steps_per_interval(self) -> int:
        return int(round(self.tau / self.traffic_step))

    @property
    def n_intervals(self) -> int:
        return int(self.horizon // self.tau + 1e-9)


@dataclass(frozen=True)
class IntervalMetrics:
    t_start: float
    avg_delay: float  # seconds, traffic weighted
    avg_violation_pct: float
    cost: CostBreakdown
    fog_services: float
    cloud_services: float
    decision_time: float = 0.0


@dataclass
class IntervalLog:
    """What replay needs: the held placement, the prior one and the rates."""
    t_start: float
    x: np.ndarray
    x_cloud: np.ndarray
    x_prior: np.ndarray
    rates: np.ndarray  # (steps, services, fogs)
    decision_rates: np.ndarray


@dataclass
class RunResult:
    config: SimConfig
    intervals: list[IntervalMetrics]
    log: list[IntervalLog] = field(repr=False)
    decision_times: list[float] = field(default_factory=list, repr=False)

    def summary(self) -> dict[str, float]:
        """Run-level means of the per-interval series."""
        iv = self.intervals
        n = len(iv)
        cost = sum(m.cost.total for m in iv) / n
        return {
            "avg_delay_ms": 1e3 * sum(m.avg_delay for m in iv) / n,
            "violation_pct": sum(m.avg_violation_pct for m in iv) / n,
            "cost": cost,
            "cost_per_sec": cost / self.config.tau,
            "fog_services": sum(m.fog_services for m in iv) / n,
            "cloud_services": sum(m.cloud_services for m in iv) / n,
        }


def trace_rates(scenario: Scenario, frames: Sequence[TraceFrame]) -> np.ndarray:
    """Stack frames into ``(steps, services, fogs)`` in the scenario's id order."""
    A, F, _ = scenario.shape
    sids = [s.id for s in scenario.services]
    fids = [f.id for f in scenario.topology.fogs]
    out = np.zeros((len(frames), A, F))
    for i, fr in enumerate(frames):
        if tuple(fr.service_ids) == tuple(sids) and tuple(fr.fog_ids) == tuple(fids):
            out[i] = fr.rates
            continue
        srow = {s: a for a, s in enumerate(sids)}
        fcol = {f: j for j, f in enumerate(fids)}
        for a, s in enumerate(fr.service_ids):
            for j, f in enumerate(fr.fog_ids):
                if s not in srow or f not in fcol:
                    if fr.rates[a, j] > 0:
                        raise ConfigError(f"trace has traffic for unknown pair ({s}, {f})")
                    continue
                out[i, srow[s], fcol[f]] = fr.rates[a, j]
    return out


def _check_trace(config: SimConfig, frames: Sequence[TraceFrame]) -> int:
    need = config.n_intervals * config.steps_per_interval
    if len(frames) < need:
        raise ConfigError(
            f"trace has {len(frames)} frames; horizon {config.horizon:g}s at "
            f"{config.traffic_step:g}s steps needs {need}"
        )
    if len(frames) > 1:
        step = frames[1].t - frames[0].t
        if abs(step - config.traffic_step) > 1e-9 * max(1.0, step):
            raise ConfigError(f"trace step is {step:g}s but traffic_step is {config.traffic_step:g}s")
    return need


def _startup_state(scenario: Scenario, placement: Placement, fresh: np.ndarray, lam, scope, cloud_access):
    """Delays while freshly deployed containers start: their traffic still goes to the cloud."""
    arr = scenario.arrays
    x = placement.x * (1 - fresh)
    xc = placement.x_cloud.copy()
    if cloud_access:
        xc |= (cloud_rates(arr, x, lam) > 0).astype(np.int8)
    return delay_batch(arr, x, xc, lam, scope)


def _traffic_mean(d: np.ndarray, lam: np.ndarray) -> float:
    total = lam.sum()
    if total <= 0:
        return 0.0
    hit = lam > 0
    return float((d[hit] * lam[hit]).sum() / total)


def _viol_mean(V: np.ndarray, lam: np.ndarray) -> float:
    per = lam.sum(axis=-1)
    total = per.sum()
    if total <= 0:
        return 0.0
    return float((V * per).sum() / total)


def _decide(config: SimConfig, scenario: Scenario, placement: Placement, lam: np.ndarray) -> tuple[Placement, list[float]]:
    times = []
    if config.policy == "optimal":
        t0 = time.perf_counter()
        placement = solve_optimal(
            scenario, lam, placement, config.scope, config.cloud_access, config.exhaustive_limit
        )
        times.append(time.perf_counter() - t0)
    elif config.policy in GREEDY:
        algo = GREEDY[config.policy]
        for a in range(len(scenario.services)):
            out = algo(DecisionInput(scenario, a, placement, lam[a], config.scope, config.cloud_access))
            times.append(out.elapsed)
    return placement, times


def step_costs(scenario: Scenario, log: IntervalLog, scope: str, step: float) -> CostBreakdown:
    """Cost of one interval, summed frame by frame; deployment is charged in the first frame."""
    total = CostBreakdown()
    for s, lam in enumerate(log.rates):
        prior = log.x_prior if s == 0 else log.x
        p = Placement(log.x, log.x_cloud, prior)
        total = total + cost_breakdown(scenario, p, lam, scope, duration=step)
    return total


def run(config: SimConfig, scenario: Scenario, trace: Sequence[TraceFrame] | np.ndarray) -> RunResult:
    """Simulate ``config.policy`` on ``scenario`` driven by ``trace``."""
    rates = trace if isinstance(trace, np.ndarray) else trace_rates(scenario, trace)
    if isinstance(trace, np.ndarray):
        need = config.n_intervals * config.steps_per_interval
        if len(rates) < need:
            raise ConfigError(f"trace has {len(rates)} frames; the horizon needs {need}")
    else:
        need = _check_trace(config, trace)
    rates = np.asarray(rates[:need], float)
    if (rates < 0).any() or not np.isfinite(rates).all():
        raise ConfigError("traffic rates must be finite and non-negative")

    arr = scenario.arrays
    K, dt = config.steps_per_interval, config.traffic_step
    placement = scenario.empty_placement()
    decision_times: list[float] = []
    if config.policy == "static_fog":
        t0 = time.perf_counter()
        placement = static_fog(scenario, rates.mean(axis=0), config.scope, config.cloud_access)
        placement.x_cur[:] = 0
        decision_times.append(time.perf_counter() - t0)

    intervals, logs = [], []
    for i in range(config.n_intervals):
        window = rates[i * K:(i + 1) * K]
        lam_dec = rates[0] if i == 0 else rates[(i - 1) * K:i * K].mean(axis=0)
        prior = placement.x_cur.copy()
        placement, times = _decide(config, scenario, placement, lam_dec)
        decision_times.extend(times)
        fresh = ((placement.x == 1) & (prior == 0)).astype(np.int8)

        log = IntervalLog(i * config.tau, placement.x.copy(), placement.x_cloud.copy(), prior, window, lam_dec)
        delays, viols = [], []
        for s, lam in enumerate(window):
            d = delay_batch(arr, placement.x, placement.x_cloud, lam, config.scope)
            V = violation_batch(arr, d, lam)
            dm, vm = _traffic_mean(d, lam), _viol_mean(V, lam)
            # overlap of this frame with the container start-up window
            overlap = min(max(config.startup_delay - s * dt, 0.0), dt) / dt
            if overlap > 0 and fresh.any():
                ds = _startup_state(scenario, placement, fresh, lam, config.scope, config.cloud_access)
                Vs = violation_batch(arr, ds, lam)
                dm = overlap * _traffic_mean(ds, lam) + (1 - overlap) * dm
                vm = overlap * _viol_mean(Vs, lam) + (1 - overlap) * vm
            delays.append(dm)
            viols.append(vm)

        intervals.append(IntervalMetrics(
            t_start=i * config.tau,
            avg_delay=sum(delays) / K,
            avg_violation_pct=sum(viols) / K,
            cost=step_costs(scenario, log, config.scope, dt),
            fog_services=float(placement.x.sum()),
            cloud_services=float(placement.x_cloud.sum()),
            decision_time=sum(times),
        ))
        logs.append(log)
        placement.commit()
    return RunResult(config, intervals, logs, decision_times)


def replay_costs(scenario: Scenario, result: RunResult) -> list[CostBreakdown]:
    """Recompute every interval's costs from the logged placements and rates."""
    cfg = result.config
    return [step_costs(scenario, log, cfg.scope, cfg.traffic_step) for log in result.log]


def conservation_gap(scenario: Scenario, x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Per-service ``incoming - (fog processed + forwarded)``; zero up to rounding."""
    fog = (lam * x).sum(axis=-1)
    fwd = cloud_rates(scenario.arrays, x, lam).sum(axis=-1)
    return lam.sum(axis=-1) - fog - fwd


def metrics_rows(result: RunResult) -> list[list]:
    rows = []
    for m in result.intervals:
        c = m.cost
        rows.append([
            repr(m.t_start), result.config.policy, repr(1e3 * m.avg_delay), repr(m.avg_violation_pct),
            repr(c.total), repr(c.proc_fog), repr(c.proc_cloud), repr(c.stor_fog), repr(c.stor_cloud),
            repr(c.comm_fog_cloud), repr(c.comm_fog_fog), repr(c.deploy), repr(c.violation_penalty),
            repr(m.fog_services), repr(m.cloud_services),
        ])
    return rows


def write_metrics(results: Sequence[RunResult], dest) -> None:
    own = isinstance(dest, str) or hasattr(dest, "__fspath__")
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in results:
            w.writerows(metrics_rows(r))
    finally:
        if own:
            fh.close()


# ---------------------------------------------------------------------------
# sweeps

SWEEP_PARAMS = ("th", "tau")
SWEEP_METRICS = ("avg_delay_ms", "violation_pct", "cost", "cost_per_sec", "fog_services", "cloud_services")


@dataclass(frozen=True)
class SweepRow:
    param: str
    value: float
    policy: str
    reps: int
    mean: dict[str, float]
    half_width: dict[str, float | None]  # 99% Student-t; None with one replication


def half_width(samples: Sequence[float], confidence: float = 0.99) -> float | None:
    n = len(samples)
    if n < 2:
        return None
    sd = float(np.std(samples, ddof=1))
    return float(stats.t.ppf(0.5 + confidence / 2, n - 1) * sd / math.sqrt(n))


def apply_param(cfg: dict, param: str, value: float) -> dict:
    from .scenario import merge

    if param == "th":
        return merge(cfg, {"service": {"th_ms": float(value)}})
    if param == "tau":
        return merge(cfg, {"sim": {"tau_s": float(value)}})
    raise ConfigError(f"unknown sweep parameter {param!r}; choose th or tau")


def sim_config(cfg: dict, policy: str | None = None, seed: int = 0, scope: str | None = None) -> SimConfig:
    s = cfg["sim"]
    return SimConfig(
        policy=policy or s["policy"],
        traffic_step=float(s["traffic_step_s"]),
        tau=float(s["tau_s"]),
        startup_delay=float(s["startup_ms"]) / 1e3,
        horizon=float(s["horizon_s"]),
        seed=seed,
        scope=scope or s["scope"],
        cloud_access=bool(s["cloud_access"]),
        exhaustive_limit=int(s["exhaustive_limit"]),
    )


class DtmcTraffic:
    """Traffic factory: per-pair chains fit from a diurnal source (or given models)."""

    def __init__(self, models=None):
        self.models = models

    def __call__(self, cfg: dict, scenario: Scenario, seed) -> np.ndarray:
        from .traffic import diurnal_trace, fit_trace, generate_trace

        sids = [s.id for s in scenario.services]
        fids = [f.id for f in scenario.topology.fogs]
        src_seed, gen_seed = child_seed(seed, 0), child_seed(seed, 1)
        models = self.models
        if models is None:
            t = cfg["traffic"]
            src = diurnal_trace(sids, fids, t["source_hours"], t["source_step_s"], t["peak_rps"], src_seed)
            models = fit_trace(src, int(t["states"]))
        s = cfg["sim"]
        steps = int(round(s["horizon_s"] / s["traffic_step_s"]))
        frames = generate_trace(models, sids, fids, steps, float(s["traffic_step_s"]), gen_seed)
        return trace_rates(scenario, frames)


class FixedTraffic:
    def __init__(self, frames: Sequence[TraceFrame]):
        self.frames = list(frames)

    def __call__(self, cfg: dict, scenario: Scenario, seed) -> np.ndarray:
        return trace_rates(scenario, self.frames)


def replicate(cfg: dict, policies: Sequence[str], seed, traffic: Callable | None = None) -> dict[str, dict[str, float]]:
    """Run summaries of each policy on one scenario draw and one traffic draw."""
    from .scenario import build_scenario

    traffic = traffic or DtmcTraffic()
    scn_seed, traffic_seed = child_seed(seed, 0), child_seed(seed, 1)
    scenario = build_scenario(cfg, int(scn_seed.generate_state(1)[0]))
    rates = traffic(cfg, scenario, traffic_seed)
    run_seed = int(child_seed(seed, 2).generate_state(1)[0])
    return {p: run(sim_config(cfg, p, run_seed), scenario, rates).summary() for p in policies}


def _replicate(job) -> dict[str, dict[str, float]]:
    return replicate(*job)


def sweep(
    cfg: dict,
    param: str,
    values: Sequence[float],
    policies: Sequence[str] = ("min_viol", "min_cost", "all_cloud", "static_fog"),
    reps: int = 2,
    seed: int = 0,
    traffic: Callable | None = None,
    workers: int | None = None,
) -> list[SweepRow]:
    """Repeat runs for each value of ``param`` and report means with 99% half-widths.

    Replication ``r`` uses the same scenario draw and traffic for every value,
    so differences between values are not masked by scenario noise.
    """
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; choose th or tau")
    if reps < 1 or not values:
        raise ConfigError("a sweep needs at least one value and one replication")
    traffic = traffic or DtmcTraffic()
    rep_seeds = [child_seed(seed, r) for r in range(reps)]
    jobs = [
        (apply_param(cfg, param, v), tuple(policies), rep_seeds[r], traffic)
        for v in values for r in range(reps)
    ]
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(j) for j in jobs]

    rows = []
    for vi, v in enumerate(values):
        chunk = results[vi * reps:(vi + 1) * reps]
        for p in policies:
            per = {m: [c[p][m] for c in chunk] for m in SWEEP_METRICS}
            rows.append(SweepRow(
                param, float(v), p, reps,
                {m: float(np.mean(s)) for m, s in per.items()},
                {m: half_width(s) for m, s in per.items()},
            ))
    return rows


def write_sweep(rows: Sequence[SweepRow], dest) -> None:
    header = ["param", "value", "policy", "reps"]
    for m in SWEEP_METRICS:
        header += [m, f"{m}_hw99"]
    own = isinstance(dest, str) or hasattr(dest, "__fspath__")
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            line = [r.param, repr(r.value), r.policy, r.reps]
            for m in SWEEP_METRICS:
                hw = r.half_width[m]
                line += [repr(r.mean[m]), "" if hw is None else repr(hw)]
            w.writerow(line)
    finally:
        if own:
            fh.close()
