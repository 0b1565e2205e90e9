"""Command-line driver: simulate, generate traces, run parameter sweeps.

Exit codes: 0 success, 1 data or validation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import FogplanError
from .provisioning import POLICIES
from .scenario import build_scenario, describe, load_config
from .sim import METRICS_FORMAT, SWEEP_PARAMS, DtmcTraffic, FixedTraffic, run, sim_config, sweep
from .sim import write_metrics, write_sweep
from .traffic import (
    DTMC_FORMAT,
    RNG_ALGORITHM,
    TRACE_FORMAT,
    diurnal_trace,
    fit_trace,
    frame_step,
    generate_trace,
    load_models,
    read_trace,
    save_models,
    write_trace,
)

MANIFEST_FORMAT = "fogplan-manifest/1"
SEED_ENV = "FOGPLAN_SEED"


class UsageError(Exception):
    pass


def resolve_seed(flag, fallback=0) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    return int(fallback)


def parse_values(text: str) -> list[float]:
    """``10,20,38`` or ``10..200`` (step 10) or ``10..200:5``."""
    try:
        if ".." in text:
            span, _, step = text.partition(":")
            lo, hi = (float(v) for v in span.split(".."))
            step = float(step) if step else 10.0
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(np.floor((hi - lo) / step + 1e-9))
            return [lo + i * step for i in range(n + 1)]
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse --values {text!r}") from None
    if not values:
        raise UsageError("--values is empty")
    return values


def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_manifest(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, default=float)
        fh.write("\n")


def _formats() -> dict:
    return {"manifest": MANIFEST_FORMAT, "metrics": METRICS_FORMAT, "trace": TRACE_FORMAT, "dtmc": DTMC_FORMAT}


def cmd_simulate(args) -> int:
    cfg, cfg_hash = load_config(args.config)
    seed = resolve_seed(args.seed, cfg.get("seed", 0))
    scenario = build_scenario(cfg, seed)
    config = sim_config(cfg, args.policy, seed, args.scope)
    sids = [s.id for s in scenario.services]
    fids = [f.id for f in scenario.topology.fogs]
    if args.trace:
        with open(args.trace, "rb") as fh:
            frames = read_trace(fh)
        traffic = {"source": "trace", "path": args.trace, "sha256": _sha256(args.trace)}
    else:
        models = load_models(args.dtmc)
        steps = config.n_intervals * config.steps_per_interval
        frames = generate_trace(models, sids, fids, steps, config.traffic_step, seed)
        traffic = {"source": "dtmc", "path": args.dtmc, "sha256": _sha256(args.dtmc), "seed": seed}
    result = run(config, scenario, frames)
    write_metrics([result], args.out)
    _write_manifest(args.manifest or args.out + ".manifest.json", {
        "formats": _formats(),
        "version": __version__,
        "command": "simulate",
        "config": {"path": args.config, "sha256": cfg_hash, "resolved": cfg},
        "seed": seed,
        "rng": RNG_ALGORITHM,
        "sim": dataclasses.asdict(config),
        "traffic": traffic,
        "scenario": describe(scenario),
        "decision_seconds": result.decision_times,
    })
    return 0


def cmd_gen_trace(args) -> int:
    with open(args.source, "rb") as fh:
        frames = read_trace(fh)
    if not frames:
        raise FogplanError(f"{args.source}: trace is empty")
    if args.states < 1:
        raise UsageError("--states must be at least 1")
    seed = resolve_seed(args.seed)
    models = fit_trace(frames, args.states)
    steps = args.steps if args.steps is not None else len(frames)
    step_sec = args.step_sec if args.step_sec is not None else (frame_step(frames) if len(frames) > 1 else 1.0)
    out = generate_trace(models, frames[0].service_ids, frames[0].fog_ids, steps, step_sec, seed)
    write_trace(out, args.out)
    if args.model_out:
        save_models(models, args.model_out)
    _write_manifest(args.out + ".manifest.json", {
        "formats": _formats(),
        "version": __version__,
        "command": "gen-trace",
        "source": {"path": args.source, "sha256": _sha256(args.source)},
        "states": args.states,
        "steps": steps,
        "step_sec": step_sec,
        "seed": seed,
        "rng": RNG_ALGORITHM,
    })
    return 0


def cmd_synth(args) -> int:
    cfg, _ = load_config(args.config)
    seed = resolve_seed(args.seed, cfg.get("seed", 0))
    topo, t = cfg["topology"], cfg["traffic"]
    sids = [f"s{a}" for a in range(topo["services"])]
    fids = [f"f{j}" for j in range(topo["fogs"])]
    frames = diurnal_trace(sids, fids, args.hours, args.step_sec, t["peak_rps"], seed)
    write_trace(frames, args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg, cfg_hash = load_config(args.config)
    seed = resolve_seed(args.seed, cfg.get("seed", 0))
    values = parse_values(args.values)
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    bad = [p for p in policies if p not in POLICIES]
    if bad or not policies:
        raise UsageError(f"unknown policy {', '.join(bad) or '(none)'}; choose from {', '.join(POLICIES)}")
    if args.trace:
        with open(args.trace, "rb") as fh:
            traffic = FixedTraffic(read_trace(fh))
    else:
        traffic = DtmcTraffic(load_models(args.dtmc) if args.dtmc else None)
    rows = sweep(cfg, args.param, values, policies, args.reps, seed, traffic, args.workers)
    write_sweep(rows, args.out)
    _write_manifest(args.out + ".manifest.json", {
        "formats": _formats(),
        "version": __version__,
        "command": "sweep",
        "config": {"path": args.config, "sha256": cfg_hash, "resolved": cfg},
        "param": args.param,
        "values": values,
        "reps": args.reps,
        "policies": policies,
        "seed": seed,
        "rng": RNG_ALGORITHM,
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fogplan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one policy over a trace and write per-interval metrics")
    p.add_argument("--config", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", help="trace CSV")
    src.add_argument("--dtmc", help="chain models written by gen-trace --model-out")
    p.add_argument("--policy", choices=POLICIES, help="defaults to sim.policy in the config")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="defaults to OUT.manifest.json")
    p.add_argument("--seed", type=int)
    p.add_argument("--scope", choices=("full", "budget"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-trace", help="fit per-pair chains to a trace and generate a new one")
    p.add_argument("--from", dest="source", required=True)
    p.add_argument("--states", type=int, default=30)
    p.add_argument("--steps", type=int)
    p.add_argument("--step-sec", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--model-out")
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("synth", help="write a diurnal source trace sized to a config")
    p.add_argument("--config", required=True)
    p.add_argument("--hours", type=float, default=48.0)
    p.add_argument("--step-sec", type=float, default=900.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="repeat runs over threshold or interval values")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="10,20,38 or 10..200 or 10..200:5")
    p.add_argument("--reps", type=int, default=2)
    p.add_argument("--policies", default="min_viol,min_cost,all_cloud,static_fog")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--trace")
    src.add_argument("--dtmc")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fogplan: error: {exc}", file=sys.stderr)
        return 2
    except (FogplanError, ValueError, OSError) as exc:
        print(f"fogplan: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
