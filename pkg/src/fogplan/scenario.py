"""Scenario configuration files and their seeded materialization.

A config is a TOML document.  Every numeric parameter may be given as

* a number: used for every entity,
* a two-element list ``[lo, hi]``: drawn independently per entity from U(lo, hi),
* a table ``{values = [...]}``: explicit per-entity values.

Units in the file follow the customary units of each quantity (ms, KB, MB,
GB, Mbps, cost per Gb ...); they are converted to seconds, bytes, bits/s
and cost per byte at load time.
"""

from __future__ import annotations

import copy
import hashlib
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .model import FSC, CloudServer, FogNode, Link, Scenario, ServiceSpec, Topology

BYTES_PER_GBIT = 1e9 / 8

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "topology": {"fogs": 10, "clouds": 1, "services": 2},
    "service": {
        "q": [0.90, 0.99999],
        "th_ms": 10.0,
        "penalty": [10.0, 20.0],
        "l_rq_kb": [10.0, 26.0],
        "l_rp_b": [10.0, 20.0],
        "L_P_mi": [50.0, 200.0],
        "L_S_mb": [50.0, 500.0],
        "L_M_mb": [2.0, 400.0],
    },
    "fog": {
        "K_P_mips": [800.0, 1300.0],
        "units": 4,
        "K_S_gb": 25.0,
        "K_M_gb": 8.0,
        "C_P_per_mi": 0.002,
        "C_S_per_gb_s": 0.004,
        "d_iot_ms": [1.0, 2.0],
        "wifi_mbps": 54.0,
        "ethernet_mbps": 1000.0,
        "ethernet_prob": 0.5,
    },
    "cloud": {
        "K_P_mips": [16000.0, 26000.0],
        "units": 8,
        "K_S_gb": 250.0,
        "K_M_gb": 32.0,
        "C_P_per_mi": 0.002,
        "C_S_per_gb_s": 0.004,
    },
    "links": {
        "d_fog_cloud_ms": [15.0, 35.0],
        "hops": [6, 10],
        "core_gbps": 10.0,
        "fast_core_gbps": 100.0,
        "max_fast_hops": 2,
        "u_per_gb": 0.2,
        "u_fsc_per_gb": 0.5,
        "fsc_gbps": 10.0,
    },
    "sim": {
        "policy": "min_viol",
        "traffic_step_s": 60.0,
        "tau_s": 120.0,
        "horizon_s": 7200.0,
        "startup_ms": 50.0,
        "scope": "full",
        "cloud_access": True,
        "enforce_cloud_capacity": False,
        "exhaustive_limit": 20,
    },
    "traffic": {"peak_rps": 1.0, "source_hours": 48.0, "source_step_s": 900.0, "states": 30},
}


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and "values" not in value:
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path) -> tuple[dict, str]:
    """Read a TOML scenario file merged over the defaults; also return its SHA-256."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = merge(DEFAULTS, doc)
    check_config(cfg)
    return cfg, hashlib.sha256(raw).hexdigest()


def _ranges(node, path=""):
    if isinstance(node, dict):
        if "values" in node:
            return
        for k, v in node.items():
            yield from _ranges(v, f"{path}.{k}" if path else k)
    elif isinstance(node, list) and len(node) == 2 and all(isinstance(v, (int, float)) for v in node):
        yield path, node


def check_config(cfg: dict) -> None:
    for path, (lo, hi) in _ranges(cfg):
        if lo > hi:
            raise ConfigError(f"{path}: range [{lo}, {hi}] is not ordered")
    topo = cfg["topology"]
    for key in ("fogs", "clouds", "services"):
        if not isinstance(topo.get(key), int) or topo[key] < 1:
            raise ConfigError(f"topology.{key} must be a positive integer")
    sim = cfg["sim"]
    if sim["tau_s"] <= 0 or sim["traffic_step_s"] <= 0:
        raise ConfigError("sim.tau_s and sim.traffic_step_s must be positive")


def _draw(rng: np.random.Generator, value, n: int, name: str, integer: bool = False) -> np.ndarray:
    if isinstance(value, dict):
        vals = np.asarray(value["values"], float)
        if len(vals) != n:
            raise ConfigError(f"{name}: {len(vals)} explicit values for {n} entities")
    elif isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"{name}: ranges are written [lo, hi]")
        lo, hi = value
        vals = rng.integers(int(lo), int(hi) + 1, n).astype(float) if integer else rng.uniform(lo, hi, n)
    elif isinstance(value, (int, float)) and not isinstance(value, bool):
        vals = np.full(n, float(value))
    else:
        raise ConfigError(f"{name}: expected a number, [lo, hi] or {{values = [...]}}")
    return vals


def build_scenario(cfg: dict, seed: int | None = None) -> Scenario:
    """Materialize a scenario; draws are reproducible for a given seed."""
    seed = cfg.get("seed", 0) if seed is None else seed
    rng = np.random.default_rng(seed)
    A, F, C = cfg["topology"]["services"], cfg["topology"]["fogs"], cfg["topology"]["clouds"]
    s, fg, cl, ln = cfg["service"], cfg["fog"], cfg["cloud"], cfg["links"]
    tau = float(cfg["sim"]["tau_s"])

    q = _draw(rng, s["q"], A, "service.q")
    th = _draw(rng, s["th_ms"], A, "service.th_ms") / 1e3
    pen = _draw(rng, s["penalty"], A, "service.penalty")
    l_rq = _draw(rng, s["l_rq_kb"], A, "service.l_rq_kb") * 1e3
    l_rp = _draw(rng, s["l_rp_b"], A, "service.l_rp_b")
    L_P = _draw(rng, s["L_P_mi"], A, "service.L_P_mi")
    L_S = _draw(rng, s["L_S_mb"], A, "service.L_S_mb") * 1e6
    L_M = _draw(rng, s["L_M_mb"], A, "service.L_M_mb") * 1e6
    services = [
        ServiceSpec(f"s{a}", q[a], th[a], pen[a], tau, l_rq[a], l_rp[a], L_P[a], L_S[a], L_M[a])
        for a in range(A)
    ]

    K_P = _draw(rng, fg["K_P_mips"], F, "fog.K_P_mips")
    units = _draw(rng, fg["units"], F, "fog.units", integer=True).astype(int)
    K_S = _draw(rng, fg["K_S_gb"], F, "fog.K_S_gb") * 1e9
    K_M = _draw(rng, fg["K_M_gb"], F, "fog.K_M_gb") * 1e9
    C_P = _draw(rng, fg["C_P_per_mi"], F, "fog.C_P_per_mi")
    C_S = _draw(rng, fg["C_S_per_gb_s"], F, "fog.C_S_per_gb_s") / BYTES_PER_GBIT
    d_iot = _draw(rng, fg["d_iot_ms"], F, "fog.d_iot_ms") / 1e3
    wifi = _draw(rng, fg["wifi_mbps"], F, "fog.wifi_mbps") * 1e6
    eth = _draw(rng, fg["ethernet_mbps"], F, "fog.ethernet_mbps") * 1e6
    wired = rng.random(F) < float(fg["ethernet_prob"])
    # WiFi hop alone, or WiFi followed by an Ethernet hop (transmission times add)
    r_iot = np.where(wired, 1.0 / (1.0 / wifi + 1.0 / eth), wifi)
    fogs = [
        FogNode(f"f{j}", int(units[j]), K_P[j] / units[j], K_S[j], K_M[j], C_P[j], C_S[j], d_iot[j], r_iot[j])
        for j in range(F)
    ]

    cK_P = _draw(rng, cl["K_P_mips"], C, "cloud.K_P_mips")
    c_units = _draw(rng, cl["units"], C, "cloud.units", integer=True).astype(int)
    cK_S = _draw(rng, cl["K_S_gb"], C, "cloud.K_S_gb") * 1e9
    cK_M = _draw(rng, cl["K_M_gb"], C, "cloud.K_M_gb") * 1e9
    cC_P = _draw(rng, cl["C_P_per_mi"], C, "cloud.C_P_per_mi")
    cC_S = _draw(rng, cl["C_S_per_gb_s"], C, "cloud.C_S_per_gb_s") / BYTES_PER_GBIT
    clouds = [
        CloudServer(f"c{k}", int(c_units[k]), cK_P[k] / c_units[k], cK_S[k], cK_M[k], cC_P[k], cC_S[k])
        for k in range(C)
    ]

    links: dict[tuple[str, str], Link] = {}
    u = float(ln["u_per_gb"]) / BYTES_PER_GBIT
    d_fc = _draw(rng, ln["d_fog_cloud_ms"], F * C, "links.d_fog_cloud_ms") / 1e3
    hops = _draw(rng, ln["hops"], F * C, "links.hops", integer=True).astype(int)
    core, fast = float(ln["core_gbps"]) * 1e9, float(ln["fast_core_gbps"]) * 1e9
    for idx in range(F * C):
        j, k = divmod(idx, C)
        n_fast = int(rng.integers(0, min(int(ln["max_fast_hops"]), hops[idx]) + 1))
        r = 1.0 / ((hops[idx] - n_fast) / core + n_fast / fast)
        links[fogs[j].id, clouds[k].id] = Link(fogs[j].id, clouds[k].id, u, r, d_fc[idx])
    u_fsc = float(ln["u_fsc_per_gb"]) / BYTES_PER_GBIT
    for fog in fogs:
        links[FSC, fog.id] = Link(FSC, fog.id, u_fsc, float(ln["fsc_gbps"]) * 1e9, 0.0)

    route = rng.integers(0, C, (A, F))
    topology = Topology(tuple(fogs), tuple(clouds), links, tuple(map(tuple, route)))
    return Scenario(
        topology,
        tuple(services),
        bool(cfg["sim"].get("enforce_cloud_capacity", False)),
        meta={"seed": seed},
    )


def describe(scenario: Scenario) -> dict:
    """Every materialized parameter, in normalized units, for run manifests."""
    topo = scenario.topology
    return {
        "units": "seconds, bytes, MI, MIPS, bits/s, cost per byte",
        "services": [vars(s).copy() for s in scenario.services],
        "fogs": [vars(f).copy() for f in topo.fogs],
        "clouds": [vars(c).copy() for c in topo.clouds],
        "links": [vars(link).copy() for link in topo.links.values()],
        "route": [list(row) for row in topo.route],
    }
