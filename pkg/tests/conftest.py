import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from fogplan.model import FSC, CloudServer, FogNode, Link, Scenario, ServiceSpec, Topology  # noqa: E402
from fogplan.scenario import DEFAULTS, build_scenario, merge  # noqa: E402

GBIT = 1e9 / 8  # bytes


def _at(v, i):
    return v[i] if isinstance(v, (list, tuple, np.ndarray)) else v


def make_scenario(
    A=1, F=2, C=1, *,
    q=0.9, th=0.010, p=1.0, tau=10.0, l_rq=1000.0, l_rp=100.0, L_P=100.0, L_S=1e8, L_M=1e8,
    n=4, mu=250.0, K_S=25e9, K_M=8e9, C_P=0.002, C_S=0.004 / GBIT, d_iot=0.002, r_iot=54e6,
    cn=8, cmu=2500.0, cK_S=250e9, cK_M=32e9, cC_P=0.002, cC_S=0.004 / GBIT,
    u=0.2 / GBIT, r_fc=10e9, d_fc=0.020, u_fsc=0.5 / GBIT,
    route=None, ff=None, enforce_cloud_capacity=False,
) -> Scenario:
    """Scenario with explicit parameters; each may be a scalar or a per-entity list."""
    services = tuple(
        ServiceSpec(f"s{a}", _at(q, a), _at(th, a), _at(p, a), _at(tau, a), _at(l_rq, a), _at(l_rp, a),
                    _at(L_P, a), _at(L_S, a), _at(L_M, a))
        for a in range(A)
    )
    fogs = tuple(
        FogNode(f"f{j}", _at(n, j), _at(mu, j), _at(K_S, j), _at(K_M, j), _at(C_P, j), _at(C_S, j),
                _at(d_iot, j), _at(r_iot, j))
        for j in range(F)
    )
    clouds = tuple(
        CloudServer(f"c{k}", _at(cn, k), _at(cmu, k), _at(cK_S, k), _at(cK_M, k), _at(cC_P, k), _at(cC_S, k))
        for k in range(C)
    )
    links = {}
    for j, fog in enumerate(fogs):
        for k, cl in enumerate(clouds):
            links[fog.id, cl.id] = Link(fog.id, cl.id, _at(u, j), _at(r_fc, j), _at(d_fc, j))
        links[FSC, fog.id] = Link(FSC, fog.id, _at(u_fsc, j), 10e9, 0.0)
        for jj, other in enumerate(fogs):
            if jj != j:
                links[fog.id, other.id] = Link(fog.id, other.id, u, 1e9, 0.001)
    if route is None:
        route = [[j % C for j in range(F)] for _ in range(A)]
    return Scenario(Topology(fogs, clouds, links, route, ff), services, enforce_cloud_capacity)


def random_scenario(seed, A=2, F=3, C=1, **overrides):
    cfg = merge(DEFAULTS, {"topology": {"fogs": F, "clouds": C, "services": A}, **overrides})
    return build_scenario(cfg, seed)


@pytest.fixture
def tiny():
    return make_scenario()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
