"""Static problem data (topology, services, unit costs) and placement state.

All quantities are stored in normalized units: seconds, bytes, million
instructions (MI), MIPS, bits/second for link rates and requests/second for
traffic.  Unit costs are dimensionless currency per normalized unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import StructuralError

FSC = "fsc"


@dataclass(frozen=True)
class ServiceSpec:
    id: str
    q: float  # desired fraction of non-violating requests, in (0, 1)
    th: float  # delay threshold, s
    p: float  # penalty per request per violated percentage point
    tau: float  # reconfiguration interval, s
    l_rq: float  # bytes
    l_rp: float  # bytes
    L_P: float  # MI per request
    L_S: float  # bytes
    L_M: float  # bytes

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"service {self.id}: q must lie in (0, 1), got {self.q}")
        if self.th <= 0 or self.tau <= 0:
            raise ValueError(f"service {self.id}: th and tau must be positive")
        if min(self.l_rq, self.l_rp, self.L_P, self.L_S, self.L_M) <= 0:
            raise ValueError(f"service {self.id}: sizes must be positive")
        if self.p < 0:
            raise ValueError(f"service {self.id}: penalty must be non-negative")

    @property
    def allowed_violation_pct(self) -> float:
        # 100 - 100q rather than (1 - q) * 100: exact for q given in whole percent
        return 100.0 - 100.0 * self.q


@dataclass(frozen=True)
class FogNode:
    id: str
    n: int  # processing units
    mu: float  # MIPS per unit
    K_S: float  # bytes
    K_M: float  # bytes
    C_P: float  # per MI
    C_S: float  # per byte per second
    d_iot: float  # s, one-way IoT -> fog propagation
    r_iot: float  # bits/s

    def __post_init__(self):
        if self.n < 1 or self.mu <= 0 or self.K_S <= 0 or self.K_M <= 0:
            raise ValueError(f"fog {self.id}: capacities must be positive")
        if self.d_iot < 0 or self.r_iot <= 0:
            raise ValueError(f"fog {self.id}: bad IoT link parameters")

    @property
    def K_P(self) -> float:
        return self.n * self.mu


@dataclass(frozen=True)
class CloudServer:
    id: str
    n: int
    mu: float
    K_S: float
    K_M: float
    C_P: float
    C_S: float

    def __post_init__(self):
        if self.n < 1 or self.mu <= 0 or self.K_S <= 0 or self.K_M <= 0:
            raise ValueError(f"cloud {self.id}: capacities must be positive")

    @property
    def K_P(self) -> float:
        return self.n * self.mu


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    u: float  # cost per byte
    r: float  # bits/s
    d: float  # s

    def __post_init__(self):
        if self.u < 0 or self.r <= 0 or self.d < 0:
            raise ValueError(f"link {self.src}->{self.dst}: bad parameters")


@dataclass(frozen=True)
class Topology:
    """Fog nodes, cloud servers and the links between them.

    ``route[a][j]`` is the index of the cloud server that fog node ``j``
    forwards service ``a`` traffic to.  ``fog_to_fog_rates`` is an optional
    (service, fog, fog) array of offloaded request rates; it only feeds the
    fog-to-fog communication cost.
    """

    fogs: tuple[FogNode, ...]
    clouds: tuple[CloudServer, ...]
    links: dict[tuple[str, str], Link]
    route: tuple[tuple[int, ...], ...]
    fog_to_fog_rates: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "fogs", tuple(self.fogs))
        object.__setattr__(self, "clouds", tuple(self.clouds))
        object.__setattr__(self, "route", tuple(tuple(int(k) for k in row) for row in self.route))
        F, C = len(self.fogs), len(self.clouds)
        if F == 0 or C == 0:
            raise StructuralError("topology needs at least one fog node and one cloud server")
        for a, row in enumerate(self.route):
            if len(row) != F:
                raise StructuralError(f"route for service {a} has {len(row)} entries, expected {F}")
            for j, k in enumerate(row):
                if not 0 <= k < C:
                    raise StructuralError(f"route[{a}][{j}] = {k} is not a cloud index")
                if (self.fogs[j].id, self.clouds[k].id) not in self.links:
                    raise StructuralError(f"missing link {self.fogs[j].id}->{self.clouds[k].id}")
        for fog in self.fogs:
            if (FSC, fog.id) not in self.links:
                raise StructuralError(f"missing controller link {FSC}->{fog.id}")
        if self.fog_to_fog_rates is not None:
            ff = np.asarray(self.fog_to_fog_rates, dtype=float)
            if ff.shape != (len(self.route), F, F):
                raise StructuralError(f"fog_to_fog_rates has shape {ff.shape}")
            if (ff < 0).any():
                raise ValueError("fog_to_fog_rates must be non-negative")
            for j, jj in zip(*np.nonzero(ff.sum(axis=0))):
                if (self.fogs[j].id, self.fogs[jj].id) not in self.links:
                    raise StructuralError(f"fog-to-fog traffic without link {self.fogs[j].id}->{self.fogs[jj].id}")
            object.__setattr__(self, "fog_to_fog_rates", ff)

    def serving_fogs(self, a: int, k: int) -> list[int]:
        """Fog nodes that route service ``a`` traffic to cloud ``k``."""
        return [j for j, kk in enumerate(self.route[a]) if kk == k]

    def link(self, src: str, dst: str) -> Link:
        try:
            return self.links[src, dst]
        except KeyError:
            raise StructuralError(f"no link {src}->{dst}") from None


@dataclass
class Placement:
    """Binary fog/cloud placement matrices plus the previous interval's fog placement."""

    x: np.ndarray  # (services, fogs)
    x_cloud: np.ndarray  # (services, clouds)
    x_cur: np.ndarray  # (services, fogs)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int8)
        self.x_cloud = np.asarray(self.x_cloud, dtype=np.int8)
        self.x_cur = np.asarray(self.x_cur, dtype=np.int8)

    @classmethod
    def empty(cls, n_services: int, n_fogs: int, n_clouds: int) -> Placement:
        return cls(
            np.zeros((n_services, n_fogs), np.int8),
            np.zeros((n_services, n_clouds), np.int8),
            np.zeros((n_services, n_fogs), np.int8),
        )

    def copy(self) -> Placement:
        return Placement(self.x.copy(), self.x_cloud.copy(), self.x_cur.copy())

    def commit(self) -> None:
        """Make the current fog placement the prior for the next interval."""
        self.x_cur = self.x.copy()


@dataclass(frozen=True)
class Scenario:
    """A topology together with its services, plus array views used by the kernels."""

    topology: Topology
    services: tuple[ServiceSpec, ...]
    enforce_cloud_capacity: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "services", tuple(self.services))
        if len(self.services) != len(self.topology.route):
            raise StructuralError(
                f"{len(self.services)} services but routing defined for {len(self.topology.route)}"
            )
        ids = [s.id for s in self.services]
        if len(set(ids)) != len(ids):
            raise StructuralError("duplicate service ids")

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.services), len(self.topology.fogs), len(self.topology.clouds)

    def empty_placement(self) -> Placement:
        return Placement.empty(*self.shape)

    def with_services(self, services: Sequence[ServiceSpec]) -> Scenario:
        return Scenario(self.topology, tuple(services), self.enforce_cloud_capacity, self.meta)

    def _svc(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.services], dtype=float)

    def _fog(self, name: str) -> np.ndarray:
        return np.array([getattr(f, name) for f in self.topology.fogs], dtype=float)

    def _cloud(self, name: str) -> np.ndarray:
        return np.array([getattr(c, name) for c in self.topology.clouds], dtype=float)

    @cached_property
    def arrays(self) -> ScenarioArrays:
        topo = self.topology
        A, F, C = self.shape
        route = np.array(topo.route, dtype=np.int64).reshape(A, F)
        onehot = np.zeros((A, F, C))
        onehot[np.arange(A)[:, None], np.arange(F)[None, :], route] = 1.0
        d_fc = np.empty((A, F))
        r_fc = np.empty((A, F))
        u_fc = np.empty((A, F))
        for a in range(A):
            for j in range(F):
                link = topo.links[topo.fogs[j].id, topo.clouds[route[a, j]].id]
                d_fc[a, j], r_fc[a, j], u_fc[a, j] = link.d, link.r, link.u
        # fog-to-fog traffic only enters the cost as sum_jj' lambda_ajj' u_jj', per service
        ff_comm = np.zeros(A)
        if topo.fog_to_fog_rates is not None:
            u_ff = np.zeros((F, F))
            for j, fj in enumerate(topo.fogs):
                for jj, fjj in enumerate(topo.fogs):
                    link = topo.links.get((fj.id, fjj.id))
                    if link is not None:
                        u_ff[j, jj] = link.u
            ff_comm = (np.asarray(topo.fog_to_fog_rates, float) * u_ff).sum(axis=(1, 2))
        return ScenarioArrays(
            q=self._svc("q"), th=self._svc("th"), p=self._svc("p"), tau=self._svc("tau"),
            allowed=np.array([s.allowed_violation_pct for s in self.services]),
            l_rq=self._svc("l_rq"), l_rp=self._svc("l_rp"),
            L_P=self._svc("L_P"), L_S=self._svc("L_S"), L_M=self._svc("L_M"),
            fog_n=self._fog("n").astype(np.int64), fog_mu=self._fog("mu"),
            fog_K_S=self._fog("K_S"), fog_K_M=self._fog("K_M"),
            fog_C_P=self._fog("C_P"), fog_C_S=self._fog("C_S"),
            d_iot=self._fog("d_iot"), r_iot=self._fog("r_iot"),
            cloud_n=self._cloud("n").astype(np.int64), cloud_mu=self._cloud("mu"),
            cloud_K_S=self._cloud("K_S"), cloud_K_M=self._cloud("K_M"),
            cloud_C_P=self._cloud("C_P"), cloud_C_S=self._cloud("C_S"),
            route=route, route_onehot=onehot,
            d_fc=d_fc, r_fc=r_fc, u_fc=u_fc,
            u_fsc=np.array([topo.links[FSC, f.id].u for f in topo.fogs]),
            ff_comm=ff_comm,
        )


@dataclass(frozen=True)
class ScenarioArrays:
    q: np.ndarray
    th: np.ndarray
    p: np.ndarray
    tau: np.ndarray
    allowed: np.ndarray
    l_rq: np.ndarray
    l_rp: np.ndarray
    L_P: np.ndarray
    L_S: np.ndarray
    L_M: np.ndarray
    fog_n: np.ndarray
    fog_mu: np.ndarray
    fog_K_S: np.ndarray
    fog_K_M: np.ndarray
    fog_C_P: np.ndarray
    fog_C_S: np.ndarray
    d_iot: np.ndarray
    r_iot: np.ndarray
    cloud_n: np.ndarray
    cloud_mu: np.ndarray
    cloud_K_S: np.ndarray
    cloud_K_M: np.ndarray
    cloud_C_P: np.ndarray
    cloud_C_S: np.ndarray
    route: np.ndarray
    route_onehot: np.ndarray
    d_fc: np.ndarray
    r_fc: np.ndarray
    u_fc: np.ndarray
    u_fsc: np.ndarray
    ff_comm: np.ndarray  # (services,) fog-to-fog cost per request byte per second

    @property
    def fog_K_P(self) -> np.ndarray:
        return self.fog_n * self.fog_mu

    @property
    def cloud_K_P(self) -> np.ndarray:
        return self.cloud_n * self.cloud_mu

    @property
    def payload_bits(self) -> np.ndarray:
        return 8.0 * (self.l_rq + self.l_rp)


def validate(
    topology: Topology,
    services: Sequence[ServiceSpec],
    placement: Placement,
    enforce_cloud_capacity: bool = False,
) -> list[str]:
    """Return the capacity constraints the placement breaks (empty when valid).

    Raises StructuralError when the placement matrices do not match the topology.
    """
    A, F, C = len(services), len(topology.fogs), len(topology.clouds)
    for name, mat, shape in (
        ("x", placement.x, (A, F)),
        ("x_cloud", placement.x_cloud, (A, C)),
        ("x_cur", placement.x_cur, (A, F)),
    ):
        if mat.shape != shape:
            raise StructuralError(f"{name} has shape {mat.shape}, topology implies {shape}")
        if not np.isin(mat, (0, 1)).all():
            raise StructuralError(f"{name} is not binary")

    L_S = np.array([s.L_S for s in services])
    L_M = np.array([s.L_M for s in services])
    problems = []
    used_s = L_S @ placement.x
    used_m = L_M @ placement.x
    for j, fog in enumerate(topology.fogs):
        if used_s[j] > fog.K_S:
            problems.append(f"fog {fog.id}: storage {used_s[j]:.6g} B exceeds {fog.K_S:.6g} B")
        if used_m[j] > fog.K_M:
            problems.append(f"fog {fog.id}: memory {used_m[j]:.6g} B exceeds {fog.K_M:.6g} B")
    if enforce_cloud_capacity:
        used_s = L_S @ placement.x_cloud
        used_m = L_M @ placement.x_cloud
        for k, cloud in enumerate(topology.clouds):
            if used_s[k] > cloud.K_S:
                problems.append(f"cloud {cloud.id}: storage {used_s[k]:.6g} B exceeds {cloud.K_S:.6g} B")
            if used_m[k] > cloud.K_M:
                problems.append(f"cloud {cloud.id}: memory {used_m[k]:.6g} B exceeds {cloud.K_M:.6g} B")
    return problems


def fits_on_fog(scenario: Scenario, x: np.ndarray, a: int, j: int) -> bool:
    """Whether fog ``j`` has storage and memory headroom for service ``a``."""
    arr = scenario.arrays
    others = x[:, j].astype(bool).copy()
    others[a] = False
    return (
        arr.L_S[others].sum() + arr.L_S[a] <= arr.fog_K_S[j]
        and arr.L_M[others].sum() + arr.L_M[a] <= arr.fog_K_M[j]
    )
