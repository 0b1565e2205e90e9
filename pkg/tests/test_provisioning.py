import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_scenario, random_scenario
from fogplan.errors import InstanceTooLargeError
from fogplan.metrics import (
    cost_breakdown,
    delay_batch,
    delay_matrix,
    evaluate,
    service_costs_batch,
    violation_batch,
)
from fogplan.model import Placement, validate
from fogplan.provisioning import (
    DecisionInput,
    all_cloud,
    calc_viol_perc,
    cloud_rule,
    evaluate_candidates,
    min_cost,
    min_viol,
    solve_optimal,
    static_fog,
)
from oracles import brute_force_optimal, loop_feasible

MS = 1e-3


def _two_fogs(**kw):
    # fog branch ~6 ms, cloud branch > 40 ms; threshold 10 ms
    base = dict(A=1, F=2, n=1, mu=1000.0, L_P=10.0, l_rq=900.0, l_rp=100.0, d_iot=2 * MS, r_iot=8e6,
                d_fc=20 * MS, r_fc=16e6, q=0.9)
    base.update(kw)
    return make_scenario(**base)


def _inp(sc, lam, a=0, placement=None, **kw):
    placement = sc.empty_placement() if placement is None else placement
    return DecisionInput(sc, a, placement, np.asarray(lam, float), **kw)


def _settle(sc, lam, algo, placement=None, **kw):
    placement = sc.empty_placement() if placement is None else placement
    for a in range(len(sc.services)):
        algo(DecisionInput(sc, a, placement, np.asarray(lam[a], float), **kw))
    return placement


# --- cloud rule and violation ----------------------------------------------


def test_cloud_rule_examples():
    sc = make_scenario(A=1, F=3, C=2, route=[[0, 1, 1]])
    assert cloud_rule(sc, 0, [0, 0, 0]).tolist() == [0, 0]
    assert cloud_rule(sc, 0, [0, 2.0, 0]).tolist() == [0, 1]
    assert cloud_rule(sc, 0, [1.0, 0, 0]).tolist() == [1, 0]
    assert cloud_rule(sc, 0, [0, 0, 0], cloud_access=False).tolist() == [1, 1]


def test_cloud_rule_ignores_costs():
    cheap = make_scenario(A=1, F=3, C=2, route=[[0, 1, 1]], cC_P=0.0, u=0.0)
    dear = make_scenario(A=1, F=3, C=2, route=[[0, 1, 1]], cC_P=9.0, u=9.0)
    for lam_out in ([0, 1, 0], [3, 0, 0], [0, 0, 0]):
        assert cloud_rule(cheap, 0, lam_out).tolist() == cloud_rule(dear, 0, lam_out).tolist()


def test_calc_viol_perc_examples():
    sc = _two_fogs()
    lam = [10.0, 1.0]
    everywhere = Placement([[1, 1]], [[0]], [[0, 0]])
    nowhere = Placement([[0, 0]], [[1]], [[0, 0]])
    mixed = Placement([[1, 0]], [[1]], [[0, 0]])
    assert calc_viol_perc(_inp(sc, lam, placement=everywhere)) == 0.0
    assert calc_viol_perc(_inp(sc, lam, placement=nowhere)) == 100.0
    assert calc_viol_perc(_inp(sc, lam, placement=mixed)) == pytest.approx(100 / 11, rel=1e-12)
    # pure: nothing moved
    assert mixed.x.tolist() == [[1, 0]]


@pytest.mark.parametrize("seed", range(20))
def test_calc_viol_perc_matches_metrics(seed):
    rng = np.random.default_rng(seed)
    sc = random_scenario(seed, A=3, F=5, C=2)
    lam = rng.uniform(0, 2, (3, 5))
    x = rng.integers(0, 2, (3, 5))
    xc = np.array([cloud_rule(sc, a, lam[a] * (1 - x[a])) for a in range(3)])
    p = Placement(x, xc, x)
    V = evaluate(sc, p, lam).V_pct
    for a in range(3):
        assert calc_viol_perc(_inp(sc, lam[a], a, p)) == pytest.approx(V[a], rel=1e-12, abs=1e-12)


# --- Min-Viol --------------------------------------------------------------


def test_min_viol_example_and_oracle():
    sc = _two_fogs()
    lam = np.array([[10.0, 1.0]])
    d_on = delay_matrix(sc, Placement([[1, 1]], [[0]], [[0, 0]]), lam)
    d_off = delay_matrix(sc, Placement([[0, 0]], [[1]], [[0, 0]]), lam)
    assert (d_on < 0.010).all() and (d_off > 0.040).all()

    # smallest placement reaching the target, by enumeration
    ok = []
    for bits in itertools.product((0, 1), repeat=2):
        x = np.array([bits])
        xc = cloud_rule(sc, 0, lam[0] * (1 - x[0]))[None]
        if evaluate(sc, Placement(x, xc, x), lam).V_pct[0] <= 10.0:
            ok.append((sum(bits), bits))
    want = min(ok)[1]

    out = min_viol(_inp(sc, lam[0]))
    assert tuple(out.placement.x[0]) == want == (1, 0)
    assert out.V_pct_final == pytest.approx(100 / 11, rel=1e-12)
    assert out.deploy_actions == [("f0", "deploy")] and out.release_actions == []
    assert out.placement.x_cloud.tolist() == [[1]]


def test_min_viol_strict_target_deploys_everywhere():
    sc = _two_fogs(F=4, q=0.99999)
    out = min_viol(_inp(sc, [5.0, 1.0, 0.5, 0.1]))
    assert out.placement.x.tolist() == [[1, 1, 1, 1]]
    assert out.placement.x_cloud.tolist() == [[0]]


def test_min_viol_without_storage():
    sc = _two_fogs(K_S=1e6, L_S=1e8)
    out = min_viol(_inp(sc, [10.0, 1.0]))
    assert out.placement.x.tolist() == [[0, 0]]
    assert out.placement.x_cloud.tolist() == [[1]]
    assert out.V_pct_final == 100.0


def test_min_viol_releases_quiet_nodes():
    sc = _two_fogs()
    p = Placement([[1, 1]], [[0]], [[1, 1]])
    out = min_viol(_inp(sc, [10.0, 1.0], placement=p))
    assert out.placement.x.tolist() == [[1, 0]]
    assert out.release_actions == [("f1", "release")]


@pytest.mark.parametrize("algo", [min_viol, min_cost])
@pytest.mark.parametrize("seed", range(30))
def test_greedy_is_idempotent(algo, seed):
    rng = np.random.default_rng(seed)
    sc = random_scenario(seed, A=2, F=6)
    lam = rng.uniform(0, 2, (2, 6))
    p = _settle(sc, lam, algo)
    # decisions are per service; co-located services change each other's
    # capacity share, so repeat each decision back to back
    for a in range(2):
        algo(DecisionInput(sc, a, p, lam[a]))
        out = algo(DecisionInput(sc, a, p, lam[a]))
        assert out.deploy_actions == [] and out.release_actions == []


@pytest.mark.parametrize("algo", [min_viol, min_cost])
@pytest.mark.parametrize("seed", range(30))
def test_single_service_settles_in_one_round(algo, seed):
    rng = np.random.default_rng(seed)
    sc = random_scenario(seed, A=1, F=6)
    lam = rng.uniform(0, 2, (1, 6))
    p = _settle(sc, lam, algo)
    p.commit()
    out = algo(DecisionInput(sc, 0, p, lam[0]))
    assert out.deploy_actions == [] and out.release_actions == []


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["min_viol", "min_cost"]))
def test_greedy_respects_capacity(seed, name):
    rng = np.random.default_rng(seed)
    sc = random_scenario(seed % 50, A=4, F=4, fog={"K_S_gb": [0.2, 1.0], "K_M_gb": [0.2, 1.0]})
    lam = rng.uniform(0, 3, (4, 4))
    algo = {"min_viol": min_viol, "min_cost": min_cost}[name]
    p = _settle(sc, lam, algo)
    assert validate(sc.topology, sc.services, p) == []


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10_000))
def test_release_never_breaks_target(seed):
    rng = np.random.default_rng(seed)
    sc = random_scenario(seed % 50, A=2, F=5)
    lam = rng.uniform(0, 3, (2, 5))
    p = Placement(rng.integers(0, 2, (2, 5)), np.ones((2, 1)), np.zeros((2, 5)))
    for a in range(2):
        out = min_viol(DecisionInput(sc, a, p, lam[a]))
        if out.release_actions:
            assert out.V_pct_final <= sc.services[a].allowed_violation_pct


def test_no_node_in_both_action_lists():
    rng = np.random.default_rng(3)
    sc = random_scenario(3, A=1, F=8)
    for _ in range(50):
        lam = rng.uniform(0, 2, 8)
        p = Placement(rng.integers(0, 2, (1, 8)), np.ones((1, 1)), np.zeros((1, 8)))
        before = p.x[0].copy()
        out = (min_viol if rng.random() < 0.5 else min_cost)(_inp(sc, lam, placement=p))
        dep = {n for n, _ in out.deploy_actions}
        rel = {n for n, _ in out.release_actions}
        assert not dep & rel
        delta = out.placement.x[0].astype(int) - before
        assert dep == {f"f{j}" for j in np.flatnonzero(delta == 1)}
        assert rel == {f"f{j}" for j in np.flatnonzero(delta == -1)}


# --- Min-Cost --------------------------------------------------------------


def test_min_cost_zero_traffic_stays_in_cloud():
    sc = _two_fogs()
    out = min_cost(_inp(sc, [0.0, 0.0]))
    assert out.placement.x.tolist() == [[0, 0]]
    assert out.placement.x_cloud.tolist() == [[0]]


def _one_fog_costs(sc, lam, x_cur):
    totals = {}
    for x in (0, 1):
        xc = cloud_rule(sc, 0, [lam * (1 - x)])
        totals[x] = cost_breakdown(sc, Placement([[x]], [xc], [[x_cur]]), [[lam]]).total
    return totals


def test_min_cost_deploys_when_penalty_dominates():
    sc = _two_fogs(F=1, p=50.0)
    totals = _one_fog_costs(sc, 20.0, 0)
    assert totals[1] < totals[0]
    assert min_cost(_inp(sc, [20.0])).placement.x.tolist() == [[1]]


def test_min_cost_releases_idle_service():
    # cloud meets the threshold, so leaving costs no penalty
    sc = _two_fogs(F=1, th=0.5)
    totals = _one_fog_costs(sc, 0.0, 1)
    assert totals[0] < totals[1]
    p = Placement([[1]], [[0]], [[1]])
    out = min_cost(_inp(sc, [0.0], placement=p))
    assert out.placement.x.tolist() == [[0]]
    assert out.release_actions == [("f0", "release")]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 5), st.integers(0, 1))
def test_min_cost_single_node_picks_cheaper(seed, lam, x_cur):
    sc = random_scenario(seed % 40, A=1, F=1)
    totals = _one_fog_costs(sc, lam, x_cur)
    p = Placement([[x_cur]], [[1]], [[x_cur]])
    chosen = int(min_cost(_inp(sc, [lam], placement=p)).placement.x[0, 0])
    assert totals[chosen] <= totals[1 - chosen]


def test_predicted_cost_matches_metrics_for_single_service():
    rng = np.random.default_rng(0)
    for seed in range(20):
        sc = random_scenario(seed, A=1, F=4, C=2)
        lam = rng.uniform(0, 2, 4)
        out = min_cost(_inp(sc, lam))
        got = cost_breakdown(sc, out.placement, lam[None]).as_dict()
        for name, value in out.predicted_cost.as_dict().items():
            assert value == pytest.approx(got[name], rel=1e-12, abs=1e-300), name


# --- baselines -------------------------------------------------------------


def test_all_cloud():
    sc = _two_fogs()
    p = Placement([[1, 1]], [[0]], [[1, 1]])
    out = all_cloud(_inp(sc, [3.0, 1.0], placement=p))
    assert out.placement.x.tolist() == [[0, 0]]
    assert out.placement.x_cloud.tolist() == [[1]]
    assert out.V_pct_final == calc_viol_perc(_inp(sc, [3.0, 1.0], placement=out.placement))
    c = out.predicted_cost
    assert c.proc_fog == c.stor_fog == c.deploy == 0.0


def test_static_fog_equals_min_cost_on_constant_rates():
    rng = np.random.default_rng(1)
    sc = random_scenario(1, A=2, F=5)
    lam = rng.uniform(0, 2, (2, 5))
    assert static_fog(sc, lam).x.tolist() == _settle(sc, lam, min_cost).x.tolist()
    assert static_fog(sc, np.zeros((2, 5))).x.sum() == 0


# --- exhaustive solver -----------------------------------------------------


def test_optimal_single_cell_picks_cheaper():
    sc = _two_fogs(F=1, p=50.0)
    totals = _one_fog_costs(sc, 20.0, 0)
    p = solve_optimal(sc, [[20.0]])
    assert int(p.x[0, 0]) == min(totals, key=totals.get)


def test_optimal_falls_back_to_cloud_when_fog_unstable():
    sc = _two_fogs(mu=1.0, p=1000.0)
    p = solve_optimal(sc, [[10.0, 1.0]])
    assert p.x.tolist() == [[0, 0]] and p.x_cloud.tolist() == [[1]]


def test_optimal_size_limit():
    sc = random_scenario(0, A=3, F=7)
    with pytest.raises(InstanceTooLargeError, match="min_viol or min_cost"):
        solve_optimal(sc, np.zeros((3, 7)))
    solve_optimal(random_scenario(0, A=1, F=3), np.zeros((1, 3)), limit=3)


@pytest.mark.parametrize("seed", range(25))
def test_optimal_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    sc = random_scenario(seed, A=2, F=3, C=1 + seed % 2)
    lam = rng.uniform(0, 2, (2, 3))
    x_cur = rng.integers(0, 2, (2, 3)).astype(np.int8)
    scope = "budget" if seed % 3 == 0 else "full"
    want_total, want = brute_force_optimal(sc, lam, x_cur, scope)
    got = solve_optimal(sc, lam, Placement(x_cur, np.ones((2, sc.shape[2])), x_cur), scope)
    assert got.x.tolist() == want.x.tolist()
    assert cost_breakdown(sc, got, lam, scope).total == pytest.approx(want_total, rel=1e-12)


@pytest.mark.parametrize("seed", range(25))
def test_optimal_not_worse_than_greedy(seed):
    rng = np.random.default_rng(1000 + seed)
    sc = random_scenario(seed, A=2, F=3)
    lam = rng.uniform(0, 2, (2, 3))
    best = cost_breakdown(sc, solve_optimal(sc, lam), lam).total
    for algo in (min_viol, min_cost):
        greedy = cost_breakdown(sc, _settle(sc, lam, algo), lam).total
        assert best <= greedy


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("cloud_access", [True, False])
def test_candidate_evaluator_matches_generic_kernels(seed, cloud_access):
    rng = np.random.default_rng(seed)
    sc = random_scenario(seed, A=2, F=4, C=2, fog={"K_S_gb": [0.3, 1.0]})
    lam = rng.uniform(0, 300 if seed % 4 == 0 else 2, (2, 4))
    x_cur = rng.integers(0, 2, (2, 4))
    X = np.array(list(itertools.product((0, 1), repeat=8)), np.int8).reshape(-1, 2, 4)
    scope = "budget" if seed % 2 else "full"
    total, feasible = evaluate_candidates(sc, X, lam, x_cur, scope, cloud_access)

    arr = sc.arrays
    lam_out = lam * (1 - X)
    Xc = (np.einsum("naf,afc->nac", lam_out, arr.route_onehot) > 0).astype(np.int8)
    if not cloud_access:
        Xc[:] = 1
    d = delay_batch(arr, X, Xc, lam, scope)
    V = violation_batch(arr, d, lam)
    terms = service_costs_batch(arr, X, Xc, x_cur, lam, V)
    generic = sum(v.sum(axis=-1) for v in terms.values())
    ok = np.isfinite(total)
    np.testing.assert_allclose(total[ok], generic[ok], rtol=1e-12)
    for i in range(len(X)):
        assert feasible[i] == loop_feasible(sc, Placement(X[i], Xc[i], x_cur), lam), i
