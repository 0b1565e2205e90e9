import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogplan.errors import TraceFormatError
from fogplan.traffic import (
    DtmcModel,
    TraceFrame,
    child_seed,
    diurnal_trace,
    fit_dtmc,
    fit_trace,
    frame_step,
    generate,
    generate_trace,
    load_models,
    read_trace,
    save_models,
    write_trace,
)

HEAD = "t_sec,fog_id,service_id,rate_rps\n"


def test_read_two_rows():
    frames = read_trace((HEAD + "0,f0,s0,10\n15,f0,s0,12\n").encode())
    assert [f.t for f in frames] == [0.0, 15.0]
    assert [f.rates[0, 0] for f in frames] == [10.0, 12.0]
    assert frame_step(frames) == 15.0


def test_read_empty():
    assert read_trace(b"") == []
    assert read_trace(HEAD.encode()) == []


def test_missing_cells_default_to_zero():
    frames = read_trace(io.StringIO(HEAD + "0,f0,s0,1\n0,f1,s1,2\n60,f1,s0,3\n"))
    np.testing.assert_array_equal(frames[0].rates, [[1, 0], [0, 2]])
    np.testing.assert_array_equal(frames[1].rates, [[0, 3], [0, 0]])


def test_natural_id_order():
    frames = read_trace((HEAD + "0,f10,s0,1\n0,f2,s0,2\n").encode())
    assert frames[0].fog_ids == ("f2", "f10")


@pytest.mark.parametrize(
    "body, line",
    [
        ("0,f0,s0,-1\n", 2),
        ("0,f0,s0,1\n0,f0,s0\n", 3),
        ("0,f0,s0,abc\n", 2),
        ("10,f0,s0,1\n5,f0,s0,1\n", 3),
        ("0,f0,s0,1\n0,f0,s0,2\n", 3),
        ("0,f0,s0,nan\n", 2),
    ],
)
def test_read_errors_carry_line_numbers(body, line):
    with pytest.raises(TraceFormatError, match=f"line {line}:"):
        read_trace((HEAD + body).encode())


def test_bad_header():
    with pytest.raises(TraceFormatError, match="line 1"):
        read_trace(b"time,fog,service,rate\n0,f0,s0,1\n")


def test_unknown_ids_with_explicit_order():
    with pytest.raises(TraceFormatError):
        read_trace((HEAD + "0,f9,s0,1\n").encode(), ["s0"], ["f0"])


def test_uneven_spacing():
    frames = read_trace((HEAD + "0,f0,s0,1\n10,f0,s0,1\n25,f0,s0,1\n").encode())
    with pytest.raises(TraceFormatError):
        frame_step(frames)


@settings(max_examples=60)
@given(
    st.integers(1, 3), st.integers(1, 4), st.integers(1, 6), st.sampled_from([1.0, 15.0, 0.5]),
    st.data(),
)
def test_write_read_round_trip(A, F, T, step, data):
    rates = data.draw(
        st.lists(st.floats(0, 1e6, allow_nan=False), min_size=A * F * T, max_size=A * F * T)
    )
    rates = np.array(rates).reshape(T, A, F)
    sids = tuple(f"s{a}" for a in range(A))
    fids = tuple(f"f{j}" for j in range(F))
    frames = [TraceFrame(t * step, rates[t], sids, fids) for t in range(T)]
    buf = io.StringIO()
    write_trace(frames, buf)
    back = read_trace(buf.getvalue().encode())
    assert [f.t for f in back] == [f.t for f in frames]
    for a, b in zip(frames, back):
        assert a.service_ids == b.service_ids and a.fog_ids == b.fog_ids
        np.testing.assert_array_equal(a.rates, b.rates)


# --- chains ----------------------------------------------------------------


def test_fit_constant_series():
    m = fit_dtmc([4.0] * 10, 30)
    assert m.states.tolist() == [4.0]
    assert m.P.tolist() == [[1.0]]


def test_fit_alternating_series():
    m = fit_dtmc([1.0, 5.0] * 20, 2)
    np.testing.assert_array_equal(m.P, [[0.0, 1.0], [1.0, 0.0]])
    assert m.states.tolist() == [1.0, 5.0]


def _count_oracle(series, n):
    lo, hi = min(series), max(series)
    bins = []
    for v in series:
        b = int((v - lo) / (hi - lo) * n)
        bins.append(min(b, n - 1))
    counts = [[0] * n for _ in range(n)]
    for i, j in zip(bins, bins[1:]):
        counts[i][j] += 1
    P = []
    for i, row in enumerate(counts):
        tot = sum(row)
        P.append([c / tot for c in row] if tot else [1.0 if k == i else 0.0 for k in range(n)])
    return P


@pytest.mark.parametrize("seed", range(5))
def test_fit_matches_count_oracle(seed):
    frames = diurnal_trace(["s0"], ["f0"], hours=48, step_sec=900, seed=seed)
    series = [f.rates[0, 0] for f in frames]
    assert len(series) == 192
    m = fit_dtmc(series, 30)
    np.testing.assert_allclose(m.P.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    np.testing.assert_allclose(m.P, _count_oracle(series, 30), rtol=0, atol=1e-15)


@settings(max_examples=100)
@given(st.lists(st.floats(0, 1e3), min_size=2, max_size=200), st.integers(1, 40))
def test_fit_rows_stochastic(series, n):
    m = fit_dtmc(series, n)
    assert np.abs(m.P.sum(axis=1) - 1.0).max() <= 1e-12
    assert (np.diff(m.states) > 0).all()


def test_fit_rejects_short_series():
    with pytest.raises(ValueError):
        fit_dtmc([1.0])
    with pytest.raises(ValueError):
        fit_dtmc([1.0, 2.0], 0)


def test_generate_single_state():
    assert generate(DtmcModel([3.0], [[1.0]]), 5, 0).tolist() == [3.0] * 5
    assert generate(DtmcModel([3.0], [[1.0]]), 0, 0).tolist() == []


def test_generate_is_deterministic():
    m = DtmcModel([1.0, 2.0, 4.0], [[0.2, 0.5, 0.3], [0.3, 0.3, 0.4], [0.5, 0.25, 0.25]])
    a = generate(m, 1000, 42)
    b = generate(m, 1000, 42)
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != generate(m, 1000, 43).tobytes()
    assert set(np.unique(a)) <= {1.0, 2.0, 4.0}


def test_two_state_stationary_frequencies():
    m = DtmcModel([0.0, 1.0], [[0.7, 0.3], [0.3, 0.7]])
    x = generate(m, 100_000, 7)
    assert abs(x.mean() - 0.5) <= 0.02


def test_fit_recovers_transition_probabilities():
    P = np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.25, 0.25, 0.5]])
    steps = 200_000
    x = generate(DtmcModel([0.0, 1.0, 2.0], P), steps, 11)
    m = fit_dtmc(x, 3)
    assert np.abs(m.P - P).max() < 5 / np.sqrt(steps / 3)


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_generate_emits_only_states(S, seed):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(S), S)
    P /= P.sum(axis=1, keepdims=True)
    states = np.cumsum(rng.uniform(0.1, 1, S))
    out = generate(DtmcModel(states, P), 300, seed)
    assert np.isin(out, states).all()


def test_model_validation():
    with pytest.raises(ValueError):
        DtmcModel([1.0, 2.0], [[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(ValueError):
        DtmcModel([2.0, 1.0], [[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        DtmcModel([1.0], [[1.0]], initial=3)


def test_models_file_round_trip(tmp_path):
    frames = diurnal_trace(["s0", "s1"], ["f0", "f1", "f2"], seed=1)
    models = fit_trace(frames, 10)
    path = tmp_path / "m.json"
    save_models(models, path)
    back = load_models(path)
    assert back.keys() == models.keys()
    for key in models:
        np.testing.assert_array_equal(back[key].P, models[key].P)
        np.testing.assert_array_equal(back[key].states, models[key].states)
        assert back[key].initial == models[key].initial
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "other"}')
    with pytest.raises(TraceFormatError):
        load_models(bad)


def test_generate_trace_cells_are_independent():
    frames = diurnal_trace(["s0", "s1"], ["f0", "f1"], seed=3)
    models = fit_trace(frames, 8)
    full = generate_trace(models, ["s0", "s1"], ["f0", "f1"], 50, 60.0, seed=9)
    part = generate_trace({k: v for k, v in models.items() if k == ("s1", "f1")}, ["s0", "s1"], ["f0", "f1"], 50, 60.0, seed=9)
    np.testing.assert_array_equal([f.rates[1, 1] for f in full], [f.rates[1, 1] for f in part])
    assert all(f.rates[0, 0] == 0 for f in part)
    assert [f.t for f in full][:3] == [0.0, 60.0, 120.0]


def test_child_seed_ignores_call_history():
    a = np.random.default_rng(child_seed(5, 1, 2)).random()
    np.random.SeedSequence(5).spawn(3)
    b = np.random.default_rng(child_seed(5, 1, 2)).random()
    assert a == b
    assert a != np.random.default_rng(child_seed(5, 2, 1)).random()


def test_diurnal_trace_bounds():
    frames = diurnal_trace(["s0"], ["f0", "f1"], hours=24, step_sec=600, peak_rps=2.0, seed=0)
    r = np.stack([f.rates for f in frames])
    assert len(frames) == 144
    assert r.min() >= 0 and r.max() <= 2.0
