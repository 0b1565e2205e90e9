"""Incoming-rate time series: trace CSV I/O and Markov-chain trace synthesis.

Trace CSV layout (UTF-8, rows sorted by time)::

    t_sec,fog_id,service_id,rate_rps
    0,f0,s0,10.5

Every distinct ``t_sec`` is one frame; (service, fog) cells a frame does not
mention are zero.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import TraceFormatError

HEADER = ["t_sec", "fog_id", "service_id", "rate_rps"]
TRACE_FORMAT = "fogplan-trace/1"
DTMC_FORMAT = "fogplan-dtmc/1"
RNG_ALGORITHM = "numpy.random.Generator(PCG64) seeded via SeedSequence"


@dataclass(frozen=True)
class TraceFrame:
    t: float
    rates: np.ndarray  # (services, fogs), requests/s
    service_ids: tuple[str, ...]
    fog_ids: tuple[str, ...]


@dataclass(frozen=True)
class DtmcModel:
    states: np.ndarray  # rate level of each state, strictly increasing
    P: np.ndarray  # row-stochastic transition matrix
    initial: int = 0

    def __post_init__(self):
        states = np.asarray(self.states, float)
        P = np.asarray(self.P, float)
        S = len(states)
        if S < 1 or P.shape != (S, S):
            raise ValueError(f"{S} states but transition matrix of shape {P.shape}")
        if S > 1 and not (np.diff(states) > 0).all():
            raise ValueError("state rates must be strictly increasing")
        if (P < 0).any() or not np.allclose(P.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ValueError("transition matrix rows must be probability vectors")
        if not 0 <= self.initial < S:
            raise ValueError(f"initial state {self.initial} out of range")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "P", P)

    def to_json(self) -> dict:
        return {
            "states": self.states.tolist(),
            "P": self.P.ravel().tolist(),
            "initial": int(self.initial),
        }

    @classmethod
    def from_json(cls, doc: dict) -> DtmcModel:
        states = np.asarray(doc["states"], float)
        S = len(states)
        return cls(states, np.asarray(doc["P"], float).reshape(S, S), int(doc.get("initial", 0)))


def natural_key(s: str):
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", s)]


# ---------------------------------------------------------------------------
# CSV


def _text(source) -> io.TextIOBase:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    if hasattr(source, "read"):
        data = source.read()
        return io.StringIO(data.decode("utf-8") if isinstance(data, bytes) else data)
    with open(source, encoding="utf-8") as fh:
        return io.StringIO(fh.read())


def read_trace(
    source,
    service_ids: Sequence[str] | None = None,
    fog_ids: Sequence[str] | None = None,
) -> list[TraceFrame]:
    """Parse a trace CSV (path, bytes or file object) into frames.

    Without explicit id lists, services and fog nodes are ordered by natural
    sort of their ids.
    """
    reader = csv.reader(_text(source))
    rows = []
    header_seen = False
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if not header_seen:
            if [c.strip() for c in row] != HEADER:
                raise TraceFormatError(f"line {lineno}: expected header {','.join(HEADER)}")
            header_seen = True
            continue
        if len(row) != 4:
            raise TraceFormatError(f"line {lineno}: expected 4 fields, got {len(row)}")
        try:
            t = float(row[0])
            rate = float(row[3])
        except ValueError:
            raise TraceFormatError(f"line {lineno}: non-numeric time or rate") from None
        fog, svc = row[1].strip(), row[2].strip()
        if not fog or not svc:
            raise TraceFormatError(f"line {lineno}: empty fog or service id")
        if not (math.isfinite(t) and math.isfinite(rate)) or rate < 0:
            raise TraceFormatError(f"line {lineno}: rate must be finite and non-negative")
        if rows and t < rows[-1][0]:
            raise TraceFormatError(f"line {lineno}: timestamp {t} goes backwards")
        rows.append((t, fog, svc, rate, lineno))

    svc_order = list(service_ids) if service_ids is not None else sorted({r[2] for r in rows}, key=natural_key)
    fog_order = list(fog_ids) if fog_ids is not None else sorted({r[1] for r in rows}, key=natural_key)
    s_index = {s: i for i, s in enumerate(svc_order)}
    f_index = {f: i for i, f in enumerate(fog_order)}

    frames: list[TraceFrame] = []
    current_t = None
    rates = None
    seen: set[tuple[str, str]] = set()
    for t, fog, svc, rate, lineno in rows:
        if svc not in s_index or fog not in f_index:
            raise TraceFormatError(f"line {lineno}: unknown service {svc!r} or fog node {fog!r}")
        if t != current_t:
            if rates is not None:
                frames.append(TraceFrame(current_t, rates, tuple(svc_order), tuple(fog_order)))
            current_t, rates, seen = t, np.zeros((len(svc_order), len(fog_order))), set()
        if (svc, fog) in seen:
            raise TraceFormatError(f"line {lineno}: duplicate entry for {svc}/{fog} at t={t}")
        seen.add((svc, fog))
        rates[s_index[svc], f_index[fog]] = rate
    if rates is not None:
        frames.append(TraceFrame(current_t, rates, tuple(svc_order), tuple(fog_order)))
    return frames


def write_trace(frames: Iterable[TraceFrame], dest) -> None:
    """Write frames as trace CSV to a path or text stream, one row per cell."""
    if isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__"):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_trace(frames, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(HEADER)
    for fr in frames:
        t = repr(float(fr.t)) if not float(fr.t).is_integer() else str(int(fr.t))
        for j, fog in enumerate(fr.fog_ids):
            for a, svc in enumerate(fr.service_ids):
                w.writerow([t, fog, svc, repr(float(fr.rates[a, j]))])


def frame_step(frames: Sequence[TraceFrame]) -> float:
    """Spacing between frames; raises if it is not constant."""
    if len(frames) < 2:
        raise TraceFormatError("need at least two frames to infer the traffic step")
    gaps = np.diff([f.t for f in frames])
    if not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-9) or gaps[0] <= 0:
        raise TraceFormatError("frames are not evenly spaced")
    return float(gaps[0])


# ---------------------------------------------------------------------------
# DTMC


def fit_dtmc(series, n_states: int = 30) -> DtmcModel:
    """Quantize ``series`` into equal-width bins and count bin-to-bin moves.

    Each state's rate level is the mean of the samples that fell in its bin
    (the bin centre when none did).  States without outgoing transitions
    loop on themselves.
    """
    x = np.asarray(series, float)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("need a one-dimensional series of at least two samples")
    if n_states < 1:
        raise ValueError("n_states must be at least 1")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo or n_states == 1:
        return DtmcModel(np.array([x.mean()]), np.ones((1, 1)), 0)

    idx = np.minimum(((x - lo) / (hi - lo) * n_states).astype(np.int64), n_states - 1)
    edges = lo + (hi - lo) * np.arange(n_states + 1) / n_states
    states = np.empty(n_states)
    for i in range(n_states):
        hits = x[idx == i]
        states[i] = hits.mean() if len(hits) else 0.5 * (edges[i] + edges[i + 1])
    counts = np.zeros((n_states, n_states))
    np.add.at(counts, (idx[:-1], idx[1:]), 1.0)
    out = counts.sum(axis=1)
    for i in np.flatnonzero(out == 0):
        counts[i, i] = 1.0
        out[i] = 1.0
    return DtmcModel(states, counts / out[:, None], int(idx[0]))


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def child_seed(seed, *key: int) -> np.random.SeedSequence:
    """Deterministic child stream; unlike ``spawn`` it does not depend on call history."""
    root = seed_sequence(seed)
    return np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + key)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate(model: DtmcModel, steps: int, seed=None) -> np.ndarray:
    """Walk the chain from its initial state, emitting one rate level per step."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    rng = _rng(seed)
    cum = np.cumsum(model.P, axis=1)
    last = len(model.states) - 1
    u = rng.random(steps)
    path = np.empty(steps, np.int64)
    s = model.initial
    for t in range(steps):
        path[t] = s
        s = min(int(np.searchsorted(cum[s], u[t], side="right")), last)
    return model.states[path]


def fit_trace(frames: Sequence[TraceFrame], n_states: int = 30) -> dict[tuple[str, str], DtmcModel]:
    """One chain per (service id, fog id) cell of the trace."""
    if not frames:
        raise ValueError("cannot fit an empty trace")
    series = np.stack([f.rates for f in frames])
    first = frames[0]
    return {
        (svc, fog): fit_dtmc(series[:, a, j], n_states)
        for a, svc in enumerate(first.service_ids)
        for j, fog in enumerate(first.fog_ids)
    }


def generate_trace(
    models: dict[tuple[str, str], DtmcModel],
    service_ids: Sequence[str],
    fog_ids: Sequence[str],
    steps: int,
    step_sec: float,
    seed=None,
) -> list[TraceFrame]:
    """Synthesize a trace; cells without a model stay at zero.

    Each cell draws from its own child stream of ``seed`` so the output does
    not depend on which other cells exist.
    """
    A, F = len(service_ids), len(fog_ids)
    rates = np.zeros((steps, A, F))
    root = seed_sequence(seed)
    for a, svc in enumerate(service_ids):
        for j, fog in enumerate(fog_ids):
            model = models.get((svc, fog))
            if model is None:
                continue
            child = child_seed(root, a, j)
            rates[:, a, j] = generate(model, steps, np.random.default_rng(child))
    sids, fids = tuple(service_ids), tuple(fog_ids)
    return [TraceFrame(t * step_sec, rates[t], sids, fids) for t in range(steps)]


def save_models(models: dict[tuple[str, str], DtmcModel], dest) -> None:
    doc = {
        "format": DTMC_FORMAT,
        "models": [
            {"service_id": svc, "fog_id": fog, **m.to_json()}
            for (svc, fog), m in sorted(models.items(), key=lambda kv: (natural_key(kv[0][0]), natural_key(kv[0][1])))
        ],
    }
    with open(dest, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


def load_models(path) -> dict[tuple[str, str], DtmcModel]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != DTMC_FORMAT:
        raise TraceFormatError(f"{path}: not a {DTMC_FORMAT} file")
    try:
        return {(m["service_id"], m["fog_id"]): DtmcModel.from_json(m) for m in doc["models"]}
    except (KeyError, ValueError) as exc:
        raise TraceFormatError(f"{path}: bad model entry ({exc})") from None


def diurnal_trace(
    service_ids: Sequence[str],
    fog_ids: Sequence[str],
    hours: float = 48.0,
    step_sec: float = 900.0,
    peak_rps: float = 1.0,
    seed=None,
) -> list[TraceFrame]:
    """A day/night-shaped synthetic source trace with multiplicative noise.

    Stands in for a measured trace when fitting chains.  Rates stay in
    ``[0, peak_rps]``.
    """
    rng = _rng(seed)
    steps = int(round(hours * 3600 / step_sec))
    t = np.arange(steps) * step_sec
    A, F = len(service_ids), len(fog_ids)
    level = rng.uniform(0.2, 1.0, (A, F))
    phase = rng.uniform(-0.5, 0.5, (A, F))
    day = 2 * np.pi * t / 86400.0
    shape = 0.55 + 0.45 * np.sin(day[:, None, None] + phase)
    noise = rng.lognormal(0.0, 0.3, (steps, A, F))
    rates = np.clip(peak_rps * level * shape * noise, 0.0, peak_rps)
    sids, fids = tuple(service_ids), tuple(fog_ids)
    return [TraceFrame(float(t[i]), rates[i], sids, fids) for i in range(steps)]
