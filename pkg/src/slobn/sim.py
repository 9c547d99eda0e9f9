"""Synthetic edge-workload generator with a known ground-truth causal model.

The ground truth mirrors a video-transformation workload on an edge device:
resolution, frame rate, and the device power mode are free parameters; the
remaining metrics react to them. Structure (fixed by construction):

    pixel, fps, config, gpu                    roots (uniform priors)
    pixel, fps      -> bitrate                 pixels shipped per second
    pixel, gpu, config -> delay                per-frame processing time
    fps, config     -> cpu                     load rises with rate, falls
                                               with stronger power modes
    pixel           -> memory                  frame buffers
    pixel, fps      -> transformed             detection succeeds on large
                                               frames, degrades at high rate
    pixel, fps      -> distance                tracking smoothness
    bitrate, gpu, config -> consumption        energy drawn

Conditional tables are hand-designed, not measured: each child concentrates
most of its mass on a "center" bin determined by its parents, with strictly
positive leakage everywhere. Centers and bin edges are chosen so that the
two built-in scenarios split the 90-point configuration space into a small
feasible region and a large infeasible one, and so that every scenario
threshold (and every frame-budget deadline) coincides with a bin edge,
making discrete event probabilities exact rather than conservative.
A seed perturbs all tables by a few percent, giving a family of nets with
identical structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .graph import Dag, topological_order
from .learn import Cpt, DiscreteBayesNet
from .reconfig import DeviceConfig
from .slo import (
    FORMULA_FRAME_BUDGET,
    FulfillmentReport,
    KIND_BOUND,
    KIND_COMPOSITE,
    KIND_MINIMIZE,
    KIND_RATE,
    SloSpec,
    empirical_fulfillment,
)
from .telemetry import (
    ColumnCodec,
    DiscretizationMap,
    DiscreteDataset,
    KIND_BOOLEAN,
    KIND_NOMINAL,
    KIND_NUMERIC,
    RawColumn,
    RawDataset,
)

#: Frame sizes (total pixels) for 120p through 720p at 16:9.
PIXEL_VALUES = (25560.0, 57600.0, 102240.0, 230400.0, 409920.0, 921600.0)
FPS_VALUES = (12.0, 16.0, 20.0, 26.0, 30.0)
CONFIG_MODES = ("2C_10W", "4C_15W", "6C_20W")

#: Delay bin edges sit exactly on the frame budgets 1000/fps so that
#: "finished within the frame period" is a union of whole bins.
DELAY_EDGES = tuple(1000.0 / f for f in sorted(FPS_VALUES, reverse=True))
BITRATE_EDGES = (6e5, 1.6e6, 3.2e6, 8.2e6, 1.6e7)
DISTANCE_EDGES = (15.0, 35.0, 60.0, 120.0)
CONSUMPTION_EDGES = (5.5, 6.5, 7.5, 8.5)
CPU_EDGES = (25.0, 50.0, 75.0)
MEMORY_EDGES = (40.0, 70.0)

#: Finite sampling range per binned column (outer bins are unbounded in the
#: codec but samples need concrete values).
_SUPPORT = {
    "delay": (5.0, 200.0),
    "cpu": (5.0, 100.0),
    "memory": (20.0, 95.0),
    "bitrate": (2e5, 2.8e7),
    "distance": (0.0, 300.0),
    "consumption": (4.5, 9.5),
}

_SHARP = (400.0, 6.0, 1.5, 0.25)   # ~96% of mass on the center bin
_MEDIUM = (100.0, 6.0, 1.0, 0.3)

_EDGES = (
    ("pixel", "bitrate"), ("fps", "bitrate"),
    ("pixel", "delay"), ("gpu", "delay"), ("config", "delay"),
    ("fps", "cpu"), ("config", "cpu"),
    ("pixel", "memory"),
    ("pixel", "transformed"), ("fps", "transformed"),
    ("pixel", "distance"), ("fps", "distance"),
    ("bitrate", "consumption"), ("gpu", "consumption"), ("config", "consumption"),
)

_TRANSFORM_BASE = (0.05, 0.93, 0.985, 0.995, 0.997, 0.998)
_TRANSFORM_FPS_PENALTY = (0.0, 0.02, 0.04, 0.065, 0.09)


def _clamp_center(x: float, card: int) -> int:
    return int(min(max(int(np.floor(x + 0.5)), 0), card - 1))


def _kernel(center: int, card: int, weights: tuple[float, ...]) -> np.ndarray:
    row = np.array([weights[min(abs(i - center), len(weights) - 1)] for i in range(card)])
    return row / row.sum()


def _delay_center(p: int, g: int, c: int) -> int:
    return _clamp_center(0.9 * p - 0.7 * c - 1.6 * g + 1.1, 6)


def _bitrate_center(p: int, f: int) -> int:
    product = PIXEL_VALUES[p] * FPS_VALUES[f]
    return int(np.searchsorted(BITRATE_EDGES, product, side="left"))


def _distance_center(p: int, f: int) -> int:
    if p == 0:
        return 4  # tracking effectively lost at the lowest resolution
    return 2 if f == 0 else (1 if f == 1 else 0)


def _cpu_center(f: int, c: int) -> int:
    return _clamp_center(0.8 * f - 0.9 * c + 0.8, 4)


def _memory_center(p: int) -> int:
    return (0, 0, 1, 1, 2, 2)[p]


def _consumption_center(b: int, g: int, c: int) -> int:
    return _clamp_center(0.45 * b + 0.8 * c + 0.7 * g, 5)


def _ground_truth_codecs() -> DiscretizationMap:
    return DiscretizationMap((
        ColumnCodec("delay", KIND_NUMERIC, "ms", cuts=DELAY_EDGES),
        ColumnCodec("cpu", KIND_NUMERIC, "%", cuts=CPU_EDGES),
        ColumnCodec("memory", KIND_NUMERIC, "%", cuts=MEMORY_EDGES),
        ColumnCodec("pixel", KIND_NUMERIC, "num", parameterizable=True, values=PIXEL_VALUES),
        ColumnCodec("fps", KIND_NUMERIC, "num", parameterizable=True, values=FPS_VALUES),
        ColumnCodec("bitrate", KIND_NUMERIC, "px/s", cuts=BITRATE_EDGES),
        ColumnCodec("distance", KIND_NUMERIC, "px", cuts=DISTANCE_EDGES),
        ColumnCodec("transformed", KIND_BOOLEAN, "T/F", values=(False, True)),
        ColumnCodec("gpu", KIND_BOOLEAN, "T/F", values=(False, True)),
        ColumnCodec("config", KIND_NOMINAL, "mode", parameterizable=True, values=CONFIG_MODES),
        ColumnCodec("consumption", KIND_NUMERIC, "W", cuts=CONSUMPTION_EDGES),
    ))


def _jitter_rows(table: np.ndarray, rng: np.random.Generator, sigma: float = 0.02) -> np.ndarray:
    noisy = table * np.exp(rng.normal(0.0, sigma, size=table.shape))
    noisy /= noisy.sum(axis=1, keepdims=True)
    noisy.flags.writeable = False
    return noisy


def ground_truth(seed: int = 0) -> DiscreteBayesNet:
    """The documented ground-truth net; deterministic for a given seed."""
    codec = _ground_truth_codecs()
    metas = codec.metas()
    cards = {m.name: m.cardinality for m in metas}
    dag = Dag(tuple(m.name for m in metas), frozenset(_EDGES))
    rng = np.random.default_rng(seed)

    def uniform_root(name: str) -> np.ndarray:
        return np.full((1, cards[name]), 1.0 / cards[name])

    def table(child: str, rule) -> np.ndarray:
        parents = dag.parents(child)
        parent_cards = tuple(cards[p] for p in parents)
        rows = [rule(dict(zip(parents, combo))) for combo in np.ndindex(*parent_cards)]
        return np.array(rows, dtype=np.float64)

    raw_tables = {
        "pixel": uniform_root("pixel"),
        "fps": uniform_root("fps"),
        "config": uniform_root("config"),
        "gpu": uniform_root("gpu"),
        "delay": table("delay", lambda s: _kernel(
            _delay_center(s["pixel"], s["gpu"], s["config"]), cards["delay"], _SHARP)),
        "cpu": table("cpu", lambda s: _kernel(
            _cpu_center(s["fps"], s["config"]), cards["cpu"], _MEDIUM)),
        "memory": table("memory", lambda s: _kernel(
            _memory_center(s["pixel"]), cards["memory"], _MEDIUM)),
        "bitrate": table("bitrate", lambda s: _kernel(
            _bitrate_center(s["pixel"], s["fps"]), cards["bitrate"], _SHARP)),
        "distance": table("distance", lambda s: _kernel(
            _distance_center(s["pixel"], s["fps"]), cards["distance"], _SHARP)),
        "transformed": table("transformed", lambda s: np.array([
            1.0 - _transform_success(s["pixel"], s["fps"]),
            _transform_success(s["pixel"], s["fps"]),
        ])),
        "consumption": table("consumption", lambda s: _kernel(
            _consumption_center(s["bitrate"], s["gpu"], s["config"]),
            cards["consumption"], _SHARP)),
    }
    cpts = {
        name: Cpt(name, dag.parents(name), _jitter_rows(raw_tables[name], rng))
        for name in dag.nodes
    }
    return DiscreteBayesNet(dag, cpts, metas, codec)


def _transform_success(p: int, f: int) -> float:
    return float(np.clip(_TRANSFORM_BASE[p] - _TRANSFORM_FPS_PENALTY[f], 0.02, 0.99))


@dataclass(frozen=True)
class Dwell:
    """One stretch of constant parameter assignments."""

    assignment: Mapping[str, object]
    rows: int | None = None


@dataclass(frozen=True)
class SweepSchedule:
    """A sequence of dwells; the full sweep covers every parameter value."""

    dwells: tuple[Dwell, ...]


def full_sweep(rows_per_dwell: int | None = None) -> SweepSchedule:
    """Every (pixel, fps, config, gpu) combination once, in declaration order."""
    dwells = []
    for pixel in PIXEL_VALUES:
        for fps in FPS_VALUES:
            for mode in CONFIG_MODES:
                for gpu in (False, True):
                    dwells.append(Dwell(
                        {"pixel": pixel, "fps": fps, "config": mode, "gpu": gpu},
                        rows_per_dwell,
                    ))
    return SweepSchedule(tuple(dwells))


def parse_schedule(text: str) -> SweepSchedule:
    """Parse the one-dwell-per-line schedule format.

    Each line reads ``dwell key=value ... rows=N``; blank lines and ``#``
    comments are ignored.
    """
    dwells = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "dwell":
            raise ValueError(f"line {line_no}: expected 'dwell', got {parts[0]!r}")
        assignment: dict[str, object] = {}
        rows = None
        for part in parts[1:]:
            if "=" not in part:
                raise ValueError(f"line {line_no}: expected key=value, got {part!r}")
            key, value = part.split("=", 1)
            if key == "rows":
                rows = int(value)
            elif key == "gpu":
                assignment[key] = value.strip().lower() in ("true", "t", "1")
            elif key == "config":
                assignment[key] = value
            else:
                assignment[key] = float(value)
        if not assignment:
            raise ValueError(f"line {line_no}: dwell assigns nothing")
        dwells.append(Dwell(assignment, rows))
    return SweepSchedule(tuple(dwells))


def serialize_schedule(schedule: SweepSchedule) -> str:
    lines = []
    for dwell in schedule.dwells:
        fields = [f"{k}={_render(v)}" for k, v in dwell.assignment.items()]
        if dwell.rows is not None:
            fields.append(f"rows={dwell.rows}")
        lines.append("dwell " + " ".join(fields))
    return "\n".join(lines) + ("\n" if lines else "")


def _render(value) -> str:
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, float) and value == int(value):
        return str(int(value))
    return str(value)


def sample_states(
    bn: DiscreteBayesNet,
    clamps: Mapping[str, int],
    n_rows: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Ancestral sampling of state indices with some variables clamped."""
    names = [m.name for m in bn.metas]
    index = {name: i for i, name in enumerate(names)}
    out = np.empty((n_rows, len(names)), dtype=np.int32)
    for var in topological_order(bn.dag):
        col = index[var]
        if var in clamps:
            out[:, col] = clamps[var]
            continue
        cpt = bn.cpts[var]
        if cpt.parents:
            parent_cards = tuple(bn.cardinality(p) for p in cpt.parents)
            ctx = np.ravel_multi_index(
                tuple(out[:, index[p]] for p in cpt.parents), parent_cards
            )
            rows = cpt.table[ctx]
        else:
            rows = np.broadcast_to(cpt.table[0], (n_rows, cpt.table.shape[1]))
        cumulative = np.cumsum(rows, axis=1)
        draws = rng.random(n_rows)
        out[:, col] = np.minimum(
            (draws[:, None] >= cumulative).sum(axis=1), cpt.table.shape[1] - 1
        )
    return out


def dataset_from_states(bn: DiscreteBayesNet, rows: np.ndarray) -> DiscreteDataset:
    """Wrap sampled state rows as a discrete dataset over the net's variables."""
    rows = np.asarray(rows, dtype=np.int32)
    rows.flags.writeable = False
    return DiscreteDataset(bn.metas, rows, bn.codec)


def _raw_values(
    bn: DiscreteBayesNet, name: str, states: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    codec = bn.codec.codec(name)
    if codec.is_identity:
        if codec.kind == KIND_BOOLEAN:
            return np.array(codec.values, dtype=np.bool_)[states]
        if codec.kind == KIND_NUMERIC:
            return np.array(codec.values, dtype=np.float64)[states]
        return np.array(codec.values, dtype=object)[states]
    if name in _SUPPORT:
        support_lo, support_hi = _SUPPORT[name]
    elif codec.cuts:
        pad = (codec.cuts[-1] - codec.cuts[0]) / len(codec.cuts) or 1.0
        support_lo, support_hi = codec.cuts[0] - pad, codec.cuts[-1] + pad
    else:
        raise ValueError(f"column {name!r} has a single unbounded bin; cannot sample raw values")
    lows = np.array([max(codec.region(s)[0], support_lo) for s in range(codec.cardinality)])
    highs = np.array([min(codec.region(s)[1], support_hi) for s in range(codec.cardinality)])
    lo, hi = lows[states], highs[states]
    # hi - u * (hi - lo) lands in (lo, hi], matching the codec's right-closed bins.
    return hi - rng.random(len(states)) * (hi - lo)


def sample_telemetry(
    bn: DiscreteBayesNet,
    schedule: SweepSchedule,
    rows_per_dwell: int | None = None,
    seed: int = 0,
) -> RawDataset:
    """Sample raw telemetry rows dwell by dwell.

    Parameter nodes are clamped to the dwell's assignment, the rest are
    ancestrally sampled, and binned variables are de-discretized by drawing
    uniformly within their bin, so the emitted CSV exercises the whole
    ingestion and discretization path. Deterministic per seed.
    """
    if not schedule.dwells:
        raise ValueError("schedule must contain at least one dwell")
    rng = np.random.default_rng(seed)
    chunks: list[np.ndarray] = []
    raw_chunks: list[dict[str, np.ndarray]] = []
    for dwell in schedule.dwells:
        n = dwell.rows if dwell.rows is not None else rows_per_dwell
        if n is None or n <= 0:
            raise ValueError("each dwell needs a positive row count")
        clamps = {
            name: bn.state_index(name, value) for name, value in dwell.assignment.items()
        }
        states = sample_states(bn, clamps, n, rng)
        raw_chunks.append({
            m.name: _raw_values(bn, m.name, states[:, i], rng)
            for i, m in enumerate(bn.metas)
        })
        chunks.append(states)

    columns = []
    for meta in bn.metas:
        merged = np.concatenate([chunk[meta.name] for chunk in raw_chunks])
        columns.append(RawColumn(meta.name, meta.kind, meta.unit, meta.parameterizable, merged))
    return RawDataset(tuple(columns))


def replay_window(
    bn: DiscreteBayesNet,
    config: DeviceConfig,
    gpu: bool,
    n_rows: int = 12_000,
    seed: int = 0,
) -> RawDataset:
    """Raw telemetry window sampled under one clamped configuration."""
    missing = set(bn.parameterizable_names) - set(config.assignment)
    if missing:
        raise ValueError(f"replay config must assign every parameter; missing {sorted(missing)}")
    assignment = dict(config.assignment)
    assignment["gpu"] = gpu
    schedule = SweepSchedule((Dwell(assignment, n_rows),))
    return sample_telemetry(bn, schedule, seed=seed)


def replay(
    bn: DiscreteBayesNet,
    config: DeviceConfig,
    gpu: bool,
    slos: Sequence[SloSpec],
    n_rows: int = 12_000,
    seed: int = 0,
) -> FulfillmentReport:
    """Run one configuration for a window of rows and evaluate the SLOs.

    The default window of 12,000 rows corresponds to ten minutes at the
    mid-range frame rate of 20 fps.
    """
    window = replay_window(bn, config, gpu, n_rows, seed)
    return empirical_fulfillment(window, slos)


def scenario_slos(scenario: str) -> tuple[SloSpec, ...]:
    """SLO sets for the two built-in evaluation scenarios.

    Scenario "a" is a local-rendering deployment: tight tracking and
    timeliness, generous network budget, no GPU available. Scenario "b"
    streams to remote consumers: strict transformation success and a tight
    network budget, relaxed timeliness, GPU available.
    """
    key = scenario.strip().lower()
    if key == "a":
        thresholds = dict(success=0.90, distance=35.0, network=8.2e6, within=0.95)
    elif key == "b":
        thresholds = dict(success=0.98, distance=60.0, network=1.6e6, within=0.75)
    else:
        raise ValueError(f"unknown scenario {scenario!r} (expected 'a' or 'b')")
    return (
        SloSpec("transf_success", KIND_RATE, ("transformed",), p_min=thresholds["success"]),
        SloSpec("pixel_distance", KIND_BOUND, ("distance",), op="<=",
                threshold=thresholds["distance"], p_min=0.95, unit="px"),
        SloSpec("network_usage", KIND_BOUND, ("bitrate",), op="<=",
                threshold=thresholds["network"], p_min=0.95, unit="px/s"),
        SloSpec("within_time", KIND_COMPOSITE, ("delay", "fps"),
                formula=FORMULA_FRAME_BUDGET, p_min=thresholds["within"]),
        SloSpec("energy_cons", KIND_MINIMIZE, ("consumption",), unit="W"),
    )


def scenario_evidence(scenario: str) -> dict[str, str]:
    """Extra evidence per scenario: GPU availability."""
    key = scenario.strip().lower()
    if key == "a":
        return {"gpu": "False"}
    if key == "b":
        return {"gpu": "True"}
    raise ValueError(f"unknown scenario {scenario!r} (expected 'a' or 'b')")
