"""Service Level Objectives: declaration, discrete events, and evaluation.

An SLO is a predicate over one or more metrics plus a required fulfillment
probability (or a minimize objective). To evaluate an SLO against a discrete
model the predicate is compiled once into a *satisfying set* of joint states;
a bin that straddles a threshold only counts as satisfying if its
conservative edge does, so the model under-promises rather than over-promises.

Probabilistic evaluation is blanket-scoped: evidence is restricted to the
variables that can matter (the metrics' merged Markov blanket plus the
metrics themselves), and the query runs over that subset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import merged_blanket
from .inference import query
from .learn import DiscreteBayesNet
from .telemetry import (
    DiscreteDataset,
    DiscretizationMap,
    KIND_BOOLEAN,
    RawDataset,
)

KIND_RATE = "rate"
KIND_BOUND = "bound"
KIND_RANGE = "range"
KIND_COMPOSITE = "composite"
KIND_MINIMIZE = "minimize"
_SLO_KINDS = (KIND_RATE, KIND_BOUND, KIND_RANGE, KIND_COMPOSITE, KIND_MINIMIZE)

#: Composite formula: first metric must not exceed 1000 / second metric.
#: Models "the frame finished before the next one arrived" for a delay in
#: milliseconds paired with a per-second rate.
FORMULA_FRAME_BUDGET = "frame_budget"

#: Bound and range SLOs whose spec omits p_min default to this.
DEFAULT_P_MIN = 0.95


class SloParseError(ValueError):
    """Malformed SLO specification text."""


@dataclass(frozen=True)
class SloSpec:
    """One declarative requirement over metrics."""

    name: str
    kind: str
    metrics: tuple[str, ...]
    op: str | None = None
    threshold: float | None = None
    lo: float | None = None
    hi: float | None = None
    formula: str | None = None
    p_min: float | None = None
    unit: str | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("SLO name must be nonempty")
        if self.kind not in _SLO_KINDS:
            raise ValueError(f"unknown SLO kind {self.kind!r}")
        if not self.metrics or len(set(self.metrics)) != len(self.metrics):
            raise ValueError(f"SLO {self.name!r}: metrics must be nonempty and distinct")
        if self.kind == KIND_MINIMIZE:
            if self.p_min is not None:
                raise ValueError(f"SLO {self.name!r}: minimize SLOs carry no p_min")
            if len(self.metrics) != 1:
                raise ValueError(f"SLO {self.name!r}: minimize takes exactly one metric")
            return
        if self.p_min is None or not 0.0 <= self.p_min <= 1.0:
            raise ValueError(f"SLO {self.name!r}: p_min must be in [0, 1]")
        if self.kind == KIND_RATE and len(self.metrics) != 1:
            raise ValueError(f"SLO {self.name!r}: rate takes exactly one metric")
        if self.kind == KIND_BOUND:
            if len(self.metrics) != 1 or self.op not in ("<=", ">=") or self.threshold is None:
                raise ValueError(f"SLO {self.name!r}: bound needs one metric, op, and value")
        if self.kind == KIND_RANGE:
            if len(self.metrics) != 1 or self.lo is None or self.hi is None or self.lo > self.hi:
                raise ValueError(f"SLO {self.name!r}: range needs one metric and lo <= hi")
        if self.kind == KIND_COMPOSITE:
            if self.formula != FORMULA_FRAME_BUDGET:
                raise ValueError(f"SLO {self.name!r}: unknown composite formula {self.formula!r}")
            if len(self.metrics) != 2:
                raise ValueError(f"SLO {self.name!r}: {FORMULA_FRAME_BUDGET} takes two metrics")


@dataclass(frozen=True)
class SloEvent:
    """The joint discrete states of an SLO's metrics that fulfill it."""

    slo: str
    metrics: tuple[str, ...]
    satisfying: frozenset


@dataclass(frozen=True)
class SloResult:
    """Evaluation of one SLO over a telemetry window."""

    name: str
    kind: str
    rate: float | None
    mean_value: float | None
    sample_count: int
    p_min: float | None
    violated: bool


@dataclass(frozen=True)
class FulfillmentReport:
    """Per-SLO rates/means over one window, with violation flags."""

    results: tuple[SloResult, ...]

    def result(self, name: str) -> SloResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def violations(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.results if r.violated)


_STANZA_KEYS = ("kind", "metric", "metrics", "op", "value", "lo", "hi",
                "formula", "p_min", "unit")


def parse_slos(text: str, metas: Sequence | None = None) -> tuple[SloSpec, ...]:
    """Parse the line-oriented SLO format.

    Stanzas start with ``slo <name>`` followed by ``key value`` lines; blank
    lines and ``#`` comments are ignored. When ``metas`` is given, metric
    names (and units, where both sides declare one) are validated against it.
    """
    stanzas: list[tuple[int, str, dict]] = []
    current: dict | None = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key = parts[0]
        if key == "slo":
            if len(parts) != 2:
                raise SloParseError(f"line {line_no}: expected 'slo <name>'")
            current = {}
            stanzas.append((line_no, parts[1], current))
            continue
        if current is None:
            raise SloParseError(f"line {line_no}: {key!r} before any 'slo' stanza")
        if key not in _STANZA_KEYS:
            raise SloParseError(f"line {line_no}: unknown key {key!r}")
        if key in current:
            raise SloParseError(f"line {line_no}: duplicate key {key!r}")
        current[key] = (line_no, parts[1:])

    specs = []
    for start_line, name, fields in stanzas:
        specs.append(_build_spec(start_line, name, fields, metas))
    return tuple(specs)


def _field_scalar(fields: dict, key: str) -> tuple[int, str] | None:
    if key not in fields:
        return None
    line_no, parts = fields[key]
    if len(parts) != 1:
        raise SloParseError(f"line {line_no}: {key!r} takes exactly one value")
    return line_no, parts[0]


def _field_float(fields: dict, key: str) -> float | None:
    scalar = _field_scalar(fields, key)
    if scalar is None:
        return None
    line_no, token = scalar
    try:
        return float(token)
    except ValueError:
        raise SloParseError(f"line {line_no}: {key!r} is not a number: {token!r}") from None


def _build_spec(start_line: int, name: str, fields: dict, metas: Sequence | None) -> SloSpec:
    kind_field = _field_scalar(fields, "kind")
    if kind_field is None:
        raise SloParseError(f"line {start_line}: SLO {name!r} declares no kind")
    kind = kind_field[1]

    metric_names: tuple[str, ...] = ()
    if "metric" in fields and "metrics" in fields:
        raise SloParseError(f"line {start_line}: use either 'metric' or 'metrics'")
    if "metric" in fields:
        metric_names = (_field_scalar(fields, "metric")[1],)
    elif "metrics" in fields:
        line_no, parts = fields["metrics"]
        if not parts:
            raise SloParseError(f"line {line_no}: 'metrics' lists no names")
        metric_names = tuple(parts)

    unit_field = _field_scalar(fields, "unit")
    unit = unit_field[1] if unit_field else None
    p_min = _field_float(fields, "p_min")
    if p_min is None and kind in (KIND_BOUND, KIND_RANGE):
        p_min = DEFAULT_P_MIN
    op_field = _field_scalar(fields, "op")
    formula_field = _field_scalar(fields, "formula")

    try:
        spec = SloSpec(
            name=name,
            kind=kind,
            metrics=metric_names,
            op=op_field[1] if op_field else None,
            threshold=_field_float(fields, "value"),
            lo=_field_float(fields, "lo"),
            hi=_field_float(fields, "hi"),
            formula=formula_field[1] if formula_field else None,
            p_min=p_min,
            unit=unit,
        )
    except ValueError as exc:
        raise SloParseError(f"line {start_line}: {exc}") from None

    if metas is not None:
        by_name = {m.name: m for m in metas}
        for metric in spec.metrics:
            if metric not in by_name:
                raise SloParseError(
                    f"line {start_line}: unknown metric {metric!r} in SLO {name!r}"
                )
        if spec.kind == KIND_RATE and by_name[spec.metrics[0]].kind != KIND_BOOLEAN:
            raise SloParseError(
                f"line {start_line}: rate SLO {name!r} needs a boolean metric"
            )
        if spec.kind in (KIND_BOUND, KIND_RANGE, KIND_COMPOSITE, KIND_MINIMIZE):
            for metric in spec.metrics:
                if by_name[metric].kind == "nominal":
                    raise SloParseError(
                        f"line {start_line}: SLO {name!r} needs a numeric metric, "
                        f"{metric!r} is nominal"
                    )
        if spec.unit and len(spec.metrics) == 1:
            declared = by_name[spec.metrics[0]].unit
            if declared and declared != spec.unit:
                raise SloParseError(
                    f"line {start_line}: SLO {name!r} unit {spec.unit!r} does not match "
                    f"metric unit {declared!r}"
                )
    return spec


def serialize_slos(specs: Iterable[SloSpec]) -> str:
    """Canonical text for a list of SLOs; parse(serialize(x)) == x."""
    chunks = []
    for spec in specs:
        lines = [f"slo {spec.name}", f"kind {spec.kind}"]
        if len(spec.metrics) == 1:
            lines.append(f"metric {spec.metrics[0]}")
        else:
            lines.append("metrics " + " ".join(spec.metrics))
        if spec.op is not None:
            lines.append(f"op {spec.op}")
        if spec.threshold is not None:
            lines.append(f"value {spec.threshold!r}")
        if spec.lo is not None:
            lines.append(f"lo {spec.lo!r}")
        if spec.hi is not None:
            lines.append(f"hi {spec.hi!r}")
        if spec.formula is not None:
            lines.append(f"formula {spec.formula}")
        if spec.p_min is not None:
            lines.append(f"p_min {spec.p_min!r}")
        if spec.unit is not None:
            lines.append(f"unit {spec.unit}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + ("\n" if chunks else "")


def _true_state(codec_map: DiscretizationMap, metric: str) -> int:
    codec = codec_map.codec(metric)
    if codec.kind != KIND_BOOLEAN or codec.values is None:
        raise ValueError(f"rate SLO needs a boolean metric, got {metric!r}")
    return codec.values.index(True)


def _interval_satisfies(lo: float, hi: float, op: str, threshold: float) -> bool:
    # (lo, hi] satisfies conservatively; point states have lo == hi.
    if lo == hi:
        return lo <= threshold if op == "<=" else lo >= threshold
    if op == "<=":
        return hi <= threshold
    return lo >= threshold


def slo_event(slo: SloSpec, codec_map: DiscretizationMap) -> SloEvent:
    """Compile an SLO predicate into its satisfying set of joint states."""
    if slo.kind == KIND_MINIMIZE:
        raise ValueError(f"minimize SLO {slo.name!r} has no satisfying event")
    for metric in slo.metrics:
        codec_map.codec(metric)  # raises if missing

    if slo.kind == KIND_RATE:
        satisfying = {(_true_state(codec_map, slo.metrics[0]),)}
    elif slo.kind == KIND_BOUND:
        codec = codec_map.codec(slo.metrics[0])
        satisfying = {
            (s,) for s in range(codec.cardinality)
            if _interval_satisfies(*codec.region(s), slo.op, slo.threshold)
        }
    elif slo.kind == KIND_RANGE:
        codec = codec_map.codec(slo.metrics[0])
        satisfying = set()
        for s in range(codec.cardinality):
            lo, hi = codec.region(s)
            if lo == hi:
                inside = slo.lo <= lo <= slo.hi
            else:
                inside = lo >= slo.lo and hi <= slo.hi
            if inside:
                satisfying.add((s,))
    else:  # composite frame_budget
        delay_codec = codec_map.codec(slo.metrics[0])
        rate_codec = codec_map.codec(slo.metrics[1])
        satisfying = set()
        for r in range(rate_codec.cardinality):
            rate_hi = rate_codec.region(r)[1]
            if rate_hi <= 0 or math.isinf(rate_hi):
                continue  # no finite frame budget: conservatively unsatisfied
            budget = 1000.0 / rate_hi
            for d in range(delay_codec.cardinality):
                if _interval_satisfies(*delay_codec.region(d), "<=", budget):
                    satisfying.add((d, r))
    return SloEvent(slo.name, slo.metrics, frozenset(satisfying))


def _raw_satisfaction(window: RawDataset, slo: SloSpec) -> np.ndarray:
    if slo.kind == KIND_RATE:
        return window.column(slo.metrics[0]).values.astype(bool)
    if slo.kind == KIND_BOUND:
        values = window.column(slo.metrics[0]).values
        return values <= slo.threshold if slo.op == "<=" else values >= slo.threshold
    if slo.kind == KIND_RANGE:
        values = window.column(slo.metrics[0]).values
        return (values >= slo.lo) & (values <= slo.hi)
    delay = window.column(slo.metrics[0]).values
    rate = window.column(slo.metrics[1]).values
    return delay <= 1000.0 / rate


def empirical_fulfillment(
    window: RawDataset | DiscreteDataset, slos: Iterable[SloSpec]
) -> FulfillmentReport:
    """Evaluate SLOs over an observed window.

    Raw windows use the raw values directly; discrete windows use the
    compiled satisfying sets. Minimize SLOs report the mean of the metric
    (bin representatives for discrete windows) instead of a rate.
    """
    results = []
    n = window.row_count
    if n == 0:
        raise ValueError("cannot evaluate SLOs over an empty window")
    for slo in slos:
        mean_value = None
        if isinstance(window, RawDataset):
            if slo.kind == KIND_MINIMIZE:
                rate = None
                mean_value = float(np.mean(window.column(slo.metrics[0]).values))
            else:
                mask = _raw_satisfaction(window, slo)
                rate = float(np.mean(mask))
                if slo.kind in (KIND_BOUND, KIND_RANGE):
                    mean_value = float(np.mean(window.column(slo.metrics[0]).values))
        else:
            if slo.kind == KIND_MINIMIZE:
                rate = None
                codec = window.codec.codec(slo.metrics[0])
                states = window.rows[:, window.index(slo.metrics[0])]
                reps = np.array([codec.representative(s) for s in range(codec.cardinality)])
                mean_value = float(np.mean(reps[states]))
            else:
                event = slo_event(slo, window.codec)
                columns = [window.rows[:, window.index(m)] for m in slo.metrics]
                cards = [window.meta(m).cardinality for m in slo.metrics]
                flat = np.ravel_multi_index(tuple(columns), tuple(cards))
                satisfying_flat = np.array(
                    sorted(np.ravel_multi_index(tuple(np.array(s)), tuple(cards))
                           for s in event.satisfying),
                    dtype=flat.dtype,
                ) if event.satisfying else np.empty(0, dtype=flat.dtype)
                rate = float(np.mean(np.isin(flat, satisfying_flat)))
                if slo.kind in (KIND_BOUND, KIND_RANGE):
                    codec = window.codec.codec(slo.metrics[0])
                    states = window.rows[:, window.index(slo.metrics[0])]
                    reps = np.array([codec.representative(s) for s in range(codec.cardinality)])
                    mean_value = float(np.mean(reps[states]))
        violated = rate is not None and slo.p_min is not None and rate < slo.p_min
        results.append(
            SloResult(slo.name, slo.kind, rate, mean_value, n, slo.p_min, violated)
        )
    return FulfillmentReport(tuple(results))


def _blanket_evidence(
    bn: DiscreteBayesNet, metrics: tuple[str, ...], evidence: Mapping[str, int]
) -> tuple[dict, frozenset]:
    """Restrict evidence to the merged blanket plus the metrics themselves.

    Variables outside the blanket cannot change the metrics' posterior once
    the blanket is given, so they are dropped; evidence directly on a metric
    stays because it pins that metric's state.
    """
    report = merged_blanket(bn.dag, metrics)
    allowed = report.member_set | set(metrics)
    kept = {k: v for k, v in evidence.items() if k in allowed}
    return kept, report.member_set


def slo_probability(
    bn: DiscreteBayesNet, slo: SloSpec, evidence: Mapping[str, int] | None = None
) -> float:
    """P(SLO satisfied | evidence), computed blanket-scoped.

    Evidence that pins one of the SLO's own metrics slices the satisfying
    set instead of entering the query as a target.
    """
    if slo.kind == KIND_MINIMIZE:
        raise ValueError(f"minimize SLO {slo.name!r} has no satisfaction probability")
    event = slo_event(slo, bn.codec)
    ev = dict(evidence or {})
    kept, blanket = _blanket_evidence(bn, slo.metrics, ev)

    pinned = {m: kept[m] for m in slo.metrics if m in kept}
    free = tuple(m for m in slo.metrics if m not in pinned)
    if not free:
        state = tuple(pinned[m] for m in slo.metrics)
        return 1.0 if state in event.satisfying else 0.0

    posterior = query(bn, free, kept, scope_limit=blanket | set(slo.metrics))
    prob = 0.0
    for joint_state in event.satisfying:
        assignment = dict(zip(slo.metrics, joint_state))
        if any(assignment[m] != pinned[m] for m in pinned):
            continue
        prob += float(posterior.values[tuple(assignment[m] for m in posterior.scope)])
    return min(prob, 1.0)


def expected_objective(
    bn: DiscreteBayesNet, slo: SloSpec, evidence: Mapping[str, int] | None = None
) -> float:
    """Expected value of a minimize SLO's metric under the blanket-scoped posterior."""
    if slo.kind != KIND_MINIMIZE:
        raise ValueError(f"SLO {slo.name!r} is not a minimize objective")
    metric = slo.metrics[0]
    codec = bn.codec.codec(metric)
    ev = dict(evidence or {})
    kept, blanket = _blanket_evidence(bn, slo.metrics, ev)
    if metric in kept:
        return codec.representative(kept[metric])
    posterior = query(bn, [metric], kept, scope_limit=blanket | {metric})
    reps = np.array([codec.representative(s) for s in range(codec.cardinality)])
    return float(np.dot(posterior.values, reps))
