"""Telemetry ingestion and discretization.

Raw per-frame metrics arrive as a header-first CSV. Low-cardinality columns
pass through as categorical states; continuous columns are cut into
equal-frequency bins so that downstream learning and inference can treat
every variable as discrete. The resulting :class:`DiscretizationMap` is a
deterministic, replayable recipe: applying it to the same raw data always
reproduces the same state indices.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

KIND_BOOLEAN = "boolean"
KIND_NOMINAL = "nominal"
KIND_NUMERIC = "ordinal-numeric"
_KINDS = (KIND_BOOLEAN, KIND_NOMINAL, KIND_NUMERIC)

_BOOL_TOKENS = {
    "true": True, "t": True, "1": True,
    "false": False, "f": False, "0": False,
}


class TelemetryError(ValueError):
    """Malformed telemetry input: bad row, bad value, or unknown column."""


class EmptyInputError(TelemetryError):
    """The telemetry stream contained no header line at all."""


class DiscretizationWarning(UserWarning):
    """A column could not honour the requested binning (e.g. constant data)."""


def format_value(value: float) -> str:
    """Shortest exact rendering of a numeric value ("25560", "33.5")."""
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


@dataclass(frozen=True)
class VariableMeta:
    """A discrete variable: its state space and bookkeeping flags."""

    name: str
    kind: str
    unit: str = ""
    parameterizable: bool = False
    states: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.name:
            raise TelemetryError("variable name must be nonempty")
        if self.kind not in _KINDS:
            raise TelemetryError(f"unknown variable kind {self.kind!r}")
        if not self.states:
            raise TelemetryError(f"variable {self.name!r} declares no states")
        if len(set(self.states)) != len(self.states):
            raise TelemetryError(f"variable {self.name!r} has duplicate state labels")
        if self.kind == KIND_BOOLEAN and len(self.states) != 2:
            raise TelemetryError(f"boolean variable {self.name!r} must have exactly 2 states")
        if self.parameterizable and self.kind == KIND_BOOLEAN:
            raise TelemetryError(
                f"parameterizable variable {self.name!r} must be nominal or ordinal-numeric"
            )

    @property
    def cardinality(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class ColumnSpec:
    """Pre-discretization declaration of one raw column."""

    name: str
    kind: str
    unit: str = ""
    parameterizable: bool = False

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise TelemetryError(f"unknown column kind {self.kind!r}")


#: Schema of the video-workload metric set this project targets: one row per
#: processed frame, resolution/frame-rate/power-mode adjustable on the device.
DEFAULT_SCHEMA: tuple[ColumnSpec, ...] = (
    ColumnSpec("delay", KIND_NUMERIC, "ms"),
    ColumnSpec("cpu", KIND_NUMERIC, "%"),
    ColumnSpec("memory", KIND_NUMERIC, "%"),
    ColumnSpec("pixel", KIND_NUMERIC, "num", parameterizable=True),
    ColumnSpec("fps", KIND_NUMERIC, "num", parameterizable=True),
    ColumnSpec("bitrate", KIND_NUMERIC, "px/s"),
    ColumnSpec("distance", KIND_NUMERIC, "px"),
    ColumnSpec("transformed", KIND_BOOLEAN, "T/F"),
    ColumnSpec("gpu", KIND_BOOLEAN, "T/F"),
    ColumnSpec("config", KIND_NOMINAL, "mode", parameterizable=True),
    ColumnSpec("consumption", KIND_NUMERIC, "W"),
)


@dataclass(frozen=True, eq=False)
class RawColumn:
    """One parsed column: numeric/boolean columns are numpy arrays, nominal
    columns are object arrays of strings."""

    name: str
    kind: str
    unit: str
    parameterizable: bool
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class RawDataset:
    """Columnar raw telemetry with a fixed column order."""

    columns: tuple[RawColumn, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise TelemetryError("duplicate column names in dataset")
        lengths = {len(c) for c in self.columns}
        if len(lengths) > 1:
            raise TelemetryError("columns differ in length")

    @property
    def row_count(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def parameterizable_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.parameterizable)

    def column(self, name: str) -> RawColumn:
        for c in self.columns:
            if c.name == name:
                return c
        raise TelemetryError(f"unknown column {name!r}")


def _parse_bool_token(token: str) -> bool | None:
    return _BOOL_TOKENS.get(token.strip().lower())


def _infer_kind(tokens: list[str]) -> str:
    try:
        for t in tokens:
            float(t)
        return KIND_NUMERIC
    except ValueError:
        pass
    if all(_parse_bool_token(t) is not None for t in tokens):
        return KIND_BOOLEAN
    return KIND_NOMINAL


def load_telemetry(
    source: str | Path | io.IOBase,
    schema: Sequence[ColumnSpec] | None = None,
) -> RawDataset:
    """Parse a header-first, comma-delimited telemetry stream.

    ``schema`` entries are matched to header names; columns without a
    declaration get their kind inferred (numeric, then boolean, else
    nominal). Rows with the wrong arity, unparseable values, or missing
    fields are rejected with the offending line (and column) named.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as handle:
            return load_telemetry(handle, schema)
    if isinstance(source, (io.RawIOBase, io.BufferedIOBase)):
        source = io.TextIOWrapper(source, encoding="utf-8", newline="")

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInputError("telemetry stream is empty (no header line)") from None
    header = [h.strip() for h in header]
    if any(not h for h in header):
        raise TelemetryError("header contains an empty column name")
    if len(set(header)) != len(header):
        raise TelemetryError("header contains duplicate column names")

    declared = {spec.name: spec for spec in (schema or ())}
    grid: list[list[str]] = [[] for _ in header]
    for line_no, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise TelemetryError(
                f"line {line_no}: expected {len(header)} fields, got {len(row)}"
            )
        for cell, column in zip(row, grid):
            column.append(cell)

    columns: list[RawColumn] = []
    for col_idx, name in enumerate(header):
        tokens = grid[col_idx]
        spec = declared.get(name)
        kind = spec.kind if spec else (_infer_kind(tokens) if tokens else KIND_NUMERIC)
        unit = spec.unit if spec else ""
        parameterizable = spec.parameterizable if spec else False

        for offset, token in enumerate(tokens):
            if not token.strip():
                raise TelemetryError(
                    f"column {name!r}, line {offset + 2}: missing value"
                )
        if kind == KIND_NUMERIC:
            values = np.empty(len(tokens), dtype=np.float64)
            for offset, token in enumerate(tokens):
                try:
                    values[offset] = float(token)
                except ValueError:
                    raise TelemetryError(
                        f"column {name!r}, line {offset + 2}: "
                        f"cannot parse {token!r} as a number"
                    ) from None
        elif kind == KIND_BOOLEAN:
            values = np.empty(len(tokens), dtype=np.bool_)
            for offset, token in enumerate(tokens):
                parsed = _parse_bool_token(token)
                if parsed is None:
                    raise TelemetryError(
                        f"column {name!r}, line {offset + 2}: "
                        f"cannot parse {token!r} as a boolean"
                    )
                values[offset] = parsed
        else:
            values = np.array([t.strip() for t in tokens], dtype=object)
        columns.append(RawColumn(name, kind, unit, parameterizable, values))

    return RawDataset(tuple(columns))


def write_csv(dataset: RawDataset, target: str | Path | io.IOBase) -> None:
    """Emit a dataset in the same CSV dialect :func:`load_telemetry` consumes."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as handle:
            write_csv(dataset, handle)
            return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(dataset.names)
    rendered = []
    for col in dataset.columns:
        if col.kind == KIND_NUMERIC:
            rendered.append([format_value(v) for v in col.values])
        elif col.kind == KIND_BOOLEAN:
            rendered.append(["True" if v else "False" for v in col.values])
        else:
            rendered.append([str(v) for v in col.values])
    for row in zip(*rendered):
        writer.writerow(row)


@dataclass(frozen=True)
class ColumnCodec:
    """Mapping between one raw column and its discrete states.

    Identity codecs (``values`` set) map each observed category to one state;
    bin codecs (``cuts`` set) partition the real line into right-closed
    intervals (-inf, c1], (c1, c2], ..., (ck, inf).
    """

    name: str
    kind: str
    unit: str = ""
    parameterizable: bool = False
    values: tuple | None = None
    cuts: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.values is None:
            if any(b <= a for a, b in zip(self.cuts, self.cuts[1:])):
                raise TelemetryError(
                    f"column {self.name!r}: cut points must be strictly increasing"
                )
        elif len(set(self.values)) != len(self.values):
            raise TelemetryError(f"column {self.name!r}: duplicate category values")

    @property
    def is_identity(self) -> bool:
        return self.values is not None

    @property
    def states(self) -> tuple[str, ...]:
        if self.values is not None:
            if self.kind == KIND_NUMERIC:
                return tuple(format_value(v) for v in self.values)
            return tuple(str(v) for v in self.values)
        edges = ["-inf"] + [format_value(c) for c in self.cuts] + ["inf"]
        labels = []
        for i in range(len(edges) - 1):
            close = "]" if i < len(edges) - 2 else ")"
            labels.append(f"({edges[i]}, {edges[i + 1]}{close}")
        return tuple(labels)

    @property
    def cardinality(self) -> int:
        if self.values is not None:
            return len(self.values)
        return len(self.cuts) + 1

    def meta(self) -> VariableMeta:
        return VariableMeta(self.name, self.kind, self.unit, self.parameterizable, self.states)

    def state_of(self, value) -> int:
        """Total, deterministic state lookup for a single raw value."""
        if self.values is not None:
            try:
                return self.values.index(value)
            except ValueError:
                raise TelemetryError(
                    f"column {self.name!r}: value {value!r} not seen during discretization"
                ) from None
        return int(np.searchsorted(np.asarray(self.cuts), value, side="left"))

    def states_of(self, values: np.ndarray) -> np.ndarray:
        if self.values is None:
            return np.searchsorted(np.asarray(self.cuts), values, side="left").astype(np.int32)
        lookup = {v: i for i, v in enumerate(self.values)}
        out = np.empty(len(values), dtype=np.int32)
        for i, v in enumerate(values):
            key = bool(v) if self.kind == KIND_BOOLEAN else v
            try:
                out[i] = lookup[key]
            except KeyError:
                raise TelemetryError(
                    f"column {self.name!r}: value {v!r} not seen during discretization"
                ) from None
        return out

    def region(self, state: int) -> tuple[float, float]:
        """Numeric support of a state: (lo, hi] for bins, a point for categories."""
        if self.values is not None:
            if self.kind == KIND_BOOLEAN:
                v = float(bool(self.values[state]))
            elif self.kind == KIND_NUMERIC:
                v = float(self.values[state])
            else:
                raise TelemetryError(f"column {self.name!r} is not numeric")
            return (v, v)
        lo = self.cuts[state - 1] if state > 0 else float("-inf")
        hi = self.cuts[state] if state < len(self.cuts) else float("inf")
        return (lo, hi)

    def representative(self, state: int) -> float:
        """Midpoint of a bin; unbounded tail bins use their inner edge."""
        lo, hi = self.region(state)
        if lo == hi:
            return lo
        if np.isinf(lo) and np.isinf(hi):
            raise TelemetryError(
                f"column {self.name!r}: single unbounded bin has no representative value"
            )
        if np.isinf(lo):
            return hi
        if np.isinf(hi):
            return lo
        return (lo + hi) / 2.0


@dataclass(frozen=True)
class DiscretizationMap:
    """Per-column codecs, in dataset column order."""

    columns: tuple[ColumnCodec, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise TelemetryError("duplicate columns in discretization map")

    def codec(self, name: str) -> ColumnCodec:
        for c in self.columns:
            if c.name == name:
                return c
        raise TelemetryError(f"no codec for column {name!r}")

    def metas(self) -> tuple[VariableMeta, ...]:
        return tuple(c.meta() for c in self.columns)

    def restrict(self, names: Iterable[str]) -> "DiscretizationMap":
        keep = set(names)
        return DiscretizationMap(tuple(c for c in self.columns if c.name in keep))

    def apply(self, raw: RawDataset) -> "DiscreteDataset":
        """Re-encode raw columns as state indices; bit-exact and repeatable."""
        rows = np.empty((raw.row_count, len(self.columns)), dtype=np.int32)
        for j, codec in enumerate(self.columns):
            rows[:, j] = codec.states_of(raw.column(codec.name).values)
        rows.flags.writeable = False
        return DiscreteDataset(self.metas(), rows, self)


@dataclass(frozen=True, eq=False)
class DiscreteDataset:
    """State-index rows plus the metadata and codec that produced them."""

    metas: tuple[VariableMeta, ...]
    rows: np.ndarray
    codec: DiscretizationMap

    def __post_init__(self) -> None:
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.metas):
            raise TelemetryError("row shape does not match variable count")
        if self.rows.size:
            highest = self.rows.max(axis=0)
            for meta, top in zip(self.metas, highest):
                if top >= meta.cardinality:
                    raise TelemetryError(
                        f"state index {top} out of range for variable {meta.name!r}"
                    )

    @property
    def row_count(self) -> int:
        return self.rows.shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.metas)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise TelemetryError(f"unknown variable {name!r}") from None

    def meta(self, name: str) -> VariableMeta:
        return self.metas[self.index(name)]

    def cardinalities(self) -> tuple[int, ...]:
        return tuple(m.cardinality for m in self.metas)


def _nearest_rank_quantiles(sorted_values: np.ndarray, bins: int) -> list[float]:
    # Lower nearest-rank convention: quantile q is the ceil(q*n)-th order statistic.
    n = len(sorted_values)
    cuts = []
    for i in range(1, bins):
        rank = int(np.ceil(i * n / bins))
        rank = max(rank, 1)
        cuts.append(float(sorted_values[rank - 1]))
    return cuts


def discretize(
    raw: RawDataset,
    *,
    max_categories: int = 12,
    bins: int = 8,
    anchors: Mapping[str, Sequence[float]] | None = None,
) -> tuple[DiscreteDataset, DiscretizationMap]:
    """Turn raw columns into categorical states.

    Columns with at most ``max_categories`` distinct values map one-to-one;
    the rest get ``bins`` equal-frequency bins with cut points at empirical
    quantiles (duplicates collapsed, so a column may end up with fewer bins
    than requested). ``anchors`` forces extra cut points into named columns,
    e.g. to align bin edges with SLO thresholds so that threshold events
    become exact unions of bins.
    """
    if bins < 2:
        raise TelemetryError("bins must be >= 2")
    if raw.row_count == 0:
        raise TelemetryError("cannot discretize an empty dataset")
    anchors = anchors or {}

    codecs: list[ColumnCodec] = []
    for col in raw.columns:
        if col.kind == KIND_BOOLEAN:
            codecs.append(
                ColumnCodec(col.name, col.kind, col.unit, col.parameterizable,
                            values=(False, True))
            )
            continue
        if col.kind == KIND_NOMINAL:
            values = tuple(sorted(set(str(v) for v in col.values)))
            codecs.append(
                ColumnCodec(col.name, col.kind, col.unit, col.parameterizable, values=values)
            )
            if len(values) == 1:
                warnings.warn(
                    f"column {col.name!r} is constant; collapsed to a single state",
                    DiscretizationWarning,
                    stacklevel=2,
                )
            continue

        distinct = np.unique(col.values)
        if len(distinct) <= max_categories:
            codecs.append(
                ColumnCodec(col.name, col.kind, col.unit, col.parameterizable,
                            values=tuple(float(v) for v in distinct))
            )
            if len(distinct) == 1:
                warnings.warn(
                    f"column {col.name!r} is constant; collapsed to a single state",
                    DiscretizationWarning,
                    stacklevel=2,
                )
            continue

        ordered = np.sort(col.values)
        cuts = _nearest_rank_quantiles(ordered, bins)
        cuts.extend(float(a) for a in anchors.get(col.name, ()))
        lo, hi = float(ordered[0]), float(ordered[-1])
        # Cuts at or above the max (or below the min) would leave a state no
        # value can reach; drop them.
        kept = sorted({c for c in cuts if lo <= c < hi})
        codecs.append(
            ColumnCodec(col.name, col.kind, col.unit, col.parameterizable, cuts=tuple(kept))
        )
        if not kept:
            warnings.warn(
                f"column {col.name!r} is constant; collapsed to a single state",
                DiscretizationWarning,
                stacklevel=2,
            )

    codec_map = DiscretizationMap(tuple(codecs))
    return codec_map.apply(raw), codec_map


def contingency(
    data: DiscreteDataset, child: str, parents: Sequence[str]
) -> np.ndarray:
    """Count table of shape (prod parent cardinalities, child cardinality)."""
    if child in parents:
        raise TelemetryError(f"child {child!r} cannot be its own parent")
    child_idx = data.index(child)
    parent_idx = [data.index(p) for p in parents]
    child_card = data.metas[child_idx].cardinality
    parent_cards = [data.metas[i].cardinality for i in parent_idx]
    q = int(np.prod(parent_cards)) if parent_cards else 1

    if data.row_count == 0:
        return np.zeros((q, child_card), dtype=np.int64)
    if parent_idx:
        flat = np.ravel_multi_index(
            tuple(data.rows[:, i] for i in parent_idx), tuple(parent_cards)
        )
    else:
        flat = np.zeros(data.row_count, dtype=np.int64)
    combined = flat * child_card + data.rows[:, child_idx]
    counts = np.bincount(combined, minlength=q * child_card)
    return counts.reshape(q, child_card).astype(np.int64)
