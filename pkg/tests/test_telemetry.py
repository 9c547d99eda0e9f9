from __future__ import annotations

import io

import numpy as np
import pytest

from slobn.telemetry import (
    DEFAULT_SCHEMA,
    ColumnCodec,
    ColumnSpec,
    DiscretizationWarning,
    EmptyInputError,
    KIND_BOOLEAN,
    KIND_NOMINAL,
    KIND_NUMERIC,
    RawColumn,
    RawDataset,
    TelemetryError,
    VariableMeta,
    contingency,
    discretize,
    load_telemetry,
    write_csv,
)
from oracles import sort_split_cuts


def _load(text: str, schema=None) -> RawDataset:
    return load_telemetry(io.StringIO(text), schema)


def _raw_numeric(name: str, values, parameterizable=False) -> RawColumn:
    return RawColumn(name, KIND_NUMERIC, "", parameterizable,
                     np.asarray(values, dtype=np.float64))


class TestVariableMeta:
    def test_rejects_empty_states(self):
        with pytest.raises(TelemetryError):
            VariableMeta("x", KIND_NUMERIC, states=())

    def test_rejects_duplicate_states(self):
        with pytest.raises(TelemetryError):
            VariableMeta("x", KIND_NOMINAL, states=("a", "a"))

    def test_boolean_needs_two_states(self):
        with pytest.raises(TelemetryError):
            VariableMeta("x", KIND_BOOLEAN, states=("False", "True", "Maybe"))

    def test_parameterizable_boolean_rejected(self):
        with pytest.raises(TelemetryError):
            VariableMeta("x", KIND_BOOLEAN, parameterizable=True,
                         states=("False", "True"))


class TestLoadTelemetry:
    def test_basic_contract(self):
        data = _load("delay,fps,gpu\n10.5,30,True\n12.0,30,False\n")
        assert data.row_count == 2
        assert data.names == ("delay", "fps", "gpu")

    def test_default_schema_marks_parameterizable(self):
        header = ",".join(spec.name for spec in DEFAULT_SCHEMA)
        row = "10.0,50,40,102240,20,2044800,12,True,False,4C_15W,6.5"
        data = _load(f"{header}\n{row}\n", DEFAULT_SCHEMA)
        assert set(data.parameterizable_names) == {"pixel", "fps", "config"}
        assert data.column("config").kind == KIND_NOMINAL
        assert data.column("transformed").kind == KIND_BOOLEAN

    def test_wrong_arity_names_line(self):
        header = ",".join(spec.name for spec in DEFAULT_SCHEMA)
        good = ",".join(["1"] * 11)
        bad = ",".join(["1"] * 10)
        with pytest.raises(TelemetryError, match="line 3"):
            _load(f"{header}\n{good}\n{bad}\n")

    def test_unparseable_numeric_names_column_and_line(self):
        with pytest.raises(TelemetryError, match=r"'delay'.*line 3"):
            _load("delay,fps\n1.5,30\noops,30\n",
                  [ColumnSpec("delay", KIND_NUMERIC)])

    def test_empty_file_is_distinct_error(self):
        with pytest.raises(EmptyInputError):
            _load("")

    def test_missing_value_rejected(self):
        with pytest.raises(TelemetryError, match="missing value"):
            _load("a,b\n1,\n")

    def test_duplicate_header_rejected(self):
        with pytest.raises(TelemetryError, match="duplicate"):
            _load("a,a\n1,2\n")

    def test_boolean_tokens(self):
        data = _load("flag\nTrue\nFALSE\nt\nf\n1\n0\n",
                     [ColumnSpec("flag", KIND_BOOLEAN)])
        assert list(data.column("flag").values) == [True, False, True, False, True, False]

    def test_kind_inference(self):
        data = _load("num,flag,label\n1,T,on\n2.5,F,off\n")
        assert data.column("num").kind == KIND_NUMERIC
        assert data.column("flag").kind == KIND_BOOLEAN
        assert data.column("label").kind == KIND_NOMINAL

    def test_csv_round_trip(self):
        data = _load("delay,transformed,config\n1.25,True,a\n3.5,False,b\n",
                     [ColumnSpec("delay", KIND_NUMERIC),
                      ColumnSpec("transformed", KIND_BOOLEAN),
                      ColumnSpec("config", KIND_NOMINAL)])
        buffer = io.StringIO()
        write_csv(data, buffer)
        again = _load(buffer.getvalue(),
                      [ColumnSpec("delay", KIND_NUMERIC),
                       ColumnSpec("transformed", KIND_BOOLEAN),
                       ColumnSpec("config", KIND_NOMINAL)])
        assert np.array_equal(again.column("delay").values, data.column("delay").values)
        assert np.array_equal(again.column("transformed").values,
                              data.column("transformed").values)


class TestDiscretize:
    def test_quantile_cuts_match_sort_split_oracle(self):
        values = list(range(1, 101))
        raw = RawDataset((_raw_numeric("x", values),))
        _, codec_map = discretize(raw, bins=4)
        codec = codec_map.codec("x")
        assert list(codec.cuts) == sort_split_cuts(values, 4) == [25.0, 50.0, 75.0]
        data = codec_map.apply(raw)
        counts = np.bincount(data.rows[:, 0])
        assert list(counts) == [25, 25, 25, 25]

    def test_low_cardinality_nominal_identity(self):
        modes = ["4C_15W", "6C_20W", "2C_10W"] * 5
        raw = RawDataset((RawColumn("config", KIND_NOMINAL, "", True,
                                    np.array(modes, dtype=object)),))
        data, codec_map = discretize(raw)
        codec = codec_map.codec("config")
        assert codec.states == ("2C_10W", "4C_15W", "6C_20W")
        assert data.meta("config").cardinality == 3

    def test_boolean_identity(self):
        raw = RawDataset((RawColumn("t", KIND_BOOLEAN, "", False,
                                    np.array([True, False, True])),))
        _, codec_map = discretize(raw)
        assert codec_map.codec("t").states == ("False", "True")

    def test_constant_column_collapses_with_warning(self):
        raw = RawDataset((_raw_numeric("x", [5.0] * 30),))
        with pytest.warns(DiscretizationWarning):
            data, codec_map = discretize(raw, max_categories=0, bins=4)
        assert codec_map.codec("x").cardinality == 1
        assert data.rows[:, 0].max() == 0

    def test_order_preserving_on_numeric(self):
        rng = np.random.default_rng(7)
        values = rng.gamma(2.0, 10.0, size=500)
        raw = RawDataset((_raw_numeric("x", values),))
        data, codec_map = discretize(raw, bins=6)
        states = data.rows[:, 0]
        order = np.argsort(values, kind="stable")
        assert np.all(np.diff(states[order]) >= 0)

    def test_reapplication_is_bit_exact(self):
        rng = np.random.default_rng(11)
        raw = RawDataset((
            _raw_numeric("x", rng.normal(size=300)),
            _raw_numeric("y", rng.integers(0, 3, size=300).astype(float)),
        ))
        data, codec_map = discretize(raw, bins=5)
        again = codec_map.apply(raw)
        assert np.array_equal(data.rows, again.rows)

    def test_anchor_cut_points_included(self):
        rng = np.random.default_rng(3)
        raw = RawDataset((_raw_numeric("x", rng.uniform(0, 100, size=400)),))
        _, codec_map = discretize(raw, bins=4, anchors={"x": [35.0]})
        assert 35.0 in codec_map.codec("x").cuts

    def test_bins_below_two_rejected(self):
        raw = RawDataset((_raw_numeric("x", [1.0, 2.0]),))
        with pytest.raises(TelemetryError):
            discretize(raw, bins=1)

    def test_unseen_identity_value_rejected_on_reapply(self):
        raw = RawDataset((_raw_numeric("x", [1.0, 2.0, 3.0]),))
        _, codec_map = discretize(raw)
        other = RawDataset((_raw_numeric("x", [4.0]),))
        with pytest.raises(TelemetryError, match="not seen"):
            codec_map.apply(other)


class TestCodecRegions:
    def test_bin_regions_partition_the_line(self):
        codec = ColumnCodec("x", KIND_NUMERIC, cuts=(10.0, 35.0, 90.0))
        assert codec.region(0) == (float("-inf"), 10.0)
        assert codec.region(1) == (10.0, 35.0)
        assert codec.region(3) == (90.0, float("inf"))
        assert codec.state_of(10.0) == 0  # right-closed bins
        assert codec.state_of(10.0001) == 1

    def test_representatives(self):
        codec = ColumnCodec("x", KIND_NUMERIC, cuts=(10.0, 30.0))
        assert codec.representative(0) == 10.0   # unbounded tail: inner edge
        assert codec.representative(1) == 20.0   # midpoint
        assert codec.representative(2) == 30.0


class TestContingency:
    def test_no_parent_tally(self):
        raw = RawDataset((_raw_numeric("c", [0.0, 0.0, 1.0]),))
        data, _ = discretize(raw)
        counts = contingency(data, "c", [])
        assert counts.shape == (1, 2)
        assert list(counts[0]) == [2, 1]

    def test_parent_child_tally(self):
        raw = RawDataset((
            _raw_numeric("p", [0, 0, 0, 1, 1]),
            _raw_numeric("c", [0, 0, 0, 1, 1]),
        ))
        data, _ = discretize(raw)
        counts = contingency(data, "c", ["p"])
        assert counts.tolist() == [[3, 0], [0, 2]]

    def test_total_equals_row_count_on_random_data(self):
        rng = np.random.default_rng(5)
        raw = RawDataset((
            _raw_numeric("a", rng.integers(0, 3, 200).astype(float)),
            _raw_numeric("b", rng.integers(0, 4, 200).astype(float)),
            _raw_numeric("c", rng.integers(0, 2, 200).astype(float)),
        ))
        data, _ = discretize(raw)
        counts = contingency(data, "c", ["a", "b"])
        assert counts.shape == (12, 2)
        assert counts.sum() == 200

    def test_child_axis_marginalizes_to_parent_table(self):
        rng = np.random.default_rng(9)
        raw = RawDataset((
            _raw_numeric("a", rng.integers(0, 3, 300).astype(float)),
            _raw_numeric("b", rng.integers(0, 2, 300).astype(float)),
            _raw_numeric("c", rng.integers(0, 2, 300).astype(float)),
        ))
        data, _ = discretize(raw)
        joint = contingency(data, "c", ["a", "b"])
        parents_alone = contingency(data, "b", ["a"])
        assert joint.sum(axis=1).reshape(3, 2).tolist() == parents_alone.tolist()

    def test_child_in_parents_rejected(self):
        raw = RawDataset((_raw_numeric("a", [0.0, 1.0]),))
        data, _ = discretize(raw)
        with pytest.raises(TelemetryError):
            contingency(data, "a", ["a"])

    def test_unknown_variable_named(self):
        raw = RawDataset((_raw_numeric("a", [0.0, 1.0]),))
        data, _ = discretize(raw)
        with pytest.raises(TelemetryError, match="ghost"):
            contingency(data, "ghost", [])
