from __future__ import annotations

import io

import numpy as np
import pytest

from slobn import sim
from slobn.graph import markov_blanket
from slobn.learn import Cpt, DiscreteBayesNet
from slobn.reconfig import DeviceConfig
from slobn.slo import empirical_fulfillment, slo_probability
from slobn.telemetry import DEFAULT_SCHEMA, load_telemetry, write_csv
from oracles import einsum_joint


class TestGroundTruth:
    def test_consumption_blanket_by_construction(self):
        truth = sim.ground_truth(0)
        report = markov_blanket(truth.dag, "consumption")
        assert report.member_set == {"bitrate", "config", "gpu"}

    def test_parameterizable_nodes_are_roots(self):
        truth = sim.ground_truth(0)
        for name in ("pixel", "fps", "config"):
            assert truth.dag.parents(name) == ()
            assert truth.cpts[name].table.shape[0] == 1

    def test_joint_sums_to_one(self):
        truth = sim.ground_truth(0)
        joint = einsum_joint(truth)
        assert float(joint.sum()) == pytest.approx(1.0, abs=1e-6)

    def test_all_entries_strictly_positive(self):
        truth = sim.ground_truth(0)
        for cpt in truth.cpts.values():
            assert np.all(cpt.table > 0)

    def test_deterministic_per_seed(self):
        a, b = sim.ground_truth(5), sim.ground_truth(5)
        for node in a.dag.nodes:
            assert np.array_equal(a.cpts[node].table, b.cpts[node].table)
        c = sim.ground_truth(6)
        assert not np.array_equal(a.cpts["delay"].table, c.cpts["delay"].table)

    def test_every_slo_blanket_contains_a_parameter(self):
        truth = sim.ground_truth(0)
        params = set(truth.parameterizable_names)
        from slobn.graph import merged_blanket
        for slo in sim.scenario_slos("a"):
            blanket = merged_blanket(truth.dag, slo.metrics).member_set
            assert blanket & params, slo.name


class TestSampleTelemetry:
    def test_single_dwell_clamps_parameters(self):
        truth = sim.ground_truth(0)
        schedule = sim.SweepSchedule((sim.Dwell(
            {"pixel": 102240.0, "fps": 20.0, "config": "4C_15W", "gpu": False}, 50),))
        raw = sim.sample_telemetry(truth, schedule, seed=1)
        assert raw.row_count == 50
        assert set(raw.column("pixel").values) == {102240.0}
        assert set(raw.column("fps").values) == {20.0}
        assert set(raw.column("config").values) == {"4C_15W"}
        assert set(raw.column("gpu").values) == {False}

    def test_full_sweep_covers_all_combinations(self):
        schedule = sim.full_sweep(2)
        assert len(schedule.dwells) == 6 * 5 * 3 * 2
        seen = {tuple(sorted(d.assignment.items())) for d in schedule.dwells}
        assert len(seen) == 180
        truth = sim.ground_truth(0)
        raw = sim.sample_telemetry(truth, schedule, seed=2)
        assert raw.row_count == 360

    def test_sampling_deterministic_per_seed(self):
        truth = sim.ground_truth(0)
        schedule = sim.full_sweep(5)
        a = sim.sample_telemetry(truth, schedule, seed=9)
        b = sim.sample_telemetry(truth, schedule, seed=9)
        buffer_a, buffer_b = io.StringIO(), io.StringIO()
        write_csv(a, buffer_a)
        write_csv(b, buffer_b)
        assert buffer_a.getvalue() == buffer_b.getvalue()
        c = sim.sample_telemetry(truth, schedule, seed=10)
        buffer_c = io.StringIO()
        write_csv(c, buffer_c)
        assert buffer_c.getvalue() != buffer_a.getvalue()

    def test_emitted_csv_round_trips_through_loader(self):
        truth = sim.ground_truth(0)
        raw = sim.sample_telemetry(truth, sim.full_sweep(3), seed=4)
        buffer = io.StringIO()
        write_csv(raw, buffer)
        again = load_telemetry(io.StringIO(buffer.getvalue()), DEFAULT_SCHEMA)
        assert again.names == raw.names
        assert again.row_count == raw.row_count
        np.testing.assert_allclose(
            again.column("delay").values, raw.column("delay").values)

    def test_conditional_frequencies_converge_to_cpt(self):
        truth = sim.ground_truth(0)
        clamps = {
            "pixel": truth.state_index("pixel", "102240"),
            "fps": truth.state_index("fps", "20"),
            "config": truth.state_index("config", "4C_15W"),
            "gpu": 0,
        }
        n = 100_000
        states = sim.sample_states(truth, clamps, n, np.random.default_rng(11))
        names = [m.name for m in truth.metas]
        delay_idx = names.index("delay")
        cpt = truth.cpts["delay"]
        parent_state = tuple(clamps[p] for p in cpt.parents)
        row = cpt.table[np.ravel_multi_index(
            parent_state, tuple(truth.cardinality(p) for p in cpt.parents))]
        counts = np.bincount(states[:, delay_idx], minlength=len(row)) / n
        stderr = np.sqrt(row * (1 - row) / n)
        assert np.all(np.abs(counts - row) <= 3 * stderr + 1e-4)

    def test_raw_values_fall_inside_their_bin(self):
        truth = sim.ground_truth(0)
        raw = sim.sample_telemetry(truth, sim.full_sweep(4), seed=6)
        redone = truth.codec.apply(raw)
        # delay raw values must re-discretize into some valid state
        assert redone.rows[:, 0].max() < truth.cardinality("delay")

    def test_empty_schedule_rejected(self):
        truth = sim.ground_truth(0)
        with pytest.raises(ValueError):
            sim.sample_telemetry(truth, sim.SweepSchedule(()), seed=0)

    def test_missing_row_count_rejected(self):
        truth = sim.ground_truth(0)
        schedule = sim.SweepSchedule((sim.Dwell({"pixel": 102240.0}),))
        with pytest.raises(ValueError):
            sim.sample_telemetry(truth, schedule)

    def test_incomplete_replay_config_rejected(self):
        truth = sim.ground_truth(0)
        partial = DeviceConfig({"pixel": "102240"})
        with pytest.raises(ValueError, match="missing"):
            sim.replay(truth, partial, gpu=False, slos=sim.scenario_slos("a"),
                       n_rows=10, seed=0)


class TestScheduleFormat:
    def test_round_trip(self):
        schedule = sim.SweepSchedule((
            sim.Dwell({"pixel": 102240.0, "fps": 20.0, "config": "4C_15W",
                       "gpu": False}, 100),
            sim.Dwell({"pixel": 921600.0, "fps": 30.0, "config": "6C_20W",
                       "gpu": True}, 50),
        ))
        text = sim.serialize_schedule(schedule)
        again = sim.parse_schedule(text)
        assert again == schedule

    def test_parse_errors_name_line(self):
        with pytest.raises(ValueError, match="line 1"):
            sim.parse_schedule("dwell pixel\n")


class TestReplay:
    def test_deterministic_always_within_time_regime(self):
        # Net built for this test: delay lands in the fastest bin with
        # certainty, so within_time holds for every row.
        truth = sim.ground_truth(0)
        tables = {name: cpt.table.copy() for name, cpt in truth.cpts.items()}
        fast = np.zeros_like(tables["delay"])
        fast[:, 0] = 1.0
        tables["delay"] = fast
        cpts = {name: Cpt(name, truth.cpts[name].parents, table)
                for name, table in tables.items()}
        custom = DiscreteBayesNet(truth.dag, cpts, truth.metas, truth.codec)
        config = DeviceConfig({"pixel": "25560", "fps": "30", "config": "6C_20W"})
        report = sim.replay(custom, config, gpu=True,
                            slos=sim.scenario_slos("a"), n_rows=500, seed=1)
        assert report.result("within_time").rate == 1.0

    def test_rates_match_independent_recount(self):
        truth = sim.ground_truth(0)
        config = DeviceConfig({"pixel": "102240", "fps": "16", "config": "2C_10W"})
        slos = sim.scenario_slos("a")
        window = sim.replay_window(truth, config, gpu=False, n_rows=3000, seed=8)
        report = empirical_fulfillment(window, slos)
        delay = window.column("delay").values
        fps = window.column("fps").values
        recount = float(np.mean(delay <= 1000.0 / fps))
        assert report.result("within_time").rate == pytest.approx(recount)
        transformed = window.column("transformed").values
        assert report.result("transf_success").rate == pytest.approx(
            float(np.mean(transformed)))

    def test_replay_consistent_with_analytic_probability(self):
        truth = sim.ground_truth(0)
        config = DeviceConfig({"pixel": "102240", "fps": "16", "config": "2C_10W"})
        slos = sim.scenario_slos("a")
        evidence = {
            "pixel": truth.state_index("pixel", "102240"),
            "fps": truth.state_index("fps", "16"),
            "config": truth.state_index("config", "2C_10W"),
            "gpu": 0,
        }
        n = 12_000
        report = sim.replay(truth, config, gpu=False, slos=slos, n_rows=n, seed=12)
        for slo in slos:
            if slo.kind == "minimize":
                continue
            p = slo_probability(truth, slo, evidence)
            rate = report.result(slo.name).rate
            stderr = max((p * (1 - p) / n) ** 0.5, 1e-9)
            assert abs(rate - p) <= 3 * stderr + 1e-6, slo.name


class TestScenarios:
    def test_scenario_a_thresholds(self):
        by_name = {s.name: s for s in sim.scenario_slos("a")}
        assert by_name["transf_success"].p_min == 0.90
        assert by_name["pixel_distance"].threshold == 35.0
        assert by_name["network_usage"].threshold == 8.2e6
        assert by_name["within_time"].p_min == 0.95
        assert by_name["energy_cons"].kind == "minimize"
        assert sim.scenario_evidence("a") == {"gpu": "False"}

    def test_scenario_b_thresholds(self):
        by_name = {s.name: s for s in sim.scenario_slos("b")}
        assert by_name["transf_success"].p_min == 0.98
        assert by_name["pixel_distance"].threshold == 60.0
        assert by_name["network_usage"].threshold == 1.6e6
        assert by_name["within_time"].p_min == 0.75
        assert sim.scenario_evidence("b") == {"gpu": "True"}

    def test_unknown_scenario_rejected(self):
        with pytest.raises(ValueError):
            sim.scenario_slos("c")

    def test_scenario_b_has_feasible_configs(self):
        truth = sim.ground_truth(0)
        from slobn.reconfig import infer_best_config
        ranked = infer_best_config(truth, sim.scenario_slos("b"), {"gpu": "True"})
        assert not ranked.none_feasible
        best = ranked.best
        report = sim.replay(truth, best.config, gpu=True,
                            slos=sim.scenario_slos("b"), n_rows=6000, seed=13)
        assert report.violations == ()
