from __future__ import annotations

import numpy as np
import pytest

from slobn.graph import markov_blanket
from slobn.inference import (
    Factor,
    InconsistentEvidenceError,
    InferenceError,
    elimination_order,
    factor_from_cpt,
    factor_product,
    marginalize,
    query,
    reduce,
    variable_elimination,
)
from slobn.learn import Cpt
from oracles import einsum_joint, joint_conditional, pure_joint, random_net


def f(scope, values):
    values = np.asarray(values, dtype=np.float64)
    return Factor(tuple(scope), tuple(values.shape), values)


class TestFactorBasics:
    def test_factor_from_root_cpt_copies_prior(self):
        cpt = Cpt("a", (), np.array([[0.3, 0.7]]))
        factor = factor_from_cpt(cpt, {"a": 2})
        assert factor.scope == ("a",)
        np.testing.assert_allclose(factor.values, [0.3, 0.7])

    def test_factor_from_cpt_layout(self):
        table = np.array([[0.9, 0.1], [0.2, 0.8]])
        cpt = Cpt("c", ("p",), table)
        factor = factor_from_cpt(cpt, {"p": 2, "c": 2})
        assert factor.scope == ("p", "c")
        np.testing.assert_allclose(factor.values, table)

    def test_child_axis_sums_to_one(self):
        rng = np.random.default_rng(2)
        table = rng.dirichlet(np.ones(3), size=4)
        cpt = Cpt("c", ("p",), table)
        factor = factor_from_cpt(cpt, {"p": 4, "c": 3})
        np.testing.assert_allclose(factor.values.sum(axis=1), 1.0)

    def test_negative_values_rejected(self):
        with pytest.raises(InferenceError):
            f(["a"], [-0.1, 1.1])


class TestFactorProduct:
    def test_identity_with_ones(self):
        g = f(["a", "b"], [[1.0, 2.0], [3.0, 4.0]])
        ones = f(["a", "b"], np.ones((2, 2)))
        np.testing.assert_allclose(factor_product(g, ones).values, g.values)

    def test_hand_example(self):
        left = f(["A"], [0.2, 0.8])
        right = f(["A", "B"], [[1.0, 2.0], [3.0, 4.0]])
        product = factor_product(left, right)
        assert product.scope == ("A", "B")
        np.testing.assert_allclose(product.values, [[0.2, 0.4], [2.4, 3.2]])

    def test_commutative_up_to_scope_order(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = f(["x", "y"], rng.random((2, 3)))
            b = f(["y", "z"], rng.random((3, 2)))
            ab = factor_product(a, b)
            ba = factor_product(b, a)
            # align cell by cell through explicit reindexing
            for x in range(2):
                for y in range(3):
                    for z in range(2):
                        assert ab.values[x, y, z] == pytest.approx(
                            ba.values[y, z, x], abs=1e-12
                        )

    def test_cardinality_clash_names_variable(self):
        with pytest.raises(InferenceError, match="'a'"):
            factor_product(f(["a"], [0.5, 0.5]), f(["a"], [0.2, 0.3, 0.5]))


class TestMarginalize:
    def test_mass_conserved(self):
        g = f(["a", "b"], [[0.1, 0.2], [0.3, 0.4]])
        assert marginalize(g, "a").total() == pytest.approx(1.0)

    def test_hand_sum_over_first_axis(self):
        g = f(["a", "b"], [[1.0, 2.0], [3.0, 4.0]])
        out = marginalize(g, "a")
        assert out.scope == ("b",)
        np.testing.assert_allclose(out.values, [4.0, 6.0])

    def test_full_contraction_leaves_scalar_total(self):
        g = f(["a", "b"], [[1.0, 2.0], [3.0, 4.0]])
        out = marginalize(marginalize(g, "a"), "b")
        assert out.scope == ()
        assert float(out.values) == pytest.approx(10.0)

    def test_missing_variable_rejected(self):
        with pytest.raises(InferenceError):
            marginalize(f(["a"], [1.0, 2.0]), "zz")


class TestReduce:
    def test_hand_slice(self):
        g = f(["A", "B"], [[1.0, 2.0], [3.0, 4.0]])
        out = reduce(g, {"B": 1})
        assert out.scope == ("A",)
        np.testing.assert_allclose(out.values, [2.0, 4.0])

    def test_empty_evidence_is_identity(self):
        g = f(["A"], [0.4, 0.6])
        np.testing.assert_allclose(reduce(g, {}).values, g.values)

    def test_out_of_scope_evidence_ignored(self):
        g = f(["A"], [0.4, 0.6])
        np.testing.assert_allclose(reduce(g, {"Z": 1}).values, g.values)

    def test_invalid_state_rejected(self):
        with pytest.raises(InferenceError):
            reduce(f(["A"], [0.4, 0.6]), {"A": 5})

    def test_reduce_then_marginalize_matches_joint_slice(self):
        rng = np.random.default_rng(4)
        values = rng.random((2, 3, 2))
        g = f(["a", "b", "c"], values)
        out = marginalize(reduce(g, {"b": 2}), "a")
        np.testing.assert_allclose(out.values, values[:, 2, :].sum(axis=0))


class TestEliminationOrder:
    def test_chain_eliminates_leaf_first(self):
        chain_factors = [f(["A", "B"], np.ones((2, 2))), f(["B", "C"], np.ones((2, 2)))]
        plan = elimination_order(chain_factors, keep={"C"})
        assert plan.ordering.index("A") < plan.ordering.index("B")
        assert plan.width <= 2

    def test_keep_everything_gives_empty_plan(self):
        factors = [f(["A", "B"], np.ones((2, 2)))]
        plan = elimination_order(factors, keep={"A", "B"})
        assert plan.ordering == ()

    def test_never_wider_than_declaration_order(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            net = random_net(rng, int(rng.integers(4, 10)))
            cards = {m.name: m.cardinality for m in net.metas}
            factors = [factor_from_cpt(net.cpts[v], cards) for v in net.dag.nodes]
            keep = {net.dag.nodes[-1]}
            plan = elimination_order(factors, keep=keep)

            # naive: eliminate in declaration order, measure induced width
            adjacency = {}
            for factor in factors:
                for v in factor.scope:
                    adjacency.setdefault(v, set())
                for i, u in enumerate(factor.scope):
                    for w in factor.scope[i + 1:]:
                        adjacency[u].add(w)
                        adjacency[w].add(u)
            naive_width = 0
            remaining = {v: set(ns) for v, ns in adjacency.items()}
            for v in [n for n in net.dag.nodes if n not in keep]:
                neighbors = remaining[v]
                naive_width = max(naive_width, len(neighbors) + 1)
                for a in neighbors:
                    for b in neighbors:
                        if a != b:
                            remaining[a].add(b)
                for a in neighbors:
                    a_set = remaining[a]
                    a_set.discard(v)
                del remaining[v]
            assert plan.width <= naive_width


class TestQuery:
    def test_root_prior_returned(self):
        rng = np.random.default_rng(6)
        net = random_net(rng, 5)
        root = next(v for v in net.dag.nodes if not net.dag.parents(v))
        posterior = query(net, [root])
        np.testing.assert_allclose(posterior.values, net.cpts[root].table[0],
                                   atol=1e-12)

    def test_matches_joint_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            net = random_net(rng, int(rng.integers(3, 11)), max_card=4)
            names = list(net.dag.nodes)
            joint = einsum_joint(net)
            targets = list(rng.choice(names, size=min(2, len(names)), replace=False))
            others = [n for n in names if n not in targets]
            ev = {}
            if others and rng.random() < 0.8:
                var = others[int(rng.integers(len(others)))]
                ev[var] = int(rng.integers(net.cardinality(var)))
            got = query(net, targets, ev)
            want = joint_conditional(joint, names, targets, ev)
            np.testing.assert_allclose(got.values, want, atol=1e-9)

    def test_normalization(self):
        rng = np.random.default_rng(8)
        net = random_net(rng, 7)
        target = net.dag.nodes[3]
        posterior = query(net, [target])
        assert posterior.total() == pytest.approx(1.0, abs=1e-9)

    def test_zero_probability_evidence_raises(self):
        # deterministic gate: child equals parent, then contradictory evidence
        table_root = np.array([[1.0, 0.0]])
        table_child = np.array([[1.0, 0.0], [0.0, 1.0]])
        from slobn.graph import Dag
        from slobn.learn import DiscreteBayesNet
        from slobn.telemetry import ColumnCodec, DiscretizationMap, KIND_NUMERIC
        codec = DiscretizationMap((
            ColumnCodec("a", KIND_NUMERIC, values=(0.0, 1.0)),
            ColumnCodec("b", KIND_NUMERIC, values=(0.0, 1.0)),
        ))
        net = DiscreteBayesNet(
            Dag(("a", "b"), frozenset({("a", "b")})),
            {"a": Cpt("a", (), table_root), "b": Cpt("b", ("a",), table_child)},
            codec.metas(), codec,
        )
        with pytest.raises(InconsistentEvidenceError):
            query(net, ["a"], {"b": 1})

    def test_targets_overlapping_evidence_rejected(self):
        rng = np.random.default_rng(9)
        net = random_net(rng, 4)
        v = net.dag.nodes[0]
        with pytest.raises(InferenceError):
            query(net, [v], {v: 0})

    def test_scope_limit_must_cover_blanket(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            net = random_net(rng, 8)
            target = net.dag.nodes[int(rng.integers(8))]
            blanket = markov_blanket(net.dag, target).member_set
            if not blanket:
                continue
            with pytest.raises(InferenceError, match="shield"):
                query(net, [target], scope_limit=set(list(blanket)[1:]) | {target})
            break

    def test_blanket_scoped_equals_full(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            net = random_net(rng, int(rng.integers(4, 10)))
            target = net.dag.nodes[int(rng.integers(len(net.dag.nodes)))]
            blanket = markov_blanket(net.dag, target).member_set
            ev = {}
            if blanket:
                member = sorted(blanket)[0]
                ev[member] = int(rng.integers(net.cardinality(member)))
            full = query(net, [target], ev)
            scoped = query(net, [target], ev, scope_limit=blanket | {target})
            np.testing.assert_allclose(scoped.values, full.values, atol=1e-9)

    def test_ordering_independence(self):
        rng = np.random.default_rng(12)
        net = random_net(rng, 8)
        names = list(net.dag.nodes)
        cards = {m.name: m.cardinality for m in net.metas}
        target = names[-1]
        factors = [factor_from_cpt(net.cpts[v], cards) for v in names]
        to_eliminate = [n for n in names if n != target]
        reference = None
        for trial in range(6):
            order = list(to_eliminate)
            rng.shuffle(order)
            result = variable_elimination(factors, order)
            values = result.values / result.values.sum()
            if reference is None:
                reference = values
            else:
                np.testing.assert_allclose(values, reference, atol=1e-9)

    def test_oracles_agree_with_each_other(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            net = random_net(rng, 5, max_card=3)
            np.testing.assert_allclose(pure_joint(net), einsum_joint(net), atol=1e-12)

    def test_consumption_query_restricted_to_its_blanket(self):
        # the canonical blanket-scoped case: all of MB(consumption) observed
        from slobn import sim
        truth = sim.ground_truth(0)
        blanket = markov_blanket(truth.dag, "consumption").member_set
        assert blanket == {"bitrate", "config", "gpu"}
        evidence = {"bitrate": 2, "config": 1, "gpu": 0}
        full = query(truth, ["consumption"], evidence)
        scoped = query(truth, ["consumption"], evidence,
                       scope_limit=blanket | {"consumption"})
        np.testing.assert_allclose(scoped.values, full.values, atol=1e-9)
