"""Discrete factor algebra and exact inference by variable elimination.

Queries against a net are always exact: the engine prunes to the ancestral
closure of the query and evidence variables (dropping barren nodes changes
nothing), picks a min-fill elimination order, and contracts factors with
numpy broadcasting. A ``scope_limit`` does not change the answer; it asserts
that the caller's variable subset really shields the targets (it must
contain the targets' merged Markov blanket), which is what makes
blanket-scoped querying safe in the first place.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import merged_blanket
from .learn import Cpt, DiscreteBayesNet


class InferenceError(ValueError):
    """Invalid factor operation or query."""


class InconsistentEvidenceError(InferenceError):
    """The evidence has probability zero under the model."""


@dataclass(frozen=True, eq=False)
class Factor:
    """Dense nonnegative table over an ordered variable scope."""

    scope: tuple[str, ...]
    cards: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if len(self.scope) != len(set(self.scope)):
            raise InferenceError("factor scope contains duplicate variables")
        if len(self.scope) != len(self.cards):
            raise InferenceError("scope and cardinalities differ in length")
        if tuple(self.values.shape) != self.cards:
            raise InferenceError(
                f"value table shape {self.values.shape} does not match cards {self.cards}"
            )
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise InferenceError("factor values must be finite and nonnegative")

    def card(self, var: str) -> int:
        return self.cards[self.scope.index(var)]

    def total(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class EliminationPlan:
    """An elimination ordering and the induced width it achieves."""

    ordering: tuple[str, ...]
    width: int
    heuristic: str = "min-fill"


def factor_from_cpt(cpt: Cpt, cards: Mapping[str, int]) -> Factor:
    """View a CPT as a factor over (parents..., child)."""
    scope = cpt.parents + (cpt.variable,)
    shape = tuple(cards[v] for v in scope)
    return Factor(scope, shape, cpt.table.reshape(shape))


def factor_product(a: Factor, b: Factor) -> Factor:
    """Pointwise product; the result scope is a's order plus b's new variables."""
    for var in b.scope:
        if var in a.scope and a.card(var) != b.card(var):
            raise InferenceError(
                f"variable {var!r} has cardinality {a.card(var)} vs {b.card(var)}"
            )
    new_vars = tuple(v for v in b.scope if v not in a.scope)
    out_scope = a.scope + new_vars
    out_cards = a.cards + tuple(b.card(v) for v in new_vars)

    a_values = a.values.reshape(a.cards + (1,) * len(new_vars))
    b_axes = [b.scope.index(v) for v in out_scope if v in b.scope]
    b_shape = tuple(b.card(v) if v in b.scope else 1 for v in out_scope)
    b_values = np.transpose(b.values, b_axes).reshape(b_shape)
    return Factor(out_scope, out_cards, a_values * b_values)


def marginalize(f: Factor, var: str) -> Factor:
    """Sum out one variable; total mass is preserved."""
    if var not in f.scope:
        raise InferenceError(f"variable {var!r} not in scope {f.scope}")
    axis = f.scope.index(var)
    scope = f.scope[:axis] + f.scope[axis + 1:]
    cards = f.cards[:axis] + f.cards[axis + 1:]
    return Factor(scope, cards, f.values.sum(axis=axis))


def reduce(f: Factor, evidence: Mapping[str, int]) -> Factor:
    """Slice observed variables out of the scope at their observed states.

    Evidence on variables outside the scope is ignored, so one evidence
    mapping can be applied uniformly across a whole factor set.
    """
    out = f
    for var in f.scope:
        if var not in evidence:
            continue
        state = evidence[var]
        card = out.card(var)
        if not 0 <= state < card:
            raise InferenceError(
                f"evidence state {state} out of range for {var!r} (cardinality {card})"
            )
        axis = out.scope.index(var)
        values = np.take(out.values, state, axis=axis)
        scope = out.scope[:axis] + out.scope[axis + 1:]
        cards = out.cards[:axis] + out.cards[axis + 1:]
        out = Factor(scope, cards, values)
    return out


def _interaction_graph(factors: Sequence[Factor]) -> dict[str, set]:
    adjacency: dict[str, set] = {}
    for f in factors:
        for v in f.scope:
            adjacency.setdefault(v, set())
        for i, u in enumerate(f.scope):
            for w in f.scope[i + 1:]:
                adjacency[u].add(w)
                adjacency[w].add(u)
    return adjacency


def _fill_count(adjacency: Mapping[str, set], var: str) -> int:
    neighbors = sorted(adjacency[var])
    missing = 0
    for i, u in enumerate(neighbors):
        for w in neighbors[i + 1:]:
            if w not in adjacency[u]:
                missing += 1
    return missing


def elimination_order(
    factors: Sequence[Factor], keep: Iterable[str] = ()
) -> EliminationPlan:
    """Greedy min-fill ordering over the factors' interaction graph.

    Ties break on the variable name, so the plan is deterministic for a
    given factor set.
    """
    keep_set = set(keep)
    adjacency = _interaction_graph(factors)
    unknown = keep_set - set(adjacency)
    if unknown:
        raise InferenceError(f"keep variables not in any scope: {sorted(unknown)}")
    remaining = {v: set(ns) for v, ns in adjacency.items()}
    ordering: list[str] = []
    width = 0
    while True:
        candidates = [v for v in remaining if v not in keep_set]
        if not candidates:
            break
        best = min(candidates, key=lambda v: (_fill_count(remaining, v), v))
        neighbors = remaining[best]
        width = max(width, len(neighbors) + 1)
        for u in neighbors:
            for w in neighbors:
                if u != w:
                    remaining[u].add(w)
        for u in neighbors:
            remaining[u].discard(best)
        del remaining[best]
        ordering.append(best)
    if keep_set:
        width = max(width, len(remaining))
    return EliminationPlan(tuple(ordering), width)


def variable_elimination(factors: Sequence[Factor], ordering: Sequence[str]) -> Factor:
    """Eliminate variables in the given order and multiply what remains."""
    pool = list(factors)
    for var in ordering:
        bucket = [f for f in pool if var in f.scope]
        if not bucket:
            continue
        pool = [f for f in pool if var not in f.scope]
        product = bucket[0]
        for f in bucket[1:]:
            product = factor_product(product, f)
        pool.append(marginalize(product, var))
    if not pool:
        return Factor((), (), np.array(1.0))
    result = pool[0]
    for f in pool[1:]:
        result = factor_product(result, f)
    return result


def query(
    bn: DiscreteBayesNet,
    targets: Iterable[str],
    evidence: Mapping[str, int] | None = None,
    scope_limit: Iterable[str] | None = None,
) -> Factor:
    """Exact posterior P(targets | evidence), normalized to sum to one.

    Only the CPTs of variables relevant to the query are loaded (the
    ancestral closure of targets and evidence; everything else integrates
    out to one). With ``scope_limit`` the caller declares the variable
    subset it believes is sufficient; the engine verifies that the subset
    contains the targets and their merged Markov blanket and raises
    otherwise, because only a shielding superset guarantees the restricted
    query equals the full one.

    Raises :class:`InconsistentEvidenceError` when the evidence has zero
    probability under the model.
    """
    target_list = list(dict.fromkeys(targets))
    if not target_list:
        raise InferenceError("targets must be nonempty")
    for t in target_list:
        if t not in bn.cpts:
            raise InferenceError(f"unknown target {t!r}")
    ev = dict(evidence or {})
    overlap = set(target_list) & set(ev)
    if overlap:
        raise InferenceError(f"targets and evidence overlap: {sorted(overlap)}")
    for var, state in ev.items():
        if var not in bn.cpts:
            raise InferenceError(f"unknown evidence variable {var!r}")
        if not 0 <= state < bn.cardinality(var):
            raise InferenceError(
                f"evidence state {state} out of range for {var!r}"
            )

    if scope_limit is not None:
        limit = set(scope_limit)
        missing_targets = set(target_list) - limit
        if missing_targets:
            raise InferenceError(
                f"scope limit must contain the targets; missing {sorted(missing_targets)}"
            )
        blanket = merged_blanket(bn.dag, target_list).member_set
        uncovered = blanket - limit - set(target_list)
        if uncovered:
            raise InferenceError(
                "scope limit does not shield the targets; missing blanket members "
                f"{sorted(uncovered)}"
            )

    cards = {m.name: m.cardinality for m in bn.metas}
    relevant = bn.dag.ancestral_set(set(target_list) | set(ev))
    factors = [
        reduce(factor_from_cpt(bn.cpts[v], cards), ev)
        for v in bn.dag.sorted_nodes(relevant)
    ]
    plan = elimination_order(factors, keep=target_list)
    result = variable_elimination(factors, plan.ordering)

    mass = result.total()
    if not np.isfinite(mass) or mass <= 0.0:
        raise InconsistentEvidenceError(
            f"evidence {ev} has probability zero under the model"
        )
    ordered_targets = bn.dag.sorted_nodes(target_list)
    axes = [result.scope.index(t) for t in ordered_targets]
    values = np.transpose(result.values, axes) / mass
    return Factor(ordered_targets, tuple(cards[t] for t in ordered_targets), values)
