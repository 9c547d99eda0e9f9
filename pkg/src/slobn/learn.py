"""Score-based structure learning and CPT estimation.

Structure search is a greedy hill climb over single-edge moves (add, remove,
reverse) scored with the Bayesian Information Criterion. BIC decomposes over
families, so each candidate move only re-scores the one or two families it
touches, and a per-family cache makes repeated candidates free. Parameters
are maximum-likelihood counts with optional Laplace smoothing.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .graph import Dag, GraphError
from .telemetry import (
    DiscreteDataset,
    DiscretizationMap,
    VariableMeta,
    contingency,
)


@dataclass(frozen=True, eq=False)
class Cpt:
    """Conditional probability table for one variable.

    Rows are parent-state combinations in row-major order over ``parents``
    (first parent varies slowest); columns are child states. Every row sums
    to one.
    """

    variable: str
    parents: tuple[str, ...]
    table: np.ndarray
    alpha: float = 0.0

    def __post_init__(self) -> None:
        if self.table.ndim != 2:
            raise ValueError(f"CPT for {self.variable!r} must be 2-dimensional")
        if self.alpha < 0:
            raise ValueError("smoothing alpha must be nonnegative")
        if np.any(self.table < -1e-12) or np.any(self.table > 1 + 1e-12):
            raise ValueError(f"CPT for {self.variable!r} has entries outside [0, 1]")
        sums = self.table.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError(f"CPT rows for {self.variable!r} do not sum to 1")

    @property
    def child_cardinality(self) -> int:
        return self.table.shape[1]


@dataclass(frozen=True, eq=False)
class DiscreteBayesNet:
    """A DAG plus one CPT per node, with the telemetry metadata that built it."""

    dag: Dag
    cpts: Mapping[str, Cpt]
    metas: tuple[VariableMeta, ...]
    codec: DiscretizationMap

    def __post_init__(self) -> None:
        meta_names = {m.name for m in self.metas}
        if set(self.cpts) != set(self.dag.nodes):
            raise ValueError("CPTs must cover exactly the DAG nodes")
        if not set(self.dag.nodes) <= meta_names:
            raise ValueError("every DAG node needs variable metadata")
        for node in self.dag.nodes:
            cpt = self.cpts[node]
            if cpt.parents != self.dag.parents(node):
                raise ValueError(f"CPT parents for {node!r} do not match the DAG")
            expected_rows = 1
            for p in cpt.parents:
                expected_rows *= self.meta(p).cardinality
            if cpt.table.shape != (expected_rows, self.meta(node).cardinality):
                raise ValueError(f"CPT shape for {node!r} does not match cardinalities")

    def meta(self, name: str) -> VariableMeta:
        for m in self.metas:
            if m.name == name:
                return m
        raise GraphError(f"unknown variable {name!r}")

    def cardinality(self, name: str) -> int:
        return self.meta(name).cardinality

    @property
    def parameterizable_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.metas if m.parameterizable and m.name in self.cpts)

    def state_index(self, name: str, value) -> int:
        """Resolve a state given as an index, a label, or a raw value."""
        meta = self.meta(name)
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            if not 0 <= value < meta.cardinality:
                raise ValueError(f"state {value} out of range for {name!r}")
            return int(value)
        label = str(value)
        if label in meta.states:
            return meta.states.index(label)
        try:
            return self.codec.codec(name).state_of(value)
        except Exception:
            raise ValueError(
                f"{value!r} is not a state of {name!r} (states: {', '.join(meta.states)})"
            ) from None


class ScoreCache:
    """Memo for local family scores, keyed by (child, parent set)."""

    def __init__(self) -> None:
        self._scores: dict[tuple[str, frozenset[str]], float] = {}
        self.hits = 0
        self.misses = 0

    def local(self, data: DiscreteDataset, child: str, parents: Iterable[str]) -> float:
        key = (child, frozenset(parents))
        cached = self._scores.get(key)
        if cached is not None:
            self.hits += 1
            return cached
        self.misses += 1
        score = bic_local(data, child, key[1])
        self._scores[key] = score
        return score


def bic_local(data: DiscreteDataset, child: str, parents: Iterable[str]) -> float:
    """BIC family score: max log-likelihood minus the parameter penalty.

    Penalty is (ln N / 2) * (child cardinality - 1) * prod(parent
    cardinalities); parent combinations never observed contribute nothing to
    the likelihood term.
    """
    parent_list = sorted(parents, key=data.index)
    counts = contingency(data, child, parent_list)
    n = data.row_count
    row_totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.where(counts > 0, np.log(counts) - np.log(row_totals), 0.0)
    log_likelihood = float((counts * log_ratio).sum())
    q = 1
    for p in parent_list:
        q *= data.meta(p).cardinality
    r = data.meta(child).cardinality
    penalty = 0.5 * np.log(n) * (r - 1) * q if n > 0 else 0.0
    return log_likelihood - penalty


def bic_total(data: DiscreteDataset, dag: Dag, cache: ScoreCache | None = None) -> float:
    """Sum of local scores over every family in the DAG."""
    if cache is None:
        return sum(bic_local(data, v, dag.parents(v)) for v in dag.nodes)
    return sum(cache.local(data, v, dag.parents(v)) for v in dag.nodes)


def _reachable(children: Mapping[str, set], start: str, goal: str) -> bool:
    stack = [start]
    seen = set()
    while stack:
        node = stack.pop()
        if node == goal:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(children[node])
    return False


def hill_climb(
    data: DiscreteDataset,
    *,
    max_parents: int = 4,
    max_iters: int = 10_000,
    tabu_len: int = 100,
    epsilon: float = 1e-8,
    seed: int | None = None,
    exogenous: Iterable[str] = (),
    use_cache: bool = True,
    trace: list | None = None,
) -> Dag:
    """Greedy BIC hill climb over add/remove/reverse single-edge moves.

    Starts from the empty graph and applies the best strictly-improving move
    until none is left (or ``max_iters`` is hit), keeping the graph acyclic
    and every in-degree at most ``max_parents``. A tabu list suppresses the
    immediate inverse of recent moves. The search is fully deterministic:
    candidate moves are scored in lexicographic (operation, from, to) order
    and ties go to the smallest key; ``seed`` is accepted for interface
    stability but the search itself uses no randomness.

    ``exogenous`` names variables that may not receive incoming edges.
    Declaring externally-set knobs (swept device parameters) exogenous is
    the usual way to keep score-equivalent orientation flips from sending
    the greedy search into a compensating local optimum.

    ``trace``, when given, receives the total BIC after the initial graph
    and after every accepted move (a strictly increasing sequence).
    """
    del seed
    if max_parents < 1:
        raise ValueError("max_parents must be >= 1")
    nodes = [m.name for m in data.metas]
    roots_only = set(exogenous)
    unknown_roots = roots_only - set(nodes)
    if unknown_roots:
        raise ValueError(f"exogenous variables not in data: {sorted(unknown_roots)}")
    position = {n: i for i, n in enumerate(nodes)}
    parents: dict[str, set] = {n: set() for n in nodes}
    children: dict[str, set] = {n: set() for n in nodes}
    edges: set[tuple[str, str]] = set()

    cache = ScoreCache() if use_cache else None

    def local(child: str, parent_set: Iterable[str]) -> float:
        if cache is not None:
            return cache.local(data, child, parent_set)
        return bic_local(data, child, parent_set)

    total = sum(local(v, parents[v]) for v in nodes)
    if trace is not None:
        trace.append(total)
    tabu: deque[tuple[str, str, str]] = deque(maxlen=max(tabu_len, 0) or None)
    inverse = {"add": "remove", "remove": "add"}

    for _ in range(max_iters):
        best_delta = epsilon
        best_key = None
        best_move: tuple[str, str, str] | None = None

        def consider(move: tuple[str, str, str], delta: float) -> None:
            # Score-equivalent moves (e.g. the two orientations of a fresh
            # edge) differ only by float noise; compare on a quantized delta
            # so they tie exactly and the lexicographic order decides.
            nonlocal best_delta, best_key, best_move
            if delta <= epsilon:
                return
            key = round(delta, 6)
            if best_key is None or key > best_key or (key == best_key and move < best_move):
                best_delta = delta
                best_key = key
                best_move = move

        for u in nodes:
            for v in nodes:
                if u == v or v in roots_only or (u, v) in edges or (v, u) in edges:
                    continue
                if len(parents[v]) >= max_parents:
                    continue
                if _reachable(children, v, u):
                    continue  # adding u->v would close a cycle
                move = ("add", u, v)
                if move in tabu:
                    continue
                delta = local(v, parents[v] | {u}) - local(v, parents[v])
                consider(move, delta)
        for u, v in sorted(edges, key=lambda e: (position[e[0]], position[e[1]])):
            move = ("remove", u, v)
            if move not in tabu:
                delta = local(v, parents[v] - {u}) - local(v, parents[v])
                consider(move, delta)
        for u, v in sorted(edges, key=lambda e: (position[e[0]], position[e[1]])):
            move = ("reverse", u, v)
            if u in roots_only:
                continue
            if move in tabu or ("reverse", v, u) in tabu:
                continue
            if len(parents[u]) >= max_parents:
                continue
            children[u].discard(v)
            creates_cycle = _reachable(children, u, v)
            children[u].add(v)
            if creates_cycle:
                continue
            delta = (local(u, parents[u] | {v}) - local(u, parents[u])
                     + local(v, parents[v] - {u}) - local(v, parents[v]))
            consider(move, delta)

        if best_move is None:
            break
        op, u, v = best_move
        if op == "add":
            edges.add((u, v))
            parents[v].add(u)
            children[u].add(v)
        elif op == "remove":
            edges.discard((u, v))
            parents[v].discard(u)
            children[u].discard(v)
        else:
            edges.discard((u, v))
            parents[v].discard(u)
            children[u].discard(v)
            edges.add((v, u))
            parents[u].add(v)
            children[v].add(u)
        total += best_delta
        if trace is not None:
            trace.append(total)
        if tabu.maxlen:
            if op == "reverse":
                tabu.append(("reverse", v, u))
            else:
                tabu.append((inverse[op], u, v))

    return Dag(tuple(nodes), frozenset(edges))


def fit_cpts(data: DiscreteDataset, dag: Dag, alpha: float = 0.0) -> DiscreteBayesNet:
    """Estimate one CPT per node from counts.

    Each row is (count + alpha) / (row total + alpha * child cardinality);
    with ``alpha`` zero, parent combinations that never occur get a uniform
    row so that inference stays total.
    """
    if alpha < 0:
        raise ValueError("smoothing alpha must be nonnegative")
    if not set(dag.nodes) <= set(data.names):
        missing = sorted(set(dag.nodes) - set(data.names))
        raise ValueError(f"DAG nodes missing from data: {missing}")
    cpts: dict[str, Cpt] = {}
    for node in dag.nodes:
        node_parents = dag.parents(node)
        counts = contingency(data, node, node_parents).astype(np.float64)
        r = counts.shape[1]
        totals = counts.sum(axis=1, keepdims=True)
        smoothed = counts + alpha
        denominators = totals + alpha * r
        table = np.empty_like(smoothed)
        seen = denominators[:, 0] > 0
        table[seen] = smoothed[seen] / denominators[seen]
        table[~seen] = 1.0 / r
        table.flags.writeable = False
        cpts[node] = Cpt(node, node_parents, table, alpha)
    metas = tuple(m for m in data.metas if m.name in cpts)
    codec = data.codec.restrict(dag.nodes)
    return DiscreteBayesNet(dag, cpts, metas, codec)
