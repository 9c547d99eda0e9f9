"""Directed acyclic graphs, d-separation, and Markov blankets.

The Markov blanket of a node (parents, children, and the children's other
parents) is the smallest conditioning set that renders the node independent
of everything else in the graph. This module is the causality filter the
rest of the pipeline is built on: blanket membership decides which variables
an SLO query needs to touch at all.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

ROLE_PARENT = "parent"
ROLE_CHILD = "child"
ROLE_COPARENT = "co-parent"


class GraphError(ValueError):
    """Invalid graph construction or query (cycle, unknown node, bad sets)."""


@dataclass(frozen=True)
class Dag:
    """Immutable directed acyclic graph over named nodes.

    Node declaration order is significant: it breaks ties in topological
    ordering, fixes parent order in CPTs, and keeps every derived artifact
    (reports, DOT files, serialized models) deterministic.
    """

    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    _parents: dict = field(init=False, repr=False, compare=False)
    _children: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("duplicate node names")
        known = set(self.nodes)
        parents: dict[str, list[str]] = {n: [] for n in self.nodes}
        children: dict[str, list[str]] = {n: [] for n in self.nodes}
        for u, v in self.edges:
            if u not in known or v not in known:
                raise GraphError(f"edge ({u!r}, {v!r}) references an unknown node")
            if u == v:
                raise GraphError(f"self-loop on {u!r}")
            parents[v].append(u)
            children[u].append(v)
        order = {n: i for i, n in enumerate(self.nodes)}
        object.__setattr__(
            self, "_parents",
            {n: tuple(sorted(ps, key=order.__getitem__)) for n, ps in parents.items()},
        )
        object.__setattr__(
            self, "_children",
            {n: tuple(sorted(cs, key=order.__getitem__)) for n, cs in children.items()},
        )
        topological_order(self)  # raises on cycles

    def parents(self, node: str) -> tuple[str, ...]:
        self._require(node)
        return self._parents[node]

    def children(self, node: str) -> tuple[str, ...]:
        self._require(node)
        return self._children[node]

    def has_edge(self, u: str, v: str) -> bool:
        return (u, v) in self.edges

    def with_edge(self, u: str, v: str) -> "Dag":
        return Dag(self.nodes, self.edges | {(u, v)})

    def without_edge(self, u: str, v: str) -> "Dag":
        return Dag(self.nodes, self.edges - {(u, v)})

    def ancestral_set(self, seeds: Iterable[str]) -> frozenset[str]:
        """Seeds plus every ancestor of a seed."""
        out: set[str] = set()
        stack = [s for s in seeds]
        for s in stack:
            self._require(s)
        while stack:
            node = stack.pop()
            if node in out:
                continue
            out.add(node)
            stack.extend(self._parents[node])
        return frozenset(out)

    def sorted_nodes(self, names: Iterable[str]) -> tuple[str, ...]:
        """The given names, in declaration order."""
        order = {n: i for i, n in enumerate(self.nodes)}
        return tuple(sorted(names, key=order.__getitem__))

    def _require(self, node: str) -> None:
        if node not in self._parents:
            raise GraphError(f"unknown node {node!r}")


def topological_order(dag: Dag) -> tuple[str, ...]:
    """Kahn's algorithm; ties broken by node declaration order."""
    pending = {n: 0 for n in dag.nodes}
    children: dict[str, list[str]] = {n: [] for n in dag.nodes}
    for u, v in dag.edges:
        pending[v] += 1
        children[u].append(v)
    order: list[str] = []
    ready = [n for n in dag.nodes if pending[n] == 0]
    position = {n: i for i, n in enumerate(dag.nodes)}
    while ready:
        ready.sort(key=position.__getitem__)
        node = ready.pop(0)
        order.append(node)
        for child in children[node]:
            pending[child] -= 1
            if pending[child] == 0:
                ready.append(child)
    if len(order) != len(dag.nodes):
        raise GraphError("graph contains a cycle")
    return tuple(order)


@dataclass(frozen=True)
class BlanketReport:
    """Markov blanket of one or more target variables.

    Each member carries every role it plays relative to the targets; a node
    may legitimately be e.g. both a parent and a co-parent.
    """

    targets: frozenset[str]
    members: tuple[str, ...]
    roles: Mapping[str, frozenset[str]]
    parameterizable: tuple[str, ...]

    @property
    def member_set(self) -> frozenset[str]:
        return frozenset(self.members)


def markov_blanket(
    dag: Dag, target: str, parameterizable: Iterable[str] = ()
) -> BlanketReport:
    """Parents, children, and co-parents of ``target``, with roles."""
    return merged_blanket(dag, [target], parameterizable)


def merged_blanket(
    dag: Dag, targets: Iterable[str], parameterizable: Iterable[str] = ()
) -> BlanketReport:
    """Union of the per-target blankets, minus the targets themselves.

    A union of blankets is still a shielding set for the target set (it can
    only be larger than the minimal one), which keeps blanket-scoped queries
    exact for multi-metric SLOs.
    """
    target_set = frozenset(targets)
    if not target_set:
        raise GraphError("target set must be nonempty")
    roles: dict[str, set[str]] = {}

    def add_role(node: str, role: str) -> None:
        if node in target_set:
            return
        roles.setdefault(node, set()).add(role)

    for t in target_set:
        dag._require(t)
        for p in dag.parents(t):
            add_role(p, ROLE_PARENT)
        for c in dag.children(t):
            add_role(c, ROLE_CHILD)
            for q in dag.parents(c):
                if q != t:
                    add_role(q, ROLE_COPARENT)

    members = dag.sorted_nodes(roles)
    param = frozenset(parameterizable)
    return BlanketReport(
        targets=target_set,
        members=members,
        roles={m: frozenset(roles[m]) for m in members},
        parameterizable=tuple(m for m in members if m in param),
    )


def d_separated(dag: Dag, x: Iterable[str], y: Iterable[str], z: Iterable[str]) -> bool:
    """Whether every path between ``x`` and ``y`` is blocked given ``z``.

    Implemented as the linear-time reachability sweep over (node, direction)
    states rather than path enumeration: chains and forks are blocked by an
    observed middle node, colliders are blocked unless the collider or one of
    its descendants is observed.
    """
    xs, ys, zs = frozenset(x), frozenset(y), frozenset(z)
    for name in xs | ys | zs:
        dag._require(name)
    if xs & ys or xs & zs or ys & zs:
        raise GraphError("x, y, and z must be pairwise disjoint")
    if not xs or not ys:
        return True

    # Ancestors of the conditioning set open colliders.
    z_ancestors: set[str] = set()
    stack = list(zs)
    while stack:
        node = stack.pop()
        if node in z_ancestors:
            continue
        z_ancestors.add(node)
        stack.extend(dag.parents(node))

    UP, DOWN = 0, 1  # arrived from a child / from a parent
    queue: deque[tuple[str, int]] = deque((s, UP) for s in xs)
    visited: set[tuple[str, int]] = set()
    while queue:
        node, direction = queue.popleft()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node not in zs and node in ys:
            return False
        if direction == UP and node not in zs:
            for p in dag.parents(node):
                queue.append((p, UP))
            for c in dag.children(node):
                queue.append((c, DOWN))
        elif direction == DOWN:
            if node not in zs:
                for c in dag.children(node):
                    queue.append((c, DOWN))
            if node in z_ancestors:
                for p in dag.parents(node):
                    queue.append((p, UP))
    return True


def blanket_dot(dag: Dag, report: BlanketReport) -> str:
    """Render a blanket as a deterministic Graphviz digraph.

    Targets are shaded, members are labeled with their roles, and
    parameterizable members get a double border. Node and edge order follow
    the DAG's declaration order so the output is stable for golden files.
    """
    shown = set(report.targets) | report.member_set
    param = set(report.parameterizable)
    lines = ["digraph markov_blanket {", "  rankdir=LR;"]
    for node in dag.sorted_nodes(shown):
        if node in report.targets:
            lines.append(
                f'  "{node}" [style=filled, fillcolor="#a8c8f0", label="{node}\\n(target)"];'
            )
        else:
            roles = ", ".join(sorted(report.roles[node]))
            extras = ', peripheries=2' if node in param else ""
            suffix = ", param" if node in param else ""
            lines.append(f'  "{node}" [label="{node}\\n{roles}{suffix}"{extras}];')
    position = {n: i for i, n in enumerate(dag.nodes)}
    edges = [e for e in dag.edges if e[0] in shown and e[1] in shown]
    for u, v in sorted(edges, key=lambda e: (position[e[0]], position[e[1]])):
        lines.append(f'  "{u}" -> "{v}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
