"""Configuration enumeration, scoring, selection, and the adaptation step.

Every candidate assignment of the parameterizable variables is scored
against every SLO with one blanket-scoped query each; feasible candidates
(all probabilistic SLOs at or above their required probability) are ranked
by ascending minimize-objective, then by descending worst-case SLO
probability, then lexicographically, so identical inputs always produce the
identical ranking. When nothing is feasible the full ranking is returned
with the least-violating candidate first.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import merged_blanket
from .inference import InconsistentEvidenceError
from .learn import DiscreteBayesNet
from .slo import (
    KIND_MINIMIZE,
    SloSpec,
    empirical_fulfillment,
    expected_objective,
    slo_probability,
)
from .telemetry import DiscreteDataset, RawDataset, VariableMeta

PROVENANCE_INFERRED = "inferred"
PROVENANCE_NAIVE = "naive"
PROVENANCE_RANDOM = "random"
PROVENANCE_MANUAL = "manual"


@dataclass(frozen=True)
class DeviceConfig:
    """Assignment of one state label to every parameterizable variable in scope."""

    assignment: Mapping[str, str]
    provenance: str = PROVENANCE_MANUAL

    def describe(self) -> str:
        return " ".join(f"{k}={v}" for k, v in self.assignment.items())


@dataclass(frozen=True)
class ConfigScore:
    """One configuration's per-SLO probabilities and ranking ingredients."""

    config: DeviceConfig
    probabilities: Mapping[str, float]
    objectives: Mapping[str, float]
    feasible: bool
    objective: float
    min_probability: float
    query_count: int
    model_inconsistent: bool = False
    diagnostic: str | None = None


@dataclass(frozen=True)
class RankedConfigs:
    """All scored configurations in final ranking order."""

    scores: tuple[ConfigScore, ...]
    none_feasible: bool
    query_count: int

    @property
    def best(self) -> ConfigScore:
        return self.scores[0]


@dataclass(frozen=True)
class BlanketObservation:
    """Observed state of one blanket member, for violation explanations."""

    variable: str
    roles: tuple[str, ...]
    observed_state: str
    parameterizable: bool


@dataclass(frozen=True)
class AdaptDecision:
    """Outcome of one adaptation check: keep the config or switch."""

    action: str  # "keep" | "switch"
    config: DeviceConfig | None
    violated: tuple[str, ...]
    explanation: Mapping[str, tuple[BlanketObservation, ...]]


def parameter_space(
    metas: Sequence[VariableMeta],
    constraints: Mapping[str, str] | None = None,
    provenance: str = PROVENANCE_INFERRED,
) -> list[DeviceConfig]:
    """Cartesian product over the unpinned parameterizable variables.

    Constraints on a parameterizable variable pin that coordinate; the
    result is in lexicographic state-index order and has exactly
    prod(unpinned cardinalities) entries. With nothing parameterizable the
    single empty configuration is returned.
    """
    constraints = constraints or {}
    params = [m for m in metas if m.parameterizable]
    for meta in params:
        pin = constraints.get(meta.name)
        if pin is not None and pin not in meta.states:
            raise ValueError(
                f"pinned state {pin!r} is not a state of {meta.name!r}"
            )
    choices: list[tuple[str, ...]] = [
        (constraints[m.name],) if m.name in constraints else m.states for m in params
    ]
    configs: list[DeviceConfig] = []
    indices = [0] * len(params)
    while True:
        assignment = {m.name: choices[i][indices[i]] for i, m in enumerate(params)}
        configs.append(DeviceConfig(assignment, provenance))
        for axis in range(len(params) - 1, -1, -1):
            indices[axis] += 1
            if indices[axis] < len(choices[axis]):
                break
            indices[axis] = 0
        else:
            break
    return configs


def naive_config(metas: Sequence[VariableMeta]) -> DeviceConfig:
    """Max-quality assignment: the last declared state of every parameter."""
    assignment = {m.name: m.states[-1] for m in metas if m.parameterizable}
    return DeviceConfig(assignment, PROVENANCE_NAIVE)


def random_config(metas: Sequence[VariableMeta], seed: int) -> DeviceConfig:
    """Uniformly random assignment, deterministic per seed."""
    rng = np.random.default_rng(seed)
    assignment = {
        m.name: m.states[int(rng.integers(m.cardinality))]
        for m in metas if m.parameterizable
    }
    return DeviceConfig(assignment, PROVENANCE_RANDOM)


def _evidence_indices(
    bn: DiscreteBayesNet, labels: Mapping[str, str]
) -> dict[str, int]:
    return {name: bn.state_index(name, value) for name, value in labels.items()}


def score_config(
    bn: DiscreteBayesNet,
    slos: Sequence[SloSpec],
    config: DeviceConfig,
    constraints: Mapping[str, str] | None = None,
) -> ConfigScore:
    """Score one configuration against every SLO (one query per SLO).

    The configuration plus extra constraints enter each query as evidence,
    restricted per SLO to the variables that can matter (its metrics'
    merged blanket and the metrics themselves). Evidence the model deems
    impossible marks the configuration infeasible-by-model instead of
    raising.
    """
    evidence = _evidence_indices(bn, {**config.assignment, **(constraints or {})})
    probabilities: dict[str, float] = {}
    objectives: dict[str, float] = {}
    queries = 0
    diagnostic = None
    for slo in slos:
        try:
            if slo.kind == KIND_MINIMIZE:
                objectives[slo.name] = expected_objective(bn, slo, evidence)
            else:
                probabilities[slo.name] = slo_probability(bn, slo, evidence)
            queries += 1
        except InconsistentEvidenceError as exc:
            diagnostic = f"{slo.name}: {exc}"
            break
    if diagnostic is not None:
        return ConfigScore(
            config=config,
            probabilities=probabilities,
            objectives=objectives,
            feasible=False,
            objective=float("inf"),
            min_probability=0.0,
            query_count=queries,
            model_inconsistent=True,
            diagnostic=diagnostic,
        )
    feasible = all(
        probabilities[slo.name] >= slo.p_min
        for slo in slos if slo.kind != KIND_MINIMIZE
    )
    min_probability = min(probabilities.values(), default=1.0)
    objective = sum(objectives.values())
    return ConfigScore(
        config=config,
        probabilities=probabilities,
        objectives=objectives,
        feasible=feasible,
        objective=objective,
        min_probability=min_probability,
        query_count=queries,
    )


def _lexicographic_key(bn: DiscreteBayesNet, config: DeviceConfig) -> tuple[int, ...]:
    return tuple(
        bn.state_index(name, config.assignment[name])
        for name in bn.parameterizable_names
        if name in config.assignment
    )


def infer_best_config(
    bn: DiscreteBayesNet,
    slos: Sequence[SloSpec],
    constraints: Mapping[str, str] | None = None,
) -> RankedConfigs:
    """Score the whole parameter space and rank it deterministically.

    Feasible configurations come first, ordered by ascending objective,
    then descending minimum SLO probability, then lexicographic assignment;
    infeasible ones follow, least-violating (highest minimum probability)
    first. ``none_feasible`` flags the case where the top entry still
    violates the requirements.
    """
    if not slos:
        raise ValueError("at least one SLO is required")
    constraints = constraints or {}
    param_metas = [m for m in bn.metas if m.parameterizable]
    configs = parameter_space(param_metas, constraints)
    scored = [score_config(bn, slos, c, constraints) for c in configs]

    def sort_key(score: ConfigScore):
        lex = _lexicographic_key(bn, score.config)
        if score.feasible:
            return (0, score.objective, -score.min_probability, lex)
        return (1, -score.min_probability, score.objective, lex)

    ranked = tuple(sorted(scored, key=sort_key))
    return RankedConfigs(
        scores=ranked,
        none_feasible=not any(s.feasible for s in ranked),
        query_count=sum(s.query_count for s in ranked),
    )


def _modal_states(
    bn: DiscreteBayesNet, window: RawDataset | DiscreteDataset, names: Iterable[str]
) -> dict[str, str]:
    if isinstance(window, RawDataset):
        window = bn.codec.apply(window)
    out = {}
    for name in names:
        column = window.rows[:, window.index(name)]
        counts = np.bincount(column, minlength=bn.cardinality(name))
        out[name] = bn.meta(name).states[int(np.argmax(counts))]
    return out


def adapt(
    bn: DiscreteBayesNet,
    slos: Sequence[SloSpec],
    window: RawDataset | DiscreteDataset,
    current: DeviceConfig,
    constraints: Mapping[str, str] | None = None,
) -> AdaptDecision:
    """Check a telemetry window and reconfigure when an SLO is violated.

    On violation the decision carries, per violated SLO, the blanket
    members with their roles and the states observed in the window, which
    is what makes the switch explainable.
    """
    report = empirical_fulfillment(window, slos)
    violated = report.violations
    if not violated:
        return AdaptDecision("keep", None, (), {})

    param = set(bn.parameterizable_names)
    explanation: dict[str, tuple[BlanketObservation, ...]] = {}
    by_name = {slo.name: slo for slo in slos}
    for name in violated:
        blanket = merged_blanket(bn.dag, by_name[name].metrics, param)
        observed = _modal_states(bn, window, blanket.members)
        explanation[name] = tuple(
            BlanketObservation(
                variable=member,
                roles=tuple(sorted(blanket.roles[member])),
                observed_state=observed[member],
                parameterizable=member in param,
            )
            for member in blanket.members
        )
    ranked = infer_best_config(bn, slos, constraints)
    target = replace(ranked.best.config, provenance=PROVENANCE_INFERRED)
    return AdaptDecision("switch", target, violated, explanation)
