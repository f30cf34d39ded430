"""Composes the four value heads into the priority gate, plus baseline policies.

The gate consults criteria in a fixed priority order (intent, knowledge,
time, self by default; injectable for ablations). Each criterion can
short-circuit the cascade: an intent or time head voting Retrieve ends the
walk with Retrieve, a knowledge head voting NoRetrieve ends it with
NoRetrieve, and the last consulted head's own verdict decides. Exactly five
leaves over the four binary verdicts.

Baselines live here too: a single-criterion gate, constant always/never
gates, and a min-token-probability threshold gate with named presets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from uar.classifier import HeadScore, LinearClassifier, load_file, save_file
from uar.errors import ConfigError, DimensionMismatch, EmptyTrace, IoFailure
from uar.features import CRITERION_SCENARIOS, Label, Scenario

# which verdict lets a criterion end the cascade early, and with what outcome;
# a criterion consulted last decides by its own verdict instead
_FIRE_RULE: dict[Scenario, tuple[Label, Label]] = {
    Scenario.INTENT: (Label.RETRIEVE, Label.RETRIEVE),
    Scenario.KNOWLEDGE: (Label.NO_RETRIEVE, Label.NO_RETRIEVE),
    Scenario.TIME: (Label.RETRIEVE, Label.RETRIEVE),
    Scenario.SELF: (Label.RETRIEVE, Label.RETRIEVE),
}

THRESHOLD_PRESETS = {"7b": 0.006, "13b": 0.02}


@dataclass(frozen=True)
class GateDecision:
    final: Label
    policy: str
    evaluated: tuple[Scenario, ...]
    criteria: dict[Scenario, HeadScore] = field(default_factory=dict, hash=False)

    def to_json_dict(self) -> dict:
        return {
            "final": self.final.value,
            "policy": self.policy,
            "evaluated": [s.value for s in self.evaluated],
            "criteria": {
                s.value: {
                    "verdict": score.verdict.value,
                    "logits": [score.logits[0], score.logits[1]],
                    "prob_retrieve": score.prob_retrieve,
                }
                for s, score in self.criteria.items()
            },
        }

    def to_json(self) -> str:
        """Canonical single-line rendering; identical decisions give identical bytes."""
        return json.dumps(self.to_json_dict(), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, doc: dict) -> "GateDecision":
        from uar.errors import CorruptPayload

        try:
            criteria = {
                Scenario(name): HeadScore(
                    verdict=Label(entry["verdict"]),
                    logits=(float(entry["logits"][0]), float(entry["logits"][1])),
                    prob_retrieve=float(entry["prob_retrieve"]),
                )
                for name, entry in doc["criteria"].items()
            }
            return cls(
                final=Label(doc["final"]),
                policy=doc["policy"],
                evaluated=tuple(Scenario(name) for name in doc["evaluated"]),
                criteria=criteria,
            )
        except (KeyError, ValueError, TypeError, IndexError) as exc:
            raise CorruptPayload(f"bad gate-decision document: {exc}") from None


@dataclass
class GateBundle:
    """The four heads, one per criterion, sharing a single input dimension."""

    intent_clf: LinearClassifier
    knowledge_clf: LinearClassifier
    time_clf: LinearClassifier
    self_clf: LinearClassifier

    def __post_init__(self) -> None:
        slots = {
            Scenario.INTENT: self.intent_clf,
            Scenario.KNOWLEDGE: self.knowledge_clf,
            Scenario.TIME: self.time_clf,
            Scenario.SELF: self.self_clf,
        }
        for scenario, clf in slots.items():
            if clf.scenario is not scenario:
                raise ConfigError(
                    f"classifier in the {scenario.value!r} slot is tagged {clf.scenario.value!r}"
                )
        dims = {clf.dim for clf in slots.values()}
        if len(dims) != 1:
            raise DimensionMismatch(f"bundle classifiers disagree on dim: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.intent_clf.dim

    def classifiers(self) -> dict[Scenario, LinearClassifier]:
        return {
            Scenario.INTENT: self.intent_clf,
            Scenario.KNOWLEDGE: self.knowledge_clf,
            Scenario.TIME: self.time_clf,
            Scenario.SELF: self.self_clf,
        }

    @classmethod
    def from_classifiers(cls, classifiers: Sequence[LinearClassifier]) -> "GateBundle":
        by_scenario: dict[Scenario, LinearClassifier] = {}
        for clf in classifiers:
            if clf.scenario in by_scenario:
                raise ConfigError(f"two classifiers tagged {clf.scenario.value!r}")
            by_scenario[clf.scenario] = clf
        missing = [s.value for s in CRITERION_SCENARIOS if s not in by_scenario]
        if missing:
            raise ConfigError(f"bundle is missing classifiers for: {missing}")
        return cls(
            intent_clf=by_scenario[Scenario.INTENT],
            knowledge_clf=by_scenario[Scenario.KNOWLEDGE],
            time_clf=by_scenario[Scenario.TIME],
            self_clf=by_scenario[Scenario.SELF],
        )

    def save_dir(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for scenario, clf in self.classifiers().items():
            save_file(clf, directory / f"{scenario.value}.json")

    @classmethod
    def load_dir(cls, directory: str | Path) -> "GateBundle":
        directory = Path(directory)
        if not directory.is_dir():
            raise IoFailure(f"no such directory: {directory}")
        classifiers = []
        for scenario in CRITERION_SCENARIOS:
            path = directory / f"{scenario.value}.json"
            if not path.exists():
                raise IoFailure(f"bundle directory is missing {path.name}")
            classifiers.append(load_file(path))
        return cls.from_classifiers(classifiers)


def _head_verdict(score: HeadScore, threshold: float | None) -> Label:
    if threshold is None:
        return score.verdict
    return Label.RETRIEVE if score.prob_retrieve > threshold else Label.NO_RETRIEVE


def decide_tree(
    bundle: GateBundle,
    x: np.ndarray,
    order: Sequence[Scenario] | None = None,
    eager: bool = False,
    thresholds: dict[Scenario, float] | None = None,
) -> GateDecision:
    """Walk the priority cascade; pure and deterministic.

    Lazy by default: only consulted criteria appear in the decision. With
    ``eager`` every head is scored for diagnostics while ``evaluated`` still
    records just the deciding path. ``thresholds`` optionally replaces a
    head's argmax verdict with prob_retrieve > threshold; off by default.
    """
    order = tuple(order) if order is not None else CRITERION_SCENARIOS
    if sorted(s.value for s in order) != sorted(s.value for s in CRITERION_SCENARIOS):
        raise ConfigError(f"order must be a permutation of the four criteria, got {[s.value for s in order]}")
    thresholds = thresholds or {}
    heads = bundle.classifiers()

    criteria: dict[Scenario, HeadScore] = {}
    evaluated: list[Scenario] = []
    final: Label | None = None
    for position, scenario in enumerate(order):
        score = heads[scenario].predict(x)
        criteria[scenario] = score
        evaluated.append(scenario)
        verdict = _head_verdict(score, thresholds.get(scenario))
        fire_on, outcome = _FIRE_RULE[scenario]
        if verdict is fire_on:
            final = outcome
        elif position == len(order) - 1:
            final = verdict
        if final is not None:
            break
    assert final is not None
    if eager:
        for scenario in order:
            if scenario not in criteria:
                criteria[scenario] = heads[scenario].predict(x)
    return GateDecision(final=final, policy="uar_tree", evaluated=tuple(evaluated), criteria=criteria)


def decide_single(clf: LinearClassifier, x: np.ndarray) -> GateDecision:
    """One criterion standing alone; its verdict is the final answer."""
    score = clf.predict(x)
    return GateDecision(
        final=score.verdict,
        policy=f"single:{clf.scenario.value}",
        evaluated=(clf.scenario,),
        criteria={clf.scenario: score},
    )


@dataclass(frozen=True)
class TokenProbTrace:
    """Per-token probabilities of a draft generation, for the threshold gate."""

    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.probs) == 0:
            raise EmptyTrace("token probability trace is empty")
        for p in self.probs:
            if not (isinstance(p, (int, float)) and math.isfinite(p) and 0.0 < p <= 1.0):
                raise ValueError(f"token probabilities must lie in (0, 1], got {p!r}")


def decide_threshold(trace: TokenProbTrace, theta: float) -> GateDecision:
    """Retrieve exactly when the least-confident token falls below theta."""
    if not 0.0 < theta < 1.0:
        raise ConfigError(f"theta must be in (0,1), got {theta}")
    final = Label.RETRIEVE if min(trace.probs) < theta else Label.NO_RETRIEVE
    return GateDecision(final=final, policy="confidence_threshold", evaluated=(), criteria={})


def decide_constant(always: bool) -> GateDecision:
    final = Label.RETRIEVE if always else Label.NO_RETRIEVE
    policy = "always" if always else "never"
    return GateDecision(final=final, policy=policy, evaluated=(), criteria={})


# ---------------------------------------------------------------------------
# policy objects: one callable surface over the decide_* family
# ---------------------------------------------------------------------------

class GatePolicy:
    """A retrieval-timing policy; classifier policies consume a hidden-state
    vector, the threshold policy consumes a token-probability trace."""

    name: str

    def decide(self, vector: np.ndarray | None = None, trace: TokenProbTrace | None = None) -> GateDecision:
        raise NotImplementedError


@dataclass
class TreePolicy(GatePolicy):
    bundle: GateBundle
    order: tuple[Scenario, ...] | None = None
    eager: bool = False
    thresholds: dict[Scenario, float] | None = None
    name: str = "uar_tree"

    def decide(self, vector=None, trace=None) -> GateDecision:
        if vector is None:
            raise ConfigError("the tree policy needs a hidden-state vector")
        return decide_tree(self.bundle, vector, order=self.order, eager=self.eager, thresholds=self.thresholds)


@dataclass
class SinglePolicy(GatePolicy):
    clf: LinearClassifier

    def __post_init__(self) -> None:
        self.name = f"single:{self.clf.scenario.value}"

    def decide(self, vector=None, trace=None) -> GateDecision:
        if vector is None:
            raise ConfigError("a single-criterion policy needs a hidden-state vector")
        return decide_single(self.clf, vector)


@dataclass
class ConstantPolicy(GatePolicy):
    always: bool

    def __post_init__(self) -> None:
        self.name = "always" if self.always else "never"

    def decide(self, vector=None, trace=None) -> GateDecision:
        return decide_constant(self.always)


@dataclass
class ThresholdPolicy(GatePolicy):
    theta: float
    name: str = "confidence_threshold"

    def decide(self, vector=None, trace=None) -> GateDecision:
        if trace is None:
            raise ConfigError("the confidence-threshold policy needs a token-probability trace")
        return decide_threshold(trace, self.theta)


def policy_from_string(
    name: str,
    bundle: GateBundle | None = None,
    theta: float | None = None,
) -> GatePolicy:
    """Parse operator-facing policy names: uar_tree, single:<criterion>,
    always, never, confidence_threshold (needs theta or a preset name)."""
    if name == "uar_tree":
        if bundle is None:
            raise ConfigError("policy 'uar_tree' needs a classifier bundle")
        return TreePolicy(bundle)
    if name.startswith("single:"):
        if bundle is None:
            raise ConfigError(f"policy {name!r} needs a classifier bundle")
        scenario_name = name.split(":", 1)[1]
        try:
            scenario = Scenario(scenario_name)
        except ValueError:
            raise ConfigError(f"unknown criterion {scenario_name!r} in policy {name!r}") from None
        if scenario not in CRITERION_SCENARIOS:
            raise ConfigError(f"policy {name!r} must name one of the four criteria")
        return SinglePolicy(bundle.classifiers()[scenario])
    if name == "always":
        return ConstantPolicy(True)
    if name == "never":
        return ConstantPolicy(False)
    if name == "confidence_threshold":
        if theta is None:
            raise ConfigError("policy 'confidence_threshold' needs a theta (or preset '7b'/'13b')")
        return ThresholdPolicy(theta)
    raise ConfigError(f"unknown policy {name!r}")
