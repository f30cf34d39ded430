import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uar.classifier import LinearClassifier
from uar.errors import ConfigError, DimensionMismatch, EmptyTrace, IoFailure
from uar.features import CRITERION_SCENARIOS, Label, Scenario
from uar.gate import (
    THRESHOLD_PRESETS,
    GateBundle,
    TokenProbTrace,
    decide_constant,
    decide_single,
    decide_threshold,
    decide_tree,
)

DIM = 3


def const_clf(scenario, retrieve):
    bias = [0.0, 1.0] if retrieve else [1.0, 0.0]
    return LinearClassifier(scenario=scenario, weights=np.zeros((2, DIM)), bias=np.array(bias, float))


def const_bundle(i, k, t, s):
    return GateBundle(
        intent_clf=const_clf(Scenario.INTENT, i),
        knowledge_clf=const_clf(Scenario.KNOWLEDGE, k),
        time_clf=const_clf(Scenario.TIME, t),
        self_clf=const_clf(Scenario.SELF, s),
    )


def random_clf(scenario, rng):
    return LinearClassifier(
        scenario=scenario,
        weights=rng.standard_normal((2, DIM)),
        bias=rng.standard_normal(2),
    )


def random_bundle(rng):
    return GateBundle(
        intent_clf=random_clf(Scenario.INTENT, rng),
        knowledge_clf=random_clf(Scenario.KNOWLEDGE, rng),
        time_clf=random_clf(Scenario.TIME, rng),
        self_clf=random_clf(Scenario.SELF, rng),
    )


X = np.zeros(DIM)


def nested_if_oracle(i, k, t, s):
    # independent restatement of the cascade as plain nested ifs
    if i:
        return True
    if not k:
        return False
    if t:
        return True
    return s


# ---------------------------------------------------------------------------
# tree semantics
# ---------------------------------------------------------------------------

def test_intent_fires_first():
    decision = decide_tree(const_bundle(True, False, False, False), X)
    assert decision.final is Label.RETRIEVE
    assert decision.evaluated == (Scenario.INTENT,)
    assert set(decision.criteria) == {Scenario.INTENT}


def test_non_knowledge_intensive_stops_retrieval():
    decision = decide_tree(const_bundle(False, False, True, True), X)
    assert decision.final is Label.NO_RETRIEVE
    assert decision.evaluated == (Scenario.INTENT, Scenario.KNOWLEDGE)


def test_time_sensitive_forces_retrieval():
    decision = decide_tree(const_bundle(False, True, True, False), X)
    assert decision.final is Label.RETRIEVE
    assert decision.evaluated == (Scenario.INTENT, Scenario.KNOWLEDGE, Scenario.TIME)


def test_full_path_ends_on_self_verdict():
    known = decide_tree(const_bundle(False, True, False, False), X)
    assert known.final is Label.NO_RETRIEVE
    assert len(known.evaluated) == 4
    unknown = decide_tree(const_bundle(False, True, False, True), X)
    assert unknown.final is Label.RETRIEVE
    assert len(unknown.evaluated) == 4


def test_exhaustive_truth_table_matches_nested_if_oracle():
    for i, k, t, s in itertools.product([False, True], repeat=4):
        decision = decide_tree(const_bundle(i, k, t, s), X)
        want = nested_if_oracle(i, k, t, s)
        assert (decision.final is Label.RETRIEVE) == want, (i, k, t, s)
        # no criterion consulted after the decision was reached
        expected_depth = 1 if i else (2 if not k else (3 if t else 4))
        assert len(decision.evaluated) == expected_depth, (i, k, t, s)
        assert decision.evaluated == CRITERION_SCENARIOS[:expected_depth]


def test_short_circuit_fuzz_unconsulted_heads_cannot_matter():
    rng = np.random.Generator(np.random.PCG64(5))
    for _ in range(100):
        bundle = random_bundle(rng)
        x = rng.standard_normal(DIM)
        decision = decide_tree(bundle, x)
        consulted = set(decision.evaluated)
        heads = dict(bundle.classifiers())
        for scenario in CRITERION_SCENARIOS:
            if scenario not in consulted:
                heads[scenario] = random_clf(scenario, rng)
        scrambled = GateBundle.from_classifiers(list(heads.values()))
        redo = decide_tree(scrambled, x)
        assert redo.final is decision.final
        assert redo.evaluated == decision.evaluated


def test_positive_scaling_preserves_every_decision():
    rng = np.random.Generator(np.random.PCG64(9))
    for _ in range(25):
        bundle = random_bundle(rng)
        x = rng.standard_normal(DIM)
        base = decide_tree(bundle, x, eager=True)
        for c in (0.25, 4.0, 1000.0):
            heads = bundle.classifiers()
            scaled = GateBundle.from_classifiers(
                [
                    LinearClassifier(scenario=s, weights=clf.weights * c, bias=clf.bias * c)
                    for s, clf in heads.items()
                ]
            )
            redo = decide_tree(scaled, x, eager=True)
            assert redo.final is base.final
            assert redo.evaluated == base.evaluated
            for scenario in CRITERION_SCENARIOS:
                assert redo.criteria[scenario].verdict is base.criteria[scenario].verdict


def test_decide_tree_is_pure():
    rng = np.random.Generator(np.random.PCG64(3))
    bundle = random_bundle(rng)
    x = rng.standard_normal(DIM)
    assert decide_tree(bundle, x) == decide_tree(bundle, x)


def test_eager_mode_scores_every_head_but_keeps_the_path():
    decision = decide_tree(const_bundle(True, False, False, False), X, eager=True)
    assert decision.evaluated == (Scenario.INTENT,)
    assert set(decision.criteria) == set(CRITERION_SCENARIOS)
    assert decision.final is Label.RETRIEVE


def test_injectable_order():
    # self first: its retrieve verdict ends the walk immediately
    bundle = const_bundle(False, True, False, True)
    decision = decide_tree(bundle, X, order=[Scenario.SELF, Scenario.TIME, Scenario.KNOWLEDGE, Scenario.INTENT])
    assert decision.final is Label.RETRIEVE
    assert decision.evaluated == (Scenario.SELF,)
    with pytest.raises(ConfigError):
        decide_tree(bundle, X, order=[Scenario.SELF, Scenario.SELF, Scenario.TIME, Scenario.INTENT])
    with pytest.raises(ConfigError):
        decide_tree(bundle, X, order=[Scenario.SELF])


def test_per_head_threshold_override_defaults_off():
    # head leans retrieve with prob just over 0.5
    bundle = const_bundle(True, True, True, True)
    plain = decide_tree(bundle, X)
    assert plain.final is Label.RETRIEVE
    # demanding intent prob > 0.9 suppresses the first firing; knowledge=R,
    # time=R then fires instead, so the final still retrieves but later
    raised = decide_tree(bundle, X, thresholds={Scenario.INTENT: 0.9})
    assert raised.evaluated[0] is Scenario.INTENT
    assert len(raised.evaluated) > 1
    # lowering the knowledge bar on a no-retrieve head flips its gate verdict
    nk = const_bundle(False, False, False, False)
    assert decide_tree(nk, X).final is Label.NO_RETRIEVE
    lowered = decide_tree(nk, X, thresholds={Scenario.KNOWLEDGE: 0.1})
    assert lowered.final is Label.NO_RETRIEVE  # knowledge passes, then self says no
    assert len(lowered.evaluated) == 4


# ---------------------------------------------------------------------------
# single / constant / threshold policies
# ---------------------------------------------------------------------------

def test_single_criterion_semantics():
    unknown = decide_single(const_clf(Scenario.SELF, True), X)
    assert unknown.final is Label.RETRIEVE
    assert unknown.policy == "single:self"
    assert unknown.evaluated == (Scenario.SELF,)
    non_ki = decide_single(const_clf(Scenario.KNOWLEDGE, False), X)
    assert non_ki.final is Label.NO_RETRIEVE
    assert non_ki.policy == "single:knowledge"


@settings(max_examples=64, deadline=None)
@given(v=st.booleans())
def test_agreement_property(v):
    bundle = const_bundle(v, v, v, v)
    singles = {decide_single(clf, X).final for clf in bundle.classifiers().values()}
    assert len(singles) == 1
    assert decide_tree(bundle, X).final is singles.pop()


def test_threshold_gate_examples():
    assert decide_threshold(TokenProbTrace((0.9, 0.005)), 0.006).final is Label.RETRIEVE
    assert decide_threshold(TokenProbTrace((1.0,)), 0.999).final is Label.NO_RETRIEVE
    # strict inequality at the boundary
    assert decide_threshold(TokenProbTrace((0.02,)), 0.02).final is Label.NO_RETRIEVE


def test_threshold_presets():
    assert THRESHOLD_PRESETS == {"7b": 0.006, "13b": 0.02}


def test_threshold_gate_validation():
    with pytest.raises(EmptyTrace):
        TokenProbTrace(())
    with pytest.raises(ValueError):
        TokenProbTrace((0.5, 0.0))
    with pytest.raises(ValueError):
        TokenProbTrace((1.5,))
    with pytest.raises(ConfigError):
        decide_threshold(TokenProbTrace((0.5,)), 1.0)


def test_constant_policies():
    assert decide_constant(True).final is Label.RETRIEVE
    assert decide_constant(True).policy == "always"
    assert decide_constant(False).final is Label.NO_RETRIEVE
    assert decide_constant(False).policy == "never"


def test_policy_objects_mirror_decide_functions():
    from uar.gate import ConstantPolicy, SinglePolicy, ThresholdPolicy, TreePolicy, policy_from_string

    bundle = const_bundle(False, True, False, True)
    assert TreePolicy(bundle).decide(vector=X) == decide_tree(bundle, X)
    assert SinglePolicy(bundle.self_clf).decide(vector=X) == decide_single(bundle.self_clf, X)
    assert ConstantPolicy(True).decide() == decide_constant(True)
    trace = TokenProbTrace((0.5, 0.001))
    assert ThresholdPolicy(0.006).decide(trace=trace) == decide_threshold(trace, 0.006)

    assert policy_from_string("uar_tree", bundle).name == "uar_tree"
    assert policy_from_string("single:time", bundle).name == "single:time"
    assert policy_from_string("always").name == "always"
    assert policy_from_string("never").name == "never"
    assert policy_from_string("confidence_threshold", theta=0.02).theta == 0.02
    with pytest.raises(ConfigError):
        policy_from_string("uar_tree")
    with pytest.raises(ConfigError):
        policy_from_string("single:mystery", bundle)
    with pytest.raises(ConfigError):
        policy_from_string("confidence_threshold")
    with pytest.raises(ConfigError):
        policy_from_string("sometimes")


def test_policy_objects_demand_their_input():
    from uar.gate import ThresholdPolicy, TreePolicy

    bundle = const_bundle(True, True, True, True)
    with pytest.raises(ConfigError):
        TreePolicy(bundle).decide(vector=None)
    with pytest.raises(ConfigError):
        ThresholdPolicy(0.006).decide(trace=None)


# ---------------------------------------------------------------------------
# bundle construction and persistence
# ---------------------------------------------------------------------------

def test_bundle_rejects_mistagged_slot():
    with pytest.raises(ConfigError):
        GateBundle(
            intent_clf=const_clf(Scenario.KNOWLEDGE, True),
            knowledge_clf=const_clf(Scenario.KNOWLEDGE, True),
            time_clf=const_clf(Scenario.TIME, True),
            self_clf=const_clf(Scenario.SELF, True),
        )


def test_bundle_rejects_dim_mismatch():
    wide = LinearClassifier(scenario=Scenario.SELF, weights=np.zeros((2, 5)), bias=np.zeros(2))
    with pytest.raises(DimensionMismatch):
        GateBundle(
            intent_clf=const_clf(Scenario.INTENT, True),
            knowledge_clf=const_clf(Scenario.KNOWLEDGE, True),
            time_clf=const_clf(Scenario.TIME, True),
            self_clf=wide,
        )


def test_from_classifiers_missing_and_duplicate():
    three = [const_clf(s, True) for s in CRITERION_SCENARIOS[:3]]
    with pytest.raises(ConfigError) as exc:
        GateBundle.from_classifiers(three)
    assert "self" in str(exc.value)
    dup = three + [const_clf(Scenario.INTENT, False)]
    with pytest.raises(ConfigError):
        GateBundle.from_classifiers(dup)


def test_bundle_directory_round_trip(tmp_path):
    rng = np.random.Generator(np.random.PCG64(17))
    bundle = random_bundle(rng)
    bundle.save_dir(tmp_path / "bundle")
    back = GateBundle.load_dir(tmp_path / "bundle")
    x = rng.standard_normal(DIM)
    assert decide_tree(back, x, eager=True) == decide_tree(bundle, x, eager=True)


def test_load_dir_missing_file(tmp_path):
    rng = np.random.Generator(np.random.PCG64(18))
    bundle = random_bundle(rng)
    bundle.save_dir(tmp_path / "b")
    (tmp_path / "b" / "time.json").unlink()
    with pytest.raises(IoFailure) as exc:
        GateBundle.load_dir(tmp_path / "b")
    assert "time.json" in str(exc.value)
    with pytest.raises(IoFailure):
        GateBundle.load_dir(tmp_path / "nowhere")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_decision_json_shape():
    decision = decide_tree(const_bundle(False, True, True, False), X)
    doc = json.loads(decision.to_json())
    assert set(doc) == {"final", "policy", "evaluated", "criteria"}
    assert doc["final"] == "retrieve"
    assert doc["policy"] == "uar_tree"
    assert doc["evaluated"] == ["intent", "knowledge", "time"]
    for name, entry in doc["criteria"].items():
        assert name in {"intent", "knowledge", "time"}
        assert set(entry) == {"verdict", "logits", "prob_retrieve"}
        assert entry["verdict"] in {"retrieve", "no_retrieve"}
        assert len(entry["logits"]) == 2
        assert 0.0 <= entry["prob_retrieve"] <= 1.0


def test_decision_json_is_byte_deterministic():
    rng = np.random.Generator(np.random.PCG64(23))
    bundle = random_bundle(rng)
    x = rng.standard_normal(DIM)
    assert decide_tree(bundle, x).to_json() == decide_tree(bundle, x).to_json()
