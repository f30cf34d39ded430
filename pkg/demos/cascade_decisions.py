"""
The four-head decision cascade
==============================

Hand-build four affine heads that key on one coordinate each, compose them in
priority order, and trace which heads a decision actually consulted.
"""

import numpy as np

from uar.classifier import LinearClassifier
from uar.gate import (
    ConstantPolicy,
    GateBundle,
    SinglePolicy,
    TokenProbTrace,
    TreePolicy,
    decide_threshold,
    decide_tree,
)
from uar.features import Scenario


def head(scenario, axis):
    # logit[1] - logit[0] = 2 * x[axis], so the head fires exactly when x[axis] > 0
    weights = np.zeros((2, 4))
    weights[0, axis] = -1.0
    weights[1, axis] = 1.0
    return LinearClassifier(scenario=scenario, weights=weights, bias=np.zeros(2))


bundle = GateBundle(
    intent_clf=head(Scenario.INTENT, 0),
    knowledge_clf=head(Scenario.KNOWLEDGE, 1),
    time_clf=head(Scenario.TIME, 2),
    self_clf=head(Scenario.SELF, 3),
)

cases = {
    "explicit intent": np.array([4.0, -4.0, -4.0, -4.0]),
    "not knowledge-intensive": np.array([-4.0, -4.0, 4.0, 4.0]),
    "time-sensitive": np.array([-4.0, 4.0, 4.0, -4.0]),
    "model already knows": np.array([-4.0, 4.0, -4.0, -4.0]),
    "model does not know": np.array([-4.0, 4.0, -4.0, 4.0]),
}

for name, vector in cases.items():
    decision = decide_tree(bundle, vector)
    chain = " -> ".join(s.value for s in decision.evaluated)
    print(f"{name:26s} {decision.final.value:12s} consulted: {chain}")

# the same bundle through the policy objects the service and CLI use
print()
for policy in (TreePolicy(bundle), SinglePolicy(bundle.time_clf), ConstantPolicy(True)):
    decision = policy.decide(vector=cases["time-sensitive"])
    print(f"{policy.name:14s} -> {decision.final.value}")

# threshold gating consumes a draft's token probabilities instead of a vector
shaky = TokenProbTrace(probs=(0.93, 0.04, 0.88))
confident = TokenProbTrace(probs=(0.93, 0.88, 0.91))
print()
print(f"min prob 0.04 vs theta 0.05: {decide_threshold(shaky, 0.05).final.value}")
print(f"min prob 0.88 vs theta 0.05: {decide_threshold(confident, 0.05).final.value}")

# every decision serializes to one JSON line for logs and the wire
print()
print(decide_tree(bundle, cases["model does not know"]).to_json())
