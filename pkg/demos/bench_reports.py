"""
Scoring gates and rendering reports
===================================

Evaluate a gate bundle on labeled feature subtasks, compare each standalone
head against the composed cascade, then score generation exchanges and render
both report kinds as canonical JSON and as Markdown tables.
"""

import tempfile
from pathlib import Path

import numpy as np

from uar.bench import (
    eval_ar_bench,
    eval_single_vs_tree,
    render_markdown,
    emit_report,
    score_downstream,
)
from uar.classifier import LinearClassifier
from uar.features import FeatureDataset, FeatureRecord, Label, Scenario
from uar.gate import ConstantPolicy, GateBundle, TreePolicy, decide_constant
from uar.rag import RagExchange

rng = np.random.Generator(np.random.PCG64(11))


def head(scenario):
    weights = np.zeros((2, 4))
    weights[1, 0] = 1.0  # fires when x[0] > 0
    return LinearClassifier(scenario=scenario, weights=weights, bias=np.zeros(2))


bundle = GateBundle(
    intent_clf=head(Scenario.INTENT),
    knowledge_clf=head(Scenario.KNOWLEDGE),
    time_clf=head(Scenario.TIME),
    self_clf=head(Scenario.SELF),
)


def subtask(scenario, n=40):
    records = []
    for i in range(n):
        positive = i % 2 == 0
        vec = rng.normal(scale=0.3, size=4)
        vec[0] = 2.0 if positive else -2.0
        records.append(
            FeatureRecord(id=f"{scenario.value}-{i:03d}", vector=vec.astype(np.float32),
                          scenario=scenario, label=Label.RETRIEVE if positive else Label.NO_RETRIEVE)
        )
    return FeatureDataset(dim=4, records=records)


suite = {s: subtask(s) for s in (Scenario.INTENT, Scenario.KNOWLEDGE, Scenario.TIME, Scenario.SELF)}

report = eval_ar_bench(TreePolicy(bundle), suite, model_tag="demo-7b")
print(render_markdown(report))

naive = eval_ar_bench(ConstantPolicy(True), suite, model_tag="demo-7b")
print(f"always-retrieve baseline overall: {naive.overall:.4f} vs gate {report.overall:.4f}\n")

for scenario, row in eval_single_vs_tree(bundle, suite).items():
    print(f"{scenario:9s} single {row['single_accuracy']:.3f}  composed {row['tree_accuracy']:.3f}")

# downstream: the same accounting over generation exchanges
exchanges = []
for i in range(10):
    retrieved = i % 3 == 0
    answer = "Paris" if i % 4 else "Lyon"
    exchanges.append(
        RagExchange(
            id=f"dq-{i:03d}",
            question=f"Downstream question {i}?",
            decision=decide_constant(retrieved),
            passages=[],
            prompt=f"Downstream question {i}?",
            generation=f"The answer is {answer}.",
            gold_answers=("Paris",),
            dataset="qa_demo",
            empty_retrieval=retrieved,
        )
    )

downstream = score_downstream(exchanges, scoring="lexical")
print()
print(render_markdown(downstream))

# canonical JSON: sorted keys, trailing newline, byte-stable across runs
out = Path(tempfile.mkdtemp()) / "bench.json"
emit_report(report, out)
print(f"wrote {out.stat().st_size} canonical bytes to {out.name}")
