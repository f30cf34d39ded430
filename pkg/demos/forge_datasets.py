"""
Forging training pools into datasets
====================================

Walk the four dataset recipes end to end with scripted fixtures: label a pool
by self-knowledge, then forge each scenario's train/valid examples, then build
a balanced held-out suite that provably shares no source items with training.
"""

import numpy as np

from uar.forge import (
    BenchPools,
    IntentPhrase,
    QaItem,
    SOURCE_SELF_RAG_NONRET,
    SOURCE_TAQA,
    build_ar_bench,
    forge_intent_aware,
    forge_knowledge_aware,
    forge_self_aware,
    forge_time_aware,
    label_self_knowledge,
    recompute_label,
)
from uar.rag import ScriptedGenerator


def qa(prefix, n, source="trivia_qa"):
    return [
        QaItem(id=f"{prefix}-{i:04d}", question=f"Question {prefix} {i}?",
               gold_answers=(f"gold-{prefix}-{i}",), source=source)
        for i in range(n)
    ]


def instructions(prefix, n):
    return [
        QaItem(id=f"{prefix}-{i:04d}", question=f"Rewrite sentence {i} politely.",
               source=SOURCE_SELF_RAG_NONRET)
        for i in range(n)
    ]


# a scripted model that knows the even questions and fumbles the odd ones
pool = qa("sk", 20)
responses = {}
for i, item in enumerate(pool):
    good = f"The answer is {item.gold_answers[0]}."
    responses[item.question] = [good] * 10 if i % 2 == 0 else ["No idea."] * 10
model = ScriptedGenerator(responses_by_prompt=responses, model_tag="demo-7b")

labeling = label_self_knowledge(pool, model, k=10, seed=0)
known = [x for x in pool if labeling.labels[x.id] == "known"]
unknown = [x for x in pool if labeling.labels[x.id] == "unknown"]
print(f"self-knowledge: {len(known)} known, {len(unknown)} unknown")

train, valid = forge_self_aware(known, unknown, seed=0, model_tag=labeling.model_tag)
print(f"self-aware: {len(train)} train / {len(valid)} valid, "
      f"first example label {train[0].label.value}")

train, valid = forge_time_aware(qa("ts", 12, source=SOURCE_TAQA), qa("st", 30), seed=0)
print(f"time-aware: {len(train)} train / {len(valid)} valid (downsampled to balance)")

train, valid = forge_knowledge_aware(instructions("nk", 16), qa("ki", 16), valid_counts=(2, 2), seed=0)
print(f"knowledge-aware: {len(train)} train / {len(valid)} valid")

intents = [IntentPhrase(id=f"ip-{i}", text=f"Please cite source {i}.") for i in range(6)]
train, valid, test = forge_intent_aware(qa("base", 20), intents, seed=0)
flagged = [x for x in train if x.provenance.intent_id is not None]
print(f"intent-aware: {len(train)}/{len(valid)}/{len(test)} split, "
      f"{len(flagged)} training examples carry an intent phrase")
print(f"  e.g. {flagged[0].text!r}")

# the held-out suite draws fresh items and checks overlap against exclusions
pools = BenchPools(
    known=qa("kn", 60),
    unknown=qa("un", 30),
    time_sensitive=qa("tsb", 30, source=SOURCE_TAQA),
    non_ki=instructions("nkb", 40),
    intents=intents,
)
suite = build_ar_bench(pools, count_per_subtask=40, seed=3, model_tag="demo-7b")
suite.validate()
for scenario, examples in suite.subtasks.items():
    retrieve = sum(1 for x in examples if x.label.value == "retrieve")
    print(f"subtask {scenario.value:9s} {len(examples)} examples, {retrieve} retrieve")

sound = all(
    recompute_label(x, pools) is x.label
    for examples in suite.subtasks.values()
    for x in examples
)
print(f"labels re-derivable from provenance alone: {sound}")

rerun = build_ar_bench(pools, count_per_subtask=40, seed=3, model_tag="demo-7b")
print(f"same seed, same suite: {rerun.subtasks == suite.subtasks}")
