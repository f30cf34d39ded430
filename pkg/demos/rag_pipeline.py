"""
Gated generation exchanges
==========================

Run question-answering exchanges where the gate decides, per question, whether
the retriever is consulted at all. Fixture clients keep it fully offline.
"""

from uar.gate import ConstantPolicy
from uar.rag import (
    FixtureRetriever,
    Passage,
    ScriptedGenerator,
    assemble_prompt,
    lexical_match,
    run_exchange,
)

# prompt assembly is pure string work, shown here before any client enters
passages = [Passage(rank=1, text="Paris is the capital of France."),
            Passage(rank=2, text="France borders Belgium.")]
print(assemble_prompt("What is the capital of France?", passages))
print("-" * 60)

retriever = FixtureRetriever()  # unknown queries get deterministic passages
generator = ScriptedGenerator(default_responses=["The answer is Paris."])

questions = [f"Capital question number {i}?" for i in range(6)]

for policy in (ConstantPolicy(False), ConstantPolicy(True)):
    retriever.calls = 0
    exchanges = [
        run_exchange(
            id=f"q-{i}",
            question=q,
            policy=policy,
            retriever=retriever,
            generator=generator,
            gold_answers=("Paris",),
            dataset="demo",
        )
        for i, q in enumerate(questions)
    ]
    correct = sum(lexical_match(x.generation, x.gold_answers) for x in exchanges)
    print(f"policy {policy.name:7s}: retriever calls {retriever.calls}, "
          f"passages on first exchange {len(exchanges[0].passages)}, "
          f"correct {correct}/{len(exchanges)}")

# each exchange carries everything downstream scoring needs
x = exchanges[0]
print(f"\nexchange {x.id}: decision={x.decision.final.value} prompt bytes={len(x.prompt)}")
print(f"generation: {x.generation!r}")
