"""Builds the four criterion training sets and the balanced evaluation suite
from labeled source pools, including model-specific self-knowledge labeling.

Recipes, all deterministic given (pools, seed):

self-aware     sample the model k times per question; a question it answers
               correctly every time is "known" (no retrieval needed), anything
               else "unknown" (retrieval). Known/unknown pools then become a
               stratified 90/10 train/valid split.
time-aware     time-sensitive questions vs an equal-size seeded downsample of
               a static pool.
knowledge-aware  knowledge-intensive vs not; requested validation counts are
               drawn first, the remainder trains.
intent-aware   half the inputs (floor) get an explicit retrieval-intent phrase
               concatenated, alternating before/after placement by output
               index parity starting with before; those are the positives.
bench suite    four balanced subtasks drawn without replacement across
               subtasks, never overlapping the supplied training-id set.

Self-knowledge labels depend on the model that produced the samples, so the
model tag travels with every self-aware artifact and suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from uar.errors import (
    ConfigError,
    DegenerateLabels,
    DuplicateId,
    EmptyIntentList,
    EmptyPool,
    IoFailure,
    MalformedRecord,
    OverlapWithTraining,
    PoolTooSmall,
    UnbalancedSubtask,
    UarError,
)
from uar.features import CRITERION_SCENARIOS, Label, Scenario
from uar.rag import GenerationClient, SamplingParams, lexical_match

SOURCE_TRIVIA_QA = "trivia_qa"
SOURCE_TAQA = "taqa"
SOURCE_SELF_RAG_NONRET = "self_rag_nonret"

KNOWN = "known"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class QaItem:
    id: str
    question: str
    gold_answers: tuple[str, ...] = ()
    source: str = "other"

    def __post_init__(self) -> None:
        if not self.id:
            raise MalformedRecord("QA item with empty id")
        if not self.question:
            raise MalformedRecord(f"QA item {self.id!r} has an empty question")
        if not self.gold_answers and self.source != SOURCE_SELF_RAG_NONRET:
            raise MalformedRecord(
                f"QA item {self.id!r} (source {self.source!r}) needs at least one gold answer"
            )


@dataclass(frozen=True)
class IntentPhrase:
    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise MalformedRecord(f"intent phrase {self.id!r} has empty text")


@dataclass(frozen=True)
class Provenance:
    source_ids: tuple[str, ...]
    intent_id: str | None = None
    intent_position: str | None = None  # "before" | "after" | None
    model_tag: str | None = None

    def __post_init__(self) -> None:
        if self.intent_position not in (None, "before", "after"):
            raise MalformedRecord(f"bad intent_position {self.intent_position!r}")
        if (self.intent_id is None) != (self.intent_position is None):
            raise MalformedRecord("intent_id and intent_position must be set together")


@dataclass(frozen=True)
class ForgedExample:
    id: str
    text: str
    scenario: Scenario
    label: Label
    provenance: Provenance

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "scenario": self.scenario.value,
            "label": self.label.value,
            "provenance": {
                "source_ids": list(self.provenance.source_ids),
                "intent_id": self.provenance.intent_id,
                "intent_position": self.provenance.intent_position,
                "model_tag": self.provenance.model_tag,
            },
        }


# ---------------------------------------------------------------------------
# JSONL I/O for source pools and forged examples
# ---------------------------------------------------------------------------

def read_qa_items(path: str | Path) -> list[QaItem]:
    """QA pool format: one {"id","question","answers":[...],"source"} per line."""
    items = []
    path = Path(path)
    if not path.exists():
        raise IoFailure(f"no such file: {path}")
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            items.append(
                QaItem(
                    id=doc["id"],
                    question=doc["question"],
                    gold_answers=tuple(doc.get("answers") or ()),
                    source=doc.get("source") or "other",
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise MalformedRecord(f"{path}:{lineno}: bad QA line ({exc})") from None
    return items


def write_qa_items(items: list[QaItem], path: str | Path) -> None:
    lines = [
        json.dumps(
            {"id": it.id, "question": it.question, "answers": list(it.gold_answers), "source": it.source},
            ensure_ascii=False,
            separators=(",", ":"),
        )
        for it in items
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_intents(path: str | Path) -> list[IntentPhrase]:
    path = Path(path)
    if not path.exists():
        raise IoFailure(f"no such file: {path}")
    intents = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            intents.append(IntentPhrase(id=doc["id"], text=doc["text"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise MalformedRecord(f"{path}:{lineno}: bad intent line ({exc})") from None
    return intents


def write_forged(examples: list[ForgedExample], path: str | Path) -> None:
    lines = [json.dumps(ex.to_json_dict(), ensure_ascii=False, separators=(",", ":")) for ex in examples]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_forged(path: str | Path) -> list[ForgedExample]:
    path = Path(path)
    if not path.exists():
        raise IoFailure(f"no such file: {path}")
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            prov = doc["provenance"]
            out.append(
                ForgedExample(
                    id=doc["id"],
                    text=doc["text"],
                    scenario=Scenario(doc["scenario"]),
                    label=Label(doc["label"]),
                    provenance=Provenance(
                        source_ids=tuple(prov["source_ids"]),
                        intent_id=prov.get("intent_id"),
                        intent_position=prov.get("intent_position"),
                        model_tag=prov.get("model_tag"),
                    ),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"{path}:{lineno}: bad forged-example line ({exc})") from None
    return out


# ---------------------------------------------------------------------------
# self-knowledge labeling
# ---------------------------------------------------------------------------

@dataclass
class SelfKnowledgeResult:
    labels: dict[str, str]
    failures: dict[str, str]
    model_tag: str
    k: int
    seed: int


def label_self_knowledge(
    items: list[QaItem],
    llm: GenerationClient,
    k: int = 10,
    seed: int = 0,
    temperature: float = 1.0,
    parallelism: int = 1,
) -> SelfKnowledgeResult:
    """Sample the model k times per question; known iff every sample contains
    a gold answer lexically. Failed items land in ``failures``, never dropped
    silently. Deterministic for a deterministic client and fixed seed.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")

    def label_one(item: QaItem) -> tuple[str, str | None, str | None]:
        if not item.gold_answers:
            return item.id, None, "no gold answers to check against"
        try:
            for j in range(k):
                sampling = SamplingParams(mode="sampled", temperature=temperature, seed=seed + j)
                generation = llm.generate(item.question, sampling)
                if not lexical_match(generation, item.gold_answers):
                    return item.id, UNKNOWN, None
            return item.id, KNOWN, None
        except UarError as exc:
            return item.id, None, exc.message
        except Exception as exc:  # client bugs must not kill the whole batch
            return item.id, None, str(exc)

    if parallelism <= 1:
        results = [label_one(item) for item in items]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(label_one, items))

    labels: dict[str, str] = {}
    failures: dict[str, str] = {}
    for item_id, label, failure in results:
        if failure is not None:
            failures[item_id] = failure
        else:
            labels[item_id] = label
    return SelfKnowledgeResult(
        labels=labels,
        failures=failures,
        model_tag=getattr(llm, "model_tag", "") or "",
        k=k,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# forging recipes
# ---------------------------------------------------------------------------

def _shuffled(items: list, rng: np.random.Generator) -> list:
    return [items[i] for i in rng.permutation(len(items))]


def _holdout_count(n: int, fraction: float) -> int:
    # at least one held out when possible, never the whole group
    return min(max(1, round(n * fraction)), n - 1) if n > 1 else 0


def _example(item: QaItem, scenario: Scenario, label: Label, model_tag: str | None = None) -> ForgedExample:
    return ForgedExample(
        id=item.id,
        text=item.question,
        scenario=scenario,
        label=label,
        provenance=Provenance(source_ids=(item.id,), model_tag=model_tag),
    )


def _split_groups(
    groups: list[list[ForgedExample]], valid_fraction: float, rng: np.random.Generator
) -> tuple[list[ForgedExample], list[ForgedExample]]:
    train: list[ForgedExample] = []
    valid: list[ForgedExample] = []
    for group in groups:
        shuffled = _shuffled(group, rng)
        k = _holdout_count(len(shuffled), valid_fraction)
        valid.extend(shuffled[:k])
        train.extend(shuffled[k:])
    return train, valid


def forge_self_aware(
    known: list[QaItem],
    unknown: list[QaItem],
    seed: int = 0,
    valid_fraction: float = 0.10,
    model_tag: str = "",
) -> tuple[list[ForgedExample], list[ForgedExample]]:
    """Unknown questions demand retrieval, known ones do not; 90/10 split."""
    if not known or not unknown:
        raise DegenerateLabels("self-aware forging needs both known and unknown questions")
    rng = np.random.Generator(np.random.PCG64(seed))
    groups = [
        [_example(it, Scenario.SELF, Label.RETRIEVE, model_tag) for it in unknown],
        [_example(it, Scenario.SELF, Label.NO_RETRIEVE, model_tag) for it in known],
    ]
    return _split_groups(groups, valid_fraction, rng)


def forge_time_aware(
    time_sensitive: list[QaItem],
    static_pool: list[QaItem],
    seed: int = 0,
    valid_fraction: float = 0.10,
) -> tuple[list[ForgedExample], list[ForgedExample]]:
    """Balance the two pools by downsampling the larger, seeded."""
    if not time_sensitive or not static_pool:
        raise EmptyPool("time-aware forging needs nonempty time-sensitive and static pools")
    rng = np.random.Generator(np.random.PCG64(seed))
    m = min(len(time_sensitive), len(static_pool))
    ts = _shuffled(time_sensitive, rng)[:m]
    st = _shuffled(static_pool, rng)[:m]
    groups = [
        [_example(it, Scenario.TIME, Label.RETRIEVE) for it in ts],
        [_example(it, Scenario.TIME, Label.NO_RETRIEVE) for it in st],
    ]
    return _split_groups(groups, valid_fraction, rng)


def forge_knowledge_aware(
    non_ki: list[QaItem],
    ki: list[QaItem],
    valid_counts: tuple[int, int],
    seed: int = 0,
) -> tuple[list[ForgedExample], list[ForgedExample]]:
    """Draw the requested validation counts first; everything else trains.

    ``valid_counts`` is (non-knowledge-intensive, knowledge-intensive).
    """
    if not non_ki or not ki:
        raise EmptyPool("knowledge-aware forging needs both pools nonempty")
    want_non_ki, want_ki = valid_counts
    if want_non_ki < 0 or want_ki < 0:
        raise ConfigError(f"validation counts must be nonnegative, got {valid_counts}")
    if want_non_ki > len(non_ki):
        raise PoolTooSmall(
            f"non-knowledge-intensive pool has {len(non_ki)} items, {want_non_ki} requested for validation"
        )
    if want_ki > len(ki):
        raise PoolTooSmall(
            f"knowledge-intensive pool has {len(ki)} items, {want_ki} requested for validation"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    nk = _shuffled(non_ki, rng)
    k = _shuffled(ki, rng)
    valid = [_example(it, Scenario.KNOWLEDGE, Label.NO_RETRIEVE) for it in nk[:want_non_ki]]
    valid += [_example(it, Scenario.KNOWLEDGE, Label.RETRIEVE) for it in k[:want_ki]]
    train = [_example(it, Scenario.KNOWLEDGE, Label.NO_RETRIEVE) for it in nk[want_non_ki:]]
    train += [_example(it, Scenario.KNOWLEDGE, Label.RETRIEVE) for it in k[want_ki:]]
    return train, valid


def _attach_intents(
    inputs: list[QaItem],
    intents: list[IntentPhrase],
    rng: np.random.Generator,
    scenario: Scenario,
) -> list[ForgedExample]:
    """First floor(n/2) of the (already shuffled) inputs get an intent phrase,
    alternating before/after placement by output index, starting before."""
    n_with = len(inputs) // 2
    if n_with > 0 and not intents:
        raise EmptyIntentList("intent attachment needs at least one intent phrase")
    if n_with > 0:
        if len(intents) >= n_with:
            picks = [intents[i] for i in rng.permutation(len(intents))[:n_with]]
        else:  # sample with replacement only when the list is shorter than needed
            picks = [intents[i] for i in rng.integers(0, len(intents), size=n_with)]
    else:
        picks = []
    out: list[ForgedExample] = []
    for index, item in enumerate(inputs):
        if index < n_with:
            intent = picks[index]
            position = "before" if index % 2 == 0 else "after"
            text = f"{intent.text} {item.question}" if position == "before" else f"{item.question} {intent.text}"
            out.append(
                ForgedExample(
                    id=item.id,
                    text=text,
                    scenario=scenario,
                    label=Label.RETRIEVE,
                    provenance=Provenance(
                        source_ids=(item.id,), intent_id=intent.id, intent_position=position
                    ),
                )
            )
        else:
            out.append(_example(item, scenario, Label.NO_RETRIEVE))
    return out


def forge_intent_aware(
    base_inputs: list[QaItem],
    intents: list[IntentPhrase],
    seed: int = 0,
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> tuple[list[ForgedExample], list[ForgedExample], list[ForgedExample]]:
    """Half the inputs gain an explicit retrieval intent; three-way split."""
    if not base_inputs:
        raise EmptyPool("intent-aware forging needs a nonempty input pool")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ConfigError(f"fractions must be three nonnegative values summing to 1, got {fractions}")
    rng = np.random.Generator(np.random.PCG64(seed))
    shuffled = _shuffled(base_inputs, rng)
    examples = _attach_intents(shuffled, intents, rng, Scenario.INTENT)
    by_label = {
        Label.RETRIEVE: [e for e in examples if e.label is Label.RETRIEVE],
        Label.NO_RETRIEVE: [e for e in examples if e.label is Label.NO_RETRIEVE],
    }
    train: list[ForgedExample] = []
    valid: list[ForgedExample] = []
    test: list[ForgedExample] = []
    for group in (by_label[Label.RETRIEVE], by_label[Label.NO_RETRIEVE]):
        n = len(group)
        shuffled_group = _shuffled(group, rng)
        n_test = round(n * fractions[2]) if n > 1 else 0
        n_valid = round(n * fractions[1]) if n > 1 else 0
        n_test = min(n_test, max(n - 1, 0))
        n_valid = min(n_valid, max(n - n_test - 1, 0))
        test.extend(shuffled_group[:n_test])
        valid.extend(shuffled_group[n_test : n_test + n_valid])
        train.extend(shuffled_group[n_test + n_valid :])
    return train, valid, test


# ---------------------------------------------------------------------------
# evaluation suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchPools:
    """Source pools feeding the suite recipes."""

    known: list[QaItem]
    unknown: list[QaItem]
    time_sensitive: list[QaItem]
    non_ki: list[QaItem]
    intents: list[IntentPhrase]


@dataclass
class BenchSuite:
    subtasks: dict[Scenario, list[ForgedExample]]
    meta: dict

    def validate(self) -> None:
        seen: set[str] = set()
        for scenario in CRITERION_SCENARIOS:
            if scenario not in self.subtasks:
                raise UnbalancedSubtask(f"suite is missing the {scenario.value!r} subtask")
            examples = self.subtasks[scenario]
            pos = sum(1 for e in examples if e.label is Label.RETRIEVE)
            neg = len(examples) - pos
            if pos != neg:
                raise UnbalancedSubtask(
                    f"subtask {scenario.value!r} has {pos} retrieve vs {neg} no-retrieve examples"
                )
            for example in examples:
                if example.id in seen:
                    raise DuplicateId(f"example id {example.id!r} appears twice in the suite")
                seen.add(example.id)
                if example.scenario is not scenario:
                    raise MalformedRecord(
                        f"example {example.id!r} tagged {example.scenario.value!r} "
                        f"inside the {scenario.value!r} subtask"
                    )

    def save_dir(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for scenario in CRITERION_SCENARIOS:
            write_forged(self.subtasks[scenario], directory / f"{scenario.value}.jsonl")
        meta_text = json.dumps(self.meta, ensure_ascii=False, sort_keys=True, indent=2) + "\n"
        (directory / "meta.json").write_text(meta_text, encoding="utf-8")

    @classmethod
    def load_dir(cls, directory: str | Path) -> "BenchSuite":
        directory = Path(directory)
        if not directory.is_dir():
            raise IoFailure(f"no such directory: {directory}")
        subtasks = {}
        for scenario in CRITERION_SCENARIOS:
            path = directory / f"{scenario.value}.jsonl"
            if not path.exists():
                raise IoFailure(f"suite directory is missing {path.name}")
            subtasks[scenario] = read_forged(path)
        meta_path = directory / "meta.json"
        if not meta_path.exists():
            raise IoFailure("suite directory is missing meta.json")
        suite = cls(subtasks=subtasks, meta=json.loads(meta_path.read_text(encoding="utf-8")))
        suite.validate()
        return suite


def _draw(pool: list[QaItem], want: int, name: str, rng: np.random.Generator) -> tuple[list[QaItem], list[QaItem]]:
    if want > len(pool):
        raise PoolTooSmall(f"pool {name!r} has {len(pool)} items but the recipe needs {want}")
    shuffled = _shuffled(pool, rng)
    return shuffled[:want], shuffled[want:]


def build_ar_bench(
    pools: BenchPools,
    count_per_subtask: int,
    seed: int = 0,
    exclude_ids: frozenset[str] | set[str] = frozenset(),
    model_tag: str = "",
) -> BenchSuite:
    """Assemble the four balanced subtasks without reusing any source item.

    Per subtask of size n: self = n/2 unknown + n/2 known; time = n/2
    time-sensitive + n/2 known; knowledge = (n/4 time-sensitive + n/4
    unknown) + n/2 non-knowledge-intensive; intent = n/2 known + n/2
    non-knowledge-intensive inputs, half of them carrying intent phrases.
    """
    n = count_per_subtask
    if n < 4 or n % 4 != 0:
        raise UnbalancedSubtask(
            f"count_per_subtask must be a positive multiple of 4 for exact balance, got {n}"
        )
    half, quarter = n // 2, n // 4
    rng = np.random.Generator(np.random.PCG64(seed))

    # draw disjointly, in a fixed documented order
    known_self, known_rest = _draw(pools.known, half, "known", rng)
    known_time, known_rest = _draw(known_rest, half, "known", rng)
    known_intent, _ = _draw(known_rest, half, "known", rng)
    unknown_self, unknown_rest = _draw(pools.unknown, half, "unknown", rng)
    unknown_knowledge, _ = _draw(unknown_rest, quarter, "unknown", rng)
    ts_time, ts_rest = _draw(pools.time_sensitive, half, "time_sensitive", rng)
    ts_knowledge, _ = _draw(ts_rest, quarter, "time_sensitive", rng)
    nonki_knowledge, nonki_rest = _draw(pools.non_ki, half, "non_ki", rng)
    nonki_intent, _ = _draw(nonki_rest, half, "non_ki", rng)

    drawn = (
        known_self + known_time + known_intent
        + unknown_self + unknown_knowledge
        + ts_time + ts_knowledge
        + nonki_knowledge + nonki_intent
    )
    overlap = sorted({it.id for it in drawn} & set(exclude_ids))
    if overlap:
        raise OverlapWithTraining(overlap)

    self_task = [_example(it, Scenario.SELF, Label.RETRIEVE, model_tag) for it in unknown_self]
    self_task += [_example(it, Scenario.SELF, Label.NO_RETRIEVE, model_tag) for it in known_self]

    time_task = [_example(it, Scenario.TIME, Label.RETRIEVE) for it in ts_time]
    time_task += [_example(it, Scenario.TIME, Label.NO_RETRIEVE) for it in known_time]

    knowledge_task = [_example(it, Scenario.KNOWLEDGE, Label.RETRIEVE) for it in ts_knowledge]
    knowledge_task += [_example(it, Scenario.KNOWLEDGE, Label.RETRIEVE) for it in unknown_knowledge]
    knowledge_task += [_example(it, Scenario.KNOWLEDGE, Label.NO_RETRIEVE) for it in nonki_knowledge]

    intent_inputs = _shuffled(known_intent + nonki_intent, rng)
    intent_task = _attach_intents(intent_inputs, pools.intents, rng, Scenario.INTENT)

    suite = BenchSuite(
        subtasks={
            Scenario.INTENT: intent_task,
            Scenario.KNOWLEDGE: knowledge_task,
            Scenario.TIME: time_task,
            Scenario.SELF: self_task,
        },
        meta={
            "model_tag": model_tag,
            "seed": seed,
            "counts": {s.value: n for s in CRITERION_SCENARIOS},
        },
    )
    suite.validate()
    return suite


def recompute_label(example: ForgedExample, pools: BenchPools) -> Label:
    """Re-derive an example's label from provenance and pool membership alone;
    the soundness oracle for every recipe above."""
    if example.scenario is Scenario.INTENT:
        return Label.RETRIEVE if example.provenance.intent_id is not None else Label.NO_RETRIEVE
    source_id = example.provenance.source_ids[0]
    if example.scenario is Scenario.SELF:
        unknown_ids = {it.id for it in pools.unknown}
        return Label.RETRIEVE if source_id in unknown_ids else Label.NO_RETRIEVE
    if example.scenario is Scenario.TIME:
        ts_ids = {it.id for it in pools.time_sensitive}
        return Label.RETRIEVE if source_id in ts_ids else Label.NO_RETRIEVE
    if example.scenario is Scenario.KNOWLEDGE:
        non_ki_ids = {it.id for it in pools.non_ki}
        return Label.NO_RETRIEVE if source_id in non_ki_ids else Label.RETRIEVE
    raise ConfigError(f"cannot recompute a label for scenario {example.scenario.value!r}")
