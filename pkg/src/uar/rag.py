"""Turns a gate decision into an answer: retrieval and generation client
contracts, prompt assembly, answer extraction, and lexical scoring.

Prompt templates are pinned byte-for-byte (golden files under tests/golden/).
Three families: a generic QA form, a reading-comprehension form that carries
the dataset's own passage, and a math form that asks for chain-of-thought
ending in a fixed answer marker. Each has a with-references variant that
appends the retrieved passages block; retrieved passages are joined in rank
order, one paragraph each, capped at ``top_use`` (default 5 of the 10
fetched). The math with-references head drops the final period after the
marker quote; that inconsistency is faithful to the source templates.

Lexical scoring is containment after normalization: lowercase, collapse
whitespace, strip punctuation hanging off token edges, then substring. A
stricter token-boundary mode sits behind a flag.
"""

from __future__ import annotations

import hashlib
import json
import string
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence, runtime_checkable

from uar.errors import (
    ClientFailure,
    ConfigError,
    GeneratorFailure,
    MalformedRecord,
    MarkerNotFound,
    RetrieverFailure,
)
from uar.features import Label
from uar.gate import GateDecision, GatePolicy

DEFAULT_TOP_K = 10
DEFAULT_TOP_USE = 5
ANSWER_MARKER = "The answer is"

TEMPLATES = ("generic", "drop", "gsm8k")

_REFERENCE_BLOCK = (
    "Here are some additional reference passages:\n"
    "{docs}\n"
    "\n"
    "You can refer to the content of relevant reference passages to answer the questions."
)

_JUDGE_PROMPT = (
    "In the following task, you are given a Question, a model Prediction for the Question, "
    "and a Ground-truth Answer to the Question. You should decide whether the model Prediction "
    "implies the Ground-truth Answer.\n"
    "\n"
    "Question:\n"
    "{question}\n"
    "\n"
    "Prediction:\n"
    "{prediction}\n"
    "\n"
    "Ground-truth Answer:\n"
    "{gold}\n"
    "Does the Prediction imply the Ground-truth Answer? Output Yes or No:"
)


@dataclass(frozen=True)
class Passage:
    rank: int
    text: str
    source_id: str | None = None
    score: float | None = None

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError(f"passage rank must be >= 1, got {self.rank}")
        if not self.text:
            raise ValueError("passage text must be nonempty")


@dataclass(frozen=True)
class SamplingParams:
    mode: str = "greedy"  # "greedy" or "sampled"
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("greedy", "sampled"):
            raise ConfigError(f"sampling mode must be 'greedy' or 'sampled', got {self.mode!r}")


GREEDY = SamplingParams()


# ---------------------------------------------------------------------------
# prompt assembly
# ---------------------------------------------------------------------------

def assemble_prompt(
    question: str,
    passages: Sequence[Passage] = (),
    template: str = "generic",
    drop_passage: str | None = None,
    top_use: int = DEFAULT_TOP_USE,
) -> str:
    """Build the model prompt; pure, byte-deterministic, "\\n" line endings.

    Empty ``passages`` (or ``top_use`` 0) produces the no-references form.
    The drop template requires the dataset's own passage.
    """
    if template not in TEMPLATES:
        raise ConfigError(f"unknown template {template!r} (expected one of {TEMPLATES})")
    used = [p.text for p in sorted(passages, key=lambda p: p.rank)[: max(top_use, 0)]]
    docs = "\n\n".join(used)

    if template == "generic":
        if not used:
            return question
        return f"{question}\n\n" + _REFERENCE_BLOCK.format(docs=docs) + "\nNow give me the answer."

    if template == "drop":
        if drop_passage is None:
            raise ConfigError("the drop template needs the dataset passage")
        head = (
            "Please answer the question based on the given passage.\n"
            f"Passage: {drop_passage}\n"
            f"Question: {question}"
        )
        if not used:
            return head + "\nNow give me the answer."
        return head + "\n\n" + _REFERENCE_BLOCK.format(docs=docs) + "\nNow give me the answer."

    # gsm8k
    if not used:
        return (
            "Answer the math word question step by step. Your answer needs to end with 'The answer is'.\n"
            f"Question: {question}\n"
            "Let's think step by step and give me the answer."
        )
    return (
        "Answer the math word question step by step. Your answer needs to end with 'The answer is'\n"
        f"Question: {question}\n"
        "\n" + _REFERENCE_BLOCK.format(docs=docs) + "\nLet's think step by step and give me the answer."
    )


def judge_prompt(question: str, prediction: str, gold: str) -> str:
    """The external-judge prompt, verbatim."""
    return _JUDGE_PROMPT.format(question=question, prediction=prediction, gold=gold)


# ---------------------------------------------------------------------------
# scoring primitives
# ---------------------------------------------------------------------------

def normalize_answer_text(text: str) -> str:
    """Lowercase, collapse whitespace, strip punctuation off token edges."""
    tokens = [t.strip(string.punctuation) for t in text.lower().split()]
    return " ".join(t for t in tokens if t)


def lexical_match(generation: str, gold_answers: Sequence[str], token_boundary: bool = False) -> bool:
    """True iff some gold answer is contained in the generation, normalized.

    Substring semantics by default ("Parisian" matches gold "Paris");
    ``token_boundary`` demands the gold appear as a whole token run.
    """
    if not gold_answers:
        raise ValueError("gold_answers must be nonempty")
    gen_norm = normalize_answer_text(generation)
    if token_boundary:
        gen_tokens = gen_norm.split()
        for gold in gold_answers:
            gold_tokens = normalize_answer_text(gold).split()
            if not gold_tokens:
                continue
            n = len(gold_tokens)
            if any(gen_tokens[i : i + n] == gold_tokens for i in range(len(gen_tokens) - n + 1)):
                return True
        return False
    return any(
        normalize_answer_text(g) and normalize_answer_text(g) in gen_norm for g in gold_answers
    )


def extract_final_answer(generation: str, mode: str = "verbatim", marker: str = ANSWER_MARKER) -> str:
    """Verbatim identity, or the trimmed text after the last marker occurrence."""
    if mode == "verbatim":
        return generation
    if mode != "after_marker":
        raise ConfigError(f"unknown extraction mode {mode!r}")
    index = generation.rfind(marker)
    if index < 0:
        raise MarkerNotFound(f"marker {marker!r} not found in generation")
    return generation[index + len(marker):].strip()


# ---------------------------------------------------------------------------
# client contracts
# ---------------------------------------------------------------------------

@runtime_checkable
class RetrieverClient(Protocol):
    def retrieve(self, query: str, top_k: int) -> list[Passage]: ...


@runtime_checkable
class GenerationClient(Protocol):
    def generate(self, prompt: str, sampling: SamplingParams) -> str: ...


@runtime_checkable
class JudgeClient(Protocol):
    def judge(self, question: str, prediction: str, gold: str) -> bool: ...


def _post_json(url: str, payload: dict, timeout: float):
    import requests

    response = requests.post(url, json=payload, timeout=timeout)
    response.raise_for_status()
    return response.json()


@dataclass
class HttpRetriever:
    endpoint: str
    timeout: float = 30.0

    def retrieve(self, query: str, top_k: int) -> list[Passage]:
        try:
            doc = _post_json(self.endpoint, {"query": query, "top_k": top_k}, self.timeout)
            raw = doc["passages"]
            return [
                Passage(
                    rank=entry["rank"],
                    text=entry["text"],
                    score=entry.get("score"),
                    source_id=entry.get("source_id"),
                )
                for entry in raw
            ]
        except Exception as exc:
            raise RetrieverFailure(f"retriever endpoint {self.endpoint}: {exc}") from exc


@dataclass
class HttpGenerator:
    endpoint: str
    timeout: float = 120.0
    model_tag: str = ""

    def generate(self, prompt: str, sampling: SamplingParams) -> str:
        temperature = 0.0 if sampling.mode == "greedy" else sampling.temperature
        payload = {"prompt": prompt, "temperature": temperature, "seed": sampling.seed}
        try:
            doc = _post_json(self.endpoint, payload, self.timeout)
            return doc["text"]
        except Exception as exc:
            raise GeneratorFailure(f"generator endpoint {self.endpoint}: {exc}") from exc


@dataclass
class HttpJudge:
    endpoint: str
    timeout: float = 60.0

    def judge(self, question: str, prediction: str, gold: str) -> bool:
        prompt = judge_prompt(question, prediction, gold)
        try:
            doc = _post_json(self.endpoint, {"prompt": prompt}, self.timeout)
            verdict = doc["verdict"]
        except Exception as exc:
            raise ClientFailure("judge", f"judge endpoint {self.endpoint}: {exc}") from exc
        if verdict not in ("Yes", "No"):
            raise ClientFailure("judge", f"judge returned {verdict!r}, expected 'Yes' or 'No'")
        return verdict == "Yes"


# ---------------------------------------------------------------------------
# fixture clients (deterministic, canned, call-counting)
# ---------------------------------------------------------------------------

@dataclass
class FixtureRetriever:
    """Canned passages by exact query; unknown queries get passages derived
    deterministically from the query hash. Counts every call."""

    passages_by_query: dict[str, list[Passage]] = field(default_factory=dict)
    calls: int = 0
    synthesize_unknown: bool = True

    def retrieve(self, query: str, top_k: int) -> list[Passage]:
        self.calls += 1
        if query in self.passages_by_query:
            return self.passages_by_query[query][:top_k]
        if not self.synthesize_unknown:
            return []
        digest = hashlib.sha256(query.encode("utf-8")).hexdigest()
        return [
            Passage(rank=i + 1, text=f"fixture passage {i + 1} for {digest[:12]}", score=1.0 - 0.05 * i)
            for i in range(top_k)
        ]

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "FixtureRetriever":
        table: dict[str, list[Passage]] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                table[doc["query"]] = [
                    Passage(
                        rank=p["rank"],
                        text=p["text"],
                        score=p.get("score"),
                        source_id=p.get("source_id"),
                    )
                    for p in doc["passages"]
                ]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedRecord(f"{path}:{lineno}: bad canned retrieval line ({exc})") from None
        return cls(passages_by_query=table, synthesize_unknown=False)


@dataclass
class ScriptedGenerator:
    """Canned generations keyed by exact prompt. Greedy returns the first
    response; sampled returns responses[seed mod len]. Counts every call."""

    responses_by_prompt: dict[str, list[str]] = field(default_factory=dict)
    default_responses: list[str] = field(default_factory=list)
    model_tag: str = "scripted"
    calls: int = 0

    def generate(self, prompt: str, sampling: SamplingParams) -> str:
        self.calls += 1
        responses = self.responses_by_prompt.get(prompt, self.default_responses)
        if not responses:
            raise GeneratorFailure(f"no scripted response for prompt {prompt[:80]!r}")
        if sampling.mode == "greedy":
            return responses[0]
        return responses[sampling.seed % len(responses)]

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScriptedGenerator":
        table: dict[str, list[str]] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                table[doc["prompt"]] = list(doc["responses"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedRecord(f"{path}:{lineno}: bad canned generation line ({exc})") from None
        return cls(responses_by_prompt=table)


@dataclass
class MockJudge:
    """Lookup-table judge keyed by (prediction, gold); missing keys say No."""

    table: dict[tuple[str, str], bool] = field(default_factory=dict)
    calls: int = 0

    def judge(self, question: str, prediction: str, gold: str) -> bool:
        self.calls += 1
        return self.table.get((prediction, gold), False)


class SerializingAdapter:
    """Wraps any client so concurrent callers take turns."""

    def __init__(self, inner):
        self._inner = inner
        self._lock = threading.Lock()

    def __getattr__(self, name):
        attr = getattr(self._inner, name)
        if not callable(attr):
            return attr

        def locked(*args, **kwargs):
            with self._lock:
                return attr(*args, **kwargs)

        return locked


# ---------------------------------------------------------------------------
# exchanges
# ---------------------------------------------------------------------------

@dataclass
class RagExchange:
    """One question's full story: decision, retrieval, prompt, generation."""

    id: str
    question: str
    decision: GateDecision
    passages: list[Passage]
    prompt: str
    generation: str
    gold_answers: tuple[str, ...] = ()
    dataset: str = ""
    verdict: dict | None = None
    empty_retrieval: bool = False

    def __post_init__(self) -> None:
        if self.decision.final is Label.NO_RETRIEVE and self.passages:
            raise ValueError(f"exchange {self.id!r}: passages present despite a no-retrieve decision")
        if self.decision.final is Label.RETRIEVE and not self.passages and not self.empty_retrieval:
            raise ValueError(
                f"exchange {self.id!r}: retrieve decision with no passages must set empty_retrieval"
            )

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "dataset": self.dataset,
            "gold_answers": list(self.gold_answers),
            "decision": self.decision.to_json_dict(),
            "passages": [
                {"rank": p.rank, "text": p.text, "source_id": p.source_id, "score": p.score}
                for p in self.passages
            ],
            "prompt": self.prompt,
            "generation": self.generation,
            "verdict": self.verdict,
            "empty_retrieval": self.empty_retrieval,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), ensure_ascii=False, separators=(",", ":"))


def run_exchange(
    id: str,
    question: str,
    policy: GatePolicy,
    retriever: RetrieverClient,
    generator: GenerationClient,
    *,
    vector=None,
    trace=None,
    gold_answers: Sequence[str] = (),
    dataset: str = "",
    template: str = "generic",
    drop_passage: str | None = None,
    top_k: int = DEFAULT_TOP_K,
    top_use: int = DEFAULT_TOP_USE,
    sampling: SamplingParams = GREEDY,
) -> RagExchange:
    """Gate, optionally retrieve, assemble the prompt, generate.

    A no-retrieve decision never touches the retriever. A retrieve decision
    makes exactly one retriever call with ``top_k``; an empty result (or
    ``top_use`` 0) falls back to the no-references prompt with the exchange
    flagged. Client errors propagate with the exchange id attached.
    """
    decision = policy.decide(vector=vector, trace=trace)
    passages: list[Passage] = []
    if decision.final is Label.RETRIEVE:
        try:
            passages = list(retriever.retrieve(question, top_k))
        except RetrieverFailure as exc:
            raise RetrieverFailure(f"exchange {id!r}: {exc.message}") from exc
        except Exception as exc:
            raise RetrieverFailure(f"exchange {id!r}: {exc}") from exc
    prompt = assemble_prompt(
        question,
        passages if decision.final is Label.RETRIEVE else (),
        template=template,
        drop_passage=drop_passage,
        top_use=top_use,
    )
    try:
        generation = generator.generate(prompt, sampling)
    except GeneratorFailure as exc:
        raise GeneratorFailure(f"exchange {id!r}: {exc.message}") from exc
    except Exception as exc:
        raise GeneratorFailure(f"exchange {id!r}: {exc}") from exc
    return RagExchange(
        id=id,
        question=question,
        decision=decision,
        passages=passages,
        prompt=prompt,
        generation=generation,
        gold_answers=tuple(gold_answers),
        dataset=dataset,
        empty_retrieval=decision.final is Label.RETRIEVE and not passages,
    )


def write_exchanges(exchanges: Sequence[RagExchange], path: str | Path) -> None:
    Path(path).write_text("".join(e.to_json() + "\n" for e in exchanges), encoding="utf-8")


def read_exchanges(path: str | Path) -> list[RagExchange]:
    exchanges = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            exchanges.append(
                RagExchange(
                    id=doc["id"],
                    question=doc["question"],
                    decision=GateDecision.from_json_dict(doc["decision"]),
                    passages=[
                        Passage(
                            rank=p["rank"],
                            text=p["text"],
                            source_id=p.get("source_id"),
                            score=p.get("score"),
                        )
                        for p in doc["passages"]
                    ],
                    prompt=doc["prompt"],
                    generation=doc["generation"],
                    gold_answers=tuple(doc.get("gold_answers") or ()),
                    dataset=doc.get("dataset") or "",
                    verdict=doc.get("verdict"),
                    empty_retrieval=bool(doc.get("empty_retrieval")),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"{path}:{lineno}: bad exchange line ({exc})") from None
    return exchanges


@dataclass(frozen=True)
class ExchangeRequest:
    id: str
    question: str
    vector: object = None
    trace: object = None
    gold_answers: tuple[str, ...] = ()
    dataset: str = ""
    template: str = "generic"
    drop_passage: str | None = None


def run_exchanges(
    requests_in: Iterable[ExchangeRequest],
    policy: GatePolicy,
    retriever: RetrieverClient,
    generator: GenerationClient,
    *,
    top_k: int = DEFAULT_TOP_K,
    top_use: int = DEFAULT_TOP_USE,
    sampling: SamplingParams = GREEDY,
    parallelism: int = 1,
) -> list[RagExchange]:
    """Run many exchanges; output order always matches input order."""
    requests_list = list(requests_in)

    def one(req: ExchangeRequest) -> RagExchange:
        return run_exchange(
            req.id,
            req.question,
            policy,
            retriever,
            generator,
            vector=req.vector,
            trace=req.trace,
            gold_answers=req.gold_answers,
            dataset=req.dataset,
            template=req.template,
            drop_passage=req.drop_passage,
            top_k=top_k,
            top_use=top_use,
            sampling=sampling,
        )

    if parallelism <= 1:
        return [one(req) for req in requests_list]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, requests_list))
