"""The black-box reasoner behind one interface, plus the synthetic benchmark.

Two backends: a deterministic simulated oracle whose rules make every
training signal reproducible, and an HTTP client for chat-completion
style APIs. The simulated rules, in priority order:

  1. any damaging doc in the support set -> the distractor answer of the
     damaging doc with the lowest id (the hallucination path; damaging
     context wins even when the gold facts are present too),
  2. all gold docs in the support set -> the gold answer,
  3. otherwise -> "UNKNOWN".
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import httpx

from .corpus import Document, build_index, tokenize, top_n
from .prompting import AggregatedPrompt

UNKNOWN = "UNKNOWN"

API_KEY_ENV = "RRAML_API_KEY"

_TASK_FIELDS = {
    "instance_id",
    "task_description",
    "query",
    "gold_answer",
    "gold_doc_ids",
    "damaging",
}

# value tokens live in a range disjoint from entity/attribute indices so
# no unrelated fact can tie a gold fact's BM25 score
_ATTR_OFFSET = 50
_VALUE_LO = 100
_VALUE_HI = 999

MULTI_HOP_EVERY = 5


class TaskError(ValueError):
    """Raised for malformed task files or impossible generator parameters."""


class ReasonerError(RuntimeError):
    """HTTP backend failure: carries status code and a truncated body."""

    def __init__(self, message: str, status: int | None = None, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body[:500]


@dataclass(frozen=True)
class TaskInstance:
    instance_id: str
    task_description: str
    query: str
    gold_answer: str
    gold_doc_ids: frozenset[str]
    damaging: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.gold_doc_ids:
            raise TaskError(f"{self.instance_id}: gold_doc_ids must be non-empty")
        overlap = self.gold_doc_ids & set(self.damaging)
        if overlap:
            raise TaskError(
                f"{self.instance_id}: damaging ids overlap gold: {sorted(overlap)}"
            )
        for doc_id, answer in self.damaging.items():
            if answer == self.gold_answer:
                raise TaskError(
                    f"{self.instance_id}: distractor answer for {doc_id} equals gold"
                )


@dataclass(frozen=True)
class ReasonerResponse:
    text: str
    latency: float
    backend: str  # "simulated" | "http"


@dataclass(frozen=True)
class HttpReasonerConfig:
    base_url: str
    model: str
    timeout: float = 30.0


class SimulatedReasoner:
    """Pure function of (support set, instance); safe to share across threads."""

    backend = "simulated"

    def answer(
        self,
        final_prompt: AggregatedPrompt,
        instance: TaskInstance | None,
        support_doc_ids: tuple[str, ...],
    ) -> ReasonerResponse:
        del final_prompt  # the deterministic rules read only the support set
        support = set(support_doc_ids)
        if instance is None:
            return ReasonerResponse(text=UNKNOWN, latency=0.0, backend=self.backend)
        damaging_hit = sorted(set(instance.damaging) & support)
        if damaging_hit:
            text = instance.damaging[damaging_hit[0]]
        elif instance.gold_doc_ids <= support:
            text = instance.gold_answer
        else:
            text = UNKNOWN
        return ReasonerResponse(text=text, latency=0.0, backend=self.backend)


class HttpReasoner:
    """Chat-completion client; never transmits instance ground truth."""

    backend = "http"

    def __init__(self, config: HttpReasonerConfig, client: httpx.Client | None = None):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)

    def answer(
        self,
        final_prompt: AggregatedPrompt,
        instance: TaskInstance | None,
        support_doc_ids: tuple[str, ...],
    ) -> ReasonerResponse:
        del instance, support_doc_ids  # ground truth stays on our side
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": final_prompt.final_text}],
        }
        headers = {}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        started = time.monotonic()
        try:
            resp = self._client.post(
                self.config.base_url, json=payload, headers=headers,
                timeout=self.config.timeout,
            )
        except httpx.HTTPError as exc:
            raise ReasonerError(f"reasoner request failed: {exc}") from exc
        latency = time.monotonic() - started
        if resp.status_code < 200 or resp.status_code >= 300:
            raise ReasonerError(
                f"reasoner returned HTTP {resp.status_code}",
                status=resp.status_code,
                body=resp.text,
            )
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise ReasonerError(
                f"malformed reasoner body: {exc}",
                status=resp.status_code,
                body=resp.text,
            ) from exc
        if not isinstance(text, str):
            raise ReasonerError(
                "reasoner message content is not a string",
                status=resp.status_code,
                body=resp.text,
            )
        return ReasonerResponse(text=text.strip(), latency=latency, backend=self.backend)


def _fact_text(entity: int, attribute: int, value: int) -> str:
    return f"entity_{entity} attribute_{attribute + _ATTR_OFFSET} is value_{value}"


def _fact_id(entity: int, attribute: int) -> str:
    return f"fact-{entity:03d}-{attribute + _ATTR_OFFSET:02d}"


def generate_benchmark(
    seed: int,
    n_entities: int,
    n_attributes: int,
    n_queries: int,
    damaging_rate: float,
) -> tuple[list[Document], list[TaskInstance]]:
    """Synthetic fact corpus plus queries with known gold and damaging docs.

    One doc per (entity, attribute) fact. Every MULTI_HOP_EVERY-th query
    asks for two attributes of one entity and needs both gold facts. With
    probability damaging_rate a query's gold fact gains a near-identical
    twin doc stating a wrong value; the twin ties the gold doc's BM25
    score exactly and its id sorts directly after the gold id. Damaging
    maps list every twin of a gold fact, wherever the twin came from.
    """
    import numpy as np

    if n_entities <= 0 or n_attributes <= 0 or n_queries <= 0:
        raise TaskError("n_entities, n_attributes, n_queries must be positive")
    if not 0.0 <= damaging_rate <= 1.0:
        raise TaskError(f"damaging_rate must be in [0,1], got {damaging_rate}")
    if n_attributes > _VALUE_LO - _ATTR_OFFSET:
        raise TaskError(f"at most {_VALUE_LO - _ATTR_OFFSET} attributes supported")
    if _VALUE_HI - _VALUE_LO + 1 < 2:
        raise TaskError("value range too small for distractors")

    rng = np.random.default_rng(seed)
    values = {
        (e, a): int(rng.integers(_VALUE_LO, _VALUE_HI + 1))
        for e in range(n_entities)
        for a in range(n_attributes)
    }
    facts = [
        Document(
            id=_fact_id(e, a),
            text=_fact_text(e, a, values[(e, a)]),
            meta={"kind": "fact"},
        )
        for e in range(n_entities)
        for a in range(n_attributes)
    ]

    n_multi = n_queries // MULTI_HOP_EVERY
    n_single = n_queries - n_multi
    single_pairs = [(e, a) for e in range(n_entities) for a in range(n_attributes)]
    multi_pairs = [
        (e, a, b)
        for e in range(n_entities)
        for a in range(n_attributes)
        for b in range(a + 1, n_attributes)
    ]
    if n_single > len(single_pairs) or n_multi > len(multi_pairs):
        raise TaskError("n_queries too large for the entity/attribute grid")
    single_idx = rng.choice(len(single_pairs), size=n_single, replace=False)
    multi_idx = rng.choice(len(multi_pairs), size=n_multi, replace=False)
    chosen_single = [single_pairs[i] for i in single_idx]
    chosen_multi = [multi_pairs[i] for i in multi_idx]

    # twin docs: at most one per fact, shared by every query that touches it
    twins: dict[tuple[int, int], tuple[str, int]] = {}

    def ensure_twin(e: int, a: int) -> None:
        if (e, a) in twins:
            return
        gold_value = values[(e, a)]
        wrong = int(rng.integers(_VALUE_LO, _VALUE_HI))
        if wrong >= gold_value:
            wrong += 1  # uniform over the range minus the gold value
        twins[(e, a)] = (_fact_id(e, a) + "-alt", wrong)

    plan: list[tuple[str, tuple]] = []
    si = iter(chosen_single)
    mi = iter(chosen_multi)
    for q in range(n_queries):
        if (q + 1) % MULTI_HOP_EVERY == 0 and n_multi > 0:
            plan.append(("multi", next(mi)))
        else:
            plan.append(("single", next(si)))
    for kind, key in plan:
        if float(rng.random()) < damaging_rate:
            if kind == "single":
                e, a = key
                ensure_twin(e, a)
            else:
                e, a, b = key
                ensure_twin(e, (a, b)[int(rng.integers(0, 2))])

    twin_docs = [
        Document(
            id=doc_id,
            text=_fact_text(e, a, wrong),
            meta={"kind": "fact"},
        )
        for (e, a), (doc_id, wrong) in sorted(twins.items())
    ]
    docs = facts + twin_docs

    instances: list[TaskInstance] = []
    for q, (kind, key) in enumerate(plan):
        if kind == "single":
            e, a = key
            gold_ids = frozenset({_fact_id(e, a)})
            query = f"what is attribute_{a + _ATTR_OFFSET} of entity_{e}"
            gold_answer = f"value_{values[(e, a)]}"
            damaging: dict[str, str] = {}
            if (e, a) in twins:
                twin_id, wrong = twins[(e, a)]
                damaging[twin_id] = f"value_{wrong}"
        else:
            e, a, b = key
            gold_ids = frozenset({_fact_id(e, a), _fact_id(e, b)})
            query = (
                f"what is attribute_{a + _ATTR_OFFSET} and "
                f"attribute_{b + _ATTR_OFFSET} of entity_{e}"
            )
            gold_answer = f"value_{values[(e, a)]} and value_{values[(e, b)]}"
            damaging = {}
            if (e, a) in twins:
                twin_id, wrong = twins[(e, a)]
                damaging[twin_id] = f"value_{wrong} and value_{values[(e, b)]}"
            if (e, b) in twins:
                twin_id, wrong = twins[(e, b)]
                damaging[twin_id] = f"value_{values[(e, a)]} and value_{wrong}"
        instances.append(
            TaskInstance(
                instance_id=f"task-{q:04d}",
                task_description="Question Answering over the fact database",
                query=query,
                gold_answer=gold_answer,
                gold_doc_ids=gold_ids,
                damaging=damaging,
            )
        )

    _self_check(docs, instances)
    return docs, instances


def _self_check(docs: list[Document], instances: list[TaskInstance]) -> None:
    """Construction guarantees: gold docs in the pool, damaging ranked adjacent."""
    index = build_index(docs)
    for instance in instances:
        pool = top_n(index, tokenize(instance.query), 10, query_id=instance.instance_id)
        ids = pool.doc_ids
        for gold_id in instance.gold_doc_ids:
            if gold_id not in ids:
                raise TaskError(
                    f"{instance.instance_id}: gold doc {gold_id} missing from the pool"
                )
        limit = 2 * len(instance.gold_doc_ids)
        for dmg_id in instance.damaging:
            if dmg_id not in ids[:limit]:
                raise TaskError(
                    f"{instance.instance_id}: damaging doc {dmg_id} "
                    f"outside the top {limit}"
                )


def load_tasks(path: str) -> list[TaskInstance]:
    """Task file: JSONL, one instance per line."""
    instances: list[TaskInstance] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TaskError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            unknown = set(obj) - _TASK_FIELDS
            if unknown:
                raise TaskError(f"{path}:{lineno}: unknown fields: {sorted(unknown)}")
            try:
                instances.append(
                    TaskInstance(
                        instance_id=str(obj["instance_id"]),
                        task_description=str(obj["task_description"]),
                        query=str(obj["query"]),
                        gold_answer=str(obj["gold_answer"]),
                        gold_doc_ids=frozenset(str(d) for d in obj["gold_doc_ids"]),
                        damaging={str(k): str(v) for k, v in obj.get("damaging", {}).items()},
                    )
                )
            except KeyError as exc:
                raise TaskError(f"{path}:{lineno}: missing field {exc}") from exc
    return instances


def save_tasks(instances: list[TaskInstance], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(
                json.dumps(
                    {
                        "instance_id": inst.instance_id,
                        "task_description": inst.task_description,
                        "query": inst.query,
                        "gold_answer": inst.gold_answer,
                        "gold_doc_ids": sorted(inst.gold_doc_ids),
                        "damaging": {k: inst.damaging[k] for k in sorted(inst.damaging)},
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )
