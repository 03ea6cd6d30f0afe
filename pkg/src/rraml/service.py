"""HTTP shell: query endpoint, episode inspection, human feedback intake.

Single-process FastAPI app. Episode appends and feedback writes go
through one lock (single-writer path); the model snapshot swaps
atomically, so in-flight queries always see a consistent net.
"""

from __future__ import annotations

import dataclasses
import json
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from . import rl, tinynn
from .prompting import DEFAULT_TEMPLATES
from .reasoner import (
    HttpReasoner,
    HttpReasonerConfig,
    ReasonerError,
    ReasonerResponse,
    SimulatedReasoner,
    TaskInstance,
    load_tasks,
)
from .reward import (
    FeedbackStore,
    RewardOutcome,
    VALID_RATINGS,
    make_feedback,
)
from .corpus import load_corpus


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class ServiceConfig:
    corpus_path: str
    checkpoint_path: str | None = None
    tasks_path: str | None = None
    backend: str = "simulated"  # "simulated" | "http"
    http_base_url: str = ""
    http_model: str = ""
    http_timeout: float = 30.0
    episode_log: str | None = None
    feedback_log: str | None = None
    metrics_path: str | None = None
    host: str = "127.0.0.1"
    port: int = 8080

    @classmethod
    def from_file(cls, path: str) -> "ServiceConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)


def trace_to_json(trace: rl.EpisodeTrace) -> dict:
    return {
        "episode_id": trace.episode_id,
        "instance_id": trace.instance_id,
        "query": trace.query,
        "task_description": trace.task_description,
        "template_id": trace.template_id,
        "support_doc_ids": list(trace.support_doc_ids),
        "pool_entries": [[d, s] for d, s in trace.pool_entries],
        "prompt_text": trace.prompt_text,
        "response": {
            "text": trace.response.text,
            "latency": trace.response.latency,
            "backend": trace.response.backend,
        },
        "reward": {
            "value": trace.reward.value,
            "kind": trace.reward.kind,
            "source": trace.reward.source,
        },
        "step_q_values": [
            [[label, q] for label, q in step] for step in trace.step_q_values
        ],
        "backend": trace.backend,
        "has_ground_truth": trace.has_ground_truth,
    }


def trace_from_json(obj: dict) -> rl.EpisodeTrace:
    return rl.EpisodeTrace(
        episode_id=obj["episode_id"],
        instance_id=obj["instance_id"],
        query=obj["query"],
        task_description=obj["task_description"],
        template_id=obj["template_id"],
        support_doc_ids=tuple(obj["support_doc_ids"]),
        pool_entries=tuple((d, float(s)) for d, s in obj["pool_entries"]),
        prompt_text=obj["prompt_text"],
        response=ReasonerResponse(
            text=obj["response"]["text"],
            latency=obj["response"]["latency"],
            backend=obj["response"]["backend"],
        ),
        reward=RewardOutcome(
            value=obj["reward"]["value"],
            kind=obj["reward"]["kind"],
            source=obj["reward"]["source"],
        ),
        step_q_values=tuple(
            tuple((label, float(q)) for label, q in step)
            for step in obj["step_q_values"]
        ),
        backend=obj["backend"],
        has_ground_truth=obj.get("has_ground_truth", True),
    )


class EpisodeStore:
    """Append-only JSONL of traces; replaying the log rebuilds the index."""

    def __init__(self, path: str | None = None):
        self.path = path
        self._traces: list[rl.EpisodeTrace] = []
        self._by_id: dict[str, rl.EpisodeTrace] = {}
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if line:
                            self._append_memory(trace_from_json(json.loads(line)))
            except FileNotFoundError:
                pass

    def _append_memory(self, trace: rl.EpisodeTrace) -> None:
        if trace.episode_id in self._by_id:
            raise ValueError(f"duplicate episode id {trace.episode_id!r}")
        self._traces.append(trace)
        self._by_id[trace.episode_id] = trace

    def append(self, trace: rl.EpisodeTrace) -> None:
        self._append_memory(trace)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(trace_to_json(trace), sort_keys=True) + "\n")

    def next_id(self) -> str:
        return f"ep-{len(self._traces):06d}"

    def get(self, episode_id: str) -> rl.EpisodeTrace | None:
        return self._by_id.get(episode_id)

    def page(self, limit: int, offset: int) -> list[rl.EpisodeTrace]:
        offset = max(0, offset)
        limit = max(0, limit)
        return self._traces[offset : offset + limit]

    def __len__(self) -> int:
        return len(self._traces)


@dataclass
class ServiceState:
    env: rl.RetrievalEnv
    backend: object
    episodes: EpisodeStore
    feedback: FeedbackStore
    net: tinynn.Mlp | None = None
    tasks_by_query: dict[str, TaskInstance] = field(default_factory=dict)
    metrics_path: str | None = None
    config: rl.TrainConfig = field(default_factory=rl.TrainConfig)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def load_snapshot(self, net: tinynn.Mlp) -> None:
        # attribute assignment is atomic; readers grab the reference once
        self.net = net


def build_state(config: ServiceConfig) -> ServiceState:
    docs = load_corpus(config.corpus_path)
    env = rl.RetrievalEnv(docs, DEFAULT_TEMPLATES)
    if config.backend == "http":
        backend = HttpReasoner(
            HttpReasonerConfig(
                base_url=config.http_base_url,
                model=config.http_model,
                timeout=config.http_timeout,
            )
        )
    elif config.backend == "simulated":
        backend = SimulatedReasoner()
    else:
        raise ValueError(f"unknown backend {config.backend!r}")
    tasks_by_query: dict[str, TaskInstance] = {}
    if config.tasks_path:
        for inst in load_tasks(config.tasks_path):
            tasks_by_query[inst.query] = inst
    state = ServiceState(
        env=env,
        backend=backend,
        episodes=EpisodeStore(config.episode_log),
        feedback=FeedbackStore(config.feedback_log),
        tasks_by_query=tasks_by_query,
        metrics_path=config.metrics_path,
    )
    if config.checkpoint_path:
        net, _ = rl.load_checkpoint(config.checkpoint_path)
        state.load_snapshot(net)
    return state


def _episode_summary(trace: rl.EpisodeTrace, ratings: dict[str, int]) -> dict:
    return {
        "episode_id": trace.episode_id,
        "instance_id": trace.instance_id,
        "query": trace.query,
        "answer": trace.response.text if trace.response else None,
        "template_id": trace.template_id,
        "support_size": len(trace.support_doc_ids),
        "reward": {"value": trace.reward.value, "kind": trace.reward.kind}
        if trace.reward
        else None,
        "ratings": ratings,
    }


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="retrieval-policy service")

    @app.exception_handler(ApiError)
    async def handle_api_error(_: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.exception_handler(RequestValidationError)
    async def handle_validation(_: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={"error": {"code": "invalid_request", "message": str(exc.errors())}},
        )

    @app.get("/v1/health")
    async def health() -> dict:
        return {
            "status": "ok",
            "backend": getattr(state.backend, "backend", "unknown"),
            "snapshot_loaded": state.net is not None,
            "episodes": len(state.episodes),
        }

    @app.post("/v1/query")
    async def query(request: Request) -> dict:
        body = await _json_body(request)
        query_text = body.get("query")
        task_description = body.get("task_description") or "Question Answering"
        if not isinstance(query_text, str) or not query_text.strip():
            raise ApiError(400, "empty_query", "query must be a non-empty string")
        net = state.net
        if net is None:
            raise ApiError(503, "no_snapshot", "no model snapshot loaded")
        instance = state.tasks_by_query.get(query_text)
        try:
            trace, _ = rl.run_episode(
                net,
                state.env,
                instance,
                state.config,
                mode="eval",
                backend=state.backend,
                query=query_text,
                task_description=task_description,
            )
        except rl.EpisodeError as exc:
            raise ApiError(400, "no_candidates", str(exc)) from exc
        except ReasonerError as exc:
            raise ApiError(502, "reasoner_failure", str(exc)) from exc
        with state.lock:
            trace = dataclasses.replace(trace, episode_id=state.episodes.next_id())
            state.episodes.append(trace)
        return {
            "episode_id": trace.episode_id,
            "answer": trace.response.text,
            "template_id": trace.template_id,
            "support": [
                {"doc_id": d, "text": state.env.docs[d].text}
                for d in trace.support_doc_ids
            ],
        }

    @app.post("/v1/feedback")
    async def feedback(request: Request) -> dict:
        body = await _json_body(request)
        episode_id = body.get("episode_id")
        rating = body.get("rating")
        rater = body.get("rater")
        if not isinstance(episode_id, str) or not episode_id:
            raise ApiError(422, "invalid_rating", "episode_id must be a string")
        if not isinstance(rater, str) or not rater:
            raise ApiError(422, "invalid_rating", "rater must be a non-empty string")
        if isinstance(rating, bool) or not isinstance(rating, int) or rating not in VALID_RATINGS:
            raise ApiError(
                422, "invalid_rating", f"rating must be one of {list(VALID_RATINGS)}"
            )
        if state.episodes.get(episode_id) is None:
            raise ApiError(404, "unknown_episode", f"no episode {episode_id!r}")
        record = make_feedback(episode_id, rating, rater)
        with state.lock:
            state.feedback.add(record)
        return {
            "episode_id": record.episode_id,
            "rating": record.rating,
            "rater": record.rater,
            "ts": record.ts,
        }

    @app.get("/v1/episodes")
    async def list_episodes(limit: int = 50, offset: int = 0) -> dict:
        view = state.feedback.live_view()
        page = state.episodes.page(limit, offset)
        return {
            "total": len(state.episodes),
            "episodes": [
                _episode_summary(
                    t,
                    {
                        rater: rec.rating
                        for (eid, rater), rec in view.items()
                        if eid == t.episode_id
                    },
                )
                for t in page
            ],
        }

    @app.get("/v1/episodes/{episode_id}")
    async def get_episode(episode_id: str) -> dict:
        trace = state.episodes.get(episode_id)
        if trace is None:
            raise ApiError(404, "unknown_episode", f"no episode {episode_id!r}")
        view = state.feedback.live_view()
        payload = trace_to_json(trace)
        payload["support"] = [
            {"doc_id": d, "text": state.env.docs[d].text}
            for d in trace.support_doc_ids
        ]
        payload["template_style"] = state.env.templates[trace.template_id].style
        payload["ratings"] = {
            rater: rec.rating for (eid, rater), rec in view.items() if eid == episode_id
        }
        return payload

    @app.get("/v1/metrics")
    async def metrics() -> dict:
        if not state.metrics_path:
            return {"series": []}
        try:
            rows = rl.read_metrics(state.metrics_path)
        except FileNotFoundError:
            return {"series": []}
        return {
            "series": [
                {
                    "episode": m.episode,
                    "reward": m.reward,
                    "loss": m.loss,
                    "epsilon": m.epsilon,
                    "support_size": m.support_size,
                    "damaging_included": m.damaging_included,
                    "template_id": m.template_id,
                }
                for m in rows
            ]
        }

    return app


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except json.JSONDecodeError as exc:
        raise ApiError(400, "invalid_json", f"request body is not JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise ApiError(400, "invalid_json", "request body must be a JSON object")
    return body
