"""Reward computation, the human-feedback store, and the learned reward model.

Programmatic rewards cover tasks with known gold answers; human ratings
override them, and a small regression model fills in when neither
exists. Precedence everywhere: human > programmatic > reward model.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import tinynn
from .corpus import tokenize
from .reasoner import UNKNOWN, ReasonerResponse, TaskInstance

FEATURE_DIM = 10
N_TEMPLATES = 4
K_MAX = 3

VALID_RATINGS = (-1, 0, 1)


class RewardError(ValueError):
    pass


@dataclass(frozen=True)
class RewardOutcome:
    value: float
    kind: str    # correct | partial | abstain | hallucination | human
    source: str  # programmatic | reward_model | human

    _KIND_VALUES = {
        "correct": lambda v: v == 1.0,
        "abstain": lambda v: v == 0.0,
        "hallucination": lambda v: v == -1.0,
        "partial": lambda v: 0.0 < v < 1.0,
        "human": lambda v: -1.0 <= v <= 1.0,
    }

    def __post_init__(self) -> None:
        check = self._KIND_VALUES.get(self.kind)
        if check is None:
            raise RewardError(f"unknown reward kind: {self.kind!r}")
        if not check(self.value):
            raise RewardError(f"value {self.value} inconsistent with kind {self.kind!r}")


@dataclass(frozen=True)
class FeedbackRecord:
    episode_id: str
    rating: int  # +1 good, 0 unsure, -1 hallucination
    rater: str
    ts: float

    def __post_init__(self) -> None:
        if self.rating not in VALID_RATINGS:
            raise RewardError(f"rating must be one of {VALID_RATINGS}, got {self.rating}")


def token_f1(prediction: str, gold: str) -> float:
    """Harmonic mean of token precision/recall; both empty -> 1, one empty -> 0."""
    pred = tokenize(prediction)
    ref = tokenize(gold)
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    counts: dict[str, int] = {}
    for tok in ref:
        counts[tok] = counts.get(tok, 0) + 1
    overlap = 0
    for tok in pred:
        if counts.get(tok, 0) > 0:
            counts[tok] -= 1
            overlap += 1
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2.0 * precision * recall / (precision + recall)


def _normalize(text: str) -> str:
    return text.strip().lower()


def programmatic_reward(response: ReasonerResponse, instance: TaskInstance) -> RewardOutcome:
    """Score a response against the instance ground truth.

    Exact gold match is +1, UNKNOWN abstains at 0, a known distractor
    answer is the -1 hallucination penalty, anything else scores its
    token F1 against the gold answer.
    """
    answer = _normalize(response.text)
    if answer == _normalize(instance.gold_answer):
        return RewardOutcome(value=1.0, kind="correct", source="programmatic")
    if answer == _normalize(UNKNOWN):
        return RewardOutcome(value=0.0, kind="abstain", source="programmatic")
    if answer in {_normalize(d) for d in instance.damaging.values()}:
        return RewardOutcome(value=-1.0, kind="hallucination", source="programmatic")
    f1 = token_f1(response.text, instance.gold_answer)
    if f1 >= 1.0:
        return RewardOutcome(value=1.0, kind="correct", source="programmatic")
    if f1 <= 0.0:
        return RewardOutcome(value=0.0, kind="abstain", source="programmatic")
    return RewardOutcome(value=f1, kind="partial", source="programmatic")


def featurize_episode(trace) -> np.ndarray:
    """Fixed 10-dim feature vector for the reward model.

    Layout: [support size / k_max, mean support BM25 / pool max,
    min support BM25 / pool max, template one-hot (4),
    answer chars / 64 clipped, answered-UNKNOWN flag,
    query chars / 32 clipped].
    """
    if trace.response is None or trace.reward is None:
        raise RewardError(f"trace {trace.episode_id} is incomplete")
    features = np.zeros(FEATURE_DIM)
    pool_scores = dict(trace.pool_entries)
    support_scores = [pool_scores[d] for d in trace.support_doc_ids if d in pool_scores]
    pool_max = max(pool_scores.values()) if pool_scores else 0.0
    if support_scores and pool_max > 0:
        features[0] = len(trace.support_doc_ids) / K_MAX
        features[1] = (sum(support_scores) / len(support_scores)) / pool_max
        features[2] = min(support_scores) / pool_max
    if not 0 <= trace.template_id < N_TEMPLATES:
        raise RewardError(f"template id {trace.template_id} outside [0,{N_TEMPLATES})")
    features[3 + trace.template_id] = 1.0
    features[7] = min(1.0, len(trace.response.text) / 64.0)
    features[8] = 1.0 if _normalize(trace.response.text) == _normalize(UNKNOWN) else 0.0
    features[9] = min(1.0, len(trace.query) / 32.0)
    return features


@dataclass
class RewardModel:
    """Small regression net from episode features to a scalar rating."""

    net: tinynn.Mlp
    training_log: list[float] = field(default_factory=list)

    @classmethod
    def create(cls, seed: int, hidden: tuple[int, ...] = (16,)) -> "RewardModel":
        return cls(net=tinynn.init((FEATURE_DIM, *hidden, 1), seed=seed))

    @classmethod
    def zero_init(cls, hidden: tuple[int, ...] = (16,)) -> "RewardModel":
        return cls(net=tinynn.zeros((FEATURE_DIM, *hidden, 1)))


def train_reward_model(
    model: RewardModel,
    records: list[tuple[FeedbackRecord, object]],
    epochs: int,
    lr: float,
) -> RewardModel:
    """Fit the net to ratings by per-record SGD on squared error.

    Records are visited in their given order every epoch, so the same
    seed and data always reproduce the same weights. Per-epoch mean
    squared error is appended to the training log.
    """
    if not records:
        raise RewardError("need at least one feedback record")
    data = [
        (featurize_episode(trace), float(rec.rating)) for rec, trace in records
    ]
    net = model.net
    log = list(model.training_log)
    for _ in range(epochs):
        sq_err = 0.0
        for x, target in data:
            pred = float(tinynn.forward(net, x)[0])
            err = pred - target
            sq_err += err * err
            grads = tinynn.backward(net, x, np.array([2.0 * err]))
            net = tinynn.sgd_step(net, grads, lr)
        log.append(sq_err / len(data))
    return RewardModel(net=net, training_log=log)


def predict_reward(model: RewardModel, trace) -> float:
    """Net output clamped to [-1, 1]."""
    raw = float(tinynn.forward(model.net, featurize_episode(trace))[0])
    return max(-1.0, min(1.0, raw))


class FeedbackStore:
    """Append-only JSONL of ratings; the live view is last-write-wins
    per (episode_id, rater)."""

    def __init__(self, path: str | None = None):
        self.path = path
        self._records: list[FeedbackRecord] = []
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if line:
                            self._records.append(_record_from_json(line))
            except FileNotFoundError:
                pass

    def add(self, record: FeedbackRecord) -> None:
        self._records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {
                            "episode_id": record.episode_id,
                            "rating": record.rating,
                            "rater": record.rater,
                            "ts": record.ts,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )

    def live_view(self) -> dict[tuple[str, str], FeedbackRecord]:
        view: dict[tuple[str, str], FeedbackRecord] = {}
        for record in self._records:
            view[(record.episode_id, record.rater)] = record
        return view

    def for_episode(self, episode_id: str) -> list[FeedbackRecord]:
        view = self.live_view()
        return [rec for (eid, _), rec in view.items() if eid == episode_id]

    def latest_rating(self, episode_id: str) -> int | None:
        """Most recently appended live rating for the episode, if any."""
        latest: FeedbackRecord | None = None
        view = self.live_view()
        for record in self._records:
            if record.episode_id == episode_id and view.get(
                (record.episode_id, record.rater)
            ) is record:
                latest = record
        return latest.rating if latest is not None else None

    def __len__(self) -> int:
        return len(self.live_view())


def _record_from_json(line: str) -> FeedbackRecord:
    obj = json.loads(line)
    return FeedbackRecord(
        episode_id=str(obj["episode_id"]),
        rating=int(obj["rating"]),
        rater=str(obj["rater"]),
        ts=float(obj["ts"]),
    )


def make_feedback(episode_id: str, rating: int, rater: str) -> FeedbackRecord:
    return FeedbackRecord(episode_id=episode_id, rating=rating, rater=rater, ts=time.time())


def resolve_reward(
    trace,
    feedback: FeedbackStore | None = None,
    model: RewardModel | None = None,
) -> float:
    """Reward used at replay-insertion time: human > programmatic > model."""
    if feedback is not None:
        rating = feedback.latest_rating(trace.episode_id)
        if rating is not None:
            return float(rating)
    if trace.reward is not None and trace.has_ground_truth:
        return trace.reward.value
    if model is not None:
        return predict_reward(model, trace)
    return trace.reward.value if trace.reward is not None else 0.0
