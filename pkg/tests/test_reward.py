"""Reward computation, feedback store, and reward model tests."""

import json
import random
from pathlib import Path

import numpy as np
import pytest

from rraml import tinynn
from rraml.reasoner import ReasonerResponse, TaskInstance
from rraml.reward import (
    FeedbackRecord,
    FeedbackStore,
    RewardError,
    RewardModel,
    RewardOutcome,
    featurize_episode,
    make_feedback,
    predict_reward,
    programmatic_reward,
    resolve_reward,
    token_f1,
    train_reward_model,
)
from rraml.rl import EpisodeTrace

GOLDEN_VEC = json.loads(
    (Path(__file__).parent / "data" / "reward_feature_golden.json").read_text()
)["vector"]


def _response(text):
    return ReasonerResponse(text=text, latency=0.0, backend="simulated")


def _instance(gold="Paris", damaging=None):
    return TaskInstance(
        instance_id="t1",
        task_description="QA",
        query="capital of France",
        gold_answer=gold,
        gold_doc_ids=frozenset({"g1"}),
        damaging=damaging or {},
    )


def _trace(
    template_id=2,
    support=("fact-006-53", "fact-006-50"),
    pool=(("fact-006-53", 3.64), ("fact-006-53-alt", 3.64), ("fact-006-50", 2.08)),
    answer="value_123",
    query="what is attribute_53 of entity_6",
    reward=None,
    episode_id="fix-1",
    has_ground_truth=True,
):
    return EpisodeTrace(
        episode_id=episode_id,
        instance_id="t1",
        query=query,
        task_description="QA",
        template_id=template_id,
        support_doc_ids=support,
        pool_entries=pool,
        prompt_text="p",
        response=_response(answer),
        reward=reward or RewardOutcome(value=1.0, kind="correct", source="programmatic"),
        step_q_values=(),
        backend="simulated",
        has_ground_truth=has_ground_truth,
    )


class TestRewardOutcomeInvariants:
    def test_kind_value_pairs(self):
        RewardOutcome(1.0, "correct", "programmatic")
        RewardOutcome(0.0, "abstain", "programmatic")
        RewardOutcome(-1.0, "hallucination", "programmatic")
        RewardOutcome(0.5, "partial", "programmatic")
        RewardOutcome(-1.0, "human", "human")

    @pytest.mark.parametrize(
        "value,kind",
        [(0.5, "correct"), (0.1, "abstain"), (0.0, "hallucination"), (1.0, "partial"), (0.0, "nonsense")],
    )
    def test_inconsistent_rejected(self, value, kind):
        with pytest.raises(RewardError):
            RewardOutcome(value, kind, "programmatic")


class TestTokenF1:
    def test_exact_match(self):
        assert token_f1("Paris", "Paris") == 1.0

    def test_one_empty(self):
        assert token_f1("", "x") == 0.0
        assert token_f1("x", "") == 0.0

    def test_both_empty(self):
        assert token_f1("", "") == 1.0

    def test_hand_value(self):
        # P = 2/3, R = 1 -> F1 = 2*(2/3)/(5/3) = 0.8
        assert token_f1("the cat sat", "cat sat") == pytest.approx(0.8, abs=1e-12)

    def test_self_similarity(self):
        rng = random.Random(9)
        for _ in range(50):
            text = " ".join(f"w{rng.randint(0, 5)}" for _ in range(rng.randint(1, 8)))
            assert token_f1(text, text) == 1.0

    def test_symmetry_of_counts(self):
        assert token_f1("a a b", "a b b") == token_f1("a b b", "a a b")


class TestProgrammaticReward:
    def test_gold_with_whitespace(self):
        out = programmatic_reward(_response("Paris "), _instance())
        assert (out.value, out.kind) == (1.0, "correct")

    def test_case_normalization(self):
        out = programmatic_reward(_response("paris"), _instance())
        assert out.kind == "correct"

    def test_unknown_abstains(self):
        out = programmatic_reward(_response("UNKNOWN"), _instance())
        assert (out.value, out.kind) == (0.0, "abstain")

    def test_distractor_is_hallucination(self):
        inst = _instance(damaging={"d1": "Lyon"})
        out = programmatic_reward(_response("Lyon"), inst)
        assert (out.value, out.kind) == (-1.0, "hallucination")

    def test_partial_overlap(self):
        inst = _instance(gold="the eiffel tower")
        out = programmatic_reward(_response("eiffel tower lights"), inst)
        assert out.kind == "partial"
        assert 0.0 < out.value < 1.0

    def test_image_and_kind_mapping_fuzz(self):
        """Reward image is {-1} union [0,1] and kind matches value for
        arbitrary response strings."""
        rng = random.Random(21)
        inst = _instance(gold="alpha beta", damaging={"d": "gamma delta"})
        vocab = ["alpha", "beta", "gamma", "delta", "zeta", "UNKNOWN", ""]
        for _ in range(300):
            text = " ".join(rng.choices(vocab, k=rng.randint(1, 4)))
            out = programmatic_reward(_response(text), inst)
            assert out.value == -1.0 or 0.0 <= out.value <= 1.0
            if out.kind == "correct":
                assert out.value == 1.0
            elif out.kind == "abstain":
                assert out.value == 0.0
            elif out.kind == "hallucination":
                assert out.value == -1.0
            else:
                assert 0.0 < out.value < 1.0


class TestFeaturizeEpisode:
    def test_golden_vector(self):
        assert featurize_episode(_trace()).tolist() == GOLDEN_VEC

    def test_empty_support_first_three_zero(self):
        vec = featurize_episode(_trace(support=()))
        assert vec[0] == vec[1] == vec[2] == 0.0

    def test_template_one_hot(self):
        vec = featurize_episode(_trace(template_id=2))
        assert vec[3:7].tolist() == [0.0, 0.0, 1.0, 0.0]

    def test_unknown_flag(self):
        vec = featurize_episode(_trace(answer="UNKNOWN"))
        assert vec[8] == 1.0

    def test_incomplete_trace_rejected(self):
        trace = _trace()
        broken = EpisodeTrace(
            **{**trace.__dict__, "response": None, "reward": None}
        )
        with pytest.raises(RewardError, match="incomplete"):
            featurize_episode(broken)


class TestRewardModel:
    def test_zero_init_predicts_zero(self):
        model = RewardModel.zero_init()
        assert predict_reward(model, _trace()) == 0.0

    def test_clamping(self):
        model = RewardModel.zero_init()
        biased = tinynn.Mlp(
            model.net.layer_sizes,
            model.net.weights,
            model.net.biases[:-1] + (np.array([1.7]),),
        )
        assert predict_reward(RewardModel(net=biased), _trace()) == 1.0
        low = tinynn.Mlp(
            model.net.layer_sizes,
            model.net.weights,
            model.net.biases[:-1] + (np.array([-2.3]),),
        )
        assert predict_reward(RewardModel(net=low), _trace()) == -1.0

    def test_single_record_convergence(self):
        trace = _trace()
        record = make_feedback("fix-1", 1, "alice")
        model = RewardModel.create(seed=3)
        trained = train_reward_model(model, [(record, trace)], epochs=400, lr=0.1)
        assert abs(predict_reward(trained, trace) - 1.0) < 0.05
        assert len(trained.training_log) == 400

    def test_zero_epochs_unchanged(self):
        model = RewardModel.create(seed=3)
        trained = train_reward_model(
            model, [(make_feedback("fix-1", 1, "a"), _trace())], epochs=0, lr=0.1
        )
        assert tinynn.save(trained.net) == tinynn.save(model.net)

    def test_deterministic_training(self):
        records = [
            (make_feedback(f"e{i}", (-1, 0, 1)[i % 3], "r"), _trace(episode_id=f"e{i}", template_id=i % 4))
            for i in range(6)
        ]
        a = train_reward_model(RewardModel.create(seed=5), records, epochs=50, lr=0.05)
        b = train_reward_model(RewardModel.create(seed=5), records, epochs=50, lr=0.05)
        assert tinynn.save(a.net) == tinynn.save(b.net)

    def test_needs_records(self):
        with pytest.raises(RewardError):
            train_reward_model(RewardModel.create(seed=1), [], epochs=1, lr=0.1)


class TestFeedbackStore:
    def test_overwrite_per_rater(self, tmp_path):
        store = FeedbackStore(str(tmp_path / "fb.jsonl"))
        store.add(FeedbackRecord("e1", 1, "alice", 1.0))
        store.add(FeedbackRecord("e1", -1, "alice", 2.0))
        store.add(FeedbackRecord("e1", 0, "bob", 3.0))
        view = store.live_view()
        assert view[("e1", "alice")].rating == -1
        assert view[("e1", "bob")].rating == 0
        assert len(store) == 2

    def test_append_only_replay(self, tmp_path):
        path = str(tmp_path / "fb.jsonl")
        store = FeedbackStore(path)
        store.add(FeedbackRecord("e1", 1, "alice", 1.0))
        store.add(FeedbackRecord("e2", -1, "bob", 2.0))
        replayed = FeedbackStore(path)
        assert replayed.live_view() == store.live_view()

    def test_latest_rating_is_append_order(self):
        store = FeedbackStore()
        store.add(FeedbackRecord("e1", 1, "alice", 1.0))
        store.add(FeedbackRecord("e1", 0, "bob", 2.0))
        assert store.latest_rating("e1") == 0
        store.add(FeedbackRecord("e1", -1, "alice", 3.0))
        assert store.latest_rating("e1") == -1
        assert store.latest_rating("missing") is None

    def test_invalid_rating_rejected(self):
        with pytest.raises(RewardError):
            FeedbackRecord("e1", 2, "alice", 1.0)


class TestResolveReward:
    def test_human_beats_programmatic(self):
        store = FeedbackStore()
        store.add(FeedbackRecord("fix-1", -1, "alice", 1.0))
        trace = _trace()  # programmatic value 1.0
        assert resolve_reward(trace, store) == -1.0

    def test_programmatic_when_no_feedback(self):
        assert resolve_reward(_trace(), FeedbackStore()) == 1.0

    def test_model_fills_unlabeled(self):
        trace = _trace(
            reward=RewardOutcome(0.0, "abstain", "programmatic"),
            has_ground_truth=False,
        )
        model = RewardModel.zero_init()
        biased = RewardModel(
            net=tinynn.Mlp(
                model.net.layer_sizes,
                model.net.weights,
                model.net.biases[:-1] + (np.array([0.4]),),
            )
        )
        assert resolve_reward(trace, FeedbackStore(), biased) == pytest.approx(0.4)

    def test_unlabeled_without_model_defaults_to_stored(self):
        trace = _trace(
            reward=RewardOutcome(0.0, "abstain", "programmatic"),
            has_ground_truth=False,
        )
        assert resolve_reward(trace, None, None) == 0.0
