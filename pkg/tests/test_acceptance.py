"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one PASS line on success (run with -s to see them all
in order). The learning-effect criterion trains the full seed-7
benchmark policy twice (the second run proves byte-identical metrics),
evaluates against the brute-force oracle, the frozen BM25 top-k
baseline, and a uniform-random policy.
"""

import math
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from fastapi.testclient import TestClient

from rraml import rl, tinynn
from rraml.corpus import Document, build_index, tokenize, top_n
from rraml.prompting import DEFAULT_TEMPLATES
from rraml.reasoner import (
    HttpReasoner,
    HttpReasonerConfig,
    SimulatedReasoner,
    TaskInstance,
    generate_benchmark,
)
from rraml.reward import (
    FeedbackStore,
    RewardModel,
    make_feedback,
    predict_reward,
    train_reward_model,
)
from rraml.service import EpisodeStore, ServiceState, create_app

from tests.test_corpus import brute_force_ranking
from tests.test_reward import _trace
from tests.test_tinynn import finite_difference_grads, max_relative_error


def _report(line: str) -> None:
    print(f"\nACCEPTANCE PASS: {line}")


# ----------------------------------------------------------------------
# Criterion: gradient check, 100 random nets <= 16-32-8, rel err < 1e-4,
# under 10 seconds
# ----------------------------------------------------------------------


def test_gradient_check_100_nets():
    started = time.monotonic()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        sizes = (
            int(rng.integers(1, 17)),
            int(rng.integers(1, 33)),
            int(rng.integers(1, 9)),
        )
        net = tinynn.init(sizes, seed=seed)
        x = rng.uniform(-1, 1, sizes[0])
        upstream = rng.uniform(-1, 1, sizes[-1])
        analytic = tinynn.backward(net, x, upstream)
        numeric = finite_difference_grads(net, x, upstream)
        worst = max(worst, max_relative_error(analytic, numeric))
    elapsed = time.monotonic() - started
    assert worst < 1e-4, f"max relative error {worst}"
    assert elapsed < 10.0, f"gradient check took {elapsed:.1f}s"
    _report(
        f"gradient check: 100 nets, max rel err {worst:.2e} < 1e-4, {elapsed:.1f}s < 10s"
    )


# ----------------------------------------------------------------------
# Criterion: BM25 top_n equals brute-force full-scan ranking including
# tie order, 200 randomized cases <= 50 docs, under 5 seconds
# ----------------------------------------------------------------------


def test_bm25_oracle_equivalence_200_cases():
    started = time.monotonic()
    rng = random.Random(2024)
    for case in range(200):
        vocab = [f"v{i}" for i in range(rng.randint(3, 18))]
        docs = [
            Document(
                id=f"d{i:02d}",
                text=" ".join(rng.choices(vocab, k=rng.randint(1, 14))),
            )
            for i in range(rng.randint(1, 50))
        ]
        index = build_index(docs)
        query = rng.choices(vocab, k=rng.randint(1, 8))
        n = rng.randint(1, 15)
        got = list(top_n(index, query, n).entries)
        want = brute_force_ranking(docs, query, n)
        assert got == want, f"case {case}: ranking diverged"
    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"oracle equivalence took {elapsed:.1f}s"
    _report(f"BM25 top_n equals brute-force ranking on 200 cases, {elapsed:.1f}s < 5s")


# ----------------------------------------------------------------------
# Criterion: Bellman targets match hand values; single-transition DQN
# update matches the hand-computed SGD step to 1e-9
# ----------------------------------------------------------------------


def test_bellman_and_dqn_fixtures():
    zero = tinynn.zeros((2, 1))
    terminal = rl.Transition(np.zeros(2), 1.0, (), True)
    assert rl.bellman_targets([terminal], zero, 0.9).tolist() == [1.0]

    ident = tinynn.Mlp((1, 1), (np.array([[1.0]]),), (np.array([0.0]),))
    boot = rl.Transition(np.zeros(1), 0.0, (np.array([1.0]), np.array([2.0])), False)
    target = rl.bellman_targets([boot], ident, 0.9)[0]
    assert abs(target - 1.8) < 1e-12

    # hand-computed SGD step: q = w*x with w=0.4, x=2.0, r=1 terminal,
    # lr=0.05 -> dL/dw = 2(q-r)x = -0.8 -> w' = 0.44; dL/db = -0.4 -> b' = 0.02
    net = tinynn.Mlp((1, 1), (np.array([[0.4]]),), (np.array([0.0]),))
    updated, loss = rl.dqn_update(
        net, net, [rl.Transition(np.array([2.0]), 1.0, (), True)], lr=0.05
    )
    assert abs(loss - 0.04) < 1e-9
    assert abs(updated.weights[0][0, 0] - 0.44) < 1e-9
    assert abs(updated.biases[0][0] - 0.02) < 1e-9
    _report("Bellman targets (1.0, 1.8) and 1-parameter DQN update match hand values to 1e-9")


# ----------------------------------------------------------------------
# Criterion: learning effect on the seed-7 benchmark (500 fact docs,
# 50 train / 20 eval, damaging_rate 0.5, N_pool 10, k_max 3, T 4,
# <= 5000 episodes, simulated backend, < 10 minutes):
#   (a) trained eval mean >= 0.8 x oracle optimum
#   (b) eval hallucination rate <= 0.5 x frozen BM25 top-k baseline
#   (c) trained eval mean >= random-legal policy mean + 0.3
#   and identical seed => byte-identical metrics CSV
# ----------------------------------------------------------------------

BENCH_SEED = 7
BENCH_CONFIG = dict(seed=BENCH_SEED, n_entities=50, n_attributes=10, n_queries=70,
                    damaging_rate=0.5)


@pytest.fixture(scope="module")
def benchmark_run(tmp_path_factory):
    started = time.monotonic()
    docs, instances = generate_benchmark(
        BENCH_CONFIG["seed"],
        BENCH_CONFIG["n_entities"],
        BENCH_CONFIG["n_attributes"],
        BENCH_CONFIG["n_queries"],
        BENCH_CONFIG["damaging_rate"],
    )
    train_instances, eval_instances = instances[:50], instances[50:]
    env = rl.RetrievalEnv(docs, DEFAULT_TEMPLATES)
    config = rl.TrainConfig(seed=BENCH_SEED, max_episodes=5000)

    oracle = [rl.brute_force_optimum(env, inst) for inst in eval_instances]
    oracle_mean = sum(o.reward for o in oracle) / len(oracle)

    result = rl.train(docs, train_instances, config)
    rerun = rl.train(docs, train_instances, config)

    out = tmp_path_factory.mktemp("metrics")
    first_csv, second_csv = out / "run1.csv", out / "run2.csv"
    rl.write_metrics(str(first_csv), result.metrics)
    rl.write_metrics(str(second_csv), rerun.metrics)

    eval_traces = rl.evaluate(result.net, env, eval_instances, config)
    topk_traces = [rl.bm25_topk_trace(env, inst) for inst in eval_instances]
    rand_rng = np.random.default_rng(BENCH_SEED)
    random_traces = [
        rl.run_random_episode(env, inst, rand_rng) for inst in eval_instances
    ]
    elapsed = time.monotonic() - started
    return {
        "docs": docs,
        "env": env,
        "oracle_mean": oracle_mean,
        "result": result,
        "eval_traces": eval_traces,
        "topk_traces": topk_traces,
        "random_traces": random_traces,
        "csv_bytes": (first_csv.read_bytes(), second_csv.read_bytes()),
        "elapsed": elapsed,
    }


def _mean(traces):
    return sum(t.reward.value for t in traces) / len(traces)


def _hallucination_rate(traces):
    return sum(1 for t in traces if t.reward.kind == "hallucination") / len(traces)


def test_benchmark_shape(benchmark_run):
    docs = benchmark_run["docs"]
    fact_docs = [d for d in docs if not d.id.endswith("-alt")]
    assert len(fact_docs) == 500
    assert benchmark_run["result"].episodes_run <= 5000
    _report(
        f"benchmark shape: 500 fact docs, trained "
        f"{benchmark_run['result'].episodes_run} episodes <= 5000"
    )


def test_learning_vs_oracle(benchmark_run):
    trained = _mean(benchmark_run["eval_traces"])
    oracle = benchmark_run["oracle_mean"]
    assert trained >= 0.8 * oracle, f"trained {trained:.3f} < 0.8 x oracle {oracle:.3f}"
    _report(
        f"learning effect (a): eval mean {trained:.3f} >= 0.8 x oracle {oracle:.3f}"
    )


def test_hallucination_halved_vs_baseline(benchmark_run):
    trained_rate = _hallucination_rate(benchmark_run["eval_traces"])
    baseline_rate = _hallucination_rate(benchmark_run["topk_traces"])
    assert baseline_rate > 0, "baseline must hallucinate for the claim to be testable"
    assert trained_rate <= 0.5 * baseline_rate, (
        f"trained hallucination {trained_rate:.3f} > 0.5 x baseline {baseline_rate:.3f}"
    )
    _report(
        f"learning effect (b): hallucination rate {trained_rate:.3f} <= "
        f"0.5 x BM25 top-k baseline {baseline_rate:.3f}"
    )


def test_trained_beats_random_policy(benchmark_run):
    trained = _mean(benchmark_run["eval_traces"])
    rand = _mean(benchmark_run["random_traces"])
    assert trained >= rand + 0.3, f"trained {trained:.3f} < random {rand:.3f} + 0.3"
    _report(
        f"learning effect (c): eval mean {trained:.3f} >= random policy "
        f"{rand:.3f} + 0.3"
    )


def test_metrics_byte_identical(benchmark_run):
    first, second = benchmark_run["csv_bytes"]
    assert first == second
    _report(
        f"identical seed reproduces the metrics CSV byte-for-byte "
        f"({len(first)} bytes)"
    )


def test_benchmark_runtime(benchmark_run):
    elapsed = benchmark_run["elapsed"]
    assert elapsed < 600.0, f"benchmark run took {elapsed:.0f}s"
    _report(f"benchmark criterion runtime {elapsed:.0f}s < 600s")


# ----------------------------------------------------------------------
# Criterion: replay buffer FIFO eviction and uniform sampling, 10k
# inserts into capacity 1k
# ----------------------------------------------------------------------


def test_replay_buffer_properties():
    buf = rl.ReplayBuffer(capacity=1000)
    for i in range(10_000):
        buf.push(
            rl.Transition(np.array([float(i)]), float(i), (), True)
        )
    kept = sorted(int(t.reward) for t in buf.contents())
    assert kept == list(range(9000, 10_000)), "FIFO eviction violated"

    rng = np.random.default_rng(17)
    counts = np.zeros(1000)
    draws = 3000
    for _ in range(draws):
        batch = buf.sample(32, rng)
        seen = set()
        for t in batch:
            slot = int(t.reward) - 9000
            assert slot not in seen, "duplicate slot inside one batch"
            seen.add(slot)
            counts[slot] += 1
    expected = draws * 32 / 1000
    sigma = math.sqrt(draws * 32 * (1 / 1000) * (999 / 1000))
    worst = float(np.max(np.abs(counts - expected)))
    assert worst <= 5 * sigma, f"sampling deviates {worst:.1f} > 5 sigma {5*sigma:.1f}"
    _report(
        f"replay buffer: FIFO over 10k inserts at capacity 1k, uniform sampling "
        f"(worst slot deviation {worst:.0f} <= 5 sigma)"
    )


# ----------------------------------------------------------------------
# Criterion: reward model fits 20 synthetic feedback records to MSE <
# 0.05 within 2000 epochs; zero-init model predicts exactly 0
# ----------------------------------------------------------------------


def test_reward_model_criterion():
    # ratings follow the visible trace features, the way real feedback
    # would: strong supports are good, UNKNOWN answers are unsure, weak
    # supports that still answered are hallucinations
    records = []
    for i in range(20):
        rating = (-1, 0, 1)[i % 3]
        if rating == 1:
            pool = (("gold", 4.0), ("other", 1.0))
            support, answer = ("gold",), f"value_{100 + i}"
        elif rating == 0:
            pool = (("gold", 4.0), ("mid", 2.0))
            support, answer = ("mid",), "UNKNOWN"
        else:
            pool = (("gold", 4.0), ("weak", 0.8))
            support, answer = ("weak",), f"value_{500 + i}"
        trace = _trace(
            episode_id=f"fb-{i}",
            template_id=i % 4,
            support=support,
            pool=pool,
            answer=answer,
            query="what is attribute_%d of entity_%d" % (50 + i % 5, i % 7),
        )
        records.append((make_feedback(f"fb-{i}", rating, "rater"), trace))

    zero = RewardModel.zero_init()
    for _, trace in records[:5]:
        assert predict_reward(zero, trace) == 0.0

    model = RewardModel.create(seed=41)
    trained = train_reward_model(model, records, epochs=2000, lr=0.05)
    final_mse = trained.training_log[-1]
    assert final_mse < 0.05, f"training MSE {final_mse:.4f} >= 0.05"
    _report(
        f"reward model: 20 records fit to MSE {final_mse:.4f} < 0.05 within "
        f"2000 epochs; zero-init predicts exactly 0"
    )


# ----------------------------------------------------------------------
# Criterion: service contract round-trip against the simulated backend
# with a 20-doc corpus; the 502 path leaves the store unchanged
# ----------------------------------------------------------------------


class _Explode500(BaseHTTPRequestHandler):
    def do_POST(self):
        self.rfile.read(int(self.headers.get("Content-Length", 0)))
        self.send_response(500)
        self.end_headers()

    def log_message(self, *args):
        pass


def test_service_contract(tmp_path):
    docs = [
        Document(
            id=f"fact-{i:02d}",
            text=f"entity_{i % 5} attribute_{50 + i % 4} is value_{100 + i}",
        )
        for i in range(20)
    ]
    env = rl.RetrievalEnv(docs, DEFAULT_TEMPLATES)
    task = TaskInstance(
        instance_id="t0",
        task_description="QA",
        query="what is attribute_50 of entity_0",
        gold_answer="value_100",
        gold_doc_ids=frozenset({"fact-00"}),
    )
    state = ServiceState(
        env=env,
        backend=SimulatedReasoner(),
        episodes=EpisodeStore(str(tmp_path / "episodes.jsonl")),
        feedback=FeedbackStore(str(tmp_path / "feedback.jsonl")),
        tasks_by_query={task.query: task},
    )
    state.load_snapshot(tinynn.zeros((12, 16, 1)))
    client = TestClient(create_app(state), raise_server_exceptions=False)

    # query -> list -> feedback -> re-fetch
    query = client.post("/v1/query", json={"query": task.query})
    assert query.status_code == 200
    episode_id = query.json()["episode_id"]
    assert query.json()["support"]

    listing = client.get("/v1/episodes").json()
    assert listing["total"] == 1
    assert listing["episodes"][0]["episode_id"] == episode_id

    rated = client.post(
        "/v1/feedback", json={"episode_id": episode_id, "rating": 1, "rater": "ann"}
    )
    assert rated.status_code == 200

    fetched = client.get(f"/v1/episodes/{episode_id}").json()
    assert fetched["ratings"] == {"ann": 1}
    assert fetched["query"] == task.query

    # 502 path: stub reasoner returns 500; nothing is persisted
    server = HTTPServer(("127.0.0.1", 0), _Explode500)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        state.backend = HttpReasoner(
            HttpReasonerConfig(
                base_url=f"http://127.0.0.1:{server.server_port}/v1/chat",
                model="m",
                timeout=2.0,
            )
        )
        before = len(state.episodes)
        failed = client.post("/v1/query", json={"query": task.query})
        assert failed.status_code == 502
        assert len(state.episodes) == before
    finally:
        server.shutdown()
    _report(
        "service contract: query -> list -> feedback -> re-fetch round-trip, "
        "502 path leaves the store unchanged"
    )
