"""Drive the HTTP service in-process: query, inspect, rate, retrain.

Shows the human-in-the-loop path end to end without opening a socket:
a scripted client queries the service, rates an episode, and the stored
feedback trains the reward model.

Run:  python3 demos/05_service_and_feedback.py
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from rraml import rl
from rraml.prompting import DEFAULT_TEMPLATES
from rraml.reasoner import SimulatedReasoner, generate_benchmark
from rraml.reward import FeedbackStore, RewardModel, train_reward_model
from rraml.service import EpisodeStore, ServiceState, create_app

workdir = Path(tempfile.mkdtemp(prefix="feedback-demo-"))
docs, instances = generate_benchmark(
    seed=3, n_entities=8, n_attributes=4, n_queries=10, damaging_rate=0.4
)
env = rl.RetrievalEnv(docs, DEFAULT_TEMPLATES)

# Train briefly so the snapshot is not a blank net.
result = rl.train(docs, instances[:8], rl.TrainConfig(seed=3, max_episodes=1500))

state = ServiceState(
    env=env,
    backend=SimulatedReasoner(),
    episodes=EpisodeStore(str(workdir / "episodes.jsonl")),
    feedback=FeedbackStore(str(workdir / "feedback.jsonl")),
    tasks_by_query={i.query: i for i in instances},
)
state.load_snapshot(result.net)
client = TestClient(create_app(state))

print("health:", client.get("/v1/health").json())

for inst in instances[:3]:
    body = client.post("/v1/query", json={"query": inst.query}).json()
    print(f"\nquery: {inst.query!r}")
    print(f"  answer: {body['answer']!r}  (episode {body['episode_id']})")
    print(f"  support: {[s['doc_id'] for s in body['support']]}")
    # a rater marks the episode
    rating = 1 if body["answer"] == inst.gold_answer else -1
    client.post(
        "/v1/feedback",
        json={"episode_id": body["episode_id"], "rating": rating, "rater": "demo-rater"},
    )

page = client.get("/v1/episodes").json()
print(f"\nstored episodes: {page['total']}")
for ep in page["episodes"]:
    print(f"  {ep['episode_id']}  rating={ep['ratings'].get('demo-rater')}")

# Human ratings become reward-model training signal.
records = []
for (episode_id, _), rec in state.feedback.live_view().items():
    trace = state.episodes.get(episode_id)
    if trace is not None:
        records.append((rec, trace))
model = train_reward_model(RewardModel.create(seed=1), records, epochs=300, lr=0.05)
print(f"\nreward model trained on {len(records)} ratings, "
      f"final mse {model.training_log[-1]:.4f}")
print(f"stores kept under {workdir}")
