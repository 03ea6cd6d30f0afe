"""Train the retrieval-and-prompting policy with deep Q-learning.

A desk-sized run: the policy learns to pick the gold fact, skip the
damaging twin right behind it, and stop. Compare the trained policy
against the frozen BM25 baseline and a random-legal-action policy.

Run:  python3 demos/04_policy_training.py   (about a minute)
"""

import numpy as np

from rraml import rl
from rraml.prompting import DEFAULT_TEMPLATES
from rraml.reasoner import generate_benchmark

docs, instances = generate_benchmark(
    seed=7, n_entities=20, n_attributes=8, n_queries=40, damaging_rate=0.5
)
train_insts, eval_insts = instances[:30], instances[30:]
env = rl.RetrievalEnv(docs, DEFAULT_TEMPLATES)

config = rl.TrainConfig(seed=7, max_episodes=3000)
print("training...")
result = rl.train(docs, train_insts, config)
print(f"ran {result.episodes_run} episodes "
      f"(converged={result.converged}, best window mean {result.best_window_reward:+.3f})")

for start in range(0, result.episodes_run, 300):
    chunk = result.metrics[start:start + 300]
    mean = sum(m.reward for m in chunk) / len(chunk)
    dmg = sum(m.damaging_included for m in chunk) / len(chunk)
    print(f"  episodes {start:4d}-{start + len(chunk):4d}: "
          f"reward {mean:+.3f}, damaging docs in support {dmg:.1%}")


def summarize(name, traces):
    mean = sum(t.reward.value for t in traces) / len(traces)
    halluc = sum(1 for t in traces if t.reward.kind == "hallucination") / len(traces)
    print(f"  {name:22s} mean reward {mean:+.3f}, hallucination rate {halluc:.1%}")


print("\nheld-out evaluation:")
summarize("trained policy", rl.evaluate(result.net, env, eval_insts, config))
summarize("BM25 top-k baseline", [rl.bm25_topk_trace(env, i) for i in eval_insts])
rng = np.random.default_rng(7)
summarize("random policy", [rl.run_random_episode(env, i, rng) for i in eval_insts])
oracle = sum(rl.brute_force_optimum(env, i).reward for i in eval_insts) / len(eval_insts)
print(f"  {'enumeration oracle':22s} mean reward {oracle:+.3f}")
