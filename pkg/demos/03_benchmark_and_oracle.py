"""Generate the synthetic fact benchmark and inspect what makes it hard.

Every query's gold fact may have a near-identical "twin" doc stating the
wrong value. BM25 cannot tell them apart (their scores tie exactly), so
a frozen top-k retriever feeds the reasoner damaging context and the
answer comes out wrong. The brute-force oracle shows the reward a
perfect support-set policy would earn.

Run:  python3 demos/03_benchmark_and_oracle.py
"""

from rraml import rl
from rraml.prompting import DEFAULT_TEMPLATES
from rraml.reasoner import generate_benchmark

docs, instances = generate_benchmark(
    seed=7, n_entities=10, n_attributes=5, n_queries=20, damaging_rate=0.5
)
twins = [d for d in docs if d.id.endswith("-alt")]
print(f"{len(docs)} docs ({len(twins)} damaging twins), {len(instances)} queries")

env = rl.RetrievalEnv(docs, DEFAULT_TEMPLATES)
inst = next(i for i in instances if i.damaging)
print(f"\nquery: {inst.query!r}")
print(f"gold answer: {inst.gold_answer!r}")

pool = env.candidate_pool(inst.query)
print("\ncandidate pool (note the exact tie at the top):")
for doc_id, score in pool.entries[:5]:
    tag = "GOLD" if doc_id in inst.gold_doc_ids else (
        "DAMAGING" if doc_id in inst.damaging else ""
    )
    print(f"  {score:7.4f}  {doc_id:20s} {tag}")

# The frozen BM25 top-k baseline swallows the twin and hallucinates.
baseline = rl.bm25_topk_trace(env, inst)
print(f"\nBM25 top-{env.k_max} baseline answers {baseline.response.text!r} "
      f"-> reward {baseline.reward.value:+.0f} ({baseline.reward.kind})")

# The enumeration oracle finds the support set a perfect policy would pick.
optimum = rl.brute_force_optimum(env, inst)
print(f"oracle support {optimum.support_doc_ids} -> reward {optimum.reward:+.0f}")

oracle_mean = sum(rl.brute_force_optimum(env, i).reward for i in instances) / len(instances)
baseline_mean = sum(rl.bm25_topk_trace(env, i).reward.value for i in instances) / len(instances)
print(f"\nmean reward over {len(instances)} queries: "
      f"oracle {oracle_mean:+.2f} vs frozen baseline {baseline_mean:+.2f}")
