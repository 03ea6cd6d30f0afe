"""Command-line entry points: index, generate, train, eval, oracle, serve,
feedback-train. Every subcommand is deterministic given --seed."""

from __future__ import annotations

import json

import click

from . import rl, tinynn
from .corpus import CorpusError, build_index, load_corpus, save_corpus
from .prompting import DEFAULT_TEMPLATES
from .reasoner import TaskError, generate_benchmark, load_tasks, save_tasks
from .reward import FeedbackStore, RewardModel, train_reward_model
from .service import EpisodeStore, ServiceConfig, build_state, create_app


class CliError(click.ClickException):
    exit_code = 1


@click.group()
def main() -> None:
    """Retrieval policy toolkit: index corpora, generate benchmarks, train
    and evaluate the policy, and serve the feedback API."""


@main.command("index")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def index_cmd(corpus_path: str, out_path: str) -> None:
    """Build the inverted index from a JSONL corpus."""
    try:
        docs = load_corpus(corpus_path)
        index = build_index(docs)
    except CorpusError as exc:
        raise CliError(str(exc)) from exc
    with open(out_path, "wb") as fh:
        fh.write(index.serialize())
    click.echo(f"indexed {index.doc_count} docs -> {out_path}")


@main.command("generate")
@click.option("--seed", default=7, type=int, show_default=True)
@click.option("--entities", default=50, type=int, show_default=True)
@click.option("--attributes", default=10, type=int, show_default=True)
@click.option("--queries", default=70, type=int, show_default=True)
@click.option("--damaging-rate", default=0.5, type=float, show_default=True)
@click.option("--eval-count", default=20, type=int, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def generate_cmd(
    seed: int,
    entities: int,
    attributes: int,
    queries: int,
    damaging_rate: float,
    eval_count: int,
    out_dir: str,
) -> None:
    """Generate the synthetic fact benchmark (corpus + train/eval tasks)."""
    import os

    try:
        docs, instances = generate_benchmark(
            seed, entities, attributes, queries, damaging_rate
        )
    except TaskError as exc:
        raise CliError(str(exc)) from exc
    if eval_count >= len(instances):
        raise CliError(
            f"eval-count {eval_count} leaves no training instances of {len(instances)}"
        )
    os.makedirs(out_dir, exist_ok=True)
    save_corpus(docs, os.path.join(out_dir, "corpus.jsonl"))
    save_tasks(instances[: len(instances) - eval_count],
               os.path.join(out_dir, "tasks_train.jsonl"))
    save_tasks(instances[len(instances) - eval_count:],
               os.path.join(out_dir, "tasks_eval.jsonl"))
    n_damaging = sum(1 for i in instances if i.damaging)
    click.echo(
        f"wrote {len(docs)} docs, {len(instances) - eval_count} train / "
        f"{eval_count} eval tasks ({n_damaging} with damaging docs) -> {out_dir}"
    )


def _config_from_options(seed: int, max_episodes: int) -> rl.TrainConfig:
    return rl.TrainConfig(seed=seed, max_episodes=max_episodes)


@main.command("train")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--tasks", "tasks_path", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--max-episodes", default=5000, type=int, show_default=True)
@click.option("--out", "checkpoint_path", required=True, type=click.Path())
@click.option("--metrics", "metrics_path", required=True, type=click.Path())
def train_cmd(
    corpus_path: str,
    tasks_path: str,
    seed: int,
    max_episodes: int,
    checkpoint_path: str,
    metrics_path: str,
) -> None:
    """Train the policy with deep Q-learning on the simulated reasoner."""
    try:
        docs = load_corpus(corpus_path)
        instances = load_tasks(tasks_path)
    except (CorpusError, TaskError) as exc:
        raise CliError(str(exc)) from exc
    config = _config_from_options(seed, max_episodes)
    try:
        result = rl.train(docs, instances, config)
    except rl.TrainAborted as exc:
        rl.write_metrics(metrics_path, exc.metrics)
        raise CliError(f"{exc} (partial metrics written to {metrics_path})") from exc
    rl.write_metrics(metrics_path, result.metrics)
    rl.save_checkpoint(checkpoint_path, result.net, config, rl.corpus_hash(docs))
    final = result.metrics[-config.convergence_window:]
    mean = sum(m.reward for m in final) / len(final) if final else 0.0
    click.echo(
        f"trained {result.episodes_run} episodes "
        f"(converged={result.converged}), final-window mean reward {mean:.3f}"
    )


@main.command("eval")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--tasks", "tasks_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default=None, type=click.Path())
def eval_cmd(corpus_path: str, tasks_path: str, checkpoint_path: str, out_path: str | None) -> None:
    """Greedy evaluation: reward and hallucination report."""
    try:
        docs = load_corpus(corpus_path)
        instances = load_tasks(tasks_path)
        net, _ = rl.load_checkpoint(checkpoint_path)
    except (CorpusError, TaskError, tinynn.CheckpointError) as exc:
        raise CliError(str(exc)) from exc
    env = rl.RetrievalEnv(docs, DEFAULT_TEMPLATES)
    traces = rl.evaluate(net, env, instances, rl.TrainConfig())
    kinds = [t.reward.kind for t in traces]
    report = {
        "n": len(traces),
        "mean_reward": sum(t.reward.value for t in traces) / len(traces),
        "hallucination_rate": kinds.count("hallucination") / len(traces),
        "correct_rate": kinds.count("correct") / len(traces),
        "abstain_rate": kinds.count("abstain") / len(traces),
        "mean_support_size": sum(len(t.support_doc_ids) for t in traces) / len(traces),
        "instances": [
            {
                "instance_id": t.instance_id,
                "reward": t.reward.value,
                "kind": t.reward.kind,
                "template_id": t.template_id,
                "support_doc_ids": list(t.support_doc_ids),
                "answer": t.response.text,
            }
            for t in traces
        ],
    }
    _emit_report(report, out_path)
    click.echo(
        f"eval n={report['n']} mean_reward={report['mean_reward']:.3f} "
        f"hallucination_rate={report['hallucination_rate']:.3f}"
    )


@main.command("oracle")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--tasks", "tasks_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default=None, type=click.Path())
def oracle_cmd(corpus_path: str, tasks_path: str, out_path: str | None) -> None:
    """Brute-force optimal policy per task; the acceptance baseline."""
    try:
        docs = load_corpus(corpus_path)
        instances = load_tasks(tasks_path)
    except (CorpusError, TaskError) as exc:
        raise CliError(str(exc)) from exc
    env = rl.RetrievalEnv(docs, DEFAULT_TEMPLATES)
    optima = [rl.brute_force_optimum(env, inst) for inst in instances]
    report = {
        "n": len(optima),
        "mean_optimal_reward": sum(o.reward for o in optima) / len(optima),
        "instances": [
            {
                "instance_id": o.instance_id,
                "reward": o.reward,
                "template_id": o.template_id,
                "support_doc_ids": list(o.support_doc_ids),
            }
            for o in optima
        ],
    }
    _emit_report(report, out_path)
    click.echo(
        f"oracle n={report['n']} mean_optimal_reward={report['mean_optimal_reward']:.3f}"
    )


@main.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def serve_cmd(config_path: str) -> None:
    """Start the HTTP service from a JSON config file."""
    import uvicorn

    try:
        config = ServiceConfig.from_file(config_path)
        state = build_state(config)
    except (ValueError, OSError) as exc:
        raise CliError(str(exc)) from exc
    app = create_app(state)
    uvicorn.run(app, host=config.host, port=config.port)


@main.command("feedback-train")
@click.option("--episodes", "episodes_path", required=True, type=click.Path(exists=True))
@click.option("--feedback", "feedback_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epochs", default=2000, type=int, show_default=True)
@click.option("--lr", default=0.05, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
def feedback_train_cmd(
    episodes_path: str,
    feedback_path: str,
    out_path: str,
    epochs: int,
    lr: float,
    seed: int,
) -> None:
    """Retrain the reward model from stored human feedback."""
    store = EpisodeStore(episodes_path)
    feedback = FeedbackStore(feedback_path)
    records = []
    for (episode_id, _), rec in sorted(feedback.live_view().items()):
        trace = store.get(episode_id)
        if trace is not None:
            records.append((rec, trace))
    if not records:
        raise CliError("no feedback records match stored episodes")
    model = RewardModel.create(seed=seed)
    model = train_reward_model(model, records, epochs=epochs, lr=lr)
    with open(out_path, "wb") as fh:
        fh.write(tinynn.save(model.net))
    click.echo(
        f"trained reward model on {len(records)} records, "
        f"final mse {model.training_log[-1]:.5f} -> {out_path}"
    )


def _emit_report(report: dict, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")


if __name__ == "__main__":
    main()
