"""The retrieval-and-prompting episode MDP and its deep Q-learning trainer.

An episode is two phases driven by one state-action value network:
pick a prompt template, then compose a support set from the BM25
candidate pool (select docs, then stop). The reward arrives only on the
terminal transition, straight from the task outcome, so the template
head and the retrieval head share one credit path.

Also home to the independent brute-force oracle (exhaustive enumeration
over templates x support subsets, possible because the simulated
reasoner is deterministic) and the frozen baselines the trained policy
is measured against.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
from dataclasses import dataclass

import numpy as np

from . import tinynn
from .corpus import CandidatePool, Document, InvertedIndex, build_index, tokenize, top_n
from .prompting import DEFAULT_TEMPLATES, PromptTemplate, aggregate, render_prompt
from .reasoner import ReasonerError, ReasonerResponse, SimulatedReasoner, TaskInstance
from .reward import (
    FeedbackStore,
    RewardModel,
    RewardOutcome,
    programmatic_reward,
    resolve_reward,
)

N_POOL = 10
K_MAX = 3
N_FEATURES = 12
DEFAULT_CONTEXT_BUDGET = 256

PHASE_TEMPLATE = "choose_template"
PHASE_DOCS = "choose_docs"
PHASE_DONE = "done"

METRICS_HEADER = "episode,reward,loss,epsilon,support_size,damaging_included,template_id"


class IllegalActionError(ValueError):
    """Raised when an action violates a legality rule; names the rule."""


class EpisodeError(RuntimeError):
    """Raised when an episode cannot run (e.g. empty candidate pool)."""


class TrainAborted(RuntimeError):
    """Training died mid-run (reasoner or episode failure); carries the
    per-episode metrics collected so far so callers can flush them."""

    def __init__(self, cause: BaseException, metrics: list["EpisodeMetrics"]):
        super().__init__(f"training aborted after {len(metrics)} episodes: {cause}")
        self.cause = cause
        self.metrics = metrics


@dataclass(frozen=True)
class Action:
    kind: str  # "template" | "select" | "stop"
    index: int = -1

    def label(self) -> str:
        if self.kind == "template":
            return f"template:{self.index}"
        if self.kind == "select":
            return f"select:{self.index}"
        return "stop"


def choose_template(t: int) -> Action:
    return Action(kind="template", index=t)


def select_doc(position: int) -> Action:
    return Action(kind="select", index=position)


STOP = Action(kind="stop")


@dataclass(frozen=True)
class EpisodeState:
    phase: str
    instance_id: str
    query: str
    pool: CandidatePool
    template_id: int | None = None
    selected: tuple[int, ...] = ()  # pool positions, in selection order
    step: int = 0

    @property
    def selected_doc_ids(self) -> tuple[str, ...]:
        return tuple(self.pool.entries[p][0] for p in self.selected)


@dataclass(frozen=True)
class Transition:
    """One (s,a) step: joint features, terminal-only reward, and the joint
    features of every legal next action for the Bellman max."""

    sa_features: np.ndarray
    reward: float
    next_sa_features: tuple[np.ndarray, ...]
    terminal: bool

    def __post_init__(self) -> None:
        if self.terminal and self.next_sa_features:
            raise ValueError("terminal transition with a non-empty next action list")
        if not self.terminal and not self.next_sa_features:
            raise ValueError("non-terminal transition needs next legal actions")


class ReplayBuffer:
    """FIFO ring of transitions; batches sample uniformly without replacement."""

    def __init__(self, capacity: int = 10_000):
        if capacity <= 0:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._ring: list[Transition] = []
        self._next = 0
        self.inserted = 0

    def push(self, transition: Transition) -> None:
        if len(self._ring) < self.capacity:
            self._ring.append(transition)
        else:
            self._ring[self._next] = transition
        self._next = (self._next + 1) % self.capacity
        self.inserted += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if batch_size > len(self._ring):
            raise ValueError(
                f"cannot sample {batch_size} from buffer of {len(self._ring)}"
            )
        idx = rng.choice(len(self._ring), size=batch_size, replace=False)
        return [self._ring[i] for i in idx]

    def contents(self) -> list[Transition]:
        return list(self._ring)

    def __len__(self) -> int:
        return len(self._ring)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    lr: float = 0.01
    batch_size: int = 32
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 2_000
    target_sync: int = 100
    max_episodes: int = 5_000
    convergence_window: int = 50
    convergence_tolerance: float = 1e-3
    convergence_patience: int = 3
    warmup_transitions: int = 200
    buffer_capacity: int = 10_000
    hidden_sizes: tuple[int, ...] = (16, 16)
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0,1], got {self.gamma}")
        for eps in (self.epsilon_start, self.epsilon_end):
            if not 0.0 <= eps <= 1.0:
                raise ValueError(f"epsilon must be in [0,1], got {eps}")

    def epsilon_at(self, action_step: int) -> float:
        if self.epsilon_decay_steps <= 0:
            return self.epsilon_end
        frac = min(1.0, action_step / self.epsilon_decay_steps)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass(frozen=True)
class EpisodeTrace:
    """One full pass: template, support set, prompt, answer, reward.

    Re-running the simulated backend on (template, support set)
    reproduces the response bit for bit.
    """

    episode_id: str
    instance_id: str
    query: str
    task_description: str
    template_id: int
    support_doc_ids: tuple[str, ...]
    pool_entries: tuple[tuple[str, float], ...]
    prompt_text: str
    response: ReasonerResponse | None
    reward: RewardOutcome | None
    step_q_values: tuple[tuple[tuple[str, float], ...], ...]
    backend: str
    has_ground_truth: bool = True


class RetrievalEnv:
    """Immutable episode environment: index, docs, templates, limits."""

    def __init__(
        self,
        docs: list[Document],
        templates: tuple[PromptTemplate, ...] = DEFAULT_TEMPLATES,
        index: InvertedIndex | None = None,
        n_pool: int = N_POOL,
        k_max: int = K_MAX,
        context_budget: int = DEFAULT_CONTEXT_BUDGET,
    ):
        self.docs = {doc.id: doc for doc in docs}
        self.index = index if index is not None else build_index(docs)
        self.templates = templates
        self.n_pool = n_pool
        self.k_max = k_max
        self.context_budget = context_budget
        self._token_sets = {doc.id: frozenset(doc.tokens) for doc in docs}
        self._doc_lens = {doc.id: len(doc.tokens) for doc in docs}

    def candidate_pool(self, query: str, query_id: str = "") -> CandidatePool:
        return top_n(self.index, tokenize(query), self.n_pool, query_id=query_id)

    def initial_state(self, instance_id: str, query: str) -> EpisodeState:
        pool = self.candidate_pool(query, query_id=instance_id)
        if not pool.entries:
            raise EpisodeError(f"no candidates for query {query!r}")
        return EpisodeState(
            phase=PHASE_TEMPLATE, instance_id=instance_id, query=query, pool=pool
        )

    def token_set(self, doc_id: str) -> frozenset[str]:
        return self._token_sets[doc_id]

    def doc_len(self, doc_id: str) -> int:
        return self._doc_lens[doc_id]


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a or not b:
        return 0.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def legal_actions(env: RetrievalEnv, state: EpisodeState) -> list[Action]:
    """Enumeration order fixes argmax tie-breaks: templates ascending,
    doc selections by pool position, Stop last."""
    if state.phase == PHASE_TEMPLATE:
        return [choose_template(t) for t in range(len(env.templates))]
    if state.phase == PHASE_DOCS:
        actions = [
            select_doc(p)
            for p in range(len(state.pool.entries))
            if p not in state.selected
        ]
        if state.selected:
            actions.append(STOP)
        return actions
    return []


def check_legal(env: RetrievalEnv, state: EpisodeState, action: Action) -> None:
    if action.kind == "template":
        if state.phase != PHASE_TEMPLATE:
            raise IllegalActionError("ChooseTemplate is only legal in the template phase")
        if not 0 <= action.index < len(env.templates):
            raise IllegalActionError(
                f"template index {action.index} outside [0,{len(env.templates)})"
            )
    elif action.kind == "select":
        if state.phase != PHASE_DOCS:
            raise IllegalActionError("SelectDoc is only legal in the doc phase")
        if not 0 <= action.index < len(state.pool.entries):
            raise IllegalActionError(
                f"pool position {action.index} outside the candidate pool"
            )
        if action.index in state.selected:
            raise IllegalActionError(f"pool position {action.index} already selected")
        if len(state.selected) >= env.k_max:
            raise IllegalActionError("support set already at k_max")
    elif action.kind == "stop":
        if state.phase != PHASE_DOCS:
            raise IllegalActionError("Stop is only legal in the doc phase")
        if not state.selected:
            raise IllegalActionError("Stop requires a non-empty support set")
    else:
        raise IllegalActionError(f"unknown action kind {action.kind!r}")


def featurize(env: RetrievalEnv, state: EpisodeState, action: Action) -> np.ndarray:
    """Joint state-action features, fixed 12-dim layout.

    [docs-phase flag, |selected|/k_max, is-Stop, template one-hot (4),
    candidate BM25 / pool max, candidate rank / N_pool,
    query-candidate token Jaccard, max Jaccard vs selected docs,
    candidate length / avg doc length clipped to 2 then halved]
    Slots that do not apply to the action stay 0.
    """
    check_legal(env, state, action)
    f = np.zeros(N_FEATURES)
    f[0] = 1.0 if state.phase == PHASE_DOCS else 0.0
    f[1] = len(state.selected) / env.k_max
    f[2] = 1.0 if action.kind == "stop" else 0.0
    if action.kind == "template":
        f[3 + action.index] = 1.0
    elif state.template_id is not None:
        f[3 + state.template_id] = 1.0
    if action.kind == "select":
        doc_id, score = state.pool.entries[action.index]
        f[7] = score / state.pool.max_score
        f[8] = action.index / env.n_pool
        query_tokens = frozenset(tokenize(state.query))
        cand_tokens = env.token_set(doc_id)
        f[9] = _jaccard(query_tokens, cand_tokens)
        if state.selected:
            f[10] = max(
                _jaccard(cand_tokens, env.token_set(sel_id))
                for sel_id in state.selected_doc_ids
            )
        if env.index.avg_doc_len > 0:
            f[11] = min(2.0, env.doc_len(doc_id) / env.index.avg_doc_len) / 2.0
    return f


def step_state(env: RetrievalEnv, state: EpisodeState, action: Action) -> EpisodeState:
    check_legal(env, state, action)
    if action.kind == "template":
        return dataclasses.replace(
            state, phase=PHASE_DOCS, template_id=action.index, step=state.step + 1
        )
    if action.kind == "select":
        selected = state.selected + (action.index,)
        # forced stop: hitting k_max ends the episode without a Stop action
        phase = PHASE_DONE if len(selected) >= env.k_max else PHASE_DOCS
        return dataclasses.replace(
            state, phase=phase, selected=selected, step=state.step + 1
        )
    return dataclasses.replace(state, phase=PHASE_DONE, step=state.step + 1)


def q_values(
    net: tinynn.Mlp, env: RetrievalEnv, state: EpisodeState
) -> list[tuple[Action, float]]:
    """One forward pass per legal action, in enumeration order."""
    if state.phase == PHASE_DONE:
        raise IllegalActionError("no Q-values for a finished episode")
    return [
        (action, float(tinynn.forward(net, featurize(env, state, action))[0]))
        for action in legal_actions(env, state)
    ]


def select_action(
    qs: list[tuple[Action, float]],
    epsilon: float,
    rng: np.random.Generator | None = None,
) -> Action:
    """Epsilon-greedy; greedy ties break toward the earliest enumerated action."""
    if not qs:
        raise ValueError("no legal actions to select from")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0,1], got {epsilon}")
    if epsilon > 0.0:
        if rng is None:
            raise ValueError("exploration requires an rng")
        if rng.random() < epsilon:
            return qs[int(rng.integers(0, len(qs)))][0]
    best_action, best_q = qs[0]
    for action, q in qs[1:]:
        if q > best_q:
            best_action, best_q = action, q
    return best_action


def _unlabeled_outcome() -> RewardOutcome:
    # no ground truth: the UNKNOWN answer scores as an abstain until a
    # human rating arrives
    return RewardOutcome(value=0.0, kind="abstain", source="programmatic")


def run_episode(
    net: tinynn.Mlp,
    env: RetrievalEnv,
    instance: TaskInstance | None,
    config: TrainConfig,
    mode: str,
    backend,
    rng: np.random.Generator | None = None,
    episode_id: str = "",
    action_step: int = 0,
    query: str | None = None,
    task_description: str | None = None,
) -> tuple[EpisodeTrace, list[Transition]]:
    """Play one episode; train mode explores and records transitions,
    eval mode is greedy and records none.

    A reasoner failure aborts the episode: nothing is returned and no
    transitions leak out.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if instance is not None:
        query = instance.query
        task_description = instance.task_description
        instance_id = instance.instance_id
    else:
        if query is None or task_description is None:
            raise ValueError("unlabeled episodes need query and task_description")
        instance_id = ""
    state = env.initial_state(instance_id, query)

    pending: list[tuple[np.ndarray, tuple[np.ndarray, ...], bool]] = []
    step_qs: list[tuple[tuple[str, float], ...]] = []
    while state.phase != PHASE_DONE:
        qs = q_values(net, env, state)
        step_qs.append(tuple((a.label(), q) for a, q in qs))
        epsilon = config.epsilon_at(action_step) if mode == "train" else 0.0
        action = select_action(qs, epsilon, rng)
        next_state = step_state(env, state, action)
        if mode == "train":
            terminal = next_state.phase == PHASE_DONE
            next_features = tuple(
                featurize(env, next_state, a) for a in legal_actions(env, next_state)
            )
            pending.append((featurize(env, state, action), next_features, terminal))
        state = next_state
        action_step += 1

    template = env.templates[state.template_id]
    rendered = render_prompt(template, task_description, query)
    selected_docs = [env.docs[d] for d in state.selected_doc_ids]
    agg = aggregate(rendered, [selected_docs], env.context_budget)
    support = agg.included_doc_ids
    response = backend.answer(agg, instance, support)

    if instance is not None:
        outcome = programmatic_reward(response, instance)
        has_truth = True
    else:
        outcome = _unlabeled_outcome()
        has_truth = False

    trace = EpisodeTrace(
        episode_id=episode_id,
        instance_id=instance_id,
        query=query,
        task_description=task_description,
        template_id=state.template_id,
        support_doc_ids=state.selected_doc_ids,
        pool_entries=state.pool.entries,
        prompt_text=agg.final_text,
        response=response,
        reward=outcome,
        step_q_values=tuple(step_qs),
        backend=backend.backend,
        has_ground_truth=has_truth,
    )
    transitions = [
        Transition(
            sa_features=sa,
            reward=outcome.value if terminal else 0.0,
            next_sa_features=next_features if not terminal else (),
            terminal=terminal,
        )
        for sa, next_features, terminal in pending
    ]
    return trace, transitions


def bellman_targets(
    batch: list[Transition], target_net: tinynn.Mlp, gamma: float
) -> np.ndarray:
    """y = r for terminal transitions, else r + gamma * max target-net Q."""
    if not batch:
        raise ValueError("empty batch")
    targets = np.empty(len(batch))
    for i, t in enumerate(batch):
        if t.terminal:
            targets[i] = t.reward
        else:
            best = max(
                float(tinynn.forward(target_net, f)[0]) for f in t.next_sa_features
            )
            targets[i] = t.reward + gamma * best
    return targets


def dqn_update(
    net: tinynn.Mlp,
    target_net: tinynn.Mlp,
    batch: list[Transition],
    lr: float,
    gamma: float = 0.99,
) -> tuple[tinynn.Mlp, float]:
    """One SGD step on the mean squared Bellman error of the batch."""
    targets = bellman_targets(batch, target_net, gamma)
    grads = tinynn.zero_gradients(net)
    loss = 0.0
    n = len(batch)
    for t, y in zip(batch, targets):
        q = float(tinynn.forward(net, t.sa_features)[0])
        err = q - y
        loss += err * err
        sample_grads = tinynn.backward(net, t.sa_features, np.array([2.0 * err / n]))
        grads = tinynn.add_gradients(grads, sample_grads)
    loss = float(loss / n)
    if not np.isfinite(loss):
        raise ValueError(f"non-finite loss {loss}; update refused")
    return tinynn.sgd_step(net, grads, lr), loss


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    reward: float
    loss: float | None
    epsilon: float
    support_size: int
    damaging_included: bool
    template_id: int


@dataclass
class TrainResult:
    """`net` is the snapshot from the best reward window (the policy the
    stopping rule says training converged to); `final_net` is whatever the
    last update produced."""

    net: tinynn.Mlp
    target_net: tinynn.Mlp
    final_net: tinynn.Mlp
    metrics: list[EpisodeMetrics]
    episodes_run: int
    converged: bool
    best_window_reward: float


def train(
    docs: list[Document],
    instances: list[TaskInstance],
    config: TrainConfig,
    backend=None,
    env: RetrievalEnv | None = None,
    feedback: FeedbackStore | None = None,
    reward_model: RewardModel | None = None,
) -> TrainResult:
    """DQN training loop over the task instances.

    Instances are visited round-robin with a seeded shuffle per pass.
    The terminal reward pushed into replay honors the source precedence
    (human feedback, then programmatic, then the reward model). Stops at
    max_episodes or when the windowed mean reward stops improving.
    """
    if not instances:
        raise ValueError("need at least one training instance")
    if backend is None:
        backend = SimulatedReasoner()
    if env is None:
        env = RetrievalEnv(docs)
    rng = np.random.default_rng(config.seed)
    net = tinynn.init((N_FEATURES, *config.hidden_sizes, 1), seed=config.seed)
    target_net = net
    buffer = ReplayBuffer(config.buffer_capacity)
    metrics: list[EpisodeMetrics] = []
    rewards: list[float] = []
    action_step = 0
    updates = 0
    order: list[int] = []
    prev_window: float | None = None
    patience = 0
    converged = False
    best_net, best_target = net, target_net
    best_window = -np.inf

    for episode in range(config.max_episodes):
        if not order:
            order = list(rng.permutation(len(instances)))
        instance = instances[int(order.pop(0))]
        try:
            trace, transitions = run_episode(
                net,
                env,
                instance,
                config,
                mode="train",
                backend=backend,
                rng=rng,
                episode_id=f"train-{episode:06d}",
                action_step=action_step,
            )
        except (ReasonerError, EpisodeError) as exc:
            raise TrainAborted(exc, metrics) from exc
        action_step += len(transitions)
        resolved = resolve_reward(trace, feedback, reward_model)
        transitions[-1] = dataclasses.replace(transitions[-1], reward=resolved)
        for t in transitions:
            buffer.push(t)

        loss: float | None = None
        if buffer.inserted >= config.warmup_transitions:
            batch = buffer.sample(config.batch_size, rng)
            net, loss = dqn_update(net, target_net, batch, config.lr, config.gamma)
            updates += 1
            if updates % config.target_sync == 0:
                target_net = net

        rewards.append(resolved)
        metrics.append(
            EpisodeMetrics(
                episode=episode,
                reward=resolved,
                loss=loss,
                epsilon=config.epsilon_at(action_step),
                support_size=len(trace.support_doc_ids),
                damaging_included=bool(
                    instance.damaging and set(trace.support_doc_ids) & set(instance.damaging)
                ),
                template_id=trace.template_id,
            )
        )

        if (episode + 1) % config.convergence_window == 0:
            window = sum(rewards[-config.convergence_window:]) / config.convergence_window
            if window > best_window:
                best_window = window
                best_net, best_target = net, target_net
            # "stops improving" is only meaningful once exploration has
            # annealed; before that the windowed mean tracks the epsilon
            # schedule, not the policy
            if action_step >= config.epsilon_decay_steps:
                if prev_window is not None:
                    if window - prev_window < config.convergence_tolerance:
                        patience += 1
                    else:
                        patience = 0
                prev_window = window
                if patience >= config.convergence_patience:
                    converged = True
                    break

    return TrainResult(
        net=best_net,
        target_net=best_target,
        final_net=net,
        metrics=metrics,
        episodes_run=len(metrics),
        converged=converged,
        best_window_reward=float(best_window) if metrics else 0.0,
    )


def evaluate(
    net: tinynn.Mlp,
    env: RetrievalEnv,
    instances: list[TaskInstance],
    config: TrainConfig,
    backend=None,
) -> list[EpisodeTrace]:
    """Greedy episodes, one per instance; pure given the network snapshot."""
    if backend is None:
        backend = SimulatedReasoner()
    traces = []
    for i, instance in enumerate(instances):
        trace, _ = run_episode(
            net, env, instance, config, mode="eval", backend=backend,
            episode_id=f"eval-{i:06d}",
        )
        traces.append(trace)
    return traces


def run_random_episode(
    env: RetrievalEnv,
    instance: TaskInstance,
    rng: np.random.Generator,
    backend=None,
) -> EpisodeTrace:
    """Uniform-random legal actions; the floor any learned policy must beat."""
    if backend is None:
        backend = SimulatedReasoner()
    state = env.initial_state(instance.instance_id, instance.query)
    while state.phase != PHASE_DONE:
        actions = legal_actions(env, state)
        state = step_state(env, state, actions[int(rng.integers(0, len(actions)))])
    template = env.templates[state.template_id]
    rendered = render_prompt(template, instance.task_description, instance.query)
    selected_docs = [env.docs[d] for d in state.selected_doc_ids]
    agg = aggregate(rendered, [selected_docs], env.context_budget)
    response = backend.answer(agg, instance, agg.included_doc_ids)
    outcome = programmatic_reward(response, instance)
    return EpisodeTrace(
        episode_id="",
        instance_id=instance.instance_id,
        query=instance.query,
        task_description=instance.task_description,
        template_id=state.template_id,
        support_doc_ids=state.selected_doc_ids,
        pool_entries=state.pool.entries,
        prompt_text=agg.final_text,
        response=response,
        reward=outcome,
        step_q_values=(),
        backend=backend.backend,
    )


def bm25_topk_trace(
    env: RetrievalEnv, instance: TaskInstance, backend=None, template_id: int = 0
) -> EpisodeTrace:
    """Frozen first-stage baseline: take the top k_max candidates as-is."""
    if backend is None:
        backend = SimulatedReasoner()
    pool = env.candidate_pool(instance.query, query_id=instance.instance_id)
    if not pool.entries:
        raise EpisodeError(f"no candidates for query {instance.query!r}")
    support_ids = pool.doc_ids[: env.k_max]
    template = env.templates[template_id]
    rendered = render_prompt(template, instance.task_description, instance.query)
    agg = aggregate(rendered, [[env.docs[d] for d in support_ids]], env.context_budget)
    response = backend.answer(agg, instance, agg.included_doc_ids)
    outcome = programmatic_reward(response, instance)
    return EpisodeTrace(
        episode_id="",
        instance_id=instance.instance_id,
        query=instance.query,
        task_description=instance.task_description,
        template_id=template_id,
        support_doc_ids=tuple(support_ids),
        pool_entries=pool.entries,
        prompt_text=agg.final_text,
        response=response,
        reward=outcome,
        step_q_values=(),
        backend=backend.backend,
    )


@dataclass(frozen=True)
class InstanceOptimum:
    instance_id: str
    template_id: int
    support_doc_ids: tuple[str, ...]
    reward: float


def brute_force_optimum(
    env: RetrievalEnv, instance: TaskInstance, backend=None
) -> InstanceOptimum:
    """Exhaustive search over templates x non-empty support subsets <= k_max.

    Only meaningful against the deterministic simulated backend; ties
    prefer smaller supports, then lexicographic ids, then template id.
    """
    if backend is None:
        backend = SimulatedReasoner()
    if backend.backend != "simulated":
        raise EpisodeError("brute-force search requires the simulated backend")
    pool = env.candidate_pool(instance.query, query_id=instance.instance_id)
    if not pool.entries:
        raise EpisodeError(f"no candidates for query {instance.query!r}")
    best: tuple[float, int, tuple[str, ...], int] | None = None
    ids = pool.doc_ids
    for template_id in range(len(env.templates)):
        template = env.templates[template_id]
        rendered = render_prompt(template, instance.task_description, instance.query)
        for size in range(1, min(env.k_max, len(ids)) + 1):
            for combo in itertools.combinations(ids, size):
                agg = aggregate(
                    rendered, [[env.docs[d] for d in combo]], env.context_budget
                )
                response = backend.answer(agg, instance, agg.included_doc_ids)
                value = programmatic_reward(response, instance).value
                key = (-value, size, tuple(sorted(combo)), template_id)
                if best is None or key < (-best[0], best[1], best[2], best[3]):
                    best = (value, size, tuple(sorted(combo)), template_id)
    assert best is not None
    value, _, support, template_id = best
    return InstanceOptimum(
        instance_id=instance.instance_id,
        template_id=template_id,
        support_doc_ids=support,
        reward=value,
    )


def write_metrics(path: str, metrics: list[EpisodeMetrics]) -> None:
    """CSV with reproducible float formatting (repr)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(METRICS_HEADER + "\n")
        for m in metrics:
            loss = repr(float(m.loss)) if m.loss is not None else ""
            fh.write(
                f"{m.episode},{float(m.reward)!r},{loss},{float(m.epsilon)!r},"
                f"{m.support_size},{int(m.damaging_included)},{m.template_id}\n"
            )


def read_metrics(path: str) -> list[EpisodeMetrics]:
    metrics = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            metrics.append(
                EpisodeMetrics(
                    episode=int(parts[0]),
                    reward=float(parts[1]),
                    loss=float(parts[2]) if parts[2] else None,
                    epsilon=float(parts[3]),
                    support_size=int(parts[4]),
                    damaging_included=bool(int(parts[5])),
                    template_id=int(parts[6]),
                )
            )
    return metrics


def corpus_hash(docs: list[Document]) -> str:
    digest = hashlib.sha256()
    for doc in sorted(docs, key=lambda d: d.id):
        digest.update(doc.id.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(doc.text.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


def save_checkpoint(
    path: str, net: tinynn.Mlp, config: TrainConfig, corpus_digest: str
) -> None:
    """Network JSON at `path` plus a `<path>.meta.json` sidecar."""
    blob = tinynn.save(net)
    with open(path, "wb") as fh:
        fh.write(blob)
    sidecar = {
        "config": dataclasses.asdict(config),
        "corpus_hash": corpus_digest,
        "content_hash": hashlib.sha256(blob).hexdigest(),
    }
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[tinynn.Mlp, dict]:
    with open(path, "rb") as fh:
        net = tinynn.load(fh.read())
    meta: dict = {}
    try:
        with open(path + ".meta.json", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        pass
    return net, meta
