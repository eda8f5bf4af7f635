"""The multi-policy controller: one Q-learning agent per domain, a domain
transition scorer choosing which agent acts, and stack-based resumption so
a completed subdialogue hands control back to the domain that spawned it.

The flat baseline (one agent over the union feature and action space) runs
through the same environment so the two learners differ only in how the
policy is factored.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentHyperparams, DqnAgent, Transition
from .classifiers import DomainClassifier
from .dialogue import META, ActionCatalog
from .env import DialogueEnv, EnvState
from .features import TextPipeline, Vocabulary, vectorize
from .metrics import MetricsRow, TrainingLog


class ControllerError(RuntimeError):
    pass


@dataclass
class DomainTransitionModel:
    """Scores the next domain from the words of the last exchange.

    Rule-based mode counts keyword hits, weighting user words above system
    words since the user drives topic shifts; the learned mode consults the
    trained domain classifier and falls back to the rules whenever its
    margin between the top two classes is small. Ties always resolve to the
    current domain, then registry order.
    """

    registry: list[str]
    keywords: dict[str, set[str]]
    mode: str = "rule_based"
    classifier: DomainClassifier | None = None
    margin_threshold: float = 0.2
    predefined_start: str | None = META
    initial_scores: dict[str, float] | None = None
    user_weight: float = 3.0
    system_weight: float = 1.0

    def rule_scores(
        self, sys_tokens: list[str], usr_tokens: list[str]
    ) -> dict[str, float]:
        scores = {d: 0.0 for d in self.registry}
        for t in sys_tokens:
            for d, words in self.keywords.items():
                if t in words:
                    scores[d] += self.system_weight
        for t in usr_tokens:
            for d, words in self.keywords.items():
                if t in words:
                    scores[d] += self.user_weight
        return scores

    def choose(
        self, current: str, sys_tokens: list[str], usr_tokens: list[str]
    ) -> str:
        if self.mode == "learned" and self.classifier is not None and usr_tokens:
            margins = self.classifier.margins(usr_tokens)
            order = np.argsort(margins)[::-1]
            if margins[order[0]] - margins[order[1]] >= self.margin_threshold:
                return self.classifier.domains[int(order[0])]
        scores = self.rule_scores(sys_tokens, usr_tokens)
        best = max(scores.values())
        candidates = [d for d in self.registry if scores[d] == best]
        if current in candidates:
            return current
        return candidates[0]


def initial_domain(model: DomainTransitionModel) -> str:
    """The predefined start domain when configured, otherwise the best
    initial score, ties resolving to registry order."""
    if not model.registry:
        raise ControllerError("empty domain registry")
    if model.predefined_start is not None:
        if model.predefined_start not in model.registry:
            raise ControllerError(f"start domain {model.predefined_start!r} not registered")
        return model.predefined_start
    scores = model.initial_scores or {d: 0.0 for d in model.registry}
    best = max(scores.get(d, 0.0) for d in model.registry)
    for d in model.registry:
        if scores.get(d, 0.0) == best:
            return d
    return model.registry[0]


@dataclass
class StackEntry:
    domain: str
    # cursor: the exchange the domain was interrupted at, for inspection
    sys_tokens: list[str]
    user_tokens: list[tuple[str, float]]
    turn: int


class DomainStack:
    def __init__(self):
        self.entries: list[StackEntry] = []
        self.pushes = 0
        self.pops = 0

    def push(self, entry: StackEntry) -> None:
        self.entries.append(entry)
        self.pushes += 1

    def pop(self) -> StackEntry | None:
        if not self.entries:
            return None
        self.pops += 1
        return self.entries.pop()

    def __len__(self) -> int:
        return len(self.entries)


def next_domain(
    model: DomainTransitionModel,
    stack: DomainStack,
    current: str,
    state: EnvState,
    subdialogue_done: bool,
    pipeline: TextPipeline,
) -> str | None:
    """One application of the transition function.

    A finished subdialogue resumes the previous domain by popping the stack
    (an empty stack ends the episode: None). Otherwise the scorer picks the
    next domain from the processed last exchange; an actual switch pushes
    the current domain, while self-transitions are not events at all.
    """
    if subdialogue_done:
        entry = stack.pop()
        return entry.domain if entry is not None else None
    sys_toks = pipeline.process(state.last_sys_tokens)
    usr_toks = []
    for tok, _ in state.last_user:
        usr_toks.extend(pipeline.process([tok]))
    target = model.choose(current, sys_toks, usr_toks)
    if target != current:
        stack.push(
            StackEntry(current, list(state.last_sys_tokens), list(state.last_user), state.turn)
        )
    return target


@dataclass
class EpisodeResult:
    reward: float = 0.0
    length: int = 0
    success: float = 0.0
    capped: bool = False
    domain_steps: dict[str, int] = field(default_factory=dict)
    domains_visited: list[str] = field(default_factory=list)
    steps_trained: int = 0
    learn_seconds: float = 0.0


class NdqnSystem:
    """Per-domain agents sharing one environment; exactly one acts per turn."""

    def __init__(
        self,
        catalog: ActionCatalog,
        vocabs: dict[str, Vocabulary],
        pipeline: TextPipeline,
        model: DomainTransitionModel,
        hyper: AgentHyperparams,
        seed: int = 0,
        hidden: tuple[int, ...] = (80, 80),
    ):
        self.catalog = catalog
        self.vocabs = vocabs
        self.pipeline = pipeline
        self.model = model
        self.hyper = hyper
        self.domains = [d for d in model.registry if d in vocabs]
        self.local_actions: dict[str, list[int]] = {
            d: catalog.domain_indices(d) for d in self.domains
        }
        self.global_to_local: dict[str, dict[int, int]] = {
            d: {g: i for i, g in enumerate(acts)} for d, acts in self.local_actions.items()
        }
        ss = np.random.SeedSequence(seed)
        children = ss.spawn(len(self.domains))
        self.agents: dict[str, DqnAgent] = {}
        self.rngs: dict[str, np.random.Generator] = {}
        for d, child in zip(self.domains, children):
            init_seed = int(child.generate_state(1)[0])
            self.agents[d] = DqnAgent(
                len(vocabs[d]), len(self.local_actions[d]), hyper,
                seed=init_seed, hidden=hidden,
            )
            self.rngs[d] = np.random.default_rng(child)
        for d in self.domains:
            if not self.local_actions[d]:
                raise ControllerError(f"domain {d} has no actions in the catalog")

    def features(self, domain: str, state: EnvState) -> np.ndarray:
        sys_toks = self.pipeline.process(state.last_sys_tokens)
        usr = []
        for tok, conf in state.last_user:
            for p in self.pipeline.process([tok]):
                usr.append((p, conf))
        return vectorize(sys_toks, usr, self.vocabs[domain]).values

    def total_steps(self) -> int:
        return sum(a.step_counter for a in self.agents.values())


class FlatSystem:
    """The single-policy baseline: union vocabulary, union action set."""

    def __init__(
        self,
        catalog: ActionCatalog,
        global_vocab: Vocabulary,
        pipeline: TextPipeline,
        hyper: AgentHyperparams,
        seed: int = 0,
        hidden: tuple[int, ...] = (80, 80),
    ):
        self.catalog = catalog
        self.vocab = global_vocab
        self.pipeline = pipeline
        self.hyper = hyper
        ss = np.random.SeedSequence(seed)
        child = ss.spawn(1)[0]
        self.agent = DqnAgent(
            len(global_vocab), len(catalog), hyper,
            seed=int(child.generate_state(1)[0]), hidden=hidden,
        )
        self.rng = np.random.default_rng(child)

    def features(self, state: EnvState) -> np.ndarray:
        sys_toks = self.pipeline.process(state.last_sys_tokens)
        usr = []
        for tok, conf in state.last_user:
            for p in self.pipeline.process([tok]):
                usr.append((p, conf))
        return vectorize(sys_toks, usr, self.vocab).values

    def total_steps(self) -> int:
        return self.agent.step_counter


def run_episode(
    system: NdqnSystem,
    env: DialogueEnv,
    rng_env: np.random.Generator,
    epsilon: float | None = None,
    learn: bool = True,
    goal=None,
) -> EpisodeResult:
    """One full dialogue under the networked policy.

    Follows the nested loop structure: act within the current domain until
    the episode ends or the transition function moves focus; transitions
    land only in the acting agent's replay memory. ``epsilon=None`` uses
    each agent's own annealing schedule.
    """
    state = env.reset(rng_env, goal=goal)
    stack = DomainStack()
    d = initial_domain(system.model)
    res = EpisodeResult(domains_visited=[d])
    s_vec = system.features(d, state)

    while True:
        agent = system.agents[d]
        constrained = env.constrained_actions(state)
        local_valid = [
            system.global_to_local[d][g] for g in constrained
            if g in system.global_to_local[d]
        ]
        if not local_valid:
            local_valid = list(range(len(system.local_actions[d])))
        eps = epsilon if epsilon is not None else agent.decay_epsilon()

        mark = time.perf_counter()
        a_local = agent.select_action(s_vec, local_valid, eps, system.rngs[d])
        res.learn_seconds += time.perf_counter() - mark

        g_action = system.local_actions[d][a_local]
        _, nstate, terminal = env.step(state, g_action, rng_env)
        breakdown = env.reward(state, g_action, nstate)

        mark = time.perf_counter()
        ns_vec = system.features(d, nstate)
        agent.store(Transition(s_vec, a_local, breakdown.total, ns_vec, terminal))
        if learn:
            if agent.train_on_minibatch(system.rngs[d]) is not None:
                res.steps_trained += 1
        res.learn_seconds += time.perf_counter() - mark

        res.reward += breakdown.total
        res.length += 1
        res.domain_steps[d] = res.domain_steps.get(d, 0) + 1

        subdone = nstate.presented_now == d
        state = nstate
        if terminal:
            break
        d_next = next_domain(system.model, stack, d, state, subdone, system.pipeline)
        if d_next is None:
            break  # popped an empty stack: nothing left to resume
        if d_next != d:
            d = d_next
            res.domains_visited.append(d)
            s_vec = system.features(d, state)
        else:
            s_vec = ns_vec

    res.capped = env.is_capped(state)
    res.success = 0.0 if res.capped else env.task_success(state)
    return res


def run_flat_episode(
    system: FlatSystem,
    env: DialogueEnv,
    rng_env: np.random.Generator,
    epsilon: float | None = None,
    learn: bool = True,
    goal=None,
) -> EpisodeResult:
    state = env.reset(rng_env, goal=goal)
    res = EpisodeResult(domains_visited=[])
    s_vec = system.features(state)
    while True:
        constrained = sorted(env.constrained_actions(state))
        eps = epsilon if epsilon is not None else system.agent.decay_epsilon()

        mark = time.perf_counter()
        action = system.agent.select_action(s_vec, constrained, eps, system.rng)
        res.learn_seconds += time.perf_counter() - mark

        _, nstate, terminal = env.step(state, action, rng_env)
        breakdown = env.reward(state, action, nstate)

        mark = time.perf_counter()
        ns_vec = system.features(nstate)
        system.agent.store(Transition(s_vec, action, breakdown.total, ns_vec, terminal))
        if learn:
            if system.agent.train_on_minibatch(system.rng) is not None:
                res.steps_trained += 1
        res.learn_seconds += time.perf_counter() - mark

        res.reward += breakdown.total
        res.length += 1
        domain = env.catalog[action].domain
        res.domain_steps[domain] = res.domain_steps.get(domain, 0) + 1
        state = nstate
        s_vec = ns_vec
        if terminal:
            break
    res.capped = env.is_capped(state)
    res.success = 0.0 if res.capped else env.task_success(state)
    return res


def _run_training(
    episode_fn,
    env: DialogueEnv,
    budget: int,
    seed: int,
    checkpoint_every: int,
    meta: dict,
) -> TrainingLog:
    """Shared training loop: episodes until the learning-step budget is
    consumed, aggregating a metrics row per checkpoint interval.

    elapsed_seconds accumulates only the policy-side work (feature encoding,
    action selection, replay and gradient updates), so run comparisons
    reflect learning cost rather than simulator overhead.
    """
    rng_env = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    log = TrainingLog(meta=dict(meta, budget=budget, seed=seed))
    if budget <= 0:
        return log
    total_trained = 0
    episodes = 0
    elapsed = 0.0
    next_mark = checkpoint_every
    window: list[EpisodeResult] = []
    while total_trained < budget:
        res = episode_fn(rng_env)
        episodes += 1
        total_trained += res.steps_trained
        elapsed += res.learn_seconds
        window.append(res)
        if total_trained >= next_mark or total_trained >= budget:
            log.rows.append(
                MetricsRow(
                    step=total_trained,
                    episodes=episodes,
                    avg_reward=float(np.mean([r.reward for r in window])),
                    avg_success=float(np.mean([r.success for r in window])),
                    avg_length=float(np.mean([r.length for r in window])),
                    elapsed_seconds=elapsed,
                )
            )
            window = []
            while next_mark <= total_trained:
                next_mark += checkpoint_every
    return log


def train(
    system: NdqnSystem,
    env: DialogueEnv,
    budget: int,
    seed: int,
    checkpoint_every: int = 1000,
) -> TrainingLog:
    return _run_training(
        lambda rng: run_episode(system, env, rng, epsilon=None, learn=True),
        env, budget, seed, checkpoint_every, {"mode": "ndqn"},
    )


def train_flat_baseline(
    system: FlatSystem,
    env: DialogueEnv,
    budget: int,
    seed: int,
    checkpoint_every: int = 1000,
) -> TrainingLog:
    return _run_training(
        lambda rng: run_flat_episode(system, env, rng, epsilon=None, learn=True),
        env, budget, seed, checkpoint_every, {"mode": "dqn_flat"},
    )


def evaluate(system, env: DialogueEnv, episodes: int, seed: int) -> dict:
    """Greedy (epsilon 0) evaluation over fresh goals; no learning."""
    rng_env = np.random.default_rng(np.random.SeedSequence([seed, 99]))
    results = []
    for _ in range(episodes):
        if isinstance(system, FlatSystem):
            results.append(run_flat_episode(system, env, rng_env, epsilon=0.0, learn=False))
        else:
            results.append(run_episode(system, env, rng_env, epsilon=0.0, learn=False))
    if not results:
        return {"episodes": 0, "avg_reward": 0.0, "avg_success": 0.0, "avg_length": 0.0}
    return {
        "episodes": episodes,
        "avg_reward": float(np.mean([r.reward for r in results])),
        "avg_success": float(np.mean([r.success for r in results])),
        "avg_length": float(np.mean([r.length for r in results])),
    }


def replay_script(
    env: DialogueEnv,
    model: DomainTransitionModel,
    pipeline: TextPipeline,
    script: list[tuple[str, str]],
    goal,
    rng: np.random.Generator,
) -> tuple[list[str], float, EnvState]:
    """Drive the environment with a fixed (domain, act key) sequence while
    tracking domain transitions exactly as a live episode would. Returns the
    visited-domain sequence, final task success and final state."""
    env.scripted = True
    try:
        state = env.reset(rng, goal=goal)
        stack = DomainStack()
        d = initial_domain(model)
        visited = [d]
        for domain, key in script:
            if domain != d:
                raise ControllerError(
                    f"script expects domain {domain} but control is in {d}"
                )
            action = env.catalog.find(domain, key)
            _, state, terminal = env.step(state, action, rng)
            if terminal:
                break
            subdone = state.presented_now == d
            d_next = next_domain(model, stack, d, state, subdone, pipeline)
            if d_next is None:
                break
            if d_next != d:
                d = d_next
                visited.append(d)
        return visited, env.task_success(state), state
    finally:
        env.scripted = False
