"""Simulated multi-domain information-seeking environment.

One step = one system act. The environment renders the act from stochastic
templates, updates slot bookkeeping, simulates a goal-consistent but noisy
user reply, and scores the step as goal reward (task success at terminal
steps) plus a data-like probability of the chosen act minus a fixed
per-step length penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifiers import NaiveBayesModel
from .dialogue import ActionCatalog, DialogueAct, DomainSpec, META
from .features import SlotLexicon, TextPipeline, Vocabulary, tokenize, vectorize

ACTION_PROB_THRESHOLD = 1e-4
STEP_PENALTY = 0.1


class EnvError(RuntimeError):
    pass


@dataclass
class NoiseModel:
    """Recognition noise for simulated user replies. A corrupted slot mention
    is heard as a different value of the same slot at low confidence."""

    slot_corrupt: float = 0.08
    filler_corrupt: float = 0.03
    conf_ok: tuple[float, float] = (0.5, 1.0)
    conf_bad: tuple[float, float] = (0.3, 0.7)
    over_inform: float = 0.3
    enabled: bool = True


@dataclass
class UserGoal:
    domains: tuple[str, ...]  # information domains in the order the user wants them
    values: dict[str, dict[str, str]]

    def all_domains(self) -> tuple[str, ...]:
        return (META,) + self.domains


@dataclass
class RewardBreakdown:
    goal_reward: float
    data_reward: float
    length_penalty: float

    @property
    def total(self) -> float:
        return self.goal_reward + self.data_reward - self.length_penalty


@dataclass
class EnvState:
    goal: UserGoal
    heard: dict[str, dict[str, tuple[str, float] | None]]
    confirmed: dict[str, set[str]]
    retrieved: set[str]
    presented: set[str]
    turn: int = 0
    last_sys_tokens: list[str] = field(default_factory=list)
    last_user: list[tuple[str, float]] = field(default_factory=list)
    closed: bool = False
    declined: bool = False
    presented_now: str | None = None

    def copy(self) -> "EnvState":
        return EnvState(
            goal=self.goal,
            heard={d: dict(slots) for d, slots in self.heard.items()},
            confirmed={d: set(s) for d, s in self.confirmed.items()},
            retrieved=set(self.retrieved),
            presented=set(self.presented),
            turn=self.turn,
            last_sys_tokens=list(self.last_sys_tokens),
            last_user=list(self.last_user),
            closed=self.closed,
            declined=self.declined,
            presented_now=None,
        )

    def pending_domains(self) -> list[str]:
        return [d for d in self.goal.domains if d not in self.presented]


class Templates:
    """Parsed verbalisation fixture: system pools, confirmation wrappers and
    phrase fragments, and the user simulator's utterance pools."""

    def __init__(self):
        self.system: dict[tuple[str, str], list[str]] = {}
        self.wraps: dict[str, list[str]] = {}
        self.phrases: dict[tuple[str, ...], str] = {}
        self.user: dict[str, list[str]] = {}

    @classmethod
    def parse(cls, text: str) -> "Templates":
        t = cls()
        section: tuple[str, ...] | None = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                section = tuple(line[1:-1].split())
                continue
            if section is None:
                raise EnvError(f"template line outside any section: {line!r}")
            kind = section[0]
            if kind == "system":
                t.system.setdefault((section[1], section[2]), []).append(line)
            elif kind == "wrap":
                t.wraps.setdefault(section[1], []).append(line)
            elif kind == "phrase":
                t.phrases[tuple(section[1].split("+"))] = line
            elif kind == "user":
                t.user.setdefault(" ".join(section[1:]), []).append(line)
            else:
                raise EnvError(f"unknown template section kind {kind!r}")
        return t

    def pick(self, pool: list[str], rng: np.random.Generator, scripted: bool) -> str:
        if scripted or len(pool) == 1:
            return pool[0]
        return pool[int(rng.integers(len(pool)))]


def template_slots(template: str) -> list[str]:
    """Slot placeholders appearing in a user template, in order."""
    out = []
    rest = template
    while "{" in rest:
        rest = rest.split("{", 1)[1]
        name, rest = rest.split("}", 1)
        out.append(name)
    return out


@dataclass
class EnvConfig:
    domains: list[DomainSpec]
    lexicon: SlotLexicon
    templates: Templates
    venues: list[tuple[str, str, str]]  # (domain, match value, venue token)
    noise: NoiseModel = field(default_factory=NoiseModel)
    max_turns: int = 100
    include_meta: bool = True
    # probability of a goal containing 0, 1 or 2 information domains
    goal_domain_weights: tuple[float, ...] = (0.05, 0.50, 0.45)
    strict_actions: bool = False

    def spec_for(self, domain: str) -> DomainSpec:
        for d in self.domains:
            if d.name == domain:
                return d
        raise EnvError(f"unknown domain {domain!r}")


class DialogueEnv:
    """One instance simulates any number of sequential episodes; all mutable
    per-episode data lives in the EnvState values it hands out."""

    def __init__(
        self,
        config: EnvConfig,
        catalog: ActionCatalog,
        pipeline: TextPipeline,
        global_vocab: Vocabulary,
    ):
        self.config = config
        self.catalog = catalog
        self.pipeline = pipeline
        self.global_vocab = global_vocab
        self.nb: NaiveBayesModel | None = None
        self.scripted = False
        self._legit_cache = self._index_confirm_acts()

    def set_action_model(self, nb: NaiveBayesModel) -> None:
        self.nb = nb

    def _index_confirm_acts(self):
        confirms = []
        for i, act in enumerate(self.catalog.acts):
            if act.act_type in ("ExpConfirm", "ImpConfirm") and act.slots():
                confirms.append((i, act.domain, act.slots()))
        return confirms

    # -- episode lifecycle -------------------------------------------------

    def sample_goal(self, rng: np.random.Generator) -> UserGoal:
        info = [d for d in self.config.domains]
        weights = np.asarray(self.config.goal_domain_weights, dtype=float)
        weights = weights / weights.sum()
        count = int(rng.choice(len(weights), p=weights))
        count = min(count, len(info))
        picked = list(rng.permutation(len(info))[:count])
        chosen = [info[i] for i in picked]
        values: dict[str, dict[str, str]] = {}
        for d in chosen:
            values[d.name] = {}
            for s in d.slots:
                options = sorted(self.config.lexicon.slot_values[s])
                values[d.name][s] = options[int(rng.integers(len(options)))]
        return UserGoal(tuple(d.name for d in chosen), values)

    def reset(self, rng: np.random.Generator, goal: UserGoal | None = None) -> EnvState:
        goal = goal or self.sample_goal(rng)
        heard = {d.name: {s: None for s in d.slots} for d in self.config.domains}
        confirmed = {d.name: set() for d in self.config.domains}
        return EnvState(goal, heard, confirmed, set(), set())

    def is_terminal(self, state: EnvState) -> bool:
        if state.closed or state.turn >= self.config.max_turns:
            return True
        if not self.config.include_meta:
            return bool(state.goal.domains) and not state.pending_domains()
        return False

    def is_capped(self, state: EnvState) -> bool:
        """True when the episode ended by exhausting the turn budget rather
        than by a proper closing (or, without a meta domain, completion)."""
        if state.turn < self.config.max_turns:
            return False
        if state.closed:
            return False
        if not self.config.include_meta and not state.pending_domains():
            return False
        return True

    # -- system side -------------------------------------------------------

    def _venue_text(self, domain: str, state: EnvState) -> str:
        spec = self.config.spec_for(domain)
        match_slot = spec.slots[0]  # city for hotels, food for restaurants
        heard = state.heard[domain].get(match_slot)
        value = heard[0] if heard else None
        names = [v for d, m, v in self.config.venues if d == domain and m == value]
        if not names:
            names = [v for d, m, v in self.config.venues if d == domain][:2]
        return " ".join(names[:2])

    def _compose_phrases(self, act: DialogueAct, state: EnvState) -> str:
        spec = self.config.spec_for(act.domain)
        remaining = [s for s in spec.slots if s in act.slots()]
        combos = sorted(
            (k for k in self.config.templates.phrases if len(k) > 1),
            key=len,
            reverse=True,
        )
        parts: list[str] = []
        while remaining:
            slot = remaining[0]
            chosen: tuple[str, ...] = (slot,)
            for combo in combos:
                if combo[0] == slot and all(c in remaining for c in combo):
                    chosen = combo
                    break
            template = self.config.templates.phrases.get(chosen)
            if template is None:
                template = "{" + slot + "}"
            text = template
            for s in chosen:
                heard = state.heard[act.domain].get(s)
                text = text.replace("{" + s + "}", heard[0] if heard else "")
                remaining.remove(s)
            parts.append(" ".join(text.split()))
        return " ".join(parts)

    def render_system(
        self, act: DialogueAct, state: EnvState, rng: np.random.Generator
    ) -> str:
        tpl = self.config.templates
        if act.act_type in ("ExpConfirm", "ImpConfirm"):
            wrap = tpl.pick(tpl.wraps[act.act_type], rng, self.scripted)
            return wrap.replace("{phrases}", self._compose_phrases(act, state))
        pool = tpl.system.get((act.domain, act.key()))
        if pool is None:
            raise EnvError(f"no template for act {act}")
        text = tpl.pick(pool, rng, self.scripted)
        if "{venues}" in text:
            text = text.replace("{venues}", self._venue_text(act.domain, state))
        return text

    # -- user side ---------------------------------------------------------

    def _conf(self, rng: np.random.Generator, ok: bool) -> float:
        if not self.config.noise.enabled or self.scripted:
            return 1.0
        lo, hi = self.config.noise.conf_ok if ok else self.config.noise.conf_bad
        return float(rng.uniform(lo, hi))

    def _mention(
        self, goal: UserGoal, domain: str, slot: str, rng: np.random.Generator
    ) -> tuple[str, float]:
        """The (heard value, confidence) for one slot mention."""
        truth = goal.values[domain][slot]
        noise = self.config.noise
        if noise.enabled and not self.scripted and rng.random() < noise.slot_corrupt:
            options = sorted(self.config.lexicon.slot_values[slot] - {truth})
            wrong = options[int(rng.integers(len(options)))]
            return wrong, self._conf(rng, ok=False)
        return truth, self._conf(rng, ok=True)

    def _utter(
        self,
        template: str,
        mentions: dict[str, tuple[str, float]],
        rng: np.random.Generator,
        extra_text: str = "",
    ) -> list[tuple[str, float]]:
        """Render a user template into (token, confidence) pairs."""
        text = template
        for slot, (value, _) in mentions.items():
            text = text.replace("{" + slot + "}", value)
        if extra_text:
            text = text + " " + extra_text
        noise = self.config.noise
        mention_tokens = {v: c for v, c in mentions.values()}
        out: list[tuple[str, float]] = []
        for tok in tokenize(text):
            if tok in mention_tokens:
                out.append((tok, mention_tokens[tok]))
                continue
            if noise.enabled and not self.scripted and rng.random() < noise.filler_corrupt:
                pool = self.global_vocab.tokens
                swapped = pool[int(rng.integers(len(pool)))]
                out.append((swapped, self._conf(rng, ok=False)))
            else:
                out.append((tok, self._conf(rng, ok=True)))
        return out

    def _pick_user(self, name: str, rng: np.random.Generator) -> str:
        pool = self.config.templates.user[name]
        return self.config.templates.pick(pool, rng, self.scripted)

    def _initial_request(
        self, goal: UserGoal, domain: str, rng: np.random.Generator
    ) -> tuple[list[tuple[str, float]], dict[str, tuple[str, float]]]:
        template = self._pick_user(f"initial {domain}", rng)
        mentions = {}
        for slot in template_slots(template):
            mentions[slot] = self._mention(goal, domain, slot, rng)
        return self._utter(template, mentions, rng), mentions

    def _slot_answer(
        self, goal: UserGoal, domain: str, slot: str, state: EnvState, rng: np.random.Generator
    ) -> tuple[list[tuple[str, float]], dict[str, tuple[str, float]]]:
        template = self._pick_user(f"answer {slot}", rng)
        mentions = {slot: self._mention(goal, domain, slot, rng)}
        extra = ""
        noise = self.config.noise
        if noise.enabled and not self.scripted and rng.random() < noise.over_inform:
            unfilled = [
                s
                for s in self.config.spec_for(domain).slots
                if s != slot and state.heard[domain][s] is None
            ]
            if unfilled:
                other = unfilled[int(rng.integers(len(unfilled)))]
                mentions[other] = self._mention(goal, domain, other, rng)
                extra_template = self._pick_user(f"answer {other}", rng)
                extra = extra_template.replace("{" + other + "}", mentions[other][0])
        tokens = self._utter(template, mentions, rng, extra_text=extra)
        return tokens, mentions

    # -- the step ----------------------------------------------------------

    def step(
        self, state: EnvState, action: int, rng: np.random.Generator
    ) -> tuple[list[tuple[str, float]], EnvState, bool]:
        """Execute one system act; returns the (noisy) user reply, the next
        state and the terminal flag."""
        act = self.catalog[action]
        if self.config.strict_actions and action not in self.constrained_actions(state):
            raise EnvError(f"act {act} violates the constrained-action precondition")
        goal = state.goal

        nxt = state.copy()
        nxt.turn = state.turn + 1
        sys_text = self.render_system(act, state, rng)
        nxt.last_sys_tokens = tokenize(sys_text)

        reply: list[tuple[str, float]] = []
        fills: dict[str, tuple[str, float]] = {}

        goal_domains = set(goal.domains)
        if act.act_type in ("Request", "Apology") and act.domain != META:
            slot = act.slots()[0] if act.slots() else act.arg()
            if act.domain in goal_domains:
                reply, fills = self._slot_answer(goal, act.domain, slot, nxt, rng)
            else:
                reply = self._utter(self._pick_user("reject", rng), {}, rng)
        elif act.act_type in ("Request", "Apology", "AskFor"):
            # The open prompts: "how can I help you?" and "anything else?".
            pending = nxt.pending_domains()
            if pending:
                reply, fills = self._initial_request(goal, pending[0], rng)
            else:
                reply = self._utter(self._pick_user("decline", rng), {}, rng)
                nxt.declined = True
        elif act.act_type in ("ExpConfirm", "ImpConfirm"):
            reply, fills = self._confirm_reply(act, state, nxt, rng)
        elif act.act_type == "Retrieve":
            nxt.retrieved.add(act.domain)
        elif act.act_type == "Provide" and act.domain != META:
            if act.domain in state.retrieved:
                if act.domain not in nxt.presented:
                    nxt.presented_now = act.domain
                nxt.presented.add(act.domain)
        elif act.act_type == "Salutation" and act.arg() == "closing":
            nxt.closed = True
        # greeting / intro: framing only, the user just listens

        for slot, mention in fills.items():
            # every slot name belongs to exactly one domain
            for d in self.config.domains:
                if slot in d.slots:
                    nxt.heard[d.name][slot] = mention
                    break
        nxt.last_user = reply
        return reply, nxt, self.is_terminal(nxt)

    def _confirm_reply(self, act, state, nxt, rng):
        domain = act.domain
        named = list(act.slots())
        goal = state.goal
        if domain not in set(goal.domains):
            return self._utter(self._pick_user("reject", rng), {}, rng), {}
        wrong = []
        for s in named:
            heard = state.heard[domain].get(s)
            if heard is None or heard[0] != goal.values[domain][s]:
                wrong.append(s)
        if not wrong:
            nxt.confirmed[domain].update(named)
            if act.act_type == "ImpConfirm":
                return [], {}  # implicit confirmation goes unchallenged
            return self._utter(self._pick_user("affirm", rng), {}, rng), {}
        # Deny and restate the first misheard slot.
        slot = wrong[0]
        mention = self._mention(goal, domain, slot, rng)
        correction_tpl = self._pick_user(f"answer {slot}", rng)
        correction = correction_tpl.replace("{" + slot + "}", mention[0])
        deny = self._pick_user("deny", rng).replace("{correction}", correction)
        return self._utter(deny, {slot: mention}, rng), {slot: mention}

    # -- scoring -----------------------------------------------------------

    def task_success(self, state: EnvState) -> float:
        """Fraction of the goal achieved: per goal domain, confirmed correct
        slots plus the presentation indicator over slot count plus one."""
        if not state.goal.domains:
            return 1.0 if state.closed else 0.0
        scores = []
        for d in state.goal.domains:
            slots = self.config.spec_for(d).slots
            ok = 0
            for s in slots:
                heard = state.heard[d].get(s)
                if (
                    s in state.confirmed[d]
                    and heard is not None
                    and heard[0] == state.goal.values[d][s]
                ):
                    ok += 1
            scores.append((ok + (1 if d in state.presented else 0)) / (len(slots) + 1))
        return float(np.mean(scores))

    def _exchange_values(self, state: EnvState) -> np.ndarray:
        sys_toks = self.pipeline.process(state.last_sys_tokens)
        usr: list[tuple[str, float]] = []
        for tok, conf in state.last_user:
            for p in self.pipeline.process([tok]):
                usr.append((p, conf))
        return vectorize(sys_toks, usr, self.global_vocab).values

    def _posterior(self, state: EnvState) -> np.ndarray:
        if self.nb is None:
            raise EnvError("no action model attached")
        cached = getattr(state, "_nb_posterior", None)
        if cached is None:
            cached = self.nb.posterior(self._exchange_values(state))
            state._nb_posterior = cached  # memoised: states are step-immutable
        return cached

    def reward(
        self, prev: EnvState, action: int, nxt: EnvState
    ) -> RewardBreakdown:
        terminal = self.is_terminal(nxt)
        goal_reward = self.task_success(nxt) if terminal else 0.0
        data_reward = float(self._posterior(prev)[action]) if self.nb is not None else 0.0
        return RewardBreakdown(goal_reward, data_reward, STEP_PENALTY)

    # -- action constraints -------------------------------------------------

    def legitimate_actions(self, state: EnvState) -> set[int]:
        """Requests and apologies for unresolved slots plus confirmations of
        filled-but-unconfirmed slot sets."""
        out: set[int] = set()
        for i, act in enumerate(self.catalog.acts):
            if act.domain == META:
                continue
            if act.act_type == "Request":
                s = act.arg()
                if s in state.heard[act.domain] and state.heard[act.domain][s] is None:
                    out.add(i)
            elif act.act_type == "Apology":
                s = act.arg()
                if s in state.heard[act.domain] and s not in state.confirmed[act.domain]:
                    out.add(i)
        for i, domain, slots in self._legit_cache:
            heard = state.heard[domain]
            if all(heard.get(s) is not None for s in slots) and any(
                s not in state.confirmed[domain] for s in slots
            ):
                out.add(i)
        return out

    def constrained_actions(self, state: EnvState) -> set[int]:
        """Data-likely acts (posterior above threshold) extended with the
        always-legitimate set; falls back to the full catalog rather than
        ever returning an empty set."""
        out: set[int] = set()
        if self.nb is not None:
            post = self._posterior(state)
            out.update(int(i) for i in np.flatnonzero(post > ACTION_PROB_THRESHOLD))
        out |= self.legitimate_actions(state)
        if not out:
            out = set(range(len(self.catalog)))
        return out
