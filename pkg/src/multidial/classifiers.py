"""Data-driven components trained from the seed demonstration dialogues:
the corpus parser, the Naive Bayes action model used both for data-like
reward scores and for pruning the action set, and the three-way domain
classifier (two tanh hidden layers with a margin output).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import net
from .dialogue import ActionCatalog, DialogueAct, parse_act
from .features import StateVector, TextPipeline, Vocabulary, tokenize, vectorize


class CorpusError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class SeedTurn:
    domain: str
    speaker: str  # SYS or USR
    act: DialogueAct | None
    text: str


@dataclass
class SeedDialogue:
    dialogue_id: str
    turns: list[SeedTurn] = field(default_factory=list)

    def segments(self) -> list[tuple[str, list[SeedTurn]]]:
        """Consecutive turns grouped by domain, in order."""
        out: list[tuple[str, list[SeedTurn]]] = []
        for turn in self.turns:
            if out and out[-1][0] == turn.domain:
                out[-1][1].append(turn)
            else:
                out.append((turn.domain, [turn]))
        return out

    def domain_sequence(self) -> list[str]:
        return [d for d, _ in self.segments()]


def _check_alternation(dialogue: SeedDialogue) -> None:
    # Consecutive same-speaker records form one turn; grouped turns must
    # alternate speakers within each domain segment.
    for domain, turns in dialogue.segments():
        speakers = []
        for t in turns:
            if not speakers or speakers[-1] != t.speaker:
                speakers.append(t.speaker)
        for a, b in zip(speakers, speakers[1:]):
            if a == b:
                raise CorpusError(
                    f"dialogue {dialogue.dialogue_id}: segment {domain} does not alternate"
                )


def parse_seed_corpus(path: str) -> list[SeedDialogue]:
    """Parse the line-oriented seed corpus; raises with a line number on
    malformed records."""
    dialogues: list[SeedDialogue] = []
    current: SeedDialogue | None = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("=="):
                current = SeedDialogue(line.lstrip("= ").strip())
                dialogues.append(current)
                continue
            if current is None:
                raise CorpusError(f"line {lineno}: record before any dialogue header")
            parts = [p.strip() for p in line.split("|")]
            if len(parts) != 4:
                raise CorpusError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            domain, speaker, act_text, quoted = parts
            if speaker not in ("SYS", "USR"):
                raise CorpusError(f"line {lineno}: unknown speaker {speaker!r}")
            if not (quoted.startswith('"') and quoted.endswith('"')):
                raise CorpusError(f"line {lineno}: verbalisation must be quoted")
            text = quoted[1:-1]
            act = None
            if speaker == "SYS":
                if not act_text:
                    raise CorpusError(f"line {lineno}: system record without an act")
                try:
                    act = parse_act(act_text, domain)
                except ValueError as exc:
                    raise CorpusError(f"line {lineno}: {exc}") from exc
            elif act_text:
                raise CorpusError(f"line {lineno}: user record must not carry an act")
            current.turns.append(SeedTurn(domain, speaker, act, text))
    for d in dialogues:
        _check_alternation(d)
    return dialogues


def serialize_seed_corpus(dialogues: list[SeedDialogue]) -> str:
    lines: list[str] = []
    for d in dialogues:
        lines.append(f"== {d.dialogue_id}")
        for t in d.turns:
            act = f"[{t.act.key()}]" if t.act is not None else ""
            lines.append(f'{t.domain} | {t.speaker} | {act} | "{t.text}"')
        lines.append("")
    return "\n".join(lines)


def induced_actions(dialogues: list[SeedDialogue]) -> set[str]:
    """Union of demonstrated acts as 'domain:Key' strings."""
    return {str(t.act) for d in dialogues for t in d.turns if t.act is not None}


def induced_vocabularies(
    dialogues: list[SeedDialogue],
    pipeline: TextPipeline,
    extra_by_domain: dict[str, set[str]] | None = None,
) -> tuple[dict[str, Vocabulary], Vocabulary]:
    """Word features per domain plus the global union.

    Words belong to the domain of the segment they occur in, user words
    included. Underscore-prefixed presentation tokens never enter. The
    optional extras let the raw configuration expose every lexicon value of
    a domain even when the demonstrations only used a few of them.
    """
    per_domain: dict[str, set[str]] = {}
    for d in dialogues:
        for turn in d.turns:
            toks = [t for t in pipeline.process(tokenize(turn.text)) if not t.startswith("_")]
            per_domain.setdefault(turn.domain, set()).update(toks)
    if extra_by_domain:
        for domain, extra in extra_by_domain.items():
            per_domain.setdefault(domain, set()).update(extra)
    vocabs = {d: Vocabulary.from_corpus_tokens(toks) for d, toks in per_domain.items()}
    global_vocab = Vocabulary.from_corpus_tokens(
        {t for toks in per_domain.values() for t in toks}
    )
    return vocabs, global_vocab


def build_action_corpus(
    dialogues: list[SeedDialogue],
    pipeline: TextPipeline,
    vocab: Vocabulary,
    catalog: ActionCatalog,
) -> list[tuple[StateVector, int]]:
    """(state, next system action) pairs for the action model.

    The state preceding each system act is the previous system utterance
    plus whatever the user said after it (demonstrations are noise-free, so
    user words carry confidence 1). Acts absent from the active catalog are
    skipped, which lets reduced catalogs train on the same corpus.
    """
    pairs: list[tuple[StateVector, int]] = []
    for d in dialogues:
        prev_sys: list[str] = []
        user_since: list[str] = []
        for turn in d.turns:
            if turn.speaker == "USR":
                user_since = pipeline.process(tokenize(turn.text))
                continue
            key = str(turn.act)
            if key in catalog.index:
                state = vectorize(prev_sys, [(t, 1.0) for t in user_since], vocab)
                pairs.append((state, catalog.index[key]))
            prev_sys = pipeline.process(tokenize(turn.text))
            user_since = []
    return pairs


class NaiveBayesModel:
    """Bernoulli Naive Bayes over binarised word features.

    Priors are raw class frequencies; per-feature likelihoods use Laplace
    smoothing (alpha = 1). Posteriors are normalised in log space, so they
    sum to one for every input.
    """

    def __init__(self, n_actions: int, n_features: int):
        self.n_actions = n_actions
        self.n_features = n_features
        self.log_prior = np.full(n_actions, -np.inf)
        self.log_on = np.zeros((n_actions, n_features))
        self.log_off = np.zeros((n_actions, n_features))
        self.seen = np.zeros(n_actions, dtype=bool)

    @classmethod
    def fit(
        cls, corpus: list[tuple[StateVector, int]], n_actions: int
    ) -> "NaiveBayesModel":
        if not corpus:
            raise TrainingError("cannot train the action model on an empty corpus")
        n_features = len(corpus[0][0].values)
        model = cls(n_actions, n_features)
        counts = np.zeros(n_actions)
        on_counts = np.zeros((n_actions, n_features))
        for state, action in corpus:
            x = (state.values > 0).astype(float)
            counts[action] += 1
            on_counts[action] += x
        total = counts.sum()
        model.seen = counts > 0
        with np.errstate(divide="ignore"):
            model.log_prior = np.where(counts > 0, np.log(counts / total), -np.inf)
        p_on = (on_counts + 1.0) / (counts[:, None] + 2.0)
        model.log_on = np.log(p_on)
        model.log_off = np.log(1.0 - p_on)
        return model

    def log_posterior(self, values: np.ndarray) -> np.ndarray:
        x = (np.asarray(values) > 0).astype(float)
        if x.shape != (self.n_features,):
            raise TrainingError(f"expected {self.n_features} features, got {x.shape}")
        scores = self.log_prior + self.log_on @ x + self.log_off @ (1.0 - x)
        scores = np.where(self.seen, scores, -np.inf)
        top = np.max(scores)
        norm = top + np.log(np.sum(np.exp(scores - top)))
        return scores - norm

    def posterior(self, values: np.ndarray) -> np.ndarray:
        return np.exp(self.log_posterior(values))

    def prob_of(self, values: np.ndarray, action: int) -> float:
        return float(self.posterior(values)[action])


def train_naive_bayes(
    corpus: list[tuple[StateVector, int]], n_actions: int
) -> NaiveBayesModel:
    return NaiveBayesModel.fit(corpus, n_actions)


class DomainClassifier:
    """Learned routing: global hit-or-miss word vector to one of the system
    domains, via an 80x80 tanh network with a one-vs-rest margin output."""

    def __init__(self, network: net.Network, vocab: Vocabulary, domains: list[str]):
        self.network = network
        self.vocab = vocab
        self.domains = list(domains)

    def encode(self, tokens: list[str]) -> np.ndarray:
        x = np.zeros(len(self.vocab))
        for t in tokens:
            i = self.vocab.index.get(t)
            if i is not None:
                x[i] = 1.0
        return x

    def margins(self, tokens: list[str]) -> np.ndarray:
        return net.forward(self.network, self.encode(tokens))

    def classify(self, tokens: list[str]) -> str:
        return self.domains[int(np.argmax(self.margins(tokens)))]


@dataclass
class DomainDataset:
    inputs: np.ndarray
    labels: np.ndarray
    domains: list[str]
    train_count: int

    @property
    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.inputs[: self.train_count], self.labels[: self.train_count]

    @property
    def test(self) -> tuple[np.ndarray, np.ndarray]:
        return self.inputs[self.train_count :], self.labels[self.train_count :]


def generate_domain_dataset(
    n: int,
    user_templates: dict[str, list[list[str]]],
    vocab: Vocabulary,
    domains: list[str],
    rng: np.random.Generator,
    noise_inject: float = 0.10,
    noise_drop: float = 0.05,
) -> DomainDataset:
    """Simulated user turns labelled with the domain they route to.

    ``user_templates`` maps each domain to pools of already-processed token
    lists. Injection noise adds random vocabulary words and drop noise
    removes a token, so a slice of the data is genuinely ambiguous. Split is
    60/40 train/test.
    """
    if n <= 0:
        raise TrainingError("need a positive sample count")
    vocab_tokens = list(vocab.tokens)
    inputs = np.zeros((n, len(vocab)))
    labels = np.zeros(n, dtype=int)
    for i in range(n):
        label = int(rng.integers(len(domains)))
        pool = user_templates[domains[label]]
        tokens = list(pool[int(rng.integers(len(pool)))])
        if tokens and rng.random() < noise_drop:
            tokens.pop(int(rng.integers(len(tokens))))
        if rng.random() < noise_inject:
            for _ in range(int(rng.integers(1, 3))):
                tokens.append(vocab_tokens[int(rng.integers(len(vocab_tokens)))])
        labels[i] = label
        for t in tokens:
            j = vocab.index.get(t)
            if j is not None:
                inputs[i, j] = 1.0
    return DomainDataset(inputs, labels, list(domains), train_count=int(n * 0.6))


def train_domain_classifier(
    dataset: DomainDataset,
    vocab: Vocabulary,
    epochs: int = 180,
    batch_size: int = 32,
    learning_rate: float = 0.01,
    seed: int = 0,
) -> tuple[DomainClassifier, float]:
    """Train the margin classifier and report held-out accuracy.

    Accuracy below 0.5 indicates a data or configuration bug and raises.
    """
    x_train, y_train = dataset.train
    x_test, y_test = dataset.test
    k = len(dataset.domains)
    network = net.init_network(
        [x_train.shape[1], 80, 80, k], "tanh", seed=seed, output_kind="hinge_margin"
    )
    cfg = net.TrainConfig(learning_rate=learning_rate)
    targets = -np.ones((x_train.shape[0], k))
    targets[np.arange(len(y_train)), y_train] = 1.0
    masks = np.ones((batch_size, k))
    rng = np.random.default_rng(seed)
    n_train = x_train.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n_train)
        for start in range(0, n_train - batch_size + 1, batch_size):
            idx = order[start : start + batch_size]
            net.sgd_step_arrays(network, x_train[idx], targets[idx], masks, cfg, "hinge")
    clf = DomainClassifier(network, vocab, dataset.domains)
    preds = np.argmax(net.forward_batch(network, x_test), axis=1)
    accuracy = float(np.mean(preds == y_test)) if len(y_test) else 0.0
    if len(y_test) and accuracy < 0.5:
        raise TrainingError(
            f"domain classifier accuracy {accuracy:.3f} is below chance-plus margin; "
            "check the generated data and training configuration"
        )
    return clf, accuracy
