"""Fixture loading and system assembly.

Everything a run needs (vocabularies, action catalog, action model,
environment, transition rules) derives deterministically from the fixture
files plus a handful of switches: compression on or off, full or reduced
action catalog, noise settings and the learning hyperparameters.

Fixture formats (all line-oriented text, '#' comments):
  lexicon.txt         value<TAB>slot_id
  synonyms.txt        word<TAB>synonym
  templates.txt       sectioned verbalisation pools (see the file header)
  venues.txt          domain|match value|venue token
  seed_dialogues.txt  demonstration dialogues (see classifiers.parse_seed_corpus)
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from . import classifiers
from .agent import AgentHyperparams
from .classifiers import NaiveBayesModel, SeedDialogue
from .controller import DomainTransitionModel, FlatSystem, NdqnSystem
from .dialogue import (
    META,
    ActionCatalog,
    DomainSpec,
    build_full_catalog,
    build_reduced_catalog,
    stock_domains,
)
from .env import DialogueEnv, EnvConfig, NoiseModel, Templates
from .features import SlotLexicon, SynonymMap, TextPipeline, Vocabulary, tokenize

FIXTURES_ENV_VAR = "MULTIDIAL_FIXTURES"


class ConfigError(ValueError):
    pass


def fixtures_root(override: str | None = None) -> str:
    if override:
        return override
    env_root = os.environ.get(FIXTURES_ENV_VAR)
    if env_root:
        return env_root
    return str(resources.files("multidial") / "fixtures")


def _read(path: str) -> str:
    if not os.path.exists(path):
        raise ConfigError(f"missing fixture file: {path}")
    with open(path) as fh:
        return fh.read()


@dataclass
class Fixtures:
    domains: list[DomainSpec]
    lexicons: dict[str, SlotLexicon]
    merged_lexicon: SlotLexicon
    synonyms: SynonymMap
    templates: Templates
    venues: list[tuple[str, str, str]]
    seeds: list[SeedDialogue]


def load_fixtures(root: str | None = None) -> Fixtures:
    root = fixtures_root(root)
    domains = stock_domains()

    slot_owner = {s: d for d in domains for s in d.slots}
    per_domain: dict[str, dict[str, set[str]]] = {d.name: {} for d in domains}
    for lineno, line in enumerate(_read(os.path.join(root, "lexicon.txt")).splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            value, slot = line.split("\t")
        except ValueError as exc:
            raise ConfigError(f"lexicon.txt:{lineno}: expected value<TAB>slot") from exc
        if slot not in slot_owner:
            raise ConfigError(f"lexicon.txt:{lineno}: unknown slot {slot!r}")
        per_domain[slot_owner[slot].name].setdefault(slot, set()).add(value)
    lexicons = {name: SlotLexicon(slots) for name, slots in per_domain.items()}
    merged = SlotLexicon.merge(list(lexicons.values()))

    syn_map: dict[str, str] = {}
    for lineno, line in enumerate(_read(os.path.join(root, "synonyms.txt")).splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            word, image = line.split("\t")
        except ValueError as exc:
            raise ConfigError(f"synonyms.txt:{lineno}: expected word<TAB>synonym") from exc
        syn_map[word] = image

    templates = Templates.parse(_read(os.path.join(root, "templates.txt")))

    venues: list[tuple[str, str, str]] = []
    for lineno, line in enumerate(_read(os.path.join(root, "venues.txt")).splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 3:
            raise ConfigError(f"venues.txt:{lineno}: expected domain|value|venue")
        venues.append((parts[0], parts[1], parts[2]))

    seeds = classifiers.parse_seed_corpus(os.path.join(root, "seed_dialogues.txt"))
    return Fixtures(domains, lexicons, merged, SynonymMap(syn_map), templates, venues, seeds)


@dataclass
class BuildSettings:
    """Everything that distinguishes one run configuration from another."""

    compressed: bool = True
    catalog: str = "full"  # or "reduced"
    noise: NoiseModel = field(default_factory=NoiseModel)
    max_turns: int = 100
    include_meta: bool = True
    domains: tuple[str, ...] | None = None  # restrict the registry (tests)
    slots_per_domain: dict[str, tuple[str, ...]] | None = None
    goal_domain_weights: tuple[float, ...] = (0.05, 0.50, 0.45)
    hyper: AgentHyperparams = field(default_factory=AgentHyperparams)
    hidden: tuple[int, ...] = (80, 80)

    def to_json(self) -> dict:
        return {
            "compressed": self.compressed,
            "catalog": self.catalog,
            "noise": self.noise.__dict__ | {
                "conf_ok": list(self.noise.conf_ok),
                "conf_bad": list(self.noise.conf_bad),
            },
            "max_turns": self.max_turns,
            "include_meta": self.include_meta,
            "domains": list(self.domains) if self.domains else None,
            "slots_per_domain": (
                {k: list(v) for k, v in self.slots_per_domain.items()}
                if self.slots_per_domain
                else None
            ),
            "goal_domain_weights": list(self.goal_domain_weights),
            "hyper": self.hyper.__dict__,
            "hidden": list(self.hidden),
        }

    @classmethod
    def from_json(cls, data: dict) -> "BuildSettings":
        noise = data["noise"].copy()
        noise["conf_ok"] = tuple(noise["conf_ok"])
        noise["conf_bad"] = tuple(noise["conf_bad"])
        return cls(
            compressed=data["compressed"],
            catalog=data["catalog"],
            noise=NoiseModel(**noise),
            max_turns=data["max_turns"],
            include_meta=data["include_meta"],
            domains=tuple(data["domains"]) if data.get("domains") else None,
            slots_per_domain=(
                {k: tuple(v) for k, v in data["slots_per_domain"].items()}
                if data.get("slots_per_domain")
                else None
            ),
            goal_domain_weights=tuple(data["goal_domain_weights"]),
            hyper=AgentHyperparams(**data["hyper"]),
            hidden=tuple(data["hidden"]),
        )


def desk_settings(**overrides) -> BuildSettings:
    """The quick-turnaround configuration: full verbalisation fixtures but an
    annealing horizon matched to short budgets."""
    hyper = AgentHyperparams(learning_steps=4000, target_sync_period=500)
    base = BuildSettings(hyper=hyper)
    return replace(base, **overrides)


def paper_scale_settings(**overrides) -> BuildSettings:
    base = BuildSettings()
    return replace(base, **overrides)


@dataclass
class SystemBuild:
    fixtures: Fixtures
    settings: BuildSettings
    domains: list[DomainSpec]
    registry: list[str]
    catalog: ActionCatalog
    pipeline: TextPipeline
    vocabs: dict[str, Vocabulary]
    global_vocab: Vocabulary
    nb: NaiveBayesModel
    env: DialogueEnv
    transition_model: DomainTransitionModel


def _restricted_domains(fixtures: Fixtures, settings: BuildSettings) -> list[DomainSpec]:
    domains = fixtures.domains
    if settings.domains is not None:
        domains = [d for d in domains if d.name in settings.domains]
        if not domains:
            raise ConfigError(f"no known domain in {settings.domains}")
    if settings.slots_per_domain:
        domains = [
            DomainSpec(d.name, d.prefix, settings.slots_per_domain.get(d.name, d.slots))
            for d in domains
        ]
    return domains


def _domain_keywords(domains: list[DomainSpec], fixtures: Fixtures) -> dict[str, set[str]]:
    keywords: dict[str, set[str]] = {
        META: {"no", "nothing", "else", "anything", "bye", "hello", "thanks", "thank", "help"}
    }
    extras = {
        "hotels": {"hotel", "hotels", "night", "nights", "stay"},
        "restaurants": {"restaurant", "restaurants", "food", "eat"},
    }
    for d in domains:
        words = set(extras.get(d.name, {d.name}))
        for s in d.slots:
            words.add(SlotLexicon.slot_token(s))
            words.update(fixtures.lexicons[d.name].slot_values.get(s, set()))
        keywords[d.name] = words
    return keywords


def make_build(fixtures: Fixtures, settings: BuildSettings) -> SystemBuild:
    domains = _restricted_domains(fixtures, settings)
    registry = ([META] if settings.include_meta else []) + [d.name for d in domains]

    lexicons = [fixtures.lexicons[d.name] for d in domains]
    merged = SlotLexicon.merge(lexicons)

    # First pass induces the vocabulary the synonym folding is checked against.
    draft_pipeline = TextPipeline(merged, fixtures.synonyms, None, settings.compressed)
    extra: dict[str, set[str]] = {}
    if settings.compressed:
        for d in domains:
            extra[d.name] = {SlotLexicon.slot_token(s) for s in d.slots}
    else:
        for d in domains:
            extra[d.name] = {
                v for s in d.slots for v in fixtures.lexicons[d.name].slot_values.get(s, set())
            }
    vocabs, global_vocab = classifiers.induced_vocabularies(
        fixtures.seeds, draft_pipeline, extra
    )
    vocabs = {d: v for d, v in vocabs.items() if d in registry}
    if settings.compressed:
        fixtures.synonyms.check_images(global_vocab)
    pipeline = TextPipeline(merged, fixtures.synonyms, global_vocab, settings.compressed)

    if settings.catalog == "full":
        catalog = build_full_catalog(domains)
    elif settings.catalog == "reduced":
        catalog = build_reduced_catalog(domains)
    else:
        raise ConfigError(f"unknown catalog kind {settings.catalog!r}")
    if not settings.include_meta:
        keep = [a for a in catalog.acts if a.domain != META]
        catalog = ActionCatalog(keep)

    corpus = classifiers.build_action_corpus(fixtures.seeds, pipeline, global_vocab, catalog)
    nb = NaiveBayesModel.fit(corpus, len(catalog))

    env_config = EnvConfig(
        domains=domains,
        lexicon=merged,
        templates=fixtures.templates,
        venues=fixtures.venues,
        noise=settings.noise,
        max_turns=settings.max_turns,
        include_meta=settings.include_meta,
        goal_domain_weights=settings.goal_domain_weights,
    )
    env = DialogueEnv(env_config, catalog, pipeline, global_vocab)
    env.set_action_model(nb)

    model = DomainTransitionModel(
        registry=registry,
        keywords=_domain_keywords(domains, fixtures),
        predefined_start=META if settings.include_meta else domains[0].name,
    )
    return SystemBuild(
        fixtures, settings, domains, registry, catalog, pipeline,
        vocabs, global_vocab, nb, env, model,
    )


def build_ndqn(build: SystemBuild, seed: int) -> NdqnSystem:
    return NdqnSystem(
        build.catalog, build.vocabs, build.pipeline, build.transition_model,
        build.settings.hyper, seed=seed, hidden=build.settings.hidden,
    )


def build_flat(build: SystemBuild, seed: int) -> FlatSystem:
    return FlatSystem(
        build.catalog, build.global_vocab, build.pipeline,
        build.settings.hyper, seed=seed, hidden=build.settings.hidden,
    )


def classifier_pools(
    fixtures: Fixtures,
    pipeline: TextPipeline,
    rng: np.random.Generator,
    per_template: int = 30,
) -> dict[str, list[list[str]]]:
    """Processed token pools of domain-routing user turns, for training and
    evaluating the domain classifier."""
    pools: dict[str, list[list[str]]] = {META: []}
    for line in fixtures.templates.user.get("meta", []):
        pools[META].append(pipeline.process(tokenize(line)))
    for d in fixtures.domains:
        pool: list[list[str]] = []
        template_names = [f"initial {d.name}"] + [f"answer {s}" for s in d.slots]
        for name in template_names:
            for template in fixtures.templates.user.get(name, []):
                slots = [s for s in d.slots if "{" + s + "}" in template]
                for _ in range(per_template):
                    text = template
                    for s in slots:
                        options = sorted(fixtures.lexicons[d.name].slot_values[s])
                        text = text.replace(
                            "{" + s + "}", options[int(rng.integers(len(options)))]
                        )
                    pool.append(pipeline.process(tokenize(text)))
        pools[d.name] = pool
    return pools


# -- run checkpoints -------------------------------------------------------


def save_run(
    directory: str,
    build: SystemBuild,
    system,
    log,
    mode: str,
) -> None:
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "mode": mode,
        "settings": build.settings.to_json(),
        "registry": build.registry,
        "catalog_keys": [str(a) for a in build.catalog.acts],
        "global_vocab": list(build.global_vocab.tokens),
        "vocabs": {d: list(v.tokens) for d, v in build.vocabs.items()},
        "meta": log.meta if log is not None else {},
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    if log is not None:
        log.write_csv(os.path.join(directory, "metrics.csv"))
    if isinstance(system, FlatSystem):
        system.agent.save(directory, "flat")
    else:
        for d, agent in system.agents.items():
            agent.save(directory, d)


def load_run(directory: str, fixtures_override: str | None = None):
    """Rebuild a trained system from a run directory. Returns
    (build, system, manifest)."""
    from .agent import DqnAgent

    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    settings = BuildSettings.from_json(manifest["settings"])
    fixtures = load_fixtures(fixtures_override)
    build = make_build(fixtures, settings)
    if [str(a) for a in build.catalog.acts] != manifest["catalog_keys"]:
        raise ConfigError(f"{directory}: catalog no longer matches the checkpoint")
    if list(build.global_vocab.tokens) != manifest["global_vocab"]:
        raise ConfigError(f"{directory}: vocabulary no longer matches the checkpoint")
    mode = manifest["mode"]
    if mode == "dqn_flat":
        system = build_flat(build, seed=0)
        system.agent = DqnAgent.load(directory, "flat")
        return build, system, manifest
    system = build_ndqn(build, seed=0)
    for d in list(system.agents):
        system.agents[d] = DqnAgent.load(directory, d)
    return build, system, manifest
