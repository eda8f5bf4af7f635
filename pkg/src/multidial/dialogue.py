"""Dialogue acts and the system action catalogs.

Acts are symbolic: an act type plus named parameters, where slot parameters
hold a ``$slot`` placeholder until the environment instantiates them with
heard values. Two catalogs are provided: the full reconstruction (69 acts,
with apologies, implicit confirms and every multi-slot confirmation) and a
reduced one (24 acts) for quick experiments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import combinations

ACT_TYPES = (
    "Salutation",
    "Provide",
    "Request",
    "AskFor",
    "Apology",
    "ExpConfirm",
    "ImpConfirm",
    "Retrieve",
)

_ACT_RE = re.compile(r"^\[?([A-Za-z]+)\((.*)\)\]?$")


class ActError(ValueError):
    pass


@dataclass(frozen=True)
class DialogueAct:
    act_type: str
    params: tuple[tuple[str, str | None], ...]
    domain: str

    def key(self) -> str:
        """Canonical text form, e.g. ExpConfirm(h_city=$h_city)."""
        inner = ",".join(n if v is None else f"{n}={v}" for n, v in self.params)
        return f"{self.act_type}({inner})"

    def slots(self) -> tuple[str, ...]:
        """Parameter names that are slots (carry a placeholder value)."""
        return tuple(n for n, v in self.params if v is not None)

    def arg(self) -> str | None:
        """The single bare argument for parameterless-style acts."""
        for n, v in self.params:
            if v is None:
                return n
        return None

    def __str__(self) -> str:
        return f"{self.domain}:{self.key()}"


def parse_act(text: str, domain: str) -> DialogueAct:
    """Parse '[ExpConfirm(h_city=$h_city)]' (brackets optional)."""
    m = _ACT_RE.match(text.strip())
    if not m:
        raise ActError(f"cannot parse dialogue act {text!r}")
    act_type, inner = m.group(1), m.group(2).strip()
    if act_type not in ACT_TYPES:
        raise ActError(f"unknown act type {act_type!r} in {text!r}")
    params: list[tuple[str, str | None]] = []
    if inner:
        for part in inner.split(","):
            part = part.strip()
            if "=" in part:
                name, value = part.split("=", 1)
                params.append((name.strip(), value.strip()))
            else:
                params.append((part, None))
    return DialogueAct(act_type, tuple(params), domain)


def _slot_act(act_type: str, slots: tuple[str, ...], domain: str) -> DialogueAct:
    params = tuple((s, "$" + s) for s in slots)
    return DialogueAct(act_type, params, domain)


def _bare_act(act_type: str, arg: str, domain: str) -> DialogueAct:
    return DialogueAct(act_type, ((arg, None),), domain)


@dataclass(frozen=True)
class DomainSpec:
    """An information domain: its registry name, slot prefix and slot order."""

    name: str
    prefix: str
    slots: tuple[str, ...]


META = "meta"


class ActionCatalog:
    """Global ordered action inventory shared by the environment, the action
    model and every agent. Per-domain agents address subsets of it through
    local indices."""

    def __init__(self, acts: list[DialogueAct]):
        self.acts = list(acts)
        self.index: dict[str, int] = {}
        for i, act in enumerate(self.acts):
            k = str(act)
            if k in self.index:
                raise ActError(f"duplicate catalog act {k}")
            self.index[k] = i
        self.domains = sorted({a.domain for a in self.acts})
        self.by_domain: dict[str, list[int]] = {
            d: [i for i, a in enumerate(self.acts) if a.domain == d] for d in self.domains
        }

    def __len__(self) -> int:
        return len(self.acts)

    def __getitem__(self, i: int) -> DialogueAct:
        return self.acts[i]

    def find(self, domain: str, key: str) -> int:
        """Global index of an act given its domain and canonical key."""
        k = f"{domain}:{key}"
        if k not in self.index:
            raise ActError(f"act {k} not in catalog")
        return self.index[k]

    def domain_indices(self, domain: str) -> list[int]:
        return list(self.by_domain.get(domain, []))


def _confirm_subsets(slots: tuple[str, ...]):
    for size in range(1, len(slots) + 1):
        yield from combinations(slots, size)


def build_full_catalog(domains: list[DomainSpec]) -> ActionCatalog:
    """The full reconstructed inventory.

    Meta keeps the framing acts (greeting, intro, help prompts, per-domain
    follow-up questions, closing); each information domain gets requests and
    apologies per slot, explicit and implicit confirmations over every
    nonempty slot subset, and a retrieve/present pair. With the stock
    hotels(4 slots) + restaurants(3 slots) registry this yields 69 actions.
    """
    acts: list[DialogueAct] = [
        _bare_act("Salutation", "greeting", META),
        _bare_act("Provide", "intro", META),
        _bare_act("Request", "hmihy", META),
        _bare_act("Apology", "hmihy", META),
    ]
    for d in domains:
        acts.append(_bare_act("AskFor", f"{d.prefix}_more", META))
    acts.append(_bare_act("Salutation", "closing", META))
    for d in domains:
        for s in d.slots:
            acts.append(_bare_act("Request", s, d.name))
        for s in d.slots:
            acts.append(_bare_act("Apology", s, d.name))
        for subset in _confirm_subsets(d.slots):
            acts.append(_slot_act("ExpConfirm", subset, d.name))
        for subset in _confirm_subsets(d.slots):
            acts.append(_slot_act("ImpConfirm", subset, d.name))
        acts.append(_bare_act("Retrieve", f"{d.prefix}_info", d.name))
        acts.append(_bare_act("Provide", f"{d.prefix}_info", d.name))
    return ActionCatalog(acts)


def build_reduced_catalog(domains: list[DomainSpec]) -> ActionCatalog:
    """Desk-scale inventory: requests and single-slot explicit confirms only
    (24 actions with the stock registry)."""
    acts: list[DialogueAct] = [
        _bare_act("Salutation", "greeting", META),
        _bare_act("Provide", "intro", META),
        _bare_act("Request", "hmihy", META),
    ]
    for d in domains:
        acts.append(_bare_act("AskFor", f"{d.prefix}_more", META))
    acts.append(_bare_act("Salutation", "closing", META))
    for d in domains:
        for s in d.slots:
            acts.append(_bare_act("Request", s, d.name))
        for s in d.slots:
            acts.append(_slot_act("ExpConfirm", (s,), d.name))
        acts.append(_bare_act("Retrieve", f"{d.prefix}_info", d.name))
        acts.append(_bare_act("Provide", f"{d.prefix}_info", d.name))
    return ActionCatalog(acts)


def stock_domains() -> list[DomainSpec]:
    """The hotels/restaurants registry used by the shipped fixtures."""
    return [
        DomainSpec("hotels", "h", ("h_city", "h_day", "h_month", "h_nights")),
        DomainSpec("restaurants", "r", ("r_food", "r_price", "r_area")),
    ]
