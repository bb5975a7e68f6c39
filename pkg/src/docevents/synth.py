"""Seeded synthetic corpus generator.

Produces schema-compatible documents with planted structure:

* every event type owns a private trigger lexicon, so most triggers are
  classifiable from the token alone;
* a configurable fraction of events is emitted as correlated pairs inside
  one sentence: an unambiguous *context* trigger (one of two context types)
  plus a companion trigger drawn from a lexicon shared by exactly two event
  types.  The companion's correct type is a function of the context type
  only, so a per-token classifier caps out near chance on those tokens while
  a model that sees the co-occurring event can resolve them;
* entity coreference chains realize name/nominal/pronoun mentions across
  sentences, and arguments attach same-sentence entity mentions to triggers.

Generation is deterministic per seed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .docmodel import (Annotations, Document, MENTION_LEVELS, NULL_TYPE, Span,
                       TypeInventory)

PRONOUNS = ("it", "he", "she", "they")
AMBIGUOUS_PREFIX = "amb"

# Fixed roles of the dependency machinery within the event type list
# (1-based positions into the non-NULL types).
_CONTEXT_SLOTS = (0, 1)
_TARGET_SLOTS = (2, 3)


@dataclass(frozen=True)
class GenConfig:
    n_docs: int = 500
    sentences_per_doc: tuple[int, int] = (3, 8)
    tokens_per_sentence: tuple[int, int] = (8, 20)
    event_rate: float = 0.6
    p_dep: float = 0.3
    chain_len: tuple[int, int] = (1, 3)
    level_mix: tuple[float, float, float] = (0.4, 0.3, 0.3)
    n_event_types: int = 6
    n_entity_types: int = 3
    n_roles: int = 3
    triggers_per_type: int = 6
    n_ambiguous: int = 4
    n_names: int = 40
    n_nominals: int = 10
    n_fillers: int = 80
    background_entity_rate: float = 0.25
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("event_rate", "p_dep", "background_entity_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("sentences_per_doc", "tokens_per_sentence", "chain_len"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must be a non-empty range, got ({lo}, {hi})")
        if self.n_docs < 0:
            raise ValueError("n_docs must be non-negative")
        if any(p < 0 for p in self.level_mix) or sum(self.level_mix) <= 0:
            raise ValueError("level_mix must be non-negative with positive mass")
        if self.event_rate > 0 and (self.triggers_per_type < 1 or self.n_event_types < 1):
            raise ValueError("event_rate > 0 requires a non-empty trigger lexicon")
        if self.p_dep > 0 and (self.n_event_types < 4 or self.n_ambiguous < 1):
            raise ValueError("p_dep > 0 requires >= 4 event types and an ambiguous lexicon")
        if self.n_fillers < 1 or self.n_names < 1 or self.n_nominals < 1:
            raise ValueError("vocabulary sizes must be >= 1")


def inventory_for(cfg: GenConfig) -> TypeInventory:
    return TypeInventory(
        event_types=(NULL_TYPE,) + tuple(f"EVT{i + 1}" for i in range(cfg.n_event_types)),
        entity_types=tuple(f"ENT{i + 1}" for i in range(cfg.n_entity_types)),
        argument_roles=tuple(f"ROLE{i + 1}" for i in range(cfg.n_roles)),
    )


def dependency_rule(cfg: GenConfig) -> dict[str, str]:
    """Context event type -> forced type of the co-occurring ambiguous trigger."""
    inv = inventory_for(cfg)
    types = inv.event_types[1:]
    return {types[_CONTEXT_SLOTS[0]]: types[_TARGET_SLOTS[0]],
            types[_CONTEXT_SLOTS[1]]: types[_TARGET_SLOTS[1]]}


def is_ambiguous_token(token: str) -> bool:
    return token.startswith(AMBIGUOUS_PREFIX)


def ambiguous_trigger_positions(doc: Document) -> list[int]:
    """Token positions of planted type-ambiguous triggers."""
    if doc.gold is None:
        return []
    return [tok for tok, _ in doc.gold.triggers if is_ambiguous_token(doc.tokens[tok])]


class _DocBuilder:
    def __init__(self) -> None:
        self.tokens: list[str] = []
        self.bounds: list[tuple[int, int]] = []
        self.triggers: list[tuple[int, str]] = []
        self.trigger_cluster: list[int] = []
        self.entities: list[tuple[Span, str, str]] = []
        self.entity_cluster: list[int] = []
        self.arguments: list[tuple[int, Span, str]] = []


@dataclass
class _Unit:
    tokens: list[str]
    kind: str           # "trigger" | "entity" | "filler"
    payload: object = None


def _sample_range(rng: np.random.Generator, bounds: tuple[int, int]) -> int:
    return int(rng.integers(bounds[0], bounds[1] + 1))


def generate(cfg: GenConfig) -> list[Document]:
    """Generate the corpus; deterministic for a fixed config."""
    rng = np.random.default_rng(cfg.seed)
    inv = inventory_for(cfg)
    types = inv.event_types[1:]
    lexicon = {ty: [f"evt{i + 1}w{j}" for j in range(cfg.triggers_per_type)]
               for i, ty in enumerate(types)}
    ambiguous = [f"{AMBIGUOUS_PREFIX}{j}" for j in range(cfg.n_ambiguous)]
    fillers = [f"w{j}" for j in range(cfg.n_fillers)]
    rule = dependency_rule(cfg) if cfg.p_dep > 0 else {}
    level_p = np.array(cfg.level_mix, dtype=np.float64)
    level_p = level_p / level_p.sum()
    # Probability that an emission is a correlated pair, chosen so the
    # expected fraction of events that are pair members equals p_dep.
    q_pair = cfg.p_dep / (2.0 - cfg.p_dep)

    docs = []
    for doc_idx in range(cfg.n_docs):
        docs.append(_generate_doc(cfg, inv, rng, lexicon, ambiguous, fillers, rule,
                                  level_p, q_pair, f"doc{doc_idx:05d}"))
    return docs


def _generate_doc(cfg, inv, rng, lexicon, ambiguous, fillers, rule, level_p,
                  q_pair, doc_id: str) -> Document:
    types = inv.event_types[1:]
    b = _DocBuilder()
    n_sent = _sample_range(rng, cfg.sentences_per_doc)
    next_entity_cluster = 0
    next_event_cluster = 0
    pending_entities: list[dict] = []   # chains waiting to drop more mentions
    pending_events: list[dict] = []

    def new_entity_chain(sentence_units: list[_Unit], role_for: tuple[int, str] | None) -> None:
        nonlocal next_entity_cluster
        cid = next_entity_cluster
        next_entity_cluster += 1
        ent_type = types_ent[int(rng.integers(len(types_ent)))]
        name = f"Name{int(rng.integers(cfg.n_names))}"
        length = _sample_range(rng, cfg.chain_len)
        unit = _Unit([name], "entity", (cid, ent_type, "name", role_for))
        sentence_units.append(unit)
        if length > 1:
            pending_entities.append({"cid": cid, "type": ent_type, "name": name,
                                     "left": length - 1})

    types_ent = inv.entity_types
    roles = inv.argument_roles

    for _ in range(n_sent):
        units: list[_Unit] = []
        # Event emission.
        if rng.random() < cfg.event_rate:
            if rule and rng.random() < q_pair:
                ctx_type = types[_CONTEXT_SLOTS[int(rng.integers(2))]]
                dep_type = rule[ctx_type]
                ctx_word = lexicon[ctx_type][int(rng.integers(len(lexicon[ctx_type])))]
                amb_word = ambiguous[int(rng.integers(len(ambiguous)))]
                for ty, word in ((ctx_type, ctx_word), (dep_type, amb_word)):
                    units.append(_Unit([word], "trigger", (next_event_cluster, ty, 1)))
                    next_event_cluster += 1
            else:
                ty = types[int(rng.integers(len(types)))]
                word = lexicon[ty][int(rng.integers(len(lexicon[ty])))]
                n_args = int(rng.integers(1, 3))
                units.append(_Unit([word], "trigger", (next_event_cluster, ty, n_args)))
                length = _sample_range(rng, cfg.chain_len)
                if length > 1:
                    pending_events.append({"cid": next_event_cluster, "type": ty,
                                           "left": length - 1})
                next_event_cluster += 1
        # One scheduled coreferent event mention per sentence at most.
        if pending_events and rng.random() < 0.8:
            chain = pending_events[0]
            word = lexicon[chain["type"]][int(rng.integers(len(lexicon[chain["type"]])))]
            units.append(_Unit([word], "trigger", (chain["cid"], chain["type"],
                                                   int(rng.integers(0, 2)))))
            chain["left"] -= 1
            if chain["left"] <= 0:
                pending_events.pop(0)
        # Arguments for the triggers placed in this sentence.
        for unit in list(units):
            if unit.kind != "trigger":
                continue
            _, _, n_args = unit.payload
            for _ in range(n_args):
                new_entity_chain(units, role_for=(id(unit), roles[int(rng.integers(len(roles)))]))
        # Scheduled coreferent entity mentions, at most two per sentence.
        dropped = 0
        while pending_entities and dropped < 2 and rng.random() < 0.7:
            chain = pending_entities[0]
            level = MENTION_LEVELS[int(rng.choice(3, p=level_p))]
            if level == "name":
                toks = [chain["name"]]
            elif level == "nominal":
                toks = ["the", f"nom{chain['cid'] % cfg.n_nominals}"]
            else:
                toks = [PRONOUNS[chain["cid"] % len(PRONOUNS)]]
            units.append(_Unit(toks, "entity", (chain["cid"], chain["type"], level, None)))
            chain["left"] -= 1
            if chain["left"] <= 0:
                pending_entities.pop(0)
            dropped += 1
        # Background entity chain without an event.
        if rng.random() < cfg.background_entity_rate:
            new_entity_chain(units, role_for=None)

        _realize_sentence(cfg, rng, b, units, fillers)

    annotations = _assemble(b)
    return Document(doc_id=doc_id, tokens=tuple(b.tokens),
                    sentence_bounds=tuple(b.bounds), gold=annotations)


def _realize_sentence(cfg, rng, b: _DocBuilder, units: list[_Unit],
                      fillers: list[str]) -> None:
    target = _sample_range(rng, cfg.tokens_per_sentence)
    content = sum(len(u.tokens) for u in units)
    n_fill = max(target - content, 0 if content else 1)
    trigger_slots = [i for i, u in enumerate(units) if u.kind == "trigger"]
    if len(trigger_slots) >= 2:
        # Correlated pair triggers must not fall inside each other's +-1
        # token window, or local context features leak the dependency.
        n_fill = max(n_fill, 3)
    all_units = list(units)
    for _ in range(n_fill):
        all_units.append(_Unit([fillers[int(rng.integers(len(fillers)))]], "filler"))
    order = _separated_order(rng, all_units)

    start = len(b.tokens)
    sent_idx = len(b.bounds)
    trigger_pos: dict[int, int] = {}   # unit identity -> token position
    for ui in order:
        unit = all_units[int(ui)]
        pos = len(b.tokens)
        b.tokens.extend(unit.tokens)
        if unit.kind == "trigger":
            cid, ty, _ = unit.payload
            trigger_pos[id(unit)] = pos
            b.triggers.append((pos, ty))
            b.trigger_cluster.append(cid)
        elif unit.kind == "entity":
            cid, ent_type, level, role_for = unit.payload
            span = Span(pos, pos + len(unit.tokens) - 1, sent_idx)
            b.entities.append((span, ent_type, level))
            b.entity_cluster.append(cid)
            if role_for is not None:
                unit.payload = (cid, ent_type, level, role_for, span)
    # Attach arguments now that trigger token positions are known.
    for ui in order:
        unit = all_units[int(ui)]
        if unit.kind == "entity" and len(unit.payload) == 5:
            _, _, _, (owner, role), span = unit.payload
            b.arguments.append((trigger_pos[owner], span, role))
    b.bounds.append((start, len(b.tokens)))


def _separated_order(rng, all_units: list[_Unit]) -> np.ndarray:
    """Random unit order keeping trigger tokens at least two tokens apart."""
    for _ in range(40):
        order = rng.permutation(len(all_units))
        pos = 0
        trigger_positions = []
        for ui in order:
            unit = all_units[int(ui)]
            if unit.kind == "trigger":
                trigger_positions.append(pos)
            pos += len(unit.tokens)
        if all(b - a >= 2 for a, b in zip(trigger_positions, trigger_positions[1:])):
            return order
    return order


def _assemble(b: _DocBuilder) -> Annotations:
    def group(ids: Sequence[int]) -> tuple[tuple[int, ...], ...]:
        clusters: dict[int, list[int]] = {}
        for idx, cid in enumerate(ids):
            clusters.setdefault(cid, []).append(idx)
        return tuple(tuple(c) for c in clusters.values())

    return Annotations(
        triggers=tuple(b.triggers),
        arguments=tuple(b.arguments),
        entities=tuple(b.entities),
        entity_clusters=group(b.entity_cluster),
        event_clusters=group(b.trigger_cluster),
    )


def split(corpus: Sequence[Document], ratios: tuple[float, float, float],
          seed: int) -> tuple[list[Document], list[Document], list[Document]]:
    """Deterministic disjoint train/dev/test partition by document."""
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be non-negative and sum to 1")
    n = len(corpus)
    order = np.random.default_rng(seed).permutation(n)
    cut1 = int(round(ratios[0] * n))
    cut2 = int(round((ratios[0] + ratios[1]) * n))
    train = [corpus[i] for i in order[:cut1]]
    dev = [corpus[i] for i in order[cut1:cut2]]
    test = [corpus[i] for i in order[cut2:]]
    return train, dev, test
