"""Document data model.

Types for tokenized documents, mention spans, event/entity annotations and
coreference clusters, plus a line-delimited JSON serialization (one document
per line, UTF-8).  Everything here is immutable after construction and safe
to share across threads; parsing and serialization are pure functions.

Record schema (one JSON object per line):

    doc_id           string
    tokens           list of strings
    sentences        list of [start, end) token-index pairs
    triggers         optional, list of {"token": int, "type": str}
    arguments        optional, list of {"trigger": int, "start": int,
                     "end": int, "role": str}
    entities         optional, list of {"start": int, "end": int,
                     "type": str, "level": str}
    entity_clusters  optional, list of lists of indices into `entities`
    event_clusters   optional, list of lists of indices into `triggers`

Span `start`/`end` are inclusive token indices; sentence bounds are
half-open.  A record with none of the annotation fields is a raw inference
input (``gold is None``).
"""
from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Iterator, Mapping, Optional, Sequence

NULL_TYPE = "NULL"
MENTION_LEVELS = ("name", "nominal", "pronoun")

_GOLD_FIELDS = ("triggers", "arguments", "entities", "entity_clusters", "event_clusters")


class DocModelError(Exception):
    """Base class for document model failures."""


class ParseError(DocModelError):
    """A record could not be decoded or has a malformed field."""


class ValidationError(DocModelError):
    """A structurally valid record violates a document invariant."""


@dataclass(frozen=True, order=True)
class Span:
    """An inclusive token range confined to one sentence."""

    start: int
    end: int
    sentence_idx: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end < self.start:
            raise ValidationError(f"span ({self.start},{self.end}) must satisfy 0 <= start <= end")

    @property
    def width(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class TypeInventory:
    """Label inventory shared by the extractor, generator and metrics.

    ``event_types[0]`` is the distinguished NULL type; every trigger
    distribution row puts the no-event probability in column 0 and all
    metrics ignore that column.
    """

    event_types: tuple[str, ...]
    entity_types: tuple[str, ...]
    argument_roles: tuple[str, ...]
    k_max: int = 12

    def __post_init__(self) -> None:
        object.__setattr__(self, "event_types", tuple(self.event_types))
        object.__setattr__(self, "entity_types", tuple(self.entity_types))
        object.__setattr__(self, "argument_roles", tuple(self.argument_roles))
        if not self.event_types or self.event_types[0] != NULL_TYPE:
            raise ValidationError("event_types must place the NULL type at index 0")
        for name, types in (("event_types", self.event_types),
                            ("entity_types", self.entity_types),
                            ("argument_roles", self.argument_roles)):
            if len(set(types)) != len(types):
                raise ValidationError(f"{name} contains duplicates")
        if self.k_max < 1:
            raise ValidationError("k_max must be >= 1")

    def event_type_id(self, name: str) -> int:
        return self.event_types.index(name)

    def to_dict(self) -> dict:
        return {
            "event_types": list(self.event_types),
            "entity_types": list(self.entity_types),
            "argument_roles": list(self.argument_roles),
            "k_max": self.k_max,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "TypeInventory":
        return cls(
            event_types=tuple(obj["event_types"]),
            entity_types=tuple(obj["entity_types"]),
            argument_roles=tuple(obj["argument_roles"]),
            k_max=int(obj.get("k_max", 12)),
        )


@dataclass(frozen=True)
class Annotations:
    """Gold or predicted structure over one document.

    Construction canonicalizes: triggers sort by token, entities by
    (start, end, type, level), arguments by (trigger, start, end, role);
    cluster indices are remapped accordingly, completed to a full partition
    (unlisted mentions become singletons) and sorted.  Two equal annotation
    sets therefore compare equal regardless of input order.
    """

    triggers: tuple[tuple[int, str], ...] = ()
    arguments: tuple[tuple[int, Span, str], ...] = ()
    entities: tuple[tuple[Span, str, str], ...] = ()
    entity_clusters: tuple[tuple[int, ...], ...] = ()
    event_clusters: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self) -> None:
        triggers = [(int(t), str(ty)) for t, ty in self.triggers]
        entities = [(sp, str(ty), str(lv)) for sp, ty, lv in self.entities]
        arguments = [(int(t), sp, str(r)) for t, sp, r in self.arguments]

        tokens_seen = set()
        for tok, _ in triggers:
            if tok in tokens_seen:
                raise ValidationError(f"token {tok} appears twice in triggers; triggers are single tokens")
            tokens_seen.add(tok)
        for _, _, lv in entities:
            if lv not in MENTION_LEVELS:
                raise ValidationError(f"unknown mention level {lv!r}; expected one of {MENTION_LEVELS}")

        trig_order = sorted(range(len(triggers)), key=lambda i: triggers[i])
        ent_order = sorted(range(len(entities)),
                           key=lambda i: (entities[i][0].start, entities[i][0].end,
                                          entities[i][1], entities[i][2]))
        trig_map = {old: new for new, old in enumerate(trig_order)}
        ent_map = {old: new for new, old in enumerate(ent_order)}
        triggers = [triggers[i] for i in trig_order]
        entities = [entities[i] for i in ent_order]

        entity_spans = {(sp.start, sp.end) for sp, _, _ in entities}
        trigger_tokens = {t for t, _ in triggers}
        for tok, sp, role in arguments:
            if (sp.start, sp.end) not in entity_spans:
                raise ValidationError(
                    f"argument span ({sp.start},{sp.end}) does not appear among entities")
            if tok not in trigger_tokens:
                raise ValidationError(f"argument references token {tok} which is not a trigger")
        arguments.sort(key=lambda a: (a[0], a[1].start, a[1].end, a[2]))

        ent_clusters = _canonical_partition(self.entity_clusters, len(entities), ent_map, "entity")
        evt_clusters = _canonical_partition(self.event_clusters, len(triggers), trig_map, "event")
        for cluster in evt_clusters:
            types = {triggers[i][1] for i in cluster}
            if len(types) > 1:
                raise ValidationError(
                    f"event cluster {cluster} mixes types {sorted(types)}; clustered triggers share one type")

        object.__setattr__(self, "triggers", tuple(triggers))
        object.__setattr__(self, "arguments", tuple(arguments))
        object.__setattr__(self, "entities", tuple(entities))
        object.__setattr__(self, "entity_clusters", ent_clusters)
        object.__setattr__(self, "event_clusters", evt_clusters)


def _canonical_partition(clusters: Iterable[Iterable[int]], n_mentions: int,
                         index_map: Mapping[int, int], kind: str) -> tuple[tuple[int, ...], ...]:
    seen: set[int] = set()
    remapped: list[tuple[int, ...]] = []
    for cluster in clusters:
        members = []
        for idx in cluster:
            idx = int(idx)
            if idx < 0 or idx >= n_mentions:
                raise ValidationError(f"{kind} cluster member {idx} is out of range")
            if idx in seen:
                raise ValidationError(f"{kind} clusters overlap on mention {idx}")
            seen.add(idx)
            members.append(index_map[idx])
        if members:
            remapped.append(tuple(sorted(members)))
    # Complete to a partition: any mention not listed becomes a singleton.
    listed = {m for cluster in remapped for m in cluster}
    for m in range(n_mentions):
        if m not in listed:
            remapped.append((m,))
    remapped.sort(key=lambda c: c[0])
    return tuple(remapped)


@dataclass(frozen=True)
class Document:
    """A tokenized document with sentence bounds and optional annotations."""

    doc_id: str
    tokens: tuple[str, ...]
    sentence_bounds: tuple[tuple[int, int], ...]
    gold: Optional[Annotations] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(str(t) for t in self.tokens))
        object.__setattr__(self, "sentence_bounds",
                           tuple((int(s), int(e)) for s, e in self.sentence_bounds))
        n = len(self.tokens)
        if n < 1:
            raise ValidationError("document must contain at least one token")
        bounds = self.sentence_bounds
        if not bounds:
            raise ValidationError("document must contain at least one sentence")
        prev_end = 0
        for s, e in bounds:
            if s != prev_end:
                raise ValidationError("sentence bounds must be sorted, non-overlapping and gap-free")
            if e <= s:
                raise ValidationError("sentence bounds must be non-empty half-open ranges")
            prev_end = e
        if prev_end != n:
            raise ValidationError(f"sentence bounds cover [0,{prev_end}) but document has {n} tokens")
        if self.gold is not None:
            self._validate_gold(self.gold)

    def _validate_gold(self, gold: Annotations) -> None:
        n = len(self.tokens)
        for tok, _ in gold.triggers:
            if tok < 0 or tok >= n:
                raise ValidationError(f"trigger token {tok} out of range for {n} tokens")
        for sp, _, _ in gold.entities:
            self._check_span(sp)
        for _, sp, _ in gold.arguments:
            self._check_span(sp)

    def _check_span(self, sp: Span) -> None:
        idx = self.sentence_index(sp.start)
        s, e = self.sentence_bounds[idx]
        if sp.end >= e:
            raise ValidationError(f"span ({sp.start},{sp.end}) crosses the boundary of sentence {idx}")
        if sp.sentence_idx != idx:
            raise ValidationError(
                f"span ({sp.start},{sp.end}) carries sentence_idx {sp.sentence_idx}, expected {idx}")

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    def sentence_index(self, token_idx: int) -> int:
        """Index of the sentence containing a token."""
        if token_idx < 0 or token_idx >= len(self.tokens):
            raise ValidationError(f"token index {token_idx} out of range")
        starts = [s for s, _ in self.sentence_bounds]
        return bisect_right(starts, token_idx) - 1

    def make_span(self, start: int, end: int) -> Span:
        """Build a span with the sentence index derived from the bounds."""
        idx = self.sentence_index(start)
        sp = Span(start, end, idx)
        self._check_span(sp)
        return sp


def parse_document(line: str) -> Document:
    """Parse one serialized document record.

    Raises :class:`ParseError` for malformed JSON or field shapes and
    :class:`ValidationError` when a decoded record breaks an invariant.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ParseError("record must be a JSON object")

    doc_id = _field(obj, "doc_id", str)
    tokens = _string_list(obj, "tokens")
    sentences = _pair_list(obj, "sentences")

    # Build a bare document first so spans can be validated against bounds.
    base = Document(doc_id=doc_id, tokens=tuple(tokens), sentence_bounds=tuple(sentences))
    if not any(f in obj for f in _GOLD_FIELDS):
        return base

    triggers = [(_field(rec, "token", int, ctx="triggers"), _field(rec, "type", str, ctx="triggers"))
                for rec in _record_list(obj, "triggers")]
    arguments = []
    for rec in _record_list(obj, "arguments"):
        sp = base.make_span(_field(rec, "start", int, ctx="arguments"),
                            _field(rec, "end", int, ctx="arguments"))
        arguments.append((_field(rec, "trigger", int, ctx="arguments"), sp,
                          _field(rec, "role", str, ctx="arguments")))
    entities = []
    for rec in _record_list(obj, "entities"):
        sp = base.make_span(_field(rec, "start", int, ctx="entities"),
                            _field(rec, "end", int, ctx="entities"))
        entities.append((sp, _field(rec, "type", str, ctx="entities"),
                         _field(rec, "level", str, ctx="entities")))
    gold = Annotations(
        triggers=tuple(triggers),
        arguments=tuple(arguments),
        entities=tuple(entities),
        entity_clusters=tuple(tuple(c) for c in _cluster_list(obj, "entity_clusters")),
        event_clusters=tuple(tuple(c) for c in _cluster_list(obj, "event_clusters")),
    )
    return Document(doc_id=doc_id, tokens=base.tokens, sentence_bounds=base.sentence_bounds, gold=gold)


def serialize_document(doc: Document) -> str:
    """Canonical single-line JSON form of a document."""
    rec: dict[str, Any] = {
        "doc_id": doc.doc_id,
        "tokens": list(doc.tokens),
        "sentences": [[s, e] for s, e in doc.sentence_bounds],
    }
    if doc.gold is not None:
        g = doc.gold
        rec["triggers"] = [{"token": t, "type": ty} for t, ty in g.triggers]
        rec["arguments"] = [{"trigger": t, "start": sp.start, "end": sp.end, "role": r}
                            for t, sp, r in g.arguments]
        rec["entities"] = [{"start": sp.start, "end": sp.end, "type": ty, "level": lv}
                           for sp, ty, lv in g.entities]
        rec["entity_clusters"] = [list(c) for c in g.entity_clusters]
        rec["event_clusters"] = [list(c) for c in g.event_clusters]
    return json.dumps(rec, separators=(",", ":"), ensure_ascii=False)


def read_corpus(path) -> list[Document]:
    with open(path, encoding="utf-8") as fh:
        return [parse_document(line) for line in fh if line.strip()]


def write_corpus(path, docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(serialize_document(doc))
            fh.write("\n")


def enumerate_spans(doc: Document, k_max: int) -> list[Span]:
    """All in-sentence spans of width 1..k_max, sorted by (start, end)."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    spans: list[Span] = []
    for idx, (s, e) in enumerate(doc.sentence_bounds):
        for start in range(s, e):
            for end in range(start, min(start + k_max, e)):
                spans.append(Span(start, end, idx))
    return spans


@dataclass(frozen=True)
class ClusterSet:
    """A partition of mentions into coreference clusters.

    Members keep their document order and clusters sort by first member,
    so equal partitions compare equal.
    """

    clusters: tuple[tuple[Hashable, ...], ...]

    @classmethod
    def from_groups(cls, groups: Iterable[Iterable[Hashable]],
                    order: Mapping[Hashable, int]) -> "ClusterSet":
        normalized = [tuple(sorted(g, key=order.__getitem__)) for g in groups if g]
        normalized.sort(key=lambda c: order[c[0]])
        return cls(tuple(normalized))

    def __iter__(self) -> Iterator[tuple[Hashable, ...]]:
        return iter(self.clusters)

    def __len__(self) -> int:
        return len(self.clusters)


def clusters_from_antecedents(links: Mapping[Hashable, Optional[Hashable]]) -> ClusterSet:
    """Connected components of antecedent links.

    ``links`` maps each mention, in document order, to an earlier mention or
    None.  A link to a mention that has not appeared yet (or is not a key)
    is a forward link and raises :class:`ValidationError`.
    """
    order = {m: i for i, m in enumerate(links)}
    parent: dict[Hashable, Hashable] = {}

    def find(m: Hashable) -> Hashable:
        while parent[m] is not m:
            parent[m] = parent[parent[m]]
            m = parent[m]
        return m

    for m, a in links.items():
        parent[m] = m
        if a is None:
            continue
        if a not in order or order[a] >= order[m]:
            raise ValidationError(f"link {m!r} -> {a!r} does not point to an earlier mention")
        parent[m] = find(a)

    groups: dict[Hashable, list[Hashable]] = {}
    for m in links:
        groups.setdefault(find(m), []).append(m)
    return ClusterSet.from_groups(groups.values(), order)


def _field(obj: Mapping, name: str, typ: type, ctx: str = "record") -> Any:
    if name not in obj:
        raise ParseError(f"{ctx} is missing required field {name!r}")
    value = obj[name]
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"field {name!r} in {ctx} must be an integer, got {value!r}")
        return value
    if not isinstance(value, typ):
        raise ParseError(f"field {name!r} in {ctx} must be {typ.__name__}, got {value!r}")
    return value


def _string_list(obj: Mapping, name: str) -> list[str]:
    value = obj.get(name)
    if not isinstance(value, list) or not all(isinstance(t, str) for t in value):
        raise ParseError(f"field {name!r} must be a list of strings")
    return value


def _pair_list(obj: Mapping, name: str) -> list[tuple[int, int]]:
    value = obj.get(name)
    if not isinstance(value, list):
        raise ParseError(f"field {name!r} must be a list of [start, end) pairs")
    pairs = []
    for item in value:
        if (not isinstance(item, (list, tuple)) or len(item) != 2
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in item)):
            raise ParseError(f"field {name!r} must contain [start, end) integer pairs, got {item!r}")
        pairs.append((item[0], item[1]))
    return pairs


def _record_list(obj: Mapping, name: str) -> list[Mapping]:
    value = obj.get(name, [])
    if not isinstance(value, list) or not all(isinstance(r, dict) for r in value):
        raise ParseError(f"field {name!r} must be a list of objects")
    return value


def _cluster_list(obj: Mapping, name: str) -> list[list[int]]:
    value = obj.get(name, [])
    if not isinstance(value, list):
        raise ParseError(f"field {name!r} must be a list of lists of indices")
    out = []
    for item in value:
        if (not isinstance(item, list)
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in item)):
            raise ParseError(f"field {name!r} must contain lists of integer indices, got {item!r}")
        out.append(item)
    return out
