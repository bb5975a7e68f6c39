import json

import pytest
from hypothesis import given, settings, strategies as st

from docevents.docmodel import (Annotations, Document, ParseError, Span, ValidationError,
                                clusters_from_antecedents, enumerate_spans,
                                parse_document, serialize_document)
from docevents.synth import GenConfig, generate


def make_doc(tokens, bounds, **gold):
    ann = Annotations(**gold) if gold else None
    return Document(doc_id="d0", tokens=tuple(tokens), sentence_bounds=tuple(bounds),
                    gold=ann)


class TestParse:
    def test_minimal_record_round_trip(self):
        rec = {"doc_id": "d1", "tokens": ["He", "died", "."], "sentences": [[0, 3]],
               "triggers": [{"token": 1, "type": "Die"}], "arguments": [],
               "entities": [], "entity_clusters": [], "event_clusters": []}
        doc = parse_document(json.dumps(rec))
        assert doc.n_tokens == 3
        assert doc.gold.triggers == ((1, "Die"),)

    def test_argument_span_must_be_an_entity(self):
        rec = {"doc_id": "d1", "tokens": ["a", "b", "c"], "sentences": [[0, 3]],
               "triggers": [{"token": 0, "type": "X"}],
               "arguments": [{"trigger": 0, "start": 1, "end": 2, "role": "R"}],
               "entities": []}
        with pytest.raises(ValidationError, match="does not appear among entities"):
            parse_document(json.dumps(rec))

    def test_malformed_json_is_a_parse_error(self):
        with pytest.raises(ParseError, match="invalid JSON"):
            parse_document("{not json")

    def test_missing_field_names_the_field(self):
        with pytest.raises(ParseError, match="doc_id"):
            parse_document(json.dumps({"tokens": ["a"], "sentences": [[0, 1]]}))

    def test_span_crossing_sentences_rejected(self):
        rec = {"doc_id": "d1", "tokens": ["a", "b", "c", "d"], "sentences": [[0, 2], [2, 4]],
               "triggers": [], "arguments": [],
               "entities": [{"start": 1, "end": 2, "type": "E", "level": "name"}]}
        with pytest.raises(ValidationError, match="crosses"):
            parse_document(json.dumps(rec))

    def test_bad_sentence_cover_rejected(self):
        rec = {"doc_id": "d1", "tokens": ["a", "b"], "sentences": [[0, 1]]}
        with pytest.raises(ValidationError):
            parse_document(json.dumps(rec))

    def test_record_without_annotations_has_no_gold(self):
        doc = parse_document(json.dumps({"doc_id": "d", "tokens": ["a"], "sentences": [[0, 1]]}))
        assert doc.gold is None

    def test_mixed_type_event_cluster_rejected(self):
        rec = {"doc_id": "d1", "tokens": ["a", "b"], "sentences": [[0, 2]],
               "triggers": [{"token": 0, "type": "X"}, {"token": 1, "type": "Y"}],
               "event_clusters": [[0, 1]]}
        with pytest.raises(ValidationError, match="mixes types"):
            parse_document(json.dumps(rec))

    def test_round_trip_is_identity_on_generated_corpora(self):
        docs = generate(GenConfig(n_docs=20, seed=41))
        for doc in docs:
            line = serialize_document(doc)
            assert serialize_document(parse_document(line)) == line


class TestEnumerateSpans:
    def test_single_sentence_k2(self):
        doc = make_doc(["a", "b", "c"], [(0, 3)])
        spans = enumerate_spans(doc, 2)
        assert [(s.start, s.end) for s in spans] == [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)]

    def test_width_truncates_at_sentence_length(self):
        doc = make_doc(list("abcde"), [(0, 5)])
        assert len(enumerate_spans(doc, 12)) == 15

    def test_no_span_crosses_sentence_boundaries(self):
        doc = make_doc(list("abcdef"), [(0, 3), (3, 6)])
        for sp in enumerate_spans(doc, 3):
            # brute-force cross-boundary scan
            assert not (sp.start < 3 <= sp.end)

    @given(lengths=st.lists(st.integers(1, 9), min_size=1, max_size=5),
           k=st.integers(1, 12))
    @settings(max_examples=60, deadline=None)
    def test_count_formula(self, lengths, k):
        bounds, pos = [], 0
        for n in lengths:
            bounds.append((pos, pos + n))
            pos += n
        doc = make_doc([f"t{i}" for i in range(pos)], bounds)
        expected = sum(sum(n - w + 1 for w in range(1, min(k, n) + 1)) for n in lengths)
        assert len(enumerate_spans(doc, k)) == expected

    def test_k_must_be_positive(self):
        doc = make_doc(["a"], [(0, 1)])
        with pytest.raises(ValueError):
            enumerate_spans(doc, 0)


def brute_force_closure(links):
    members = list(links)
    groups = [{m} for m in members]
    changed = True
    while changed:
        changed = False
        for m, a in links.items():
            if a is None:
                continue
            gm = next(g for g in groups if m in g)
            ga = next(g for g in groups if a in g)
            if gm is not ga:
                gm |= ga
                groups.remove(ga)
                changed = True
    order = {m: i for i, m in enumerate(members)}
    out = [tuple(sorted(g, key=order.__getitem__)) for g in groups]
    out.sort(key=lambda c: order[c[0]])
    return tuple(out)


class TestClustersFromAntecedents:
    def test_chain_transitivity(self):
        cs = clusters_from_antecedents({"a": None, "b": "a", "c": "b"})
        assert cs.clusters == (("a", "b", "c"),)

    def test_all_none_gives_singletons(self):
        cs = clusters_from_antecedents({"a": None, "b": None})
        assert cs.clusters == (("a",), ("b",))

    def test_forward_link_rejected(self):
        with pytest.raises(ValidationError, match="earlier"):
            clusters_from_antecedents({"a": "b", "b": None})

    @given(st.data())
    @settings(max_examples=100, deadline=None)
    def test_matches_brute_force_closure(self, data):
        n = data.draw(st.integers(1, 8))
        links = {}
        for m in range(n):
            a = data.draw(st.one_of(st.none(), st.integers(0, m - 1)) if m else st.none())
            links[m] = a
        assert clusters_from_antecedents(links).clusters == brute_force_closure(links)

    def test_idempotent_under_relinking_to_first_mention(self):
        links = {0: None, 1: 0, 2: None, 3: 1, 4: 2}
        cs = clusters_from_antecedents(links)
        relinked = {}
        first_of = {}
        for cluster in cs.clusters:
            for m in cluster:
                first_of[m] = cluster[0]
        for m in links:
            relinked[m] = None if first_of[m] == m else first_of[m]
        assert clusters_from_antecedents(relinked) == cs


class TestAnnotationsCanonicalization:
    def test_clusters_completed_with_singletons(self):
        ann = Annotations(triggers=((0, "X"), (3, "X"), (5, "Y")),
                          event_clusters=((0, 1),))
        assert ann.event_clusters == ((0, 1), (2,))

    def test_entity_sort_remaps_cluster_indices(self):
        s1, s2 = Span(4, 4, 0), Span(1, 2, 0)
        ann = Annotations(entities=((s1, "E", "name"), (s2, "E", "pronoun")),
                          entity_clusters=((0, 1),))
        assert ann.entities[0][0] == s2
        assert ann.entity_clusters == ((0, 1),)

    def test_duplicate_trigger_token_rejected(self):
        with pytest.raises(ValidationError, match="twice"):
            Annotations(triggers=((1, "X"), (1, "Y")))

    def test_overlapping_clusters_rejected(self):
        with pytest.raises(ValidationError, match="overlap"):
            Annotations(triggers=((0, "X"), (1, "X")), event_clusters=((0, 1), (1,)))
