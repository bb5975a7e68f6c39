"""End-to-end prediction for a document.

Runs the local model per chunk, optionally refines the trigger distributions
by value-network gradient ascent, then decodes triggers, entities, arguments
and both coreference link sets into a full annotation record.  The refined
distributions determine *which* tokens are triggers; pair features keep the
local classifier's clean distributions so that scoring matches training.

Arguments pair every predicted trigger with all enumerated spans of its
sentence; an argument is emitted only when its best role is non-null and its
span was also predicted as an entity, which keeps the output record valid.
Event-coreference candidates are restricted to earlier triggers of the same
predicted type, so predicted event clusters never mix types.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .docmodel import (Annotations, Document, Span, TypeInventory,
                       clusters_from_antecedents, enumerate_spans)
from .extractor import (DEFAULT_MAX_ANTECEDENTS, LocalModelParams, chunk_document,
                        classify_triggers, entity_class_decode, predict_antecedents,
                        width_bucket)
from .features import FeatureProvider
from .numerics import mlp_forward
from .valuenet import DvnConfig, ValueNetParams, refine


@dataclass
class DocPrediction:
    """Raw per-document model outputs alongside the decoded annotations."""

    annotations: Annotations
    y_local: np.ndarray
    y_refined: np.ndarray
    feats: np.ndarray


def infer_document(local: LocalModelParams, provider: FeatureProvider, doc: Document,
                   inventory: TypeInventory, dvn: Optional[ValueNetParams] = None,
                   dvn_cfg: Optional[DvnConfig] = None, max_chunk_tokens: int = 128,
                   max_antecedents: int = DEFAULT_MAX_ANTECEDENTS) -> DocPrediction:
    chunks = chunk_document(doc, max_chunk_tokens)
    feat_parts, local_parts, refined_parts = [], [], []
    for chunk in chunks:
        feats = provider.embed(chunk.tokens)
        y_local = classify_triggers(local, feats)
        if dvn is not None and dvn_cfg is not None and dvn_cfg.iterations > 0 \
                and dvn_cfg.step_size > 0:
            y_ref = refine(dvn, feats, y_local, dvn_cfg)
        else:
            y_ref = y_local
        feat_parts.append(feats)
        local_parts.append(y_local)
        refined_parts.append(y_ref)
    feats = np.concatenate(feat_parts, axis=0)
    y_local = np.concatenate(local_parts, axis=0)
    y_ref = np.concatenate(refined_parts, axis=0)

    annotations = decode_annotations(local, doc, inventory, feats, y_local, y_ref,
                                     max_antecedents=max_antecedents)
    return DocPrediction(annotations=annotations, y_local=y_local, y_refined=y_ref,
                         feats=feats)


def decode_annotations(local: LocalModelParams, doc: Document,
                       inventory: TypeInventory, feats: np.ndarray,
                       y_local: np.ndarray, y_ref: np.ndarray,
                       max_antecedents: int = DEFAULT_MAX_ANTECEDENTS) -> Annotations:
    d = local.token_dim

    # Triggers: per-token argmax of the (refined) distribution, NULL excluded.
    type_ids = y_ref.argmax(axis=1)
    triggers = [(int(tok), inventory.event_types[tid])
                for tok, tid in enumerate(type_ids) if tid > 0]

    # Entities over all candidate spans.
    spans = enumerate_spans(doc, inventory.k_max)
    h_idx = np.array([sp.start for sp in spans], dtype=np.int64)
    t_idx = np.array([sp.end for sp in spans], dtype=np.int64)
    buckets = np.array([width_bucket(sp.width) for sp in spans], dtype=np.int64)
    X = np.concatenate([feats[h_idx], feats[t_idx], local.width_embed[buckets]], axis=1)
    ent_logits, _ = mlp_forward(local.entity, X)
    ent_class = ent_logits.argmax(axis=1)
    entities: list[tuple[Span, str, str]] = []
    entity_pos: dict[tuple[int, int], int] = {}
    for i, sp in enumerate(spans):
        if ent_class[i] > 0:
            ty, lv = entity_class_decode(inventory, int(ent_class[i]))
            entity_pos[(sp.start, sp.end)] = len(entities)
            entities.append((sp, ty, lv))

    # Arguments: predicted triggers paired with same-sentence spans; keep
    # pairs whose best role is non-null and whose span is an entity.
    span_sent = np.array([sp.sentence_idx for sp in spans], dtype=np.int64)
    arguments: list[tuple[int, Span, str]] = []
    for tok, _ in triggers:
        sent = doc.sentence_index(tok)
        cand = np.flatnonzero(span_sent == sent)
        if not len(cand):
            continue
        reps = np.concatenate([np.repeat(feats[tok][None, :], len(cand), axis=0),
                               X[cand]], axis=1)
        logits, _ = mlp_forward(local.argument, reps)
        roles = logits.argmax(axis=1)
        for ci, role_id in zip(cand, roles):
            sp = spans[int(ci)]
            if role_id > 0 and (sp.start, sp.end) in entity_pos:
                arguments.append((tok, sp, inventory.argument_roles[int(role_id) - 1]))

    # Event coreference: earlier same-type triggers, nearest-first pruning.
    event_clusters = _link_clusters(
        reps=np.concatenate([feats[[tok for tok, _ in triggers]],
                             y_local[[tok for tok, _ in triggers]]], axis=1)
        if triggers else np.zeros((0, d + local.n_event_types)),
        mlp=local.event_coref,
        groups=[ty for _, ty in triggers],
        max_antecedents=max_antecedents)

    # Entity coreference over predicted entity mentions.
    if entities:
        m_h = np.array([sp.start for sp, _, _ in entities])
        m_t = np.array([sp.end for sp, _, _ in entities])
        m_b = np.array([width_bucket(sp.width) for sp, _, _ in entities])
        Xm = np.concatenate([feats[m_h], feats[m_t], local.width_embed[m_b]], axis=1)
    else:
        Xm = np.zeros((0, local.span_dim))
    entity_clusters = _link_clusters(reps=Xm, mlp=local.entity_coref,
                                     groups=None, max_antecedents=max_antecedents)

    return Annotations(
        triggers=tuple(triggers),
        arguments=tuple(arguments),
        entities=tuple(entities),
        entity_clusters=entity_clusters,
        event_clusters=event_clusters,
    )


def _link_clusters(reps: np.ndarray, mlp, groups, max_antecedents: int
                   ) -> tuple[tuple[int, ...], ...]:
    """Antecedent scoring and transitive closure over mention indices.

    ``groups`` optionally restricts candidates to earlier mentions with an
    equal group key (used to keep event clusters type-pure).
    """
    n = reps.shape[0]
    if n == 0:
        return ()
    pair_i: list[int] = []
    pair_j: list[int] = []
    cands: list[list[int]] = []
    for i in range(n):
        allowed = [j for j in range(i)
                   if groups is None or groups[j] == groups[i]][-max_antecedents:]
        cands.append(allowed)
        for j in allowed:
            pair_i.append(i)
            pair_j.append(j)
    if pair_i:
        pair_scores = mlp_forward(
            mlp, np.concatenate([reps[np.array(pair_i)], reps[np.array(pair_j)]], axis=1))[0][:, 0]
    else:
        pair_scores = np.zeros(0)
    score_vecs = []
    pos = 0
    for i in range(n):
        vec = np.full(i + 1, -np.inf)
        vec[0] = 0.0
        for j in cands[i]:
            vec[j + 1] = pair_scores[pos]
            pos += 1
        score_vecs.append(vec)
    links = predict_antecedents(score_vecs)
    cluster_set = clusters_from_antecedents(
        {i: links[i] for i in range(n)})
    return tuple(tuple(int(m) for m in cluster) for cluster in cluster_set.clusters)


def predict_corpus(local: LocalModelParams, provider: FeatureProvider, docs,
                   inventory: TypeInventory, dvn: Optional[ValueNetParams] = None,
                   dvn_cfg: Optional[DvnConfig] = None, max_chunk_tokens: int = 128,
                   max_antecedents: int = DEFAULT_MAX_ANTECEDENTS) -> list[Document]:
    """Prediction documents (gold fields replaced by model output)."""
    out = []
    for doc in docs:
        pred = infer_document(local, provider, doc, inventory, dvn=dvn, dvn_cfg=dvn_cfg,
                              max_chunk_tokens=max_chunk_tokens,
                              max_antecedents=max_antecedents)
        out.append(Document(doc_id=doc.doc_id, tokens=doc.tokens,
                            sentence_bounds=doc.sentence_bounds, gold=pred.annotations))
    return out
