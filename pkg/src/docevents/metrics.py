"""Document-level evaluation.

Gold and predicted event-coreference clusters are matched one-to-one with a
maximum-score assignment; each matched pair contributes a graded score.  The
trigger metric scores clusters by event type agreement and set overlap of
trigger tokens; the argument metric scores argument clusters (an argument
role with the coreferent entity mentions of its filler) by informativeness
weights and a false-positive penalty.  A component breakdown reports plain
micro-F1 for trigger/argument/entity extraction and MUC F1 for both
coreference tasks.

Aggregation convention: matched-pair scores divide by the predicted cluster
count for precision and the gold cluster count for recall; a document where
both sides are empty scores (1, 1, 1) and a one-sided empty document scores
(0, 0, 0).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .docmodel import Annotations, MENTION_LEVELS

# A trigger cluster is a sequence of (token index, event type) pairs.
TriggerCluster = Sequence[tuple[int, str]]
# An argument cluster is (role, mentions) with mentions ((start, end), level).
ArgumentCluster = tuple[str, Sequence[tuple[tuple[int, int], str]]]

COMPONENT_KEYS = ("trig_i", "trig_c", "arg_i", "arg_c", "entity", "evt_coref", "ent_coref")

_TIE_TOL = 1e-9


@dataclass(frozen=True)
class MetricConfig:
    """Informativeness weights for mention levels."""

    name_weight: float = 1.0
    nominal_weight: float = 0.5
    pronoun_weight: float = 0.25

    def __post_init__(self) -> None:
        w = (self.name_weight, self.nominal_weight, self.pronoun_weight)
        if any(x <= 0 for x in w):
            raise ValueError("informativeness weights must be positive")
        if not (w[0] >= w[1] >= w[2]):
            raise ValueError("weights must be non-increasing from name to pronoun")

    def weight(self, level: str) -> float:
        try:
            idx = MENTION_LEVELS.index(level)
        except ValueError:
            raise ValueError(f"unknown mention level {level!r}") from None
        return (self.name_weight, self.nominal_weight, self.pronoun_weight)[idx]


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "PRF":
        s = precision + recall
        return cls(precision, recall, 2.0 * precision * recall / s if s > 0 else 0.0)

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class ScoreReport:
    doc_trigger: PRF
    doc_argument: PRF
    components: dict[str, PRF]

    def to_dict(self) -> dict:
        return {
            "doc_trigger": self.doc_trigger.to_dict(),
            "doc_argument": self.doc_argument.to_dict(),
            "components": {k: self.components[k].to_dict() for k in COMPONENT_KEYS},
        }


def _max_total(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    return float(matrix[rows, cols].sum())


def hungarian(scores) -> list[tuple[int, int]]:
    """Maximum-total one-to-one assignment of min(rows, cols) pairs.

    Among equal-total optima the result is deterministic: pairs are chosen
    greedily in ascending (row, column) order, keeping a pair whenever some
    optimal assignment still contains it.
    """
    m = np.asarray(scores, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("score matrix must be two-dimensional")
    if m.size == 0:
        return []
    if not np.isfinite(m).all() or (m < 0).any():
        raise ValueError("scores must be finite and non-negative")
    base = _max_total(m)
    n_pairs = min(m.shape)
    rows_left = list(range(m.shape[0]))
    cols_left = list(range(m.shape[1]))
    chosen: list[tuple[int, int]] = []
    fixed = 0.0
    for g in range(m.shape[0]):
        if len(chosen) == n_pairs:
            break
        matched = False
        for p in list(cols_left):
            rest_rows = [r for r in rows_left if r != g]
            rest_cols = [c for c in cols_left if c != p]
            total = fixed + m[g, p] + _max_total(m[np.ix_(rest_rows, rest_cols)])
            if total >= base - _TIE_TOL:
                chosen.append((g, p))
                rows_left.remove(g)
                cols_left.remove(p)
                fixed += m[g, p]
                matched = True
                break
        if not matched:
            rows_left.remove(g)
    return chosen


def _majority_type(cluster: TriggerCluster) -> str:
    counts: dict[str, int] = {}
    for _, ty in cluster:
        counts[ty] = counts.get(ty, 0) + 1
    best = max(counts.values())
    tied = {ty for ty, c in counts.items() if c == best}
    for tok, ty in sorted(cluster):
        if ty in tied:
            return ty
    raise AssertionError("unreachable: non-empty cluster")


def cluster_match_trigger(gold: TriggerCluster, pred: TriggerCluster) -> float:
    """Type agreement gate times set-F1 over trigger token indices."""
    if not gold or not pred:
        return 0.0
    if _majority_type(pred) != _majority_type(gold):
        return 0.0
    g = {tok for tok, _ in gold}
    p = {tok for tok, _ in pred}
    return 2.0 * len(g & p) / (len(g) + len(p))


def _spans_overlap(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def _dedupe_mentions(mentions: Sequence[tuple[tuple[int, int], str]],
                     cfg: MetricConfig) -> list[tuple[tuple[int, int], str]]:
    best: dict[tuple[int, int], str] = {}
    for span, level in mentions:
        if span not in best or cfg.weight(level) > cfg.weight(best[span]):
            best[span] = level
    return [(span, best[span]) for span in sorted(best)]


def cluster_match_argument(gold: ArgumentCluster, pred: ArgumentCluster,
                           cfg: MetricConfig) -> float:
    """Role gate, informativeness credit, and a false-positive penalty.

    The credit is the weight of the most informative predicted mention that
    overlaps some gold mention, normalized by the weight of the most
    informative gold mention; the penalty is the fraction of predicted
    mentions (deduplicated by span) overlapping nothing in gold.
    """
    gold_role, gold_mentions = gold
    pred_role, pred_mentions = pred
    pred_m = _dedupe_mentions(pred_mentions, cfg)
    if not pred_m or not gold_mentions:
        return 0.0
    if gold_role != pred_role:
        return 0.0
    overlapping = [(span, level) for span, level in pred_m
                   if any(_spans_overlap(span, gs) for gs, _ in gold_mentions)]
    if not overlapping:
        return 0.0
    w_bm = max(cfg.weight(level) for _, level in overlapping)
    w_bg = max(cfg.weight(level) for _, level in gold_mentions)
    n_fp = len(pred_m) - len(overlapping)
    return (w_bm / w_bg) * (1.0 - n_fp / len(pred_m))


def _assignment_prf(matched: float, n_gold: int, n_pred: int) -> PRF:
    if n_gold == 0 and n_pred == 0:
        return PRF(1.0, 1.0, 1.0)
    if n_gold == 0 or n_pred == 0:
        return PRF(0.0, 0.0, 0.0)
    return PRF.from_pr(matched / n_pred, matched / n_gold)


def doc_trigger_assignment(gold_clusters: Sequence[TriggerCluster],
                           pred_clusters: Sequence[TriggerCluster]
                           ) -> tuple[float, list[tuple[int, int]]]:
    """Matched-score mass and the optimal cluster assignment."""
    if not gold_clusters or not pred_clusters:
        return 0.0, []
    matrix = np.array([[cluster_match_trigger(g, p) for p in pred_clusters]
                       for g in gold_clusters])
    pairs = hungarian(matrix)
    return float(sum(matrix[g, p] for g, p in pairs)), pairs


def doc_trigger(gold_clusters: Sequence[TriggerCluster],
                pred_clusters: Sequence[TriggerCluster]) -> PRF:
    matched, _ = doc_trigger_assignment(gold_clusters, pred_clusters)
    return _assignment_prf(matched, len(gold_clusters), len(pred_clusters))


def doc_argument_mass(gold_args: Sequence[Sequence[ArgumentCluster]],
                      pred_args: Sequence[Sequence[ArgumentCluster]],
                      assignment: Sequence[tuple[int, int]],
                      cfg: MetricConfig) -> tuple[float, int, int]:
    """Matched argument mass plus gold/pred argument-cluster totals.

    ``gold_args[i]`` lists the argument clusters of gold event cluster i
    (likewise for predictions); argument clusters attached to event clusters
    outside the assignment count only in their side's denominator.
    """
    matched = 0.0
    for g, p in assignment:
        ga, pa = gold_args[g], pred_args[p]
        if not ga or not pa:
            continue
        matrix = np.array([[cluster_match_argument(a, b, cfg) for b in pa] for a in ga])
        matched += float(sum(matrix[i, j] for i, j in hungarian(matrix)))
    return matched, sum(len(x) for x in gold_args), sum(len(x) for x in pred_args)


def doc_argument(gold_args: Sequence[Sequence[ArgumentCluster]],
                 pred_args: Sequence[Sequence[ArgumentCluster]],
                 assignment: Sequence[tuple[int, int]],
                 cfg: Optional[MetricConfig] = None) -> PRF:
    cfg = cfg or MetricConfig()
    matched, n_gold, n_pred = doc_argument_mass(gold_args, pred_args, assignment, cfg)
    return _assignment_prf(matched, n_gold, n_pred)


def event_trigger_clusters(ann: Annotations) -> list[list[tuple[int, str]]]:
    return [[ann.triggers[i] for i in cluster] for cluster in ann.event_clusters]


def argument_clusters_by_event(ann: Annotations) -> list[list[ArgumentCluster]]:
    """Argument clusters grouped by the event cluster of their trigger.

    Each argument expands to its filler's full entity-coreference cluster;
    arguments of one event cluster sharing a role and a filler cluster
    collapse into a single argument cluster.
    """
    ent_cluster_of: dict[int, int] = {}
    for cid, cluster in enumerate(ann.entity_clusters):
        for idx in cluster:
            ent_cluster_of[idx] = cid
    cluster_mentions = [tuple(((ann.entities[i][0].start, ann.entities[i][0].end),
                               ann.entities[i][2]) for i in cluster)
                        for cluster in ann.entity_clusters]
    span_to_entity: dict[tuple[int, int], int] = {}
    for idx, (sp, _, _) in enumerate(ann.entities):
        span_to_entity.setdefault((sp.start, sp.end), idx)
    event_of_token: dict[int, int] = {}
    for eid, cluster in enumerate(ann.event_clusters):
        for i in cluster:
            event_of_token[ann.triggers[i][0]] = eid

    grouped: list[dict[tuple[str, int], ArgumentCluster]] = [dict() for _ in ann.event_clusters]
    for tok, sp, role in ann.arguments:
        ent_idx = span_to_entity[(sp.start, sp.end)]
        cid = ent_cluster_of[ent_idx]
        eid = event_of_token[tok]
        grouped[eid].setdefault((role, cid), (role, cluster_mentions[cid]))
    return [list(g.values()) for g in grouped]


def _set_counts(gold: set, pred: set) -> tuple[int, int, int]:
    tp = len(gold & pred)
    return tp, len(pred) - tp, len(gold) - tp


def _prf_from_counts(tp: int, fp: int, fn: int) -> PRF:
    if tp + fp == 0 and tp + fn == 0:
        return PRF(1.0, 1.0, 1.0)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return PRF.from_pr(p, r)


def muc_counts(gold_clusters: Sequence[set], pred_clusters: Sequence[set]
               ) -> tuple[int, int, int, int]:
    """MUC link counts: (recall num, recall den, precision num, precision den)."""

    def side(base: Sequence[set], other: Sequence[set]) -> tuple[int, int]:
        owner: dict = {}
        for cid, cluster in enumerate(other):
            for m in cluster:
                owner[m] = cid
        num = den = 0
        for cluster in base:
            parts = len({owner.get(m, ("unlinked", m)) for m in cluster})
            num += len(cluster) - parts
            den += len(cluster) - 1
        return num, den

    r_num, r_den = side(gold_clusters, pred_clusters)
    p_num, p_den = side(pred_clusters, gold_clusters)
    return r_num, r_den, p_num, p_den


def _muc_prf(r_num: int, r_den: int, p_num: int, p_den: int) -> PRF:
    if r_den == 0 and p_den == 0:
        return PRF(1.0, 1.0, 1.0)
    p = p_num / p_den if p_den else 0.0
    r = r_num / r_den if r_den else 0.0
    return PRF.from_pr(p, r)


def _component_sets(ann: Annotations) -> dict[str, set]:
    type_of_token = dict(ann.triggers)
    return {
        "trig_i": {tok for tok, _ in ann.triggers},
        "trig_c": set(ann.triggers),
        "arg_i": {(type_of_token[tok], sp.start, sp.end) for tok, sp, _ in ann.arguments},
        "arg_c": {(type_of_token[tok], sp.start, sp.end, role) for tok, sp, role in ann.arguments},
        "entity": {(sp.start, sp.end, ty) for sp, ty, _ in ann.entities},
    }


def _coref_sets(ann: Annotations) -> tuple[list[set], list[set]]:
    evt = [{ann.triggers[i][0] for i in cluster} for cluster in ann.event_clusters]
    ent = [{(ann.entities[i][0].start, ann.entities[i][0].end) for i in cluster}
           for cluster in ann.entity_clusters]
    return evt, ent


def component_scores(gold: Annotations, pred: Annotations) -> dict[str, PRF]:
    """Micro P/R/F1 per task for one document pair."""
    acc = _ComponentAccumulator()
    acc.add(gold, pred)
    return acc.finish()


class _ComponentAccumulator:
    def __init__(self) -> None:
        self.counts = {k: [0, 0, 0] for k in ("trig_i", "trig_c", "arg_i", "arg_c", "entity")}
        self.muc = {"evt_coref": [0, 0, 0, 0], "ent_coref": [0, 0, 0, 0]}

    def add(self, gold: Annotations, pred: Annotations) -> None:
        gsets, psets = _component_sets(gold), _component_sets(pred)
        for key, store in self.counts.items():
            tp, fp, fn = _set_counts(gsets[key], psets[key])
            store[0] += tp
            store[1] += fp
            store[2] += fn
        g_evt, g_ent = _coref_sets(gold)
        p_evt, p_ent = _coref_sets(pred)
        for key, (g, p) in (("evt_coref", (g_evt, p_evt)), ("ent_coref", (g_ent, p_ent))):
            add = muc_counts(g, p)
            for i in range(4):
                self.muc[key][i] += add[i]

    def finish(self) -> dict[str, PRF]:
        out = {k: _prf_from_counts(*v) for k, v in self.counts.items()}
        out.update({k: _muc_prf(*v) for k, v in self.muc.items()})
        return out


def score_documents(gold_docs, pred_docs, cfg: Optional[MetricConfig] = None) -> ScoreReport:
    """Corpus-level report over aligned gold/prediction document lists."""
    cfg = cfg or MetricConfig()
    if len(gold_docs) != len(pred_docs):
        raise ValueError("gold and prediction lists must be aligned")
    dt = [0.0, 0, 0]
    da = [0.0, 0, 0]
    comps = _ComponentAccumulator()
    for gold_doc, pred_doc in zip(gold_docs, pred_docs):
        gold, pred = gold_doc.gold, pred_doc.gold
        if gold is None or pred is None:
            raise ValueError(f"document {gold_doc.doc_id} lacks annotations to score")
        g_clusters = event_trigger_clusters(gold)
        p_clusters = event_trigger_clusters(pred)
        matched, assignment = doc_trigger_assignment(g_clusters, p_clusters)
        dt[0] += matched
        dt[1] += len(g_clusters)
        dt[2] += len(p_clusters)
        am, ag, ap = doc_argument_mass(argument_clusters_by_event(gold),
                                       argument_clusters_by_event(pred), assignment, cfg)
        da[0] += am
        da[1] += ag
        da[2] += ap
        comps.add(gold, pred)
    return ScoreReport(
        doc_trigger=_assignment_prf(dt[0], dt[1], dt[2]),
        doc_argument=_assignment_prf(da[0], da[1], da[2]),
        components=comps.finish(),
    )
