"""Span-based local extraction model.

Per-token trigger classification, span-level entity classification (entity
type and mention level share one softmax), pairwise scorers for arguments
and for event/entity coreference, and the combined training loss.  All heads
are small feed-forward networks over token features from a pluggable
provider; every gradient is computed analytically so the whole model trains
without an autograd framework.

Documents are processed in multi-sentence chunks: consecutive whole
sentences packed greedily up to a token budget.  Coreference candidates are
pruned to the nearest earlier mentions.  Argument candidates pair trigger
tokens with enumerated spans of the same sentence.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .docmodel import (Annotations, Document, MENTION_LEVELS, Span, TypeInventory)
from .features import FeatureProvider
from .numerics import (MlpParams, NumericError, cross_entropy, mlp_arrays,
                       mlp_backward, mlp_forward, mlp_grad_arrays, mlp_init,
                       softmax)

WIDTH_BUCKETS = ((1, 1), (2, 2), (3, 3), (4, 4), (5, 7), (8, 12))
PAIR_TASKS = ("arg", "evt-coref", "ent-coref")
DEFAULT_MAX_ANTECEDENTS = 50


def width_bucket(width: int) -> int:
    for i, (lo, hi) in enumerate(WIDTH_BUCKETS):
        if lo <= width <= hi:
            return i
    return len(WIDTH_BUCKETS) - 1


def n_entity_classes(inventory: TypeInventory) -> int:
    return 1 + len(inventory.entity_types) * len(MENTION_LEVELS)


def entity_class_id(inventory: TypeInventory, ent_type: str, level: str) -> int:
    return (1 + inventory.entity_types.index(ent_type) * len(MENTION_LEVELS)
            + MENTION_LEVELS.index(level))


def entity_class_decode(inventory: TypeInventory, class_id: int) -> tuple[str, str]:
    if class_id < 1:
        raise ValueError("class 0 is the non-entity class")
    idx = class_id - 1
    return (inventory.entity_types[idx // len(MENTION_LEVELS)],
            MENTION_LEVELS[idx % len(MENTION_LEVELS)])


def role_class_id(inventory: TypeInventory, role: str) -> int:
    return 1 + inventory.argument_roles.index(role)


@dataclass
class LocalModelParams:
    """All trainable weights of the local extractor."""

    width_embed: np.ndarray
    trigger: MlpParams
    entity: MlpParams
    argument: MlpParams
    event_coref: MlpParams
    entity_coref: MlpParams

    @property
    def token_dim(self) -> int:
        return self.trigger.in_dim

    @property
    def width_dim(self) -> int:
        return self.width_embed.shape[1]

    @property
    def span_dim(self) -> int:
        return 2 * self.token_dim + self.width_dim

    @property
    def n_event_types(self) -> int:
        return self.trigger.out_dim


def init_local_params(rng: np.random.Generator, inventory: TypeInventory,
                      token_dim: int, width_dim: int = 8,
                      hidden: int = 128) -> LocalModelParams:
    n_types = len(inventory.event_types)
    span_dim = 2 * token_dim + width_dim
    return LocalModelParams(
        width_embed=rng.standard_normal((len(WIDTH_BUCKETS), width_dim)) / np.sqrt(width_dim),
        trigger=mlp_init(rng, [token_dim, hidden, n_types]),
        entity=mlp_init(rng, [span_dim, hidden, n_entity_classes(inventory)]),
        argument=mlp_init(rng, [token_dim + span_dim, hidden, 1 + len(inventory.argument_roles)]),
        event_coref=mlp_init(rng, [2 * (token_dim + n_types), hidden, 1]),
        entity_coref=mlp_init(rng, [2 * span_dim, hidden, 1]),
    )


_LOCAL_MLPS = ("trigger", "entity", "argument", "event_coref", "entity_coref")


def local_param_arrays(params: LocalModelParams) -> dict[str, np.ndarray]:
    out = {"local/width_embed": params.width_embed}
    for name in _LOCAL_MLPS:
        out.update(dict(mlp_arrays(f"local/{name}", getattr(params, name))))
    return out


def mlp_from_arrays(arrays: dict[str, np.ndarray], prefix: str,
                    output_activation: str = "identity",
                    hidden_activation: str = "relu") -> MlpParams:
    weights, biases = [], []
    i = 0
    while f"{prefix}/w{i}" in arrays:
        weights.append(arrays[f"{prefix}/w{i}"])
        biases.append(arrays[f"{prefix}/b{i}"])
        i += 1
    if not weights:
        raise NumericError(f"no layers found under {prefix!r}")
    return MlpParams(weights=weights, biases=biases, output_activation=output_activation,
                     hidden_activation=hidden_activation)


def local_params_from_arrays(arrays: dict[str, np.ndarray]) -> LocalModelParams:
    return LocalModelParams(
        width_embed=arrays["local/width_embed"],
        **{name: mlp_from_arrays(arrays, f"local/{name}") for name in _LOCAL_MLPS},
    )


@dataclass(frozen=True)
class Chunk:
    """A run of consecutive whole sentences processed as one unit."""

    doc: Document
    sent_range: tuple[int, int]
    token_range: tuple[int, int]

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.doc.tokens[self.token_range[0]:self.token_range[1]]

    @property
    def n_tokens(self) -> int:
        return self.token_range[1] - self.token_range[0]


def chunk_document(doc: Document, max_tokens: int) -> list[Chunk]:
    """Greedy packing of consecutive sentences into chunks of at most
    ``max_tokens`` tokens; chunks partition the document."""
    chunks: list[Chunk] = []
    first_sent = 0
    for idx, (s, e) in enumerate(doc.sentence_bounds):
        if e - s > max_tokens:
            raise ValueError(
                f"sentence {idx} has {e - s} tokens, more than the chunk budget {max_tokens}")
        start_tok = doc.sentence_bounds[first_sent][0]
        if e - start_tok > max_tokens:
            chunks.append(Chunk(doc, (first_sent, idx), (start_tok, s)))
            first_sent = idx
    chunks.append(Chunk(doc, (first_sent, len(doc.sentence_bounds)),
                        (doc.sentence_bounds[first_sent][0], doc.n_tokens)))
    return chunks


def chunk_spans(chunk: Chunk, k_max: int) -> list[Span]:
    """All in-sentence candidate spans of the chunk, sorted by (start, end)."""
    spans: list[Span] = []
    for idx in range(*chunk.sent_range):
        s, e = chunk.doc.sentence_bounds[idx]
        for start in range(s, e):
            for end in range(start, min(start + k_max, e)):
                spans.append(Span(start, end, idx))
    return spans


@dataclass
class ChunkGold:
    """Gold structure of one chunk, in chunk-local token coordinates."""

    trigger_labels: np.ndarray                  # (n_tokens,) event type ids
    triggers: list[tuple[int, int]]             # (local token, type id), document order
    trigger_cluster: list[int]                  # event cluster id per trigger mention
    entities: list[tuple[Span, int]]            # (span, entity class id), document order
    entity_cluster: list[int]                   # entity cluster id per mention
    arguments: dict[tuple[int, int, int], int]  # (local trigger, start, end) -> role id


def chunk_gold(chunk: Chunk, inventory: TypeInventory,
               gold: Optional[Annotations] = None) -> ChunkGold:
    gold = gold if gold is not None else chunk.doc.gold
    if gold is None:
        raise ValueError("document has no gold annotations")
    lo, hi = chunk.token_range
    labels = np.zeros(chunk.n_tokens, dtype=np.int64)
    triggers = []
    for tok, ty in gold.triggers:
        if lo <= tok < hi:
            tid = inventory.event_type_id(ty)
            labels[tok - lo] = tid
            triggers.append((tok - lo, tid))
    evt_cluster_of = {}
    for cid, cluster in enumerate(gold.event_clusters):
        for i in cluster:
            evt_cluster_of[gold.triggers[i][0]] = cid
    trigger_cluster = [evt_cluster_of[tok + lo] for tok, _ in triggers]

    entities = []
    entity_cluster = []
    ent_cluster_of = {}
    for cid, cluster in enumerate(gold.entity_clusters):
        for i in cluster:
            ent_cluster_of[i] = cid
    for i, (sp, ty, lv) in enumerate(gold.entities):
        if lo <= sp.start and sp.end < hi:
            entities.append((sp, entity_class_id(inventory, ty, lv)))
            entity_cluster.append(ent_cluster_of[i])

    arguments = {}
    for tok, sp, role in gold.arguments:
        if lo <= tok < hi and lo <= sp.start and sp.end < hi:
            arguments[(tok - lo, sp.start, sp.end)] = role_class_id(inventory, role)
    return ChunkGold(trigger_labels=labels, triggers=triggers,
                     trigger_cluster=trigger_cluster, entities=entities,
                     entity_cluster=entity_cluster, arguments=arguments)


def classify_triggers(params: LocalModelParams, feats: np.ndarray) -> np.ndarray:
    """Softmax rows over event types, one row per token."""
    logits, _ = mlp_forward(params.trigger, feats)
    return softmax(logits, axis=1)


def score_pairs(params: LocalModelParams, rep_i: np.ndarray, rep_j: np.ndarray,
                task: str) -> np.ndarray:
    """Pair logits for a task: role logits for ``arg``, one compatibility
    score per pair for the coreference tasks."""
    if task not in PAIR_TASKS:
        raise ValueError(f"unknown pair task {task!r}; expected one of {PAIR_TASKS}")
    mlp = {"arg": params.argument, "evt-coref": params.event_coref,
           "ent-coref": params.entity_coref}[task]
    rep_i = np.atleast_2d(rep_i)
    rep_j = np.atleast_2d(rep_j)
    logits, _ = mlp_forward(mlp, np.concatenate([rep_i, rep_j], axis=1))
    return logits


def predict_antecedents(scores: Sequence[np.ndarray]) -> list[Optional[int]]:
    """Antecedent decisions from per-mention score vectors.

    ``scores[m]`` has m+1 entries: the null option at index 0 followed by
    one score per earlier mention.  Ties break toward null, then toward the
    nearest antecedent.
    """
    links: list[Optional[int]] = []
    for m, vec in enumerate(scores):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (m + 1,):
            raise ValueError(f"mention {m} expects {m + 1} scores, got shape {vec.shape}")
        best = vec.max()
        if vec[0] >= best:
            links.append(None)
        else:
            links.append(int(max(j for j in range(1, m + 1) if vec[j] >= best)) - 1)
    return links


def marginal_nll(scores: np.ndarray, gold: set[int]) -> tuple[float, np.ndarray]:
    """Negative log of the summed probability of all gold options."""
    logp = scores - scores.max()
    p = np.exp(logp)
    p /= p.sum()
    mask = np.zeros_like(p)
    mask[sorted(gold)] = 1.0
    mass = float((p * mask).sum())
    loss = -np.log(max(mass, 1e-300))
    dscores = p - (p * mask) / max(mass, 1e-300)
    return float(loss), dscores


def _accumulate(store: dict[str, np.ndarray], items) -> None:
    for name, arr in items:
        if name in store:
            store[name] += arr
        else:
            store[name] = np.array(arr, dtype=np.float64, copy=True)


@dataclass
class CorefPlan:
    """Static candidate structure of one coreference task in a chunk."""

    rows: np.ndarray                    # owner row per mention (for scatter)
    pair_i: np.ndarray
    pair_j: np.ndarray
    offsets: np.ndarray                 # mention -> slice into pair arrays
    gold_sets: list[tuple[int, ...]]    # gold option positions per score vector

    @property
    def n_mentions(self) -> int:
        return len(self.gold_sets)


def _coref_plan(cluster_ids: Sequence[int], rows: Sequence[int],
                max_antecedents: int) -> CorefPlan:
    n = len(cluster_ids)
    pair_i: list[int] = []
    pair_j: list[int] = []
    offsets = [0]
    gold_sets: list[tuple[int, ...]] = []
    for i in range(n):
        lo = max(0, i - max_antecedents)
        cands = range(lo, i)
        pair_i.extend([i] * len(cands))
        pair_j.extend(cands)
        offsets.append(len(pair_i))
        gold = tuple(k + 1 for k, j in enumerate(cands)
                     if cluster_ids[j] == cluster_ids[i])
        gold_sets.append(gold if gold else (0,))
    return CorefPlan(rows=np.asarray(rows, dtype=np.int64),
                     pair_i=np.asarray(pair_i, dtype=np.int64),
                     pair_j=np.asarray(pair_j, dtype=np.int64),
                     offsets=np.asarray(offsets, dtype=np.int64),
                     gold_sets=gold_sets)


@dataclass
class PreparedChunk:
    """A chunk with its gold view and all static candidate indices."""

    chunk: Chunk
    gold: ChunkGold
    feats: Optional[np.ndarray]         # cached when the provider is static
    h_idx: np.ndarray                   # candidate span head/tail/width
    t_idx: np.ndarray
    buckets: np.ndarray
    ent_labels: np.ndarray
    arg_tok: np.ndarray                 # argument pairs (trigger token, span row)
    arg_span: np.ndarray
    arg_labels: np.ndarray
    evt_plan: CorefPlan                 # rows are local token indices
    ent_plan: CorefPlan                 # rows are mention indices into m_*
    m_h: np.ndarray                     # entity mention span pieces
    m_t: np.ndarray
    m_b: np.ndarray
    gold_onehot: np.ndarray


def prepare_chunk(chunk: Chunk, inventory: TypeInventory,
                  provider: Optional[FeatureProvider] = None,
                  gold: Optional[ChunkGold] = None,
                  max_antecedents: int = DEFAULT_MAX_ANTECEDENTS) -> PreparedChunk:
    """Precompute everything about a chunk that does not depend on weights."""
    if gold is None:
        gold = chunk_gold(chunk, inventory)
    off = chunk.token_range[0]
    feats = None
    if provider is not None and not provider.parameters():
        feats = provider.embed(chunk.tokens)

    spans = chunk_spans(chunk, inventory.k_max)
    h_idx = np.array([sp.start - off for sp in spans], dtype=np.int64)
    t_idx = np.array([sp.end - off for sp in spans], dtype=np.int64)
    buckets = np.array([width_bucket(sp.width) for sp in spans], dtype=np.int64)
    span_pos = {(sp.start, sp.end): i for i, sp in enumerate(spans)}
    ent_labels = np.zeros(len(spans), dtype=np.int64)
    for sp, class_id in gold.entities:
        pos = span_pos.get((sp.start, sp.end))
        if pos is not None:
            ent_labels[pos] = class_id

    span_sent = np.array([sp.sentence_idx for sp in spans], dtype=np.int64)
    arg_tok: list[int] = []
    arg_span: list[int] = []
    arg_labels: list[int] = []
    for tl, _ in gold.triggers:
        sent = chunk.doc.sentence_index(tl + off)
        for si in np.flatnonzero(span_sent == sent):
            sp = spans[si]
            arg_tok.append(tl)
            arg_span.append(int(si))
            arg_labels.append(gold.arguments.get((tl, sp.start, sp.end), 0))

    evt_plan = _coref_plan(gold.trigger_cluster, [tl for tl, _ in gold.triggers],
                           max_antecedents)
    ent_plan = _coref_plan(gold.entity_cluster, range(len(gold.entities)),
                           max_antecedents)
    m_h = np.array([sp.start - off for sp, _ in gold.entities], dtype=np.int64)
    m_t = np.array([sp.end - off for sp, _ in gold.entities], dtype=np.int64)
    m_b = np.array([width_bucket(sp.width) for sp, _ in gold.entities], dtype=np.int64)
    onehot = np.eye(len(inventory.event_types))[gold.trigger_labels]
    return PreparedChunk(chunk=chunk, gold=gold, feats=feats, h_idx=h_idx, t_idx=t_idx,
                         buckets=buckets, ent_labels=ent_labels,
                         arg_tok=np.asarray(arg_tok, dtype=np.int64),
                         arg_span=np.asarray(arg_span, dtype=np.int64),
                         arg_labels=np.asarray(arg_labels, dtype=np.int64),
                         evt_plan=evt_plan, ent_plan=ent_plan,
                         m_h=m_h, m_t=m_t, m_b=m_b, gold_onehot=onehot)


@dataclass
class LocalStep:
    """One forward/backward pass of the local model over a chunk."""

    losses: dict[str, float]
    grads: dict[str, np.ndarray]
    y_hat: np.ndarray
    feats: np.ndarray


def local_step(params: LocalModelParams, provider: FeatureProvider,
               prep: "PreparedChunk | Chunk", inventory: TypeInventory,
               gold: Optional[ChunkGold] = None,
               max_antecedents: int = DEFAULT_MAX_ANTECEDENTS,
               compute_grads: bool = True) -> LocalStep:
    """Evaluate the five task losses on a chunk and their exact gradients.

    Trigger and entity terms are means over tokens and candidate spans; the
    argument term is a mean over (gold trigger, same-sentence span) pairs;
    both coreference terms are means of marginal negative log-likelihoods
    over gold mentions with antecedents pruned to the nearest
    ``max_antecedents`` earlier mentions of the chunk.
    """
    if isinstance(prep, Chunk):
        prep = prepare_chunk(prep, inventory, provider=provider, gold=gold,
                             max_antecedents=max_antecedents)
    gold = prep.gold
    d = provider.dim
    feats = prep.feats if prep.feats is not None else provider.embed(prep.chunk.tokens)
    # With a parameter-free provider, gradients w.r.t. the feature rows are
    # never consumed, so their scatter passes are skipped entirely.
    track_feats = compute_grads and bool(provider.parameters())
    dfeats = np.zeros_like(feats) if track_feats else None
    grads: dict[str, np.ndarray] = {}
    losses: dict[str, float] = {}

    # Trigger classification.  Its backward pass runs last so the
    # coreference use of y_hat can flow back through the softmax.
    trig_logits, trig_cache = mlp_forward(params.trigger, feats)
    y_hat = softmax(trig_logits, axis=1)
    loss, trig_dlogits = cross_entropy(trig_logits, gold.trigger_labels)
    losses["trigger"] = loss
    dy_hat = np.zeros_like(y_hat)

    # Entity classification over candidate spans.
    X = np.concatenate([feats[prep.h_idx], feats[prep.t_idx],
                        params.width_embed[prep.buckets]], axis=1)
    ent_logits, ent_cache = mlp_forward(params.entity, X)
    loss, dlogits = cross_entropy(ent_logits, prep.ent_labels)
    losses["entity"] = loss
    dX = None
    if compute_grads:
        mg, dX = mlp_backward(params.entity, ent_cache, dlogits)
        _accumulate(grads, mlp_grad_arrays("local/entity", mg))

    # Argument roles over (gold trigger, same-sentence span) pairs.
    if len(prep.arg_tok):
        arg_reps = np.concatenate([feats[prep.arg_tok], X[prep.arg_span]], axis=1)
        arg_logits, arg_cache = mlp_forward(params.argument, arg_reps)
        loss, dlogits = cross_entropy(arg_logits, prep.arg_labels)
        losses["argument"] = loss
        if compute_grads:
            mg, dreps = mlp_backward(params.argument, arg_cache, dlogits)
            _accumulate(grads, mlp_grad_arrays("local/argument", mg))
            if track_feats:
                np.add.at(dfeats, prep.arg_tok, dreps[:, :d])
            np.add.at(dX, prep.arg_span, dreps[:, d:])
    else:
        losses["argument"] = 0.0

    # Event coreference; pair features are the token embedding next to the
    # predicted trigger distribution.
    def _evt_sink(rows: np.ndarray, drep: np.ndarray) -> None:
        if track_feats:
            np.add.at(dfeats, rows, drep[:, :d])
        np.add.at(dy_hat, rows, drep[:, d:])

    evt_rows = prep.evt_plan.rows
    losses["evt_coref"] = _coref_term(
        params.event_coref, "local/event_coref",
        reps=np.concatenate([feats[evt_rows], y_hat[evt_rows]], axis=1),
        plan=prep.evt_plan, grads=grads, compute_grads=compute_grads,
        drep_sink=_evt_sink)

    # Entity coreference over gold entity mentions.
    if len(prep.m_h):
        Xm = np.concatenate([feats[prep.m_h], feats[prep.m_t],
                             params.width_embed[prep.m_b]], axis=1)
    else:
        Xm = np.zeros((0, params.span_dim))
    dXm = np.zeros_like(Xm)
    losses["ent_coref"] = _coref_term(
        params.entity_coref, "local/entity_coref", reps=Xm,
        plan=prep.ent_plan, grads=grads, compute_grads=compute_grads,
        drep_sink=lambda rows, drep: np.add.at(dXm, rows, drep))

    if compute_grads:
        # Softmax backward folds the coreference use of y_hat into the
        # trigger logits: dz = y * (dy - <dy, y>).
        trig_dlogits += y_hat * (dy_hat - (dy_hat * y_hat).sum(axis=1, keepdims=True))
        mg, dx = mlp_backward(params.trigger, trig_cache, trig_dlogits,
                              need_input_grad=track_feats)
        _accumulate(grads, mlp_grad_arrays("local/trigger", mg))

        dwidth = np.zeros_like(params.width_embed)
        np.add.at(dwidth, prep.buckets, dX[:, 2 * d:])
        if len(prep.m_h):
            np.add.at(dwidth, prep.m_b, dXm[:, 2 * d:])
        grads["local/width_embed"] = dwidth
        if track_feats:
            dfeats += dx
            np.add.at(dfeats, prep.h_idx, dX[:, :d])
            np.add.at(dfeats, prep.t_idx, dX[:, d:2 * d])
            if len(prep.m_h):
                np.add.at(dfeats, prep.m_h, dXm[:, :d])
                np.add.at(dfeats, prep.m_t, dXm[:, d:2 * d])
            _accumulate(grads, provider.backward(prep.chunk.tokens, dfeats).items())

    losses["total"] = sum(losses.values())
    if not np.isfinite(losses["total"]):
        raise NumericError("local loss is non-finite")
    return LocalStep(losses=losses, grads=grads, y_hat=y_hat, feats=feats)


def _coref_term(mlp: MlpParams, grad_prefix: str, reps: np.ndarray,
                plan: CorefPlan, grads: dict, compute_grads: bool,
                drep_sink) -> float:
    """Mean marginal log-likelihood loss of one coreference task.

    ``reps`` holds one representation row per mention in document order;
    ``drep_sink(rows, drep)`` scatters pair-representation gradients back to
    the owner of each mention representation.
    """
    n = plan.n_mentions
    if n == 0:
        return 0.0
    pi, pj = plan.pair_i, plan.pair_j
    if len(pi):
        pair_reps = np.concatenate([reps[pi], reps[pj]], axis=1)
        logits, cache = mlp_forward(mlp, pair_reps)
        flat = logits[:, 0]
    else:
        flat = np.zeros(0)
        cache = None
    total = 0.0
    dflat = np.zeros_like(flat)
    for i in range(n):
        sl = slice(plan.offsets[i], plan.offsets[i + 1])
        svec = np.concatenate([[0.0], flat[sl]])
        loss, dsvec = marginal_nll(svec, plan.gold_sets[i])
        total += loss
        dflat[sl] = dsvec[1:]
    if compute_grads and len(pi):
        mg, dreps = mlp_backward(mlp, cache, (dflat / n)[:, None])
        _accumulate(grads, mlp_grad_arrays(grad_prefix, mg))
        half = reps.shape[1]
        drep_sink(plan.rows[pi], dreps[:, :half])
        drep_sink(plan.rows[pj], dreps[:, half:])
    return total / n


def local_loss(params: LocalModelParams, provider: FeatureProvider, chunk: Chunk,
               gold: Optional[Annotations] = None,
               inventory: Optional[TypeInventory] = None,
               max_antecedents: int = DEFAULT_MAX_ANTECEDENTS) -> tuple[float, dict[str, float]]:
    """Sum of the five task losses on one chunk (unit weights)."""
    if inventory is None:
        raise ValueError("a type inventory is required")
    cg = chunk_gold(chunk, inventory, gold)
    step = local_step(params, provider, chunk, inventory, gold=cg,
                      max_antecedents=max_antecedents, compute_grads=False)
    return step.losses["total"], step.losses
