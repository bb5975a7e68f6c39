"""Document-level event extraction with value-network refinement.

A numpy library covering the full pipeline: a document data model with a
line-delimited corpus format, a span-based local extractor, a value network
that refines trigger distributions by gradient ascent, document-level
trigger/argument metrics on optimal cluster assignment, and a seeded
synthetic corpus generator with planted cross-event dependencies.
"""
from .docmodel import (Annotations, ClusterSet, Document, DocModelError, MENTION_LEVELS,
                       NULL_TYPE, ParseError, Span, TypeInventory, ValidationError,
                       clusters_from_antecedents, enumerate_spans, parse_document,
                       read_corpus, serialize_document, write_corpus)
from .extractor import (Chunk, LocalModelParams, chunk_document, classify_triggers,
                        init_local_params, local_loss, predict_antecedents, score_pairs)
from .features import (HashedFeatureProvider, LookupFeatureProvider,
                       make_feature_provider)
from .inference import infer_document, predict_corpus
from .metrics import (MetricConfig, PRF, ScoreReport, cluster_match_argument,
                      cluster_match_trigger, component_scores, doc_argument,
                      doc_trigger, hungarian, score_documents)
from .numerics import (MlpParams, NumericError, OptimState, finite_diff_check,
                       load_checkpoint, mlp_backward, mlp_forward, mlp_init,
                       optim_step, save_checkpoint)
from .synth import GenConfig, generate, inventory_for, split
from .training import TrainSettings, TrainResult, train_end_to_end
from .valuenet import (DvnConfig, ValueNetParams, apply_noise, dvn_loss,
                       init_value_params, oracle_relaxed_f1, refine, refine_with, value)

__version__ = "0.1.0"
