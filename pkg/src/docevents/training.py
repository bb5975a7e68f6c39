"""End-to-end training.

One optimizer drives the local extractor, the feature provider (when it has
weights) and, in the value-network modes, the value network.  Each step runs
the local model on a batch of chunks; in value-network modes the (optionally
noised) trigger distributions are scored by the value network against the
relaxed-F1 oracle and the resulting cross-entropy joins the loss with unit
weight.  The label rows enter the value network as constants, so the value
loss trains only the value network and the local trajectory is identical
between the base and value-network modes under the same seed.

Early stopping tracks dev DocTrigger F1 and restores the best epoch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .docmodel import Document, TypeInventory
from .extractor import (DEFAULT_MAX_ANTECEDENTS, LocalModelParams, PreparedChunk,
                        chunk_document, local_param_arrays, local_step, prepare_chunk)
from .features import FeatureProvider
from .inference import predict_corpus
from .metrics import MetricConfig, score_documents
from .numerics import NumericError, OptimState, optim_step
from .valuenet import (DvnConfig, ValueNetParams, apply_noise, dvn_loss,
                       oracle_relaxed_f1, value_backward, value_forward,
                       value_param_arrays)

TRAIN_MODES = ("base", "dvn", "dvn+rn", "dvn+sn", "dvn+snlc")
_MODE_NOISE = {"base": "none", "dvn": "none", "dvn+rn": "rn",
               "dvn+sn": "sn", "dvn+snlc": "snlc"}


@dataclass
class TrainSettings:
    mode: str = "base"
    epochs: int = 250
    batch_size: int = 8
    patience: int = 15
    lr: float = 1e-3
    dvn_lr: Optional[float] = None      # value-net learning rate; defaults to lr
    weight_decay: float = 1e-2
    max_chunk_tokens: int = 128
    max_antecedents: int = DEFAULT_MAX_ANTECEDENTS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 0:
            raise ValueError("epochs and batch_size must be >= 1 and patience >= 0")
        if self.dvn_lr is not None and self.dvn_lr <= 0:
            raise ValueError("dvn_lr must be positive when given")

    @property
    def uses_value_net(self) -> bool:
        return self.mode != "base"

    @property
    def noise(self) -> str:
        return _MODE_NOISE[self.mode]


@dataclass
class TrainResult:
    local: LocalModelParams
    dvn: Optional[ValueNetParams]
    log: list[dict]
    step_dvn_losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_dev_f1: float = 0.0


def train_end_to_end(local: LocalModelParams, dvn: Optional[ValueNetParams],
                     provider: FeatureProvider, train_docs: Sequence[Document],
                     dev_docs: Sequence[Document], inventory: TypeInventory,
                     dvn_cfg: DvnConfig, settings: TrainSettings) -> TrainResult:
    if settings.uses_value_net and dvn is None:
        raise ValueError(f"mode {settings.mode!r} requires value network parameters")

    preps: list[PreparedChunk] = []
    for doc in train_docs:
        for chunk in chunk_document(doc, settings.max_chunk_tokens):
            preps.append(prepare_chunk(chunk, inventory, provider=provider,
                                       max_antecedents=settings.max_antecedents))
    if not preps:
        raise ValueError("training corpus is empty")

    params: dict[str, np.ndarray] = dict(local_param_arrays(local))
    params.update(provider.parameters())
    if settings.uses_value_net:
        params.update(value_param_arrays(dvn))

    rng = np.random.default_rng(settings.seed)
    optim = OptimState(lr=settings.lr, weight_decay=settings.weight_decay)
    # The value net regresses a single scalar per chunk against a moving
    # oracle, so it gets its own optimizer: typically a higher learning
    # rate, and no decay pull toward a constant output.  Disjoint parameter
    # sets keep the local trajectory identical to base mode.
    optim_dvn = OptimState(lr=settings.dvn_lr or settings.lr, weight_decay=0.0)
    noise_cfg = dvn_cfg.with_noise(settings.noise)

    log: list[dict] = []
    step_dvn_losses: list[float] = []
    best = {"f1": -1.0, "epoch": -1, "arrays": None}

    for epoch in range(settings.epochs):
        order = rng.permutation(len(preps))
        epoch_losses: dict[str, float] = {}
        n_steps = 0
        for lo in range(0, len(order), settings.batch_size):
            batch = order[lo:lo + settings.batch_size]
            grads: dict[str, np.ndarray] = {}
            batch_losses: dict[str, float] = {}
            for ci in batch:
                step = local_step(local, provider, preps[ci], inventory,
                                  max_antecedents=settings.max_antecedents)
                step_losses = dict(step.losses)
                if settings.uses_value_net:
                    y = step.y_hat
                    if settings.noise != "none":
                        y = apply_noise(y, noise_cfg, rng)
                    v_star = oracle_relaxed_f1(y, preps[ci].gold_onehot)
                    v, cache = value_forward(dvn, step.feats, y)
                    loss_v = dvn_loss(v, v_star)
                    vgrads, _ = value_backward(dvn, cache, dlogit=v - v_star)
                    # The value net regresses one scalar per chunk; it updates
                    # per chunk rather than per batch, which the lone-scalar
                    # regression needs to track the oracle in few epochs.
                    optim_step(optim_dvn, params, vgrads)
                    step_losses["dvn"] = loss_v
                    step_losses["total"] += loss_v
                    step_dvn_losses.append(loss_v)
                for name, arr in step.grads.items():
                    if name in grads:
                        grads[name] += arr
                    else:
                        grads[name] = arr
                for key, val in step_losses.items():
                    batch_losses[key] = batch_losses.get(key, 0.0) + val
            scale = 1.0 / len(batch)
            for name in grads:
                grads[name] *= scale
            if not np.isfinite(batch_losses["total"]):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, step {n_steps} "
                    f"(components: {batch_losses})")
            optim_step(optim, params, grads)
            for key, val in batch_losses.items():
                epoch_losses[key] = epoch_losses.get(key, 0.0) + val * scale
            n_steps += 1

        dev_f1, dev_arg_f1 = _dev_scores(local, dvn, provider, dev_docs, inventory,
                                         dvn_cfg, settings)
        record = {"epoch": epoch,
                  **{f"loss_{k}": v / n_steps for k, v in sorted(epoch_losses.items())},
                  "dev_doc_trigger_f1": dev_f1, "dev_doc_argument_f1": dev_arg_f1}
        log.append(record)
        if dev_f1 > best["f1"]:
            best.update(f1=dev_f1, epoch=epoch,
                        arrays={name: arr.copy() for name, arr in params.items()})
        elif settings.patience and epoch - best["epoch"] >= settings.patience:
            break

    if best["arrays"] is not None:
        for name, arr in best["arrays"].items():
            params[name][...] = arr
    return TrainResult(local=local, dvn=dvn if settings.uses_value_net else None,
                       log=log, step_dvn_losses=step_dvn_losses,
                       best_epoch=best["epoch"], best_dev_f1=best["f1"])


def _dev_scores(local, dvn, provider, dev_docs, inventory, dvn_cfg,
                settings: TrainSettings) -> tuple[float, float]:
    if not dev_docs:
        return 0.0, 0.0
    preds = predict_corpus(local, provider, dev_docs, inventory,
                           dvn=dvn if settings.uses_value_net else None,
                           dvn_cfg=dvn_cfg if settings.uses_value_net else None,
                           max_chunk_tokens=settings.max_chunk_tokens,
                           max_antecedents=settings.max_antecedents)
    report = score_documents(dev_docs, preds, MetricConfig())
    return report.doc_trigger.f1, report.doc_argument.f1
