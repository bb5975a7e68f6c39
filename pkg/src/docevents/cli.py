"""Command-line operator surface.

Subcommands: ``generate`` (write a synthetic corpus), ``train`` (fit a model
in one of the base / value-network modes), ``infer`` (predictions for a
corpus file), ``score`` (document-level report for a prediction file against
gold) and ``bench`` (training and inference timing).

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
failure.
"""
from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_run_config
from .docmodel import (DocModelError, TypeInventory, read_corpus, write_corpus)
from .extractor import (LocalModelParams, chunk_document, init_local_params,
                        local_param_arrays, local_params_from_arrays, local_step,
                        prepare_chunk)
from .features import make_feature_provider
from .inference import predict_corpus
from .metrics import MetricConfig, score_documents
from .numerics import (NumericError, OptimState, load_checkpoint, optim_step,
                       save_checkpoint)
from .synth import generate, inventory_for, split
from .training import TRAIN_MODES, TrainSettings, train_end_to_end
from .valuenet import (DvnConfig, ValueNetParams, init_value_params,
                       value_param_arrays)
from .extractor import mlp_from_arrays

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="docevents", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate train/dev/test corpus files")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=TRAIN_MODES, default="base")
    p.add_argument("--out", default=None, help="checkpoint path")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="write predictions for a corpus file")
    p.add_argument("corpus", help="input corpus (one document per line)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--h", type=int, default=None, help="override refinement iterations")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("score", help="score predictions against gold")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--out", default=None, help="also write the report to a file")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bench", help="measure training and inference time")
    p.add_argument("corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DocModelError, DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def cmd_generate(args) -> int:
    cfg = load_run_config(args.config, seed_override=args.seed)
    if cfg.generator is None:
        raise ConfigError("config is missing the 'generator' section")
    docs = generate(cfg.generator)
    train, dev, test = split(docs, cfg.split_ratios, seed=cfg.generator.seed)
    cfg.corpus_dir.mkdir(parents=True, exist_ok=True)
    for part, part_docs in (("train", train), ("dev", dev), ("test", test)):
        write_corpus(cfg.corpus_path(part), part_docs)
    inventory = inventory_for(cfg.generator)
    with open(cfg.corpus_dir / "inventory.json", "w", encoding="utf-8") as fh:
        json.dump(inventory.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(train)}/{len(dev)}/{len(test)} documents to {cfg.corpus_dir}")
    return EXIT_OK


def _init_models(cfg: RunConfig, inventory: TypeInventory, mode: str, seed: int):
    ss = np.random.SeedSequence(seed)
    rng_local, rng_dvn = (np.random.default_rng(s) for s in ss.spawn(2))
    provider = make_feature_provider(cfg.features)
    local = init_local_params(rng_local, inventory, token_dim=provider.dim,
                              width_dim=cfg.model.width_dim, hidden=cfg.model.hidden)
    dvn = None
    if mode != "base":
        dvn = init_value_params(rng_dvn, len(inventory.event_types), provider.dim,
                                label_dim=cfg.model.label_dim, enc_dim=cfg.model.enc_dim,
                                hidden=cfg.model.dvn_hidden)
    return provider, local, dvn


def _checkpoint_meta(cfg: RunConfig, inventory: TypeInventory, mode: str, seed: int) -> dict:
    return {
        "inventory": inventory.to_dict(),
        "features": cfg.features,
        "model": {"hidden": cfg.model.hidden, "width_dim": cfg.model.width_dim,
                  "label_dim": cfg.model.label_dim, "enc_dim": cfg.model.enc_dim,
                  "dvn_hidden": cfg.model.dvn_hidden,
                  "max_chunk_tokens": cfg.model.max_chunk_tokens,
                  "max_antecedents": cfg.model.max_antecedents},
        "dvn": cfg.dvn.to_dict(),
        "mode": mode,
        "seed": seed,
    }


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, seed_override=args.seed)
    seed = cfg.seed
    inventory = cfg.resolved_inventory()
    train_docs = read_corpus(cfg.corpus_path("train"))
    dev_docs = read_corpus(cfg.corpus_path("dev"))
    provider, local, dvn = _init_models(cfg, inventory, args.mode, seed)
    settings = TrainSettings(mode=args.mode, epochs=cfg.optim.max_epochs,
                             batch_size=cfg.optim.batch_size, patience=cfg.optim.patience,
                             lr=cfg.optim.lr, weight_decay=cfg.optim.weight_decay,
                             max_chunk_tokens=cfg.model.max_chunk_tokens,
                             max_antecedents=cfg.model.max_antecedents, seed=seed)
    result = train_end_to_end(local, dvn, provider, train_docs, dev_docs, inventory,
                              cfg.dvn, settings)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = Path(args.out) if args.out else cfg.out_dir / f"checkpoint-{args.mode}.ckpt"
    arrays = dict(local_param_arrays(result.local))
    arrays.update(provider.parameters())
    if result.dvn is not None:
        arrays.update(value_param_arrays(result.dvn))
    save_checkpoint(ckpt_path, arrays, meta=_checkpoint_meta(cfg, inventory, args.mode, seed))
    log_path = cfg.out_dir / f"train-{args.mode}.log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for record in result.log:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")
    print(f"checkpoint: {ckpt_path}")
    print(f"best dev DocTrigger F1 {result.best_dev_f1:.4f} at epoch {result.best_epoch}")
    return EXIT_OK


def _load_model(checkpoint_path):
    arrays, meta = load_checkpoint(checkpoint_path)
    inventory = TypeInventory.from_dict(meta["inventory"])
    provider = make_feature_provider(meta["features"])
    if "features/table" in arrays:
        provider.table = arrays["features/table"]
    local = local_params_from_arrays(arrays)
    dvn = None
    if "dvn/type_embed" in arrays:
        dvn = ValueNetParams(type_embed=arrays["dvn/type_embed"],
                             encoder=mlp_from_arrays(arrays, "dvn/encoder",
                                                     hidden_activation="tanh"),
                             fusion=mlp_from_arrays(arrays, "dvn/fusion",
                                                    hidden_activation="tanh"))
    return arrays, meta, inventory, provider, local, dvn


def cmd_infer(args) -> int:
    _, meta, inventory, provider, local, dvn = _load_model(args.checkpoint)
    dvn_cfg = DvnConfig.from_dict(meta.get("dvn", {}))
    if args.h is not None:
        if args.h < 0:
            raise UsageError("--h must be non-negative")
        dvn_cfg = DvnConfig.from_dict({**meta.get("dvn", {}), "iterations": args.h})
    docs = read_corpus(args.corpus)
    preds = predict_corpus(local, provider, docs, inventory, dvn=dvn, dvn_cfg=dvn_cfg,
                           max_chunk_tokens=meta["model"]["max_chunk_tokens"],
                           max_antecedents=meta["model"]["max_antecedents"])
    write_corpus(args.out, preds)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    gold_docs = read_corpus(args.gold)
    pred_docs = read_corpus(args.pred)
    gold_ids = [d.doc_id for d in gold_docs]
    pred_by_id = {d.doc_id: d for d in pred_docs}
    if set(gold_ids) != set(pred_by_id) or len(pred_docs) != len(pred_by_id):
        raise DataError("gold and prediction files do not cover the same doc_id set")
    aligned = [pred_by_id[i] for i in gold_ids]
    report = score_documents(gold_docs, aligned, MetricConfig())
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    arrays, meta, inventory, provider, local, dvn = _load_model(args.checkpoint)
    dvn_cfg = DvnConfig.from_dict(meta.get("dvn", {}))
    docs = read_corpus(args.corpus)
    if not docs:
        raise DataError("bench corpus is empty")
    max_chunk = meta["model"]["max_chunk_tokens"]
    max_ante = meta["model"]["max_antecedents"]

    def time_inference(use_dvn: bool) -> float:
        predict_corpus(local, provider, docs[:2], inventory,
                       dvn=dvn if use_dvn else None, dvn_cfg=dvn_cfg if use_dvn else None,
                       max_chunk_tokens=max_chunk, max_antecedents=max_ante)  # warmup
        samples = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            predict_corpus(local, provider, docs, inventory,
                           dvn=dvn if use_dvn else None,
                           dvn_cfg=dvn_cfg if use_dvn else None,
                           max_chunk_tokens=max_chunk, max_antecedents=max_ante)
            samples.append((time.perf_counter() - t0) / len(docs))
        return statistics.median(samples)

    result = {
        "infer_seconds_per_doc": {"base": time_inference(False)},
        "train_seconds_per_batch": {},
    }
    if dvn is not None:
        result["infer_seconds_per_doc"]["dvn"] = time_inference(True)
        result["infer_ratio_dvn_over_base"] = (result["infer_seconds_per_doc"]["dvn"]
                                               / result["infer_seconds_per_doc"]["base"])
    result["train_seconds_per_batch"] = _bench_training(arrays, meta, inventory, provider,
                                                        local, dvn, docs, args.repeats,
                                                        max_chunk, max_ante)
    text = json.dumps(result, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def _bench_training(arrays, meta, inventory, provider, local, dvn, docs, repeats,
                    max_chunk, max_ante) -> dict:
    from .valuenet import oracle_relaxed_f1, value_backward, value_forward

    preps = []
    for doc in docs:
        if doc.gold is None:
            raise DataError("training benchmark needs gold annotations")
        for chunk in chunk_document(doc, max_chunk):
            preps.append(prepare_chunk(chunk, inventory, provider=provider,
                                       max_antecedents=max_ante))
    batch = list(range(min(8, len(preps))))

    def one_step(use_dvn: bool, optim: OptimState, params) -> None:
        grads: dict[str, np.ndarray] = {}
        for ci in batch:
            step = local_step(local, provider, preps[ci], inventory,
                              max_antecedents=max_ante)
            sg = step.grads
            if use_dvn and dvn is not None:
                v_star = oracle_relaxed_f1(step.y_hat, preps[ci].gold_onehot)
                v, cache = value_forward(dvn, step.feats, step.y_hat)
                vgrads, _ = value_backward(dvn, cache, dlogit=v - v_star)
                sg.update(vgrads)
            for name, arr in sg.items():
                grads[name] = grads.get(name, 0.0) + arr
        for name in grads:
            grads[name] = grads[name] / len(batch)
        optim_step(optim, params, grads)

    out = {}
    modes = [("base", False)] + ([("dvn", True)] if dvn is not None else [])
    for label, use_dvn in modes:
        params = {name: arr.copy() for name, arr in arrays.items()}
        optim = OptimState()
        one_step(use_dvn, optim, params)  # warmup
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            one_step(use_dvn, optim, params)
            samples.append(time.perf_counter() - t0)
        out[label] = statistics.median(samples)
    return out


if __name__ == "__main__":
    sys.exit(main())
