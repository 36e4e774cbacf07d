"""Command-line entry points.

Subcommands: synth, pairgen, train, predict, evaluate, ablate, sweep.
A JSON config file may supply any flag's default (--config); explicit
flags win, and every run persists its fully resolved configuration next
to its outputs. Exit codes: 0 success, 2 usage error, 1 runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .consistency import ConsistencyModel, generate_pair_training_data, load_pair_data, save_pair_data
from .corpus import load_dataset, save_dataset, split_folds
from .ensemble import (
    CheckpointMeta,
    DecisionThresholds,
    apply_joint_inference,
    build_model,
    checkpoint_predictions_taskA,
    checkpoint_predictions_taskB,
    decide_taskA,
    decide_taskB,
    load_checkpoint,
    load_index,
    load_predictions,
    soft_ensemble,
    sweep_thresholds,
    train_cv,
    write_predictions,
)
from .metrics import (
    MetricReport,
    entailment_decisions,
    gold_entailment_decisions,
    gold_retrieval_decisions,
    micro_prf,
    per_section_report,
    render_text_table,
    retrieval_decisions,
    write_report,
)
from .presets import MODEL_SPECS, default_preset_for, train_preset
from .synthetic import IdentityParaphraser, RuleParaphraser, generate_synthetic
from .tokenizer import default_tokenizer
from .training import train_consistency
from .ensemble import KeyAlignmentError

logger = logging.getLogger("trialnli")


class UsageError(Exception):
    """Bad invocation discovered after argparse; exits with code 2."""


def _persist_config(args: argparse.Namespace, target: str):
    doc = {k: v for k, v in vars(args).items() if k not in ("func", "config") and not k.startswith("_")}
    path = target if target.endswith(".json") else os.path.join(target, "run-config.json")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, default=str)


def cmd_synth(args) -> int:
    instances, trials = generate_synthetic(args.seed, args.n)
    save_dataset(instances, trials, args.out)
    labels = [i.label for i in instances]
    logger.info(
        "wrote %d instances / %d trials to %s (entailment share %.2f)",
        len(instances), len(trials), args.out, labels.count("Entailment") / len(labels),
    )
    _persist_config(args, os.path.splitext(args.out)[0] + ".run-config.json")
    return 0


def cmd_pairgen(args) -> int:
    instances, trials = load_dataset(args.data)
    provider = RuleParaphraser(seed=args.seed) if args.paraphraser == "rule" else IdentityParaphraser()
    examples, stats = generate_pair_training_data(instances, trials, provider)
    save_pair_data(examples, trials, stats, args.out)
    logger.info("pair data: %s", stats)
    if stats["skipped_pairs"]:
        logger.warning("%d pairs skipped due to paraphraser failures", stats["skipped_pairs"])
    _persist_config(args, os.path.splitext(args.out)[0] + ".run-config.json")
    return 0


def cmd_train(args) -> int:
    if args.model not in MODEL_SPECS:
        raise UsageError(f"unknown model {args.model!r}; known: {sorted(MODEL_SPECS)}")
    spec = MODEL_SPECS[args.model]
    vocab = default_tokenizer()
    thresholds = DecisionThresholds(eta_a=args.eta_a, eta_b=args.eta_b)
    thresholds.validate()

    preset_name = args.preset or default_preset_for(spec, args.scale)
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.lr is not None:
        overrides["lr_encoder"] = args.lr
        overrides["lr_other"] = args.lr
    settings = train_preset(preset_name, seed=args.seed, **overrides)

    os.makedirs(args.out, exist_ok=True)
    _persist_config(args, args.out)

    if spec.network == "pairwise":
        examples, trials, _stats = load_pair_data(args.data)
        rng = np.random.default_rng(args.seed)
        order = rng.permutation(len(examples))
        n_dev = max(1, len(examples) // 10)
        dev = [examples[i] for i in order[:n_dev]]
        train = [examples[i] for i in order[n_dev:]]
        model = build_model(spec, len(vocab), args.scale, args.seed, thresholds)
        settings = replace(settings, loss="ce")
        history = train_consistency(model, train, trials, vocab, settings, dev)
        path = os.path.join(args.out, "pairwise")
        model.save(path)
        meta = CheckpointMeta("pairwise", -1, history[-1].dev_metric, path, "joint", 0)
        with open(os.path.join(args.out, "index.json"), "w", encoding="utf-8") as fh:
            json.dump({"checkpoints": [meta.to_json()], "failures": []}, fh, indent=1)
        logger.info("pairwise checkpoint at %s (dev acc %.3f)", path, max(h.dev_metric for h in history))
        return 0

    instances, trials = load_dataset(args.data)
    task = spec.task
    k = args.cv if args.cv else 10
    folds = split_folds(instances, k=k, seed=args.seed)
    if args.cv:
        metas = train_cv(args.model, instances, trials, vocab, folds, task, settings, args.out,
                         scale=args.scale, thresholds=thresholds)
    else:
        # single split: fold 0 is the dev set
        single = replace(settings, seed=args.seed)
        metas = train_cv(args.model, instances, trials, vocab, folds, task, single, args.out,
                         scale=args.scale, thresholds=thresholds, include_holdout=True)
        metas = [m for m in metas if m.fold == -1]
        with open(os.path.join(args.out, "index.json"), "w", encoding="utf-8") as fh:
            json.dump({"checkpoints": [m.to_json() for m in metas], "failures": []}, fh, indent=1)
    logger.info("%d checkpoints indexed under %s", len(metas), args.out)
    return 0


def _gather_checkpoints(args) -> list[CheckpointMeta]:
    metas: list[CheckpointMeta] = []
    for index_path in args.index or []:
        metas.extend(load_index(index_path))
    for path in args.checkpoint or []:
        metas.append(CheckpointMeta(model="adhoc", fold=-1, metric=0.0, path=path, task=args.task or "A"))
    if not metas:
        raise UsageError("no checkpoints given; use --index or --checkpoint")
    return metas


def cmd_predict(args) -> int:
    instances, trials = load_dataset(args.data)
    vocab = default_tokenizer()
    thresholds = DecisionThresholds(eta_a=args.eta_a, eta_b=args.eta_b)
    thresholds.validate()
    metas = _gather_checkpoints(args)

    taskA_sets, taskB_sets = [], []
    for meta in metas:
        model = load_checkpoint(meta.path)
        spec = MODEL_SPECS.get(meta.model)
        task = meta.task if meta.task in ("A", "B") else (spec.task if spec else "A")
        if task == "A":
            taskA_sets.append(checkpoint_predictions_taskA(model, instances, trials, vocab))
        else:
            taskB_sets.append(checkpoint_predictions_taskB(model, instances, trials, vocab))

    probs = soft_ensemble(taskA_sets) if taskA_sets else {}
    joint_applied = False
    if probs and args.joint == "on":
        if not args.consistency:
            raise UsageError("--joint on requires --consistency CHECKPOINT_DIR")
        cmodel = ConsistencyModel.load(args.consistency)
        probs = apply_joint_inference(probs, instances, trials, cmodel, vocab)
        joint_applied = True
    labels = decide_taskA(probs, thresholds)
    scores = soft_ensemble(taskB_sets) if taskB_sets else {}
    decided = decide_taskB(scores, thresholds)

    write_predictions(
        args.out,
        probs,
        labels,
        decided,
        meta={
            "checkpoints": [m.path for m in metas],
            "thresholds": {"eta_a": thresholds.eta_a, "eta_b": thresholds.eta_b},
            "joint": joint_applied,
        },
    )
    logger.info("wrote predictions for %d/%d instances (taskA/taskB) to %s", len(probs), len(decided), args.out)
    _persist_config(args, os.path.splitext(args.out)[0] + ".run-config.json")
    return 0


def cmd_evaluate(args) -> int:
    instances, trials = load_dataset(args.gold)
    doc = load_predictions(args.pred)
    os.makedirs(args.out, exist_ok=True)
    reports: dict[str, MetricReport] = {}

    if doc.get("taskA"):
        pred_labels = {u: entry["label"] for u, entry in doc["taskA"].items()}
        pred = entailment_decisions(pred_labels)
        gold = gold_entailment_decisions([i for i in instances if i.uuid in pred])
        report = per_section_report(pred, gold, instances)
        write_report(report, os.path.join(args.out, "taskA-report.json"))
        reports["Task A"] = report
    if doc.get("taskB"):
        pred = retrieval_decisions(doc["taskB"])
        gold = gold_retrieval_decisions([i for i in instances if i.uuid in doc["taskB"]], trials)
        report = per_section_report(pred, gold, instances)
        write_report(report, os.path.join(args.out, "taskB-report.json"))
        reports["Task B"] = report
    if not reports:
        raise UsageError("prediction file contains neither task surface")

    table = render_text_table(reports)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    _persist_config(args, args.out)
    return 0


def cmd_ablate(args) -> int:
    instances, trials = load_dataset(args.data)
    vocab = default_tokenizer()
    thresholds = DecisionThresholds(eta_a=args.eta_a, eta_b=args.eta_b)
    metas = _gather_checkpoints(args)
    task = args.task
    metas = [m for m in metas if m.task == task or (m.task not in ("A", "B"))]
    by_model: dict[str, list] = {}
    for meta in metas:
        by_model.setdefault(meta.model, []).append(meta)
    if len(by_model) < 2:
        raise UsageError("ablation needs at least two model families")

    predictions: dict[str, list] = {name: [] for name in by_model}
    for name, group in by_model.items():
        for meta in group:
            model = load_checkpoint(meta.path)
            if task == "A":
                predictions[name].append(checkpoint_predictions_taskA(model, instances, trials, vocab))
            else:
                predictions[name].append(checkpoint_predictions_taskB(model, instances, trials, vocab))

    def metric_for(sets) -> MetricReport:
        merged = soft_ensemble([p for group in sets for p in group])
        if task == "A":
            pred = {u: bool(p[1] > thresholds.eta_a) for u, p in merged.items()}
            gold = gold_entailment_decisions([i for i in instances if i.uuid in pred])
        else:
            pred = {}
            for uuid, entry in merged.items():
                for role, arr in entry.items():
                    for idx, s in enumerate(arr):
                        pred[(uuid, role, idx)] = bool(s > thresholds.eta_b)
            gold = gold_retrieval_decisions([i for i in instances if i.uuid in merged], trials)
        return micro_prf(pred, gold)

    rows = {"original system": metric_for(list(predictions.values()))}
    for name in by_model:
        rows[f"- {name}"] = metric_for([v for k, v in predictions.items() if k != name])

    table = render_text_table(rows)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "ablation.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    with open(os.path.join(args.out, "ablation.json"), "w", encoding="utf-8") as fh:
        json.dump({name: rep.to_json() for name, rep in rows.items()}, fh, indent=1, sort_keys=True)
    print(table)
    _persist_config(args, args.out)
    return 0


def cmd_sweep(args) -> int:
    instances, _trials = load_dataset(args.gold)
    doc = load_predictions(args.pred)
    probs = {u: np.asarray(entry["p"]) for u, entry in doc.get("taskA", {}).items()}
    if not probs:
        raise UsageError("prediction file has no task A probabilities")
    best = sweep_thresholds(probs, instances)
    print(json.dumps(best, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trialnli",
        description="Entailment and evidence retrieval over clinical-trial-style reports.",
    )
    parser.add_argument("--config", help="JSON file supplying defaults for any flag")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pairgen", help="build consistency-training pairs from contradicting hypotheses")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--paraphraser", choices=("rule", "identity"), default="rule")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pairgen)

    p = sub.add_parser("train", help="train one model (single split or cross-validation)")
    p.add_argument("--data", required=True, help="dataset JSON (pair data JSON for --model pairwise)")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preset", help="training preset; defaults per model and scale")
    p.add_argument("--scale", choices=("toy", "paper"), default="toy")
    p.add_argument("--cv", type=int, help="fold count for cross-validation training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--eta-a", type=float, default=0.57)
    p.add_argument("--eta-b", type=float, default=0.53)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="ensemble checkpoints into a prediction file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--index", action="append", help="checkpoint index JSON (repeatable)")
    p.add_argument("--checkpoint", action="append", help="bare checkpoint directory (repeatable)")
    p.add_argument("--task", choices=("A", "B"), help="task for bare --checkpoint entries")
    p.add_argument("--joint", choices=("on", "off"), default="off")
    p.add_argument("--consistency", help="pairwise checkpoint directory for --joint on")
    p.add_argument("--eta-a", type=float, default=0.57)
    p.add_argument("--eta-b", type=float, default=0.53)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a prediction file against gold data")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True, help="output directory for reports")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="leave-one-model-out ensemble comparison")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--index", action="append")
    p.add_argument("--checkpoint", action="append")
    p.add_argument("--task", choices=("A", "B"), default="A")
    p.add_argument("--eta-a", type=float, default=0.57)
    p.add_argument("--eta-b", type=float, default=0.53)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="threshold grid search (extension, not part of the published recipe)")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    known, _ = parser.parse_known_args(argv)
    if getattr(known, "config", None):
        with open(known.config, encoding="utf-8") as fh:
            overrides = json.load(fh)
        parser.set_defaults(**overrides)
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as e:
        logger.error("%s", e)
        return 2
    except (KeyAlignmentError, FileNotFoundError, ValueError) as e:
        logger.error("%s", e)
        return 1
    except Exception:
        logger.exception("command failed")
        return 1


if __name__ == "__main__":
    sys.exit(main())
