"""Command-line entry point wiring the full workflow.

Subcommands cover the pipeline end to end: synth / ingest / split for
data, train / tune for fitting, index-build / query / eval / serve for
retrieval, and project2d for the 2-D cluster export. Exit codes: 0 on
success, 1 on usage errors, 2 on data or format errors. Machine-readable
output is line-delimited JSON; human tables go to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import index as index_mod
from . import ingest as ingest_mod
from . import metrics as metrics_mod
from . import service as service_mod
from . import synth as synth_mod
from . import trainer as trainer_mod
from . import tuner as tuner_mod
from .errors import ParameterError, XmodalError
from .losses import LossWeights
from .model import load_params, save_params
from .numerics import pca_project_2d
from .optim import OptimConfig

logger = logging.getLogger(__name__)


class UsageProblem(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageProblem(f"{self.prog}: {message}\n{self.format_usage()}")


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, width=96)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=20, help="training epochs")
    p.add_argument("--batch", type=int, default=128, help="batch size")
    p.add_argument("--lr-backbone", type=float, default=1e-5, help="adapter learning rate")
    p.add_argument("--lr-head", type=float, default=1e-4, help="classification-head learning rate")
    p.add_argument("--weight-decay", type=float, default=0.01, help="decoupled weight decay")
    p.add_argument("--warmup-frac", type=float, default=0.1, help="fraction of steps spent in linear warmup")
    p.add_argument("--lambda1", type=float, default=0.69, help="binary cross-entropy weight")
    p.add_argument("--lambda2", type=float, default=1.97, help="supervised contrastive weight")
    p.add_argument("--lambda3", type=float, default=0.46, help="image-text contrastive weight")
    p.add_argument("--tau", type=float, default=0.07, help="contrastive temperature")
    p.add_argument("--dropout", type=float, default=0.1, help="fused-feature dropout probability")
    p.add_argument("--seed", type=int, default=0, help="run seed")


def _train_config(args, log_path=None) -> trainer_mod.TrainConfig:
    return trainer_mod.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        weights=LossWeights(args.lambda1, args.lambda2, args.lambda3, args.tau),
        dropout_p=args.dropout,
        seed=args.seed,
        optimizer=OptimConfig(
            lr_backbone=args.lr_backbone, lr_head=args.lr_head, weight_decay=args.weight_decay
        ),
        warmup_fraction=args.warmup_frac,
        log_path=log_path,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xmodal", description=__doc__, formatter_class=_formatter)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a seeded synthetic embedding set", formatter_class=_formatter)
    p.add_argument("--n", type=int, required=True, help="number of records")
    p.add_argument("--dim", type=int, default=16, help="embedding dimension")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--out", required=True, help="output embedding file (CMXE)")
    p.add_argument("--class-sep", type=float, default=6.0, help="distance between class means")
    p.add_argument("--modality-noise", type=float, default=0.1, help="per-modality noise around the latent")
    p.add_argument("--normal-frac", type=float, default=0.5, help="fraction of normal-labeled records")

    p = sub.add_parser("ingest", help="parse reports listed in a manifest into a study corpus", formatter_class=_formatter)
    p.add_argument("--manifest", required=True, help="JSONL manifest of {study_id, image_path, report_path}")
    p.add_argument("--out", required=True, help="output study corpus (JSONL)")

    p = sub.add_parser("split", help="reserve a balanced test set and split the rest train/val", formatter_class=_formatter)
    p.add_argument("--embeddings", required=True, help="input embedding file (CMXE)")
    p.add_argument("--out-train", required=True, help="output train CMXE")
    p.add_argument("--out-val", required=True, help="output validation CMXE")
    p.add_argument("--out-test", required=True, help="output test CMXE")
    p.add_argument("--test-per-class", type=int, default=200, help="test records reserved per class")
    p.add_argument("--val-frac", type=float, default=0.1, help="validation fraction of the remainder")
    p.add_argument("--seed", type=int, default=0, help="split seed")

    p = sub.add_parser("train", help="fit adapters and head with the composite objective", formatter_class=_formatter)
    p.add_argument("--train", dest="train_path", required=True, help="training embedding file (CMXE)")
    p.add_argument("--val", dest="val_path", required=True, help="validation embedding file (CMXE)")
    p.add_argument("--out", required=True, help="output model checkpoint (CMXM)")
    p.add_argument("--log", default=None, help="optional epoch-log JSONL path")
    _add_train_flags(p)

    p = sub.add_parser("tune", help="search the loss-weight box for the best triple", formatter_class=_formatter)
    p.add_argument("--train", dest="train_path", required=True, help="training embedding file (CMXE)")
    p.add_argument("--val", dest="val_path", required=True, help="validation embedding file (CMXE)")
    p.add_argument("--trials", type=int, default=20, help="number of trials")
    p.add_argument("--strategy", choices=("quasirandom", "surrogate"), default="surrogate", help="proposal strategy")
    p.add_argument("--trial-epochs", type=int, default=5, help="shortened epochs per trial")
    p.add_argument("--ledger", default=None, help="optional trial-ledger JSONL path")
    p.add_argument("--retrain-out", default=None, help="retrain at full budget with the best triple and save here")
    _add_train_flags(p)

    p = sub.add_parser("index-build", help="build the fused-vector index", formatter_class=_formatter)
    p.add_argument("--embeddings", required=True, help="embedding file (CMXE)")
    p.add_argument("--model", default=None, help="model checkpoint; omit for the raw-embedding baseline")
    p.add_argument("--out", required=True, help="output index file (CMXI)")

    p = sub.add_parser("query", help="retrieve the top-k entries for a study or raw vector", formatter_class=_formatter)
    p.add_argument("--index", required=True, help="index file (CMXI)")
    p.add_argument("--id", dest="study_id", default=None, help="query by study id (needs --embeddings)")
    p.add_argument("--modality", choices=("image", "text"), default="image", help="query modality for --id")
    p.add_argument("--vector", default=None, help="query by raw comma-separated vector")
    p.add_argument("--embeddings", default=None, help="embedding file for id queries")
    p.add_argument("--model", default=None, help="model checkpoint; omit for the raw-embedding baseline")
    p.add_argument("--k", type=int, default=5, help="number of results")
    p.add_argument("--exclude-self", action="store_true", help="drop the query's own record from results")
    p.add_argument("--jsonl", action="store_true", help="emit results as JSON lines instead of a table")

    p = sub.add_parser("eval", help="run the retrieval evaluation suite", formatter_class=_formatter)
    p.add_argument("--index", required=True, help="index file (CMXI)")
    p.add_argument("--queries", required=True, help="query embedding file (CMXE)")
    p.add_argument("--model", default=None, help="model checkpoint; omit for the raw-embedding baseline")
    p.add_argument("--direction", choices=("i2t", "t2i", "both"), default="both", help="retrieval direction")
    p.add_argument("--ks", default="1,3,5,10", help="comma-separated k values")
    p.add_argument("--exclude-self", action="store_true", help="drop each query's own record from results")
    p.add_argument("--out", default=None, help="optional report JSONL path (one object per direction)")

    p = sub.add_parser("serve", help="serve the index over HTTP", formatter_class=_formatter)
    p.add_argument("--index", required=True, help="index file (CMXI)")
    p.add_argument("--embeddings", default=None, help="embedding file enabling study_id queries")
    p.add_argument("--model", default=None, help="model checkpoint for adapted id queries")
    p.add_argument("--bind", default="127.0.0.1:8080", help="host:port to bind")

    p = sub.add_parser("project2d", help="export a 2-D principal-component projection of fused vectors", formatter_class=_formatter)
    p.add_argument("--embeddings", required=True, help="embedding file (CMXE)")
    p.add_argument("--model", default=None, help="model checkpoint; omit for the raw-embedding baseline")
    p.add_argument("--out", required=True, help="output JSONL of {study_id, label, x, y}")

    return parser


def _cmd_synth(args) -> int:
    embeddings = synth_mod.make_synthetic_set(
        n=args.n,
        dim=args.dim,
        seed=args.seed,
        class_sep=args.class_sep,
        modality_noise=args.modality_noise,
        normal_frac=args.normal_frac,
    )
    ingest_mod.write_embeddings(embeddings, args.out)
    print(f"wrote {len(embeddings)} records (dim {embeddings.dim}) to {args.out}")
    return 0


def _cmd_ingest(args) -> int:
    entries = ingest_mod.read_manifest(args.manifest)
    records, skipped = [], 0
    for entry in entries:
        try:
            with open(entry["report_path"], "r", encoding="utf-8") as fh:
                xml_text = fh.read()
            records.append(ingest_mod.parse_report(xml_text, study_id=entry["study_id"]))
        except (XmodalError, OSError) as exc:
            skipped += 1
            logger.warning("skipping %s: %s", entry["study_id"], exc)
    if not records:
        raise ParameterError("no parseable reports in manifest")
    ingest_mod.write_study_corpus(records, args.out)
    print(f"wrote {len(records)} study records to {args.out} ({skipped} skipped)")
    return 0


def _cmd_split(args) -> int:
    embeddings = ingest_mod.read_embeddings(args.embeddings)
    spec = ingest_mod.SplitSpec(test_per_class=args.test_per_class, val_fraction=args.val_frac, seed=args.seed)
    train, val, test = ingest_mod.split_corpus(embeddings, spec)
    for split, path in ((train, args.out_train), (val, args.out_val), (test, args.out_test)):
        ingest_mod.write_embeddings(split, path)
    print(f"split {len(embeddings)} -> train {len(train)}, val {len(val)}, test {len(test)}")
    return 0


def _cmd_train(args) -> int:
    data = ingest_mod.read_embeddings(args.train_path)
    val = ingest_mod.read_embeddings(args.val_path)
    cfg = _train_config(args, log_path=args.log)
    params, logs = trainer_mod.train(data, val, cfg)
    save_params(params, args.out)
    if logs:
        last = logs[-1]
        print(
            f"epoch {last.epoch}: total {last.train_loss.total:.5f}, "
            f"val acc {last.val_accuracy:.3f}, top-1 i2t {last.val_top1_i2t:.3f}, t2i {last.val_top1_t2i:.3f}"
        )
    print(f"saved model to {args.out}")
    return 0


def _cmd_tune(args) -> int:
    data = ingest_mod.read_embeddings(args.train_path)
    val = ingest_mod.read_embeddings(args.val_path)
    base_cfg = _train_config(args)
    space = tuner_mod.SearchSpace(trials=args.trials)
    best, results = tuner_mod.tune(
        data,
        val,
        base_cfg,
        space,
        strategy=args.strategy,
        seed=args.seed,
        trial_epochs=args.trial_epochs,
        ledger_path=args.ledger,
    )
    print(
        f"best trial {best.index}: lambda1 {best.weights.lambda1:.4f}, "
        f"lambda2 {best.weights.lambda2:.4f}, lambda3 {best.weights.lambda3:.4f} "
        f"(objective {best.objective:.4f}, {len(results)} trials)"
    )
    if args.retrain_out:
        cfg = trainer_mod.shortened(base_cfg, args.epochs, best.weights)
        params, _ = trainer_mod.train(data, val, cfg)
        save_params(params, args.retrain_out)
        print(f"retrained at full budget; saved model to {args.retrain_out}")
    return 0


def _cmd_index_build(args) -> int:
    embeddings = ingest_mod.read_embeddings(args.embeddings)
    params = load_params(args.model) if args.model else None
    built = index_mod.build_index(params, embeddings)
    index_mod.save_index(built, args.out)
    print(f"indexed {len(built)} fused vectors (dim {built.dim}) to {args.out}")
    return 0


def _cmd_query(args) -> int:
    if (args.study_id is None) == (args.vector is None):
        raise UsageProblem("xmodal query: provide exactly one of --id or --vector")
    idx = index_mod.load_index(args.index)
    if args.vector is not None:
        try:
            query = np.array([float(v) for v in args.vector.split(",")])
        except ValueError:
            raise UsageProblem("xmodal query: --vector must be comma-separated numbers") from None
        hits = index_mod.search(idx, query, args.k)
    else:
        if not args.embeddings:
            raise UsageProblem("xmodal query: --id requires --embeddings")
        embeddings = ingest_mod.read_embeddings(args.embeddings)
        params = load_params(args.model) if args.model else None
        hits = index_mod.query_by_id(
            idx, embeddings, params, args.study_id, args.modality, args.k, exclude_self=args.exclude_self
        )
    if args.jsonl:
        for rank, h in enumerate(hits, 1):
            print(json.dumps({"rank": rank, "study_id": h.study_id, "label": h.label, "score": h.score}))
    else:
        print(f"{'rank':<6}{'study_id':<24}{'label':<10}score")
        for rank, h in enumerate(hits, 1):
            print(f"{rank:<6}{h.study_id:<24}{service_mod.LABEL_NAMES[h.label]:<10}{h.score:.6f}")
    return 0


def _cmd_eval(args) -> int:
    idx = index_mod.load_index(args.index)
    queries = ingest_mod.read_embeddings(args.queries)
    params = load_params(args.model) if args.model else None
    try:
        ks = tuple(int(k) for k in args.ks.split(","))
    except ValueError:
        raise UsageProblem("xmodal eval: --ks must be comma-separated integers") from None
    directions = ("i2t", "t2i") if args.direction == "both" else (args.direction,)
    reports = [
        metrics_mod.full_report(idx, queries, params, direction, ks=ks, exclude_self=args.exclude_self)
        for direction in directions
    ]
    for report in reports:
        print(metrics_mod.render_report(report))
        print()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for report in reports:
                fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
    return 0


def _cmd_serve(args) -> int:
    service_mod.serve(args.index, args.embeddings, args.model, args.bind)
    return 0


def _cmd_project2d(args) -> int:
    embeddings = ingest_mod.read_embeddings(args.embeddings)
    params = load_params(args.model) if args.model else None
    fused = index_mod.fused_vectors(params, embeddings)
    points = pca_project_2d(fused)
    with open(args.out, "w", encoding="utf-8") as fh:
        for i, study_id in enumerate(embeddings.study_ids):
            fh.write(
                json.dumps(
                    {
                        "study_id": study_id,
                        "label": int(embeddings.labels[i]),
                        "x": float(points[i, 0]),
                        "y": float(points[i, 1]),
                    }
                )
                + "\n"
            )
    print(f"projected {len(embeddings)} fused vectors to {args.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "split": _cmd_split,
    "train": _cmd_train,
    "tune": _cmd_tune,
    "index-build": _cmd_index_build,
    "query": _cmd_query,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
    "project2d": _cmd_project2d,
}

_LOG_LEVELS = {"off": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def main(argv=None) -> int:
    level = os.environ.get("XMODAL_LOG", "off").lower()
    logging.basicConfig(stream=sys.stderr, level=_LOG_LEVELS.get(level, logging.ERROR))

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageProblem as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageProblem as exc:
        print(exc, file=sys.stderr)
        return 1
    except XmodalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
