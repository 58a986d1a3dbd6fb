"""End-to-end demo on a synthetic corpus: generate, split, train, index,
evaluate both directions, and export the 2-D projection.

Usage: python scripts/run_synthetic_pipeline.py [workdir]
"""

import sys
from pathlib import Path

from xmodal.index import build_index, save_index
from xmodal.ingest import SplitSpec, split_corpus, write_embeddings
from xmodal.losses import LossWeights
from xmodal.metrics import full_report, render_report
from xmodal.model import save_params
from xmodal.optim import OptimConfig
from xmodal.synth import make_synthetic_set
from xmodal.trainer import TrainConfig, train


def main() -> None:
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs/synthetic")
    workdir.mkdir(parents=True, exist_ok=True)

    corpus = make_synthetic_set(n=1000, dim=16, seed=7, class_sep=4.0, modality_noise=2.5)
    write_embeddings(corpus, workdir / "corpus.cmxe")
    train_set, val_set, test_set = split_corpus(corpus, SplitSpec(test_per_class=100, val_fraction=0.1, seed=7))
    for split, name in ((train_set, "train"), (val_set, "val"), (test_set, "test")):
        write_embeddings(split, workdir / f"{name}.cmxe")
    print(f"corpus {len(corpus)} -> train {len(train_set)}, val {len(val_set)}, test {len(test_set)}")

    cfg = TrainConfig(
        epochs=20,
        batch_size=8,
        weights=LossWeights(),
        dropout_p=0.1,
        seed=3,
        optimizer=OptimConfig(lr_backbone=3e-2, lr_head=1e-2, weight_decay=0.0),
        log_path=str(workdir / "epochs.jsonl"),
    )
    params, logs = train(train_set, val_set, cfg)
    save_params(params, workdir / "model.cmxm")
    last = logs[-1]
    print(
        f"epoch {last.epoch}: total {last.train_loss.total:.4f} "
        f"(epoch 1 was {logs[0].train_loss.total:.4f}), val acc {last.val_accuracy:.3f}"
    )

    index = build_index(params, test_set)
    save_index(index, workdir / "test.cmxi")
    for direction in ("i2t", "t2i"):
        print()
        print(render_report(full_report(index, test_set, params, direction)))

    baseline = build_index(None, test_set)
    print()
    print("pretrained-baseline comparison (raw embeddings):")
    print(render_report(full_report(baseline, test_set, None, "i2t")))


if __name__ == "__main__":
    main()
