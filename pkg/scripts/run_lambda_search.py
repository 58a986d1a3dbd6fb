"""Loss-weight search demo: 20 surrogate trials at a shortened budget,
then a full-budget retraining of the winning triple.

Usage: python scripts/run_lambda_search.py [workdir]
"""

import sys
from pathlib import Path

from xmodal.losses import LossWeights
from xmodal.model import save_params
from xmodal.optim import OptimConfig
from xmodal.synth import make_synthetic_set
from xmodal.trainer import TrainConfig, shortened, train
from xmodal.tuner import SearchSpace, tune


def main() -> None:
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs/lambda_search")
    workdir.mkdir(parents=True, exist_ok=True)

    corpus = make_synthetic_set(n=400, dim=16, seed=11, class_sep=4.0, modality_noise=2.5)
    data, val = corpus.subset(range(320)), corpus.subset(range(320, 400))

    base_cfg = TrainConfig(
        epochs=20,
        batch_size=8,
        weights=LossWeights(),
        dropout_p=0.1,
        seed=3,
        optimizer=OptimConfig(lr_backbone=3e-2, lr_head=1e-2, weight_decay=0.0),
    )
    best, results = tune(
        data,
        val,
        base_cfg,
        SearchSpace(trials=20),
        strategy="surrogate",
        seed=5,
        trial_epochs=5,
        ledger_path=str(workdir / "trials.jsonl"),
    )
    for trial in results:
        status = "failed" if trial.failed else f"{trial.objective:.4f}"
        print(
            f"trial {trial.index:2d}: lambda=({trial.weights.lambda1:.3f}, "
            f"{trial.weights.lambda2:.3f}, {trial.weights.lambda3:.3f}) objective {status}"
        )
    print(
        f"\nbest: trial {best.index} lambda=({best.weights.lambda1:.3f}, "
        f"{best.weights.lambda2:.3f}, {best.weights.lambda3:.3f}) objective {best.objective:.4f}"
    )

    params, logs = train(data, val, shortened(base_cfg, base_cfg.epochs, best.weights))
    save_params(params, workdir / "model.cmxm")
    print(f"full-budget retrain: val acc {logs[-1].val_accuracy:.3f}, saved to {workdir / 'model.cmxm'}")


if __name__ == "__main__":
    main()
