"""Overfit 32 windows from one synthetic subject and report the loss curve."""

import argparse
import time
from dataclasses import replace

from glumind.harness import RetentionContext, plan_from_dict, train_subject
from glumind.model import GluMindModel
from glumind.retention import RetentionMethod
from glumind.signals import generate_cohort, prepare_subject

FEATURES = ["BG", "W", "Stress"]


def overfit(epochs=500, lr=1e-3, windows=32, seed=7):
    plan = plan_from_dict(
        {
            "T": 24,
            "m": 6,
            "stride": 4,
            "feature_set": FEATURES,
            "epochs": epochs,
            "lr": lr,
            "batch_size": windows,
            "model": {"d_model": 16, "heads": 2, "ff_hidden": 32},
        }
    )
    rec = generate_cohort("Oral", 1, 2, seed)[0]
    subj = prepare_subject(rec, plan.T, plan.m, plan.stride, plan.feature_set)
    subj = replace(subj, train=subj.train[:windows])
    model = GluMindModel(plan.model_config())
    return train_subject(model, subj, plan, RetentionContext.fresh(RetentionMethod(), 0)).epoch_losses


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args()
    t0 = time.time()
    losses = overfit(args.epochs, args.lr, seed=args.seed)
    below = next((i for i, v in enumerate(losses) if v < 0.01), None)
    for i in range(0, len(losses), 50):
        print(f"epoch {i:4d} loss {losses[i]:.5f}")
    print(f"final {losses[-1]:.5f}; first below 0.01 at epoch {below}; {time.time() - t0:.1f}s")


if __name__ == "__main__":
    main()
