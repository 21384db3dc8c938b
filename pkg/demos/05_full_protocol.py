"""The full experimental protocol, at publication scale.  **Stretch run.**

This reproduces the complete pipeline on real CIFAR-10 at the default
width (hidden 256, stem 64): cell search on half of Train with alternating
optimizers, genotype derivation, retraining from scratch, and evaluation
against the GRU/LSTM baselines — plus optional transfer evaluation on a
converted SVHN corpus (see dataconv/ for the converter).

Expect DAYS of CPU time at this scale; the numbers it chases are in the
91%/75% accuracy band for dws vs. GRU.  Desk-scale correctness is covered
by the test suite instead; run this only if you have the compute.

    export DARTSRENET_DATA=/path/to/cifar-10-batches-bin
    python3 demos/05_full_protocol.py --out runs/full [--svhn-test svhn_test.drim]
"""

import argparse
import os
import sys
from pathlib import Path

from dartsrenet import autograd as ag
from dartsrenet.cli import main as cli_main


def run(argv=None) -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/full")
    parser.add_argument("--seed", default="0")
    parser.add_argument("--svhn-test", default="", help="DRIM file from dataconv")
    args = parser.parse_args(argv)

    root = os.environ.get("DARTSRENET_DATA", "")
    if not root or not (Path(root) / "data_batch_1.bin").exists():
        print("set $DARTSRENET_DATA to the CIFAR-10 binary directory first",
              file=sys.stderr)
        return 2

    out = Path(args.out)
    common = ["--seed", args.seed, "--epochs", "50", "--patience", "5"]

    # 1) cell search per variant (alternating bilevel optimization)
    for variant in ("vanilla", "sigmoid_weighting", "dws"):
        rc = cli_main(["search", *common, "--variant", variant,
                       "--out", str(out / f"search_{variant}")])
        if rc:
            return rc

    # 2) retrain each derived cell from scratch, plus the baselines
    jobs = [(v, f"file:{out / f'search_{v}' / 'genotype.txt'}") for v in
            ("vanilla", "sigmoid_weighting", "dws")]
    jobs += [("vanilla", "gru"), ("vanilla", "lstm")]
    for variant, cell in jobs:
        tag = cell.split(":")[-1].replace("/", "_") if ":" in cell else cell
        rc = cli_main(["train", *common, "--variant", variant, "--cell", cell,
                       "--out", str(out / f"train_{variant}_{Path(tag).stem}")])
        if rc:
            return rc

    # 3) transfer evaluation on converted SVHN, no new search, no weight transfer
    if args.svhn_test:
        for variant, cell in jobs:
            tag = Path(cell.split(":")[-1]).stem if ":" in cell else cell
            ckpt = out / f"train_{variant}_{tag}" / "model.drnt"
            rc = cli_main(["eval", "--dataset", "drim",
                           "--drim-train", args.svhn_test, "--drim-test", args.svhn_test,
                           "--variant", variant, "--cell", cell,
                           "--checkpoint", str(ckpt),
                           "--out", str(out / f"eval_svhn_{variant}_{tag}")])
            if rc:
                return rc
    return 0


if __name__ == "__main__":
    sys.exit(run())
