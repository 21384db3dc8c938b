"""End-to-end smoke training on a small corpus.

Trains the reduced-width network with the shipped DWS cell and the GRU
baseline on a few thousand images and reports accuracies.  Uses the real
CIFAR-10 binaries when $DARTSRENET_DATA points at them, otherwise the
synthetic learnable corpus.

Run:  python3 demos/04_smoke_training.py            (~10-20 min on CPU)
"""

import os
import time
from pathlib import Path

import numpy as np

from dartsrenet import autograd as ag
from dartsrenet.cells import preset_genotypes
from dartsrenet.data import AugmentConfig, load_cifar10, synthetic_corpus
from dartsrenet.network import ConvSpec, NetworkConfig
from dartsrenet.search import TrainSettings, retrain

root = os.environ.get("DARTSRENET_DATA", "")
if root and (Path(root) / "data_batch_1.bin").exists():
    train_full, test_full = load_cifar10(root)
    rng = np.random.default_rng(0)
    train = train_full.subset(np.sort(rng.permutation(len(train_full))[:2000]))
    test = test_full.subset(np.arange(1000))
    print(f"corpus: CIFAR-10 from {root} (2000 train / 1000 eval)")
else:
    train = synthetic_corpus(2000, seed=0, split="train")
    test = synthetic_corpus(1000, seed=1, split="test")
    print("corpus: synthetic 10-class stand-in (set $DARTSRENET_DATA for CIFAR-10)")

ag.set_finite_checks(False)  # checked by the test suite; skip the per-op scan here
settings = TrainSettings(batch_size=64, epochs=10, patience=9, seed=0,
                         lr_weights=1e-2, retrain_val_size=200,
                         augment=AugmentConfig())

for label, cell, variant in [("dws cell", "preset:dws", "dws"), ("gru baseline", "gru", "vanilla")]:
    config = NetworkConfig(stem=[ConvSpec(16)] * 3, hidden_dim=40,
                           cell_source=cell, variant=variant)
    t0 = time.time()
    model, report = retrain(None, config, settings, train, test)
    print(f"{label}: test accuracy {report.test_accuracy:.3f} "
          f"({len(report.epochs)} epochs, {time.time() - t0:.0f}s, "
          f"{report.parameter_count:,} params)")
