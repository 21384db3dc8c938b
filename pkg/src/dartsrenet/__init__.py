"""Differentiable search for RNN cells inside ReNet image classifiers.

Library layout:

* :mod:`dartsrenet.autograd`   — tensors, tape, primitives, backward
* :mod:`dartsrenet.optim`      — Adam / SGD / gradient clipping
* :mod:`dartsrenet.cells`      — genotype cells, relaxed search cells, GRU/LSTM
* :mod:`dartsrenet.renet`      — patch extraction and bidirectional sweeps
* :mod:`dartsrenet.network`    — conv stem + 3 ReNet layers + FC head
* :mod:`dartsrenet.search`     — alternating bilevel search and retraining
* :mod:`dartsrenet.data`       — CIFAR-10 / DRIM loaders, splits, augmentation
* :mod:`dartsrenet.cli`        — search / train / eval / export-dot / selftest
"""

from .autograd import (Tensor, Tape, backward, no_grad, zero_grads,
                       NumericsError, ShapeError, NonFiniteError, GradientError)
from .cells import (Activation, AlphaTable, Genotype, GenotypeCell, GRUCell,
                    LSTMCell, MixedCell, derive_genotype, preset_genotypes,
                    vertex_step)
from .data import Dataset, NormStats, AugmentConfig, load_cifar10, load_raw
from .network import NetworkConfig, Network, build_network, count_parameters, evaluate
from .optim import Adam, SGD, clip_global_norm
from .renet import (PatchGrid, FeatureMap, ReNetLayer, extract_patches,
                    horizontal_sweep, vertical_sweep, apply_sigmoid_weighting,
                    share_directional_weights)
from .search import TrainSettings, run_search, retrain, multi_seed_search

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
