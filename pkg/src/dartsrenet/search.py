"""Cell search and retraining.

Search alternates two Adam optimizers over disjoint parameter sets within
every paired batch: first one step on the architecture parameters using a
batch from the held-out half of Train, then one step on the network weights
using a batch from the other half — a strict 1:1 step ratio.  Early
stopping watches the held-out loss; the best-epoch architecture snapshot is
the one converted to a discrete genotype.

Retraining rebuilds the network from scratch around a discrete cell (no
weight transfer), trains on Train minus a small carved validation set,
early-stops on validation accuracy, and reports test accuracy.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .cells import Genotype, derive_genotype
from .data import (AugmentConfig, Dataset, NormStats, compute_norm_stats,
                   make_splits, normalize, prepare_batch)
from .network import Network, NetworkConfig, build_network, count_parameters, evaluate
from .optim import Adam, clip_global_norm


@dataclass
class TrainSettings:
    """Optimization knobs shared by search and retraining.

    None of these values come from the method itself; they are ordinary
    engineering defaults and are all overridable from the run config.
    """

    batch_size: int = 64
    epochs: int = 50
    patience: int = 5
    lr_weights: float = 1e-3
    lr_alpha: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 0.25
    clip_alpha: float = 0.0
    seed: int = 0
    search_fraction: float = 0.5
    retrain_val_size: int = 5000
    eval_batch_size: int = 128
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)


@dataclass
class SearchState:
    model: Network
    weight_opt: Adam
    alpha_opt: Adam
    settings: TrainSettings
    alpha_steps: int = 0
    weight_steps: int = 0


def make_search_state(config: NetworkConfig, settings: TrainSettings) -> SearchState:
    if config.cell_source != "mixed":
        config = replace(config, cell_source="mixed")
    model = build_network(config, seed=settings.seed)
    weights = model.parameters()
    alphas = model.alpha_parameters()
    if set(map(id, weights)) & set(map(id, alphas)):
        raise ValueError("optimizer parameter sets must be disjoint")
    return SearchState(
        model=model,
        weight_opt=Adam(weights, settings.lr_weights, settings.beta1,
                        settings.beta2, settings.adam_eps),
        alpha_opt=Adam(alphas, settings.lr_alpha, settings.beta1,
                       settings.beta2, settings.adam_eps),
        settings=settings)


def search_step(state: SearchState, train_batch, val_batch) -> tuple[float, float]:
    """One paired update: alpha step on the val batch, weight step on the
    train batch.  Each optimizer touches only its own parameter set."""
    model, s = state.model, state.settings

    xv, yv = val_batch
    ag.zero_grads(state.alpha_opt.params)
    loss_a = ag.cross_entropy(model.forward(Tensor(xv)), yv)
    ag.backward(loss_a)
    if s.clip_alpha > 0:
        clip_global_norm(state.alpha_opt.params, s.clip_alpha)
    state.alpha_opt.step()
    state.alpha_steps += 1

    xt, yt = train_batch
    ag.zero_grads(state.weight_opt.params)
    loss_w = ag.cross_entropy(model.forward(Tensor(xt)), yt)
    ag.backward(loss_w)
    if s.clip_norm > 0:
        clip_global_norm(state.weight_opt.params, s.clip_norm)
    state.weight_opt.step()
    state.weight_steps += 1

    return float(loss_a.data), float(loss_w.data)


def dataset_loss(model: Network, dataset: Dataset, indices: np.ndarray,
                 stats: NormStats, batch_size: int) -> float:
    """Mean cross-entropy over a split, clean pipeline, off-tape."""
    total, count = 0.0, 0
    with ag.no_grad():
        for start in range(0, len(indices), batch_size):
            idx = indices[start:start + batch_size]
            x, y = prepare_batch(dataset, idx, stats, None, 0, 0)
            loss = ag.cross_entropy(model.forward(Tensor(x)), y)
            total += float(loss.data) * len(idx)
            count += len(idx)
    return total / count


class _CyclingSampler:
    """Shuffled index batches that reshuffle and wrap when exhausted."""

    def __init__(self, indices: np.ndarray, batch_size: int, rng: np.random.Generator):
        self.indices = indices
        self.batch_size = batch_size
        self.rng = rng
        self._order = rng.permutation(indices)
        self._pos = 0

    def next_batch(self) -> np.ndarray:
        if self._pos + self.batch_size > len(self._order):
            self._order = self.rng.permutation(self.indices)
            self._pos = 0
        batch = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return batch


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    alpha_entropy: float


@dataclass
class SearchReport:
    epochs: list[EpochRecord]
    best_epoch: int
    genotype: Genotype


def run_search(config: NetworkConfig, settings: TrainSettings,
               train_ds: Dataset) -> tuple[Genotype, SearchReport]:
    """Alternating search with early stopping on the held-out half's loss."""
    state = make_search_state(config, settings)
    model, s = state.model, settings
    splits = make_splits(len(train_ds), "search", s.seed, s.search_fraction)
    if len(splits.train) < s.batch_size or len(splits.val) < s.batch_size:
        raise ValueError("dataset too small for the configured batch size")
    stats = compute_norm_stats(train_ds.images[splits.train])
    rng = np.random.default_rng(np.random.SeedSequence((s.seed, 0xBA7C)))
    val_sampler = _CyclingSampler(splits.val, s.batch_size, rng)

    records: list[EpochRecord] = []
    best_val = np.inf
    best_alpha: list[np.ndarray] | None = None
    best_epoch = -1
    bad_epochs = 0
    for epoch in range(s.epochs):
        order = rng.permutation(splits.train)
        losses = []
        for start in range(0, len(order) - s.batch_size + 1, s.batch_size):
            idx_t = order[start:start + s.batch_size]
            idx_v = val_sampler.next_batch()
            bt = prepare_batch(train_ds, idx_t, stats, s.augment, s.seed, epoch)
            bv = prepare_batch(train_ds, idx_v, stats, s.augment, s.seed, epoch)
            _, loss_w = search_step(state, bt, bv)
            losses.append(loss_w)
        val_loss = dataset_loss(model, train_ds, splits.val, stats, s.eval_batch_size)
        entropy = model.alpha.entropy()
        records.append(EpochRecord(epoch, float(np.mean(losses)), val_loss, entropy))
        if val_loss < best_val:
            best_val = val_loss
            best_alpha = model.alpha.values()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > s.patience:
                break
    genotype = derive_genotype(best_alpha)
    return genotype, SearchReport(records, best_epoch, genotype)


@dataclass
class RetrainEpoch:
    epoch: int
    train_loss: float
    val_acc: float


@dataclass
class RetrainReport:
    epochs: list[RetrainEpoch]
    best_epoch: int
    test_accuracy: float | None
    parameter_count: int
    norm_stats: NormStats | None = None


def retrain(genotype: Genotype | None, config: NetworkConfig, settings: TrainSettings,
            train_ds: Dataset, test_ds: Dataset | None = None) -> tuple[Network, RetrainReport]:
    """Train a discrete-cell (or gru/lstm baseline) model from fresh weights.

    ``genotype`` may be None when ``config.cell_source`` already names a
    baseline cell or a genotype file/preset.
    """
    if genotype is not None:
        config = replace(config, cell_source="inline", genotype=genotype)
    if config.cell_source == "mixed":
        raise ValueError("retrain needs a discrete cell, not the search cell")
    s = settings
    model = build_network(config, seed=s.seed)
    weights = model.parameters()
    opt = Adam(weights, s.lr_weights, s.beta1, s.beta2, s.adam_eps)
    splits = make_splits(len(train_ds), "retrain", s.seed,
                         retrain_val_size=s.retrain_val_size)
    stats = compute_norm_stats(train_ds.images[splits.train])
    rng = np.random.default_rng(np.random.SeedSequence((s.seed, 0x7E7A)))

    records: list[RetrainEpoch] = []
    best_acc = -1.0
    best_epoch = -1
    best_weights: list[np.ndarray] | None = None
    bad_epochs = 0
    for epoch in range(s.epochs):
        order = rng.permutation(splits.train)
        losses = []
        for start in range(0, len(order) - s.batch_size + 1, s.batch_size):
            idx = order[start:start + s.batch_size]
            x, y = prepare_batch(train_ds, idx, stats, s.augment, s.seed, epoch)
            ag.zero_grads(weights)
            loss = ag.cross_entropy(model.forward(Tensor(x)), y)
            ag.backward(loss)
            if s.clip_norm > 0:
                clip_global_norm(weights, s.clip_norm)
            opt.step()
            losses.append(float(loss.data))
        val_acc = evaluate_normalized(model, train_ds.images[splits.val],
                                      train_ds.labels[splits.val], stats,
                                      s.eval_batch_size)
        records.append(RetrainEpoch(epoch, float(np.mean(losses)), val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_weights = [p.data.copy() for p in weights]
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > s.patience:
                break
    if best_weights is not None:
        for p, saved in zip(weights, best_weights):
            p.data = saved
    test_acc = None
    if test_ds is not None:
        test_acc = evaluate_normalized(model, test_ds.images, test_ds.labels,
                                       stats, s.eval_batch_size)
    report = RetrainReport(records, best_epoch, test_acc,
                           count_parameters(model).total, norm_stats=stats)
    return model, report


def evaluate_normalized(model: Network, images: np.ndarray, labels: np.ndarray,
                        stats: NormStats, batch_size: int = 128) -> float:
    """Accuracy with the train-split normalization applied, no augmentation."""
    return evaluate(model, normalize(images, stats), labels, batch_size)


# --------------------------------------------------------------------------
# Multi-seed search
# --------------------------------------------------------------------------


@dataclass
class AgreementSummary:
    genotypes: list[Genotype]
    per_vertex: np.ndarray  # fraction of runs matching the modal entry

    @property
    def mean_agreement(self) -> float:
        return float(self.per_vertex.mean())


def multi_seed_search(config: NetworkConfig, settings: TrainSettings,
                      train_ds: Dataset, n_runs: int,
                      seeds: list[int] | None = None) -> AgreementSummary:
    """Repeat the search under different initializations and summarize how
    often each vertex's (predecessor, activation) choice recurs."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = seeds if seeds is not None else [settings.seed + k for k in range(n_runs)]
    genotypes = []
    for seed in seeds:
        genotype, _ = run_search(config, replace(settings, seed=seed), train_ds)
        genotypes.append(genotype)
    n_vertices = genotypes[0].num_vertices
    per_vertex = np.empty(n_vertices)
    for pos in range(n_vertices):
        votes = Counter(g.entries[pos] for g in genotypes)
        per_vertex[pos] = votes.most_common(1)[0][1] / len(genotypes)
    return AgreementSummary(genotypes, per_vertex)


# --------------------------------------------------------------------------
# Report files
# --------------------------------------------------------------------------


def write_search_report(report: SearchReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "alpha_entropy"])
        for r in report.epochs:
            writer.writerow([r.epoch, f"{r.train_loss:.6f}", f"{r.val_loss:.6f}",
                             f"{r.alpha_entropy:.6f}"])


def write_retrain_report(report: RetrainReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_acc"])
        for r in report.epochs:
            writer.writerow([r.epoch, f"{r.train_loss:.6f}", f"{r.val_acc:.6f}"])


def write_metrics(report: RetrainReport, path) -> None:
    acc = "n/a" if report.test_accuracy is None else f"{report.test_accuracy:.4f}"
    Path(path).write_text(f"test_accuracy {acc}\nparameters {report.parameter_count}\n")
