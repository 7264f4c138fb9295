"""Evaluation: goodness-scan classification, sparsity and separability metrics.

Inference embeds each of the ten candidate labels in turn and predicts the
label whose latent scores highest: total goodness under the sigmoid
probability, positive-partition goodness under the symmetric one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

from .analog import DenseLayer, forward_batch
from .core import ProbabilityFn, SigmoidProb
from .data import Dataset, LabelCodebook, embed_batch
from .errors import DataError
from .spiking import SpikingConfig, simulate_latents

LatentRunner = Callable[[DenseLayer, np.ndarray], np.ndarray]


def analog_runner() -> LatentRunner:
    """Latents via a plain ReLU forward pass."""

    def run(layer: DenseLayer, X: np.ndarray) -> np.ndarray:
        _, latent = forward_batch(layer, X)
        return latent

    return run


def spiking_runner(spiking: SpikingConfig, seed: int) -> LatentRunner:
    """Latents via a plasticity-free spiking simulation.

    The encoder is stochastic, so the runner owns a seeded generator;
    a given sequence of calls is reproducible.
    """
    rng = np.random.default_rng([seed, 0xE7A1])

    def run(layer: DenseLayer, X: np.ndarray) -> np.ndarray:
        return simulate_latents(layer, X, spiking, rng)

    return run


def goodness_scores(
    latents: np.ndarray, prob_fn: ProbabilityFn, layer: DenseLayer
) -> np.ndarray:
    """Per-row classification score: total or positive-partition goodness."""
    sq = latents * latents
    if isinstance(prob_fn, SigmoidProb):
        return sq.sum(axis=1)
    return sq[:, layer.partition.pos_mask].sum(axis=1)


def classify(
    layer: DenseLayer,
    image: np.ndarray,
    codebook: LabelCodebook,
    runner: LatentRunner,
    prob_fn: ProbabilityFn,
) -> int:
    """Goodness-scan prediction for one image; ties go to the lowest label."""
    stack = np.stack([np.concatenate([image, codebook.vectors[c]]) for c in range(10)])
    latents = runner(layer, stack)
    return int(np.argmax(goodness_scores(latents, prob_fn, layer)))


def accuracy(
    layer: DenseLayer,
    dataset: Dataset,
    codebook: LabelCodebook,
    runner: LatentRunner,
    prob_fn: ProbabilityFn,
    chunk: int = 2000,
) -> float:
    """Goodness-scan accuracy over a dataset, evaluated in chunks."""
    hits = 0
    for start in range(0, len(dataset), chunk):
        images = dataset.images[start : start + chunk]
        labels = dataset.labels[start : start + chunk]
        scores = np.empty((images.shape[0], 10))
        for c in range(10):
            latents = runner(layer, embed_batch(images, c, codebook))
            scores[:, c] = goodness_scores(latents, prob_fn, layer)
        hits += int((np.argmax(scores, axis=1) == labels).sum())
    return hits / len(dataset)


@dataclass
class LatentDump:
    """Latent vectors of a dataset split with their true labels."""

    latents: np.ndarray  # [Q, n]
    labels: np.ndarray  # [Q]
    model_tag: str = ""

    def __post_init__(self):
        self.latents = np.atleast_2d(np.asarray(self.latents, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.latents.shape[0] != self.labels.shape[0]:
            raise DataError("latents/labels length mismatch")


def collect_latents(
    layer: DenseLayer,
    dataset: Dataset,
    codebook: LabelCodebook,
    runner: LatentRunner,
    model_tag: str = "",
    chunk: int = 2000,
) -> LatentDump:
    """Latents of every sample with its true label embedded."""
    latents = np.zeros((len(dataset), layer.n_out))
    for start in range(0, len(dataset), chunk):
        images = dataset.images[start : start + chunk]
        labels = dataset.labels[start : start + chunk]
        for c in range(10):
            mask = labels == c
            if mask.any():
                rows = runner(layer, embed_batch(images[mask], c, codebook))
                latents[start + np.flatnonzero(mask)] = rows
    return LatentDump(latents, dataset.labels.copy(), model_tag)


def hoyer_index(latent: np.ndarray) -> float:
    """Normalized L1/L2 sparsity in [0, 1]: 0 uniform, 1 one-hot.

    The all-zero vector is 0/0 under the formula and is defined as 1.0
    (maximally sparse) so metric sweeps survive dead latents.
    """
    latent = np.asarray(latent, dtype=np.float64)
    n = latent.size
    if n < 2:
        raise ValueError("hoyer index needs at least 2 components")
    l2 = math.sqrt(float(np.dot(latent, latent)))
    if l2 == 0.0:
        return 1.0
    l1 = float(np.abs(latent).sum())
    root_n = math.sqrt(n)
    return (root_n - l1 / l2) / (root_n - 1.0)


def hoyer_summary(latents: np.ndarray) -> tuple[float, float, int]:
    """Mean and std of the index over rows, plus the count of dead latents."""
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    n = latents.shape[1]
    l2 = np.sqrt(np.einsum("qj,qj->q", latents, latents))
    l1 = np.abs(latents).sum(axis=1)
    dead = l2 == 0.0
    root_n = math.sqrt(n)
    values = np.ones(latents.shape[0])
    alive = ~dead
    values[alive] = (root_n - l1[alive] / l2[alive]) / (root_n - 1.0)
    return float(values.mean()), float(values.std()), int(dead.sum())


def separability_index(dump: LatentDump, k_nn: int = 5, chunk: int = 256) -> float:
    """Mean fraction of the k nearest latent neighbors sharing the true label.

    Exact brute-force Euclidean neighbors, query point excluded; exact
    distance ties resolve in index order.
    """
    latents, labels = dump.latents, dump.labels
    q = latents.shape[0]
    if q <= k_nn:
        raise DataError(f"need more than k_nn={k_nn} samples, got {q}")
    matches = 0
    for start in range(0, q, chunk):
        stop = min(start + chunk, q)
        d = cdist(latents[start:stop], latents, "sqeuclidean")
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        neighbors = np.argsort(d, axis=1, kind="stable")[:, :k_nn]
        matches += int((labels[neighbors] == labels[start:stop, None]).sum())
    return matches / (q * k_nn)


def export_latents(dump: LatentDump, path) -> None:
    """Write latents as CSV: header ``label,h0,...``, 9 significant digits."""
    n = dump.latents.shape[1]
    header = "label," + ",".join(f"h{j}" for j in range(n))
    with open(path, "w") as f:
        f.write(header + "\n")
        for label, row in zip(dump.labels, dump.latents):
            f.write(f"{int(label)}," + ",".join(f"{v:.9g}" for v in row) + "\n")


def read_latents(path) -> LatentDump:
    """Read a latent CSV back (external tools consume the same format)."""
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("label,"):
            raise DataError(f"{path}: not a latent CSV")
        labels = []
        rows = []
        for line in f:
            parts = line.rstrip("\n").split(",")
            labels.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    n_cols = header.count(",")
    latents = np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, n_cols))
    return LatentDump(latents.reshape(len(labels), -1) if rows else latents, np.asarray(labels, dtype=np.int64))


@dataclass
class MetricReport:
    """One structured summary per evaluation run."""

    accuracy: float
    hoyer_mean: float
    hoyer_std: float
    separability: float
    n_dead_latents: int
    model_tag: str = ""

    def format(self) -> str:
        lines = [
            f"model: {self.model_tag}" if self.model_tag else "model: (untagged)",
            f"accuracy: {self.accuracy:.4f}",
            f"hoyer_mean: {self.hoyer_mean:.4f}",
            f"hoyer_std: {self.hoyer_std:.4f}",
            f"separability: {self.separability:.4f}",
            f"dead_latents: {self.n_dead_latents}",
        ]
        return "\n".join(lines)


def evaluate(
    layer: DenseLayer,
    dataset: Dataset,
    codebook: LabelCodebook,
    runner: LatentRunner,
    prob_fn: ProbabilityFn,
    k_nn: int = 5,
    model_tag: str = "",
) -> tuple[MetricReport, LatentDump]:
    """Accuracy plus latent-geometry metrics on one split."""
    acc = accuracy(layer, dataset, codebook, runner, prob_fn)
    dump = collect_latents(layer, dataset, codebook, runner, model_tag)
    h_mean, h_std, n_dead = hoyer_summary(dump.latents)
    si = separability_index(dump, k_nn=k_nn)
    return MetricReport(acc, h_mean, h_std, si, n_dead, model_tag), dump
