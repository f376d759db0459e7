"""Synthetic Gaussian-class tasks as a desk-scale stand-in for backbone
embeddings.

Each task draws two Gaussian classes; samples are projected to the unit
sphere before use (matching the normalization contract of the embedding
ingestion). The true generating parameters are returned so tests can compare
against Bayes-optimal oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import EmbeddingSet, LabelledSample
from .episodes import TaskRecord, TaskSample

Generator = Literal["isotropic", "diagonal", "rotated"]


@dataclass(frozen=True)
class SyntheticSpec:
    d: int
    n_per_class: int
    n_tasks: int = 1
    generator: Generator = "isotropic"
    separation: float = 2.0        # Euclidean distance between class means
    scale: float = 0.3             # largest covariance standard deviation
    condition_number: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 2 or self.n_per_class < 1 or self.n_tasks < 1:
            raise ValueError("d >= 2, n_per_class >= 1, n_tasks >= 1 required")
        if self.condition_number < 1.0:
            raise ValueError("condition_number must be >= 1")
        if self.generator not in ("isotropic", "diagonal", "rotated"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")
        if self.separation < 0.0:
            raise ValueError("separation must be non-negative")


def _random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _class_covariance(spec: SyntheticSpec,
                      rng: np.random.Generator) -> np.ndarray:
    var_hi = spec.scale ** 2
    if spec.generator == "isotropic":
        return var_hi * np.eye(spec.d)
    eigvals = np.geomspace(var_hi / spec.condition_number, var_hi, spec.d)
    if spec.generator == "diagonal":
        return np.diag(rng.permutation(eigvals))
    q = _random_rotation(rng, spec.d)
    return q @ np.diag(eigvals) @ q.T


@dataclass(frozen=True)
class SyntheticTask:
    task: TaskRecord
    vectors: dict[str, np.ndarray]
    true_means: np.ndarray          # (2, d)
    true_covariances: np.ndarray    # (2, d, d)


def make_task(spec: SyntheticSpec, task_index: int = 0) -> SyntheticTask:
    """Generate one two-class Gaussian task, projected to the unit sphere."""
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=spec.seed, spawn_key=(task_index,)))
    direction = rng.standard_normal(spec.d)
    direction /= np.linalg.norm(direction)
    means = np.stack([-0.5 * spec.separation * direction,
                      0.5 * spec.separation * direction])
    covs = np.stack([_class_covariance(spec, rng) for _ in (0, 1)])
    vectors: dict[str, np.ndarray] = {}
    samples = []
    task_id = f"synth-{task_index:04d}"
    for k in (0, 1):
        points = rng.multivariate_normal(means[k], covs[k],
                                         size=spec.n_per_class,
                                         method="cholesky")
        norms = np.linalg.norm(points, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        points = points / norms
        for j, p in enumerate(points):
            sid = f"{task_id}-c{k}-{j:05d}"
            vectors[sid] = p
            samples.append(TaskSample(sample_id=sid, label=k))
    task = TaskRecord(task_id=task_id, samples=tuple(samples))
    return SyntheticTask(task=task, vectors=vectors, true_means=means,
                         true_covariances=covs)


def make_benchmark(spec: SyntheticSpec
                   ) -> tuple[EmbeddingSet, list[TaskRecord], list[SyntheticTask]]:
    """Generate ``spec.n_tasks`` tasks sharing one embedding set."""
    tasks = [make_task(spec, i) for i in range(spec.n_tasks)]
    vectors: dict[str, np.ndarray] = {}
    for t in tasks:
        vectors.update(t.vectors)
    embeddings = EmbeddingSet.from_vectors(vectors)
    return embeddings, [t.task for t in tasks], tasks


def separable_instance(d: int = 128, n_per_class: int = 8,
                       seed: int = 0) -> tuple[EmbeddingSet, list[LabelledSample]]:
    """Near-orthogonal random unit vectors with labels: a linearly separable
    support set in the high-dimensional regime."""
    rng = np.random.default_rng(seed)
    vectors = {}
    support = []
    for k in (0, 1):
        for j in range(n_per_class):
            sid = f"sep-c{k}-{j:03d}"
            v = rng.standard_normal(d)
            vectors[sid] = v / np.linalg.norm(v)
            support.append(LabelledSample(sid, k))
    return EmbeddingSet.from_vectors(vectors), support
