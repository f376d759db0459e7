"""Domain types shared by all modules: embeddings, samples, episodes, config.

Sample ids are opaque strings; this package never looks at molecular
structure. Labels are binary (0 = inactive, 1 = active).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DimMismatch, ZeroVector

ZERO_NORM_THRESHOLD = 1e-12
UNIT_NORM_TOLERANCE = 1e-6


def normalize_embedding(v: np.ndarray) -> np.ndarray:
    """Project ``v`` onto the unit sphere.

    Raises ``ZeroVector`` when the input norm is at or below 1e-12.
    Idempotent on vectors that are already unit norm.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= ZERO_NORM_THRESHOLD:
        raise ZeroVector(f"cannot normalize a vector of norm {norm:.3e}")
    return v / norm


class LabelledSample(NamedTuple):
    id: str
    label: int


@dataclass(frozen=True)
class EmbeddingSet:
    """Id-indexed unit-norm vectors of a fixed dimension.

    Ingestion normalizes non-unit vectors instead of rejecting them;
    ``renormalized`` counts how many inputs needed correction.
    """

    dim: int
    entries: Mapping[str, np.ndarray]
    renormalized: int = 0

    @classmethod
    def from_vectors(cls, vectors: Mapping[str, np.ndarray]) -> "EmbeddingSet":
        if not vectors:
            raise ValueError("embedding set must contain at least one vector")
        dim = len(next(iter(vectors.values())))
        entries: dict[str, np.ndarray] = {}
        renormalized = 0
        for sample_id, v in vectors.items():
            v = np.asarray(v, dtype=np.float64)
            if v.ndim != 1 or len(v) != dim:
                raise DimMismatch(
                    f"vector {sample_id!r} has shape {v.shape}, expected ({dim},)"
                )
            if abs(np.linalg.norm(v) - 1.0) > UNIT_NORM_TOLERANCE:
                renormalized += 1
            u = normalize_embedding(v)
            u.setflags(write=False)
            entries[sample_id] = u
        return cls(dim=dim, entries=entries, renormalized=renormalized)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def vector(self, sample_id: str) -> np.ndarray:
        return self.entries[sample_id]

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        """Stack the vectors for ``ids`` into an (n, dim) array."""
        return np.array([self.entries[i] for i in ids], dtype=np.float64)


@dataclass(frozen=True)
class Episode:
    """One sampled (support, query) instantiation of a task."""

    task_id: str
    support: tuple[LabelledSample, ...]
    query: tuple[LabelledSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(self.support))
        object.__setattr__(self, "query", tuple(self.query))
        support_ids = {s.id for s in self.support}
        query_ids = {q.id for q in self.query}
        if support_ids & query_ids:
            raise ValueError("support and query sets overlap")
        support_labels = {s.label for s in self.support}
        if support_labels != {0, 1}:
            raise ValueError("support must contain both classes")
        query_labels = {q.label for q in self.query}
        if query_labels != {0, 1}:
            raise ValueError("query must contain both classes")

    @property
    def support_positive_count(self) -> int:
        return sum(s.label for s in self.support)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for probe fitting.

    ``free_opt_reg_weight`` is only read by the regularized free-optimization
    baseline.
    """

    epochs: int = 100
    learning_rate: float = 0.05
    shrinkage_lambda: float = 0.2
    temperature: float = 10.0
    seed: int = 0
    free_opt_reg_weight: float = 0.01

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.shrinkage_lambda <= 1.0:
            raise ValueError("shrinkage_lambda must lie in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.free_opt_reg_weight < 0:
            raise ValueError("free_opt_reg_weight must be nonnegative")


@dataclass(frozen=True)
class BinaryFingerprint:
    """Fixed-length bit vector (default 2048 bits)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1:
            raise ValueError("fingerprint bits must be one-dimensional")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("fingerprint bits must be 0/1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    @classmethod
    def from_hex(cls, hexstring: str, n_bits: int) -> "BinaryFingerprint":
        raw = bytes.fromhex(hexstring)
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:n_bits]
        return cls(bits=bits)

    def to_hex(self) -> str:
        return np.packbits(self.bits).tobytes().hex()


def split_by_label(
    samples: Iterable[LabelledSample],
) -> tuple[list[LabelledSample], list[LabelledSample]]:
    """Partition samples into (negatives, positives)."""
    neg = [s for s in samples if s.label == 0]
    pos = [s for s in samples if s.label == 1]
    return neg, pos
