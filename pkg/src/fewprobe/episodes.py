"""Deterministic episode sampling and task preparation.

Tasks arrive as (sample_id, activity-or-label) records; preparation turns
activities into binary labels (clipped-median rule), removes duplicated
measurements, and filters tasks by size and imbalance. Episode sampling is
replayable: the RNG stream for a given (seed, task_id, repeat_index) is a
PCG64 generator keyed by a BLAKE2b hash of that triple, so every episode is
independent of the generation order of the others.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .core import Episode, LabelledSample
from .errors import EmptyTask, InsufficientSamples

DEFAULT_SUPPORT_SIZES = (16, 32, 64, 128)


@dataclass(frozen=True)
class TaskSample:
    sample_id: str
    activity: float | None = None
    label: int | None = None


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    samples: tuple[TaskSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    def positive_fraction(self) -> float:
        labels = [s.label for s in self.samples]
        if any(l is None for l in labels):
            raise ValueError("task is not binarized yet")
        return sum(labels) / len(labels)

    def labelled_samples(self) -> list[LabelledSample]:
        return [LabelledSample(s.sample_id, int(s.label)) for s in self.samples]


@dataclass(frozen=True)
class EpisodeSpec:
    """Sampling parameters for one benchmark configuration.

    ``support_positive_fraction`` switches to screening mode: the support
    holds a fixed hit fraction and every remaining positive goes to the
    query.
    """

    support_size: int
    support_positive_fraction: float | None = None
    n_repeats: int = 10
    seed: int = 0
    force_balanced: bool = False

    def __post_init__(self):
        if self.support_size < 2:
            raise ValueError("support_size must be at least 2")
        f = self.support_positive_fraction
        if f is not None and not 0.0 < f < 1.0:
            raise ValueError("support_positive_fraction must lie in (0, 1)")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be at least 1")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _episode_rng(seed: int, task_id: str, repeat_index: int) -> np.random.Generator:
    key = hashlib.blake2b(
        f"{seed}:{task_id}:{repeat_index}".encode("utf-8"), digest_size=8
    ).digest()
    return np.random.default_rng(int.from_bytes(key, "little"))


# ---------------------------------------------------------------------------
# Task preparation


def deduplicate_measurements(task: TaskRecord) -> TaskRecord:
    """Drop every sample whose id occurs more than once in the task."""
    counts: dict[str, int] = {}
    for s in task.samples:
        counts[s.sample_id] = counts.get(s.sample_id, 0) + 1
    kept = tuple(s for s in task.samples if counts[s.sample_id] == 1)
    return replace(task, samples=kept)


def binarize_by_clipped_median(task: TaskRecord,
                               clip_low: float = 5.0,
                               clip_high: float = 9.0) -> TaskRecord:
    """Label by comparing clipped activities to their median.

    Activities are clipped into [clip_low, clip_high]; the threshold is the
    median of the clipped values (mean of the middle two for even counts).
    Samples at exactly the threshold are removed; the rest get label
    1 if above, 0 if below.
    """
    if not task.samples:
        raise EmptyTask(f"task {task.task_id!r} has no samples")
    if any(s.activity is None for s in task.samples):
        raise ValueError("all samples must carry activity values")
    clipped = np.clip([s.activity for s in task.samples], clip_low, clip_high)
    threshold = float(np.median(clipped))
    kept = []
    for s, a in zip(task.samples, clipped):
        if a == threshold:
            continue
        kept.append(TaskSample(sample_id=s.sample_id, activity=s.activity,
                               label=int(a > threshold)))
    if not kept:
        raise EmptyTask(
            f"task {task.task_id!r}: all activities equal the threshold"
        )
    return replace(task, samples=tuple(kept))


def filter_tasks(tasks: Iterable[TaskRecord],
                 min_size: int = 60,
                 max_size: int = 5000,
                 pos_frac_range: tuple[float, float] = (0.1, 0.6)
                 ) -> list[TaskRecord]:
    """Keep binarized tasks within the size and imbalance bounds (closed)."""
    lo, hi = pos_frac_range
    kept = []
    for task in tasks:
        n = len(task)
        if not min_size <= n <= max_size:
            continue
        frac = task.positive_fraction()
        if not lo <= frac <= hi:
            continue
        kept.append(task)
    return kept


def subsample_screening_task(task: TaskRecord,
                             max_size: int = 30_000,
                             max_pos_frac: float = 0.07,
                             seed: int = 0) -> TaskRecord:
    """Down-sample a large screening task to at most ``max_size`` samples.

    All positives are kept when that leaves their fraction under
    ``max_pos_frac`` of the subsampled task; otherwise positives are
    subsampled to preserve the task's original positive rate. Negatives
    fill the remainder uniformly at random.
    """
    if len(task) <= max_size:
        return task
    positives = [s for s in task.samples if s.label == 1]
    negatives = [s for s in task.samples if s.label == 0]
    rng = _episode_rng(seed, task.task_id, -1)
    if len(positives) / max_size < max_pos_frac:
        kept_pos = positives
    else:
        original_rate = len(positives) / len(task)
        n_pos = _round_half_up(original_rate * max_size)
        order = rng.permutation(len(positives))
        kept_pos = [positives[i] for i in order[:n_pos]]
    n_neg = max_size - len(kept_pos)
    order = rng.permutation(len(negatives))
    kept_neg = [negatives[i] for i in order[:n_neg]]
    return replace(task, samples=tuple(kept_pos + kept_neg))


# ---------------------------------------------------------------------------
# Episode sampling


def sample_episode(task: TaskRecord, spec: EpisodeSpec,
                   repeat_index: int) -> Episode:
    """Draw one support/query split; pure given (task, spec, repeat_index).

    Balanced mode samples the support stratified at the task's class ratio
    (or 50/50 with ``force_balanced``), at least one sample per class.
    Screening mode puts round(fraction * size) positives (min 1) in the
    support and every remaining positive in the query. The query is always
    the full remainder of the task.
    """
    samples = task.labelled_samples()
    if spec.support_size >= len(samples):
        raise InsufficientSamples(task.task_id, -1, spec.support_size + 1,
                                  len(samples))
    # canonical ordering so sampling is independent of input order
    pos = sorted((s for s in samples if s.label == 1), key=lambda s: s.id)
    neg = sorted((s for s in samples if s.label == 0), key=lambda s: s.id)

    if spec.support_positive_fraction is not None:
        n_pos = max(1, _round_half_up(
            spec.support_positive_fraction * spec.support_size))
    elif spec.force_balanced:
        n_pos = spec.support_size // 2
    else:
        ratio = len(pos) / len(samples)
        n_pos = _round_half_up(ratio * spec.support_size)
    n_pos = min(max(n_pos, 1), spec.support_size - 1)
    n_neg = spec.support_size - n_pos

    # query needs at least one sample of each class left over
    if len(pos) < n_pos + 1:
        raise InsufficientSamples(task.task_id, 1, n_pos + 1, len(pos))
    if len(neg) < n_neg + 1:
        raise InsufficientSamples(task.task_id, 0, n_neg + 1, len(neg))

    rng = _episode_rng(spec.seed, task.task_id, repeat_index)
    pos_order = rng.permutation(len(pos))
    neg_order = rng.permutation(len(neg))
    support = [pos[i] for i in pos_order[:n_pos]]
    support += [neg[i] for i in neg_order[:n_neg]]
    query = [pos[i] for i in pos_order[n_pos:]]
    query += [neg[i] for i in neg_order[n_neg:]]
    return Episode(task_id=task.task_id, support=tuple(support),
                   query=tuple(query))
