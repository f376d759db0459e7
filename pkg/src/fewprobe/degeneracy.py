"""Executable demonstrations of degenerate quadratic-head optima.

On linearly separable support sets one can build an explicit one-parameter
family of quadratic-head parameters whose cross-entropy tends to zero while
the precision norms blow up: take a separating direction v, place the
prototypes at (b-1)v and (b+1)v, and inflate the precision eigenvalue along
v. This module builds that family, sweeps its parameter, and compares the
precision-spectrum trajectories of free gradient descent against the
block-coordinate probe (whose shrinkage caps the spectrum at 1/lambda).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import EmbeddingSet, LabelledSample, TrainConfig
from .errors import NotSeparable
from . import probes, symlinalg
from .probes import QuadraticProbeParams, TrainTrace

PERCEPTRON_UPDATE_CAP = 100_000
DEFAULT_LAMBDA_GRID = (1.0, 10.0, 100.0, 1000.0, 10000.0)


@dataclass(frozen=True)
class SeparatingHyperplane:
    """Unit direction v and offset b with v.z > b for positives, < b else."""

    v: np.ndarray
    b: float
    margin: float


@dataclass(frozen=True)
class DegenerateFamily:
    """Separator plus the parameter-independent part of the precision.

    ``base_precision`` must have v as an eigenvector with eigenvalue 1
    (the identity, the default, does); then the inflated precision
    base + (lam - 1) v v^T has v as eigenvector with eigenvalue lam.
    """

    hyperplane: SeparatingHyperplane
    base_precision: np.ndarray


def _check_separation(v: np.ndarray, b: float, Z: np.ndarray,
                      y: np.ndarray) -> float:
    """Signed margin of (v, b); positive iff strictly separating."""
    proj = Z @ v
    pos_min = proj[y == 1].min()
    neg_max = proj[y == 0].max()
    return float(min(pos_min - b, b - neg_max))


def find_separator(support: Sequence[LabelledSample],
                   embeddings: EmbeddingSet) -> SeparatingHyperplane:
    """Find a verified strict separator of the support classes.

    Tries the difference-of-class-sums direction first (near-orthogonal
    high-dimensional embeddings make it separate almost surely), then falls
    back to the perceptron. Raises ``NotSeparable`` when the perceptron does
    not converge within its update cap.
    """
    Z = embeddings.matrix([s.id for s in support])
    y = np.array([s.label for s in support], dtype=np.intp)
    signs = 2.0 * y - 1.0

    v = signs @ Z
    norm = np.linalg.norm(v)
    if norm > 0:
        v = v / norm
        proj = Z @ v
        b = float((proj[y == 1].min() + proj[y == 0].max()) / 2.0)
        margin = _check_separation(v, b, Z, y)
        if margin > 0:
            return SeparatingHyperplane(v=v, b=b, margin=margin)

    # perceptron fallback (margin-less, with bias term)
    w = np.zeros(Z.shape[1])
    c = 0.0
    updates = 0
    while updates < PERCEPTRON_UPDATE_CAP:
        mistakes = 0
        for i in range(len(y)):
            if signs[i] * (Z[i] @ w + c) <= 0:
                w = w + signs[i] * Z[i]
                c = c + signs[i]
                mistakes += 1
                updates += 1
                if updates >= PERCEPTRON_UPDATE_CAP:
                    break
        if mistakes == 0:
            break
    else:
        raise NotSeparable(updates)
    norm = np.linalg.norm(w)
    if norm == 0 or updates >= PERCEPTRON_UPDATE_CAP:
        raise NotSeparable(updates)
    v = w / norm
    proj = Z @ v
    b = float((proj[y == 1].min() + proj[y == 0].max()) / 2.0)
    margin = _check_separation(v, b, Z, y)
    if margin <= 0:
        raise NotSeparable(updates)
    return SeparatingHyperplane(v=v, b=b, margin=margin)


def build_theta(family: DegenerateFamily, lam: float) -> QuadraticProbeParams:
    """Instantiate the degenerate parameter family at inflation ``lam``.

    w_0 = (b-1)v, w_1 = (b+1)v; both precisions are
    base + (lam - 1) v v^T, so v is an eigenvector with eigenvalue lam.
    """
    if lam < 1.0:
        raise ValueError("inflation parameter must be >= 1")
    v = family.hyperplane.v
    b = family.hyperplane.b
    w = np.stack([(b - 1.0) * v, (b + 1.0) * v])
    m = family.base_precision + (lam - 1.0) * np.outer(v, v)
    m = (m + m.T) / 2.0
    return QuadraticProbeParams.from_matrices(w, m, m.copy())


def mahadiff_holds(family: DegenerateFamily,
                   support: Sequence[LabelledSample],
                   embeddings: EmbeddingSet) -> bool:
    """Check the per-sample inequality that drives the construction:

    (v.(z_i - w_{1-y_i}))^2 > (v.(z_i - w_{y_i}))^2 for every support sample.
    """
    v = family.hyperplane.v
    b = family.hyperplane.b
    w = np.stack([(b - 1.0) * v, (b + 1.0) * v])
    Z = embeddings.matrix([s.id for s in support])
    y = np.array([s.label for s in support], dtype=np.intp)
    proj = Z @ v
    own = (proj - w[y] @ v) ** 2
    other = (proj - w[1 - y] @ v) ** 2
    return bool(np.all(other > own))


@dataclass
class SweepRow:
    lam: float
    ce: float
    log_ce: float   # log of ce, computed without underflow
    f1: float
    f2: float
    f2_tilde: float
    fro_norm: tuple[float, float]
    max_eig: tuple[float, float]


def _stable_log_ce(gaps: np.ndarray) -> float:
    """log of mean_i log1p(exp(-g_i)) without underflow for large gaps.

    For g > 30, log(log1p(exp(-g))) = -g to machine precision; elsewhere
    the direct formula is safe.
    """
    small = gaps <= 30.0
    log_terms = np.where(
        small,
        np.log(np.log1p(np.exp(-np.minimum(gaps, 30.0)))),
        -gaps,
    )
    m = log_terms.max()
    return float(m + np.log(np.exp(log_terms - m).sum()) - np.log(len(gaps)))


def divergence_sweep(support: Sequence[LabelledSample],
                     embeddings: EmbeddingSet,
                     lambdas: Sequence[float] = DEFAULT_LAMBDA_GRID,
                     seed: int = 0) -> list[SweepRow]:
    """Evaluate the degenerate family along an ascending inflation grid.

    Returns one row per grid point with the support cross-entropy, its
    decomposition, and the precision norms/extremal eigenvalues. On a
    separable instance the cross-entropy heads to zero as the norms blow up.
    """
    hyperplane = find_separator(support, embeddings)
    d = embeddings.dim
    family = DegenerateFamily(hyperplane=hyperplane,
                              base_precision=np.eye(d))
    Z = embeddings.matrix([s.id for s in support])
    y = np.array([s.label for s in support], dtype=np.intp)
    idx = np.arange(len(y))
    rows = []
    for lam in lambdas:
        params = build_theta(family, lam)
        ce, f1, f2, f2_tilde = probes.loss_decomposition(
            params, support, embeddings)
        dists = np.stack([
            symlinalg.mahalanobis_sq_batch(Z, params.w[k], params.m[k])
            for k in (0, 1)
        ], axis=1)
        gaps = dists[idx, 1 - y] - dists[idx, y]
        fro = (symlinalg.frobenius_norm(params.m[0]),
               symlinalg.frobenius_norm(params.m[1]))
        eig = tuple(
            symlinalg.max_eigenvalue(params.m[k], tol=1e-9, seed=seed)
            for k in (0, 1)
        )
        rows.append(SweepRow(lam=float(lam), ce=ce, log_ce=_stable_log_ce(gaps),
                             f1=f1, f2=f2, f2_tilde=f2_tilde,
                             fro_norm=fro, max_eig=eig))
    return rows


def ce_upper_bound(family: DegenerateFamily, lam: float,
                   support: Sequence[LabelledSample],
                   embeddings: EmbeddingSet) -> float:
    """Upper bound log(1 + exp(-gap_min)) on the per-sample cross-entropy of
    build_theta(family, lam), where gap_min is the smallest distance gap
    between the wrong-class and own-class quadratic forms over the support.
    """
    params = build_theta(family, lam)
    Z = embeddings.matrix([s.id for s in support])
    y = np.array([s.label for s in support], dtype=np.intp)
    dists = np.stack([
        symlinalg.mahalanobis_sq_batch(Z, params.w[k], params.m[k])
        for k in (0, 1)
    ], axis=1)
    idx = np.arange(len(y))
    gap = dists[idx, 1 - y] - dists[idx, y]
    return float(np.log1p(np.exp(-gap.min())))


def eigenvalue_trajectory_compare(support: Sequence[LabelledSample],
                                  embeddings: EmbeddingSet,
                                  cfg: TrainConfig
                                  ) -> tuple[TrainTrace, TrainTrace]:
    """Fit the free-optimization head (no regularizer) and the
    block-coordinate probe with identical config; return (free, quadratic)
    traces for spectrum comparison.
    """
    find_separator(support, embeddings)  # raises NotSeparable if not
    _, free_trace = probes.free_opt_fit(support, embeddings, cfg,
                                        regularized=False)
    _, quad_trace = probes.quadratic_probe_fit(support, embeddings, cfg)
    return free_trace, quad_trace
