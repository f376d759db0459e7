"""Classification heads fitted on a support set of frozen embeddings.

Heads: a cosine-logit linear probe, a Mahalanobis quadratic probe trained
by block-coordinate descent (closed-form shrunk-precision update then one
gradient step on the prototypes), free-optimization baselines that descend
on a matrix square root of the precision, a nearest-prototype head, kNN,
and fingerprint similarity search.

All fits are full-batch and deterministic given the config. Predictions are
overflow-safe two-class softmaxes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BinaryFingerprint, EmbeddingSet, LabelledSample, TrainConfig
from .errors import KTooLarge, LengthMismatch
from . import symlinalg
from .symlinalg import SpdFactor, mahalanobis_sq_batch


@dataclass(frozen=True)
class LinearProbeParams:
    """Per-class unit weight vectors, biases, and a shared temperature."""

    w: np.ndarray          # (2, d), rows unit-norm
    b: np.ndarray          # (2,)
    tau: float


@dataclass(frozen=True)
class QuadraticProbeParams:
    """Per-class prototypes and SPD precision matrices with cached factors."""

    w: np.ndarray                      # (2, d)
    m: tuple[np.ndarray, np.ndarray]   # two (d, d) SPD matrices
    factors: tuple[SpdFactor, SpdFactor]

    @classmethod
    def from_matrices(cls, w: np.ndarray,
                      m0: np.ndarray, m1: np.ndarray) -> "QuadraticProbeParams":
        return cls(w=np.asarray(w, dtype=np.float64),
                   m=(m0, m1),
                   factors=(symlinalg.spd_factorize(m0),
                            symlinalg.spd_factorize(m1)))


@dataclass(frozen=True)
class FreeOptParams:
    """Per-class prototypes and unconstrained precision square roots.

    The effective precision of class k is d_factor[k].T @ d_factor[k],
    PSD by construction.
    """

    w: np.ndarray          # (2, d)
    d_factor: np.ndarray   # (2, d, d)

    def precision(self, k: int) -> np.ndarray:
        dk = self.d_factor[k]
        return dk.T @ dk


@dataclass
class TrainTrace:
    """Per-epoch fit diagnostics.

    ``ce`` is always populated; the loss-decomposition and spectrum columns
    are filled by the quadratic/free-optimization fits and stay empty for
    the linear probe.
    """

    ce: list[float] = field(default_factory=list)
    f1: list[float] = field(default_factory=list)
    f2: list[float] = field(default_factory=list)
    f2_tilde: list[float] = field(default_factory=list)
    fro_norm: list[tuple[float, float]] = field(default_factory=list)
    max_eig: list[tuple[float, float]] = field(default_factory=list)
    query_delta_aucpr: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ce)


def _softmax_pair(logits: np.ndarray) -> np.ndarray:
    """Row-wise two-class softmax with max-subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _support_arrays(support: Sequence[LabelledSample],
                    embeddings: EmbeddingSet) -> tuple[np.ndarray, np.ndarray]:
    Z = embeddings.matrix([s.id for s in support])
    y = np.array([s.label for s in support], dtype=np.intp)
    return Z, y


def _class_means(Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.stack([Z[y == k].mean(axis=0) for k in (0, 1)])


# ---------------------------------------------------------------------------
# Linear probe


def linear_logits(w: np.ndarray, b: np.ndarray, tau: float,
                  Z: np.ndarray) -> np.ndarray:
    return tau * Z @ w.T + b


def linear_ce_and_grads(w: np.ndarray, b: np.ndarray, tau: float,
                        Z: np.ndarray, y: np.ndarray
                        ) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy and its gradients w.r.t. w (pre-projection) and b."""
    n = len(y)
    p = _softmax_pair(linear_logits(w, b, tau, Z))
    ce = -float(np.mean(np.log(p[np.arange(n), y])))
    g = p.copy()
    g[np.arange(n), y] -= 1.0
    g /= n
    grad_w = tau * g.T @ Z
    grad_b = g.sum(axis=0)
    return ce, grad_w, grad_b


def linear_probe_predict(params: LinearProbeParams,
                         z: np.ndarray) -> tuple[float, float]:
    p = _softmax_pair(linear_logits(params.w, params.b, params.tau,
                                    np.asarray(z, dtype=np.float64)[None, :]))
    return float(p[0, 0]), float(p[0, 1])


def linear_probe_scores(params: LinearProbeParams, Z: np.ndarray) -> np.ndarray:
    """Probability of the positive class for each row of Z."""
    return _softmax_pair(linear_logits(params.w, params.b, params.tau, Z))[:, 1]


def linear_probe_fit(support: Sequence[LabelledSample],
                     embeddings: EmbeddingSet,
                     cfg: TrainConfig) -> tuple[LinearProbeParams, TrainTrace]:
    """Full-batch gradient descent on the support cross-entropy.

    Weights start at the normalized class means and are re-projected to the
    unit sphere after every step.
    """
    Z, y = _support_arrays(support, embeddings)
    w = _class_means(Z, y)
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    b = np.zeros(2)
    trace = TrainTrace()
    for _ in range(cfg.epochs):
        ce, grad_w, grad_b = linear_ce_and_grads(w, b, cfg.temperature, Z, y)
        trace.ce.append(ce)
        w = w - cfg.learning_rate * grad_w
        b = b - cfg.learning_rate * grad_b
        w /= np.linalg.norm(w, axis=1, keepdims=True)
    w.setflags(write=False)
    b.setflags(write=False)
    return LinearProbeParams(w=w, b=b, tau=cfg.temperature), trace


# ---------------------------------------------------------------------------
# Quadratic probe


def _pair_distances(Z: np.ndarray, w: np.ndarray,
                    ms: Sequence[np.ndarray]) -> np.ndarray:
    """(n, 2) squared Mahalanobis distances to each class prototype."""
    return np.stack(
        [mahalanobis_sq_batch(Z, w[k], ms[k]) for k in (0, 1)], axis=1
    )


def quadratic_ce_and_wgrad(w: np.ndarray, ms: Sequence[np.ndarray],
                           Z: np.ndarray, y: np.ndarray
                           ) -> tuple[float, np.ndarray]:
    """Cross-entropy and its gradient w.r.t. the prototypes (precisions fixed).

    grad_k = (1/n) sum_i (p_ik - 1[y_i = k]) * 2 M_k (z_i - w_k).
    """
    n = len(y)
    dists = _pair_distances(Z, w, ms)
    p = _softmax_pair(-dists)
    ce = -float(np.mean(np.log(p[np.arange(n), y])))
    g = p.copy()
    g[np.arange(n), y] -= 1.0
    grad_w = np.zeros_like(w)
    for k in (0, 1):
        u = Z - w[k]
        grad_w[k] = (2.0 / n) * (g[:, k] @ u) @ ms[k]
    return ce, grad_w


def quadratic_probe_predict(params: QuadraticProbeParams,
                            z: np.ndarray) -> tuple[float, float]:
    z = np.asarray(z, dtype=np.float64)
    dists = np.array([
        symlinalg.mahalanobis_sq(z, params.w[k], params.m[k]) for k in (0, 1)
    ])
    p = _softmax_pair(-dists[None, :])
    return float(p[0, 0]), float(p[0, 1])


def quadratic_probe_scores(params: QuadraticProbeParams,
                           Z: np.ndarray) -> np.ndarray:
    dists = _pair_distances(Z, params.w, params.m)
    return _softmax_pair(-dists)[:, 1]


def quadratic_probe_fit(support: Sequence[LabelledSample],
                        embeddings: EmbeddingSet,
                        cfg: TrainConfig,
                        freeze_prototypes: bool = False,
                        track_spectrum: bool = True
                        ) -> tuple[QuadraticProbeParams, TrainTrace]:
    """Block-coordinate descent on the quadratic probe.

    Each epoch, in order: (1) per class, set the precision to the inverse of
    the shrunk empirical covariance around the current prototype (the
    closed-form update); (2) one full-batch gradient step on the prototypes
    against the cross-entropy, precisions held fixed. Prototypes start at
    the support class means, so epoch 0 predicts like the nearest-prototype
    head when shrinkage is 1.
    """
    Z, y = _support_arrays(support, embeddings)
    return _quadratic_fit_arrays(Z, y, cfg, freeze_prototypes, track_spectrum)


def _quadratic_fit_arrays(Z: np.ndarray, y: np.ndarray, cfg: TrainConfig,
                          freeze_prototypes: bool = False,
                          track_spectrum: bool = True
                          ) -> tuple[QuadraticProbeParams, TrainTrace]:
    n = len(y)
    lam = cfg.shrinkage_lambda
    w = _class_means(Z, y)
    class_rows = [Z[y == k] for k in (0, 1)]
    counts = np.array([rows.shape[0] for rows in class_rows], dtype=np.float64)
    trace = TrainTrace()
    eig_vecs: list[np.ndarray | None] = [None, None]
    ms: list[np.ndarray] = [np.eye(Z.shape[1])] * 2
    for _ in range(cfg.epochs):
        log_det_m = np.zeros(2)
        for k in (0, 1):
            cov = symlinalg.empirical_covariance(class_rows[k], w[k])
            try:
                factor = symlinalg.spd_factorize(symlinalg.shrink(cov, lam))
            except symlinalg.NotPositiveDefinite as exc:  # only possible at lam=0
                exc.args = (exc.args[0] +
                            "; raise shrinkage_lambda above 0 to guarantee "
                            "positive-definiteness",)
                raise
            ms[k] = symlinalg.spd_inverse(factor)
            log_det_m[k] = -factor.log_det
        dists = _pair_distances(Z, w, ms)
        p = _softmax_pair(-dists)
        idx = np.arange(n)
        ce = -float(np.mean(np.log(p[idx, y])))
        f1 = float(np.mean(dists[idx, y]))
        f2 = ce - f1
        f2_tilde = -float(np.dot(counts / n, log_det_m))
        trace.ce.append(ce)
        trace.f1.append(f1)
        trace.f2.append(f2)
        trace.f2_tilde.append(f2_tilde)
        trace.fro_norm.append((symlinalg.frobenius_norm(ms[0]),
                               symlinalg.frobenius_norm(ms[1])))
        if track_spectrum:
            eigs = []
            for k in (0, 1):
                val, vec = symlinalg.dominant_eigenpair(
                    ms[k], tol=1e-3, seed=cfg.seed, v0=eig_vecs[k],
                    strict=False)
                eig_vecs[k] = vec
                eigs.append(val)
            trace.max_eig.append((eigs[0], eigs[1]))
        if not freeze_prototypes:
            g = p.copy()
            g[idx, y] -= 1.0
            for k in (0, 1):
                grad_k = (2.0 / n) * (g[:, k] @ (Z - w[k])) @ ms[k]
                w[k] = w[k] - cfg.learning_rate * grad_k
    w.setflags(write=False)
    return QuadraticProbeParams.from_matrices(w, ms[0], ms[1]), trace


def loss_decomposition(params: QuadraticProbeParams,
                       support: Sequence[LabelledSample],
                       embeddings: EmbeddingSet
                       ) -> tuple[float, float, float, float]:
    """Split the support cross-entropy as ce = f1 + f2 and compute the
    log-det surrogate f2_tilde.

    f1 pulls same-class points toward their prototype, f2 is the
    log-sum-exp term that rewards unboundedly large precisions, and
    f2_tilde = -sum_k (|S_k|/|S|) log det M_k replaces it with logarithmic
    pressure.
    """
    Z, y = _support_arrays(support, embeddings)
    return _loss_decomposition_arrays(params, Z, y)


def _loss_decomposition_arrays(params: QuadraticProbeParams,
                               Z: np.ndarray, y: np.ndarray
                               ) -> tuple[float, float, float, float]:
    n = len(y)
    dists = _pair_distances(Z, params.w, params.m)
    idx = np.arange(n)
    f1 = float(np.mean(dists[idx, y]))
    shift = (-dists).max(axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(np.exp(-dists - shift).sum(axis=1))
    f2 = float(np.mean(lse))
    ce = f1 + f2
    counts = np.array([(y == 0).sum(), (y == 1).sum()], dtype=np.float64)
    log_det_m = np.array([params.factors[k].log_det for k in (0, 1)])
    f2_tilde = -float(np.dot(counts / n, log_det_m))
    return ce, f1, f2, f2_tilde


def modified_loss(params: QuadraticProbeParams,
                  support: Sequence[LabelledSample],
                  embeddings: EmbeddingSet) -> float:
    """f1 + f2_tilde: the surrogate objective with the closed-form minimizer.

    Minimizing it in the precisions with fixed prototypes is the Gaussian
    maximum-likelihood problem (up to additive constants dropped here), so
    the inverse empirical covariance is its stationary point.
    """
    ce, f1, f2, f2_tilde = loss_decomposition(params, support, embeddings)
    return f1 + f2_tilde


# ---------------------------------------------------------------------------
# Free optimization baselines


def free_opt_loss_and_grads(w: np.ndarray, d_factor: np.ndarray,
                            Z: np.ndarray, y: np.ndarray,
                            reg_weight: float = 0.0
                            ) -> tuple[float, np.ndarray, np.ndarray]:
    """Objective and analytic gradients for the free-optimization head.

    Objective: support cross-entropy of the quadratic head with
    M_k = D_k^T D_k, plus reg_weight * sum_k ||M_k||_F when regularized.
    Returns (objective, grad_w, grad_D).
    """
    n = len(y)
    ms = [d_factor[k].T @ d_factor[k] for k in (0, 1)]
    dists = _pair_distances(Z, w, ms)
    p = _softmax_pair(-dists)
    idx = np.arange(n)
    obj = -float(np.mean(np.log(p[idx, y])))
    g = p.copy()
    g[idx, y] -= 1.0
    grad_w = np.zeros_like(w)
    grad_d = np.zeros_like(d_factor)
    for k in (0, 1):
        u = Z - w[k]
        grad_w[k] = (2.0 / n) * (g[:, k] @ u) @ ms[k]
        weighted = u.T @ (g[:, k, None] * u)      # sum_i g_ik u_i u_i^T
        grad_d[k] = -(2.0 / n) * d_factor[k] @ weighted
    if reg_weight > 0.0:
        for k in (0, 1):
            norm = symlinalg.frobenius_norm(ms[k])
            obj += reg_weight * norm
            if norm > 0.0:
                grad_d[k] += reg_weight * 2.0 * d_factor[k] @ ms[k] / norm
    return obj, grad_w, grad_d


def free_opt_fit(support: Sequence[LabelledSample],
                 embeddings: EmbeddingSet,
                 cfg: TrainConfig,
                 regularized: bool = False,
                 track_spectrum: bool = True,
                 freeze_prototypes: bool = False
                 ) -> tuple[FreeOptParams, TrainTrace]:
    """Joint gradient descent on prototypes and precision square roots.

    D_k starts at the identity, so before any step the head coincides with
    the nearest-prototype softmax. The trace records the evolution of the
    precision spectrum, which diverges on separable data without the
    regularizer. ``freeze_prototypes`` keeps w_k at the class means and
    descends only on D_k, isolating the precision dynamics.
    """
    Z, y = _support_arrays(support, embeddings)
    return _free_opt_fit_arrays(Z, y, cfg, regularized, track_spectrum,
                                freeze_prototypes)


def _free_opt_fit_arrays(Z: np.ndarray, y: np.ndarray, cfg: TrainConfig,
                         regularized: bool = False,
                         track_spectrum: bool = True,
                         freeze_prototypes: bool = False
                         ) -> tuple[FreeOptParams, TrainTrace]:
    n, d = Z.shape
    w = _class_means(Z, y)
    d_factor = np.stack([np.eye(d), np.eye(d)])
    reg_weight = cfg.free_opt_reg_weight if regularized else 0.0
    counts = np.array([(y == 0).sum(), (y == 1).sum()], dtype=np.float64)
    trace = TrainTrace()
    eig_vecs: list[np.ndarray | None] = [None, None]
    idx = np.arange(n)
    for _ in range(cfg.epochs):
        ms = [d_factor[k].T @ d_factor[k] for k in (0, 1)]
        dists = _pair_distances(Z, w, ms)
        p = _softmax_pair(-dists)
        ce = -float(np.mean(np.log(p[idx, y])))
        f1 = float(np.mean(dists[idx, y]))
        trace.ce.append(ce)
        trace.f1.append(f1)
        trace.f2.append(ce - f1)
        log_det_m = np.array([np.linalg.slogdet(ms[k])[1] for k in (0, 1)])
        trace.f2_tilde.append(-float(np.dot(counts / n, log_det_m)))
        trace.fro_norm.append((symlinalg.frobenius_norm(ms[0]),
                               symlinalg.frobenius_norm(ms[1])))
        if track_spectrum:
            eigs = []
            for k in (0, 1):
                val, vec = symlinalg.dominant_eigenpair(
                    ms[k], tol=1e-3, seed=cfg.seed, v0=eig_vecs[k],
                    strict=False)
                eig_vecs[k] = vec
                eigs.append(val)
            trace.max_eig.append((eigs[0], eigs[1]))
        _, grad_w, grad_d = free_opt_loss_and_grads(w, d_factor, Z, y,
                                                    reg_weight)
        if not freeze_prototypes:
            w = w - cfg.learning_rate * grad_w
        d_factor = d_factor - cfg.learning_rate * grad_d
    w.setflags(write=False)
    d_factor.setflags(write=False)
    return FreeOptParams(w=w, d_factor=d_factor), trace


def free_opt_scores(params: FreeOptParams, Z: np.ndarray) -> np.ndarray:
    ms = [params.precision(k) for k in (0, 1)]
    dists = _pair_distances(Z, params.w, ms)
    return _softmax_pair(-dists)[:, 1]


# ---------------------------------------------------------------------------
# Simple baselines


def prototype_predict(support: Sequence[LabelledSample],
                      embeddings: EmbeddingSet,
                      z: np.ndarray) -> tuple[float, float]:
    """Softmax over negative squared Euclidean distances to class means."""
    Z, y = _support_arrays(support, embeddings)
    means = _class_means(Z, y)
    z = np.asarray(z, dtype=np.float64)
    dists = np.array([float(np.sum((z - means[k]) ** 2)) for k in (0, 1)])
    p = _softmax_pair(-dists[None, :])
    return float(p[0, 0]), float(p[0, 1])


def prototype_scores(support: Sequence[LabelledSample],
                     embeddings: EmbeddingSet,
                     Z: np.ndarray) -> np.ndarray:
    Zs, y = _support_arrays(support, embeddings)
    means = _class_means(Zs, y)
    dists = np.stack(
        [np.sum((Z - means[k]) ** 2, axis=1) for k in (0, 1)], axis=1
    )
    return _softmax_pair(-dists)[:, 1]


def tanimoto(a: BinaryFingerprint, b: BinaryFingerprint) -> float:
    """|a AND b| / |a OR b|; 0 by convention when both are all-zero."""
    if len(a) != len(b):
        raise LengthMismatch(f"fingerprint lengths {len(a)} != {len(b)}")
    inter = int(np.sum(a.bits & b.bits))
    union = int(np.sum(a.bits | b.bits))
    if union == 0:
        return 0.0
    return inter / union


def simsearch_score(support: Sequence[LabelledSample],
                    fingerprints: dict[str, BinaryFingerprint],
                    query_fp: BinaryFingerprint) -> float:
    """Max Tanimoto similarity to the positive support samples."""
    positives = [s for s in support if s.label == 1]
    if not positives:
        raise ValueError("similarity search needs at least one positive")
    return max(tanimoto(query_fp, fingerprints[s.id]) for s in positives)


def knn_score(support: Sequence[LabelledSample],
              features: dict[str, np.ndarray | BinaryFingerprint],
              query_feature: np.ndarray | BinaryFingerprint,
              k: int) -> float:
    """Positive fraction among the k nearest support samples.

    Distance is 1 - Tanimoto for fingerprints and Euclidean for embedding
    vectors; ties are broken by ascending sample id.
    """
    if k > len(support):
        raise KTooLarge(f"k={k} exceeds support size {len(support)}")
    if isinstance(query_feature, BinaryFingerprint):
        dist = {
            s.id: 1.0 - tanimoto(query_feature, features[s.id])
            for s in support
        }
    else:
        q = np.asarray(query_feature, dtype=np.float64)
        dist = {
            s.id: float(np.linalg.norm(q - np.asarray(features[s.id])))
            for s in support
        }
    ordered = sorted(support, key=lambda s: (dist[s.id], s.id))
    return sum(s.label for s in ordered[:k]) / k
