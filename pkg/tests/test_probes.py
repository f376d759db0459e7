import math

import numpy as np
import pytest

from fewprobe.core import (BinaryFingerprint, EmbeddingSet, LabelledSample,
                           TrainConfig)
from fewprobe.errors import KTooLarge, LengthMismatch
from fewprobe import probes, symlinalg, synth
from fewprobe.probes import (
    FreeOptParams,
    free_opt_fit,
    free_opt_loss_and_grads,
    knn_score,
    linear_ce_and_grads,
    linear_probe_fit,
    linear_probe_predict,
    linear_probe_scores,
    loss_decomposition,
    modified_loss,
    prototype_predict,
    prototype_scores,
    quadratic_ce_and_wgrad,
    quadratic_probe_fit,
    quadratic_probe_predict,
    quadratic_probe_scores,
    simsearch_score,
    tanimoto,
    QuadraticProbeParams,
    LinearProbeParams,
)

import oracles
from conftest import make_blobs


def fp(bits_string: str) -> BinaryFingerprint:
    return BinaryFingerprint(
        bits=np.array([int(c) for c in bits_string], dtype=np.uint8))


# ---------------------------------------------------------------------------
# Linear probe


class TestLinearProbePredict:
    def test_symmetric_logits(self):
        w = np.stack([np.array([1.0, 0.0]), np.array([1.0, 0.0])])
        params = LinearProbeParams(w=w, b=np.zeros(2), tau=3.0)
        p0, p1 = linear_probe_predict(params, np.array([0.5, 0.5]))
        assert p0 == pytest.approx(0.5, abs=1e-15)
        assert p1 == pytest.approx(0.5, abs=1e-15)

    def test_orthogonal_unit_example(self):
        # [DERIVED] logits (0, 1) at tau=1 -> p1 = e / (1 + e)
        w = np.stack([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
        params = LinearProbeParams(w=w, b=np.zeros(2), tau=1.0)
        _, p1 = linear_probe_predict(params, np.array([0.0, 1.0]))
        assert p1 == pytest.approx(math.e / (1.0 + math.e), abs=1e-12)

    def test_temperature_sharpening_monotone(self):
        w = np.stack([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
        z = np.array([0.1, 0.9])
        z = z / np.linalg.norm(z)
        last = 0.5
        for tau in (1.0, 5.0, 25.0):
            _, p1 = linear_probe_predict(
                LinearProbeParams(w=w, b=np.zeros(2), tau=tau), z)
            assert p1 > last
            last = p1
        _, p_hot = linear_probe_predict(
            LinearProbeParams(w=w, b=np.zeros(2), tau=1000.0), z)
        assert p_hot > 1.0 - 1e-9


class TestLinearProbeFit:
    def test_descent_on_separable_instance(self):
        emb, support = make_blobs(d=4, n_per_class=8, seed=1)
        _, trace = linear_probe_fit(support, emb,
                                    TrainConfig(epochs=50, temperature=1.0))
        assert trace.ce[-1] < trace.ce[0]
        assert trace.ce[-1] < math.log(2.0)

    def test_identical_embeddings_stay_at_chance(self):
        z = np.array([0.6, 0.8])
        emb = EmbeddingSet.from_vectors({f"s{i}": z for i in range(4)})
        support = [LabelledSample("s0", 0), LabelledSample("s1", 1),
                   LabelledSample("s2", 0), LabelledSample("s3", 1)]
        _, trace = linear_probe_fit(support, emb, TrainConfig(epochs=50))
        assert min(trace.ce) >= math.log(2.0) - 1e-6

    def test_matches_logistic_regression_oracle(self):
        # [DERIVED] oracle: off-the-shelf convex logistic regression solver
        from sklearn.linear_model import LogisticRegression

        emb, samples = make_blobs(d=16, n_per_class=8 + 100, seed=2)
        support = ([s for s in samples if s.label == 0][:8]
                   + [s for s in samples if s.label == 1][:8])
        query = ([s for s in samples if s.label == 0][8:]
                 + [s for s in samples if s.label == 1][8:])
        params, _ = linear_probe_fit(support, emb,
                                     TrainConfig(epochs=300))
        Q = emb.matrix([q.id for q in query])
        qy = np.array([q.label for q in query])
        acc = float(np.mean((linear_probe_scores(params, Q) > 0.5) == qy))
        assert acc > 0.9

        Zs = emb.matrix([s.id for s in support])
        ys = np.array([s.label for s in support])
        clf = LogisticRegression(C=1e6, max_iter=5000).fit(Zs, ys)
        oracle_acc = float(np.mean(clf.predict(Q) == qy))
        assert abs(acc - oracle_acc) <= 0.05


# ---------------------------------------------------------------------------
# Quadratic probe


class TestQuadraticProbePredict:
    def test_equidistant(self):
        w = np.stack([np.array([1.0, 0.0]), np.array([-1.0, 0.0])])
        params = QuadraticProbeParams.from_matrices(w, np.eye(2), np.eye(2))
        p0, p1 = quadratic_probe_predict(params, np.array([0.0, 1.0]))
        assert p0 == pytest.approx(0.5, abs=1e-14)
        assert p1 == pytest.approx(0.5, abs=1e-14)

    def test_identity_reduces_to_prototype_softmax(self):
        rng = np.random.default_rng(13)
        w = rng.standard_normal((2, 4))
        params = QuadraticProbeParams.from_matrices(w, np.eye(4), np.eye(4))
        for _ in range(20):
            z = rng.standard_normal(4)
            expected = oracles.euclid_proto_probs(z, w)
            got = quadratic_probe_predict(params, z)
            assert got[0] == pytest.approx(expected[0], abs=1e-12)
            assert got[1] == pytest.approx(expected[1], abs=1e-12)

    def test_hand_expanded_example(self):
        # [DERIVED] distances 0.25 and 1.0 -> p0 = 1 / (1 + e^{-0.75})
        w = np.stack([np.zeros(2), np.array([1.0, 0.0])])
        params = QuadraticProbeParams.from_matrices(
            w, np.eye(2), np.diag([4.0, 1.0]))
        p0, _ = quadratic_probe_predict(params, np.array([0.5, 0.0]))
        assert p0 == pytest.approx(1.0 / (1.0 + math.exp(-0.75)), abs=1e-12)


class TestQuadraticProbeFit:
    def test_full_shrinkage_keeps_identity_precision(self):
        emb, support = make_blobs(d=4, n_per_class=6, seed=3)
        cfg = TrainConfig(epochs=7, shrinkage_lambda=1.0)
        params, _ = quadratic_probe_fit(support, emb, cfg)
        np.testing.assert_array_equal(params.m[0], np.eye(4))
        np.testing.assert_array_equal(params.m[1], np.eye(4))
        rng = np.random.default_rng(0)
        for _ in range(10):
            z = rng.standard_normal(4)
            expected = oracles.euclid_proto_probs(z, params.w)
            got = quadratic_probe_predict(params, z)
            assert got[1] == pytest.approx(expected[1], abs=1e-12)

    def test_ce_monotone_early_epochs(self):
        # well-separated isotropic classes: descent observed empirically
        emb, support = make_blobs(d=8, n_per_class=16, seed=4,
                                  separation=2.0, scale=0.3)
        _, trace = quadratic_probe_fit(support, emb, TrainConfig(epochs=10))
        diffs = np.diff(trace.ce)
        assert np.all(diffs <= 1e-6)

    def test_anisotropic_advantage_over_linear(self):
        # [DERIVED] generator with a quadratic Bayes boundary
        spec = synth.SyntheticSpec(d=16, n_per_class=300, n_tasks=1,
                                   generator="rotated", separation=2.0,
                                   scale=5.0, condition_number=100.0, seed=21)
        st = synth.make_task(spec, 0)
        emb = EmbeddingSet.from_vectors(st.vectors)
        samples = st.task.labelled_samples()
        pos = [s for s in samples if s.label == 1]
        neg = [s for s in samples if s.label == 0]
        support = pos[:64] + neg[:64]
        query = pos[64:] + neg[64:]
        Q = emb.matrix([q.id for q in query])
        qy = np.array([q.label for q in query])
        cfg = TrainConfig(epochs=100)
        lp, _ = linear_probe_fit(support, emb, cfg)
        qp, _ = quadratic_probe_fit(support, emb, cfg, track_spectrum=False)
        from fewprobe.metrics import ScoredQuery, average_precision
        ap_l = average_precision(ScoredQuery(
            scores=linear_probe_scores(lp, Q), labels=qy))
        ap_q = average_precision(ScoredQuery(
            scores=quadratic_probe_scores(qp, Q), labels=qy))
        assert ap_q > ap_l

    def test_shrinkage_caps_spectrum(self):
        emb, support = make_blobs(d=8, n_per_class=16, seed=5)
        cfg = TrainConfig(epochs=20, shrinkage_lambda=0.2)
        _, trace = quadratic_probe_fit(support, emb, cfg)
        for e0, e1 in trace.max_eig:
            assert max(e0, e1) <= 1.0 / 0.2 + 1e-6


# ---------------------------------------------------------------------------
# Loss decomposition and the surrogate


def _random_quadratic_params(rng, d):
    w = rng.standard_normal((2, d))
    mats = []
    for _ in range(2):
        a = rng.standard_normal((d, d))
        mats.append(a @ a.T + 0.3 * np.eye(d))
    return QuadraticProbeParams.from_matrices(w, mats[0], mats[1])


class TestLossDecomposition:
    def test_identity_precision_zero_f2_tilde(self, blob_instance):
        emb, support = blob_instance
        Z = emb.matrix([s.id for s in support])
        y = np.array([s.label for s in support])
        w = np.stack([Z[y == k].mean(axis=0) for k in (0, 1)])
        params = QuadraticProbeParams.from_matrices(w, np.eye(8), np.eye(8))
        _, _, _, f2_tilde = loss_decomposition(params, support, emb)
        assert f2_tilde == pytest.approx(0.0, abs=1e-12)

    def test_sample_at_prototype_contributes_zero_f1(self):
        emb = EmbeddingSet.from_vectors({"p": [1.0, 0.0], "n": [0.0, 1.0]})
        support = [LabelledSample("p", 1), LabelledSample("n", 0)]
        w = np.stack([emb.vector("n"), emb.vector("p")])
        params = QuadraticProbeParams.from_matrices(w, np.eye(2), np.eye(2))
        _, f1, _, _ = loss_decomposition(params, support, emb)
        assert f1 == pytest.approx(0.0, abs=1e-14)

    def test_ce_equals_f1_plus_f2(self, blob_instance):
        emb, support = blob_instance
        rng = np.random.default_rng(14)
        for _ in range(200):
            params = _random_quadratic_params(rng, 8)
            ce, f1, f2, _ = loss_decomposition(params, support, emb)
            assert ce == pytest.approx(f1 + f2, abs=1e-8)


class TestModifiedLoss:
    def test_full_shrink_equals_mean_squared_euclid(self, blob_instance):
        emb, support = blob_instance
        Z = emb.matrix([s.id for s in support])
        y = np.array([s.label for s in support])
        w = np.stack([Z[y == k].mean(axis=0) for k in (0, 1)])
        params = QuadraticProbeParams.from_matrices(w, np.eye(8), np.eye(8))
        expected = float(np.mean(np.sum((Z - w[y]) ** 2, axis=1)))
        assert modified_loss(params, support, emb) == pytest.approx(
            expected, abs=1e-12)

    def test_gaussian_mle_identity_on_differences(self, blob_instance):
        # [DERIVED] oracle: independent Gaussian log-pdf with covariance
        # M^{-1}. The head's exponent lacks the Gaussian's 1/2, so the
        # surrogate differs from the negative log-likelihood by the dropped
        # constant AND a global factor 2: delta(modified) = 2 * delta(NLL).
        emb, support = blob_instance
        Z = emb.matrix([s.id for s in support])
        y = np.array([s.label for s in support])
        rng = np.random.default_rng(15)

        def nll(params):
            total = 0.0
            for i in range(len(y)):
                k = y[i]
                cov = np.linalg.inv(params.m[k])
                total -= oracles.gaussian_logpdf(Z[i], params.w[k], cov)
            return total / len(y)

        p1 = _random_quadratic_params(rng, 8)
        p2 = _random_quadratic_params(rng, 8)
        delta_modified = (modified_loss(p1, support, emb)
                          - modified_loss(p2, support, emb))
        delta_nll = nll(p1) - nll(p2)
        assert delta_modified == pytest.approx(2.0 * delta_nll, abs=1e-8)

    def test_closed_form_precision_is_stationary(self):
        # lambda=0, |S_k| > d: the inverse empirical covariance is a
        # stationary point of f1 + f2_tilde in the precisions.
        d = 5
        emb, support = make_blobs(d=d, n_per_class=4 * d, seed=6)
        Z = emb.matrix([s.id for s in support])
        y = np.array([s.label for s in support])
        w = np.stack([Z[y == k].mean(axis=0) for k in (0, 1)])
        ms = []
        for k in (0, 1):
            cov = symlinalg.empirical_covariance(Z[y == k], w[k])
            ms.append(symlinalg.spd_inverse(symlinalg.spd_factorize(cov)))
        base = QuadraticProbeParams.from_matrices(w, ms[0], ms[1])
        base_loss = modified_loss(base, support, emb)
        rng = np.random.default_rng(16)
        h = 1e-5
        for _ in range(100):
            k = rng.integers(0, 2)
            s = rng.standard_normal((d, d))
            s = (s + s.T) / 2.0
            s /= symlinalg.frobenius_norm(s)
            perturbed = [m.copy() for m in ms]
            perturbed[k] = ms[k] + h * s
            plus = modified_loss(QuadraticProbeParams.from_matrices(
                w, perturbed[0], perturbed[1]), support, emb)
            perturbed[k] = ms[k] - h * s
            minus = modified_loss(QuadraticProbeParams.from_matrices(
                w, perturbed[0], perturbed[1]), support, emb)
            assert abs((plus - minus) / (2.0 * h)) <= 1e-6
        assert np.isfinite(base_loss)


# ---------------------------------------------------------------------------
# Gradients (spot checks; the full sweep lives in the acceptance suite)


class TestGradients:
    def test_linear_gradients_match_finite_differences(self):
        rng = np.random.default_rng(17)
        d = 8
        emb, support = make_blobs(d=d, n_per_class=5, seed=7)
        Z = emb.matrix([s.id for s in support])
        y = np.array([s.label for s in support])
        w = rng.standard_normal((2, d))
        b = rng.standard_normal(2)
        _, grad_w, grad_b = linear_ce_and_grads(w, b, 3.0, Z, y)
        dw = rng.standard_normal((2, d))
        fd = oracles.central_difference(
            lambda flat: linear_ce_and_grads(
                flat.reshape(2, d), b, 3.0, Z, y)[0],
            w.ravel(), dw.ravel())
        assert fd == pytest.approx(float(np.sum(grad_w * dw)), rel=1e-5)
        db = rng.standard_normal(2)
        fd_b = oracles.central_difference(
            lambda bb: linear_ce_and_grads(w, bb, 3.0, Z, y)[0], b, db)
        assert fd_b == pytest.approx(float(np.sum(grad_b * db)), rel=1e-5)

    def test_quadratic_w_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(18)
        d = 6
        emb, support = make_blobs(d=d, n_per_class=5, seed=8)
        Z = emb.matrix([s.id for s in support])
        y = np.array([s.label for s in support])
        w = rng.standard_normal((2, d))
        mats = []
        for _ in range(2):
            a = rng.standard_normal((d, d))
            mats.append(a @ a.T + 0.2 * np.eye(d))
        _, grad_w = quadratic_ce_and_wgrad(w, mats, Z, y)
        dw = rng.standard_normal((2, d))
        fd = oracles.central_difference(
            lambda flat: quadratic_ce_and_wgrad(
                flat.reshape(2, d), mats, Z, y)[0],
            w.ravel(), dw.ravel())
        assert fd == pytest.approx(float(np.sum(grad_w * dw)), rel=1e-5)

    def test_free_opt_gradients_match_finite_differences(self):
        rng = np.random.default_rng(19)
        d = 5
        emb, support = make_blobs(d=d, n_per_class=5, seed=9)
        Z = emb.matrix([s.id for s in support])
        y = np.array([s.label for s in support])
        w = rng.standard_normal((2, d))
        d_factor = rng.standard_normal((2, d, d))
        for reg in (0.0, 0.05):
            _, grad_w, grad_d = free_opt_loss_and_grads(w, d_factor, Z, y, reg)
            dv = rng.standard_normal((2, d, d))
            fd = oracles.central_difference(
                lambda flat: free_opt_loss_and_grads(
                    w, flat.reshape(2, d, d), Z, y, reg)[0],
                d_factor.ravel(), dv.ravel())
            assert fd == pytest.approx(float(np.sum(grad_d * dv)), rel=1e-4)
            dw = rng.standard_normal((2, d))
            fd_w = oracles.central_difference(
                lambda flat: free_opt_loss_and_grads(
                    flat.reshape(2, d), d_factor, Z, y, reg)[0],
                w.ravel(), dw.ravel())
            assert fd_w == pytest.approx(float(np.sum(grad_w * dw)), rel=1e-4)


# ---------------------------------------------------------------------------
# Free optimization baselines


class TestFreeOpt:
    def test_identity_init_equals_prototype_softmax(self, blob_instance):
        emb, support = blob_instance
        Z = emb.matrix([s.id for s in support])
        y = np.array([s.label for s in support])
        means = np.stack([Z[y == k].mean(axis=0) for k in (0, 1)])
        params = FreeOptParams(w=means, d_factor=np.stack([np.eye(8)] * 2))
        rng = np.random.default_rng(20)
        Q = rng.standard_normal((10, 8))
        got = probes.free_opt_scores(params, Q)
        expected = prototype_scores(support, emb, Q)
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_unregularized_spectrum_diverges(self):
        # [DERIVED] empirical divergence threshold, calibrated on this
        # instance: prototypes frozen at the class means so all descent
        # pressure lands on the precision factors.
        emb, support = synth.separable_instance(d=64, n_per_class=16, seed=0)
        cfg = TrainConfig(epochs=2000, learning_rate=0.1)
        _, trace = free_opt_fit(support, emb, cfg, freeze_prototypes=True)
        me = [max(a, b) for a, b in trace.max_eig]
        assert me[-1] / me[100] >= 5.0
        assert trace.ce[-1] < 1e-2

    def test_regularized_spectrum_stays_bounded(self):
        emb, support = synth.separable_instance(d=64, n_per_class=16, seed=0)
        cfg = TrainConfig(epochs=2000, learning_rate=0.1)
        _, trace = free_opt_fit(support, emb, cfg, regularized=True,
                                freeze_prototypes=True)
        me = [max(a, b) for a, b in trace.max_eig]
        assert me[-1] < 10.0 * me[10]


# ---------------------------------------------------------------------------
# Simple baselines


class TestPrototype:
    def test_equidistant(self):
        emb = EmbeddingSet.from_vectors({"p": [1.0, 0.0], "n": [-1.0, 0.0]})
        support = [LabelledSample("p", 1), LabelledSample("n", 0)]
        p0, p1 = prototype_predict(support, emb, np.array([0.0, 1.0]))
        assert p0 == pytest.approx(0.5, abs=1e-14)
        assert p1 == pytest.approx(0.5, abs=1e-14)

    def test_at_positive_mean(self):
        emb = EmbeddingSet.from_vectors({"p": [1.0, 0.0], "n": [-1.0, 0.0]})
        support = [LabelledSample("p", 1), LabelledSample("n", 0)]
        _, p1 = prototype_predict(support, emb, emb.vector("p"))
        assert p1 > 0.5

    def test_matches_identity_quadratic(self, blob_instance):
        emb, support = blob_instance
        Z = emb.matrix([s.id for s in support])
        y = np.array([s.label for s in support])
        means = np.stack([Z[y == k].mean(axis=0) for k in (0, 1)])
        params = QuadraticProbeParams.from_matrices(means, np.eye(8),
                                                    np.eye(8))
        rng = np.random.default_rng(21)
        for _ in range(10):
            z = rng.standard_normal(8)
            a = prototype_predict(support, emb, z)
            b = quadratic_probe_predict(params, z)
            assert a[0] == pytest.approx(b[0], abs=1e-12)
            assert a[1] == pytest.approx(b[1], abs=1e-12)


class TestTanimoto:
    def test_identical(self):
        assert tanimoto(fp("1010"), fp("1010")) == 1.0

    def test_disjoint(self):
        assert tanimoto(fp("1100"), fp("0011")) == 0.0

    def test_third(self):
        assert tanimoto(fp("1100"), fp("1010")) == pytest.approx(1.0 / 3.0)

    def test_both_empty(self):
        assert tanimoto(fp("0000"), fp("0000")) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            tanimoto(fp("10"), fp("100"))


class TestSimsearch:
    def test_identical_to_positive(self):
        fps = {"p": fp("1100"), "n": fp("0011")}
        support = [LabelledSample("p", 1), LabelledSample("n", 0)]
        assert simsearch_score(support, fps, fp("1100")) == 1.0

    def test_disjoint_from_positives(self):
        fps = {"p": fp("1100"), "n": fp("0011")}
        support = [LabelledSample("p", 1), LabelledSample("n", 0)]
        assert simsearch_score(support, fps, fp("0011")) == 0.0

    def test_max_over_positives(self):
        # [DERIVED] 1000 vs 1100 = 1/2, 1000 vs 0011 = 0 -> max = 0.5
        fps = {"a": fp("1100"), "b": fp("0011"), "n": fp("0001")}
        support = [LabelledSample("a", 1), LabelledSample("b", 1),
                   LabelledSample("n", 0)]
        assert simsearch_score(support, fps, fp("1000")) == 0.5


class TestKnn:
    def test_k_equals_support_size(self):
        feats = {"a": np.array([0.0, 1.0]), "b": np.array([1.0, 0.0]),
                 "c": np.array([0.5, 0.5])}
        support = [LabelledSample("a", 1), LabelledSample("b", 0),
                   LabelledSample("c", 1)]
        assert knn_score(support, feats, np.array([9.0, 9.0]), 3
                         ) == pytest.approx(2.0 / 3.0)

    def test_exact_match_k1(self):
        feats = {"a": np.array([0.0, 1.0]), "b": np.array([1.0, 0.0])}
        support = [LabelledSample("a", 1), LabelledSample("b", 0)]
        assert knn_score(support, feats, np.array([0.0, 1.0]), 1) == 1.0

    def test_two_nearest_negatives(self):
        # [DERIVED] nearest two to (1,0) are b and c, both negative
        feats = {"a": np.array([0.0, 1.0]), "b": np.array([1.0, 0.0]),
                 "c": np.array([0.9, 0.1])}
        support = [LabelledSample("a", 1), LabelledSample("b", 0),
                   LabelledSample("c", 0)]
        assert knn_score(support, feats, np.array([1.0, 0.0]), 2) == 0.0

    def test_k_too_large(self):
        feats = {"a": np.array([0.0, 1.0]), "b": np.array([1.0, 0.0])}
        support = [LabelledSample("a", 1), LabelledSample("b", 0)]
        with pytest.raises(KTooLarge):
            knn_score(support, feats, np.array([0.0, 1.0]), 3)


# ---------------------------------------------------------------------------
# Cross-cutting invariants


def _swap_labels(support):
    return [LabelledSample(s.id, 1 - s.label) for s in support]


class TestLabelSwapSymmetry:
    def test_fitted_probes_swap(self, blob_instance):
        emb, support = blob_instance
        swapped = _swap_labels(support)
        cfg = TrainConfig(epochs=15)
        rng = np.random.default_rng(22)
        Q = rng.standard_normal((6, 8))

        lp_a, _ = linear_probe_fit(support, emb, cfg)
        lp_b, _ = linear_probe_fit(swapped, emb, cfg)
        np.testing.assert_allclose(linear_probe_scores(lp_a, Q),
                                   1.0 - linear_probe_scores(lp_b, Q),
                                   atol=1e-12)

        qp_a, _ = quadratic_probe_fit(support, emb, cfg,
                                      track_spectrum=False)
        qp_b, _ = quadratic_probe_fit(swapped, emb, cfg,
                                      track_spectrum=False)
        np.testing.assert_allclose(quadratic_probe_scores(qp_a, Q),
                                   1.0 - quadratic_probe_scores(qp_b, Q),
                                   atol=1e-12)

        fo_a, _ = free_opt_fit(support, emb, cfg, track_spectrum=False)
        fo_b, _ = free_opt_fit(swapped, emb, cfg, track_spectrum=False)
        np.testing.assert_allclose(probes.free_opt_scores(fo_a, Q),
                                   1.0 - probes.free_opt_scores(fo_b, Q),
                                   atol=1e-12)

        np.testing.assert_allclose(prototype_scores(support, emb, Q),
                                   1.0 - prototype_scores(swapped, emb, Q),
                                   atol=1e-12)


def test_fit_determinism_bit_identical(blob_instance):
    emb, support = blob_instance
    cfg = TrainConfig(epochs=10, seed=7)
    for fit in (linear_probe_fit, quadratic_probe_fit, free_opt_fit):
        _, t1 = fit(support, emb, cfg)
        _, t2 = fit(support, emb, cfg)
        assert t1.ce == t2.ce
        assert t1.fro_norm == t2.fro_norm
        assert t1.max_eig == t2.max_eig
