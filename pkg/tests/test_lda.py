import json

import numpy as np
import pytest

from p300bench.lda import ShrinkageLda, ledoit_wolf


def ledoit_wolf_oracle(X):
    """Loop-based restatement of the shrinkage formulas (independent path)."""
    n, p = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    S = np.zeros((p, p))
    for i in range(n):
        S += np.outer(Xc[i], Xc[i])
    S /= n
    m = np.trace(S) / p
    d2 = ((S - m * np.eye(p)) ** 2).sum() / p
    if d2 < 1e-15:
        return S, 0.0, m
    total = 0.0
    for i in range(n):
        total += ((np.outer(Xc[i], Xc[i]) - S) ** 2).sum()
    b2 = min(d2, total / (n * n) / p)
    rho = b2 / d2
    return rho * m * np.eye(p) + (1 - rho) * S, rho, m


class TestLedoitWolf:
    def test_identity_sample_covariance_gives_zero_shrinkage(self):
        # four points whose sample covariance is exactly the identity
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]) * np.sqrt(2)
        est = ledoit_wolf(X)
        assert est.intensity == 0.0
        assert np.allclose(est.covariance, np.eye(2))

    def test_three_point_formula_oracle(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]])
        est = ledoit_wolf(X)
        cov_expect, rho_expect, m_expect = ledoit_wolf_oracle(X)
        assert abs(est.intensity - rho_expect) < 1e-12
        assert abs(est.target_scale - m_expect) < 1e-12
        assert np.abs(est.covariance - cov_expect).max() < 1e-12

    def test_matches_oracle_on_random_instances(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 30))
            p = int(rng.integers(1, 8))
            X = rng.normal(0, rng.uniform(0.5, 3.0), size=(n, p))
            est = ledoit_wolf(X)
            cov_expect, rho_expect, _ = ledoit_wolf_oracle(X)
            assert 0.0 <= est.intensity <= 1.0
            assert abs(est.intensity - rho_expect) < 1e-12
            assert np.abs(est.covariance - cov_expect).max() < 1e-12

    def test_shrinkage_vanishes_asymptotically(self):
        gen = np.random.Generator(np.random.PCG64(5))
        X = gen.normal(size=(10_000, 2)) * np.array([2.0, 1.0])
        assert ledoit_wolf(X).intensity <= 0.05

    def test_shrunk_smallest_eigenvalue_never_below_sample(self, rng):
        # shrinking toward m*I can only lift the smallest eigenvalue
        for _ in range(20):
            X = rng.normal(size=(8, 5))
            est = ledoit_wolf(X)
            S = np.cov(X.T, bias=True)
            lo_s = np.linalg.eigvalsh(S).min()
            lo_shrunk = np.linalg.eigvalsh(est.covariance).min()
            assert lo_shrunk >= (1 - est.intensity) * lo_s - 1e-12

    def test_insufficient_samples(self):
        with pytest.raises(ValueError, match="insufficient samples"):
            ledoit_wolf(np.ones((1, 3)))

    def test_agrees_with_sklearn(self, rng):
        sklearn = pytest.importorskip("sklearn.covariance")
        X = rng.normal(size=(40, 6)) @ rng.normal(size=(6, 6))
        est = ledoit_wolf(X)
        cov_sk, rho_sk = sklearn.ledoit_wolf(X)
        assert abs(est.intensity - rho_sk) < 1e-10
        assert np.abs(est.covariance - cov_sk).max() < 1e-10


def blobs(rng, n=200, delta=(2.0, 0.0), cov0=None, cov1=None):
    cov0 = np.eye(2) if cov0 is None else cov0
    cov1 = np.eye(2) if cov1 is None else cov1
    half = n // 2
    X0 = rng.multivariate_normal(-np.asarray(delta) / 2, cov0, size=half)
    X1 = rng.multivariate_normal(np.asarray(delta) / 2, cov1, size=half)
    X = np.vstack([X0, X1])
    y = np.array([0] * half + [1] * half)
    return X, y


class TestShrinkageLda:
    def test_symmetric_blobs_give_axis_direction(self, rng):
        X, y = blobs(rng, n=4000)
        model = ShrinkageLda().fit(X, y)
        w = model.weights_ / np.linalg.norm(model.weights_)
        assert abs(w[0]) > 0.99  # direction ~ (1, 0)
        assert abs(model.bias_) < 0.2  # boundary near x1 = 0

    def test_closed_form_two_dimensional_oracle(self, rng):
        X, y = blobs(
            rng,
            n=60,
            delta=(1.0, 2.0),
            cov0=np.array([[2.0, 0.3], [0.3, 0.5]]),
            cov1=np.array([[1.0, -0.2], [-0.2, 1.5]]),
        )
        model = ShrinkageLda().fit(X, y)
        mu0, mu1 = X[y == 0].mean(axis=0), X[y == 1].mean(axis=0)
        centered = X.copy()
        centered[y == 0] -= mu0
        centered[y == 1] -= mu1
        cov_o, rho_o, _ = ledoit_wolf_oracle_centered(centered)
        w_expect = np.linalg.solve(cov_o, mu1 - mu0)
        assert np.abs(model.weights_ - w_expect).max() < 1e-10
        assert abs(model.shrinkage_ - rho_o) < 1e-12

    def test_midpoint_scores_zero_with_equal_priors(self, rng):
        X, y = blobs(rng, n=100, delta=(3.0, 1.0))
        model = ShrinkageLda().fit(X, y)
        midpoint = (model.class_means_[0] + model.class_means_[1]) / 2.0
        assert model.decision_function(midpoint[None, :])[0] == pytest.approx(0.0, abs=1e-10)

    def test_score_is_affine(self, rng):
        X, y = blobs(rng)
        model = ShrinkageLda().fit(X, y)
        x = rng.normal(size=(1, 2))
        s0 = model.decision_function(np.zeros((1, 2)))[0]
        s1 = model.decision_function(x)[0]
        s3 = model.decision_function(3.0 * x)[0]
        assert s3 - s0 == pytest.approx(3.0 * (s1 - s0), rel=1e-10)

    def test_well_separated_blobs_holdout_accuracy(self, rng):
        X, y = blobs(rng, n=400, delta=(4.0, 0.0))
        Xh, yh = blobs(rng, n=200, delta=(4.0, 0.0))
        model = ShrinkageLda().fit(X, y)
        assert (model.predict(Xh) == yh).mean() >= 0.95

    def test_translation_invariance_of_predictions(self, rng):
        X, y = blobs(rng, n=100)
        shift = rng.normal(size=2) * 10
        a = ShrinkageLda().fit(X, y).predict(X)
        b = ShrinkageLda().fit(X + shift, y).predict(X + shift)
        assert np.array_equal(a, b)

    def test_forced_zero_shrinkage_equals_classic_lda(self, rng):
        X, y = blobs(rng, n=40, delta=(1.5, 0.5))
        model = ShrinkageLda(shrinkage=0.0).fit(X, y)
        mu0, mu1 = X[y == 0].mean(axis=0), X[y == 1].mean(axis=0)
        centered = X.copy()
        centered[y == 0] -= mu0
        centered[y == 1] -= mu1
        S = centered.T @ centered / len(y)
        w_classic = np.linalg.solve(S, mu1 - mu0)
        assert np.abs(model.weights_ - w_classic).max() < 1e-8

    def test_priors_enter_bias(self, rng):
        X, y = blobs(rng, n=100)
        X_unbal = np.vstack([X[y == 0], X[y == 1][:10]])
        y_unbal = np.array([0] * 50 + [1] * 10)
        model = ShrinkageLda().fit(X_unbal, y_unbal)
        assert np.allclose(model.priors_, [50 / 60, 10 / 60])

    def test_single_class_rejected(self, rng):
        X = rng.normal(size=(10, 2))
        with pytest.raises(ValueError, match="two classes"):
            ShrinkageLda().fit(X, np.ones(10))

    def test_dimension_mismatch(self, rng):
        X, y = blobs(rng)
        model = ShrinkageLda().fit(X, y)
        with pytest.raises(ValueError, match="dimension mismatch"):
            model.decision_function(rng.normal(size=(5, 3)))

    def test_json_round_trip(self, rng):
        X, y = blobs(rng)
        model = ShrinkageLda().fit(X, y)
        clone = ShrinkageLda.from_json(model.to_json())
        assert np.array_equal(clone.decision_function(X), model.decision_function(X))
        doc = json.loads(model.to_json())
        assert doc["format"] == "p300bench-lda"


def ledoit_wolf_oracle_centered(Xc):
    """Oracle over pre-centered rows (pooled within-class use)."""
    n, p = Xc.shape
    S = np.zeros((p, p))
    for i in range(n):
        S += np.outer(Xc[i], Xc[i])
    S /= n
    m = np.trace(S) / p
    d2 = ((S - m * np.eye(p)) ** 2).sum() / p
    if d2 < 1e-15:
        return S, 0.0, m
    total = 0.0
    for i in range(n):
        total += ((np.outer(Xc[i], Xc[i]) - S) ** 2).sum()
    b2 = min(d2, total / (n * n) / p)
    rho = b2 / d2
    return rho * m * np.eye(p) + (1 - rho) * S, rho, m
