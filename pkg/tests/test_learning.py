import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.special import expit

from eigencap import learning, sampling, simcore, spectral
from eigencap.learning import GaussianMixture

GOLDEN = json.loads((Path(__file__).parent / "golden" / "bayes_rate.json").read_text())


def demo_spec(L=6, seed=0):
    return simcore.random_encoding("circuit", L, math.pi / 2, seed=seed)


class TestTask:
    def test_balanced_and_in_range(self):
        t = learning.make_task(seed=3)
        for which in ("train", "test"):
            u, y = t.arrays(which)
            assert len(u) == 150 and abs(y.sum() - (len(y) - y.sum())) <= 1
            assert (np.abs(u) <= 1).all()

    def test_permutation_resplits_pool(self):
        t = learning.make_task(seed=3)
        p = t.permuted(4)
        assert sorted(t.train + t.test) == sorted(p.train + p.test)
        assert t.train != p.train

    def test_mixture_pdf_normalized(self):
        from scipy.integrate import quad
        for p in (learning.DEMO_P0, learning.DEMO_P1):
            assert quad(p.pdf, -1, 1, points=list(p.means))[0] == pytest.approx(1, abs=1e-9)

    def test_rejects_bad_mixture(self):
        with pytest.raises(ValueError):
            GaussianMixture((1.0,), (0.0,), (0.0,))


class TestLogistic:
    def test_separable(self):
        u = np.linspace(-1, 1, 40)
        X = np.column_stack([np.ones_like(u), u])
        y = (u > 0.1).astype(int)
        fit = learning.logistic_train(X, y)
        assert learning.accuracy(X, y, fit.weights) == 1.0

    def test_single_class(self):
        X = np.column_stack([np.ones(30), np.linspace(-1, 1, 30)])
        for c in (0, 1):
            fit = learning.logistic_train(X, np.full(30, c))
            assert learning.accuracy(X, np.full(30, c), fit.weights) == 1.0

    def test_converges_to_stationary_point(self):
        rng = np.random.default_rng(0)
        X = np.column_stack([np.ones(200), rng.normal(size=(200, 3))])
        y = (X[:, 1] + 0.5 * rng.normal(size=200) > 0).astype(int)
        fit = learning.logistic_train(X, y)
        assert fit.converged and fit.grad_norm < 1e-8
        grad = X.T @ (expit(X @ fit.weights) - y) / 200 + 2e-6 * fit.weights
        assert np.linalg.norm(grad) < 1e-8

    def test_nonconvergence_is_flagged(self, caplog):
        X = np.column_stack([np.ones(20), np.linspace(-1, 1, 20)])
        fit = learning.logistic_train(X, (X[:, 1] > 0).astype(int), max_iter=2)
        assert not fit.converged and math.isfinite(fit.grad_norm)
        assert "did not" in caplog.text or "stopped" in caplog.text

    def test_symmetric_task(self):
        p0 = GaussianMixture((1.0,), (-0.4,), (0.2,))
        p1 = GaussianMixture((1.0,), (0.4,), (0.2,))
        task = learning.make_task(150, 150, p0, p1, seed=1)
        reps = learning.classify_pipeline(demo_spec(L=4), task, 1024, [8], seed=3)
        assert reps[0].test_accuracy > 0.5


class TestBayesRate:
    def test_identical(self):
        assert learning.bayes_rate(learning.DEMO_P0, learning.DEMO_P0) == pytest.approx(0.5, abs=1e-9)

    def test_disjoint(self):
        p0 = GaussianMixture((1.0,), (-0.7,), (0.02,))
        p1 = GaussianMixture((1.0,), (0.7,), (0.02,))
        assert learning.bayes_rate(p0, p1) == pytest.approx(1.0, abs=1e-9)

    def test_golden(self):
        assert learning.bayes_rate() == pytest.approx(GOLDEN["bayes_rate"], abs=1e-12)


class TestPipeline:
    def test_deterministic(self):
        task = learning.make_task(seed=0)
        a = learning.classify_pipeline(demo_spec(), task, 1 << 14, [4, 30], permutations=2, seed=5)
        b = learning.classify_pipeline(demo_spec(), task, 1 << 14, [4, 30], permutations=2, seed=5)
        assert [(r.K_L, r.permutation, r.train_accuracy, r.test_accuracy) for r in a] == \
            [(r.K_L, r.permutation, r.train_accuracy, r.test_accuracy) for r in b]
        assert all(np.array_equal(x.weights, y.weights) for x, y in zip(a, b))

    def test_overfitting_at_full_rank(self):
        reps = learning.classify_pipeline(demo_spec(), learning.make_task(seed=0), 1 << 14, [64],
                                          permutations=10, seed=0)
        assert np.mean([r.train_accuracy for r in reps]) >= np.mean([r.test_accuracy for r in reps])

    def test_accuracy_ranges(self):
        reps = learning.classify_pipeline(demo_spec(L=3), learning.make_task(seed=2), 256, [1, 4, 8])
        assert all(0 <= r.train_accuracy <= 1 and 0 <= r.test_accuracy <= 1 for r in reps)
        assert all(len(r.weights) == r.K_L for r in reps)

    def test_rejects_bad_K_L(self):
        with pytest.raises(ValueError):
            learning.classify_pipeline(demo_spec(L=2), learning.make_task(seed=0), 64, [5])

    @pytest.mark.xfail(strict=True, reason="150 training inputs let a 64-weight readout memorize the "
                       "training set even without shot noise; the test/train gap is ~25%, not <3%")
    def test_noiseless_control_train_close_to_test(self):
        reps = learning.classify_pipeline(demo_spec(), learning.make_task(seed=0), None, [64],
                                          permutations=10, seed=0)
        tr = np.mean([r.train_accuracy for r in reps])
        te = np.mean([r.test_accuracy for r in reps])
        assert abs(tr - te) < 0.03


@pytest.mark.parametrize("L", [5, 6])
def test_logistic_approximates_posterior(L):
    # population statement: many training inputs, expected features, all eigentasks
    big = learning.make_task(4000, 2, seed=11)
    u, y = big.arrays("train")
    grid = np.linspace(-0.99, 0.99, 400)
    p0, p1 = learning.DEMO_P0.pdf(grid), learning.DEMO_P1.pdf(grid)
    post = p1 / (p0 + p1)
    rs = []
    for seed in range(4):
        sp = demo_spec(L, seed)
        F = sampling.feature_matrix(sp, u)
        res = spectral.solve_nsr_gram_free(F)
        fit = learning.logistic_train(F.values @ res.r, y)
        pred = expit(sampling.feature_matrix(sp, grid).values @ res.r @ fit.weights)
        rs.append(np.corrcoef(pred, post)[0, 1])
    assert np.median(rs) > 0.9


class TestRegression:
    def test_constant_target(self):
        sp = simcore.random_encoding("hamiltonian", 4, 2.0, seed=0)
        F = sampling.feature_matrix(sp, sampling.input_grid(500), 1000, seed=0)
        Y = spectral.eigentasks(spectral.solve_nsr_gram_free(F), F)
        assert learning.pca_fit(np.ones(500), Y, 1).relative_mse < 1e-12

    def test_noisy_eigentask_target(self):
        sp = simcore.random_encoding("hamiltonian", 4, 2.0, seed=1)
        us = sampling.input_grid(4000)
        S = 1000
        res = spectral.solve_nsr_gram_free(sampling.feature_matrix(sp, us))
        f = sampling.feature_matrix(sp, us).values @ res.r[:, 1]
        Y1 = sampling.feature_matrix(sp, us, S, seed=1).values @ res.r
        Y2 = sampling.feature_matrix(sp, us, S, seed=2).values @ res.r
        for Kp in (2, 6):
            mse = learning.pca_fit(f, Y1, Kp, Y_eval=Y2, target_eval=f).relative_mse
            assert mse == pytest.approx(res.beta2[1] / S, rel=0.2)

    def test_raw_feature_selection(self):
        sp = simcore.random_encoding("circuit", 3, 1.0, seed=2)
        F = sampling.feature_matrix(sp, sampling.input_grid(300))
        full = learning.raw_feature_fit(F.inputs, F.values, 8)
        few = learning.raw_feature_fit(F.inputs, F.values, 3)
        assert full.relative_mse <= few.relative_mse and len(few.weights) == 3

    def test_rejects(self):
        with pytest.raises(ValueError):
            learning.pca_fit(np.zeros(4), np.ones((4, 2)), 1)
        with pytest.raises(ValueError):
            learning.pca_fit(np.ones(4), np.ones((4, 2)), 3)

    @pytest.mark.slow
    @pytest.mark.xfail(strict=True, reason="on held-out draws the K_c truncation loses to using all K "
                       "eigentasks for most encodings: at N = S = 5000 the extra noisy regressors add "
                       "less variance than the signal they recover")
    def test_cutoff_beats_full_basis(self):
        us = sampling.input_grid(5000)
        wins = 0
        for seed in range(5):
            cmp = learning.pca_compare(simcore.random_encoding("hamiltonian", 6, 2.0, seed=seed),
                                       lambda u: u, us, 5000, seed=seed)
            wins += cmp.eigentask_mse < cmp.full_mse
        assert wins >= 3
