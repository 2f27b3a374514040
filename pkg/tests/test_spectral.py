import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eigencap import metrics, sampling, simcore, spectral
from eigencap.sampling import FeatureMatrix

import oracles


def expected_F(ansatz="circuit", L=3, J=1.0, seed=0, N=500):
    sp = simcore.random_encoding(ansatz, L, J, seed=seed)
    return sampling.feature_matrix(sp, sampling.input_grid(N))


def sampled_F(ansatz="circuit", L=3, J=1.0, seed=0, N=500, S=256, sample_seed=0):
    sp = simcore.random_encoding(ansatz, L, J, seed=seed)
    return sampling.feature_matrix(sp, sampling.input_grid(N), S, seed=sample_seed)


def finite(b):
    return b[np.isfinite(b)]


class TestEstimateMoments:
    def test_constant_rows(self):
        M = spectral.estimate_moments(FeatureMatrix([0, 1], [[1, 0], [1, 0]]))
        e = np.outer([1, 0], [1, 0])
        np.testing.assert_array_equal(M.G, e)
        np.testing.assert_array_equal(M.D, e)
        np.testing.assert_array_equal(M.V, 0)

    def test_two_point(self):
        M = spectral.estimate_moments(FeatureMatrix([0, 1], [[1, 0], [0, 1]]))
        np.testing.assert_array_equal(M.G, np.eye(2) / 2)
        np.testing.assert_array_equal(M.D, np.eye(2) / 2)
        np.testing.assert_array_equal(M.V, 0)

    def test_quadrature_oracle(self):
        sp = simcore.random_encoding("circuit", 2, math.pi / 2, seed=1)
        G, d = oracles.simpson_gram(lambda u: simcore.probabilities(sp, [u])[0], 10_001)
        M = spectral.estimate_moments(sampling.feature_matrix(sp, sampling.input_grid(2000)))
        assert np.abs(M.G - G).max() < 1e-4
        assert np.abs(M.d - d).max() < 1e-4

    @given(st.integers(0, 10**6), st.sampled_from([None, 7, 1000]))
    @settings(max_examples=30, deadline=None)
    def test_invariants(self, seed, S):
        sp = simcore.random_encoding("circuit", 3, 1.0, seed=seed)
        F = sampling.feature_matrix(sp, sampling.input_grid(40), S, seed=seed)
        M = spectral.estimate_moments(F)
        np.testing.assert_array_equal(M.G, M.G.T)
        assert np.linalg.eigvalsh(M.G).min() > -1e-10
        assert abs(M.d.sum() - 1) < 1e-9 and (M.d >= 0).all()
        np.testing.assert_allclose(M.G.sum(axis=1), M.d, atol=1e-9)
        assert M.S == F.S


class TestSolveNSR:
    @pytest.mark.parametrize("K", [4, 16, 64])
    def test_two_design(self, K):
        res = spectral.solve_nsr(metrics.two_design_moments(K))
        expected = np.full(K, float(K))
        expected[0] = 0
        assert np.abs(res.beta2 - expected).max() < 1e-9

    def test_generalized_eigensolver_oracle(self):
        F = expected_F("hamiltonian", L=4, J=2.0, seed=2, N=5000)
        M = spectral.estimate_moments(F)
        ref = oracles.generalized_nsr(M.G, M.d)
        got = spectral.solve_nsr(M).beta2
        assert np.all(np.abs(got - ref) <= 1e-8 * np.maximum(1.0, np.abs(ref)))

    @given(st.integers(0, 10**6), st.sampled_from(["circuit", "hamiltonian"]),
           st.sampled_from([None, 50, 4096]))
    @settings(max_examples=30, deadline=None)
    def test_result_invariants(self, seed, ansatz, S):
        sp = simcore.random_encoding(ansatz, 3, 1.3, seed=seed)
        F = sampling.feature_matrix(sp, sampling.input_grid(300), S, seed=seed)
        M = spectral.estimate_moments(F)
        res = spectral.solve_nsr(M)
        b = res.beta2
        assert b[0] < 1e-9 and (np.diff(b[np.isfinite(b)]) >= 0).all()
        # zero-noise eigentask is the constant function
        np.testing.assert_allclose(F.values @ res.r[:, 0], 1.0, atol=1e-9)
        fin = np.flatnonzero(np.isfinite(b))
        R = res.r[:, fin]
        np.testing.assert_allclose(R.T @ M.G @ R, np.eye(len(fin)), atol=1e-6)
        VV = R.T @ M.V @ R
        scale = np.maximum(1.0, b[fin])
        assert np.all(np.abs(VV - np.diag(b[fin])) <= 1e-6 * np.sqrt(np.outer(scale, scale)))

    def test_sign_convention(self):
        res = spectral.solve_nsr(spectral.estimate_moments(expected_F(seed=4)))
        idx = np.argmax(np.abs(res.r), axis=0)
        assert (res.r[idx, np.arange(res.K)] > 0).all()

    def test_degenerate_ordering_is_deterministic(self):
        a = spectral.solve_nsr(metrics.two_design_moments(16))
        b = spectral.solve_nsr(metrics.two_design_moments(16))
        np.testing.assert_array_equal(a.r, b.r)


class TestGramFree:
    @given(st.integers(0, 10**6), st.sampled_from([None, 20, 2048]), st.integers(2, 4))
    @settings(max_examples=30, deadline=None)
    def test_agrees_with_gram_route(self, seed, S, L):
        sp = simcore.random_encoding("circuit", L, 1.57, seed=seed)
        F = sampling.feature_matrix(sp, sampling.input_grid(200), S, seed=seed)
        a = spectral.solve_nsr(spectral.estimate_moments(F))
        b = spectral.solve_nsr_gram_free(F)
        assert a.pruned == b.pruned
        np.testing.assert_array_equal(np.isinf(a.beta2), np.isinf(b.beta2))
        fa, fb = finite(a.beta2), finite(b.beta2)
        assert np.all(np.abs(fa - fb) <= 1e-8 * np.maximum(1.0, fa))

    def test_duplicate_and_empty_columns(self):
        base = expected_F(L=2, seed=3, N=300)
        X = base.values
        # split outcome 0 into two identical halves and add a never-seen outcome
        Y = np.column_stack([X[:, :1] / 2, X[:, :1] / 2, X[:, 1:], np.zeros(len(X))])
        F = FeatureMatrix(base.inputs, Y)
        a = spectral.solve_nsr(spectral.estimate_moments(F))
        b = spectral.solve_nsr_gram_free(F)
        assert a.pruned == b.pruned == (5,)
        np.testing.assert_array_equal(np.isinf(a.beta2), np.isinf(b.beta2))
        # the duplicated direction carries no signal
        assert np.isinf(a.beta2).sum() == 2
        fa, fb = finite(a.beta2), finite(b.beta2)
        np.testing.assert_allclose(fa, fb, rtol=1e-8, atol=1e-8)
        ref = spectral.solve_nsr(spectral.estimate_moments(base)).beta2
        np.testing.assert_allclose(fa, ref, rtol=1e-8, atol=1e-8)

    def test_fewer_inputs_than_features(self):
        F = sampled_F(L=6, N=10, S=1000)
        res = spectral.solve_nsr_gram_free(F)
        assert (res.alpha > 0).sum() <= 10
        ref = spectral.solve_nsr(spectral.estimate_moments(F))
        fa, fb = finite(ref.beta2), finite(res.beta2)
        assert len(fa) == len(fb) and np.all(np.abs(fa - fb) <= 1e-8 * np.maximum(1.0, fa))


class TestCorrection:
    def _res(self, beta2, S):
        beta2 = np.asarray(beta2, dtype=float)
        return spectral.SpectralResult(beta2=beta2, r=np.eye(len(beta2)), alpha=1 / (1 + beta2), S=S)

    def test_examples(self):
        out = spectral.correct_finite_shots(self._res([0.0, 50.0], 101), 101)
        np.testing.assert_allclose(out.beta2, [0.0, 101.0], rtol=1e-15)
        assert out.corrected and out.uncorrectable == ()

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=20), st.integers(2, 10**6))
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, true, S):
        true = np.sort(np.asarray(true))
        raw = (S - 1) * true / (S + true)
        out = spectral.correct_finite_shots(self._res(raw, S), S)
        ok = np.isfinite(out.beta2)
        np.testing.assert_allclose(out.beta2[ok], true[ok], rtol=1e-9, atol=1e-12)

    def test_round_trip_exact(self):
        S = 1000
        true = np.array([0.0, 0.5, 3.0, 40.0, 250.0, 999.0])
        raw = (S - 1) * true / (S + true)
        out = spectral.correct_finite_shots(self._res(raw, S), S)
        np.testing.assert_allclose(out.beta2, true, rtol=1e-12, atol=1e-12)

    def test_uncorrectable_flags(self):
        S = 100
        out = spectral.correct_finite_shots(self._res([0, 10, 98.999, 99, 150, np.inf], S), S)
        assert out.uncorrectable == (3, 4, 5)
        assert np.isinf(out.beta2[[3, 4, 5]]).all()
        np.testing.assert_array_equal(out.r, np.eye(6))
        np.testing.assert_array_equal(out.beta2_raw, [0, 10, 98.999, 99, 150, np.inf])

    def test_requires_finite_shots(self):
        with pytest.raises(ValueError):
            spectral.correct_finite_shots(self._res([0.0], math.inf))

    def test_raw_underestimates(self):
        F = expected_F("hamiltonian", L=3, J=2.0, seed=1, N=4000)
        true = spectral.solve_nsr_gram_free(F).beta2
        raw = spectral.solve_nsr_gram_free(sampled_F("hamiltonian", 3, 2.0, 1, 4000, S=200)).beta2
        # beta~2 = (S-1) beta^2 / (S + beta^2) < min(beta^2, S - 1)
        assert (raw[1:] < true[1:]).all()


class TestCapacity:
    def test_examples(self):
        assert spectral.expressive_capacity(np.zeros(8), 3.0) == 8
        for K in (4, 16, 64):
            b, CT = metrics.two_design_reference(K, 100)
            assert spectral.expressive_capacity(b, 100) == pytest.approx(CT, rel=1e-12)

    def test_infinite_shots_counts_rank(self):
        b = np.array([0.0, 5.0, 1e9, np.inf])
        assert spectral.expressive_capacity(b, math.inf) == 3
        assert spectral.expressive_capacity(b, 1e300) == pytest.approx(3.0)

    def test_exclude(self):
        assert spectral.expressive_capacity([0.0, 0.0, 0.0], 10, exclude=(1,)) == 2

    def test_monotone_and_bounded(self):
        rng = np.random.default_rng(0)
        Ss = np.logspace(0, 9, 40)
        for _ in range(100):
            b = np.sort(np.concatenate([[0.0], 10 ** rng.uniform(-2, 8, rng.integers(1, 64))]))
            if rng.random() < 0.3:
                b[-1] = np.inf
            curve = spectral.capacity_curve(b, Ss)
            assert (np.diff(curve) >= -1e-12).all()
            assert (curve <= min(len(b), np.isfinite(b).sum()) + 1e-12).all()

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            spectral.expressive_capacity([-1.0], 10)


class TestEigentasks:
    def test_constant_eigentask(self):
        F = sampled_F(S=64)
        Y = spectral.eigentasks(spectral.solve_nsr_gram_free(F), F).Y
        np.testing.assert_allclose(Y[:, 0], 1.0, atol=1e-12)

    def test_dimension_mismatch(self):
        F = expected_F(L=2)
        res = spectral.solve_nsr(metrics.two_design_moments(8))
        with pytest.raises(ValueError):
            spectral.eigentasks(res, F)

    def test_orthonormal_expected(self):
        F = expected_F("circuit", L=5, J=math.pi / 2, seed=1, N=5000)
        Y = spectral.eigentasks(spectral.solve_nsr_gram_free(F), F).Y
        assert np.abs(Y.T @ Y / F.N - np.eye(F.K)).max() < 2e-2

    def test_noisy_gram_diagonal(self):
        sp = simcore.random_encoding("circuit", 4, math.pi / 2, seed=2)
        us = sampling.input_grid(2000)
        S = 1 << 10
        E = sampling.feature_matrix(sp, us)
        res = spectral.solve_nsr_gram_free(E)
        diag = np.mean([np.mean((sampling.feature_matrix(sp, us, S, seed=s).values @ res.r) ** 2, axis=0)
                        for s in range(20)], axis=0)
        sel = res.beta2 < S / 10
        np.testing.assert_allclose(diag[sel], 1 + res.beta2[sel] / S, rtol=0.10)


class TestFunctionCapacity:
    def test_feature_is_representable(self):
        F = expected_F(L=3, seed=5, N=400)
        C, w = spectral.function_capacity(F, F.values[:, 0])
        assert abs(C - 1) < 1e-9
        np.testing.assert_allclose(F.values @ w, F.values[:, 0], atol=1e-8)

    def test_orthogonal_target(self):
        F = expected_F(L=2, seed=5, N=400)
        g = np.sin(7 * F.inputs) + F.inputs ** 3
        Q, _ = np.linalg.qr(F.values)
        f = g - Q @ (Q.T @ g)
        C, _ = spectral.function_capacity(F, f)
        assert C < 1e-6

    @pytest.mark.parametrize("S", [10.0, 1000.0, math.inf])
    def test_eigentask_capacity(self, S):
        F = expected_F("hamiltonian", L=3, J=2.0, seed=2, N=2000)
        res = spectral.solve_nsr_gram_free(F)
        Y = F.values @ res.r
        for k in (1, 3, 6):
            C, _ = spectral.function_capacity(F, Y[:, k], S)
            assert C == pytest.approx(1 / (1 + res.beta2[k] / S), abs=1e-6)

    def test_zero_target(self):
        with pytest.raises(ValueError):
            spectral.function_capacity(expected_F(L=2), np.zeros(500))

    def test_sampled_features_use_empirical_gram(self):
        F = sampled_F(L=3, S=64, N=400)
        C, _ = spectral.function_capacity(F, F.inputs)
        assert 0 <= C <= 1


@given(st.integers(0, 10**6), st.sampled_from([None, 500]), st.permutations(range(8)))
@settings(max_examples=20, deadline=None)
def test_relabeling_invariance(seed, S, perm):
    F = sampled_F("circuit", 3, 1.57, seed=seed % 50, N=300, S=S, sample_seed=seed) if S else \
        expected_F("circuit", 3, 1.57, seed=seed % 50, N=300)
    a = spectral.solve_nsr_gram_free(F).beta2
    b = spectral.solve_nsr_gram_free(F.with_values(F.values[:, list(perm)])).beta2
    np.testing.assert_array_equal(np.isinf(a), np.isinf(b))
    assert np.all(np.abs(finite(a) - finite(b)) <= 1e-10 * np.maximum(1.0, finite(a)))


def test_sampled_gram_converges():
    sp = simcore.random_encoding("circuit", 2, 1.0, seed=6)
    us = sampling.input_grid(100)
    S, R = 50, 400
    E = spectral.estimate_moments(sampling.feature_matrix(sp, us))
    Gs = np.array([spectral.estimate_moments(sampling.feature_matrix(sp, us, S, seed=s)).G
                   for s in range(R)])
    mean, se = Gs.mean(axis=0), Gs.std(axis=0, ddof=1) / math.sqrt(R)
    assert (np.abs(mean - (E.G + E.V / S)) <= 5 * se).all()


@pytest.mark.parametrize("ansatz,L", [("circuit", 3), ("circuit", 4), ("hamiltonian", 3), ("hamiltonian", 4)])
def test_full_rank(ansatz, L):
    M = spectral.estimate_moments(expected_F(ansatz, L, 1.57 if ansatz == "circuit" else 2.0, seed=1,
                                             N=2000))
    s = np.linalg.svd(M.G, compute_uv=False)
    assert (s > 1e-10 * s[0]).sum() == 2 ** L


def test_prune_threshold():
    d = np.array([0.5, 0.4, 1 / (10 * 100), 0.0])
    np.testing.assert_array_equal(spectral.prune_mask(d, 10, 100), [True, True, True, False])
    np.testing.assert_array_equal(spectral.prune_mask(np.array([1e-300, 0.0]), 10, math.inf), [True, False])
