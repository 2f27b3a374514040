"""Eigentask truncation for regression and binary classification."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.integrate
import scipy.linalg
from scipy.special import erf, expit

from . import simcore
from .metrics import kc_cutoff
from .sampling import FeatureMatrix, feature_matrix, sample_features
from .spectral import correct_finite_shots, solve_nsr_gram_free

log = logging.getLogger(__name__)

RIDGE = 1e-6
TASK_STREAM = 0x7A5C
SPLIT_STREAM = 0x5917
FEATURE_STREAM = 0xFEA7


@dataclass(frozen=True)
class GaussianMixture:
    """Gaussian mixture restricted and renormalized to [-1, 1]."""

    weights: tuple[float, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(a) for a in self.weights)
        if not (len(w) == len(self.means) == len(self.stds)) or not w:
            raise ValueError("weights, means and stds must have equal nonzero length")
        if any(s <= 0 for s in self.stds) or any(a < 0 for a in w):
            raise ValueError("stds must be positive and weights nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", tuple(float(a) for a in self.means))
        object.__setattr__(self, "stds", tuple(float(a) for a in self.stds))

    def _mass(self) -> float:
        m = 0.0
        for w, mu, s in zip(self.weights, self.means, self.stds):
            m += w * 0.5 * (erf((1 - mu) / (s * math.sqrt(2))) - erf((-1 - mu) / (s * math.sqrt(2))))
        return m

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for w, mu, s in zip(self.weights, self.means, self.stds):
            out += w * np.exp(-0.5 * ((u - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        out = out / self._mass()
        return np.where((u >= -1) & (u <= 1), out, 0.0)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        p = np.asarray(self.weights) / sum(self.weights)
        out = []
        while len(out) < n:
            c = rng.choice(len(p), size=2 * n, p=p)
            u = rng.normal(np.asarray(self.means)[c], np.asarray(self.stds)[c])
            out.extend(u[(u >= -1) & (u <= 1)].tolist())
        return np.array(out[:n])

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "means": list(self.means), "stds": list(self.stds)}


DEMO_P0 = GaussianMixture((0.5, 0.5), (-0.55, 0.2), (0.13, 0.13))
DEMO_P1 = GaussianMixture((0.4, 0.6), (-0.15, 0.65), (0.13, 0.13))


@dataclass(frozen=True, eq=False)
class ClassificationTask:
    """A balanced pool of labeled inputs and the split currently in use."""

    train: list
    test: list
    p0: GaussianMixture = DEMO_P0
    p1: GaussianMixture = DEMO_P1
    seed: int = 0
    pool: tuple = ()

    def arrays(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        rows = self.train if which == "train" else self.test
        return (np.array([u for u, _ in rows], dtype=float),
                np.array([c for _, c in rows], dtype=int))

    def permuted(self, permutation: int) -> "ClassificationTask":
        """A fresh balanced train/test split of the same pool."""
        return _split(self.pool, len(self.train), self.p0, self.p1, self.seed, permutation)


def _split(pool, n_train, p0, p1, seed, permutation) -> ClassificationTask:
    rng = simcore.spec_rng(seed, SPLIT_STREAM, permutation)
    train, test = [], []
    for cls in (0, 1):
        members = [row for row in pool if row[1] == cls]
        perm = rng.permutation(len(members))
        take = n_train // 2 + (cls == 0) * (n_train % 2)
        train += [members[i] for i in perm[:take]]
        test += [members[i] for i in perm[take:]]
    return ClassificationTask(train=train, test=test, p0=p0, p1=p1, seed=seed, pool=pool)


def make_task(n_train: int = 150, n_test: int = 150, p0: GaussianMixture = DEMO_P0,
              p1: GaussianMixture = DEMO_P1, seed: int = 0) -> ClassificationTask:
    """Draw a pool of n_train + n_test inputs, half from each class, and split it."""
    total = n_train + n_test
    if total < 4:
        raise ValueError("need at least two examples per class")
    rng = simcore.spec_rng(seed, TASK_STREAM)
    n0 = total // 2 + total % 2
    u0 = p0.sample(n0, rng)
    u1 = p1.sample(total - n0, rng)
    pool = tuple([(float(u), 0) for u in u0] + [(float(u), 1) for u in u1])
    return _split(pool, n_train, p0, p1, seed, 0)


@dataclass
class LogisticFit:
    weights: np.ndarray
    converged: bool
    grad_norm: float
    iterations: int


@dataclass
class FitReport:
    K_L: int
    weights: np.ndarray
    train_accuracy: float = float("nan")
    test_accuracy: float = float("nan")
    relative_mse: float = float("nan")
    permutation: int = 0
    K_c: int | None = None
    converged: bool = True


def _loss(X, y, w, lam):
    z = X @ w
    # log(1 + e^z) - y z, computed stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + lam * (w @ w))


def logistic_train(X, labels, lam: float = RIDGE, max_iter: int = 500,
                   tol: float = 1e-8) -> LogisticFit:
    """Ridge-penalized logistic regression by damped Newton iteration.

    Minimizes mean cross-entropy of sigmoid(X w) plus lam * |w|^2. No separate
    intercept: the constant eigentask plays that role.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (N, K) with one label per row")
    N, K = X.shape
    w = np.zeros(K)
    g = np.inf
    it = 0
    loss = _loss(X, y, w, lam)
    for it in range(1, max_iter + 1):
        p = expit(X @ w)
        grad = X.T @ (p - y) / N + 2 * lam * w
        g = float(np.linalg.norm(grad))
        if g < tol:
            return LogisticFit(w, True, g, it - 1)
        H = (X * (p * (1 - p))[:, None]).T @ X / N + 2 * lam * np.eye(K)
        try:
            step = scipy.linalg.solve(H, grad, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while True:
            w_new = w - t * step
            new = _loss(X, y, w_new, lam)
            if new <= loss - 1e-4 * t * float(grad @ step) or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10 and new >= loss:
            break
        w, loss = w_new, new
    p = expit(X @ w)
    g = float(np.linalg.norm(X.T @ (p - y) / N + 2 * lam * w))
    converged = g < tol
    if not converged:
        log.warning("logistic regression stopped after %d iterations, |grad| = %.2e", it, g)
    return LogisticFit(w, converged, g, it)


def predict(X, w) -> np.ndarray:
    return (np.asarray(X) @ w > 0).astype(int)


def accuracy(X, labels, w) -> float:
    return float(np.mean(predict(X, w) == np.asarray(labels)))


def _lstsq(A, f):
    return scipy.linalg.lstsq(A, f, cond=1e-12, lapack_driver="gelsd")[0]


def _rel_mse(f, pred) -> float:
    return float(np.mean((f - pred) ** 2) / np.mean(f ** 2))


def pca_fit(target, Y, K_prime: int, S: float | None = None, Y_eval=None,
            target_eval=None) -> FitReport:
    """Least-squares fit of ``target`` on the first K' (lowest-noise) eigentasks.

    The relative MSE is measured on ``Y_eval`` / ``target_eval`` when given
    (e.g. an independent shot draw), otherwise in-sample. ``S`` is recorded
    only for bookkeeping.
    """
    Y = getattr(Y, "Y", Y)
    f = np.asarray(target, dtype=float)
    if not np.any(f):
        raise ValueError("target is identically zero")
    if not 1 <= K_prime <= Y.shape[1]:
        raise ValueError(f"K' must lie in [1, {Y.shape[1]}]")
    w = _lstsq(Y[:, :K_prime], f)
    Ye = Y if Y_eval is None else getattr(Y_eval, "Y", Y_eval)
    fe = f if target_eval is None else np.asarray(target_eval, dtype=float)
    return FitReport(K_L=K_prime, weights=w, relative_mse=_rel_mse(fe, Ye[:, :K_prime] @ w))


def raw_feature_fit(target, X, K_prime: int, X_eval=None, target_eval=None) -> FitReport:
    """Fit on the K' raw features with the largest w_k^2 E[x_k^2] from a full fit."""
    X = np.asarray(X, dtype=float)
    f = np.asarray(target, dtype=float)
    w_full = _lstsq(X, f)
    score = w_full ** 2 * np.mean(X ** 2, axis=0)
    cols = np.sort(np.argsort(score, kind="stable")[::-1][:K_prime])
    w = _lstsq(X[:, cols], f)
    Xe = X if X_eval is None else np.asarray(X_eval, dtype=float)
    fe = f if target_eval is None else np.asarray(target_eval, dtype=float)
    rep = FitReport(K_L=K_prime, weights=w, relative_mse=_rel_mse(fe, Xe[:, cols] @ w))
    return rep


def bayes_rate(p0: GaussianMixture = DEMO_P0, p1: GaussianMixture = DEMO_P1) -> float:
    """Best achievable accuracy with equal class priors: int max(p0, p1) / 2."""
    pts = sorted({m for m in p0.means + p1.means if -1 < m < 1})
    val, _ = scipy.integrate.quad(lambda u: 0.5 * max(p0.pdf(u), p1.pdf(u)), -1.0, 1.0,
                                  points=pts or None, epsabs=1e-10, epsrel=1e-10, limit=400)
    return float(val)


def classify_pipeline(spec: simcore.EncodingSpec, task: ClassificationTask, S: int | None,
                      K_L_list: Sequence[int], permutations: int = 1,
                      seed: int = 0) -> list[FitReport]:
    """Train/test accuracy of eigentask logistic readouts for each K_L.

    The spectrum and eigentasks come from the training features only; test
    features are projected with the training combination vectors.
    """
    reports = []
    for perm in range(permutations):
        split = task.permuted(perm) if perm else task
        utr, ytr = split.arrays("train")
        ute, yte = split.arrays("test")
        Ftr = feature_matrix(spec, utr, S, seed=_derive(seed, perm, 0))
        Fte = feature_matrix(spec, ute, S, seed=_derive(seed, perm, 1))
        res = solve_nsr_gram_free(Ftr)
        if S is not None:
            res_c = correct_finite_shots(res, S)
            K_c = kc_cutoff(res_c.beta2, S)
        else:
            K_c = int(np.isfinite(res.beta2).sum())
        Ytr = Ftr.values @ res.r
        Yte = Fte.values @ res.r
        for K_L in K_L_list:
            if not 1 <= K_L <= Ytr.shape[1]:
                raise ValueError(f"K_L={K_L} outside [1, {Ytr.shape[1]}]")
            fit = logistic_train(Ytr[:, :K_L], ytr)
            reports.append(FitReport(
                K_L=int(K_L), weights=fit.weights,
                train_accuracy=accuracy(Ytr[:, :K_L], ytr, fit.weights),
                test_accuracy=accuracy(Yte[:, :K_L], yte, fit.weights),
                permutation=perm, K_c=K_c, converged=fit.converged))
    return reports


def _derive(seed: int, *parts: int) -> int:
    ss = np.random.SeedSequence([int(seed) & ((1 << 64) - 1), FEATURE_STREAM, *parts])
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0])


@dataclass
class PCAComparison:
    K_c: int
    eigentask_mse: float
    raw_mse: float
    full_mse: float


def pca_compare(spec: simcore.EncodingSpec, target, inputs, S: int, seed: int = 0,
                K_prime: int | None = None) -> PCAComparison:
    """Fit ``target`` on the first K' eigentasks and on the K' dominant raw features.

    Spectrum, eigentasks and weights come from one shot draw; the relative
    MSE is measured on a second, independent draw at the same inputs.
    K' defaults to K_c(S) of the corrected spectrum.
    """
    inputs = np.asarray(inputs, dtype=float)
    f = np.asarray(target(inputs) if callable(target) else target, dtype=float)
    probs = simcore.probabilities(spec, inputs)

    F1 = sample_features(probs, inputs, S, _derive(seed, 0), spec.spec_hash())
    F2 = sample_features(probs, inputs, S, _derive(seed, 1), spec.spec_hash())
    res = solve_nsr_gram_free(F1)
    K_c = kc_cutoff(correct_finite_shots(res, S).beta2, S)
    Kp = K_c if K_prime is None else int(K_prime)
    Kp = max(1, min(Kp, spec.K))
    Y1, Y2 = F1.values @ res.r, F2.values @ res.r
    return PCAComparison(
        K_c=K_c,
        eigentask_mse=pca_fit(f, Y1, Kp, Y_eval=Y2).relative_mse,
        raw_mse=raw_feature_fit(f, F1.values, Kp, X_eval=F2.values).relative_mse,
        full_mse=pca_fit(f, Y1, spec.K, Y_eval=Y2).relative_mse)
