"""Per-cluster probabilistic base classifiers with Platt-scaled calibration.

Base learners emit log-odds-like raw scores (larger means more positive).
Calibration fits the two-parameter sigmoid ``1 / (1 + exp(a * s + b))`` to
smoothed targets, so ``a`` comes out negative on positively oriented scores.
Calibrated posteriors are clamped to ``[CLAMP_EPS, 1 - CLAMP_EPS]`` so that
downstream odds ratios stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_binary_labels, as_float_matrix, freeze
from .core import CLAMP_EPS, LabeledSet, split_groups_holdout
from .errors import ConfigurationError, DataError, DegenerateTrainingError
from .partition import PartitionModel, fit_kmeans, KMeansConfig

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LogisticModel:
    """L2-regularized logistic regression; raw score is the linear log-odds."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or not np.isfinite(w).all() or not np.isfinite(self.bias):
            raise DataError("logistic parameters must be finite and 1-dimensional")
        object.__setattr__(self, "weights", freeze(w))

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    def scores(self, X) -> np.ndarray:
        X = as_float_matrix(X, d=self.d)
        return X @ self.weights + self.bias


@dataclass(frozen=True)
class QdaModel:
    """Per-class Gaussian model; raw score is the class log-odds."""

    means: np.ndarray  # (2, d)
    covariances: np.ndarray  # (2, d, d)
    log_priors: np.ndarray  # (2,)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        covs = np.asarray(self.covariances, dtype=np.float64)
        logp = np.asarray(self.log_priors, dtype=np.float64)
        if means.shape[0] != 2 or covs.shape[0] != 2 or logp.shape != (2,):
            raise DataError("QDA parameters must cover exactly two classes")
        chols = np.stack([np.linalg.cholesky(covs[c]) for c in (0, 1)])
        half_logdets = np.array(
            [np.log(np.diag(chols[c])).sum() for c in (0, 1)]
        )
        object.__setattr__(self, "means", freeze(means))
        object.__setattr__(self, "covariances", freeze(covs))
        object.__setattr__(self, "log_priors", freeze(logp))
        object.__setattr__(self, "_chols", freeze(chols))
        object.__setattr__(self, "_half_logdets", freeze(half_logdets))

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def _log_density(self, X: np.ndarray, c: int) -> np.ndarray:
        diff = (X - self.means[c]).T
        sol = solve_triangular(self._chols[c], diff, lower=True)
        quad = (sol**2).sum(axis=0)
        return -0.5 * (quad + self.d * _LOG_2PI) - self._half_logdets[c]

    def scores(self, X) -> np.ndarray:
        X = as_float_matrix(X, d=self.d)
        return (
            self._log_density(X, 1)
            - self._log_density(X, 0)
            + (self.log_priors[1] - self.log_priors[0])
        )


BaseClassifier = Union[LogisticModel, QdaModel]


@dataclass(frozen=True)
class CalibrationModel:
    """Platt sigmoid ``1 / (1 + exp(a * s + b))``."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise DataError("calibration parameters must be finite")

    def apply(self, scores) -> np.ndarray:
        s = np.asarray(scores, dtype=np.float64)
        return expit(-(self.a * s + self.b))


def logistic_objective(params, X, y, l2: float):
    """Mean logistic NLL plus (l2 / 2) * ||w||^2 and its gradient.

    ``params`` stacks the weight vector and the (unpenalized) bias last.
    The mean form keeps the optimum invariant to duplicating the dataset.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    n = len(y)
    nll = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * float(w @ w)
    r = (expit(z) - y) / n
    grad = np.concatenate([X.T @ r + l2 * w, [r.sum()]])
    return nll, grad


def _fit_logistic(X, y, l2=1e-4, max_iterations=100, tolerance=1e-10) -> LogisticModel:
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    reg = np.append(np.full(d, l2), 0.0)
    params = np.zeros(d + 1)
    val, grad = logistic_objective(params, X, y, l2)
    for _ in range(max_iterations):
        if np.linalg.norm(grad) <= tolerance:
            break
        p = expit(Xa[:, :d] @ params[:d] + params[d])
        weight = p * (1.0 - p) / n
        hess = Xa.T @ (Xa * weight[:, None]) + np.diag(reg)
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(d + 1), -grad)
        except np.linalg.LinAlgError:
            step = -grad
        t = 1.0
        for _ in range(50):
            cand = params + t * step
            cand_val, cand_grad = logistic_objective(cand, X, y, l2)
            if cand_val <= val + 1e-4 * t * float(grad @ step):
                params, val, grad = cand, cand_val, cand_grad
                break
            t *= 0.5
        else:
            break
    return LogisticModel(params[:-1], float(params[-1]))


def _fit_qda(X, y, ridge_scale=1e-3) -> QdaModel:
    d = X.shape[1]
    means = np.empty((2, d))
    covs = np.empty((2, d, d))
    log_priors = np.empty(2)
    for c in (0, 1):
        Xc = X[y == c]
        means[c] = Xc.mean(axis=0)
        cov = np.atleast_2d(np.cov(Xc.T, bias=True))
        trace = float(np.trace(cov))
        ridge = ridge_scale * (trace / d if trace > 0 else 1.0)
        covs[c] = cov + ridge * np.eye(d)
        log_priors[c] = math.log(len(Xc) / len(X))
    return QdaModel(means, covs, log_priors)


def fit_base(
    train: LabeledSet, kind: str = "qda", hyperparameters=None, seed: int = 0
) -> BaseClassifier:
    """Fit one raw-score classifier on a labeled set.

    ``kind`` is ``"logistic"`` (Newton on the mean NLL, gradient norm driven
    to <= 1e-6) or ``"qda"`` (per-class moments with a trace-scaled ridge).
    Both fits are deterministic; ``seed`` is accepted for interface
    uniformity.
    """
    del seed
    if len(train) == 0 or train.y.min() == train.y.max():
        raise DegenerateTrainingError("training data must contain both classes")
    hp = dict(hyperparameters or {})
    if kind == "logistic":
        return _fit_logistic(
            train.X,
            train.y.astype(np.float64),
            l2=hp.pop("l2", 1e-4),
            max_iterations=hp.pop("max_iterations", 100),
            tolerance=hp.pop("tolerance", 1e-10),
        )
    if kind == "qda":
        return _fit_qda(train.X, train.y, ridge_scale=hp.pop("ridge_scale", 1e-3))
    raise ConfigurationError(f"unknown base classifier kind {kind!r}")


def platt_targets(n_pos: int, n_neg: int) -> tuple:
    """Smoothed calibration targets ((n_pos+1)/(n_pos+2), 1/(n_neg+2))."""
    return (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0)


def fit_platt(scores, labels) -> CalibrationModel:
    """Fit the Platt sigmoid by Newton descent on the smoothed-target NLL.

    With a single class present the result is the constant model matching the
    smoothed base rate.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = as_binary_labels(labels, n=len(s))
    if len(s) == 0:
        raise ConfigurationError("calibration needs at least one example")
    if not np.isfinite(s).all():
        raise DataError("calibration scores must be finite")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        rate = (n_pos + 1.0) / (len(y) + 2.0)
        return CalibrationModel(0.0, math.log((1.0 - rate) / rate))

    t_pos, t_neg = platt_targets(n_pos, n_neg)
    t = np.where(y == 1, t_pos, t_neg)
    a, b = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))

    def value(a_, b_):
        u = a_ * s + b_
        # sum softplus(u) - (1 - t) * u, stable for large |u|
        return float(np.sum(np.logaddexp(0.0, u) - (1.0 - t) * u))

    val = value(a, b)
    for _ in range(200):
        u = a * s + b
        p = expit(-u)
        g = np.array([float(np.sum(s * (t - p))), float(np.sum(t - p))])
        if np.linalg.norm(g) <= 1e-8:
            break
        pq = p * (1.0 - p)
        h11 = float(np.sum(s * s * pq)) + 1e-12
        h12 = float(np.sum(s * pq))
        h22 = float(np.sum(pq)) + 1e-12
        det = h11 * h22 - h12 * h12
        if det <= 0:
            da, db = -g
        else:
            da = -(h22 * g[0] - h12 * g[1]) / det
            db = -(h11 * g[1] - h12 * g[0]) / det
        step = 1.0
        descent = g[0] * da + g[1] * db
        for _ in range(50):
            cand = value(a + step * da, b + step * db)
            if cand <= val + 1e-4 * step * descent:
                a, b = a + step * da, b + step * db
                val = cand
                break
            step *= 0.5
        else:
            break
    return CalibrationModel(a, b)


@dataclass(frozen=True)
class ClusterMember:
    """One cluster's scorer; ``fallback`` is a constant posterior when set."""

    base: BaseClassifier | None
    calibration: CalibrationModel | None
    fallback: float | None


@dataclass(frozen=True)
class ClusterClassifierEnsemble:
    """Calibrated per-cluster posterior estimator for the labeled distribution."""

    partition: PartitionModel
    members: tuple

    def __post_init__(self):
        if len(self.members) != self.partition.k:
            raise ConfigurationError("ensemble needs exactly one member per cluster")
        object.__setattr__(self, "members", tuple(self.members))

    def predict_proba(self, X) -> np.ndarray:
        X = as_float_matrix(X, d=self.partition.d)
        labels = self.partition.assign(X)
        out = np.empty(len(X))
        for k, member in enumerate(self.members):
            mask = labels == k
            if not mask.any():
                continue
            if member.fallback is not None:
                out[mask] = member.fallback
            else:
                out[mask] = member.calibration.apply(member.base.scores(X[mask]))
        return np.clip(out, CLAMP_EPS, 1.0 - CLAMP_EPS)


def predict(ensemble: ClusterClassifierEnsemble, x) -> float:
    """Calibrated posterior for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    return float(ensemble.predict_proba(x[None, :])[0])


def fit_ensemble(
    train: LabeledSet,
    validation: LabeledSet,
    partition: PartitionModel,
    kind: str = "qda",
    seed: int = 0,
    hyperparameters=None,
) -> ClusterClassifierEnsemble:
    """Fit one base classifier per cluster and calibrate it on the validation fold.

    Clusters whose training split misses a class, or whose validation split is
    empty, fall back to a constant posterior: the clamped labeled prior of the
    cluster (the global labeled prior if the cluster has no training data).
    """
    if len(train) == 0:
        raise ConfigurationError("ensemble training data is empty")
    global_prior = float(train.y.mean())
    train_labels = partition.assign(train.X)
    val_labels = partition.assign(validation.X) if len(validation) else np.empty(0, np.int64)
    members = []
    for k in range(partition.k):
        tr = train.subset(train_labels == k)
        va = validation.subset(val_labels == k) if len(validation) else validation
        prior = float(tr.y.mean()) if len(tr) else global_prior
        degenerate = len(tr) == 0 or tr.y.min() == tr.y.max() or len(va) == 0
        if degenerate:
            fallback = float(np.clip(prior, CLAMP_EPS, 1.0 - CLAMP_EPS))
            members.append(ClusterMember(None, None, fallback))
            continue
        base = fit_base(tr, kind, hyperparameters, seed)
        calibration = fit_platt(base.scores(va.X), va.y)
        members.append(ClusterMember(base, calibration, None))
    return ClusterClassifierEnsemble(partition, tuple(members))


class CalibratedClusterClassifier(BaseEstimator, ClassifierMixin):
    """Per-cluster calibrated classifier with a held-out calibration fold.

    When ``groups`` is passed to :meth:`fit`, the calibration fold holds out
    whole groups (20% by default); otherwise a seeded random row split is
    used. ``n_clusters=1`` gives a single global calibrated classifier.
    """

    def __init__(
        self,
        learner="qda",
        n_clusters=1,
        holdout_fraction=0.2,
        l2=1e-4,
        batch_size=4096,
        iterations=100,
        random_state=0,
    ):
        self.learner = learner
        self.n_clusters = n_clusters
        self.holdout_fraction = holdout_fraction
        self.l2 = l2
        self.batch_size = batch_size
        self.iterations = iterations
        self.random_state = random_state

    def fit(self, X, y, groups=None):
        X = as_float_matrix(X)
        y = as_binary_labels(y, n=len(X))
        if groups is None:
            rng = np.random.default_rng(self.random_state)
            n_val = max(1, int(round(self.holdout_fraction * len(X))))
            val_idx = rng.choice(len(X), size=n_val, replace=False)
            mask = np.zeros(len(X), dtype=bool)
            mask[val_idx] = True
            train = LabeledSet(X[~mask], np.zeros((~mask).sum(), np.int64), y[~mask])
            validation = LabeledSet(X[mask], np.zeros(mask.sum(), np.int64), y[mask])
        else:
            ds = LabeledSet(X, groups, y)
            train, validation = split_groups_holdout(
                ds, self.holdout_fraction, self.random_state
            )
        config = KMeansConfig(
            batch_size=self.batch_size, iterations=self.iterations, seed=self.random_state
        )
        partition = fit_kmeans(X, int(self.n_clusters), config)
        self.ensemble_ = fit_ensemble(
            train,
            validation,
            partition,
            kind=self.learner,
            seed=self.random_state,
            hyperparameters={"l2": self.l2} if self.learner == "logistic" else None,
        )
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "ensemble_")
        p = self.ensemble_.predict_proba(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)
