"""Evaluation metrics: k-NN cross-validated accuracy, affine-aligned R^2 and
GP posterior-mean imputation."""
import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (NoHiddenEntries, NotPositiveDefinite, RankDeficientDesign, ShapeMismatch,
                     TooFewPoints)
from .kernels import sm_kernel_matrix

REPORT_HEADER = ("metric", "value", "stderr", "config")


@dataclass
class EvalReport:
    metric: str
    value: float
    stderr: float = 0.0
    config: dict = field(default_factory=dict)

    def config_text(self):
        return ";".join(f"{k}={self.config[k]}" for k in sorted(self.config))

    def row(self):
        return [self.metric, repr(float(self.value)), repr(float(self.stderr)), self.config_text()]


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for r in reports:
        writer.writerow(r.row())
    return buf.getvalue()


def stratified_folds(labels, folds, rng):
    """Fold index per point: each class is shuffled and dealt round-robin.

    The dealing continues across classes so fold sizes differ by at most one.
    """
    labels = np.asarray(labels)
    assign = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        assign[idx] = (offset + np.arange(idx.size)) % folds
        offset += idx.size
    return assign


def knn_predict(X_train, y_train, X_test, k=1):
    """Majority vote over the ``k`` nearest training points (ties -> smallest label)."""
    d2 = (np.sum(X_test ** 2, axis=1)[:, None] + np.sum(X_train ** 2, axis=1)[None, :]
          - 2.0 * X_test @ X_train.T)
    # stable sort keeps the lower training index first among equal distances
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    classes = np.unique(y_train)
    pred = np.empty(X_test.shape[0], dtype=y_train.dtype)
    for i, row in enumerate(nearest):
        counts = np.array([np.sum(y_train[row] == c) for c in classes])
        pred[i] = classes[np.argmax(counts)]
    return pred


def knn_cv_accuracy(X, labels, k=1, folds=5, seed=0):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.asarray(labels).ravel()
    if labels.size != X.shape[0]:
        raise ShapeMismatch(f"{labels.size} labels for {X.shape[0]} points")
    if not np.all(labels == np.round(labels)):
        raise ValueError("labels must be integers")
    labels = labels.astype(np.int64)
    if X.shape[0] < folds or folds < 2:
        raise TooFewPoints(f"need N >= folds >= 2, got N={X.shape[0]}, folds={folds}")
    if k < 1:
        raise ValueError("k must be >= 1")
    assign = stratified_folds(labels, folds, np.random.default_rng(seed))
    accs = []
    for f in range(folds):
        test = assign == f
        if not test.any() or test.all():
            continue
        pred = knn_predict(X[~test], labels[~test], X[test], k)
        accs.append(float(np.mean(pred == labels[test])))
    accs = np.asarray(accs)
    stderr = float(accs.std(ddof=1) / np.sqrt(accs.size)) if accs.size > 1 else 0.0
    return EvalReport("knn_accuracy", float(accs.mean()), stderr,
                      {"k": k, "folds": folds, "seed": seed})


def affine_r2(X_est, X_true):
    """R^2 of the best affine map from ``X_est`` onto ``X_true`` (pooled over outputs)."""
    X_est = np.atleast_2d(np.asarray(X_est, dtype=np.float64))
    X_true = np.atleast_2d(np.asarray(X_true, dtype=np.float64))
    N = X_est.shape[0]
    if X_true.shape[0] != N:
        raise ShapeMismatch(f"X_est has {N} rows, X_true has {X_true.shape[0]}")
    if N <= X_est.shape[1] + 1:
        raise TooFewPoints(f"need N > Q + 1, got N={N}, Q={X_est.shape[1]}")
    A = np.column_stack([X_est, np.ones(N)])
    coef, _, rank, sv = np.linalg.lstsq(A, X_true, rcond=None)
    if rank < A.shape[1] or sv[-1] <= 1e-12 * sv[0]:
        raise RankDeficientDesign("estimated latents are affinely dependent")
    resid = X_true - A @ coef
    total = np.sum((X_true - X_true.mean(axis=0)) ** 2)
    return float(1.0 - np.sum(resid ** 2) / total)


def impute_posterior_mean(Y, mask, X_hat, params):
    """Fill hidden entries with the GP posterior mean given each column's observed rows.

    Uses the exact SM kernel at ``X_hat``.  Observed entries are copied unchanged.
    """
    Y = linalg.as_matrix(Y, "Y")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != Y.shape:
        raise ShapeMismatch(f"mask shape {mask.shape} differs from Y {Y.shape}")
    if not mask.any(axis=0).all():
        raise ShapeMismatch("every column needs at least one observed entry")
    out = Y.copy()
    if mask.all():
        return out
    K = sm_kernel_matrix(X_hat, X_hat, params)
    K = 0.5 * (K + K.T)
    s2 = params.sigma2
    patterns = {}
    for j in np.flatnonzero(~mask.all(axis=0)):
        patterns.setdefault(mask[:, j].tobytes(), []).append(j)
    for cols in patterns.values():
        obs = mask[:, cols[0]]
        Koo = K[np.ix_(obs, obs)] + s2 * np.eye(int(obs.sum()))
        Yo = Y[np.ix_(obs, cols)]
        try:
            _, alpha = linalg.cholesky_logdet_solve(Koo, Yo)
        except NotPositiveDefinite:
            Koo[np.diag_indices_from(Koo)] += 1e-8
            _, alpha = linalg.cholesky_logdet_solve(Koo, Yo)
        out[np.ix_(~obs, cols)] = K[np.ix_(~obs, obs)] @ alpha
    return out


def imputation_mse(Y_imputed, Y_truth, mask):
    mask = np.asarray(mask, dtype=bool)
    hidden = ~mask
    if not hidden.any():
        raise NoHiddenEntries("mask hides no entries")
    diff = np.asarray(Y_imputed, dtype=np.float64)[hidden] - np.asarray(Y_truth)[hidden]
    return float(np.mean(diff * diff))


def column_mean_impute(Y, mask):
    """Baseline: hidden entries replaced by their column's observed mean."""
    Y = linalg.as_matrix(Y, "Y")
    mask = np.asarray(mask, dtype=bool)
    means = np.where(mask, Y, 0.0).sum(axis=0) / np.maximum(mask.sum(axis=0), 1)
    return np.where(mask, Y, means)
