"""Synthetic S-curve data, CSV matrix I/O and missing-entry masks."""
import csv
import io
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import linalg
from .errors import KernelNotPD, NonNumericField, NotPositiveDefinite, RaggedRows, ShapeMismatch
from .kernels import BaseKernelConfig, base_kernel_matrix

LATENT_JITTER_SD = 0.01
LABEL_BINS = 4


@dataclass
class Dataset:
    Y: np.ndarray
    X_true: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None   # True = observed

    def __post_init__(self):
        self.Y = linalg.as_matrix(self.Y, "Y")
        N, M = self.Y.shape
        if self.X_true is not None:
            self.X_true = np.atleast_2d(np.asarray(self.X_true, dtype=np.float64))
            if self.X_true.shape[0] != N:
                raise ShapeMismatch(f"X_true has {self.X_true.shape[0]} rows, Y has {N}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if self.labels.size != N:
                raise ShapeMismatch(f"{self.labels.size} labels for {N} rows")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != (N, M):
                raise ShapeMismatch(f"mask shape {self.mask.shape} differs from Y {(N, M)}")
            if not self.mask.any(axis=0).all():
                raise ShapeMismatch("every column needs at least one observed entry")

    @property
    def N(self):
        return self.Y.shape[0]

    @property
    def M(self):
        return self.Y.shape[1]


def s_curve_latents(N, rng):
    t = np.linspace(-1.5 * np.pi, 1.5 * np.pi, N)
    X = np.column_stack([np.sin(t), np.sign(t) * (np.cos(t) - 1.0)])
    return X + LATENT_JITTER_SD * rng.standard_normal(X.shape), t


def _curve_labels(t):
    edges = np.linspace(t.min(), t.max(), LABEL_BINS + 1)[1:-1]
    return np.digitize(t, edges)


def sample_gp_columns(K, M, rng):
    """``M`` i.i.d. draws from ``N(0, K)`` as the columns of an N x M matrix."""
    try:
        C = linalg.cholesky(K)
    except NotPositiveDefinite:
        try:
            C = linalg.cholesky(K + 1e-8 * np.eye(K.shape[0]))
        except NotPositiveDefinite as exc:
            raise KernelNotPD("generating covariance is not positive definite") from exc
    return C @ rng.standard_normal((K.shape[0], M))


def make_s_curve_dataset(N, M, kernel_cfg=None, noise_var=0.01, seed=0):
    """Observations from a GP over a jittered planar S-shaped latent curve.

    Labels split the curve parameter into four equal-length segments.
    """
    if N < 2:
        raise ValueError("need N >= 2")
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    kernel_cfg = kernel_cfg if kernel_cfg is not None else BaseKernelConfig()
    rng = np.random.default_rng(seed)
    X, t = s_curve_latents(N, rng)
    K = base_kernel_matrix(X, X, kernel_cfg)
    K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] += noise_var
    Y = sample_gp_columns(K, M, rng)
    return Dataset(Y=Y, X_true=X, labels=_curve_labels(t))


def apply_missing_mask(ds, p, seed=0):
    """Hide each entry independently with probability ``p``.

    Columns that end up fully hidden are redrawn until they keep an entry.
    The underlying ``Y`` is untouched; only the mask changes.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"missing fraction must lie in [0, 1), got {p}")
    rng = np.random.default_rng(seed)
    mask = rng.random(ds.Y.shape) >= p
    while True:
        empty = np.flatnonzero(~mask.any(axis=0))
        if empty.size == 0:
            break
        mask[:, empty] = rng.random((ds.N, empty.size)) >= p
    return replace(ds, mask=mask)


def _parse_float(text):
    try:
        v = float(text)
    except ValueError:
        return None
    return v


def _read_rows(path):
    with open(path, newline="") as fh:
        text = fh.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    return rows


def load_matrix(path, format="csv"):
    """Read a numeric CSV into a :class:`Dataset`.

    A first row with any non-numeric field is taken as a header.  With
    ``format="labels-csv"`` the last column holds integer labels.
    """
    if format not in ("csv", "labels-csv"):
        raise ValueError(f"unknown matrix format {format!r}")
    rows = _read_rows(path)
    start = 0
    if rows and any(_parse_float(c) is None for c in rows[0]):
        start = 1
    body = rows[start:]
    if not body:
        raise RaggedRows(f"{path}: no data rows", row=start)
    width = len(body[0])
    values = np.empty((len(body), width))
    for i, row in enumerate(body):
        if len(row) != width:
            raise RaggedRows(f"{path}: row {i + start} has {len(row)} fields, expected {width}",
                             row=i + start)
        for j, cell in enumerate(row):
            v = _parse_float(cell)
            if v is None:
                raise NonNumericField(f"{path}: non-numeric field {cell!r} at row {i + start}, "
                                      f"column {j}", row=i + start, col=j)
            values[i, j] = v
    if format == "csv":
        return Dataset(Y=values)
    lab = values[:, -1]
    if not np.all(lab == np.round(lab)):
        bad = int(np.flatnonzero(lab != np.round(lab))[0])
        raise NonNumericField(f"{path}: label at row {bad + start} is not an integer",
                              row=bad + start, col=width - 1)
    return Dataset(Y=values[:, :-1], labels=lab.astype(np.int64))


def format_matrix(A, header=None):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    lines = [",".join(header)] if header else []
    lines += [",".join(repr(float(v)) for v in row) for row in A]
    return "\n".join(lines) + "\n"


def save_matrix(path, A, header=None):
    """Write ``A`` with shortest round-trip float formatting (LF line endings)."""
    with open(path, "w", newline="") as fh:
        fh.write(format_matrix(A, header))
