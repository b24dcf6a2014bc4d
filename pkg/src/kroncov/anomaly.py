"""Sliding-window anomaly detection on multivariate frame streams.

A stream of p-dimensional frames is detrended against a nominal training
range, cut into overlapping length-T windows vectorized space-fastest
(matching the covariance layout), scored by Mahalanobis distance against a
fitted covariance, and evaluated with a threshold-sweep ROC.  Windows are
kept for evaluation only when more than 75% of their frames agree on a
label; mixed windows are excluded.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .kron_ops import DenseCovariance, _frozen_array

ANOMALOUS = "anomalous"
NOMINAL = "nominal"
EXCLUDED = "excluded"

LABEL_FRACTION = 0.75  # strict on both sides


@dataclass(frozen=True)
class FrameSeries:
    """Ordered frames with per-frame timestamps and optional 0/1 labels."""

    values: np.ndarray
    timestamps: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 2:
            raise ValueError("frame values must be a 2-d array (frames x coordinates)")
        timestamps = _frozen_array(self.timestamps)
        if timestamps.shape != (values.shape[0],):
            raise ValueError("timestamps must align 1:1 with frames")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", timestamps)
        if self.labels is not None:
            labels = _frozen_array(self.labels, dtype=int)
            if labels.shape != (values.shape[0],):
                raise ValueError("labels must align 1:1 with frames")
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_arrays(cls, values, labels=None, timestamps=None) -> "FrameSeries":
        values = np.asarray(values, dtype=float)
        if timestamps is None:
            timestamps = np.arange(values.shape[0], dtype=float)
        return cls(values, timestamps, labels)

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class WindowSet:
    """Vectorized overlapping windows and their chunk labels."""

    T: int
    stride: int
    starts: np.ndarray
    vectors: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "starts", _frozen_array(self.starts, dtype=int))
        object.__setattr__(self, "vectors", _frozen_array(self.vectors))
        labels = np.asarray(self.labels, dtype="U9")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def detrend(series: FrameSeries, training_range, linear: bool = False) -> FrameSeries:
    """Remove the per-coordinate training mean (and optionally a linear
    trend fit on the training range) from every frame.

    Labels and timestamps pass through; applying detrend twice with the
    same range is a no-op on the already-detrended data.
    """
    start, stop = int(training_range[0]), int(training_range[1])
    if not 0 <= start < stop <= series.n_frames:
        raise ValueError(f"training range [{start}, {stop}) is empty or out of bounds")
    ts = series.timestamps
    values = series.values
    if linear:
        design = np.column_stack([np.ones(stop - start), ts[start:stop]])
        coefs, *_ = np.linalg.lstsq(design, values[start:stop], rcond=None)
        fitted = np.column_stack([np.ones(series.n_frames), ts]) @ coefs
        out = values - fitted
    else:
        out = values - values[start:stop].mean(axis=0)
    return FrameSeries(out, ts, series.labels)


def make_windows(series: FrameSeries, T: int, stride: int = 1) -> WindowSet:
    """Cut the series into overlapping length-T windows.

    Each window is vectorized space-fastest (frames concatenated in time
    order).  A window is labeled anomalous when strictly more than 75% of
    its frames are labeled 1, nominal when strictly more than 75% are 0,
    and excluded otherwise.  Unlabeled series yield nominal windows.
    """
    if T < 1 or stride < 1:
        raise ValueError("window length and stride must be >= 1")
    n = series.n_frames
    if n < T:
        raise ValueError(f"series of {n} frames is shorter than the window length {T}")
    starts = np.arange(0, n - T + 1, stride)
    vectors = np.stack([series.values[s:s + T].reshape(-1) for s in starts])
    frame_labels = series.labels if series.labels is not None else np.zeros(n, dtype=int)
    labels = []
    for s in starts:
        frac = frame_labels[s:s + T].mean()
        if frac > LABEL_FRACTION:
            labels.append(ANOMALOUS)
        elif frac < 1.0 - LABEL_FRACTION:
            labels.append(NOMINAL)
        else:
            labels.append(EXCLUDED)
    return WindowSet(T=T, stride=stride, starts=starts, vectors=vectors,
                     labels=np.array(labels))


def mahalanobis_scores(windows: WindowSet, sigma: DenseCovariance) -> np.ndarray:
    """x^T Sigma^{-1} x per window via a symmetric factorization.

    Requires a usable covariance: minimum eigenvalue above 1e-12 of the
    maximum.  A singular input is exactly the failure mode the structured
    estimators exist to avoid, so it is an error here, not a warning.
    """
    if windows.vectors.shape[1] != sigma.dims.pt:
        raise ValueError(
            f"window length {windows.vectors.shape[1]} does not match covariance "
            f"dimension {sigma.dims.pt}"
        )
    lam, vecs = np.linalg.eigh(sigma.entries)
    if lam[0] <= 1e-12 * lam[-1] or lam[-1] <= 0:
        raise ValueError(
            f"covariance is singular or indefinite (eig range [{lam[0]:.3e}, {lam[-1]:.3e}])"
        )
    whitened = (windows.vectors @ vecs) / np.sqrt(lam)
    return np.einsum("ij,ij->i", whitened, whitened)


def roc(scores, labels) -> RocCurve:
    """Threshold-sweep ROC over anomalous/nominal labels.

    Equal scores share one threshold step; AUC is the trapezoidal
    integral of the resulting curve.  Requires both classes present.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    truth = labels == ANOMALOUS
    n_pos = int(truth.sum())
    n_neg = int(len(truth) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both anomalous and nominal windows")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_truth = truth[order]
    cum_tp = np.cumsum(sorted_truth)
    cum_fp = np.cumsum(~sorted_truth)
    # last index of each tie group
    distinct = np.nonzero(np.diff(sorted_scores, append=-np.inf))[0]
    thresholds = np.concatenate([[np.inf], sorted_scores[distinct]])
    tpr = np.concatenate([[0.0], cum_tp[distinct] / n_pos])
    fpr = np.concatenate([[0.0], cum_fp[distinct] / n_neg])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=auc)


# ---------------------------------------------------------------------------
# CSV interchange

def read_frame_csv(path) -> FrameSeries:
    """Load a frame stream: header row, coordinate columns, optional final
    `label` column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        rows = [row for row in reader if row]
    has_labels = header[-1].strip().lower() == "label"
    data = np.array([[float(v) for v in row] for row in rows])
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: rows do not match the header width")
    if has_labels:
        return FrameSeries.from_arrays(data[:, :-1], labels=data[:, -1].astype(int))
    return FrameSeries.from_arrays(data)


def write_frame_csv(path, series: FrameSeries) -> None:
    cols = [f"c{i}" for i in range(series.p)]
    if series.labels is not None:
        header = ",".join(cols + ["label"])
        data = np.column_stack([series.values, series.labels.astype(float)])
    else:
        header = ",".join(cols)
        data = series.values
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")


def write_roc_csv(path, curve: RocCurve) -> None:
    data = np.column_stack([curve.thresholds, curve.fpr, curve.tpr])
    np.savetxt(path, data, fmt="%.17g", delimiter=",",
               header="threshold,fpr,tpr", comments="")
