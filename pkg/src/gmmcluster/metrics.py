"""Clustering accuracy and subspace diagnostics."""

from __future__ import annotations

from typing import Dict, List

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import MixtureModel


def overlap_matrix(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """counts[p, i] = |{j : pred_j = p, truth_j = i}| over rows with truth >= 0."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    keep = truth >= 0
    kp = int(pred.max()) + 1 if pred.size else 0
    kt = int(truth[keep].max()) + 1 if keep.any() else 0
    out = np.zeros((kp, kt), dtype=np.int64)
    np.add.at(out, (pred[keep], truth[keep]), 1)
    return out


def min_recall(pred: np.ndarray, truth: np.ndarray) -> float:
    """min_i |S_hat_pi(i) cap S_i| / |S_i| under the best matching pi.

    Corrupted rows (truth -1) are ignored.  The matching maximizes the total
    recall (Hungarian algorithm); components left unmatched score 0.
    """
    C = overlap_matrix(pred, truth)
    if C.size == 0:
        return 1.0
    sizes = C.sum(axis=0).astype(float)
    R = C / np.maximum(sizes, 1.0)[None, :]
    rows, cols = linear_sum_assignment(-R)
    rec = np.zeros(C.shape[1])
    rec[cols] = R[rows, cols]
    return float(rec[sizes > 0].min())


def max_angle(basis: np.ndarray, directions: np.ndarray) -> List[float]:
    """Angle in degrees between each row of ``directions`` and span(basis)."""
    out = []
    for v in np.atleast_2d(directions):
        v = v / np.linalg.norm(v)
        c = float(np.linalg.norm(basis.T @ v)) if basis.shape[1] else 0.0
        out.append(float(np.degrees(np.arccos(min(1.0, c)))))
    return out


def whitened_flat_directions(model: MixtureModel, linear: np.ndarray, cutoff: float = 0.5) -> np.ndarray:
    """Rows: low-variance eigenvectors of the whitened component covariances."""
    out = []
    for S in model.covariances:
        lam, U = np.linalg.eigh(linear @ S @ linear.T)
        for j in np.flatnonzero(lam < cutoff * np.median(lam)):
            out.append(U[:, j])
    return np.array(out).reshape(-1, linear.shape[0])


def whitened_mean_directions(model: MixtureModel, linear: np.ndarray) -> np.ndarray:
    """Rows: orthonormal basis of the span of the whitened mean differences."""
    M = (model.means[1:] - model.means[0]) @ linear.T
    if len(M) == 0:
        return np.zeros((0, linear.shape[0]))
    U, s, _ = np.linalg.svd(M.T, full_matrices=False)
    return U[:, s > 1e-10 * max(s.max(), 1e-300)].T


def summary(values: List[float], threshold: float) -> Dict[str, float]:
    arr = np.asarray(values, dtype=float)
    return {"count": int(arr.size), "passing": int(np.sum(arr >= threshold)),
            "min": float(arr.min()) if arr.size else float("nan"),
            "median": float(np.median(arr)) if arr.size else float("nan")}
