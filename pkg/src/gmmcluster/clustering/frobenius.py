"""Splits from 2-means on whitened quadratic features.

A stand-in for a full Frobenius-separation clustering routine: components
whose covariances differ in Frobenius norm after whitening also differ in
the mean of the lifted features x x^T, so 2-means in a few principal
directions of the lift often separates them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy import stats
from scipy.cluster.vq import kmeans2

from ..model import whitening_transform

log = logging.getLogger(__name__)


@dataclass
class FrobeniusConfig:
    rounds: int = 64
    n_components: int = 5
    seed: int = 0


def quadratic_features(X: np.ndarray) -> np.ndarray:
    """Upper triangle of x x^T per row, off-diagonal entries scaled by sqrt 2."""
    n, d = X.shape
    iu, ju = np.triu_indices(d)
    scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
    return X[:, iu] * X[:, ju] * scale


def frobenius_split(X: np.ndarray, cfg: FrobeniusConfig) -> List[np.ndarray]:
    """Boolean masks, one per distinct nontrivial 2-means split of the rows of X."""
    n, d = X.shape
    if n < d + 1:
        raise ValueError("need at least d + 1 points")
    try:
        T = whitening_transform(X)
    except ValueError:
        log.info("frobenius_split skipped: degenerate covariance")
        return []
    F = quadratic_features(T.apply(X))
    F -= F.mean(axis=0)
    # principal directions of the lift via the small Gram matrix
    C = F.T @ F / n
    lam, U = np.linalg.eigh(C)
    m = min(cfg.n_components, F.shape[1])
    Y = F @ U[:, ::-1][:, :m]
    # lifted coordinates are heavy tailed; ranks keep 2-means off the tail
    Y = stats.rankdata(Y, axis=0) / n
    rng = np.random.default_rng(cfg.seed)
    seen = set()
    out: List[np.ndarray] = []
    # one pass per principal direction alone, then restarts in the joint space
    views = [Y[:, [j]] for j in range(m)] + [Y] * cfg.rounds
    for Z in views:
        _, lab = kmeans2(Z, 2, minit="++", seed=rng)
        mask = lab == 1
        if mask.all() or not mask.any():
            continue
        if mask[0]:
            mask = ~mask
        key = mask.tobytes()
        if key in seen:
            continue
        seen.add(key)
        out.append(mask)
    return out
