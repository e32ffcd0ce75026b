"""Component fits and tournament selection among candidate clusterings."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..model import MixtureModel
from .partial import PartialClustering

log = logging.getLogger(__name__)

MIN_EIG = 1e-9


def fit_component(X: np.ndarray, eps: float = 0.0, rounds: int = 3) -> Tuple[np.ndarray, np.ndarray]:
    """Trimmed mean and covariance of the rows of X.

    Each round drops the eps fraction of rows with the largest Mahalanobis
    distance under the current fit.  The covariance is floored at MIN_EIG.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    n_keep = n - int(np.floor(eps * n))
    if n_keep < d + 1:
        raise ValueError("too few points to fit a component")
    keep = np.arange(n)
    mu, S = _moments(X)
    if eps > 0:
        for _ in range(rounds):
            L = np.linalg.cholesky(S)
            Z = np.linalg.solve(L, (X - mu).T)
            dist = np.sum(Z * Z, axis=0)
            keep = np.sort(np.argsort(dist, kind="stable")[:n_keep])
            mu, S = _moments(X[keep])
    return mu, S


def _moments(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mu = X.mean(axis=0)
    R = X - mu
    S = R.T @ R / len(X)
    S = 0.5 * (S + S.T)
    lam, U = np.linalg.eigh(S)
    if lam[0] < MIN_EIG:
        S = (U * np.maximum(lam, MIN_EIG)) @ U.T
        S = 0.5 * (S + S.T)
    return mu, S


def fit_mixture(X: np.ndarray, clustering: PartialClustering, eps: float = 0.0) -> Optional[MixtureModel]:
    """Per-part fits with empirical weights; None when some part is too small."""
    parts = clustering.parts
    means, covs = [], []
    try:
        for p in parts:
            mu, S = fit_component(X[p], eps)
            means.append(mu)
            covs.append(S)
    except (ValueError, np.linalg.LinAlgError):
        return None
    w = np.array([len(p) for p in parts], dtype=float)
    return MixtureModel(w / w.sum(), np.array(means), np.array(covs))


@dataclass
class SelectionConfig:
    """Settings of the tournament.

    Attributes:
        eps: trimming fraction of the component fits.
        top_k: number of candidates kept (by holdout log-likelihood) for the
            pairwise tournament.
        mc_samples: draws per hypothesis used to estimate the mass of each
            Scheffe set.
        seed: seed of those draws.
    """

    eps: float = 0.01
    top_k: int = 16
    mc_samples: int = 20000
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SelectionResult:
    labels: np.ndarray
    winner: int
    model: MixtureModel
    scores: List[float]
    wins: List[int]
    finalists: List[int]

    def to_dict(self) -> dict:
        return {"winner": self.winner, "finalists": self.finalists, "wins": self.wins,
                "holdout_loglik": [None if not np.isfinite(s) else s for s in self.scores]}


def _sample(model: MixtureModel, m: int, rng: np.random.Generator) -> np.ndarray:
    lab = rng.choice(model.k, size=m, p=model.weights)
    Z = rng.standard_normal((m, model.d))
    out = np.empty_like(Z)
    for i in range(model.k):
        rows = lab == i
        L = np.linalg.cholesky(model.covariances[i])
        out[rows] = Z[rows] @ L.T + model.means[i]
    return out


def scheffe_tournament(models: Sequence[MixtureModel], holdout: np.ndarray, mc_samples: int,
                       seed: int) -> List[int]:
    """Win counts of the pairwise Scheffe comparisons.

    For each pair (a, b) the set A = {x : p_a(x) > p_b(x)} is compared on the
    holdout; the hypothesis whose own mass of A is closer to the empirical
    one wins.  Ties go to the earlier hypothesis.
    """
    rng = np.random.default_rng(seed)
    m = len(models)
    draws = [_sample(h, mc_samples, rng) for h in models]
    ll_hold = [h.logpdf(holdout) for h in models]
    ll_draw = [[models[a].logpdf(draws[b]) for a in range(m)] for b in range(m)]
    wins = [0] * m
    for a in range(m):
        for b in range(a + 1, m):
            emp = np.mean(ll_hold[a] > ll_hold[b])
            pa = np.mean(ll_draw[a][a] > ll_draw[a][b])
            pb = np.mean(ll_draw[b][a] > ll_draw[b][b])
            if abs(pa - emp) <= abs(pb - emp):
                wins[a] += 1
            else:
                wins[b] += 1
    return wins


def select_clustering(candidates: Sequence[PartialClustering], X1: np.ndarray, X2: np.ndarray,
                      X_all: np.ndarray, cfg: Optional[SelectionConfig] = None) -> SelectionResult:
    """Pick a candidate clustering of X1 using the holdout X2, then label X_all.

    Candidates are fitted part by part on X1, ranked by mean holdout
    log-likelihood, and the best ``top_k`` meet in a Scheffe tournament.  The
    winner's mixture assigns every row of X_all to its most likely weighted
    component.
    """
    cfg = cfg or SelectionConfig()
    if not candidates:
        raise ValueError("no candidates")
    models: List[Optional[MixtureModel]] = []
    scores: List[float] = []
    for cand in candidates:
        if cand.n != len(X1):
            raise ValueError("candidate does not cluster X1")
        h = fit_mixture(X1, cand, cfg.eps)
        models.append(h)
        scores.append(float(np.mean(h.logpdf(X2))) if h is not None else -np.inf)
    ok = [i for i, h in enumerate(models) if h is not None]
    if not ok:
        raise ValueError("every candidate fit failed")
    # stable sort keeps list order among equal scores
    finalists = sorted(ok, key=lambda i: -scores[i])[: cfg.top_k]
    finalists.sort()
    wins = scheffe_tournament([models[i] for i in finalists], X2, cfg.mc_samples, cfg.seed)
    best = max(range(len(finalists)), key=lambda j: (wins[j], -j))
    winner = finalists[best]
    h = models[winner]
    labels = np.argmax(h.component_logpdf(X_all) + np.log(h.weights)[None, :], axis=1)
    log.debug("selection: %d candidates, %d finalists, winner %d", len(candidates), len(finalists), winner)
    return SelectionResult(labels, winner, h, scores, wins, finalists)
