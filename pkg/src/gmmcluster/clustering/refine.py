"""Refinement of one part by threshold splits and Frobenius splits.

Every refiner proposes two-way splits of a part, scores them by the
log-likelihood gain of fitting one Gaussian per side instead of one for the
whole part, and keeps the best ``list_cap`` of them.  Threshold sweeps along
a direction are scored in one pass over the sorted projections.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from ..model import Dataset, isotropize
from ..moments import SymMomentTensor, empirical_moment
from ..rounding import RoundingConfig, Subspace, round_orthogonal
from ..sos.solver import SolverSettings
from ..systems import CenteredSystemParams, SharedCovSystemParams, centered_system, shared_cov_system
from .frobenius import FrobeniusConfig, frobenius_split
from .partial import PartialClustering

log = logging.getLogger(__name__)

MAX_EPS_GRID = 40


@dataclass
class RefinementConfig:
    """Knobs of both refiners.

    Attributes:
        separation: the separation parameter; the eps grid is
            {1/separation, 2/separation, ...} up to ``eps_max``.
        w_min: smallest mixing weight.
        eps_grid: explicit eps values; overrides the geometric grid.
        eps_max: largest eps of the geometric grid.
        gamma: closeness parameter of the rounding.
        complement_factor: slack of the complement system as a multiple of eps.
        rank_cap: iteration cap of the rounding (None: the rounding default).
        dim_cap: subspaces of larger dimension are discarded.
        time_budget: wall-clock seconds per rounding call; a call that runs
            over is discarded.
        net_resolution: resolution of the random net; it has
            (1 + 2/resolution)^dim points, capped at ``net_cap``.
        net_cap: cap on the number of random net points.
        n_thresholds: thresholds per direction for two-sided splits,
            geometric in [eps, 2/w_min].
        n_thresholds_one_sided: thresholds per direction for one-sided
            splits, uniform in [-2/sqrt(w_min), 2/sqrt(w_min)].
        list_cap: proposals kept per refinement call.
        min_part: parts smaller than this are not refined.
        frobenius_rounds: restarts of the Frobenius-split proxy (0 disables).
        certificate_degree: proof degree of the complement system for the
            shared-covariance refiner; the moment orders used are capped at it.
        deviation_branch: also round the directions of large moment
            deviation in the shared-covariance refiner.
        seed: base seed of the nets and the rounding samplers.
    """

    separation: float = 64.0
    w_min: float = 0.5
    eps_grid: Optional[List[float]] = None
    eps_max: float = 0.1
    gamma: float = 0.6
    complement_factor: float = 1.0
    rank_cap: Optional[int] = None
    dim_cap: int = 16
    time_budget: float = 120.0
    net_resolution: float = 0.25
    net_cap: int = 4096
    n_thresholds: int = 24
    n_thresholds_one_sided: int = 101
    list_cap: int = 64
    min_part: int = 50
    frobenius_rounds: int = 64
    certificate_degree: int = 4
    deviation_branch: bool = True
    seed: int = 0
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.separation <= 1 or not 0 < self.w_min <= 1:
            raise ValueError("separation must exceed 1 and w_min lie in (0, 1]")
        if self.eps_grid is not None and (not self.eps_grid or min(self.eps_grid) <= 0):
            raise ValueError("eps grid must be nonempty and positive")
        for name in ("net_resolution", "time_budget", "eps_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("net_cap", "n_thresholds", "n_thresholds_one_sided", "list_cap", "dim_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")

    def eps_values(self) -> List[float]:
        if self.eps_grid is not None:
            return [float(e) for e in self.eps_grid]
        out, e = [], 1.0 / self.separation
        while e <= self.eps_max * (1 + 1e-12) and len(out) < MAX_EPS_GRID:
            out.append(e)
            e *= 2.0
        return out or [min(1.0 / self.separation, self.eps_max)]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["solver"] = self.solver.to_dict()
        out["eps_values"] = self.eps_values()
        return out


@dataclass
class Proposal:
    """A scored split of a part: ``mask`` marks the members of the new part."""

    gain: float
    mask: np.ndarray
    branch: str
    info: dict


# scoring ---------------------------------------------------------------------

def _nll_terms(counts: np.ndarray, sums: np.ndarray, outer: np.ndarray, d: int) -> np.ndarray:
    """n/2 log det of the MLE covariance for each (count, sum, sum of xx^T)."""
    c = np.maximum(counts, 1.0)
    mu = sums / c[:, None]
    S = outer / c[:, None, None] - mu[:, :, None] * mu[:, None, :]
    S = S + 1e-9 * np.eye(d)
    sign, logdet = np.linalg.slogdet(S)
    logdet = np.where(sign > 0, logdet, np.inf)
    return 0.5 * counts * logdet


class SplitScorer:
    """Log-likelihood gains of two-way splits of the rows of Y.

    The gain of a split is the increase of the maximized Gaussian
    log-likelihood (with mixing weights) from one component to two; sides
    with at most d rows score -inf.  Row sums of x and x x^T are cached so
    a whole threshold sweep costs one sparse product.
    """

    def __init__(self, Y: np.ndarray):
        self.Y = np.asarray(Y, dtype=float)
        n, d = self.Y.shape
        self.n, self.d = n, d
        self.F = np.hstack([self.Y, (self.Y[:, :, None] * self.Y[:, None, :]).reshape(n, d * d)])
        self.total = self.F.sum(axis=0)
        self.whole = float(self._half_logdet(np.array([float(n)]), self.total[None])[0])

    def _half_logdet(self, counts: np.ndarray, F: np.ndarray) -> np.ndarray:
        d = self.d
        c = np.maximum(counts, 1.0)
        mu = F[:, :d] / c[:, None]
        S = F[:, d:].reshape(-1, d, d) / c[:, None, None] - mu[:, :, None] * mu[:, None, :]
        S = S + 1e-9 * np.eye(d)
        sign, logdet = np.linalg.slogdet(S)
        return 0.5 * counts * np.where(sign > 0, logdet, np.inf)

    def gains_from_bins(self, bins: np.ndarray, n_cuts: int) -> np.ndarray:
        """Gains of the nested splits {bins <= j} versus the rest, j < n_cuts.

        ``bins`` may be a matrix with one column per direction; the result
        then has one row per direction.
        """
        bins = np.asarray(bins, dtype=np.int64)
        single = bins.ndim == 1
        if single:
            bins = bins[:, None]
        n, m = bins.shape
        T = n_cuts + 1
        rows = (bins + T * np.arange(m)[None, :]).ravel()
        cols = np.repeat(np.arange(n), m)
        B = sparse.csr_matrix((np.ones(n * m), (rows, cols)), shape=(m * T, n))
        seg = np.asarray(B @ self.F).reshape(m, T, -1)[:, :n_cuts]
        counts = np.stack([np.bincount(bins[:, j], minlength=T)[:n_cuts] for j in range(m)])
        left = np.cumsum(seg, axis=1).reshape(m * n_cuts, -1)
        n1 = np.cumsum(counts, axis=1).ravel().astype(float)
        n2 = n - n1
        a = self._half_logdet(n1, left)
        b = self._half_logdet(n2, self.total[None] - left)
        with np.errstate(divide="ignore", invalid="ignore"):
            mix = n1 * np.log(n1 / n) + n2 * np.log(n2 / n)
            gain = self.whole - a - b + mix
        gain[(n1 <= self.d) | (n2 <= self.d) | ~np.isfinite(gain)] = -np.inf
        gain = gain.reshape(m, n_cuts)
        return gain[0] if single else gain

    def sweep(self, proj: np.ndarray, taus: np.ndarray, two_sided: bool) -> np.ndarray:
        """Gains of the splits {key <= tau} for increasing taus (key = |proj| or proj).

        ``proj`` may be an n x m matrix of projections; the gains are then m x len(taus).
        """
        key = np.abs(proj) if two_sided else proj
        bins = np.searchsorted(taus, key.ravel(), side="left").reshape(key.shape)
        return self.gains_from_bins(bins, len(taus))

    def mask_gain(self, mask: np.ndarray) -> float:
        return float(self.gains_from_bins((~np.asarray(mask, bool)).astype(np.int64), 1)[0])


def split_gain(Y: np.ndarray, mask: np.ndarray) -> float:
    """Gain of splitting the rows of Y into mask and its complement."""
    return SplitScorer(Y).mask_gain(mask)


# nets and subspaces ----------------------------------------------------------

def net_vectors(basis: np.ndarray, resolution: float, cap: int, rng: np.random.Generator) -> np.ndarray:
    """Rows: basis vectors, normalized pairwise sums and differences, random unit vectors of the span."""
    d, r = basis.shape
    if r == 0:
        return np.zeros((0, d))
    rows = [basis.T]
    pairs = [(i, j) for i in range(r) for j in range(i + 1, r)]
    if pairs:
        P = np.array([basis[:, i] + s * basis[:, j] for i, j in pairs for s in (1.0, -1.0)])
        rows.append(P / math.sqrt(2.0))
    count = int(min(cap, math.ceil((1.0 + 2.0 / resolution) ** r)))
    G = rng.standard_normal((count, r))
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    rows.append(G @ basis.T)
    return np.vstack(rows)


def _guarded(sub: Subspace, cfg: RefinementConfig) -> np.ndarray:
    if sub.stop_reason == "time_budget" or sub.rank > cfg.dim_cap:
        return np.zeros((sub.d, 0))
    return sub.basis


def _rounding_cfg(cfg: RefinementConfig, eps: float, t: int, seed: int, r_hint: int = 1) -> RoundingConfig:
    return RoundingConfig(gamma=cfg.gamma, t=t, eps=cfg.complement_factor * eps, rank_cap=cfg.rank_cap,
                          r_hint=r_hint, seed=seed, solver=cfg.solver, time_budget=cfg.time_budget)


class _Collector:
    """Keeps the best proposals, deduplicated by the split they induce."""

    def __init__(self, Y: np.ndarray):
        self.scorer = SplitScorer(Y)
        self.items: List[tuple] = []

    def add_sweeps(self, P: np.ndarray, taus: np.ndarray, two_sided: bool, branch: str, info: dict,
                   chunk: int = 128):
        """Threshold sweeps along every column of P."""
        for lo in range(0, P.shape[1], chunk):
            G = self.scorer.sweep(P[:, lo:lo + chunk], taus, two_sided)
            for c, j in zip(*np.nonzero(np.isfinite(G))):
                col = lo + int(c)
                self.items.append((float(G[c, j]), len(self.items), branch,
                                   dict(info, net_index=col, tau=float(taus[j])), None,
                                   (P[:, col], float(taus[j]), two_sided)))

    def add_mask(self, mask: np.ndarray, branch: str, info: dict):
        g = self.scorer.mask_gain(mask)
        if np.isfinite(g):
            self.items.append((g, len(self.items), branch, info, mask, None))

    def best(self, cap: int) -> List[Proposal]:
        self.items.sort(key=lambda it: (-it[0], it[1]))
        out: List[Proposal] = []
        seen = set()
        for g, _, branch, info, mask, rule in self.items:
            if mask is None:
                proj, tau, two_sided = rule
                mask = (np.abs(proj) > tau) if two_sided else (proj > tau)
            if mask[0]:
                mask = ~mask
            key = mask.tobytes()
            if key in seen or mask.all() or not mask.any():
                continue
            seen.add(key)
            out.append(Proposal(g, mask, branch, info))
            if len(out) >= cap:
                break
        return out


def _as_dataset(Y: np.ndarray) -> Dataset:
    n = len(Y)
    return Dataset(Y, np.zeros(n, dtype=np.int64), np.zeros(n, dtype=bool))


def _finish(clustering: PartialClustering, part: int, proposals: Sequence[Proposal],
            parent: Optional[int]) -> List[PartialClustering]:
    return [clustering.split_part(part, p.mask, p.branch, parent) for p in proposals]


# refiners --------------------------------------------------------------------

def propose_centered(Y: np.ndarray, cfg: RefinementConfig, seed: int = 0,
                     diagnostics: Optional[dict] = None) -> List[Proposal]:
    """Split proposals for one part of a centered mixture."""
    n, d = Y.shape
    if n < max(cfg.min_part, 2 * (d + 1)):
        return []
    col = _Collector(Y)
    if cfg.frobenius_rounds > 0:
        for j, mask in enumerate(frobenius_split(Y, FrobeniusConfig(cfg.frobenius_rounds, seed=seed))):
            col.add_mask(mask, "frobenius", {"round": j})
    rng = np.random.default_rng(seed)
    subspaces = []
    for e_idx, eps in enumerate(cfg.eps_values()):
        try:
            T, iso = isotropize(_as_dataset(Y), trim_fraction=min(eps, 0.5))
        except ValueError:
            continue
        Z = iso.points
        M4 = empirical_moment(Z, 4)
        A = centered_system(M4, CenteredSystemParams(eps=eps, w_min=cfg.w_min))
        sub = round_orthogonal(A, _rounding_cfg(cfg, eps, 2, seed + e_idx))
        basis = _guarded(sub, cfg)
        subspaces.append({"eps": eps, "rank": sub.rank, "used_rank": basis.shape[1],
                          "stop_reason": sub.stop_reason})
        if basis.shape[1] == 0:
            continue
        V = net_vectors(basis, cfg.net_resolution, cfg.net_cap, rng)
        taus = np.geomspace(eps, 2.0 / cfg.w_min, cfg.n_thresholds)
        col.add_sweeps(Z @ V.T, taus, True, "spectral", {"eps": eps})
    if diagnostics is not None:
        diagnostics.setdefault("subspaces", []).extend(subspaces)
    return col.best(cfg.list_cap)


def gaussian_quartic(d: int) -> np.ndarray:
    """Flattened fourth moment tensor of N(0, I_d) as a d^2 x d^2 matrix."""
    I = np.eye(d)
    G = (np.einsum("ab,ce->abce", I, I) + np.einsum("ac,be->abce", I, I)
         + np.einsum("ae,bc->abce", I, I))
    return G.reshape(d * d, d * d)


def deviation_directions(M4: SymMomentTensor, keep: float = 0.5) -> List[Subspace]:
    """Directions of extreme fourth-moment deviation from the Gaussian value.

    For each sign, the top eigenvector of the flattened deviation tensor is
    folded back into a symmetric d x d matrix W; the eigenvectors of W whose
    eigenvalues reach ``keep`` times the largest in magnitude span the
    returned subspace.  This is the degree-4 spectral relaxation of
    maximizing the deviation over the sphere.
    """
    d = M4.d
    D = M4.dense().reshape(d * d, d * d) - gaussian_quartic(d)
    lam, U = np.linalg.eigh(0.5 * (D + D.T))
    out = []
    for j, name in ((-1, "positive"), (0, "negative")):
        W = U[:, j].reshape(d, d)
        mu, V = np.linalg.eigh(0.5 * (W + W.T))
        top = np.abs(mu).max()
        basis = V[:, np.abs(mu) >= keep * top]
        out.append(Subspace(d, basis, stop_reason=f"deviation_{name}"))
    return out


def propose_shared_cov(Y: np.ndarray, cfg: RefinementConfig, seed: int = 0,
                       diagnostics: Optional[dict] = None) -> List[Proposal]:
    """Split proposals for one part of an identical-covariance mixture."""
    n, d = Y.shape
    if n < max(cfg.min_part, 2 * (d + 1)):
        return []
    col = _Collector(Y)
    rng = np.random.default_rng(seed)
    t_cert = cfg.certificate_degree
    subspaces = []
    half = 2.0 / math.sqrt(cfg.w_min)
    taus = np.linspace(-half, half, cfg.n_thresholds_one_sided)
    for e_idx, eps in enumerate(cfg.eps_values()):
        try:
            T, iso = isotropize(_as_dataset(Y), trim_fraction=min(eps, 0.5))
        except ValueError:
            continue
        Z = iso.points
        params = SharedCovSystemParams(eps=eps, w_min=cfg.w_min)
        params.t_max = max(2, min(params.t_max, t_cert // 2))
        moments = {2 * t: empirical_moment(Z, 2 * t) for t in range(1, params.t_max + 1)}
        A = shared_cov_system(moments, params)
        sub = round_orthogonal(A, _rounding_cfg(cfg, eps, t_cert, seed + e_idx, r_hint=1))
        found = [("complement", sub)]
        if cfg.deviation_branch and e_idx == 0:
            found += [("deviation", s) for s in deviation_directions(moments[4])]
        for branch, s in found:
            basis = _guarded(s, cfg)
            subspaces.append({"eps": eps, "branch": branch, "rank": s.rank, "used_rank": basis.shape[1],
                              "stop_reason": s.stop_reason})
            if basis.shape[1] == 0:
                continue
            V = net_vectors(basis, cfg.net_resolution, cfg.net_cap, rng)
            col.add_sweeps(Z @ V.T, taus, False, "mean", {"eps": eps, "source": branch})
    if diagnostics is not None:
        diagnostics.setdefault("subspaces", []).extend(subspaces)
    return col.best(cfg.list_cap)


def refine_centered(clustering: PartialClustering, part: int, X: np.ndarray, cfg: RefinementConfig,
                    seed: int = 0, parent: Optional[int] = None,
                    diagnostics: Optional[dict] = None) -> List[PartialClustering]:
    """Refinements of ``clustering`` that split ``part`` in two (centered mixtures)."""
    members = np.flatnonzero(clustering.labels == part)
    try:
        props = propose_centered(X[members], cfg, seed, diagnostics)
    except Exception as exc:  # a failed subsystem contributes nothing
        log.warning("centered refinement failed: %s", exc)
        return []
    return _finish(clustering, part, props, parent)


def refine_shared_cov(clustering: PartialClustering, part: int, X: np.ndarray, cfg: RefinementConfig,
                      seed: int = 0, parent: Optional[int] = None,
                      diagnostics: Optional[dict] = None) -> List[PartialClustering]:
    """Refinements of ``clustering`` that split ``part`` in two (shared covariance)."""
    members = np.flatnonzero(clustering.labels == part)
    try:
        props = propose_shared_cov(X[members], cfg, seed, diagnostics)
    except Exception as exc:
        log.warning("shared-covariance refinement failed: %s", exc)
        return []
    return _finish(clustering, part, props, parent)
