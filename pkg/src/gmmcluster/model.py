"""Gaussian mixtures, datasets, corruption and whitening."""

from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.special
from scipy import stats

log = logging.getLogger(__name__)

ADVERSARIES = ("point_mass", "shifted_gaussian", "far_sphere")
_MAGIC = b"GMMD"


@dataclass(eq=False)
class MixtureModel:
    """Mixture sum_i w_i N(mu_i, Sigma_i).

    With ``shared_covariance`` every entry of ``covariances`` is the same
    matrix.  ``centered`` asserts that all means vanish.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    shared_covariance: bool = False
    centered: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covariances, dtype=float)
        if covs.ndim == 2:
            covs = np.broadcast_to(covs, (len(self.weights),) + covs.shape).copy()
        self.covariances = covs
        k = len(self.weights)
        if self.means.shape[0] != k or self.covariances.shape[0] != k:
            raise ValueError("weights, means and covariances disagree on k")
        d = self.means.shape[1]
        if self.covariances.shape[1:] != (d, d):
            raise ValueError("covariance shape does not match the dimension")
        for arr in (self.weights, self.means, self.covariances):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite mixture parameters")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")
        for S in self.covariances:
            if np.max(np.abs(S - S.T)) > 1e-12:
                raise ValueError("covariance is not symmetric")
            if np.linalg.eigvalsh(S)[0] <= 0:
                raise ValueError("covariance is not positive definite")
        if self.shared_covariance and not all(np.array_equal(S, self.covariances[0]) for S in self.covariances):
            raise ValueError("shared_covariance set but covariances differ")
        if self.centered and np.max(np.linalg.norm(self.means, axis=1)) > 1e-12:
            raise ValueError("centered set but some mean is nonzero")

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def w_min(self) -> float:
        return float(self.weights.min())

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        mu = self.mean()
        C = np.zeros((self.d, self.d))
        for w, m, S in zip(self.weights, self.means, self.covariances):
            C += w * (S + np.outer(m - mu, m - mu))
        return C

    def component_logpdf(self, X: np.ndarray) -> np.ndarray:
        """n x k matrix of log N(x; mu_i, Sigma_i)."""
        return np.column_stack([gaussian_logpdf(X, m, S) for m, S in zip(self.means, self.covariances)])

    def logpdf(self, X: np.ndarray) -> np.ndarray:
        L = self.component_logpdf(X) + np.log(np.maximum(self.weights, 1e-300))
        return scipy.special.logsumexp(L, axis=1)

    def transformed(self, A: np.ndarray, b: Optional[np.ndarray] = None) -> "MixtureModel":
        """Model of A x + b."""
        A = np.asarray(A, dtype=float)
        b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
        means = self.means @ A.T + b
        if self.shared_covariance:
            S = A @ self.covariances[0] @ A.T
            S = 0.5 * (S + S.T)
            covs = np.stack([S] * self.k)
        else:
            covs = np.stack([0.5 * (A @ S @ A.T + (A @ S @ A.T).T) for S in self.covariances])
        centered = self.centered and not np.any(b)
        if centered:
            means = np.zeros_like(means)
        return MixtureModel(self.weights.copy(), means, covs, self.shared_covariance, centered)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "d": self.d,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "shared_covariance": self.shared_covariance,
            "centered": self.centered,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MixtureModel":
        model = cls(np.array(data["weights"]), np.array(data["means"]), np.array(data["covariances"]),
                    bool(data.get("shared_covariance", False)), bool(data.get("centered", False)))
        if model.k != int(data.get("k", model.k)) or model.d != int(data.get("d", model.d)):
            raise ValueError("k/d fields disagree with the parameter arrays")
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "MixtureModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def gaussian_logpdf(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    L = np.linalg.cholesky(cov)
    Z = scipy.linalg.solve_triangular(L, (X - mean).T, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (np.sum(Z * Z, axis=0) + logdet + X.shape[1] * np.log(2 * np.pi))


@dataclass(eq=False)
class Dataset:
    """Sample matrix with ground-truth labels (-1 marks corrupted rows)."""

    points: np.ndarray
    true_labels: np.ndarray
    corrupted_mask: np.ndarray
    provenance: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
        self.corrupted_mask = np.asarray(self.corrupted_mask, dtype=bool)
        n = self.points.shape[0]
        if self.true_labels.shape != (n,) or self.corrupted_mask.shape != (n,):
            raise ValueError("labels and mask must have one entry per point")
        if not np.array_equal(self.corrupted_mask, self.true_labels == -1):
            raise ValueError("corrupted_mask must flag exactly the rows labeled -1")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.points[idx], self.true_labels[idx], self.corrupted_mask[idx], dict(self.provenance))

    def with_points(self, points: np.ndarray) -> "Dataset":
        return Dataset(points, self.true_labels.copy(), self.corrupted_mask.copy(), dict(self.provenance))

    def save_binary(self, path) -> None:
        """Header (magic, u32 n, u32 d), f64 points row-major, i32 labels, u8 mask."""
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<II", self.n, self.d))
            fh.write(np.ascontiguousarray(self.points, dtype="<f8").tobytes())
            fh.write(self.true_labels.astype("<i4").tobytes())
            fh.write(self.corrupted_mask.astype(np.uint8).tobytes())

    @classmethod
    def load_binary(cls, path) -> "Dataset":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != _MAGIC:
            raise ValueError("not a GMMD dataset file")
        n, d = struct.unpack("<II", raw[4:12])
        off = 12
        pts = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off).reshape(n, d).copy()
        off += 8 * n * d
        labels = np.frombuffer(raw, dtype="<i4", count=n, offset=off).astype(np.int64)
        off += 4 * n
        mask = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off).astype(bool)
        return cls(pts, labels, mask)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.d)] + ["label", "corrupted"])
            for x, lab, c in zip(self.points, self.true_labels, self.corrupted_mask):
                w.writerow([repr(float(v)) for v in x] + [int(lab), int(c)])


def sample_mixture(model: MixtureModel, n: int, seed: int) -> Dataset:
    """Draw n i.i.d. labeled points; deterministic given the seed."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    labels = rng.choice(model.k, size=n, p=model.weights)
    Z = rng.standard_normal((n, model.d))
    X = np.empty((n, model.d))
    for i in range(model.k):
        rows = labels == i
        L = np.linalg.cholesky(model.covariances[i])
        X[rows] = Z[rows] @ L.T + model.means[i]
    return Dataset(X, labels, np.zeros(n, dtype=bool), {"seed": int(seed), "generator": "sample_mixture"})


def corrupt(data: Dataset, eps: float, adversary: str, seed: int, location: Optional[np.ndarray] = None,
            radius: Optional[float] = None) -> Dataset:
    """Replace floor(eps * n) uniformly chosen rows by adversarial points.

    Adversaries: ``point_mass`` puts every replaced row at ``location``
    (default the origin); ``shifted_gaussian`` draws N(location, I) with the
    default location 10 * e_1; ``far_sphere`` draws uniformly from the
    sphere of ``radius`` (default 100 sqrt(d)).
    """
    if adversary not in ADVERSARIES:
        raise ValueError(f"unknown adversary {adversary!r}")
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    n, d = data.n, data.d
    m = int(np.floor(eps * n))
    if m == 0:
        return data
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=m, replace=False))
    if adversary == "point_mass":
        loc = np.zeros(d) if location is None else np.asarray(location, dtype=float)
        bad = np.tile(loc, (m, 1))
    elif adversary == "shifted_gaussian":
        loc = 10.0 * np.eye(d)[0] if location is None else np.asarray(location, dtype=float)
        bad = loc + rng.standard_normal((m, d))
    else:
        r = 100.0 * np.sqrt(d) if radius is None else float(radius)
        G = rng.standard_normal((m, d))
        bad = r * G / np.linalg.norm(G, axis=1, keepdims=True)
    pts = data.points.copy()
    labels = data.true_labels.copy()
    mask = data.corrupted_mask.copy()
    pts[idx] = bad
    labels[idx] = -1
    mask[idx] = True
    prov = dict(data.provenance)
    prov["corruption"] = {"eps": eps, "adversary": adversary, "seed": int(seed)}
    return Dataset(pts, labels, mask, prov)


@dataclass
class SeparationReport:
    mean_delta: float
    spectral_delta: float
    frobenius_delta: float
    witness_direction: np.ndarray


def _whitener(S: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError(f"covariance too ill-conditioned (condition number {cond:.3g})")
    L = np.linalg.cholesky(S)
    return np.linalg.inv(L)


def parameter_distance(model: MixtureModel, i: int, j: int) -> SeparationReport:
    """Mean, spectral and relative Frobenius separation of components i and j."""
    if i == j or not (0 <= i < model.k and 0 <= j < model.k):
        raise ValueError("need two distinct valid component indices")
    Si, Sj = model.covariances[i], model.covariances[j]
    dmu = model.means[i] - model.means[j]
    Wi, Wj = _whitener(Si), _whitener(Sj)

    S = Si + Sj
    sol = np.linalg.solve(S, dmu)
    mean_sq = float(dmu @ sol)
    mean_dir = sol / np.linalg.norm(sol) if np.linalg.norm(sol) > 0 else np.eye(model.d)[0]

    best, spec_dir = -np.inf, None
    for A, W in ((Si, Wj), (Sj, Wi)):
        # v^T A v / v^T B v maximized through the whitened eigenproblem
        lam, U = np.linalg.eigh(W @ A @ W.T)
        if lam[-1] > best:
            best = lam[-1]
            v = W.T @ U[:, -1]
            spec_dir = v / np.linalg.norm(v)
    spectral = float(np.sqrt(max(best, 0.0)))

    frob_sq = 0.0
    for A, W in ((Sj, Wi), (Si, Wj)):
        B = W @ A @ W.T
        frob_sq = max(frob_sq, np.linalg.norm(B - np.eye(model.d), "fro") ** 2 / np.linalg.norm(B, 2) ** 2)
    mean_delta = float(np.sqrt(max(mean_sq, 0.0)))
    # a ratio of 1 in every direction means no spectral separation at all
    if best <= 1.0 + 1e-12:
        spectral = 0.0
    witness = mean_dir if mean_delta >= spectral else spec_dir
    return SeparationReport(mean_delta, spectral, float(np.sqrt(frob_sq)), witness)


@dataclass
class AffineTransform:
    """x -> linear @ (x - center); ``shift`` equals -linear @ center."""

    center: np.ndarray
    linear: np.ndarray

    @property
    def rank(self) -> int:
        return self.linear.shape[0]

    @property
    def shift(self) -> np.ndarray:
        return -self.linear @ self.center

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(X) - self.center) @ self.linear.T

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "linear": self.linear.tolist()}


def whitening_transform(X: np.ndarray, rank_tol: float = 1e-10) -> AffineTransform:
    mu = X.mean(axis=0)
    C = np.cov(X, rowvar=False, bias=True).reshape(X.shape[1], X.shape[1])
    lam, U = np.linalg.eigh(C)
    keep = lam > rank_tol * max(lam[-1], 0.0)
    if not np.any(keep):
        raise ValueError("data has rank zero")
    if np.all(keep):
        # symmetric whitener: the identity on data that is already isotropic
        W = (U / np.sqrt(lam)) @ U.T
        return AffineTransform(mu, 0.5 * (W + W.T))
    lam, U = lam[keep][::-1], U[:, keep][:, ::-1]
    return AffineTransform(mu, (U / np.sqrt(lam)).T)


def _consistency_rescale(T: AffineTransform, X: np.ndarray, n_keep: int) -> AffineTransform:
    r = T.rank
    dist = np.sum(T.apply(X) ** 2, axis=1)
    far = int(np.sum(dist > 4.0 * stats.chi2.ppf(0.9999, r)))
    alpha = min(1.0, n_keep / max(len(X) - far, 1))
    if alpha >= 1.0:
        return T
    kappa = alpha / stats.chi2.cdf(stats.chi2.ppf(alpha, r), r + 2)
    return AffineTransform(T.center, T.linear / np.sqrt(kappa))


def isotropize(data: Dataset, trim_fraction: float = 0.0, rounds: int = 5) -> Tuple[AffineTransform, Dataset]:
    """Whitening fit on the points that survive Mahalanobis trimming.

    Each round drops the ``trim_fraction`` of points farthest from the
    current estimate and refits on the rest.  The trimmed fit is then
    rescaled by the Gaussian consistency factor of the fraction of inliers
    it kept, where points beyond a generous chi-square cutoff count as
    outliers.  All points are transformed and returned in their original
    order.
    """
    X = data.points
    n, d = X.shape
    keep = np.ones(n, dtype=bool)
    T = whitening_transform(X)
    if trim_fraction > 0:
        n_keep = n - int(np.floor(trim_fraction * n))
        if n_keep < d + 1:
            raise ValueError("too few points left after trimming")
        for _ in range(rounds):
            dist = np.sum(T.apply(X) ** 2, axis=1)
            order = np.argsort(dist, kind="stable")
            keep = np.zeros(n, dtype=bool)
            keep[order[:n_keep]] = True
            T = whitening_transform(X[keep])
        T = _consistency_rescale(T, X, n_keep)
    out = data.with_points(T.apply(X))
    out.provenance["isotropize"] = {"trim_fraction": trim_fraction, "rank": T.rank}
    return T, out


def isotropize_model(model: MixtureModel) -> Tuple[MixtureModel, AffineTransform]:
    """Exact whitening of a mixture by its population mean and covariance."""
    mu = model.mean()
    C = model.covariance()
    lam, U = np.linalg.eigh(C)
    W = U @ np.diag(lam ** -0.5) @ U.T
    W = 0.5 * (W + W.T)
    iso = model.transformed(W, -W @ mu)
    if model.centered:
        iso = MixtureModel(iso.weights, np.zeros_like(iso.means), iso.covariances, iso.shared_covariance, True)
    return iso, AffineTransform(mu, W)

