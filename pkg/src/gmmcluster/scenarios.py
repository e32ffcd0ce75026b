"""Named mixture families used by the experiments and tests."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .model import Dataset, MixtureModel, corrupt, sample_mixture

SCENARIOS = ("hyperplanes", "spectral", "shared_cov", "frobenius", "spherical", "subspaces", "single")


@dataclass
class ScenarioConfig:
    """Parameters of a scenario; unused fields are ignored by a family.

    Attributes:
        name: one of SCENARIOS.
        d, k, n: dimension, number of components, sample count.
        weights: mixing weights (None: uniform).
        ratio: variance ratio of the flattened direction (spectral,
            hyperplanes) or of the scaled block (frobenius).
        flat_variance: variance kept along each normal of the hyperplane
            family, the regularizing convolution for the singular case.
        separation: mean offset of the shared-covariance and spherical
            families.
        shared_flat: variance of the shared covariance along e_1.
        subspace_dim: dimension of each component's column span (subspaces).
        eps: corruption fraction.
        adversary: corruption model (see model.corrupt).
        seed: seed of the parameters, the sample and the corruption.
    """

    name: str = "hyperplanes"
    d: int = 10
    k: int = 2
    n: int = 20000
    weights: Optional[list] = None
    ratio: float = 1e4
    flat_variance: float = 1e-4
    separation: float = 1.0
    shared_flat: float = 1e-3
    subspace_dim: int = 3
    eps: float = 0.0
    adversary: str = "point_mass"
    seed: int = 0

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}")
        if self.d < 1 or self.k < 1 or self.n < 1:
            raise ValueError("d, k and n must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def _unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def build_model(cfg: ScenarioConfig) -> MixtureModel:
    """Ground-truth mixture of the scenario; deterministic given the seed."""
    rng = np.random.default_rng([cfg.seed, 17])
    d, k = cfg.d, cfg.k
    w = np.full(k, 1.0 / k) if cfg.weights is None else np.asarray(cfg.weights, dtype=float)
    w = w / w.sum()
    I = np.eye(d)
    zeros = np.zeros((k, d))
    if cfg.name == "single" or k == 1:
        return MixtureModel(np.ones(1), np.zeros((1, d)), I[None], centered=True)
    if cfg.name == "hyperplanes":
        # (1/k) sum N(0, I - v v^T), convolved so the normal keeps flat_variance
        covs = []
        for _ in range(k):
            v = _unit(rng, d)
            covs.append(I - (1.0 - cfg.flat_variance) * np.outer(v, v))
        return MixtureModel(w, zeros, np.stack(covs), centered=True)
    if cfg.name == "spectral":
        # component 0 spherical, the others flattened by ``ratio`` along random directions
        covs = [I]
        for _ in range(k - 1):
            v = _unit(rng, d)
            covs.append(I - (1.0 - 1.0 / cfg.ratio) * np.outer(v, v))
        return MixtureModel(w, zeros, np.stack(covs), centered=True)
    if cfg.name == "frobenius":
        # component i scales a coordinate block by ratio^(i / (k - 1))
        covs = []
        half = max(1, d // 2)
        for i in range(k):
            S = I.copy()
            S[:half, :half] *= cfg.ratio ** (i / (k - 1))
            covs.append(S)
        return MixtureModel(w, zeros, np.stack(covs), centered=True)
    if cfg.name == "shared_cov":
        S = I.copy()
        S[0, 0] = cfg.shared_flat
        offs = np.linspace(-1.0, 1.0, k) * cfg.separation
        means = np.outer(offs, I[0])
        return MixtureModel(w, means, np.stack([S] * k), shared_covariance=True)
    if cfg.name == "spherical":
        means = rng.standard_normal((k, d))
        means *= cfg.separation / np.linalg.norm(means, axis=1, keepdims=True)
        return MixtureModel(w, means, np.stack([I] * k), shared_covariance=True)
    # subspaces: colspan(Sigma_i) of dimension subspace_dim, regularized by flat_variance
    covs = []
    for _ in range(k):
        B = np.linalg.qr(rng.standard_normal((d, cfg.subspace_dim)))[0]
        S = B @ B.T + cfg.flat_variance * I
        covs.append(0.5 * (S + S.T))
    return MixtureModel(w, zeros, np.stack(covs), centered=True)


def generate(cfg: ScenarioConfig) -> Tuple[MixtureModel, Dataset]:
    model = build_model(cfg)
    data = sample_mixture(model, cfg.n, cfg.seed)
    if cfg.eps > 0:
        data = corrupt(data, cfg.eps, cfg.adversary, cfg.seed + 1)
    data.provenance["scenario"] = cfg.to_dict()
    return model, data


def planted_directions(model: MixtureModel, cfg: ScenarioConfig) -> np.ndarray:
    """Rows: the directions a subspace finder should recover (original coordinates).

    Hyperplane and spectral families: the flattened directions; the shared
    covariance family: e_1.  Returned in the coordinates of the data before
    whitening; callers map them with the whitening transform.
    """
    d = model.d
    if cfg.name in ("hyperplanes", "spectral"):
        out = []
        for S in model.covariances:
            lam, U = np.linalg.eigh(S)
            if lam[0] < 0.5:
                out.append(U[:, 0])
        return np.array(out).reshape(-1, d)
    if cfg.name == "shared_cov":
        return np.eye(d)[:1]
    return np.zeros((0, d))
