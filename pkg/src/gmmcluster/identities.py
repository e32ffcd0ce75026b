"""Population identities of centered and shared-covariance mixtures.

Used by the test-suite and by ``gmmcluster verify-identities``.
"""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

from .model import MixtureModel
from .moments import (HermiteTable, eval_hessian_m4, hermite_mixture_moment, moment_rigidity_scan,
                      population_moment, sphericity_score)


def _sqrtm_inv(C: np.ndarray) -> np.ndarray:
    lam, U = np.linalg.eigh(C)
    return (U / np.sqrt(lam)) @ U.T


def random_isotropic_mixture(rng: np.random.Generator, k: int, d: int, shared_dim: int = 0,
                             equal_weights: bool = False) -> Tuple[MixtureModel, np.ndarray]:
    """Centered mixture with identity covariance and a common unit eigenspace.

    Every component covariance acts as the identity on the first
    ``shared_dim`` columns of the returned orthonormal matrix.  Returns the
    model and that d x shared_dim basis.
    """
    if not 0 <= shared_dim < d:
        raise ValueError("shared_dim must lie in [0, d)")
    Q = np.linalg.qr(rng.standard_normal((d, d)))[0]
    U, W = Q[:, :shared_dim], Q[:, shared_dim:]
    r = d - shared_dim
    w = np.full(k, 1.0 / k) if equal_weights else rng.dirichlet(np.full(k, 2.0))
    A = []
    for _ in range(k):
        G = rng.standard_normal((r, r))
        A.append(G @ G.T / r + 0.1 * np.eye(r))
    C = sum(wi * Ai for wi, Ai in zip(w, A))
    R = _sqrtm_inv(C)
    covs = []
    for Ai in A:
        S = U @ U.T + W @ (R @ Ai @ R) @ W.T
        covs.append(0.5 * (S + S.T))
    return MixtureModel(w, np.zeros((k, d)), np.stack(covs), centered=True), U


def hessian_identity_error(rng: np.random.Generator, trials: int = 20) -> float:
    """Largest |H(v) - 12 I - 24 v v^T|_F over random mixtures and shared unit eigenvectors v."""
    worst = 0.0
    for _ in range(trials):
        d = int(rng.integers(2, 7))
        k = int(rng.integers(1, 4))
        model, U = random_isotropic_mixture(rng, k, d, shared_dim=int(rng.integers(1, d)))
        M4 = population_moment(model, 4)
        v = U @ rng.standard_normal(U.shape[1])
        v /= np.linalg.norm(v)
        H = eval_hessian_m4(M4, v)
        worst = max(worst, float(np.linalg.norm(H - 12 * np.eye(d) - 24 * np.outer(v, v))))
    return worst


def sphericity_identity_error(rng: np.random.Generator, n_vectors: int = 100) -> float:
    """Largest |q(v) - (1/k) sum (v^T S_i v - 1)^2| over random unit v of random equal-weight mixtures."""
    worst = 0.0
    for _ in range(n_vectors // 20):
        d = int(rng.integers(2, 7))
        k = int(rng.integers(1, 4))
        model, _ = random_isotropic_mixture(rng, k, d, equal_weights=True)
        M4 = population_moment(model, 4)
        for _ in range(20):
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            ref = float(np.mean([(v @ S @ v - 1.0) ** 2 for S in model.covariances]))
            worst = max(worst, abs(sphericity_score(M4, v) - ref))
    return worst


def hermite_identity_error(rng: np.random.Generator, trials: int = 30, t_max: int = 8) -> float:
    """Largest |E He_t(<x, v>, sigma_v) - E_i <mu_i, v>^t| / max(1, |E_i <mu_i, v>^t|) for t <= t_max."""
    table = HermiteTable(max(t_max, 24))
    worst = 0.0
    for _ in range(trials):
        d = int(rng.integers(1, 6))
        k = int(rng.integers(1, 4))
        w = rng.dirichlet(np.full(k, 2.0))
        means = rng.standard_normal((k, d))
        G = rng.standard_normal((d, d))
        S = G @ G.T / d + 0.2 * np.eye(d)
        S = 0.5 * (S + S.T)
        model = MixtureModel(w, means, np.stack([S] * k), shared_covariance=True)
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        proj = means @ v
        for t in range(t_max + 1):
            ref = float(w @ proj ** t)
            got = hermite_mixture_moment(model, v, t, table)
            worst = max(worst, abs(got - ref) / max(1.0, abs(ref)))
    return worst


def run_identity_suite(seed: int = 0) -> Dict[str, dict]:
    """All identity checks with their tolerances."""
    rng = np.random.default_rng(seed)
    hess = hessian_identity_error(rng)
    sph = sphericity_identity_error(rng)
    her = hermite_identity_error(rng)
    rig = moment_rigidity_scan()
    return {
        "hessian": {"max_error": hess, "tolerance": 1e-8, "passed": hess <= 1e-8},
        "sphericity": {"max_error": sph, "tolerance": 1e-9, "passed": sph <= 1e-9},
        "hermite": {"max_relative_error": her, "tolerance": 1e-8, "passed": her <= 1e-8},
        "rigidity": {"checked": rig["checked"], "near_matches": rig["near_matches"],
                     "counterexamples": len(rig["counterexamples"]),
                     "passed": not rig["counterexamples"]},
    }
