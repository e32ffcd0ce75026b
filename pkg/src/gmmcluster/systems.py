"""Constraint systems built from mixture moments.

Both builders assume the data (or the population model) is already in
isotropic position.  The systems live in the variable v in R^d and always
contain the ball constraint |v|^2 <= 1.

Quartic and higher deviation constraints are stated in linear form,
|m(v) - c |v|^2t| <= s |v|^2t, instead of the squared form, so that their
degree stays at 2t and fits degree-4 relaxations; see the parameter records
for the slack bookkeeping.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .model import MixtureModel, isotropize_model
from .moments import SymMomentTensor, double_factorial, hessian_matrix_polynomial
from .sos.polynomial import Polynomial
from .sos.system import MatrixSosConstraint, PolynomialSystem

log = logging.getLogger(__name__)


@dataclass
class CenteredSystemParams:
    """Parameters of the centered fourth-moment system.

    Attributes:
        eps: slack of the quartic deviation constraint, relative to |v|^4.
        gamma: isotropy slack of the input.
        delta: eigenvalue band half-width used to define the planted
            subspace R (test oracle only).
        w_min: smallest mixing weight.
        hessian_slack: operator-norm slack of the Hessian constraint,
            relative to |v|^2.  Defaults to sqrt(2 eps), the value obtained
            from the squared constraint at |v| = |u| = 1.
        c: constant used when evaluating the schedule formulas.
        band: pragmatic half-width of the eigenvalue band defining the
            non-spherical projections P_bar_i.
        band_exponent: exponent of the verbatim band delta^(1/band_exponent).
    """

    eps: float = 0.01
    gamma: float = 0.0
    delta: float = 1e-3
    w_min: float = 0.5
    hessian_slack: Optional[float] = None
    c: float = 1.0
    band: float = 0.25
    band_exponent: float = 2048.0

    def __post_init__(self):
        if self.eps <= 0 or self.w_min <= 0 or self.delta <= 0:
            raise ValueError("eps, delta and w_min must be positive")

    @property
    def hessian_bound(self) -> float:
        return math.sqrt(2.0 * self.eps) if self.hessian_slack is None else self.hessian_slack

    def schedule(self) -> Dict[str, float]:
        """Verbatim schedule values next to the pragmatic ones actually used."""
        w, e, g, c = self.w_min, self.eps, self.gamma, self.c
        eps_prime = c * (e ** 0.25 / w + g / w ** 2)
        return {
            "eps_prime": eps_prime,
            "delta_verbatim": c * w ** 3 * e ** 2,
            "band_verbatim": self.delta ** (1.0 / self.band_exponent),
            "band_used": self.band,
            "complement_bound": c * e ** (1.0 / 128.0) / w ** 4,
            "eps_bound": c * w ** 16,
            "gamma_bound_subspace": c * w ** 4 * e ** 2,
            "gamma_bound_complement": c * w ** 6 * e,
            "hessian_bound_used": self.hessian_bound,
        }

    def preconditions(self) -> Dict[str, bool]:
        s = self.schedule()
        return {
            "eps_small": self.eps <= s["eps_bound"],
            # both published bounds on gamma are checked; the smaller binds
            "gamma_small": self.gamma <= min(s["gamma_bound_subspace"], s["gamma_bound_complement"]),
        }

    def to_dict(self) -> dict:
        out = asdict(self)
        out["schedule"] = self.schedule()
        out["preconditions"] = self.preconditions()
        return out


@dataclass
class SharedCovSystemParams:
    """Parameters of the identical-covariance moment system.

    Attributes:
        eps: slack of each moment constraint; the linear form uses
            sqrt(eps) |v|^2t.
        gamma, delta, w_min, c: as in :class:`CenteredSystemParams`.
        t_max: number of moment orders used.  Defaults to
            ceil(10 log(1/w_min)) clamped at ``t_cap``.
        t_cap: clamp for the default t_max.
        band: pragmatic eigenvalue gap defining P (eigenvalues <= 1 - band).
        band_exponent: exponent of the verbatim gap delta^(1/band_exponent).
    """

    eps: float = 0.01
    gamma: float = 0.0
    delta: float = 1e-3
    w_min: float = 0.5
    t_max: Optional[int] = None
    t_cap: int = 6
    c: float = 1.0
    band: float = 0.25
    band_exponent: float = 16.0

    def __post_init__(self):
        if self.t_max is None:
            self.t_max = min(max(2, math.ceil(10 * math.log(1.0 / self.w_min))), self.t_cap)
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")

    @property
    def t_paper(self) -> int:
        return max(2, math.ceil(10 * math.log(1.0 / self.w_min)))

    def schedule(self) -> Dict[str, float]:
        w, e, g, c = self.w_min, self.eps, self.gamma, self.c
        L = math.log(1.0 / w)
        return {
            "t_paper": self.t_paper,
            "t_used": self.t_max,
            "eps_prime": c * ((1 / w) ** (10 * L) * math.sqrt(e) + (1 / w) ** (40 * L) * g ** 2),
            "delta_verbatim": c * w ** 3 * e ** (1.0 / (10 * L)) if L > 0 else float("nan"),
            "band_verbatim": self.delta ** (1.0 / self.band_exponent),
            "band_used": self.band,
            "complement_bound": c * e ** (1.0 / (80 * L)) / w if L > 0 else float("nan"),
            "eps_bound": c * w ** (160 * L),
            "gamma_bound": c * w ** (40 * L) * e,
        }

    def preconditions(self) -> Dict[str, bool]:
        s = self.schedule()
        return {"eps_small": self.eps <= s["eps_bound"], "gamma_small": self.gamma <= s["gamma_bound"],
                "t_max_at_least_2": self.t_max >= 2}

    def to_dict(self) -> dict:
        out = asdict(self)
        out["schedule"] = self.schedule()
        out["preconditions"] = self.preconditions()
        return out


def _norm_power(d: int, p: int) -> Polynomial:
    return Polynomial.squared_norm(d) ** p


def hessian_deviation(M4: SymMomentTensor) -> Dict[Tuple[int, int], Polynomial]:
    """Entries of D(v) = 4<M4, v v . .> - 4|v|^2 I - 8 v v^T, for c <= e."""
    d = M4.d
    base = hessian_matrix_polynomial(M4)
    nrm = Polynomial.squared_norm(d)
    out = {}
    for (c, e), poly in base.items():
        D = poly * 4.0
        if c == e:
            D = D - nrm * 4.0
        D = D - Polynomial.quadratic_form(_unit_outer(d, c, e), d) * 8.0
        out[(c, e)] = D
    return out


def _unit_outer(d: int, c: int, e: int) -> np.ndarray:
    A = np.zeros((d, d))
    A[c, e] += 0.5
    A[e, c] += 0.5
    return A


def hessian_certificate(M4: SymMomentTensor, slack: float) -> MatrixSosConstraint:
    """|D(v)|_op <= slack |v|^2 in Schur-complement form.

    With aux variables u = (u1, u2) in R^2d the target is
    slack |v|^2 (|u1|^2 + |u2|^2) + 2 u1^T D(v) u2, which is a nonnegative
    quadratic form in u exactly when -slack |v|^2 I <= D(v) <= slack |v|^2 I.
    """
    d = M4.d
    n = 3 * d
    coeffs: Dict[tuple, float] = {}

    def put(vexp, i, j, c):
        e = list(vexp) + [0] * (2 * d)
        e[d + i] += 1
        e[d + j] += 1
        key = tuple(e)
        coeffs[key] = coeffs.get(key, 0.0) + c

    for a in range(d):
        va = [0] * d
        va[a] = 2
        for i in range(2 * d):
            put(va, i, i, slack)
    for (c, e), poly in hessian_deviation(M4).items():
        pairs = [(c, e)] if c == e else [(c, e), (e, c)]
        for p, q in pairs:
            for vexp, coef in poly.terms():
                put(vexp, p, d + q, 2.0 * coef)
    target = Polynomial(coeffs, n)
    return MatrixSosConstraint(target, d, 2 * d, 2, None, "hessian deviation (Schur form)")


def centered_system(M4_hat: SymMomentTensor, params: CenteredSystemParams) -> PolynomialSystem:
    """Constraint system for centered mixtures: the ball plus the quartic and Hessian tests."""
    if M4_hat.order != 4:
        raise ValueError("centered_system needs the fourth moment tensor")
    d = M4_hat.d
    nrm2 = Polynomial.squared_norm(d)
    ball = 1.0 - nrm2
    # E<x,v>^4/3 - |v|^4 <= eps |v|^4; the quartic is a sum of squares at
    # the population level, so only this side carries information
    quartic = nrm2 * nrm2 * (1.0 + params.eps) - M4_hat.as_polynomial() * (1.0 / 3.0)
    hess = hessian_certificate(M4_hat, params.hessian_bound)
    return PolynomialSystem(
        d, [], [ball, quartic], [hess], ball_bound=1.0,
        provenance={"system": "centered", "moments": {"4": M4_hat.fingerprint()}, "params": params.to_dict()},
    )


def shared_cov_system(M_hats: Mapping[int, SymMomentTensor], params: SharedCovSystemParams) -> PolynomialSystem:
    """Ball plus two-sided moment constraints for orders 2, 4, ..., 2 t_max."""
    tensors = dict(M_hats) if isinstance(M_hats, Mapping) else {T.order: T for T in M_hats}
    d = next(iter(tensors.values())).d
    ineqs = [1.0 - Polynomial.squared_norm(d)]
    root = math.sqrt(params.eps)
    for t in range(1, params.t_max + 1):
        if 2 * t not in tensors:
            raise ValueError(f"missing moment tensor of order {2 * t}")
        T = tensors[2 * t]
        if T.d != d:
            raise ValueError("moment tensors disagree on the dimension")
        npow = _norm_power(d, t)
        dev = T.as_polynomial() - npow * float(double_factorial(2 * t - 1))
        ineqs.append(npow * root - dev)
        ineqs.append(npow * root + dev)
    prov = {"system": "shared_covariance",
            "moments": {str(o): T.fingerprint() for o, T in sorted(tensors.items()) if o <= 2 * params.t_max},
            "params": params.to_dict()}
    return PolynomialSystem(d, [], ineqs, [], ball_bound=1.0, provenance=prov)


def _projection(vectors: np.ndarray) -> np.ndarray:
    if vectors.shape[1] == 0:
        return np.zeros((vectors.shape[0], vectors.shape[0]))
    return vectors @ vectors.T


def centered_guarantee_targets(model: MixtureModel, params: CenteredSystemParams,
                               band: Optional[float] = None) -> Tuple[List[np.ndarray], np.ndarray]:
    """Projections P_bar_i onto non-spherical eigenvectors and their union R.

    Eigenvectors of the isotropized covariances with eigenvalues outside
    [1 - band, 1 + band] span P_bar_i; those outside [1 - delta, 1 + delta]
    span the i-th piece of R.
    """
    band = params.band if band is None else band
    iso, _ = isotropize_model(model)
    Pbar, pieces = [], []
    r = 0.0
    for S in iso.covariances:
        lam, U = np.linalg.eigh(S)
        Pbar.append(_projection(U[:, np.abs(lam - 1) > band]))
        pieces.append(U[:, np.abs(lam - 1) > params.delta])
        r = max(r, float(np.sum((lam - 1) ** 2)))
    R = _span_projection(np.hstack(pieces), model.d)
    bound = model.k * max(r, 1.0) / params.delta ** 2
    if np.trace(R) > bound + 1e-9:
        raise AssertionError("rank of R exceeds k r / delta^2")
    return Pbar, R


def shared_cov_guarantee_targets(model: MixtureModel, params: SharedCovSystemParams,
                                 band: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Projections onto low-variance eigenvectors of the isotropized covariance."""
    if not model.shared_covariance:
        raise ValueError("needs a shared-covariance model")
    band = params.band if band is None else band
    iso, _ = isotropize_model(model)
    lam, U = np.linalg.eigh(iso.covariances[0])
    P = _projection(U[:, lam <= 1 - band])
    R = _projection(U[:, lam <= 1 - params.delta])
    if round(np.trace(P)) > model.k:
        raise AssertionError("rank of P exceeds k")
    return P, R


def _span_projection(vectors: np.ndarray, d: int) -> np.ndarray:
    if vectors.shape[1] == 0:
        return np.zeros((d, d))
    U, s, _ = np.linalg.svd(vectors, full_matrices=False)
    keep = s > 1e-8 * max(s.max(), 1.0)
    return _projection(U[:, keep])
