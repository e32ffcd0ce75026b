"""Pseudo-expectations and constraint satisfaction checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .polynomial import MonomialBasis, Polynomial
from .system import MatrixSosConstraint, PolynomialSystem

log = logging.getLogger(__name__)


class PseudoExpectation:
    """Linear functional on polynomials of degree <= t, stored as moments.

    ``moments[i]`` is the pseudo-expectation of ``basis[i]``; the first
    entry (the constant monomial) is always 1.
    """

    def __init__(self, nvars: int, t: int, moments: np.ndarray):
        self.nvars = nvars
        self.t = t
        self.basis = MonomialBasis(nvars, t)
        self.moments = np.asarray(moments, dtype=float)
        if self.moments.shape != (len(self.basis),):
            raise ValueError("moment vector does not match the basis")

    @classmethod
    def from_points(cls, points: np.ndarray, t: int, weights: Optional[Sequence[float]] = None) -> "PseudoExpectation":
        """Actual expectation under a finitely supported distribution."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.full(len(pts), 1.0 / len(pts)) if weights is None else np.asarray(weights, dtype=float)
        basis = MonomialBasis(pts.shape[1], t)
        E = np.array([basis.evaluate(p) for p in pts])
        return cls(pts.shape[1], t, w @ E)

    @classmethod
    def from_point(cls, x: Sequence[float], t: int) -> "PseudoExpectation":
        return cls.from_points(np.asarray(x, dtype=float)[None, :], t)

    def __call__(self, p: Polynomial) -> float:
        return self.expect(p)

    def expect(self, p: Polynomial) -> float:
        if p.nvars != self.nvars:
            raise ValueError("polynomial over the wrong variables")
        total = 0.0
        for e, c in p.terms():
            idx = self.basis.index.get(e)
            if idx is None:
                raise ValueError(f"monomial {e} exceeds degree {self.t}")
            total += c * self.moments[idx]
        return total

    def moment(self, e) -> float:
        return float(self.moments[self.basis.index[tuple(e)]])

    def localizing_matrix(self, g: Optional[Polynomial] = None) -> np.ndarray:
        """Matrix of E[b_i b_j g] over monomials b of degree <= (t - deg g)/2."""
        dg = 0 if g is None else g.degree
        half = MonomialBasis(self.nvars, (self.t - dg) // 2).monomials
        terms = [((0,) * self.nvars, 1.0)] if g is None else list(g.terms())
        idx = self.basis.index
        L = np.zeros((len(half), len(half)))
        for i, a in enumerate(half):
            for j in range(i + 1):
                base = tuple(u + v for u, v in zip(a, half[j]))
                val = sum(c * self.moments[idx[tuple(u + v for u, v in zip(base, e))]] for e, c in terms)
                L[i, j] = L[j, i] = val
        return L

    def moment_matrix(self) -> np.ndarray:
        return self.localizing_matrix(None)

    def matrix_localizing(self, cert: MatrixSosConstraint) -> np.ndarray:
        """E[(b b^T) kron G(x)] for a constraint quadratic in its aux variables."""
        G = cert.as_matrix_polynomial()
        dG = max(p.degree for p in G.values())
        half = MonomialBasis(self.nvars, (self.t - dG) // 2).monomials
        m = cert.n_aux
        idx = self.basis.index
        L = np.zeros((len(half) * m, len(half) * m))
        for i, a in enumerate(half):
            for j in range(i + 1):
                base = tuple(u + v for u, v in zip(a, half[j]))
                for (p, q), poly in G.items():
                    val = sum(c * self.moments[idx[tuple(u + v for u, v in zip(base, e))]]
                              for e, c in poly.terms())
                    for P, Q in {(i * m + p, j * m + q), (i * m + q, j * m + p)}:
                        L[P, Q] = val
                        L[Q, P] = val
        return L

    def mean(self) -> np.ndarray:
        n = self.nvars
        return np.array([self.moments[1 + i] for i in range(n)])

    def second_moment(self) -> np.ndarray:
        """Symmetric matrix of E[x_i x_j]."""
        n = self.nvars
        if self.t < 2:
            raise ValueError("second moments need t >= 2")
        M = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                e = [0] * n
                e[i] += 1
                e[j] += 1
                M[i, j] = M[j, i] = self.moments[self.basis.index[tuple(e)]]
        return M

    def to_dict(self) -> dict:
        return {"nvars": self.nvars, "t": self.t, "moments": self.moments.tolist()}


def second_moment(pe: PseudoExpectation) -> np.ndarray:
    return pe.second_moment()


@dataclass
class Violation:
    kind: str
    index: int
    value: float
    threshold: float


@dataclass
class SatisfactionReport:
    ok: bool
    violations: List[Violation] = field(default_factory=list)
    worst: dict = field(default_factory=dict)


def check_satisfaction(pe: PseudoExpectation, system: PolynomialSystem, eta: float = 1e-8,
                       solver_settings=None) -> SatisfactionReport:
    """Check approximate satisfaction of every constraint.

    A localizing condition E[r^2 g] >= -eta |r^2| |g| is tested through the
    smallest eigenvalue of the localizing matrix of the normalized
    constraint, measured against ``eta`` times the largest pseudo-moment
    magnitude.  Equalities are tested on every admissible multiplier
    monomial.  Certificate constraints quadratic in their aux variables and
    without hypotheses use the matrix localizing matrix, which is exact for
    point masses; the remaining ones are re-solved with the moments fixed.
    """
    if pe.nvars != system.nvars:
        raise ValueError("pseudo-expectation and system use different variables")
    scale = max(1.0, float(np.max(np.abs(pe.moments))))
    thr = eta * scale
    report = SatisfactionReport(ok=True)
    worst = {"moment": 0.0, "inequality": 0.0, "equality": 0.0, "certificate": 0.0}

    def flag(kind, k, value):
        worst[kind] = max(worst[kind], value)
        if value > thr:
            report.ok = False
            report.violations.append(Violation(kind, k, value, thr))

    lam = np.linalg.eigvalsh(pe.moment_matrix())[0]
    flag("moment", 0, max(0.0, -lam))
    for k, g in enumerate(system.inequalities):
        g = g.normalized()
        lam = np.linalg.eigvalsh(pe.localizing_matrix(g))[0]
        flag("inequality", k, max(0.0, -lam))
    for k, h in enumerate(system.equalities):
        h = h.normalized()
        worst_eq = 0.0
        for rho in MonomialBasis(pe.nvars, pe.t - h.degree):
            shifted = Polynomial({tuple(a + b for a, b in zip(rho, e)): c for e, c in h.terms()}, pe.nvars)
            worst_eq = max(worst_eq, abs(pe.expect(shifted)))
        flag("equality", k, worst_eq)
    for k, cert in enumerate(system.certificates):
        if cert.hypotheses is None and cert.is_aux_quadratic():
            G = cert.as_matrix_polynomial()
            nrm = max(p.norm() for p in G.values())
            L = pe.matrix_localizing(cert) / nrm
            flag("certificate", k, max(0.0, -np.linalg.eigvalsh(L)[0]))
        else:
            from .solver import solve_fixed_moments
            out = solve_fixed_moments(pe, cert, solver_settings)
            flag("certificate", k, 0.0 if out.status == "feasible" else np.inf)
    report.worst = worst
    return report
