"""Polynomial constraint systems.

A system over variables x in R^n is a list of equalities h(x) = 0,
inequalities g(x) >= 0 and certificate constraints.  A certificate
constraint asks that a polynomial T(x, y) in primary variables x and
auxiliary variables y admits a sum-of-squares proof in y (possibly from
hypotheses on y) whose coefficients are linear in the moments of x.  The
Hessian-type constraints and the "exists a proof that <v, u>^2 is small"
constraints are both expressed this way.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .polynomial import Exponent, Polynomial


@dataclass
class MatrixSosConstraint:
    """T(x, y) is a sum of squares in y, modulo hypotheses on y.

    Attributes:
        target: polynomial over ``n_primary + n_aux`` variables, primary first.
        n_primary: number of primary variables x.
        n_aux: number of auxiliary variables y.
        aux_degree: degree of the sum-of-squares proof in y.
        hypotheses: optional system over the auxiliary variables.
        description: free-form label used in reports.
    """

    target: Polynomial
    n_primary: int
    n_aux: int
    aux_degree: int
    hypotheses: Optional["PolynomialSystem"] = None
    description: str = ""

    def __post_init__(self):
        if self.target.nvars != self.n_primary + self.n_aux:
            raise ValueError("target variable count must equal n_primary + n_aux")
        if self.hypotheses is not None and self.hypotheses.nvars != self.n_aux:
            raise ValueError("hypotheses must be stated over the auxiliary variables")
        if self.aux_degree % 2:
            raise ValueError("aux_degree must be even")

    @property
    def primary_degree(self) -> int:
        return self.target.degree_in(0, self.n_primary)

    def by_aux_monomial(self) -> Dict[Exponent, Polynomial]:
        """Coefficient polynomials in x, keyed by the monomial in y."""
        groups: Dict[Exponent, Dict[Exponent, float]] = {}
        n = self.n_primary
        for e, c in self.target.coeffs.items():
            groups.setdefault(e[n:], {})[e[:n]] = c
        return {k: Polynomial(v, n) for k, v in groups.items()}

    def is_aux_quadratic(self) -> bool:
        n = self.n_primary
        return all(sum(e[n:]) == 2 for e in self.target.coeffs)

    def as_matrix_polynomial(self) -> Dict[Tuple[int, int], Polynomial]:
        """Symmetric G(x) with T(x, y) = y^T G(x) y, as {(p, q): G_pq} for p <= q."""
        if not self.is_aux_quadratic():
            raise ValueError("target is not a quadratic form in the auxiliary variables")
        out: Dict[Tuple[int, int], Polynomial] = {}
        for ye, poly in self.by_aux_monomial().items():
            idx = [i for i, p in enumerate(ye) for _ in range(p)]
            p, q = idx
            out[(p, q)] = poly if p == q else poly * 0.5
        return out

    def evaluate_matrix(self, x: np.ndarray) -> np.ndarray:
        """G(x) for a quadratic-in-y target."""
        G = np.zeros((self.n_aux, self.n_aux))
        for (p, q), poly in self.as_matrix_polynomial().items():
            val = poly.evaluate(x)
            G[p, q] = val
            G[q, p] = val
        return G

    def to_dict(self) -> dict:
        return {
            "target": self.target.to_dict(),
            "n_primary": self.n_primary,
            "n_aux": self.n_aux,
            "aux_degree": self.aux_degree,
            "hypotheses": None if self.hypotheses is None else self.hypotheses.to_dict(),
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MatrixSosConstraint":
        hyp = data.get("hypotheses")
        return cls(
            target=Polynomial.from_dict(data["target"]),
            n_primary=int(data["n_primary"]),
            n_aux=int(data["n_aux"]),
            aux_degree=int(data["aux_degree"]),
            hypotheses=None if hyp is None else PolynomialSystem.from_dict(hyp),
            description=data.get("description", ""),
        )


@dataclass
class PolynomialSystem:
    """Polynomial constraints over R^nvars, with optional certificate constraints."""

    nvars: int
    equalities: List[Polynomial] = field(default_factory=list)
    inequalities: List[Polynomial] = field(default_factory=list)
    certificates: List[MatrixSosConstraint] = field(default_factory=list)
    ball_bound: Optional[float] = None
    provenance: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for p in self.equalities + self.inequalities:
            if p.nvars != self.nvars:
                raise ValueError("constraint over the wrong number of variables")
        for c in self.certificates:
            if c.n_primary != self.nvars:
                raise ValueError("certificate constraint over the wrong primary variables")

    @property
    def degree(self) -> int:
        degs = [p.degree for p in self.equalities + self.inequalities]
        degs += [c.primary_degree for c in self.certificates]
        return max(degs, default=0)

    def is_even(self) -> bool:
        return all(p.is_even() for p in self.equalities + self.inequalities) and all(
            c.target.is_even() for c in self.certificates)

    def n_constraints(self) -> int:
        return len(self.equalities) + len(self.inequalities) + len(self.certificates)

    def with_inequality(self, g: Polynomial) -> "PolynomialSystem":
        return PolynomialSystem(self.nvars, list(self.equalities), list(self.inequalities) + [g],
                                list(self.certificates), self.ball_bound, dict(self.provenance))

    def with_equality(self, h: Polynomial) -> "PolynomialSystem":
        return PolynomialSystem(self.nvars, list(self.equalities) + [h], list(self.inequalities),
                                list(self.certificates), self.ball_bound, dict(self.provenance))

    def violations(self, x: np.ndarray) -> Dict[str, float]:
        """Worst violation of each constraint family at a point (0 means satisfied)."""
        eq = max((abs(h.evaluate(x)) for h in self.equalities), default=0.0)
        ineq = max((max(0.0, -g.evaluate(x)) for g in self.inequalities), default=0.0)
        cert = 0.0
        for c in self.certificates:
            if c.hypotheses is None and c.is_aux_quadratic():
                lam = np.linalg.eigvalsh(c.evaluate_matrix(x))[0]
                cert = max(cert, max(0.0, -lam))
        return {"equalities": eq, "inequalities": ineq, "certificates": cert}

    def to_dict(self) -> dict:
        return {
            "nvars": self.nvars,
            "equalities": [p.to_dict() for p in self.equalities],
            "inequalities": [p.to_dict() for p in self.inequalities],
            "certificates": [c.to_dict() for c in self.certificates],
            "ball_bound": self.ball_bound,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolynomialSystem":
        return cls(
            nvars=int(data["nvars"]),
            equalities=[Polynomial.from_dict(p) for p in data["equalities"]],
            inequalities=[Polynomial.from_dict(p) for p in data["inequalities"]],
            certificates=[MatrixSosConstraint.from_dict(c) for c in data["certificates"]],
            ball_bound=data.get("ball_bound"),
            provenance=data.get("provenance", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]
