"""Sparse multivariate polynomials and monomial bases.

Polynomials are stored as a dict mapping exponent tuples to float
coefficients.  Every polynomial carries its number of variables so that
polynomials over different variable sets cannot be mixed by accident.
"""

from __future__ import annotations

import itertools
import math
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple

import numpy as np

Exponent = Tuple[int, ...]

MAX_BASIS_SIZE = 200_000


class BasisTooLargeError(ValueError):
    """Raised when a monomial basis would exceed ``MAX_BASIS_SIZE``."""


def count_monomials(n: int, t: int) -> int:
    """Number of monomials of degree <= t in n variables."""
    return math.comb(n + t, t)


def monomials_of_degree(n: int, k: int) -> Iterator[Exponent]:
    """Yield all degree-k exponents in n variables in lexicographic order."""
    for idx in itertools.combinations_with_replacement(range(n), k):
        e = [0] * n
        for i in idx:
            e[i] += 1
        yield tuple(e)


def add_exponents(a: Exponent, b: Exponent) -> Exponent:
    return tuple(x + y for x, y in zip(a, b))


class MonomialBasis:
    """Graded-lexicographic list of all monomials of degree <= t.

    >>> [m for m in MonomialBasis(2, 2)]
    [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    """

    def __init__(self, n: int, t: int, homogeneous: bool = False, parity: int | None = None):
        if n < 1 or t < 0:
            raise ValueError("need n >= 1 and t >= 0")
        size = math.comb(n + t - 1, t) if homogeneous else count_monomials(n, t)
        if size > MAX_BASIS_SIZE:
            raise BasisTooLargeError(f"basis of {size} monomials exceeds {MAX_BASIS_SIZE}")
        self.n = n
        self.t = t
        degrees = [t] if homogeneous else range(t + 1)
        mons: List[Exponent] = []
        for k in degrees:
            if parity is not None and k % 2 != parity:
                continue
            mons.extend(monomials_of_degree(n, k))
        self.monomials = mons
        self.index: Dict[Exponent, int] = {m: i for i, m in enumerate(mons)}

    @classmethod
    def from_monomials(cls, n: int, monomials: Sequence[Exponent]) -> "MonomialBasis":
        obj = cls.__new__(cls)
        obj.n = n
        obj.t = max((sum(m) for m in monomials), default=0)
        obj.monomials = list(monomials)
        obj.index = {m: i for i, m in enumerate(obj.monomials)}
        return obj

    def __len__(self) -> int:
        return len(self.monomials)

    def __iter__(self) -> Iterator[Exponent]:
        return iter(self.monomials)

    def __getitem__(self, i: int) -> Exponent:
        return self.monomials[i]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Vector of all basis monomials evaluated at the point x."""
        x = np.asarray(x, dtype=float)
        out = np.empty(len(self.monomials))
        for i, m in enumerate(self.monomials):
            out[i] = np.prod(x ** np.asarray(m))
        return out


class Polynomial:
    """Sparse real polynomial in ``nvars`` variables."""

    __slots__ = ("nvars", "coeffs")

    def __init__(self, coeffs: Dict[Exponent, float] | None, nvars: int):
        self.nvars = nvars
        self.coeffs: Dict[Exponent, float] = {}
        if coeffs:
            for e, c in coeffs.items():
                if len(e) != nvars:
                    raise ValueError("exponent length does not match nvars")
                if c != 0.0:
                    self.coeffs[tuple(e)] = float(c)

    # constructors -----------------------------------------------------

    @classmethod
    def constant(cls, c: float, nvars: int) -> "Polynomial":
        return cls({(0,) * nvars: c}, nvars)

    @classmethod
    def variable(cls, i: int, nvars: int) -> "Polynomial":
        e = [0] * nvars
        e[i] = 1
        return cls({tuple(e): 1.0}, nvars)

    @classmethod
    def linear(cls, a: Sequence[float], nvars: int | None = None, offset: int = 0) -> "Polynomial":
        """The linear form sum_i a_i x_{offset+i}."""
        a = np.asarray(a, dtype=float)
        nvars = len(a) if nvars is None else nvars
        out: Dict[Exponent, float] = {}
        for i, ai in enumerate(a):
            e = [0] * nvars
            e[offset + i] = 1
            out[tuple(e)] = ai
        return cls(out, nvars)

    @classmethod
    def quadratic_form(cls, A: np.ndarray, nvars: int | None = None, offset: int = 0) -> "Polynomial":
        """The form x^T A x over variables offset..offset+len(A)-1."""
        A = np.asarray(A, dtype=float)
        m = A.shape[0]
        nvars = m if nvars is None else nvars
        out: Dict[Exponent, float] = {}
        for i in range(m):
            for j in range(i, m):
                c = A[i, i] if i == j else A[i, j] + A[j, i]
                if c == 0.0:
                    continue
                e = [0] * nvars
                e[offset + i] += 1
                e[offset + j] += 1
                out[tuple(e)] = out.get(tuple(e), 0.0) + c
        return cls(out, nvars)

    @classmethod
    def squared_norm(cls, m: int, nvars: int | None = None, offset: int = 0) -> "Polynomial":
        return cls.quadratic_form(np.eye(m), nvars, offset)

    # basic properties ---------------------------------------------------

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.coeffs), default=0)

    def is_zero(self) -> bool:
        return not self.coeffs

    def is_even(self) -> bool:
        """True when every monomial has even total degree."""
        return all(sum(e) % 2 == 0 for e in self.coeffs)

    def is_homogeneous(self) -> bool:
        return len({sum(e) for e in self.coeffs}) <= 1

    def norm(self) -> float:
        """Euclidean norm of the coefficient vector."""
        return math.sqrt(sum(c * c for c in self.coeffs.values()))

    def normalized(self) -> "Polynomial":
        nrm = self.norm()
        return self if nrm == 0.0 else self * (1.0 / nrm)

    def terms(self) -> Iterable[Tuple[Exponent, float]]:
        return self.coeffs.items()

    def copy(self) -> "Polynomial":
        return Polynomial(dict(self.coeffs), self.nvars)

    # arithmetic ---------------------------------------------------------

    def _check(self, other: "Polynomial") -> None:
        if other.nvars != self.nvars:
            raise ValueError(f"variable count mismatch: {self.nvars} vs {other.nvars}")

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(float(other), self.nvars)
        self._check(other)
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(out, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({e: -c for e, c in self.coeffs.items()}, self.nvars)

    def __sub__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(float(other), self.nvars)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            s = float(other)
            return Polynomial({e: s * c for e, c in self.coeffs.items()}, self.nvars)
        self._check(other)
        out: Dict[Exponent, float] = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(out, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(1.0, self.nvars)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.nvars == other.nvars and self.coeffs == other.coeffs

    def __repr__(self) -> str:
        if not self.coeffs:
            return "Polynomial(0)"
        parts = []
        for e, c in sorted(self.coeffs.items(), key=lambda kv: (sum(kv[0]), kv[0])):
            mon = "*".join(f"x{i}^{p}" if p > 1 else f"x{i}" for i, p in enumerate(e) if p)
            parts.append(f"{c:+.6g}" + (f"*{mon}" if mon else ""))
        return " ".join(parts)

    # evaluation and variable manipulation -----------------------------

    def evaluate(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.nvars,):
            raise ValueError("point has wrong dimension")
        total = 0.0
        for e, c in self.coeffs.items():
            term = c
            for xi, p in zip(x, e):
                if p:
                    term *= xi ** p
            total += term
        return total

    def embed(self, nvars: int, offset: int = 0) -> "Polynomial":
        """Reinterpret as a polynomial in a larger variable set."""
        if offset + self.nvars > nvars:
            raise ValueError("embedding does not fit")
        pre = (0,) * offset
        post = (0,) * (nvars - offset - self.nvars)
        return Polynomial({pre + e + post: c for e, c in self.coeffs.items()}, nvars)

    def split(self, n_first: int) -> Dict[Exponent, "Polynomial"]:
        """Group terms by the exponent of the trailing variables.

        Returns a dict mapping the exponent of variables n_first.. to the
        coefficient polynomial over the first ``n_first`` variables.
        """
        groups: Dict[Exponent, Dict[Exponent, float]] = {}
        for e, c in self.coeffs.items():
            groups.setdefault(e[n_first:], {})[e[:n_first]] = c
        return {k: Polynomial(v, n_first) for k, v in groups.items()}

    def degree_in(self, start: int, stop: int) -> int:
        """Maximal degree in the variables start..stop-1."""
        return max((sum(e[start:stop]) for e in self.coeffs), default=0)

    def linear_map(self, A: np.ndarray) -> "Polynomial":
        """Substitute x -> A x (A square)."""
        A = np.asarray(A, dtype=float)
        n = self.nvars
        lin = [Polynomial.linear(A[i], n) for i in range(n)]
        out = Polynomial(None, n)
        for e, c in self.coeffs.items():
            term = Polynomial.constant(c, n)
            for i, p in enumerate(e):
                if p:
                    term = term * (lin[i] ** p)
            out = out + term
        return out

    def to_dict(self) -> dict:
        return {"nvars": self.nvars,
                "terms": [[list(e), c] for e, c in sorted(self.coeffs.items())]}

    @classmethod
    def from_dict(cls, data: dict) -> "Polynomial":
        return cls({tuple(e): c for e, c in data["terms"]}, int(data["nvars"]))
