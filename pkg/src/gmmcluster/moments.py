"""Symmetric moment tensors with their quartic tests; homogenized Hermite polynomials.

Moment tensors are stored by sorted multi-index.  Contractions with v^{(x)2t}
weight each stored entry by its number of distinct permutations.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .model import Dataset, MixtureModel
from .sos.polynomial import Polynomial

MAX_ORDER = 20

Index = Tuple[int, ...]


def multinomial(idx: Index) -> int:
    """Number of distinct orderings of a multi-index."""
    out = math.factorial(len(idx))
    for c in Counter(idx).values():
        out //= math.factorial(c)
    return out


def double_factorial(n: int) -> int:
    """n!! with the convention (-1)!! = 0!! = 1."""
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


class SymMomentTensor:
    """Symmetric tensor of a given order over R^d, keyed by sorted index."""

    def __init__(self, order: int, d: int, entries: Dict[Index, float]):
        self.order = order
        self.d = d
        self.entries = {tuple(sorted(k)): float(v) for k, v in entries.items()}
        self._arrays = None
        self._dense = None

    def __getitem__(self, idx: Sequence[int]) -> float:
        return self.entries.get(tuple(sorted(idx)), 0.0)

    def _compiled(self):
        if self._arrays is None:
            keys = sorted(self.entries)
            idx = np.array(keys, dtype=np.int64).reshape(len(keys), self.order)
            w = np.array([multinomial(k) * self.entries[k] for k in keys])
            self._arrays = (idx, w)
        return self._arrays

    def contract(self, v: np.ndarray) -> float:
        """<M, v^{(x)order}>."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.d,):
            raise ValueError("dimension mismatch")
        idx, w = self._compiled()
        if len(w) == 0:
            return 0.0
        return float(w @ np.prod(v[idx], axis=1))

    def dense(self) -> np.ndarray:
        """Full d^order array; only meant for small d and order."""
        if self._dense is None:
            if self.d ** self.order > 5_000_000:
                raise ValueError("tensor too large for dense storage")
            T = np.zeros((self.d,) * self.order)
            for k, v in self.entries.items():
                for perm in set(itertools.permutations(k)):
                    T[perm] = v
            self._dense = T
        return self._dense

    def as_polynomial(self) -> Polynomial:
        """The form v -> <M, v^{(x)order}> as a polynomial in d variables."""
        coeffs = {}
        for k, val in self.entries.items():
            e = [0] * self.d
            for i in k:
                e[i] += 1
            coeffs[tuple(e)] = multinomial(k) * val
        return Polynomial(coeffs, self.d)

    def to_dict(self) -> dict:
        return {"order": self.order, "d": self.d,
                "entries": [{"index": list(k), "value": v} for k, v in sorted(self.entries.items())]}

    @classmethod
    def from_dict(cls, data: dict) -> "SymMomentTensor":
        return cls(int(data["order"]), int(data["d"]),
                   {tuple(e["index"]): e["value"] for e in data["entries"]})

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _check_order(order: int) -> None:
    if order % 2 or order < 0 or order > MAX_ORDER:
        raise ValueError(f"order must be even and at most {MAX_ORDER}")


def population_moment(model: MixtureModel, order: int) -> SymMomentTensor:
    """Exact moment tensor E x^{(x)order} of the mixture."""
    _check_order(order)
    d = model.d
    keys = list(itertools.combinations_with_replacement(range(d), order))
    total = dict.fromkeys(keys, 0.0)
    for w, m, S in zip(model.weights, model.means, model.covariances):
        table = _gaussian_order(m, S, order)
        for key in keys:
            total[key] += w * table[key]
    return SymMomentTensor(order, d, total)


def _gaussian_order(mean, cov, order) -> Dict[Index, float]:
    d = len(mean)
    memo: Dict[Index, float] = {(): 1.0}

    def get(idx: Index) -> float:
        val = memo.get(idx)
        if val is not None:
            return val
        a, rest = idx[0], idx[1:]
        val = mean[a] * get(rest) if mean[a] != 0.0 else 0.0
        prev = None
        for pos, b in enumerate(rest):
            if b == prev:
                continue
            prev = b
            c = cov[a, b]
            if c != 0.0:
                val += rest.count(b) * c * get(rest[:pos] + rest[pos + 1:])
        memo[idx] = val
        return val

    return {idx: get(idx) for idx in itertools.combinations_with_replacement(range(d), order)}


def empirical_moment(data, order: int, trim_fraction: float = 0.0) -> SymMomentTensor:
    """Average of x^{(x)order} over the points left after norm trimming.

    Args:
        data: a Dataset or an n x d array.
        order: even tensor order.
        trim_fraction: upper bound on the fraction of points dropped.  Of
            the points with the largest norms, only those beyond a robust
            chi-square cutoff are removed, so clean data is left intact.
    """
    _check_order(order)
    X = data.points if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    n, d = X.shape
    if n < 1:
        raise ValueError("need at least one point")
    if trim_fraction > 0:
        r2 = np.einsum("ij,ij->i", X, X)
        n_drop = int(np.floor(trim_fraction * n))
        # only the far tail is dropped: beyond the 0.999 chi-square quantile
        # at the robust (median) scale, and never more than n_drop points
        scale = np.median(r2) / stats.chi2.median(d)
        cutoff = scale * stats.chi2.ppf(0.999, d)
        top = np.argsort(r2, kind="stable")[n - n_drop:]
        drop = top[r2[top] > cutoff]
        if len(drop):
            keep = np.ones(n, dtype=bool)
            keep[drop] = False
            X = X[keep]
            n = X.shape[0]
    entries: Dict[Index, float] = {}
    if order == 0:
        return SymMomentTensor(0, d, {(): 1.0})

    def walk(prefix: Index, start: int, prod: Optional[np.ndarray]):
        depth = len(prefix)
        if depth == order - 2:
            # the last two indices at once: X^T diag(prod) X / n
            W = X if prod is None else X * prod[:, None]
            G = (W.T @ X) / n
            for a in range(start, d):
                for b in range(a, d):
                    entries[prefix + (a, b)] = float(G[a, b])
            return
        for a in range(start, d):
            nxt = X[:, a] if prod is None else prod * X[:, a]
            walk(prefix + (a,), a, nxt)

    walk((), 0, None)
    return SymMomentTensor(order, d, entries)


# quartic polynomials of the centered analysis -------------------------------

def eval_q(M4: SymMomentTensor, v: np.ndarray) -> float:
    """<M4, v^4>/3 - |v|^4."""
    if M4.order != 4:
        raise ValueError("need an order-4 tensor")
    v = np.asarray(v, dtype=float)
    return M4.contract(v) / 3.0 - float(v @ v) ** 2


def eval_hessian_m4(M4: SymMomentTensor, v: np.ndarray) -> np.ndarray:
    """Hessian of v -> <M4, v^4>, i.e. 12 <M4, v (x) v (x) . (x) .>."""
    if M4.order != 4:
        raise ValueError("need an order-4 tensor")
    v = np.asarray(v, dtype=float)
    if v.shape != (M4.d,):
        raise ValueError("dimension mismatch")
    T = M4.dense()
    H = 12.0 * np.einsum("abce,a,b->ce", T, v, v)
    return 0.5 * (H + H.T)


def hessian_matrix_polynomial(M4: SymMomentTensor) -> Dict[Tuple[int, int], Polynomial]:
    """Entries (c, e) of <M4, v (x) v (x) e_c (x) e_e> as quadratics in v."""
    d = M4.d
    T = M4.dense()
    out = {}
    for c in range(d):
        for e in range(c, d):
            A = T[:, :, c, e]
            out[(c, e)] = Polynomial.quadratic_form(A, d)
    return out


def sphericity_score(M4: SymMomentTensor, v: np.ndarray) -> float:
    """eval_q restricted to unit vectors."""
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-8:
        raise ValueError("sphericity_score expects a unit vector")
    return eval_q(M4, v)


# Hermite polynomials --------------------------------------------------------

@dataclass
class HermiteTable:
    """Integer coefficients of He_t(x, s) = sum_p c_{t,p} x^p s^{t-p}."""

    max_order: int = 24
    coefficients: List[Dict[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.coefficients:
            table: List[Dict[int, int]] = [{0: 1}, {1: 1}]
            for t in range(1, self.max_order):
                nxt: Dict[int, int] = {}
                for p, c in table[t].items():
                    nxt[p + 1] = nxt.get(p + 1, 0) + c
                for p, c in table[t - 1].items():
                    nxt[p] = nxt.get(p, 0) - t * c
                table.append({p: c for p, c in nxt.items() if c})
            self.coefficients = table[: self.max_order + 1]


def hermite_eval(table: HermiteTable, t: int, x: float, s: float) -> float:
    if t > table.max_order:
        raise ValueError("order exceeds the table")
    return float(sum(c * x ** p * s ** (t - p) for p, c in table.coefficients[t].items()))


def gaussian_1d_moments(m: float, s: float, order: int) -> np.ndarray:
    """E (m + s Z)^j for j = 0..order."""
    out = np.zeros(order + 1)
    for j in range(order + 1):
        out[j] = sum(math.comb(j, q) * m ** (j - q) * s ** q * double_factorial(q - 1)
                     for q in range(0, j + 1, 2))
    return out


def hermite_mixture_moment(model: MixtureModel, v: np.ndarray, t: int,
                           table: Optional[HermiteTable] = None) -> float:
    """E He_t(<x, v>, sqrt(v^T Sigma v)) under a shared-covariance mixture."""
    if not model.shared_covariance:
        raise ValueError("hermite_mixture_moment needs a shared covariance")
    table = table or HermiteTable(max(t, 24))
    v = np.asarray(v, dtype=float)
    s = float(np.sqrt(v @ model.covariances[0] @ v))
    mom = np.zeros(t + 1)
    for w, mu in zip(model.weights, model.means):
        mom += w * gaussian_1d_moments(float(mu @ v), s, t)
    return float(sum(c * mom[p] * s ** (t - p) for p, c in table.coefficients[t].items()))


def moment_rigidity_scan(grid: int = 100, w_range=(0.05, 0.5), m4_tol: float = 1e-3,
                         sigma_tol: float = 0.1) -> dict:
    """Search centered two-component 1-D mixtures with unit variance.

    Scans ``grid`` weights in ``w_range`` times ``grid`` values of the first
    variance in (0, 1/w); the second variance is fixed by the unit second
    moment.  Returns the number of points checked and any counterexamples,
    i.e. points with |m4 - 3| <= m4_tol but some variance off 1 by more than
    sigma_tol.
    """
    ws = np.linspace(w_range[0], w_range[1], grid)
    bad = []
    checked = 0
    near = 0
    for w in ws:
        upper = 1.0 / w
        for frac in np.linspace(0.0, 1.0, grid + 2)[1:-1]:
            s1 = frac * upper
            s2 = (1.0 - w * s1) / (1.0 - w)
            m4 = 3.0 * (w * s1 ** 2 + (1.0 - w) * s2 ** 2)
            checked += 1
            near += abs(m4 - 3.0) <= m4_tol
            if abs(m4 - 3.0) <= m4_tol and max(abs(s1 - 1.0), abs(s2 - 1.0)) > sigma_tol:
                bad.append((float(w), float(s1), float(s2), float(m4)))
    return {"checked": checked, "near_matches": int(near), "counterexamples": bad}
