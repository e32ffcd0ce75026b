"""Encoding polynomial systems as semidefinite feasibility problems.

The encoded problem has the form

    find X_b >= 0 (b = 1..B), w free
    s.t. sum_b <A_ib, X_b> + sum_k B_ik w_k = r_i   for every row i.

The free variables are the pseudo-moments m_alpha (alpha != 0) followed by
coefficients of polynomial multipliers for equality hypotheses.  Blocks hold
the moment matrix with its localizing matrices, then the certificate Grams.
A block entry (b, i, j, c) with i >= j contributes c * X_b[i, j] to its row.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .polynomial import Exponent, MonomialBasis, Polynomial
from .system import MatrixSosConstraint, PolynomialSystem

log = logging.getLogger(__name__)


class DegreeOverflowError(ValueError):
    """A constraint does not fit in the requested relaxation degree."""


@dataclass
class Block:
    name: str
    size: int
    kind: str


@dataclass
class Row:
    label: str
    blocks: Dict[Tuple[int, int, int], float] = field(default_factory=dict)
    free: Dict[int, float] = field(default_factory=dict)
    rhs: float = 0.0

    def add_block(self, b: int, i: int, j: int, c: float) -> None:
        if i < j:
            i, j = j, i
        key = (b, i, j)
        self.blocks[key] = self.blocks.get(key, 0.0) + c

    def add_free(self, k: int, c: float) -> None:
        self.free[k] = self.free.get(k, 0.0) + c


@dataclass
class EncodeOptions:
    """Knobs for the encoder.

    Attributes:
        q_max: largest number of inequalities multiplied together.
        matrix_multiplier_degree: degree of the polynomial multiplier used
            for matrix-valued hypotheses inside certificates.
        exploit_parity: split Gram matrices into even and odd parts when
            every polynomial in a certificate is even in the aux variables.
    """

    q_max: int = 1
    matrix_multiplier_degree: int = 0
    exploit_parity: bool = True


class SDP:
    """Sparse SDP in the row form described in the module docstring."""

    def __init__(self, nvars: int, t: int):
        self.nvars = nvars
        self.t = t
        self.blocks: List[Block] = []
        self.free_labels: List[str] = []
        self.rows: List[Row] = []
        self.objective_free: Dict[int, float] = {}
        self.basis = MonomialBasis(nvars, t)
        self.half_basis = MonomialBasis(nvars, t // 2)
        self.n_moments = len(self.basis) - 1
        self.free_labels.extend(f"m{list(e)}" for e in self.basis.monomials[1:])

    # construction helpers ---------------------------------------------

    def add_block(self, name: str, size: int, kind: str) -> int:
        self.blocks.append(Block(name, size, kind))
        return len(self.blocks) - 1

    def add_free(self, label: str) -> int:
        self.free_labels.append(label)
        return len(self.free_labels) - 1

    def new_row(self, label: str) -> Row:
        row = Row(label)
        self.rows.append(row)
        return row

    def moment_term(self, row: Row, mon: Exponent, c: float) -> None:
        """Add c * m[mon] to the left-hand side of a row."""
        if c == 0.0:
            return
        idx = self.basis.index.get(mon)
        if idx is None:
            raise DegreeOverflowError(f"moment {mon} exceeds degree {self.t}")
        if idx == 0:
            row.rhs -= c
        else:
            row.add_free(idx - 1, c)

    @property
    def n_free(self) -> int:
        return len(self.free_labels)

    def stats(self) -> Dict[str, int]:
        return {
            "rows": len(self.rows),
            "blocks": len(self.blocks),
            "max_block": max((b.size for b in self.blocks), default=0),
            "gram_entries": sum(b.size * (b.size + 1) // 2 for b in self.blocks),
            "free": self.n_free,
        }

    # serialization ----------------------------------------------------

    def to_text(self) -> str:
        """Plain sparse text format.

        Lines: ``sdp nvars t``, ``blocks B``, one ``block name size kind``
        line each, ``free K`` with labels, ``rows R``, then per row a
        ``row rhs label`` line followed by ``b i j value`` and ``f k value``
        triplets, and finally ``end``.
        """
        out = [f"sdp {self.nvars} {self.t}", f"blocks {len(self.blocks)}"]
        out += [f"block {b.name} {b.size} {b.kind}" for b in self.blocks]
        out.append(f"free {self.n_free}")
        out += [f"label {lab}" for lab in self.free_labels]
        out.append(f"objective {len(self.objective_free)}")
        out += [f"o {k} {v!r}" for k, v in sorted(self.objective_free.items())]
        out.append(f"rows {len(self.rows)}")
        for r in self.rows:
            out.append(f"row {r.rhs!r} {len(r.blocks)} {len(r.free)} {r.label}")
            out += [f"b {b} {i} {j} {v!r}" for (b, i, j), v in sorted(r.blocks.items())]
            out += [f"f {k} {v!r}" for k, v in sorted(r.free.items())]
        out.append("end")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SDP":
        lines = iter(text.splitlines())
        _, n, t = next(lines).split()
        sdp = cls(int(n), int(t))
        sdp.free_labels = []
        nb = int(next(lines).split()[1])
        for _ in range(nb):
            _, name, size, kind = next(lines).split()
            sdp.add_block(name, int(size), kind)
        nf = int(next(lines).split()[1])
        for _ in range(nf):
            sdp.free_labels.append(next(lines).split(" ", 1)[1])
        no = int(next(lines).split()[1])
        for _ in range(no):
            _, k, v = next(lines).split()
            sdp.objective_free[int(k)] = float(v)
        nr = int(next(lines).split()[1])
        for _ in range(nr):
            parts = next(lines).split(" ", 4)
            row = sdp.new_row(parts[4] if len(parts) > 4 else "")
            row.rhs = float(parts[1])
            for _ in range(int(parts[2])):
                _, b, i, j, v = next(lines).split()
                row.blocks[(int(b), int(i), int(j))] = float(v)
            for _ in range(int(parts[3])):
                _, k, v = next(lines).split()
                row.free[int(k)] = float(v)
        if next(lines) != "end":
            raise ValueError("malformed SDP text")
        return sdp


def _parity_split(monomials: Sequence[Exponent], split: bool) -> List[List[Exponent]]:
    if not split:
        return [list(monomials)]
    even = [m for m in monomials if sum(m) % 2 == 0]
    odd = [m for m in monomials if sum(m) % 2 == 1]
    return [part for part in (even, odd) if part]


def _products(polys: Sequence[Polynomial], q_max: int, max_degree: int) -> List[Tuple[str, Polynomial]]:
    out = []
    for q in range(1, q_max + 1):
        for combo in itertools.combinations(range(len(polys)), q):
            p = polys[combo[0]]
            for k in combo[1:]:
                p = p * polys[k]
            if p.degree <= max_degree:
                out.append(("*".join(str(k) for k in combo), p))
    return out


def encode(system: PolynomialSystem, t: int, objective: Optional[Polynomial] = None,
           options: Optional[EncodeOptions] = None) -> SDP:
    """Encode the degree-t relaxation of ``system``.

    Args:
        system: constraints over R^n.
        t: even relaxation degree.
        objective: optional polynomial whose pseudo-expectation is minimized.
        options: encoder knobs.

    Raises:
        DegreeOverflowError: some constraint has degree above t.
    """
    opts = options or EncodeOptions()
    if t % 2 or t < 2:
        raise ValueError("relaxation degree must be a positive even integer")
    n = system.nvars
    for p in system.equalities + system.inequalities:
        if p.degree > t:
            raise DegreeOverflowError(f"constraint of degree {p.degree} exceeds {t}")
    for c in system.certificates:
        if c.primary_degree > t:
            raise DegreeOverflowError(f"certificate of primary degree {c.primary_degree} exceeds {t}")
    sdp = SDP(n, t)

    # moment matrix
    H = sdp.half_basis.monomials
    b0 = sdp.add_block("moment", len(H), "moment")
    for i in range(len(H)):
        for j in range(i + 1):
            row = sdp.new_row(f"moment[{i},{j}]")
            row.add_block(b0, i, j, 1.0)
            sdp.moment_term(row, tuple(a + b for a, b in zip(H[i], H[j])), -1.0)

    # localizing matrices of inequalities and their products
    ineqs = [g.normalized() for g in system.inequalities]
    for tag, g in _products(ineqs, opts.q_max, t):
        Hg = MonomialBasis(n, (t - g.degree) // 2).monomials
        bg = sdp.add_block(f"loc{tag}", len(Hg), "localizer")
        terms = list(g.terms())
        for i in range(len(Hg)):
            for j in range(i + 1):
                row = sdp.new_row(f"loc{tag}[{i},{j}]")
                row.add_block(bg, i, j, 1.0)
                base = tuple(a + b for a, b in zip(Hg[i], Hg[j]))
                for e, c in terms:
                    sdp.moment_term(row, tuple(a + b for a, b in zip(base, e)), -c)

    # equalities: E[x^rho h] = 0 for every admissible rho
    for k, h in enumerate(system.equalities):
        h = h.normalized()
        terms = list(h.terms())
        for rho in MonomialBasis(n, t - h.degree):
            row = sdp.new_row(f"eq{k}{list(rho)}")
            for e, c in terms:
                sdp.moment_term(row, tuple(a + b for a, b in zip(rho, e)), c)

    for k, cert in enumerate(system.certificates):
        _encode_certificate(sdp, cert, k, opts)

    if objective is not None:
        if objective.degree > t:
            raise DegreeOverflowError("objective degree exceeds relaxation degree")
        for e, c in objective.terms():
            idx = sdp.basis.index[e]
            if idx:
                sdp.objective_free[idx - 1] = sdp.objective_free.get(idx - 1, 0.0) + c
    log.debug("encoded SDP %s", sdp.stats())
    return sdp


def _encode_certificate(sdp: SDP, cert: MatrixSosConstraint, k: int, opts: EncodeOptions) -> None:
    n, m, D = cert.n_primary, cert.n_aux, cert.aux_degree
    s = (sdp.t - cert.primary_degree) // 2
    Bx = MonomialBasis(n, s).monomials
    nx = len(Bx)
    target = cert.target.normalized()
    if target.degree_in(n, n + m) > D:
        raise DegreeOverflowError("certificate target exceeds its aux degree")
    hyp = cert.hypotheses
    h_ineq = [g.normalized() for g in hyp.inequalities] if hyp else []
    h_eq = [h.normalized() for h in hyp.equalities] if hyp else []
    h_mat = list(hyp.certificates) if hyp else []
    # a proof of degree D cannot use hypotheses of higher degree
    h_ineq = [g for g in h_ineq if g.degree <= D]
    h_eq = [h for h in h_eq if h.degree <= D]
    mats = []
    for c in h_mat:
        if c.hypotheses is not None or not c.is_aux_quadratic():
            raise ValueError("nested certificate hypotheses must be plain matrix constraints")
        G = c.as_matrix_polynomial()
        scale = max(p.norm() for p in G.values())
        G = {pq: p * (1.0 / scale) for pq, p in G.items()}
        degG = max(p.degree for p in G.values())
        if degG <= D:
            mats.append((c.n_aux, G, degG))

    even = opts.exploit_parity and all(sum(e[n:]) % 2 == 0 for e in target.coeffs)
    even = even and all(g.is_even() for g in h_ineq + h_eq)
    even = even and all(p.is_even() for _, G, _ in mats for p in G.values())
    homogeneous = hyp is None and all(sum(e[n:]) == D for e in target.coeffs)

    rows: Dict[Tuple[int, int, Exponent], Row] = {}

    def get_row(a: int, b: int, rho: Exponent) -> Row:
        key = (a, b, rho)
        row = rows.get(key)
        if row is None:
            row = sdp.new_row(f"cert{k}[{a},{b}]{list(rho)}")
            rows[key] = row
        return row

    def add_gram(name: str, basis: List[Exponent], mult_terms, width: int = 1, mat=None):
        """Gram block for multiplier * (sum of squares over ``basis``).

        With ``mat`` the multiplier is matrix valued: the block is indexed by
        (x monomial, y monomial, matrix row) and pairs with G_pq(y).
        """
        nb = len(basis)
        size = nx * nb * width
        blk = sdp.add_block(f"cert{k}:{name}", size, "gram")
        for a in range(nx):
            for b in range(a, nx):
                for i in range(nb):
                    for j in range(nb):
                        base = tuple(u + v for u, v in zip(basis[i], basis[j]))
                        if mat is None:
                            P = (a * nb + i)
                            Q = (b * nb + j)
                            for e, c in mult_terms:
                                rho = tuple(u + v for u, v in zip(base, e))
                                get_row(a, b, rho).add_block(blk, P, Q, c)
                        else:
                            for (p, q), poly in mat.items():
                                pairs = [(p, q)] if p == q else [(p, q), (q, p)]
                                for pp, qq in pairs:
                                    P = (a * nb + i) * width + pp
                                    Q = (b * nb + j) * width + qq
                                    for e, c in poly.terms():
                                        rho = tuple(u + v for u, v in zip(base, e))
                                        get_row(a, b, rho).add_block(blk, P, Q, c)

    one = [((0,) * m, 1.0)]
    if homogeneous:
        add_gram("sos", MonomialBasis(m, D // 2, homogeneous=True).monomials, one)
    else:
        for part, basis in enumerate(_parity_split(MonomialBasis(m, D // 2).monomials, even)):
            add_gram(f"sos{part}", basis, one)
        for tag, g in _products(h_ineq, opts.q_max, D):
            mb = MonomialBasis(m, (D - g.degree) // 2).monomials
            for part, basis in enumerate(_parity_split(mb, even)):
                add_gram(f"ineq{tag}.{part}", basis, list(g.terms()))
        for idx, (width, G, degG) in enumerate(mats):
            sm = min(opts.matrix_multiplier_degree, (D - degG) // 2)
            mb = MonomialBasis(m, sm).monomials
            for part, basis in enumerate(_parity_split(mb, even)):
                add_gram(f"mat{idx}.{part}", basis, None, width=width, mat=G)
        for idx, h in enumerate(h_eq):
            terms = list(h.terms())
            mons = MonomialBasis(m, D - h.degree).monomials
            if even:
                mons = [e for e in mons if sum(e) % 2 == 0]
            for a in range(nx):
                for b in range(a, nx):
                    for sigma in mons:
                        var = sdp.add_free(f"cert{k}:lam{idx}[{a},{b}]{list(sigma)}")
                        for e, c in terms:
                            rho = tuple(u + v for u, v in zip(sigma, e))
                            get_row(a, b, rho).add_free(var, c)

    # the target: E[x^(a+b) T(x, y)] matched coefficientwise in y
    for rho, poly in _split_target(target, n).items():
        terms = list(poly.terms())
        for a in range(nx):
            for b in range(a, nx):
                row = get_row(a, b, rho)
                base = tuple(u + v for u, v in zip(Bx[a], Bx[b]))
                for e, c in terms:
                    sdp.moment_term(row, tuple(u + v for u, v in zip(base, e)), -c)


def _split_target(target: Polynomial, n: int) -> Dict[Exponent, Polynomial]:
    groups: Dict[Exponent, Dict[Exponent, float]] = {}
    for e, c in target.coeffs.items():
        groups.setdefault(e[n:], {})[e[:n]] = c
    return {k: Polynomial(v, n) for k, v in groups.items()}
