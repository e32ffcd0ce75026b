"""Solving encoded SDPs with the cvxopt cone solver.

The row-form problem of :mod:`sdp` is handed to ``cvxopt.solvers.conelp``
as its dual program: PSD blocks become the dual cone variable z, free
variables become the multiplier y of the equality block, and each row is
one component of ``G'z + A'y + c = 0``.  Infeasibility of our problem
therefore shows up as a certificate of dual infeasibility, i.e. a vector x
over the rows with ``sum_i x_i A_i <= 0``, ``B'x = 0`` and ``r'x = 1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .pseudo import PseudoExpectation
from .sdp import SDP, EncodeOptions, encode
from .system import MatrixSosConstraint, PolynomialSystem

log = logging.getLogger(__name__)

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
INDETERMINATE = "numerically_indeterminate"


@dataclass
class SolverSettings:
    """Interior-point settings.

    Attributes:
        tol: absolute and relative stopping tolerance passed to cvxopt.
        feas_tol: residual level below which a solution or an
            infeasibility certificate is accepted.
        max_iters: iteration cap of the interior-point method.
        q_max: products of at most this many inequalities are localized.
    """

    tol: float = 1e-9
    feas_tol: float = 1e-6
    max_iters: int = 100
    q_max: int = 1

    def to_dict(self) -> dict:
        return {"tol": self.tol, "feas_tol": self.feas_tol, "max_iters": self.max_iters, "q_max": self.q_max}


@dataclass
class SolveOutcome:
    status: str
    pe: Optional[PseudoExpectation] = None
    residuals: Dict[str, float] = field(default_factory=dict)
    certificate: Optional[np.ndarray] = None
    iterations: int = 0
    solver_status: str = ""
    blocks: List[np.ndarray] = field(default_factory=list)
    free: Optional[np.ndarray] = None

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


def _assemble(sdp: SDP):
    """Row matrix over (lower-triangular block entries, free variables)."""
    offsets = np.cumsum([0] + [b.size * b.size for b in sdp.blocks])
    nb_total = int(offsets[-1])
    rows, cols, vals = [], [], []
    frows, fcols, fvals = [], [], []
    for r, row in enumerate(sdp.rows):
        for (b, i, j), c in row.blocks.items():
            size = sdp.blocks[b].size
            rows.append(r)
            cols.append(offsets[b] + j * size + i)
            vals.append(c if i == j else 0.5 * c)
        for k, c in row.free.items():
            frows.append(r)
            fcols.append(k)
            fvals.append(c)
    n = len(sdp.rows)
    Gt = sp.csr_matrix((vals, (rows, cols)), shape=(n, nb_total))
    Bm = sp.csr_matrix((fvals, (frows, fcols)), shape=(n, sdp.n_free))
    rhs = np.array([row.rhs for row in sdp.rows])
    return Gt, Bm, rhs, offsets


def _independent_rows(Gt: sp.csr_matrix, Bm: sp.csr_matrix, rhs: np.ndarray, tol: float):
    """Select a maximal independent set of rows.

    A row owning an entry that no other row touches is independent of all
    the others, so only the remaining rows need a rank-revealing QR.
    Returns the kept row indices and, if the dropped rows are inconsistent,
    a vector y with y'[G B] = 0 and y'r != 0.
    """
    full = sp.hstack([Gt, Bm]).tocsc()
    counts = np.diff(full.indptr)
    private_cols = np.flatnonzero(counts == 1)
    has_private = np.zeros(full.shape[0], dtype=bool)
    has_private[full.indices[full.indptr[private_cols]]] = True
    rest = np.flatnonzero(~has_private)
    if rest.size == 0:
        return np.arange(full.shape[0]), None
    sub = full.tocsr()[rest]
    used = np.unique(sub.indices)
    dense = sub[:, used].toarray() if used.size else np.zeros((rest.size, 0))
    scale = max(1.0, np.abs(dense).max(initial=0.0))
    if dense.shape[1] == 0:
        keep_local = np.array([], dtype=int)
    else:
        _, R, piv = scipy.linalg.qr(dense.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > tol * scale * max(dense.shape)))
        keep_local = np.sort(piv[:rank])
    drop_local = np.setdiff1d(np.arange(rest.size), keep_local)
    if drop_local.size:
        K = dense[keep_local]
        coef, *_ = np.linalg.lstsq(K.T, dense[drop_local].T, rcond=None)
        mismatch = rhs[rest[drop_local]] - coef.T @ rhs[rest[keep_local]]
        bad = np.flatnonzero(np.abs(mismatch) > 1e-9 * max(1.0, np.abs(rhs).max(initial=0.0)))
        if bad.size:
            y = np.zeros(full.shape[0])
            d = bad[0]
            y[rest[drop_local[d]]] = 1.0
            y[rest[keep_local]] = -coef[:, d]
            y /= float(y @ rhs)
            return None, y
    keep = np.sort(np.concatenate([np.flatnonzero(has_private), rest[keep_local]]))
    return keep, None


def _independent_columns(B: np.ndarray, tol: float) -> np.ndarray:
    if B.shape[1] == 0:
        return np.arange(0)
    _, R, piv = scipy.linalg.qr(B, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = max(1.0, diag.max(initial=0.0))
    rank = int(np.sum(diag > tol * scale))
    return np.sort(piv[:rank])


def _block_values(z: np.ndarray, sdp: SDP, offsets) -> List[np.ndarray]:
    out = []
    for b, blk in enumerate(sdp.blocks):
        X = z[offsets[b]:offsets[b + 1]].reshape(blk.size, blk.size, order="F")
        L = np.tril(X)
        out.append(L + np.tril(L, -1).T)
    return out


def residuals(sdp: SDP, blocks: List[np.ndarray], free: np.ndarray) -> Dict[str, float]:
    """Row residual and most negative block eigenvalue of a candidate solution."""
    worst = 0.0
    for row in sdp.rows:
        val = sum(c * blocks[b][i, j] for (b, i, j), c in row.blocks.items())
        val += sum(c * free[k] for k, c in row.free.items())
        worst = max(worst, abs(val - row.rhs))
    min_eig = min((np.linalg.eigvalsh(X)[0] for X in blocks if X.size), default=0.0)
    return {"row": float(worst), "min_eig": float(min_eig)}


def solve_sdp(sdp: SDP, settings: Optional[SolverSettings] = None) -> SolveOutcome:
    """Solve the row-form SDP and classify the outcome."""
    from cvxopt import matrix, solvers, spmatrix

    settings = settings or SolverSettings()
    Gt, Bm, rhs, offsets = _assemble(sdp)
    keep, farkas = _independent_rows(Gt, Bm, rhs, 1e-10)
    if farkas is not None:
        return SolveOutcome(INFEASIBLE, certificate=farkas, solver_status="inconsistent equalities",
                            residuals={"certificate": 0.0})
    Gk = Gt[keep]
    Bk = Bm[keep].toarray()
    fcols = _independent_columns(Bk, 1e-10)
    Bk = Bk[:, fcols]
    rk = rhs[keep]
    n = len(keep)

    Gc = Gk.T.tocoo()
    G = spmatrix(Gc.data.tolist(), Gc.row.tolist(), Gc.col.tolist(), (Gk.shape[1], n))
    A = matrix(np.ascontiguousarray(Bk.T)) if Bk.shape[1] else spmatrix([], [], [], (0, n))
    c = matrix(-rk)
    h = matrix(np.zeros(Gk.shape[1]))
    bvec = np.zeros(Bk.shape[1])
    for k, v in sdp.objective_free.items():
        pos = np.searchsorted(fcols, k)
        if pos < len(fcols) and fcols[pos] == k:
            bvec[pos] = v
    b = matrix(bvec)
    dims = {"l": 0, "q": [], "s": [blk.size for blk in sdp.blocks]}
    opts = {"show_progress": False, "abstol": settings.tol, "reltol": settings.tol,
            "feastol": settings.tol, "maxiters": settings.max_iters}
    sol = solvers.conelp(c, G, h, dims, A, b, options=opts)
    status = sol["status"]
    iters = int(sol.get("iterations", 0))

    z = np.array(sol["z"]).ravel() if sol["z"] is not None else None
    y = np.array(sol["y"]).ravel() if sol["y"] is not None else None
    x = np.array(sol["x"]).ravel() if sol["x"] is not None else None

    if status in ("optimal", "unknown") and z is not None and y is not None:
        blocks = _block_values(z, sdp, offsets)
        free = np.zeros(sdp.n_free)
        free[fcols] = y
        res = residuals(sdp, blocks, free)
        ok = res["row"] <= settings.feas_tol and res["min_eig"] >= -settings.feas_tol
        if ok:
            pe = None
            if sdp.n_moments:
                moments = np.concatenate([[1.0], free[: sdp.n_moments]])
                pe = PseudoExpectation(sdp.nvars, sdp.t, moments)
            return SolveOutcome(FEASIBLE, pe=pe, residuals=res, iterations=iters,
                                solver_status=status, blocks=blocks, free=free)
        if status == "optimal":
            return SolveOutcome(INDETERMINATE, residuals=res, iterations=iters, solver_status=status)

    if x is not None and status in ("dual infeasible", "unknown"):
        margin = _certificate_violation(x, Gk, Bk, rk, sdp, offsets)
        if margin <= settings.feas_tol:
            cert = np.zeros(len(sdp.rows))
            cert[keep] = x / float(rk @ x)
            return SolveOutcome(INFEASIBLE, certificate=cert, iterations=iters, solver_status=status,
                                residuals={"certificate": margin})
        return SolveOutcome(INDETERMINATE, iterations=iters, solver_status=status,
                            residuals={"certificate": margin})
    return SolveOutcome(INDETERMINATE, iterations=iters, solver_status=status)


def _certificate_violation(x, Gk, Bk, rk, sdp, offsets) -> float:
    """How far x is from a Farkas certificate, after scaling to r'x = 1."""
    gap = float(rk @ x)
    if gap <= 0:
        return np.inf
    x = x / gap
    v = np.asarray(Gk.T @ x).ravel()
    worst = 0.0
    for b, blk in enumerate(sdp.blocks):
        X = v[offsets[b]:offsets[b + 1]].reshape(blk.size, blk.size, order="F")
        L = np.tril(X)
        S = L + np.tril(L, -1).T
        worst = max(worst, float(np.linalg.eigvalsh(S)[-1]))
    free_res = float(np.abs(Bk.T @ x).max(initial=0.0))
    return max(worst, free_res)


def solve(system: PolynomialSystem, t: int, settings: Optional[SolverSettings] = None,
          objective=None, options: Optional[EncodeOptions] = None) -> SolveOutcome:
    """Encode ``system`` at degree t and solve the relaxation."""
    settings = settings or SolverSettings()
    opts = options or EncodeOptions(q_max=settings.q_max)
    return solve_sdp(encode(system, t, objective=objective, options=opts), settings)


def solve_fixed_moments(pe: PseudoExpectation, cert: MatrixSosConstraint,
                        settings: Optional[SolverSettings] = None) -> SolveOutcome:
    """Search for the proof required by ``cert`` with the moments of pe fixed."""
    settings = settings or SolverSettings()
    sdp = encode(PolynomialSystem(pe.nvars, certificates=[cert]), pe.t,
                 options=EncodeOptions(q_max=settings.q_max))
    fixed = SDP(sdp.nvars, sdp.t)
    fixed.free_labels = []
    remap = {}
    for b, blk in enumerate(sdp.blocks):
        if blk.kind != "moment":
            remap[b] = fixed.add_block(blk.name, blk.size, blk.kind)
    free_map = {}
    for k in range(sdp.n_moments, sdp.n_free):
        free_map[k] = fixed.add_free(sdp.free_labels[k])
    fixed.n_moments = 0
    for row in sdp.rows:
        if any(b not in remap for (b, _, _) in row.blocks):
            continue
        new = fixed.new_row(row.label)
        new.rhs = row.rhs
        for (b, i, j), c in row.blocks.items():
            new.blocks[(remap[b], i, j)] = c
        for k, c in row.free.items():
            if k < sdp.n_moments:
                new.rhs -= c * pe.moments[k + 1]
            else:
                new.free[free_map[k]] = c
    out = solve_sdp(fixed, settings)
    return replace(out, pe=pe if out.feasible else None)
