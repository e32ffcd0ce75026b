"""Subspace rounding from pseudo-expectations.

``round_containing`` grows an orthonormal basis one vector at a time: it
asks for a pseudo-expectation that satisfies the system and keeps
|Qv|^2 <= 1 - gamma^2/2 away from the current span, then samples an
eigenvector of its second moment with probability proportional to the
eigenvalue (restricted to eigenvectors not already close to the span).

``round_orthogonal`` applies the same loop to the complement system: unit
vectors u for which the original system proves that <v, u>^2 is small.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional

import numpy as np

from .sos.polynomial import Polynomial
from .sos.sdp import EncodeOptions
from .sos.solver import FEASIBLE, SolverSettings, solve
from .sos.system import MatrixSosConstraint, PolynomialSystem

log = logging.getLogger(__name__)

MAX_RANK_CAP = 64


@dataclass
class Subspace:
    """Orthonormal basis (d x r) plus bookkeeping from the rounding loop."""

    d: int
    basis: np.ndarray
    truncated: bool = False
    trace: List[dict] = field(default_factory=list)
    stop_reason: str = ""

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float).reshape(self.d, -1)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def projection(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def distance_to_unit(self, v: np.ndarray) -> float:
        """min |v - v'| over unit v' in the subspace, for unit v."""
        v = np.asarray(v, dtype=float)
        v = v / np.linalg.norm(v)
        if self.rank == 0:
            return math.sqrt(2.0)
        c = float(np.linalg.norm(self.basis.T @ v))
        return math.sqrt(max(0.0, 2.0 - 2.0 * c))

    def angle_to(self, v: np.ndarray) -> float:
        """Angle in degrees between v and the subspace."""
        v = np.asarray(v, dtype=float)
        v = v / np.linalg.norm(v)
        c = float(np.linalg.norm(self.basis.T @ v)) if self.rank else 0.0
        return math.degrees(math.acos(min(1.0, c)))

    def to_dict(self) -> dict:
        return {"d": self.d, "rank": self.rank, "basis": self.basis.tolist(), "truncated": self.truncated,
                "stop_reason": self.stop_reason}


@dataclass
class RoundingConfig:
    """Settings of the rounding loop.

    Attributes:
        gamma: closeness parameter in (0, 1).
        t: relaxation degree of the system being rounded; for
            ``round_orthogonal`` it is the degree of the proofs in v.
        eps: slack of the complement system (<v, u>^2 <= 4 eps).
        rank_cap: hard bound on the number of iterations; None means
            min(d, ceil((16/gamma)^r_hint)), never above 64.
        r_hint: expected rank of the planted subspace.
        seed: seed of the eigenvector sampler.
        outer_degree: relaxation degree in u used for the complement system.
        matrix_multiplier_degree: multiplier degree for matrix hypotheses.
        time_budget: wall-clock seconds after which the loop stops with
            stop reason "time_budget" (None: no limit).
        solver: interior-point settings.
    """

    gamma: float = 0.3
    t: int = 4
    eps: float = 1e-3
    rank_cap: Optional[int] = None
    r_hint: int = 1
    seed: int = 0
    outer_degree: int = 2
    matrix_multiplier_degree: int = 0
    time_budget: Optional[float] = None
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")

    def cap(self, d: int) -> int:
        if self.rank_cap is not None:
            return int(min(self.rank_cap, MAX_RANK_CAP))
        return int(min(d, math.ceil((16.0 / self.gamma) ** self.r_hint), MAX_RANK_CAP))

    def precondition(self, mode: str) -> dict:
        """The gamma lower bound of the matching rounding theorem."""
        factor = 2.0 * math.sqrt(2.0) if mode == "containing" else 4.0
        need = factor * self.eps ** 0.125
        return {"mode": mode, "gamma": self.gamma, "required": need, "satisfied": self.gamma >= need}

    def to_dict(self) -> dict:
        out = asdict(self)
        out["solver"] = self.solver.to_dict()
        return out


def _gram_schmidt(basis: np.ndarray, w: np.ndarray) -> Optional[np.ndarray]:
    r = w.copy()
    for _ in range(2):
        for j in range(basis.shape[1]):
            r -= (basis[:, j] @ r) * basis[:, j]
    nrm = np.linalg.norm(r)
    if nrm < 1e-8:
        return None
    return r / nrm


def round_containing(system: PolynomialSystem, cfg: RoundingConfig, trace_file=None,
                     eps_label: Optional[float] = None) -> Subspace:
    """Iterative eigenvector sampling; see the module docstring."""
    d = system.nvars
    rng = np.random.default_rng(cfg.seed)
    basis = np.zeros((d, 0))
    options = EncodeOptions(q_max=cfg.solver.q_max, matrix_multiplier_degree=cfg.matrix_multiplier_degree)
    cap = cfg.cap(d)
    trace: List[dict] = []
    stop = "rank_cap"
    g_keep = 1.0 - cfg.gamma ** 2 / 2.0
    g_sample = 1.0 - cfg.gamma ** 2 / 4.0
    start = time.monotonic()
    for it in range(1, cap + 1):
        if cfg.time_budget is not None and time.monotonic() - start > cfg.time_budget:
            stop = "time_budget"
            break
        Q = basis @ basis.T
        away = Polynomial.constant(g_keep, d) - Polynomial.quadratic_form(Q, d)
        out = solve(system.with_inequality(away), cfg.t, cfg.solver, options=options)
        rec = {"iteration": it, "status": out.status, "solver_status": out.solver_status,
               "solver_iterations": out.iterations}
        if out.status != FEASIBLE:
            stop = out.status
            trace.append(rec)
            break
        M = out.pe.second_moment()
        lam, U = np.linalg.eigh(0.5 * (M + M.T))
        lam = np.clip(lam, 0.0, None)
        close = np.sum((basis.T @ U) ** 2, axis=0) if basis.shape[1] else np.zeros(d)
        allowed = np.flatnonzero(close <= g_sample)
        mass = lam[allowed]
        if mass.sum() < 1e-9:
            rec["status"] = "vacuous_conditioning"
            stop = "vacuous_conditioning"
            trace.append(rec)
            break
        j = allowed[rng.choice(len(allowed), p=mass / mass.sum())]
        w = U[:, j]
        qw = float(close[j])
        assert qw <= g_sample + 1e-8
        new = _gram_schmidt(basis, w)
        rec.update({"accepted_eigenvalue": float(lam[j]), "qw_norm2": qw, "trace_M": float(np.trace(M))})
        trace.append(rec)
        if new is None:
            stop = "no_new_direction"
            break
        basis = np.column_stack([basis, new])
    truncated = stop in ("rank_cap", "time_budget")
    if trace_file is not None:
        for rec in trace:
            if eps_label is not None:
                rec = dict(rec, eps=eps_label)
            trace_file.write(json.dumps(rec, sort_keys=True) + "\n")
    log.debug("rounding stopped after %d iterations (%s), rank %d", len(trace), stop, basis.shape[1])
    return Subspace(d, basis, truncated, trace, stop)


def complement_system(systemA: PolynomialSystem, t: int, eps: float) -> PolynomialSystem:
    """Unit u such that systemA proves <v, u>^2 <= 4 eps with degree t in v."""
    d = systemA.nvars
    has_ball = any(_is_ball(g, d) for g in systemA.inequalities)
    if not has_ball:
        raise ValueError("systemA must contain the ball constraint |v|^2 <= 1")
    n = 2 * d
    coeffs = {(0,) * n: 4.0 * eps}
    for i in range(d):
        for j in range(d):
            e = [0] * n
            e[i] += 1
            e[j] += 1
            e[d + i] += 1
            e[d + j] += 1
            key = tuple(e)
            coeffs[key] = coeffs.get(key, 0.0) - 1.0
    target = Polynomial(coeffs, n)
    cert = MatrixSosConstraint(target, d, d, t, systemA, f"<v,u>^2 <= 4*{eps:g}")
    unit = Polynomial.squared_norm(d) - 1.0
    return PolynomialSystem(d, [unit], [], [cert], ball_bound=1.0,
                            provenance={"system": "complement", "eps": eps, "t": t,
                                        "inner": systemA.provenance})


def _is_ball(g: Polynomial, d: int) -> bool:
    target = (1.0 - Polynomial.squared_norm(d))
    a, b = g.normalized(), target.normalized()
    return a.coeffs.keys() == b.coeffs.keys() and all(abs(a.coeffs[k] - b.coeffs[k]) < 1e-12 for k in a.coeffs)


def round_orthogonal(systemA: PolynomialSystem, cfg: RoundingConfig, trace_file=None) -> Subspace:
    """round_containing applied to the complement system of systemA."""
    B = complement_system(systemA, cfg.t, cfg.eps)
    return round_containing(B, replace(cfg, t=cfg.outer_degree), trace_file, eps_label=cfg.eps)
