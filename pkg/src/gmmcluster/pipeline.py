"""End-to-end runs of the subspace and clustering pipelines, plus the SVD baseline."""

from __future__ import annotations

import json
import logging
import time
from importlib import resources
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import jsonschema
import numpy as np
from scipy.cluster.vq import kmeans2

from .clustering import (CandidateSet, PartialClustering, RefinementConfig, SelectionConfig, refine_centered,
                         refine_shared_cov, select_clustering, tree_search)
from .metrics import max_angle, min_recall, whitened_flat_directions, whitened_mean_directions
from .model import Dataset, MixtureModel, isotropize
from .moments import empirical_moment, population_moment
from .rounding import RoundingConfig, round_orthogonal
from .scenarios import ScenarioConfig, generate
from .sos.solver import SolverSettings
from .systems import CenteredSystemParams, SharedCovSystemParams, centered_system, shared_cov_system

log = logging.getLogger(__name__)


def config_schema() -> dict:
    """JSON schema of ExperimentConfig.from_dict input."""
    return json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())


def _from_dict(cls, data: Optional[dict]):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    if "solver" in data and isinstance(data["solver"], dict):
        data["solver"] = SolverSettings(**data["solver"])
    return cls(**data)


@dataclass
class SubspaceConfig:
    """Subspace-finding knobs for the ``subspace`` command.

    Attributes:
        eps: slack of the moment system.
        complement_eps: slack of the complement system (None: eps).
        population: use exact moments of the ground-truth model.
        gamma, rank_cap: rounding settings.
        certificate_degree: proof degree (2 for centered, 4 for shared).
    """

    eps: float = 0.01
    complement_eps: Optional[float] = None
    population: bool = False
    gamma: float = 0.6
    rank_cap: Optional[int] = None
    certificate_degree: int = 2

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BenchConfig:
    """Sweep of the ``bench`` command: one run per (d, seed).

    Attributes:
        mode: "centered", "shared_cov" or "baseline_svd".
        d_values: dimensions to sweep; the rest of the scenario is kept.
        seeds: seeds per dimension.
        workers: worker processes (1 runs inline).
    """

    mode: str = "centered"
    d_values: List[int] = field(default_factory=lambda: [6, 10, 16])
    seeds: List[int] = field(default_factory=lambda: [0])
    workers: int = 1

    def __post_init__(self):
        if self.mode not in ("centered", "shared_cov", "baseline_svd"):
            raise ValueError(f"unknown bench mode {self.mode!r}")
        if self.workers < 1:
            raise ValueError("workers must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentConfig:
    """Everything a run needs; defaults are materialized into the results."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    subspace: SubspaceConfig = field(default_factory=SubspaceConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    holdout_fraction: float = 0.5
    max_nodes: int = 20000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if isinstance(data.get("refinement"), dict):
            # derived value echoed by to_dict(); recomputed on load
            data["refinement"] = {k: v for k, v in data["refinement"].items() if k != "eps_values"}
        try:
            jsonschema.validate(data, config_schema())
        except jsonschema.ValidationError as exc:
            raise ValueError(f"config schema violation at {list(exc.absolute_path)}: {exc.message}") from None
        known = {"scenario", "refinement", "selection", "subspace", "bench", "holdout_fraction", "max_nodes", "seed"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(
            scenario=_from_dict(ScenarioConfig, data.get("scenario")),
            refinement=_from_dict(RefinementConfig, data.get("refinement")),
            selection=_from_dict(SelectionConfig, data.get("selection")),
            subspace=_from_dict(SubspaceConfig, data.get("subspace")),
            bench=_from_dict(BenchConfig, data.get("bench")),
            holdout_fraction=float(data.get("holdout_fraction", 0.5)),
            max_nodes=int(data.get("max_nodes", 20000)),
            seed=int(data.get("seed", 0)),
        )

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Same config with every seed derived from ``seed``."""
        out = ExperimentConfig.from_dict(self.to_dict(materialize=False))
        out.seed = seed
        out.scenario.seed = seed
        out.refinement.seed = seed
        out.selection.seed = seed
        return out

    def to_dict(self, materialize: bool = True) -> dict:
        ref = self.refinement.to_dict()
        if not materialize:
            ref.pop("eps_values", None)
        return {"scenario": self.scenario.to_dict(), "refinement": ref,
                "selection": self.selection.to_dict(), "subspace": self.subspace.to_dict(),
                "bench": self.bench.to_dict(),
                "holdout_fraction": self.holdout_fraction, "max_nodes": self.max_nodes, "seed": self.seed}


@dataclass
class RunResult:
    """Deterministic outcome of a run plus wall times kept apart.

    ``report`` holds only values that are reproducible from the config;
    ``timings`` holds the wall-clock seconds per stage.
    """

    report: dict
    labels: Optional[np.ndarray] = None
    timings: Dict[str, float] = field(default_factory=dict)
    trace: List[dict] = field(default_factory=list)
    tree: Optional[CandidateSet] = None


def split_holdout(n: int, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Independent coin per sample: (indices of T1, indices of T2)."""
    coin = np.random.default_rng([seed, 3]).random(n) < fraction
    return np.flatnonzero(~coin), np.flatnonzero(coin)


def _stage(timings: Dict[str, float], name: str, start: float) -> float:
    now = time.perf_counter()
    timings[name] = now - start
    return now


def run_clustering(cfg: ExperimentConfig, mode: str, model: Optional[MixtureModel] = None,
                   data: Optional[Dataset] = None) -> RunResult:
    """Tree search on T1, selection with T2, labels for every sample."""
    if mode not in ("centered", "shared_cov"):
        raise ValueError(f"unknown mode {mode!r}")
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    if data is None:
        model, data = generate(cfg.scenario)
    t0 = _stage(timings, "generate", t0)
    i1, i2 = split_holdout(data.n, cfg.holdout_fraction, cfg.seed)
    X = data.points
    X1, X2 = X[i1], X[i2]
    rcfg = cfg.refinement
    refiner = refine_centered if mode == "centered" else refine_shared_cov

    def call(clustering, part, Xs, seed, parent, diagnostics):
        return refiner(clustering, part, Xs, rcfg, seed=seed, parent=parent, diagnostics=diagnostics)

    k = cfg.scenario.k
    tree = tree_search(X1, k, call, cfg.max_nodes, seed=rcfg.seed)
    t0 = _stage(timings, "tree_search", t0)
    cands = tree.clusterings
    report = {"config": cfg.to_dict(), "mode": mode, "n": data.n, "d": data.d, "k": k,
              "n_train": int(len(i1)), "n_holdout": int(len(i2)),
              "tree": {"nodes": len(tree.nodes), "candidates": len(cands), "refiner_calls": tree.refiner_calls,
                       "exhausted": tree.exhausted, "subspaces": _subspace_diag(tree.diagnostics)}}
    if not cands:
        cands = [PartialClustering.trivial(len(X1))]
        report["tree"]["fallback_trivial"] = True
    sel = select_clustering(cands, X1, X2, X, cfg.selection)
    _stage(timings, "selection", t0)
    labels = sel.labels
    report["selection"] = sel.to_dict()
    report["selection"]["winner_branch"] = cands[sel.winner].branch
    report["metric"] = min_recall(labels, data.true_labels)
    report["candidate_metrics"] = _candidate_metrics(cands, data.true_labels[i1])
    return RunResult(report, labels, timings, tree=tree)


def _subspace_diag(diag: dict) -> list:
    out = []
    for key in sorted(diag, key=lambda s: tuple(int(x) for x in s.split(":"))):
        for rec in diag[key].get("subspaces", []):
            out.append(dict(rec, node=key))
    return out


def _candidate_metrics(cands: List[PartialClustering], truth: np.ndarray) -> dict:
    vals = [min_recall(c.labels, truth) for c in cands]
    return {"best": max(vals) if vals else None, "count": len(vals)}


def baseline_svd_cluster(cfg: ExperimentConfig, model: Optional[MixtureModel] = None,
                         data: Optional[Dataset] = None) -> RunResult:
    """Project centered data on its top-k singular directions and run k-means."""
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    if data is None:
        model, data = generate(cfg.scenario)
    k = cfg.scenario.k
    X = data.points - data.points.mean(axis=0)
    if k == 1:
        labels = np.zeros(data.n, dtype=np.int64)
    else:
        _, _, Vt = np.linalg.svd(X, full_matrices=False)
        Y = X @ Vt[:k].T
        best, best_inertia = None, np.inf
        rng = np.random.default_rng([cfg.seed, 5])
        for _ in range(10):
            C, lab = kmeans2(Y, k, minit="++", seed=rng)
            inertia = float(np.sum((Y - C[lab]) ** 2))
            if inertia < best_inertia:
                best, best_inertia = lab, inertia
        labels = best
    _stage(timings, "baseline", t0)
    report = {"config": cfg.to_dict(), "mode": "baseline_svd", "n": data.n, "d": data.d, "k": k,
              "metric": min_recall(labels, data.true_labels)}
    return RunResult(report, labels, timings)


def run_subspace(cfg: ExperimentConfig, mode: str) -> RunResult:
    """Round the complement of the moment system of the isotropized sample."""
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    model, data = generate(cfg.scenario)
    sc = cfg.subspace
    if sc.population:
        from .model import isotropize_model

        iso_model, T = isotropize_model(model)
        linear = T.linear
        M = {o: population_moment(iso_model, o) for o in (2, 4)}
    else:
        T, iso = isotropize(data, trim_fraction=cfg.scenario.eps)
        linear = T.linear
        M = {o: empirical_moment(iso, o) for o in (2, 4)}
    t0 = _stage(timings, "moments", t0)
    w_min = model.w_min
    if mode == "centered":
        system = centered_system(M[4], CenteredSystemParams(eps=sc.eps, w_min=w_min))
        planted = whitened_flat_directions(model, linear)
    else:
        params = SharedCovSystemParams(eps=sc.eps, w_min=w_min, t_max=2)
        system = shared_cov_system(M, params)
        planted = whitened_mean_directions(model, linear)
    rc = RoundingConfig(gamma=sc.gamma, t=sc.certificate_degree,
                        eps=sc.eps if sc.complement_eps is None else sc.complement_eps,
                        rank_cap=sc.rank_cap, seed=cfg.seed)
    sub = round_orthogonal(system, rc)
    _stage(timings, "rounding", t0)
    angles = max_angle(sub.basis, planted) if len(planted) else []
    report = {"config": cfg.to_dict(), "mode": mode, "rank": sub.rank, "stop_reason": sub.stop_reason,
              "truncated": sub.truncated, "angles": angles, "max_angle": max(angles) if angles else None,
              "rounding": rc.to_dict(), "basis": sub.basis.tolist()}
    return RunResult(report, None, timings, sub.trace)


def _bench_one(args) -> dict:
    cfg_dict, mode, d, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict).with_seed(seed)
    cfg.scenario.d = d
    start = time.perf_counter()
    if mode == "baseline_svd":
        res = baseline_svd_cluster(cfg)
    else:
        res = run_clustering(cfg, mode)
    row = {"mode": mode, "scenario": cfg.scenario.name, "d": d, "seed": seed, "n": cfg.scenario.n,
           "k": cfg.scenario.k, "eps": cfg.scenario.eps, "metric": res.report["metric"]}
    if mode != "baseline_svd":
        row["candidates"] = res.report["tree"]["candidates"]
        row["winner_branch"] = res.report["selection"]["winner_branch"]
    row["seconds"] = time.perf_counter() - start
    return row


def run_bench(cfg: ExperimentConfig) -> List[dict]:
    """One row per (d, seed) of ``cfg.bench``, in sweep order."""
    b = cfg.bench
    jobs = [(cfg.to_dict(materialize=False), b.mode, d, s) for d in b.d_values for s in b.seeds]
    if b.workers == 1:
        return [_bench_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=b.workers) as pool:
        return list(pool.map(_bench_one, jobs))
