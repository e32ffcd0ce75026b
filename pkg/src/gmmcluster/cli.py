"""Command-line driver: ``gmmcluster <subcommand> --config <path> --seed <u64> --out <dir>``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .identities import run_identity_suite
from .pipeline import ExperimentConfig, RunResult, baseline_svd_cluster, run_bench, run_clustering, run_subspace
from .scenarios import generate

log = logging.getLogger("gmmcluster")

COMMANDS = ("generate", "subspace", "cluster-centered", "cluster-shared-cov", "verify-identities", "bench")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(_plain(obj), sort_keys=True, indent=1, separators=(",", ": ")) + "\n"


def write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj))


def write_jsonl(path: Path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(_plain(row), sort_keys=True) + "\n")


def write_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", "part_id"])
        w.writerows(enumerate(np.asarray(labels).tolist()))


def load_config(path: Optional[str], seed: Optional[int]) -> ExperimentConfig:
    data = json.loads(Path(path).read_text()) if path else {}
    cfg = ExperimentConfig.from_dict(data)
    return cfg.with_seed(seed) if seed is not None else cfg


def _emit(out: Path, res: RunResult, labels: bool = True) -> None:
    write_json(out / "results.json", res.report)
    write_json(out / "timings.json", res.timings)
    write_jsonl(out / "trace.jsonl", res.trace)
    if labels and res.labels is not None:
        write_labels(out / "clusters.csv", res.labels)
    if res.tree is not None:
        res.tree.save(out / "tree.json")


def cmd_generate(cfg: ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    model, data = generate(cfg.scenario)
    model.save(out / "model.json")
    data.save_binary(out / "dataset.bin")
    data.save_csv(out / "dataset.csv")
    report = {"config": cfg.to_dict(), "n": data.n, "d": data.d, "k": model.k,
              "corrupted": int(data.corrupted_mask.sum()),
              "component_sizes": np.bincount(data.true_labels[data.true_labels >= 0], minlength=model.k).tolist()}
    write_json(out / "results.json", report)
    write_json(out / "timings.json", {"generate": time.perf_counter() - t0})
    return 0


def cmd_subspace(cfg: ExperimentConfig, out: Path) -> int:
    mode = "shared_cov" if cfg.scenario.name == "shared_cov" else "centered"
    _emit(out, run_subspace(cfg, mode), labels=False)
    return 0


def cmd_cluster(cfg: ExperimentConfig, out: Path, mode: str) -> int:
    res = run_clustering(cfg, mode)
    res.trace = [dict(rec) for rec in res.report["tree"]["subspaces"]]
    _emit(out, res)
    base = baseline_svd_cluster(cfg)
    write_json(out / "baseline.json", base.report)
    return 0


def cmd_verify(cfg: ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    checks = run_identity_suite(cfg.seed)
    ok = all(c["passed"] for c in checks.values())
    write_json(out / "results.json", {"config": cfg.to_dict(), "checks": checks, "passed": ok})
    write_json(out / "timings.json", {"identities": time.perf_counter() - t0})
    for name, c in checks.items():
        print(f"{name}: {'PASS' if c['passed'] else 'FAIL'}")
    return 0 if ok else 1


def cmd_bench(cfg: ExperimentConfig, out: Path) -> int:
    rows = run_bench(cfg)
    keys = ["mode", "scenario", "d", "seed", "n", "k", "eps", "metric", "candidates", "winner_branch", "seconds"]
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    write_json(out / "results.json", {"config": cfg.to_dict(),
                                      "rows": [{k: v for k, v in r.items() if k != "seconds"} for r in rows]})
    write_json(out / "timings.json", {f"d={r['d']},seed={r['seed']}": r["seconds"] for r in rows})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmmcluster", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config (see docs/config.md); defaults when omitted")
    p.add_argument("--seed", type=int, help="overrides every seed in the config")
    p.add_argument("--out", default="out", help="output directory (created if missing)")
    p.add_argument("--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.seed)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handlers = {
        "generate": lambda: cmd_generate(cfg, out),
        "subspace": lambda: cmd_subspace(cfg, out),
        "cluster-centered": lambda: cmd_cluster(cfg, out, "centered"),
        "cluster-shared-cov": lambda: cmd_cluster(cfg, out, "shared_cov"),
        "verify-identities": lambda: cmd_verify(cfg, out),
        "bench": lambda: cmd_bench(cfg, out),
    }
    return handlers[args.command]()


if __name__ == "__main__":
    sys.exit(main())
