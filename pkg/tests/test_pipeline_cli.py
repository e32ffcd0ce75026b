import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gmmcluster.cli import main
from gmmcluster.metrics import min_recall
from gmmcluster.pipeline import ExperimentConfig, baseline_svd_cluster, run_bench, run_clustering, split_holdout
from gmmcluster.scenarios import ScenarioConfig, generate

SMALL = {
    "scenario": {"name": "spectral", "d": 4, "k": 2, "n": 3000, "eps": 0.01},
    "refinement": {"eps_grid": [0.015625], "list_cap": 8, "frobenius_rounds": 4},
    "selection": {"mc_samples": 2000},
}


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


# metric ------------------------------------------------------------------------

@given(arrays(np.int64, 50, elements=st.integers(0, 2)), st.permutations(range(3)))
def test_min_recall_ignores_part_names(truth, perm):
    assert min_recall(np.asarray(perm)[truth], truth) == 1.0


@given(arrays(np.int64, 50, elements=st.integers(-1, 2)), arrays(np.int64, 50, elements=st.integers(0, 3)))
def test_min_recall_in_unit_interval(truth, pred):
    assert 0.0 <= min_recall(pred, truth) <= 1.0


def test_min_recall_example():
    truth = np.array([0, 0, 0, 0, 1, 1, 1, 1, -1])
    pred = np.array([1, 1, 1, 0, 0, 0, 0, 0, 1])
    assert min_recall(pred, truth) == 0.75


# config ------------------------------------------------------------------------

def test_config_round_trip():
    cfg = ExperimentConfig.from_dict(SMALL)
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert cfg.to_dict()["refinement"]["eps_values"] == [0.015625]


@pytest.mark.parametrize("bad", [
    {"scenario": {"name": "nope"}},
    {"scenario": {"d": 0}},
    {"refinement": {"gamma": "big"}},
    {"mystery": 1},
    {"scenario": {"d": 4, "colour": "red"}},
    {"holdout_fraction": 1.5},
])
def test_schema_violations_raise(bad):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(bad)


def test_with_seed_sets_every_seed():
    cfg = ExperimentConfig().with_seed(11)
    assert (cfg.seed, cfg.scenario.seed, cfg.refinement.seed, cfg.selection.seed) == (11, 11, 11, 11)


def test_split_holdout_partitions():
    a, b = split_holdout(1000, 0.5, 3)
    assert np.array_equal(np.sort(np.concatenate([a, b])), np.arange(1000))
    assert 400 < len(b) < 600
    a2, _ = split_holdout(1000, 0.5, 3)
    assert np.array_equal(a, a2)


# scenarios ---------------------------------------------------------------------

@pytest.mark.parametrize("name", ["hyperplanes", "spectral", "shared_cov", "frobenius", "spherical", "subspaces"])
def test_scenarios_are_seeded(name):
    sc = ScenarioConfig(name=name, d=5, k=2, n=500, eps=0.02, seed=4)
    _, a = generate(sc)
    _, b = generate(sc)
    assert np.array_equal(a.points, b.points)
    assert a.corrupted_mask.sum() == 10


# baseline ----------------------------------------------------------------------

def test_baseline_k1_scores_one():
    cfg = ExperimentConfig(scenario=ScenarioConfig(name="single", d=3, k=1, n=500))
    assert baseline_svd_cluster(cfg).report["metric"] == 1.0


def test_baseline_spherical_separated():
    cfg = ExperimentConfig(scenario=ScenarioConfig(name="spherical", d=6, k=2, n=4000, separation=6.0, seed=1))
    assert baseline_svd_cluster(cfg).report["metric"] >= 0.95


def test_baseline_near_chance_on_hyperplanes():
    cfg = ExperimentConfig(scenario=ScenarioConfig(name="hyperplanes", d=10, k=2, n=20000, seed=0))
    assert baseline_svd_cluster(cfg).report["metric"] <= 0.7


# pipeline ----------------------------------------------------------------------

def test_small_centered_run_is_reproducible():
    cfg = ExperimentConfig.from_dict(SMALL)
    a = run_clustering(cfg, "centered")
    b = run_clustering(cfg, "centered")
    assert json.dumps(a.report, sort_keys=True) == json.dumps(b.report, sort_keys=True)
    assert 0.0 <= a.report["metric"] <= 1.0
    assert a.report["config"]["scenario"]["n"] == 3000
    with pytest.raises(ValueError):
        run_clustering(cfg, "banana")


def test_bench_rows_in_sweep_order():
    cfg = ExperimentConfig.from_dict({"scenario": {"name": "spherical", "n": 600, "separation": 4.0},
                                      "bench": {"mode": "baseline_svd", "d_values": [3, 5], "seeds": [0, 1]}})
    rows = run_bench(cfg)
    assert [(r["d"], r["seed"]) for r in rows] == [(3, 0), (3, 1), (5, 0), (5, 1)]


# command line ------------------------------------------------------------------

def test_cli_generate_k1(tmp_path):
    cfg = _write(tmp_path, {"scenario": {"name": "single", "d": 3, "k": 1, "n": 200}})
    out = tmp_path / "gen"
    assert main(["generate", "--config", cfg, "--seed", "5", "--out", str(out)]) == 0
    res = json.loads((out / "results.json").read_text())
    assert res["n"] == 200 and res["k"] == 1 and res["config"]["scenario"]["seed"] == 5
    for name in ("model.json", "dataset.bin", "dataset.csv", "timings.json"):
        assert (out / name).exists()


def test_cli_verify_identities(tmp_path, capsys):
    assert main(["verify-identities", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.endswith("PASS") for line in lines)


def test_cli_rejects_bad_config_and_seed(tmp_path):
    bad = _write(tmp_path, {"scenario": {"name": "nope"}})
    assert main(["generate", "--config", bad, "--out", str(tmp_path)]) == 2
    assert main(["generate", "--seed", str(2 ** 64), "--out", str(tmp_path)]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["generate", "--config", str(broken), "--out", str(tmp_path)]) == 2


def test_cli_cluster_outputs_and_determinism(tmp_path):
    cfg = _write(tmp_path, SMALL)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["cluster-centered", "--config", cfg, "--seed", "2", "--out", str(out)]) == 0
    a, b = outs
    assert (a / "results.json").read_bytes() == (b / "results.json").read_bytes()
    assert (a / "clusters.csv").read_bytes() == (b / "clusters.csv").read_bytes()
    with open(a / "clusters.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sample_index", "part_id"] and len(rows) == 3001
    tree = json.loads((a / "tree.json").read_text())
    assert tree["nodes"][0]["parent"] is None
    for name in ("trace.jsonl", "timings.json", "baseline.json"):
        assert (a / name).exists()


def test_cli_bench_csv(tmp_path):
    cfg = _write(tmp_path, {"scenario": {"name": "spherical", "n": 500, "separation": 4.0},
                            "bench": {"mode": "baseline_svd", "d_values": [6, 10, 16], "seeds": [0]}})
    assert main(["bench", "--config", cfg, "--out", str(tmp_path)]) == 0
    with open(tmp_path / "bench.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["d"]) for r in rows] == [6, 10, 16]


def test_centered_pipeline_on_hyperplanes():
    cfg = ExperimentConfig(scenario=ScenarioConfig(name="hyperplanes", d=10, k=2, n=20000, eps=0.01)).with_seed(0)
    res = run_clustering(cfg, "centered")
    assert res.report["metric"] >= 0.95
    assert res.tree is not None and res.report["tree"]["candidates"] >= 1
