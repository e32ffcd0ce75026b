import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gmmcluster.clustering import (
    FrobeniusConfig, PartialClustering, RefinementConfig, SelectionConfig, SplitScorer, fit_component,
    frobenius_split, interval_split, quality, refine_centered, select_clustering, split_gain,
    threshold_error_rates, tree_search,
)
from gmmcluster.metrics import min_recall
from gmmcluster.model import Dataset
from gmmcluster.scenarios import ScenarioConfig, generate


def _dataset(labels, d=2, seed=0):
    labels = np.asarray(labels)
    X = np.random.default_rng(seed).standard_normal((len(labels), d))
    return Dataset(X, labels, labels == -1)


label_vectors = arrays(np.int64, st.integers(1, 60), elements=st.integers(0, 4))


# partial clusterings ----------------------------------------------------------

@given(label_vectors)
def test_parts_cover_the_universe_disjointly(labels):
    c = PartialClustering(labels)
    members = np.concatenate(c.parts)
    assert np.array_equal(np.sort(members), np.arange(len(labels)))
    assert all(len(p) > 0 for p in c.parts)
    assert c.k == len(np.unique(labels))


@given(label_vectors, st.permutations(range(5)))
def test_relabeling_gives_the_same_key(labels, perm):
    relabeled = np.asarray(perm)[labels]
    assert PartialClustering(labels).key() == PartialClustering(relabeled).key()


@given(label_vectors, st.data())
def test_split_part_refines_parent(labels, data):
    c = PartialClustering(labels)
    part = data.draw(st.integers(0, c.k - 1))
    size = int(np.sum(c.labels == part))
    if size < 2:
        return
    mask = np.asarray(data.draw(st.lists(st.booleans(), min_size=size, max_size=size)))
    if mask.all() or not mask.any():
        with pytest.raises(ValueError):
            c.split_part(part, mask, "x")
        return
    child = c.split_part(part, mask, "x")
    assert child.k == c.k + 1
    assert child.is_refinement_of(c)
    assert not c.is_refinement_of(child)


def test_negative_label_rejected():
    with pytest.raises(ValueError):
        PartialClustering([0, -1, 1])


# quality ----------------------------------------------------------------------

def test_perfect_clustering_has_zero_corruption():
    labels = np.repeat([0, 1], 50)
    q = quality(PartialClustering(labels), _dataset(labels))
    assert [p.corr for p in q.parts] == [0, 0]
    assert [p.comp for p in q.parts] == [[0], [1]]
    assert q.is_good(0.0)


def test_one_moved_sample_counts_in_both_parts():
    truth = np.repeat([0, 1], 50)
    lab = truth.copy()
    lab[0] = 1
    q = quality(PartialClustering(lab), _dataset(truth))
    assert [p.corr for p in q.parts] == [1, 1]
    assert q.is_good(1 / 49) and not q.is_good(1 / 60)


def test_component_split_in_half_is_contained_nowhere():
    truth = np.zeros(100, dtype=int)
    lab = np.repeat([0, 1], 50)
    q = quality(PartialClustering(lab), _dataset(truth), w_min=0.3)
    assert all(p.comp == [] for p in q.parts)
    assert not q.is_good(1.0)


def test_corrupted_samples_count_as_corruption():
    truth = np.array([0] * 40 + [-1] * 10)
    q = quality(PartialClustering(np.zeros(50, dtype=int)), _dataset(truth))
    assert q.parts[0].corr == 10 and q.parts[0].comp == [0]


@settings(max_examples=30)
@given(arrays(np.int64, 40, elements=st.integers(-1, 2)), arrays(np.int64, 40, elements=st.integers(0, 3)),
       st.floats(0.05, 0.9))
def test_quality_matches_direct_count(truth, lab, w_min):
    if not np.any(truth >= 0):
        return
    c = PartialClustering(lab)
    q = quality(c, _dataset(truth), w_min=w_min)
    comps = [t for t in range(truth.max() + 1) if np.any(truth == t)]
    for s, pq in enumerate(q.parts):
        inside = c.labels == s
        contained = [t for t in comps if np.sum(inside & (truth == t)) >= (1 - w_min) * np.sum(truth == t)]
        assert pq.comp == contained
        in_comp = np.isin(truth, contained)
        direct = np.sum(inside & ~in_comp) + np.sum(~inside & in_comp)
        assert pq.corr == direct


# interval splits ----------------------------------------------------------------

def test_interval_split_modes():
    X = np.array([[-2.0, 0], [-1.0, 5], [0.5, 1], [1.0, 0], [3.0, 2]])
    v = np.array([1.0, 0.0])
    s1, s2 = interval_split(X, v, 1.0)
    assert s1.tolist() == [1, 2, 3] and s2.tolist() == [0, 4]
    s1, s2 = interval_split(X, v, 0.5, mode="one_sided")
    assert s1.tolist() == [0, 1, 2] and s2.tolist() == [3, 4]
    with pytest.raises(ValueError):
        interval_split(X, v, 1.0, mode="sideways")
    with pytest.raises(ValueError):
        interval_split(X, v, float("nan"))


@given(arrays(float, (20, 3), elements=st.floats(-10, 10)), st.floats(-5, 5),
       st.sampled_from(["two_sided", "one_sided"]))
def test_interval_split_partitions_rows(X, tau, mode):
    s1, s2 = interval_split(X, np.array([1.0, -1.0, 0.5]), tau, mode)
    assert np.array_equal(np.sort(np.concatenate([s1, s2])), np.arange(20))


def test_threshold_rates_near_closed_form():
    r = threshold_error_rates(1e-2, 1.0, 200000, 3)
    assert abs(r["rate1"] - r["exact1"]) < 5 * r["stderr1"] + 1e-6
    assert abs(r["rate2"] - r["exact2"]) < 5 * r["stderr2"]
    assert r["rate2"] <= np.sqrt(0.1)
    with pytest.raises(ValueError):
        threshold_error_rates(1.0, 1.0, 10, 0)


# split scoring -------------------------------------------------------------------

def _direct_gain(Y, mask):
    def half_ll(Z):
        S = np.cov(Z.T, bias=True) + 1e-9 * np.eye(Y.shape[1])
        return 0.5 * len(Z) * np.linalg.slogdet(S)[1]
    n, n1 = len(Y), int(mask.sum())
    n2 = n - n1
    return half_ll(Y) - half_ll(Y[mask]) - half_ll(Y[~mask]) + n1 * np.log(n1 / n) + n2 * np.log(n2 / n)


@settings(max_examples=25)
@given(st.integers(0, 2 ** 31), st.integers(1, 3))
def test_split_gain_matches_direct_formula(seed, d):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((60, d)) * rng.uniform(0.5, 2, d)
    mask = rng.random(60) < 0.4
    if min(mask.sum(), (~mask).sum()) <= d:
        assert split_gain(Y, mask) == -np.inf
        return
    assert split_gain(Y, mask) == pytest.approx(_direct_gain(Y, mask), rel=1e-6, abs=1e-6)


@settings(max_examples=20)
@given(st.integers(0, 2 ** 31))
def test_sweep_matches_mask_gains(seed):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((80, 2))
    proj = Y @ rng.standard_normal(2)
    taus = np.sort(rng.uniform(0.1, 2.0, 6))
    sc = SplitScorer(Y)
    swept = sc.sweep(proj, taus, two_sided=True)
    for tau, g in zip(taus, swept):
        # the sweep splits off {|proj| <= tau} (ties fall on the inside)
        mask = np.abs(proj) > tau
        expect = sc.mask_gain(mask) if 0 < mask.sum() < 80 else -np.inf
        assert g == pytest.approx(expect, rel=1e-9, abs=1e-9)


def test_gain_rewards_true_split():
    rng = np.random.default_rng(0)
    Y = np.vstack([rng.standard_normal((300, 2)) * [0.05, 1], rng.standard_normal((300, 2)) * [1, 0.05]])
    truth = np.arange(600) >= 300
    random = rng.random(600) < 0.5
    assert split_gain(Y, truth) > split_gain(Y, random) + 100


# frobenius split ---------------------------------------------------------------

@pytest.mark.parametrize("d,ratio,floor", [(6, 1e4, 0.95), (10, 9.0, 0.9)])
def test_frobenius_split_separates_scaled_block(d, ratio, floor):
    _, data = generate(ScenarioConfig(name="frobenius", d=d, k=2, n=20000, ratio=ratio, seed=0))
    truth = data.true_labels == 1
    masks = frobenius_split(data.points, FrobeniusConfig(rounds=16, seed=0))
    best = max(max(np.mean(m == truth), np.mean(m != truth)) for m in masks)
    assert best > floor


def test_frobenius_split_returns_bipartitions_when_inseparable():
    X = np.random.default_rng(0).standard_normal((2000, 3))
    masks = frobenius_split(X, FrobeniusConfig(rounds=4, seed=0))
    assert all(0 < m.sum() < len(X) and not m[0] for m in masks)


def test_frobenius_split_rejects_tiny_input():
    with pytest.raises(ValueError):
        frobenius_split(np.zeros((2, 3)), FrobeniusConfig())


# tree search ---------------------------------------------------------------------

def test_tree_search_k1_makes_no_calls():
    calls = []
    res = tree_search(np.zeros((10, 2)), 1, lambda *a, **kw: calls.append(1) or [])
    assert not calls
    assert res.results == [0] and res.clusterings[0].k == 1


def _halving(clustering, part, X, seed=0, parent=None, diagnostics=None):
    members = np.flatnonzero(clustering.labels == part)
    if len(members) < 2:
        return []
    mask = np.arange(len(members)) >= len(members) // 2
    return [clustering.split_part(part, mask, "half", parent), clustering.split_part(part, ~mask, "half", parent)]


def test_tree_search_reaches_k_parts_and_refines():
    res = tree_search(np.zeros((16, 1)), 3, _halving)
    assert res.results
    for i in res.results:
        node = res.nodes[i]
        assert node.k == 3
        j = i
        while res.parents[j] is not None:
            assert res.nodes[j].is_refinement_of(res.nodes[res.parents[j]])
            j = res.parents[j]
        assert res.depth(i) == 2


def test_tree_search_node_cap():
    res = tree_search(np.zeros((64, 1)), 6, _halving, max_nodes=10)
    assert res.exhausted and len(res.nodes) == 10


def test_tree_search_is_deterministic():
    a = tree_search(np.zeros((16, 1)), 3, _halving).to_dict()
    b = tree_search(np.zeros((16, 1)), 3, _halving).to_dict()
    assert a == b


# component fits and selection -----------------------------------------------------

def test_fit_component_point_mass_floored():
    mu, S = fit_component(np.ones((20, 3)))
    assert np.allclose(mu, 1.0)
    assert np.linalg.eigvalsh(S).min() > 0


def test_fit_component_trimming_resists_outliers():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5000, 3))
    X[:100] = 50.0
    mu, S = fit_component(X, eps=0.03)
    assert np.linalg.norm(mu) < 0.1
    assert np.allclose(S, np.eye(3), atol=0.15)
    with pytest.raises(ValueError):
        fit_component(X[:3], eps=0.0)


def test_selection_picks_truth_among_bad_candidates():
    sc = ScenarioConfig(name="spherical", d=4, k=2, n=6000, separation=4.0, seed=2)
    _, data = generate(sc)
    X = data.points
    half = len(X) // 2
    truth = data.true_labels[:half]
    rng = np.random.default_rng(0)
    cands = [PartialClustering(rng.integers(0, 2, half)), PartialClustering(truth),
             PartialClustering((X[:half, 1] > 0).astype(int))]
    res = select_clustering(cands, X[:half], X[half:], X, SelectionConfig(mc_samples=5000))
    assert res.winner == 1
    assert min_recall(res.labels, data.true_labels) > 0.95


def test_selection_tie_goes_to_first_candidate():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((400, 2))
    lab = (X[:200, 0] > 0).astype(int)
    cands = [PartialClustering(lab), PartialClustering(lab.copy())]
    assert select_clustering(cands, X[:200], X[200:], X, SelectionConfig(mc_samples=2000)).winner == 0


def test_selection_rejects_mismatched_candidates():
    X = np.random.default_rng(0).standard_normal((50, 2))
    with pytest.raises(ValueError):
        select_clustering([PartialClustering(np.zeros(10, dtype=int))], X, X, X)
    with pytest.raises(ValueError):
        select_clustering([], X, X, X)


# refinement ------------------------------------------------------------------------

def test_refine_centered_children_refine_parent():
    sc = ScenarioConfig(name="spectral", d=4, k=2, n=4000, seed=0)
    _, data = generate(sc)
    root = PartialClustering.trivial(data.n)
    cfg = RefinementConfig(eps_grid=[1 / 64], list_cap=8, time_budget=60)
    children = refine_centered(root, 0, data.points, cfg)
    assert children
    assert all(c.k == 2 and c.is_refinement_of(root) for c in children)
    best = max(min_recall(c.labels, data.true_labels) for c in children)
    assert best > 0.9


def test_refinement_config_validation():
    with pytest.raises(ValueError):
        RefinementConfig(separation=1.0)
    with pytest.raises(ValueError):
        RefinementConfig(eps_grid=[])
    assert RefinementConfig(separation=64, eps_max=0.1).eps_values() == [1 / 64, 1 / 32, 1 / 16]
