import numpy as np
import pytest
from hypothesis import given, strategies as st

from gmmcluster.model import (Dataset, MixtureModel, corrupt, isotropize, isotropize_model, parameter_distance,
                              sample_mixture)
from gmmcluster.moments import population_moment


def test_model_rejects_bad_weights():
    with pytest.raises(ValueError):
        MixtureModel([0.6, 0.6], np.zeros((2, 2)), np.stack([np.eye(2)] * 2))
    with pytest.raises(ValueError):
        MixtureModel([1.0], np.zeros((1, 2)), -np.eye(2)[None])


def test_model_flags_are_checked():
    with pytest.raises(ValueError):
        MixtureModel([1.0], np.ones((1, 2)), np.eye(2)[None], centered=True)
    with pytest.raises(ValueError):
        MixtureModel([0.5, 0.5], np.zeros((2, 2)), np.stack([np.eye(2), 2 * np.eye(2)]), shared_covariance=True)


def test_sample_single_component():
    m = MixtureModel([1.0], np.zeros((1, 2)), np.eye(2)[None])
    data = sample_mixture(m, 4, seed=7)
    assert data.points.shape == (4, 2)
    assert np.all(data.true_labels == 0)
    assert not data.corrupted_mask.any()


def test_sample_second_moment():
    m = MixtureModel([0.5, 0.5], np.zeros((2, 1)), np.ones((2, 1, 1)))
    data = sample_mixture(m, 10 ** 6, seed=1)
    assert abs(np.mean(data.points ** 2) - 1.0) < 0.01


def test_sample_fourth_moment_matches_population():
    m = MixtureModel([0.5, 0.5], np.array([[-10.0], [10.0]]), np.ones((2, 1, 1)))
    data = sample_mixture(m, 10 ** 5, seed=2)
    pop = population_moment(m, 4)[(0, 0, 0, 0)]
    assert abs(np.mean(data.points ** 4) - pop) / pop < 0.02


def test_sample_is_deterministic():
    m = MixtureModel([0.3, 0.7], np.array([[0.0, 1.0], [1.0, 0.0]]), np.stack([np.eye(2)] * 2))
    a, b = sample_mixture(m, 100, 3), sample_mixture(m, 100, 3)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.true_labels, b.true_labels)


def _clean(n, d=3, seed=0):
    m = MixtureModel([1.0], np.zeros((1, d)), np.eye(d)[None])
    return sample_mixture(m, n, seed)


def test_corrupt_zero_is_identity():
    data = _clean(50)
    out = corrupt(data, 0.0, "point_mass", seed=1)
    assert np.array_equal(out.points, data.points)


def test_corrupt_point_mass_count():
    out = corrupt(_clean(100), 0.1, "point_mass", seed=1)
    assert out.corrupted_mask.sum() == 10
    assert np.all(out.points[out.corrupted_mask] == 0.0)
    assert np.array_equal(out.corrupted_mask, out.true_labels == -1)


def test_corrupt_far_sphere_radius():
    d = 3
    out = corrupt(_clean(1000, d), 0.05, "far_sphere", seed=1)
    norms = np.linalg.norm(out.points[out.corrupted_mask], axis=1)
    assert len(norms) == 50
    assert np.all(norms >= 100 * np.sqrt(d) * (1 - 1e-12))


@given(st.floats(0.0, 0.5), st.integers(1, 300))
def test_corrupt_fraction_bound(eps, n):
    out = corrupt(_clean(n), eps, "shifted_gaussian", seed=0)
    assert out.corrupted_mask.mean() <= eps + 1.0 / n


def test_dataset_mask_must_match_labels():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.array([0, -1]), np.array([False, False]))


def test_dataset_binary_roundtrip(tmp_path):
    data = corrupt(_clean(20), 0.1, "point_mass", seed=0)
    data.save_binary(tmp_path / "d.bin")
    back = Dataset.load_binary(tmp_path / "d.bin")
    assert np.array_equal(back.points, data.points)
    assert np.array_equal(back.true_labels, data.true_labels)


def test_parameter_distance_identical():
    m = MixtureModel([0.5, 0.5], np.zeros((2, 2)), np.stack([np.eye(2)] * 2))
    r = parameter_distance(m, 0, 1)
    assert r.mean_delta == 0 and r.spectral_delta == 0 and r.frobenius_delta == pytest.approx(0, abs=1e-12)


def test_parameter_distance_spectral():
    m = MixtureModel([0.5, 0.5], np.zeros((2, 2)), np.stack([np.eye(2), np.diag([1.0, 1e4])]))
    r = parameter_distance(m, 0, 1)
    assert r.spectral_delta == pytest.approx(100.0)
    assert abs(abs(r.witness_direction[1]) - 1.0) < 1e-9


def test_parameter_distance_mean():
    m = MixtureModel([0.5, 0.5], np.array([[0.0, 0.0], [6.0, 0.0]]), np.stack([np.eye(2)] * 2))
    r = parameter_distance(m, 0, 1)
    assert r.mean_delta ** 2 == pytest.approx(18.0)
    # grid search over the unit circle agrees with the closed form
    th = np.linspace(0, np.pi, 20001)
    V = np.stack([np.cos(th), np.sin(th)], axis=1)
    assert np.max((V @ [6.0, 0.0]) ** 2 / 2.0) == pytest.approx(18.0, rel=1e-6)


def test_isotropize_fixed_point():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((20000, 3))
    L = np.linalg.cholesky(np.linalg.inv(np.cov(X.T, bias=True)))
    X = (X - X.mean(0)) @ L
    data = Dataset(X, np.zeros(len(X), dtype=int), np.zeros(len(X), dtype=bool))
    T, _ = isotropize(data)
    assert np.linalg.norm(T.linear - np.eye(3), 2) <= 1e-6


def test_isotropize_scaled_gaussian():
    mu = np.array([1.0, -2.0, 0.5])
    m = MixtureModel([1.0], mu[None], 4 * np.eye(3)[None])
    data = sample_mixture(m, 10 ** 5, 4)
    T, iso = isotropize(data)
    assert np.allclose(np.cov(iso.points.T, bias=True), np.eye(3), atol=0.05)
    assert np.allclose(np.abs(np.linalg.eigvalsh(T.linear @ T.linear.T)), 0.25, rtol=0.05)


def test_isotropize_trimmed_under_corruption():
    d = 3
    m = MixtureModel([1.0], np.zeros((1, d)), np.eye(d)[None])
    data = corrupt(sample_mixture(m, 20000, 5), 0.05, "far_sphere", seed=6)
    _, iso = isotropize(data, trim_fraction=0.1)
    inl = iso.points[~data.corrupted_mask]
    C = np.cov(inl.T, bias=True)
    assert np.linalg.norm(C - np.eye(d), 2) <= 0.1


def test_isotropize_model_identity_covariance():
    rng = np.random.default_rng(1)
    covs = []
    for _ in range(2):
        G = rng.standard_normal((3, 3))
        covs.append(G @ G.T + np.eye(3))
    m = MixtureModel([0.4, 0.6], rng.standard_normal((2, 3)), np.stack(covs))
    iso, _ = isotropize_model(m)
    assert np.allclose(iso.covariance(), np.eye(3), atol=1e-10)
    assert np.allclose(iso.mean(), 0.0, atol=1e-10)
