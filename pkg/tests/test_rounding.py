import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmmcluster.rounding import RoundingConfig, Subspace, complement_system, round_containing, round_orthogonal
from gmmcluster.sos import FEASIBLE, Polynomial, PolynomialSystem, PseudoExpectation
from gmmcluster.sos.solver import solve_fixed_moments


def ball(d):
    return 1.0 - Polynomial.squared_norm(d)


def var(i, d):
    return Polynomial.variable(i, d)


def test_forced_direction():
    d = 3
    sys_ = PolynomialSystem(d, [Polynomial.squared_norm(d) - 1.0] + [var(i, d) for i in range(1, d)])
    Q = round_containing(sys_, RoundingConfig(gamma=0.3, t=2))
    assert Q.rank == 1
    assert abs(abs(Q.basis[0, 0]) - 1.0) < 1e-6
    assert Q.trace[-1]["status"] == "infeasible"
    assert len(Q.trace) == 2


def test_infeasible_returns_zero_subspace():
    d = 3
    sys_ = PolynomialSystem(d, [Polynomial.squared_norm(d) - 1.0], [0.25 - Polynomial.squared_norm(d)])
    Q = round_containing(sys_, RoundingConfig(gamma=0.3, t=2))
    assert Q.rank == 0
    assert len(Q.trace) == 1 and Q.stop_reason == "infeasible"


@pytest.mark.parametrize("seed", [0, 1])
def test_planted_plane(seed):
    d = 6
    P = np.diag([1.0, 1.0, 0, 0, 0, 0])
    sys_ = PolynomialSystem(d, [Polynomial.squared_norm(d) - 1.0], [Polynomial.quadratic_form(P, d) - (1 - 1e-6)])
    Q = round_containing(sys_, RoundingConfig(gamma=0.3, t=2, seed=seed))
    rng = np.random.default_rng(seed)
    for _ in range(200):
        v = np.zeros(d)
        v[:2] = rng.standard_normal(2)
        assert Q.distance_to_unit(v / np.linalg.norm(v)) <= 0.3


def test_basis_is_orthonormal_and_bounded():
    d = 4
    sys_ = PolynomialSystem(d, [Polynomial.squared_norm(d) - 1.0])
    Q = round_containing(sys_, RoundingConfig(gamma=0.5, t=2, rank_cap=3))
    assert Q.rank <= 3
    assert np.allclose(Q.basis.T @ Q.basis, np.eye(Q.rank), atol=1e-10)
    assert Q.truncated == (Q.stop_reason == "rank_cap")


def test_complement_requires_ball():
    with pytest.raises(ValueError):
        complement_system(PolynomialSystem(2, [Polynomial.squared_norm(2) - 1.0]), 2, 0.01)


def test_complement_of_hyperplane_contains_normal():
    d = 3
    A = PolynomialSystem(d, [var(0, d)], [ball(d)])
    B = complement_system(A, 2, 0.01)
    pe = PseudoExpectation.from_point(np.eye(d)[0], 2)
    assert solve_fixed_moments(pe, B.certificates[0]).status == FEASIBLE


def test_complement_of_ball_is_empty():
    d = 2
    B = complement_system(PolynomialSystem(d, [], [ball(d)]), 2, 0.05)
    for th in np.linspace(0, np.pi, 7):
        u = np.array([np.cos(th), np.sin(th)])
        assert solve_fixed_moments(PseudoExpectation.from_point(u, 2), B.certificates[0]).status != FEASIBLE


def test_round_orthogonal_single_plant():
    d, eps = 4, 1e-3
    A = PolynomialSystem(d, [], [ball(d), eps - var(0, d) * var(0, d)])
    Q = round_orthogonal(A, RoundingConfig(gamma=0.3, t=2, eps=eps))
    assert Q.distance_to_unit(np.eye(d)[0]) <= 0.3


def test_round_orthogonal_two_plants():
    d, eps = 4, 1e-3
    A = PolynomialSystem(d, [], [ball(d), eps - var(0, d) * var(0, d), eps - var(1, d) * var(1, d)])
    Q = round_orthogonal(A, RoundingConfig(gamma=0.3, t=2, eps=eps))
    assert Q.distance_to_unit(np.eye(d)[0]) <= 0.3
    assert Q.distance_to_unit(np.eye(d)[1]) <= 0.3


def test_round_orthogonal_nothing_planted():
    d = 3
    Q = round_orthogonal(PolynomialSystem(d, [], [ball(d)]), RoundingConfig(gamma=0.3, t=2, eps=1e-3))
    assert Q.rank == 0


def test_rounding_is_deterministic():
    d = 4
    sys_ = PolynomialSystem(d, [Polynomial.squared_norm(d) - 1.0])
    a = round_containing(sys_, RoundingConfig(gamma=0.5, t=2, rank_cap=2, seed=3))
    b = round_containing(sys_, RoundingConfig(gamma=0.5, t=2, rank_cap=2, seed=3))
    assert np.array_equal(a.basis, b.basis)


@given(st.integers(1, 6), st.integers(0, 6), st.integers(0, 2 ** 32 - 1))
def test_distance_and_angle_agree(d, r, seed):
    r = min(r, d)
    rng = np.random.default_rng(seed)
    B = np.linalg.qr(rng.standard_normal((d, d)))[0][:, :r]
    S = Subspace(d, B)
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    dist = S.distance_to_unit(v)
    assert 0.0 <= dist <= np.sqrt(2) + 1e-12
    ang = np.radians(S.angle_to(v))
    assert dist == pytest.approx(2 * np.sin(ang / 2), abs=1e-7)


def test_precondition_report():
    rep = RoundingConfig(gamma=0.3, eps=1e-8).precondition("containing")
    assert rep["satisfied"] == (0.3 >= rep["required"])
