import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import naive_labels
from sbekmeans import core
from sbekmeans.core import (Centroids, ContractError, Dataset, RngStream, SolverConfig, assign,
                            init_explicit, init_random)
from sbekmeans.data import PAPER_2D_INIT


def test_assign_four_points(four_points, two_centers):
    a = assign(four_points, two_centers)
    assert a.labels.tolist() == [0, 0, 1, 1]
    assert a.counts.tolist() == [2, 2]


def test_assign_single_point_at_centroid():
    assert assign(Dataset([[5.0]]), init_explicit([[5.0]])).labels.tolist() == [0]


def test_assign_tie_goes_to_smallest_index():
    assert assign(Dataset([[1.0]]), init_explicit([[0.0], [2.0]])).labels.tolist() == [0]
    assert assign(Dataset([[1.0]]), init_explicit([[2.0], [0.0]])).labels.tolist() == [0]


def test_assign_dimension_mismatch(four_points):
    with pytest.raises(ContractError):
        assign(four_points, init_explicit([[0.0, 1.0]]))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_assign_matches_naive_and_is_pure(n, d, k, seed):
    g = np.random.default_rng(seed)
    data = Dataset(g.normal(size=(n, d)))
    c = Centroids(g.normal(size=(k, d)))
    a1, a2 = assign(data, c), assign(data, c)
    np.testing.assert_array_equal(a1.labels, naive_labels(data.points, c.centers))
    np.testing.assert_array_equal(a1.labels, a2.labels)
    assert a1.counts.sum() == n
    np.testing.assert_array_equal(a1.counts, np.bincount(a1.labels, minlength=k))


def test_assign_permutation_equivariant_without_ties():
    g = np.random.default_rng(3)
    data = Dataset(g.normal(size=(200, 3)))
    c = g.normal(size=(5, 3))
    perm = g.permutation(5)
    base = assign(data, Centroids(c)).labels
    permuted = assign(data, Centroids(c[perm])).labels
    np.testing.assert_array_equal(perm[permuted], base)


def test_assign_thread_count_does_not_change_labels(monkeypatch):
    monkeypatch.setattr(core, "CHUNK_ROWS", 64)
    g = np.random.default_rng(0)
    data = Dataset(g.normal(size=(1000, 4)))
    c = Centroids(g.normal(size=(6, 4)))
    core.set_threads(1)
    one = assign(data, c).labels
    core.set_threads(4)
    try:
        four = assign(data, c).labels
    finally:
        core.set_threads(None)
    np.testing.assert_array_equal(one, four)


def test_sbe_threads_env(monkeypatch):
    monkeypatch.setenv("SBE_THREADS", "3")
    assert core.get_threads() == 3


def test_dataset_rejects_nonfinite():
    with pytest.raises(ContractError):
        Dataset([[0.0, np.nan]])
    with pytest.raises(ContractError):
        Centroids([[np.inf]])


def test_types_are_read_only(four_points):
    with pytest.raises(ValueError):
        four_points.points[0, 0] = 1.0


def test_init_random_deterministic(iris):
    a = init_random(iris, 3, RngStream(42, 0)).centers
    b = init_random(iris, 3, RngStream(42, 0)).centers
    np.testing.assert_array_equal(a, b)
    assert len({tuple(r) for r in a}) == 3
    for row in a:
        assert any(np.array_equal(row, p) for p in iris.points)


def test_init_random_forced_and_exhaustive(four_points):
    assert init_random(Dataset([[7.0]]), 1, RngStream(1)).centers.tolist() == [[7.0]]
    c = init_random(four_points, 4, RngStream(9)).centers.ravel()
    assert sorted(c.tolist()) == [0.0, 2.0, 10.0, 12.0]


def test_init_random_k_too_large(four_points):
    with pytest.raises(ContractError):
        init_random(four_points, 5, RngStream(0))


def test_init_random_uniform_frequency():
    data = Dataset(np.arange(10.0))
    k, draws = 3, 10_000
    rng = RngStream(123)
    hits = np.zeros(10)
    for _ in range(draws):
        hits[init_random(data, k, rng).centers.ravel().astype(int)] += 1
    p = k / 10
    sigma = np.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(hits - draws * p) < 5 * sigma)


def test_streams_are_independent_of_other_streams():
    a = RngStream(5, 1).generator.random(4)
    RngStream(5, 0).generator.random(100)
    b = RngStream(5, 1).generator.random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, RngStream(5, 2).generator.random(4))


def test_init_explicit_paper_values():
    c = init_explicit(PAPER_2D_INIT)
    assert (c.k, c.dim) == (4, 2)
    assert c.centers[0].tolist() == [-5.5989, -2.7090]
    assert c.centers[3].tolist() == [2.3485, 3.5286]


@given(arrays(np.float64, (3, 2), elements=st.floats(-1e6, 1e6)))
def test_init_explicit_round_trip(values):
    np.testing.assert_array_equal(init_explicit(init_explicit(values).centers).centers, values)


def test_init_explicit_origin_and_nonfinite():
    c = init_explicit([[0.0]])
    assert (c.k, c.dim) == (1, 1)
    with pytest.raises(ContractError):
        init_explicit([[np.nan]])


@pytest.mark.parametrize("kwargs", [
    dict(k=0), dict(k=2, gamma0=0.0), dict(k=2, alpha=1.0), dict(k=2, alpha=-0.1),
    dict(k=2, beta=0.0), dict(k=2, beta=1.5), dict(k=2, batch_size=0), dict(k=2, imaxit=0),
    dict(k=2, omaxit=0),
])
def test_solver_config_rejects(kwargs):
    with pytest.raises(ContractError):
        SolverConfig(**kwargs)


def test_solver_config_defaults_gamma0_to_k(four_points):
    cfg = SolverConfig(k=3)
    assert cfg.gamma0 == 3.0 and cfg.alpha == 0.75 and cfg.beta == 1 / 1.01
    with pytest.raises(ContractError):
        SolverConfig(k=2, batch_size=5).check_data(four_points)
