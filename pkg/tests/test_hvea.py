import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldgea.hvea import HveaConfig, NicheArchive, hill_valley_test, hvea_run

from .conftest import WELL_CENTERS, two_basin, wells_found


class Counter:
    def __init__(self, f):
        self.f, self.n = f, 0

    def __call__(self, X):
        X = np.atleast_2d(X)
        self.n += len(X)
        return self.f(X)


# -- archive --------------------------------------------------------------------------------------


def test_first_insert_accepted():
    a = NicheArchive(0.5)
    assert a.insert("x", 123.0) and len(a) == 1


def test_insert_evicts_outside_window():
    a = NicheArchive(0.5)
    a.insert("a", 1.0)
    assert a.insert("b", 0.4)
    assert a.values == [0.4]


def test_insert_rejects_outside_window():
    a = NicheArchive(0.5)
    a.insert("a", 0.4)
    assert not a.insert("b", 1.0)
    assert a.values == [0.4]


def test_tag_mismatch_raises():
    a = NicheArchive(0.5, tag="+|1")
    with pytest.raises(ValueError):
        a.insert("x", 0.1, tag="-|1")


def test_non_finite_refused():
    a = NicheArchive(0.5)
    assert not a.insert("x", np.inf) and not a.insert("x", np.nan)


def _check_window(a):
    v = a.values
    assert v == sorted(v)
    assert not v or v[-1] - v[0] <= a.window


@given(st.floats(0, 2), st.lists(st.floats(-10, 10), max_size=60))
def test_window_invariant_property(w, stream):
    a = NicheArchive(w)
    for i, v in enumerate(stream):
        a.insert(i, v)
        _check_window(a)


def test_window_invariant_random_streams():
    rng = np.random.default_rng(0)
    for _ in range(100_000):
        a = NicheArchive(0.5)
        for v in rng.normal(0, 1, rng.integers(1, 8)):
            a.insert(None, v)
        _check_window(a)


# -- hill-valley test --------------------------------------------------------------------------------


def test_convex_bowl_same_basin():
    f = Counter(lambda X: np.sum(X**2, axis=1))
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = rng.uniform(-3, 3, (2, 4))
        assert hill_valley_test(a, b, f(a)[0], f(b)[0], 5, f)


def test_double_well_separated():
    f = Counter(lambda X: X[:, 0] ** 4 - X[:, 0] ** 2)
    a, b = np.array([-1.0]), np.array([1.0])
    assert not hill_valley_test(a, b, -0.25, -0.25, 1, f)
    assert f.n == 1


def test_identical_points_need_no_evaluation():
    f = Counter(lambda X: X[:, 0])
    assert hill_valley_test(np.ones(2), np.ones(2), 1.0, 1.0, 5, f)
    assert f.n == 0


def test_stops_at_first_hill():
    f = Counter(lambda X: X[:, 0] ** 4 - X[:, 0] ** 2)
    assert not hill_valley_test(np.array([-1.0]), np.array([1.0]), -0.25, -0.25, 5, f)
    assert f.n < 5


# -- hvea_run ---------------------------------------------------------------------------------------


def test_two_basins_recovered():
    hits = 0
    for seed in range(10):
        f = Counter(two_basin)
        res = hvea_run(f, np.zeros(2), np.ones(2), 5000, np.random.default_rng(seed))
        assert res.evaluations == f.n <= 5000
        if wells_found(res):
            hits += 1
            pts = np.array(res.archive.points)
            a = pts[np.argmin(np.linalg.norm(pts - WELL_CENTERS[0], axis=1))]
            b = pts[np.argmin(np.linalg.norm(pts - WELL_CENTERS[1], axis=1))]
            # post-hoc distinctness, outside the budget
            assert not hill_valley_test(a, b, two_basin(a)[0], two_basin(b)[0], 5, two_basin)
    assert hits >= 8


def test_single_basin_single_niche():
    ones = 0
    for seed in range(10):
        res = hvea_run(lambda X: np.sum((X - 0.3) ** 2, axis=1), -np.ones(3), np.ones(3), 3000,
                       np.random.default_rng(seed))
        ones += res.n_niches == 1
    assert ones >= 9


def test_tiny_budget_returns_best_uniform_sample():
    f = Counter(two_basin)
    res = hvea_run(f, np.zeros(2), np.ones(2), 3, np.random.default_rng(4))
    assert res.n_niches == 1 and res.evaluations == f.n <= 3
    assert res.best_f == pytest.approx(two_basin(res.best_x)[0])


@pytest.mark.parametrize("budget", [1, 50, 777, 4000])
def test_budget_invariant(budget):
    f = Counter(two_basin)
    res = hvea_run(f, np.zeros(2), np.ones(2), budget, np.random.default_rng(budget))
    assert res.evaluations == f.n <= budget


def test_best_is_archive_minimum_and_tags_checked():
    res = hvea_run(two_basin, np.zeros(2), np.ones(2), 3000, np.random.default_rng(5), tag="k",
                   describe=lambda x: "k")
    assert res.best_f == res.archive.best
    with pytest.raises(ValueError):
        hvea_run(two_basin, np.zeros(2), np.ones(2), 3000, np.random.default_rng(5), tag="k",
                 describe=lambda x: "other")


def test_niche_cap_sets_slices():
    small = hvea_run(two_basin, np.zeros(2), np.ones(2), 4000, np.random.default_rng(6), HveaConfig(niche_cap=2))
    assert small.evaluations <= 4000 and small.n_niches >= 1
