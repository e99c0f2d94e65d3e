import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import chisquare

from conftest import INDEX_ORDER, random_dataset
from knn_loocv.dataset import Dataset
from knn_loocv.errors import ValidationError
from knn_loocv.neighbors import TieRule, build_table, in_degree, query_neighbors
from oracles import naive_table


def test_three_points(three_points):
    t = build_table(three_points, 2, INDEX_ORDER)
    # brute-force oracle: 1-indexed [[2,3],[1,3],[2,1]]
    np.testing.assert_array_equal(t.order, [[1, 2], [0, 2], [1, 0]])
    np.testing.assert_array_equal(t.distances, [[1, 3], [1, 2], [2, 3]])
    o, d = naive_table([0.0, 1.0, 3.0], 2)
    np.testing.assert_array_equal(t.order, o)


def test_two_points():
    t = build_table(Dataset([0.0, 5.0], [1.0, 2.0]))
    assert t.k_max == 1
    np.testing.assert_array_equal(t.order, [[1], [0]])


def test_k_max_range(three_points):
    with pytest.raises(ValidationError):
        build_table(three_points, 3)
    with pytest.raises(ValidationError):
        build_table(three_points, 0)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("d", [1, 2, 3])
def test_matches_naive_oracle(seed, d):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 60))
    data = random_dataset(rng, n, d)
    k_max = int(rng.integers(1, n))
    t = build_table(data, k_max, INDEX_ORDER)
    o, dist = naive_table(data.points, k_max)
    np.testing.assert_array_equal(t.order, o)
    np.testing.assert_array_equal(t.distances, dist)


@pytest.mark.parametrize("mode", ["index-order", "seeded-uniform"])
@pytest.mark.parametrize("seed", range(3))
def test_tree_and_brute_agree(mode, seed):
    rng = np.random.default_rng(100 + seed)
    # integer lattice points: many exact ties and duplicates
    pts = rng.integers(0, 6, size=(400, 2)).astype(float)
    data = Dataset(pts, rng.standard_normal(400))
    tie = TieRule(seed, mode)
    for k_max in (1, 7, 40):
        a = build_table(data, k_max, tie, backend="brute")
        b = build_table(data, k_max, tie, backend="tree")
        np.testing.assert_array_equal(a.order, b.order)
        np.testing.assert_array_equal(a.distances, b.distances)


def test_threads_do_not_change_table():
    rng = np.random.default_rng(4)
    data = Dataset(rng.integers(0, 4, size=(300, 2)).astype(float), rng.random(300))
    ref = build_table(data, 50, TieRule(9), threads=1)
    for threads in (2, 8):
        t = build_table(data, 50, TieRule(9), threads=threads)
        assert t.order.tobytes() == ref.order.tobytes()


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 25), st.integers(1, 3)),
              elements=st.integers(-3, 3).map(float)),
       st.integers(0, 2**32))
def test_structural_properties(points, seed):
    data = Dataset(points, np.zeros(points.shape[0]))
    t = build_table(data, tie=TieRule(seed))
    n = data.n
    assert t.k_max == n - 1
    for i in range(n):
        row = t.order[i]
        assert i not in row
        assert sorted(row.tolist()) == [j for j in range(n) if j != i]
        assert np.all(np.diff(t.distances[i]) >= 0)


def test_tie_uniformity_unit_square():
    pts = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
    data = Dataset(pts, np.zeros(4))
    seeds = 10_000
    # point 0 has candidates 1 and 2 at distance 1
    picks = np.array([build_table(data, 1, TieRule(s)).order[:, 0] for s in range(seeds)])
    first = (picks[:, 0] == 1).mean()
    assert abs(first - 0.5) < 0.02
    for i, (a, b) in enumerate([(1, 2), (0, 3), (0, 3), (1, 2)]):
        counts = [(picks[:, i] == a).sum(), (picks[:, i] == b).sum()]
        assert sum(counts) == seeds
        assert chisquare(counts).pvalue > 0.001


def test_tie_rule_validation():
    with pytest.raises(ValidationError):
        TieRule(0, "random")


def test_query_neighbors(three_points):
    assert query_neighbors(three_points, [2.4], 1) == [2]
    assert query_neighbors(three_points, [1.0], 1) == [1]
    assert query_neighbors(three_points, [1.9], 3, INDEX_ORDER) == [1, 2, 0]
    with pytest.raises(ValidationError):
        query_neighbors(three_points, [0.0, 1.0], 1)
    with pytest.raises(ValidationError):
        query_neighbors(three_points, [0.0], 4)


def test_in_degree_examples(three_points):
    t = build_table(three_points, 2, INDEX_ORDER)
    np.testing.assert_array_equal(in_degree(t, 1), [1, 2, 0])
    assert in_degree(t, 2).sum() == 6
    with pytest.raises(ValidationError):
        in_degree(t, 3)


def test_in_degree_equispaced_line():
    n = 50
    data = Dataset(np.arange(n, dtype=float), np.zeros(n))
    for tie in (INDEX_ORDER, TieRule(3)):
        deg = in_degree(build_table(data, 1, tie), 1)
        assert deg.max() == 2
        assert deg.sum() == n


@pytest.mark.parametrize("d", [1, 2, 3])
def test_in_degree_stays_bounded(d):
    ratios = {}
    for n in (100, 400, 1600):
        k = math.ceil(math.sqrt(n))
        vals = []
        for seed in range(20):
            rng = np.random.default_rng([seed, n, d])
            t = build_table(Dataset(rng.random((n, d)), np.zeros(n)), k, TieRule(seed))
            vals.append(in_degree(t, k).max() / k)
        ratios[n] = np.mean(vals)
    assert max(ratios.values()) <= 1.5 * ratios[100], ratios


def test_row_json(three_points):
    row = json.loads(build_table(three_points, 2, INDEX_ORDER).row_json(2))
    assert row["order"] == [1, 0] and row["distances"] == [2.0, 3.0]
