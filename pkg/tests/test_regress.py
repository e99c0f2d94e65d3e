import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import INDEX_ORDER, random_dataset
from knn_loocv.dataset import Dataset
from knn_loocv.errors import ValidationError
from knn_loocv.neighbors import TieRule, build_table
from knn_loocv.regress import (fit, load_model, loo_estimates, loocv_curve, loocv_curve_streaming,
                               predict, save_model, select_k)
from knn_loocv.spectral import build_a, build_b, quadratic_form
from oracles import fast_naive_curve, naive_curve


def test_loo_estimates(three_points):
    t = build_table(three_points, 2, INDEX_ORDER)
    np.testing.assert_array_equal(loo_estimates(three_points, t, 1), [1, 0, 1])
    np.testing.assert_allclose(loo_estimates(three_points, t, 2), [3, 2.5, 0.5])
    with pytest.raises(ValidationError):
        loo_estimates(three_points, t, 3)


def test_loo_estimates_all_but_self():
    rng = np.random.default_rng(0)
    data = random_dataset(rng, 30, 2)
    t = build_table(data)
    y = data.responses
    np.testing.assert_allclose(loo_estimates(data, t, 29), (y.sum() - y) / 29, rtol=1e-12)
    const = data.with_responses(np.full(30, 2.5))
    np.testing.assert_allclose(loo_estimates(const, t, 7), 2.5, rtol=1e-15)


def test_curve_three_points(three_points):
    t = build_table(three_points, 2, INDEX_ORDER)
    c = loocv_curve(three_points, t)
    np.testing.assert_array_equal(c.f, [6.0, 10.5])
    assert c.k_tilde == 1 and c(2) == 10.5


def test_constant_responses():
    data = Dataset(np.arange(10.0), np.full(10, 3.0))
    c = loocv_curve(data, build_table(data))
    np.testing.assert_array_equal(c.f, 0.0)
    assert c.k_tilde == 1


@pytest.mark.parametrize("f, k", [([6, 10.5], 1), ([3, 3, 5], 1), ([5, 2, 4], 2)])
def test_select_k(f, k):
    assert select_k(f) == k


def test_select_k_empty():
    with pytest.raises(ValidationError):
        select_k([])


@pytest.mark.parametrize("seed", range(4))
def test_curve_bitwise_equals_naive(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    data = random_dataset(rng, n, int(rng.integers(1, 4)))
    t = build_table(data, tie=TieRule(seed))
    c = loocv_curve(data, t)
    assert c.f.tobytes() == naive_curve(data.responses, t.order).tobytes()


def test_curve_bitwise_equals_naive_n500():
    rng = np.random.default_rng(42)
    data = random_dataset(rng, 500, 2)
    t = build_table(data, tie=TieRule(1))
    assert loocv_curve(data, t).f.tobytes() == fast_naive_curve(data.responses, t.order).tobytes()


def test_streaming_equals_table():
    rng = np.random.default_rng(7)
    data = Dataset(rng.integers(0, 9, size=(2500, 2)).astype(float), rng.standard_normal(2500))
    t = build_table(data, 60, TieRule(5), backend="brute")
    ref = loocv_curve(data, t)
    for backend in ("brute", "tree", "auto"):
        for threads in (1, 3):
            c = loocv_curve_streaming(data, 60, TieRule(5), backend, threads)
            assert c.f.tobytes() == ref.f.tobytes()


@pytest.mark.parametrize("seed", range(5))
def test_curve_equals_quadratic_form(seed):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, 80, 2)
    t = build_table(data, tie=TieRule(seed))
    c = loocv_curve(data, t)
    for k in range(1, t.k_max + 1):
        q = quadratic_form(build_a(build_b(t, k)), data.responses)
        assert abs(c(k) - q) <= 1e-10 * max(1.0, c(k))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(-1e3, 1e3), st.sampled_from([0.5, 2.0, 4.0, 1024.0]))
def test_shift_and_scale(seed, shift, scale):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, 25, 2)
    t = build_table(data, tie=TieRule(seed))
    base = loocv_curve(data, t)
    shifted = loocv_curve(data.with_responses(data.responses + shift), t)
    np.testing.assert_allclose(shifted.f, base.f, rtol=1e-9, atol=1e-9 * (1 + abs(shift)) ** 2)
    scaled = loocv_curve(data.with_responses(data.responses * scale), t)
    # powers of two scale exactly, so the argmin is preserved bit for bit
    np.testing.assert_array_equal(scaled.f, base.f * scale ** 2)
    assert scaled.k_tilde == base.k_tilde


def test_fit(three_points):
    m = fit(three_points, 2, INDEX_ORDER)
    assert m.k == 1 and m.k_tilde == 1
    m2 = fit(three_points, 2, INDEX_ORDER, k_override=2)
    assert m2.k == 2 and m2.k_override == 2
    np.testing.assert_array_equal(m2.curve.f, m.curve.f)
    two = fit(Dataset([0.0, 1.0], [1.0, 3.0]))
    assert two.k_max == 1 and two.k == 1
    with pytest.raises(ValidationError):
        fit(three_points, 3)


def test_predict(three_points):
    m = fit(three_points, 2, INDEX_ORDER)
    np.testing.assert_array_equal(predict(m, [[2.4]]), [5.0])
    np.testing.assert_array_equal(predict(m, [[0.0], [1.0], [3.0]]), [0.0, 1.0, 5.0])
    full = fit(three_points, 2, INDEX_ORDER, k_override=3)
    np.testing.assert_allclose(predict(full, [[-7.0], [100.0]]), [2.0, 2.0])
    with pytest.raises(ValidationError):
        predict(m, [[1.0, 2.0]])


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    data = random_dataset(rng, 60, 3)
    m = fit(data, tie=TieRule(11))
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json", data)
    q = rng.random((20, 3))
    assert predict(back, q).tobytes() == predict(m, q).tobytes()
    assert back.k == m.k and back.curve.f.tobytes() == m.curve.f.tobytes()
    other = data.with_responses(data.responses + 1)
    with pytest.raises(ValidationError, match="checksum"):
        load_model(tmp_path / "m.json", other)


def test_thread_count_does_not_change_fit():
    rng = np.random.default_rng(8)
    data = random_dataset(rng, 700, 2)
    ref = fit(data, tie=TieRule(2), threads=1)
    for threads in (2, 8):
        m = fit(data, tie=TieRule(2), threads=threads)
        assert m.curve.f.tobytes() == ref.curve.f.tobytes() and m.k == ref.k
