import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from resfed.errors import InsufficientHistoryError, ShapeError
from resfed.params import ParamVector
from resfed.predictor import PredictorConfig, Trajectory, predict, push, recover, residual

f32 = lambda *v: np.array(v, dtype=np.float32)  # noqa: E731
finite = st.floats(-1e3, 1e3, width=32, allow_nan=False)


def vec(*v):
    return ParamVector(f32(*v))


def test_trajectory_eviction():
    t = Trajectory(1)
    push(push(t, vec(1)), vec(2))
    assert [p.values.tolist() for p in t] == [[2.0]]
    t = Trajectory(2)
    for x in (1, 2, 3):
        t.push(vec(x))
    assert [p.values[0] for p in t.entries] == [2.0, 3.0]


def test_trajectory_shape_and_empty():
    t = Trajectory(2).push(vec(1, 2))
    with pytest.raises(ShapeError):
        t.push(vec(1))
    with pytest.raises(InsufficientHistoryError):
        Trajectory(1).newest
    assert len(Trajectory(0).push(vec(1))) == 0


def test_stationary_prediction_is_identity():
    cur = vec(1.0, -2.0)
    assert predict([], [], cur, PredictorConfig(0)) is cur


def test_linear_prediction_hand_example():
    out = predict([vec(0.5, 1.0)], [vec(0.4, 0.9)], vec(1.0, 2.0), PredictorConfig(1))
    # each coordinate is 1 + (0.5 - 0.4) evaluated in float32
    expected = f32(1.0, 2.0) + (f32(0.5, 1.0) - f32(0.4, 0.9))
    assert np.array_equal(out.values, expected)
    np.testing.assert_allclose(out.values, [1.1, 2.1], rtol=1e-6)


def test_linear_prediction_zero_transition():
    cur = vec(3.0, 4.0)
    assert predict([vec(1, 1)], [vec(1, 1)], cur, PredictorConfig(1)).bits_equal(cur)


def test_window_two_sign_pattern():
    # T=2: cur + 1*(d at t-2) - 2*(d at t-1)
    locals_ = [vec(1.0), vec(3.0)]
    globals_ = [vec(0.0), vec(2.0)]
    out = predict(locals_, globals_, vec(10.0), PredictorConfig(2))
    assert out.values.tolist() == [10.0 + 1.0 - 2.0]


def test_uses_only_newest_window_entries():
    out = predict([vec(100.0), vec(1.0)], [vec(-100.0), vec(0.5)], vec(0.0), PredictorConfig(1))
    assert out.values.tolist() == [0.5]


def test_insufficient_history_and_shape():
    with pytest.raises(InsufficientHistoryError):
        predict([vec(1)], [], vec(1), PredictorConfig(1))
    with pytest.raises(ShapeError):
        predict([vec(1, 2)], [vec(1, 2)], vec(1), PredictorConfig(1))


def test_residual_and_recover_examples():
    r = residual(vec(1.2, 2.0), vec(1.1, 2.1))
    np.testing.assert_allclose(r.values, [0.1, -0.1], rtol=1e-5)
    assert not residual(vec(1, 2), vec(1, 2)).values.any()
    w = recover(vec(1.1, 2.1), vec(0.1, -0.1))
    assert np.array_equal(w.values, f32(1.1, 2.1) + f32(0.1, -0.1))
    p = vec(1.5, -0.25)
    assert recover(p, vec(0, 0)).bits_equal(p)
    with pytest.raises(ShapeError):
        residual(vec(1), vec(1, 2))


pairs = st.integers(1, 40).flatmap(
    lambda n: st.tuples(arrays(np.float32, n, elements=finite), arrays(np.float32, n, elements=finite))
)


@given(pairs)
def test_recover_residual_within_one_rounding(pair):
    w, p = (ParamVector(a) for a in pair)
    r = residual(w, p).values
    back = recover(p, residual(w, p)).values
    # r = fl(w - p) and back = fl(p + r): two roundings, each at most half an ulp of its result
    bound = np.spacing(np.abs(r)).astype(np.float64) / 2 + np.spacing(np.maximum(np.abs(back), np.abs(w.values))) / 2
    assert np.all(np.abs(back.astype(np.float64) - w.values) <= bound)


@given(pairs)
def test_recover_is_exact_for_nearby_prediction(pair):
    # p within a factor of two of w: w - p is exact (Sterbenz), so recovery is too
    w, _ = pair
    w = w[w != 0]
    p = w * np.float32(1.25)
    back = recover(ParamVector(p), residual(ParamVector(w), ParamVector(p)))
    assert np.array_equal(back.values, w)


@given(pairs, st.integers(0, 3))
def test_prediction_commutes_with_permutation(pair, window):
    a, b = pair
    n = a.size
    perm = np.random.default_rng(n).permutation(n)
    hist_l = [ParamVector(a * np.float32(k + 1)) for k in range(window)]
    hist_g = [ParamVector(b * np.float32(k + 2)) for k in range(window)]
    cur = ParamVector(a - b)
    out = predict(hist_l, hist_g, cur, PredictorConfig(window)).values
    out_p = predict(
        [ParamVector(h.values[perm]) for h in hist_l],
        [ParamVector(h.values[perm]) for h in hist_g],
        ParamVector(cur.values[perm]),
        PredictorConfig(window),
    ).values
    assert np.array_equal(out[perm], out_p)


@given(pairs)
def test_linear_prediction_bitwise_definition(pair):
    a, b = pair
    cur = ParamVector(a)
    out = predict([ParamVector(b)], [ParamVector(a)], cur, PredictorConfig(1))
    assert np.array_equal(out.values, a + (b - a))
