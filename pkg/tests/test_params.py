import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from resfed.errors import ShapeError
from resfed.params import ParamVector, Segment
from resfed.rng import derive_seed, make_rng

finite32 = st.floats(-1e6, 1e6, width=32, allow_nan=False)


def test_values_are_copied_and_readonly():
    src = np.array([1.0, 2.0], dtype=np.float32)
    p = ParamVector(src)
    src[0] = 9
    assert p.values[0] == 1.0
    with pytest.raises(ValueError):
        p.values[0] = 3


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        ParamVector([1.0, np.nan])
    with pytest.raises(ValueError):
        ParamVector([np.inf])


def test_default_segment_covers_everything():
    p = ParamVector(np.zeros(5))
    assert p.segments == (Segment("params", 0, 5),)


def test_segments_must_tile():
    with pytest.raises(ValueError):
        ParamVector(np.zeros(4), (Segment("a", 0, 2), Segment("b", 3, 1)))
    with pytest.raises(ValueError):
        ParamVector(np.zeros(4), (Segment("a", 0, 2),))


def test_concat_and_segment_lookup():
    p = ParamVector.concat([("w", np.ones((2, 2))), ("b", np.zeros(3))])
    assert len(p) == 7
    assert p.segment("b").tolist() == [0, 0, 0]
    assert p.segment("w").tolist() == [1, 1, 1, 1]


def test_bits_equal_distinguishes_signed_zero():
    assert not ParamVector([0.0]).bits_equal(ParamVector([-0.0]))
    assert ParamVector([0.0]).bits_equal(ParamVector([0.0]))


def test_shape_check():
    with pytest.raises(ShapeError):
        ParamVector([1.0]).check_same_shape(ParamVector([1.0, 2.0]))


@given(arrays(np.float32, st.integers(0, 50), elements=finite32))
def test_like_keeps_segments(values):
    p = ParamVector(values)
    q = p.like(values * 2)
    assert q.segments == p.segments


def test_rng_streams_are_keyed():
    a = make_rng(1, 2).standard_normal(4)
    assert np.array_equal(a, make_rng(1, 2).standard_normal(4))
    assert not np.array_equal(a, make_rng(1, 3).standard_normal(4))
    assert derive_seed(5, 1) == derive_seed(5, 1) != derive_seed(5, 2)
