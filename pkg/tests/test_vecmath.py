"""Tests for the numeric kernels."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedcode import vecmath
from embedcode.errors import DegenerateVectorError, ShapeError, ValidationError

from oracles import naive_near_pairs


def test_cosine_identical():
    assert vecmath.cosine_similarity([1.0, 0.0], [1.0, 0.0]) == 1.0


def test_cosine_orthogonal():
    assert vecmath.cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_cosine_45_degrees():
    # 1/sqrt(2) by hand
    assert vecmath.cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(
        0.7071068, abs=1e-6
    )


def test_cosine_zero_norm_rejected():
    with pytest.raises(DegenerateVectorError):
        vecmath.cosine_similarity([0.0, 0.0], [1.0, 0.0])


def test_cosine_dim_mismatch():
    with pytest.raises(ShapeError):
        vecmath.cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])


def test_distance_identical():
    assert vecmath.cosine_distance([2.0, 1.0], [2.0, 1.0]) == pytest.approx(0.0, abs=1e-12)


def test_distance_orthogonal():
    assert vecmath.cosine_distance([1.0, 0.0], [0.0, 1.0]) == 1.0


def test_distance_antipodal():
    assert vecmath.cosine_distance([1.0, 0.0], [-1.0, 0.0]) == 2.0


def test_centroid_single_vector():
    v = np.array([0.3, 0.4, 0.5])
    assert np.array_equal(vecmath.centroid([v]), v)


def test_centroid_two_axes():
    assert np.allclose(vecmath.centroid([[1.0, 0.0], [0.0, 1.0]]), [0.5, 0.5])


def test_centroid_idempotent_on_copies():
    v = np.array([0.6, 0.8])
    assert np.allclose(vecmath.centroid([v] * 7), v)


def test_centroid_empty_rejected():
    with pytest.raises(ValidationError):
        vecmath.centroid([])


def test_softmax_symmetry():
    assert np.allclose(vecmath.softmax([0.0, 0.0]), [0.5, 0.5])


def test_softmax_uniform():
    assert np.allclose(vecmath.softmax([2.5, 2.5, 2.5], temperature=0.7), [1 / 3] * 3)


def test_softmax_hand_value():
    # e/(e+1) by hand
    p = vecmath.softmax([1.0, 0.0])
    assert p[0] == pytest.approx(0.7310586, abs=1e-6)
    assert p[1] == pytest.approx(0.2689414, abs=1e-6)


def test_softmax_empty_rejected():
    with pytest.raises(ValidationError):
        vecmath.softmax([])


def test_softmax_bad_temperature():
    with pytest.raises(ValidationError):
        vecmath.softmax([1.0], temperature=0.0)


unit_floats = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


@st.composite
def vector_pairs(draw, dim_min=2, dim_max=8):
    dim = draw(st.integers(dim_min, dim_max))
    a = draw(
        st.lists(unit_floats, min_size=dim, max_size=dim).filter(
            lambda v: sum(x * x for x in v) > 1e-6
        )
    )
    b = draw(
        st.lists(unit_floats, min_size=dim, max_size=dim).filter(
            lambda v: sum(x * x for x in v) > 1e-6
        )
    )
    return a, b


@given(vector_pairs(), st.floats(0.01, 100.0), st.floats(0.01, 100.0))
def test_cosine_scale_invariance(pair, alpha, beta):
    a, b = pair
    base = vecmath.cosine_similarity(a, b)
    scaled = vecmath.cosine_similarity(np.multiply(a, alpha), np.multiply(b, beta))
    assert scaled == pytest.approx(base, abs=1e-9)


@given(vector_pairs())
def test_cosine_symmetry(pair):
    a, b = pair
    assert vecmath.cosine_similarity(a, b) == pytest.approx(
        vecmath.cosine_similarity(b, a), abs=1e-12
    )


@given(
    st.lists(st.floats(-50, 50), min_size=1, max_size=8),
    st.floats(-10, 10),
)
def test_softmax_translation_invariance(scores, shift):
    base = vecmath.softmax(scores)
    shifted = vecmath.softmax([s + shift for s in scores])
    assert np.max(np.abs(base - shifted)) < 1e-12


@given(
    st.lists(st.integers(-50, 50).map(float), min_size=2, max_size=8, unique=True),
    st.floats(0.05, 20.0),
)
def test_softmax_argmax_invariance(scores, temperature):
    # integer-valued scores keep the ordering strict after the fp division
    assert int(np.argmax(vecmath.softmax(scores, temperature))) == int(np.argmax(scores))


@given(st.lists(st.integers(0, 2**32 - 1), min_size=1, max_size=12), st.integers(2, 6))
def test_centroid_norm_bound_for_unit_inputs(seeds, dim):
    vs = []
    for s in seeds:
        v = np.random.default_rng(s).standard_normal(dim)
        vs.append(v / np.linalg.norm(v))
    assert np.linalg.norm(vecmath.centroid(vs)) <= 1.0 + 1e-12


@settings(deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 40), st.sampled_from([3, 7, 16, 256]))
def test_near_pairs_matches_naive_double_loop(seed, n, block_size):
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((n, 6)).astype(np.float32)
    got = sorted(vecmath.near_pairs(vectors, 0.4, block_size=block_size))
    want = sorted(naive_near_pairs(vectors, 0.4))
    assert got == want  # bit-exact, including distances


def test_near_pairs_inclusive_boundary():
    # two unit vectors at exactly distance 0.5
    a = np.array([1.0, 0.0])
    b = np.array([0.5, np.sqrt(0.75)])
    pairs = list(vecmath.near_pairs(np.stack([a, b]), 1.0 - float(np.einsum("d,d->", a, b))))
    assert len(pairs) == 1
