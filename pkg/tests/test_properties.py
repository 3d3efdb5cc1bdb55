"""Randomized invariants of the attention kernels (1000 examples each)."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from transdeeplab import tensor as T
from transdeeplab.swin import (
    WindowGrid,
    build_shift_mask,
    cyclic_shift,
    window_attention,
    window_partition,
    window_reverse,
)
from transdeeplab.tensor import Tensor

MANY = settings(max_examples=1000, deadline=None)


@st.composite
def grids(draw):
    m = draw(st.integers(1, 4))
    h = m * draw(st.integers(1, 3))
    w = m * draw(st.integers(1, 3))
    b = draw(st.integers(1, 2))
    c = draw(st.integers(1, 3))
    seed = draw(st.integers(0, 2**32 - 1))
    return b, h, w, c, m, seed


@MANY
@given(grids())
def test_partition_reverse_bit_exact(case):
    b, h, w, c, m, seed = case
    x = Tensor(np.random.default_rng(seed).normal(size=(b, h, w, c)))
    np.testing.assert_array_equal(window_reverse(window_partition(x, m), h, w, m).data, x.data)


@MANY
@given(grids(), st.integers(0, 11))
def test_cyclic_shift_roundtrip_bit_exact(case, s):
    b, h, w, c, _, seed = case
    x = Tensor(np.random.default_rng(seed).normal(size=(b, h, w, c)))
    np.testing.assert_array_equal(cyclic_shift(cyclic_shift(x, s), -s).data, x.data)


@st.composite
def attention_cases(draw):
    m = draw(st.sampled_from([1, 2, 3]))
    heads = draw(st.integers(1, 2))
    c = heads * draw(st.integers(1, 3))
    n_grid = draw(st.integers(1, 2))
    shifted = draw(st.booleans()) and m > 1
    seed = draw(st.integers(0, 2**32 - 1))
    shift_const = draw(st.floats(-50, 50, allow_nan=False))
    return m, heads, c, n_grid, shifted, seed, shift_const


def _attention(case, offset=0.0):
    m, heads, c, n_grid, shifted, seed, _ = case
    rng = np.random.default_rng(seed)
    h = w = m * n_grid
    x = window_partition(Tensor(rng.normal(size=(1, h, w, c)), dtype=np.float64), m)
    mask = build_shift_mask(WindowGrid(h, w, m, m // 2)) if shifted else None
    table = rng.normal(size=((2 * m - 1) ** 2, heads)) + offset
    with T.default_dtype(np.float64):
        return window_attention(
            x, Tensor(rng.normal(size=(c, 3 * c))), Tensor(rng.normal(size=3 * c)),
            Tensor(rng.normal(size=(c, c))), Tensor(rng.normal(size=c)), Tensor(table),
            heads, m, mask=mask, return_weights=True,
        )


@MANY
@given(attention_cases())
def test_attention_rows_sum_to_one(case):
    _, weights = _attention(case)
    assert np.all(np.abs(weights.data.sum(axis=-1) - 1.0) < 1e-6)


@MANY
@given(attention_cases())
def test_attention_logit_shift_invariance(case):
    # a constant added to every bias-table entry shifts each logit row uniformly
    out, weights = _attention(case)
    out2, weights2 = _attention(case, offset=case[-1])
    assert np.abs(weights.data - weights2.data).max() < 1e-6
    assert np.abs(out.data - out2.data).max() < 1e-6


@MANY
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=8),
       st.floats(-1e3, 1e3, allow_nan=False))
def test_softmax_sum_and_shift(values, c):
    x = Tensor(np.array(values), dtype=np.float64)
    p = T.softmax(x).data
    assert abs(p.sum() - 1.0) < 1e-6
    assert np.abs(T.softmax(Tensor(np.array(values) + c, dtype=np.float64)).data - p).max() < 1e-6
