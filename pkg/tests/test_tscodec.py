import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plotbench.errors import DegenerateInputError, RejectedInputError
from plotbench.tscodec import (
    CodecSpec,
    decode_values,
    encode_series,
    encode_values,
    format_value,
    scale,
)


# --- independent scaling oracles (pure-python, no numpy) -----------------------


def minmax_oracle(values):
    lo = min(values)
    hi = max(values)
    return [(v - lo) / (hi - lo) for v in values]


def quantile_oracle(values, q):
    """Linear interpolation between order statistics."""
    s = sorted(values)
    if len(s) == 1:
        return s[0]
    pos = q * (len(s) - 1)
    lo = math.floor(pos)
    hi = math.ceil(pos)
    frac = pos - lo
    return s[lo] * (1 - frac) + s[hi] * frac


def llmtime_oracle(values, alpha, beta):
    m = min(values) - beta * (max(values) - min(values))
    q = quantile_oracle([v - m for v in values], alpha)
    if q == 0:
        q = 1.0
    return [(v - m) / q for v in values], m, q


# --- scale ---------------------------------------------------------------------


def test_minmax_endpoints():
    scaled, transform = scale([0.0, 5.0, 10.0], CodecSpec(scaling="minmax"))
    assert np.allclose(scaled, [0.0, 0.5, 1.0])
    assert transform.offset == 0.0 and transform.scale == 10.0


def test_llmtime_hand_example():
    # alpha=0.5, beta=0 on [1,2,3]: m=1, q=1, output [0,1,2]
    spec = CodecSpec(scaling="llmtime", alpha=0.5, beta=0.0)
    scaled, transform = scale([1.0, 2.0, 3.0], spec)
    assert np.allclose(scaled, [0.0, 1.0, 2.0])
    assert transform.offset == 1.0 and transform.scale == 1.0


def test_scaling_none_is_identity():
    values = [3.0, -1.0, 2.5]
    scaled, transform = scale(values, CodecSpec(scaling="none"))
    assert np.array_equal(scaled, values)
    assert transform.kind == "none"


def test_minmax_constant_degenerate():
    with pytest.raises(DegenerateInputError):
        scale([2.0, 2.0, 2.0], CodecSpec(scaling="minmax"))


def test_non_finite_rejected():
    with pytest.raises(RejectedInputError):
        scale([1.0, float("inf")], CodecSpec(scaling="minmax"))
    with pytest.raises(RejectedInputError):
        scale([], CodecSpec(scaling="minmax"))


@pytest.mark.parametrize("alpha,beta", [(0.5, 0.0), (0.5, 0.15), (0.7, 0.3), (0.9, 0.5), (0.99, 0.0)])
def test_llmtime_matches_bruteforce_oracle(alpha, beta):
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(2, 40))
        values = (rng.normal(size=n) * rng.uniform(0.1, 100)).tolist()
        spec = CodecSpec(scaling="llmtime", alpha=alpha, beta=beta)
        scaled, transform = scale(values, spec)
        expected, m, q = llmtime_oracle(values, alpha, beta)
        assert np.max(np.abs(scaled - np.asarray(expected))) <= 1e-12
        assert abs(transform.offset - m) <= 1e-12
        assert abs(transform.scale - q) <= 1e-12


def test_minmax_matches_bruteforce_oracle():
    rng = np.random.default_rng(1)
    for _ in range(300):
        values = rng.normal(size=int(rng.integers(2, 40))).tolist()
        scaled, _ = scale(values, CodecSpec(scaling="minmax"))
        assert np.max(np.abs(scaled - np.asarray(minmax_oracle(values)))) <= 1e-12


def test_llmtime_transform_invertible():
    spec = CodecSpec(scaling="llmtime", alpha=0.7, beta=0.15)
    rng = np.random.default_rng(2)
    for _ in range(100):
        values = rng.normal(size=25) * 50
        scaled, transform = scale(values, spec)
        assert np.max(np.abs(transform.invert(scaled) - values)) <= 1e-12


# --- formatting -----------------------------------------------------------------


def test_precision2_comma_space_example():
    spec = CodecSpec(precision=2, separator="comma_space")
    assert encode_values([1.0, 2.345], spec) == "1.00, 2.35"


def test_precision4_space_example():
    spec = CodecSpec(precision=4, separator="space")
    assert encode_values([3.14159], spec) == "3.1416"


def test_round_half_even_on_exact_ties():
    assert format_value(0.125, 2) == "0.12"
    assert format_value(0.375, 2) == "0.38"


def test_negative_zero_normalized():
    assert format_value(-0.0001, 2) == "0.00"
    assert format_value(-0.0, 4) == "0.0000"
    assert format_value(-0.004, 2) == "0.00"


def test_invalid_spec_rejected():
    with pytest.raises(RejectedInputError):
        CodecSpec(precision=3)
    with pytest.raises(RejectedInputError):
        CodecSpec(separator="tab")
    with pytest.raises(RejectedInputError):
        CodecSpec(scaling="zscore")
    with pytest.raises(RejectedInputError):
        CodecSpec(scaling="llmtime", alpha=0.0)
    with pytest.raises(RejectedInputError):
        CodecSpec(scaling="llmtime", beta=1.5)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), min_size=1, max_size=50))
def test_roundtrip_precision16(values):
    spec = CodecSpec(precision=16, separator="space")
    decoded = decode_values(encode_values(values, spec), spec)
    assert len(decoded) == len(values)
    assert np.max(np.abs(decoded - np.asarray(values))) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1, max_size=30))
def test_token_monotonicity(values):
    short = encode_values(values, CodecSpec(precision=2))
    long = encode_values(values, CodecSpec(precision=16))
    assert len(short) <= len(long)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1, max_size=30))
def test_separator_content_equivalence(values):
    spec_space = CodecSpec(precision=4, separator="space")
    spec_comma = CodecSpec(precision=4, separator="comma_space")
    a = decode_values(encode_values(values, spec_space), spec_space)
    b = decode_values(encode_values(values, spec_comma), spec_comma)
    assert np.array_equal(a, b)


# --- encode_series ---------------------------------------------------------------


def test_encode_series_with_x():
    spec = CodecSpec(precision=2, separator="comma_space", include_x=True)
    text = encode_series([1.0, 2.0], [("y", [3.0, 4.0])], spec)
    assert text == "x: 1.00, 2.00\ny: 3.00, 4.00"


def test_encode_series_excludes_x_when_disabled():
    spec = CodecSpec(precision=2, include_x=False)
    text = encode_series([1.0, 2.0], [("y", [3.0, 4.0])], spec)
    assert text == "y: 3.00 4.00"


def test_encode_series_scales_y_only_by_default():
    spec = CodecSpec(precision=2, scaling="minmax", include_x=True)
    text = encode_series([10.0, 20.0], [("y", [0.0, 50.0])], spec)
    assert text == "x: 10.00 20.00\ny: 0.00 1.00"


def test_encode_series_scale_x_opt_in():
    spec = CodecSpec(precision=2, scaling="minmax", include_x=True, scale_x=True)
    text = encode_series([10.0, 20.0], [("y", [0.0, 50.0])], spec)
    assert text == "x: 0.00 1.00\ny: 0.00 1.00"


def test_encode_series_multiple_vectors():
    spec = CodecSpec(precision=2, include_x=False)
    text = encode_series(None, [("y1", [1.0]), ("y2", [2.0])], spec)
    assert text == "y1: 1.00\ny2: 2.00"


def test_encode_series_empty_rejected():
    with pytest.raises(RejectedInputError):
        encode_series([1.0], [("y", [])], CodecSpec())
    with pytest.raises(RejectedInputError):
        encode_series([1.0], [], CodecSpec())


def test_deterministic_output():
    spec = CodecSpec(precision=8, separator="comma_space", scaling="llmtime", alpha=0.9, beta=0.3)
    values = list(np.random.default_rng(3).normal(size=20))
    assert encode_series(None, [("y", values)], spec) == encode_series(None, [("y", values)], spec)
