import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdrecon.channel import (ChannelParams, add_symmetric_noise, conditional_entropy, efficiency,
                             make_rng, sample_frame)


def test_noiseless_channel_is_identity():
    fr = sample_frame(ChannelParams(0.0, 16), 5000, seed=3)
    assert np.array_equal(fr.x, fr.y)
    assert fr.errors == 0


def test_error_statistics_q4():
    fr = sample_frame(ChannelParams(0.15, 4), 10**6, seed=11)
    diff = fr.x ^ fr.y
    assert abs(np.mean(diff != 0) - 0.15) < 0.001
    for offset in (1, 2, 3):
        assert abs(np.mean(diff == offset) - 0.05) < 0.001


def test_seeded_frames_repeat():
    a = sample_frame(ChannelParams(0.1, 8), 1000, seed=[4, 2])
    b = sample_frame(ChannelParams(0.1, 8), 1000, seed=[4, 2])
    c = sample_frame(ChannelParams(0.1, 8), 1000, seed=[4, 3])
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.y, c.y)


def test_make_rng_passes_generators_through():
    g = make_rng(5)
    assert make_rng(g) is g


@pytest.mark.parametrize("p", [-0.1, 1.0])
def test_bad_probability(p):
    with pytest.raises(ValueError):
        ChannelParams(p, 4)


def test_bad_order():
    with pytest.raises(ValueError):
        ChannelParams(0.1, 3)


def test_entropy_values():
    assert conditional_entropy(ChannelParams(0.0, 4)) == 0.0
    assert conditional_entropy(ChannelParams(0.75, 4), "q") == pytest.approx(1.0)
    h = conditional_entropy(ChannelParams(0.18, 4), "q")
    assert h == pytest.approx(0.4827, abs=5e-4)
    # table value is computed from an unrounded threshold
    assert 0.5 / h == pytest.approx(1.037, abs=2e-3)
    # binary channel reduces to the binary entropy function
    p = 0.11
    assert conditional_entropy(ChannelParams(p, 2)) == pytest.approx(
        -p * math.log2(p) - (1 - p) * math.log2(1 - p))


def test_entropy_base_error():
    with pytest.raises(ValueError):
        conditional_entropy(ChannelParams(0.1, 4), 10)


def test_efficiency_examples():
    prm = ChannelParams(0.1, 8)
    h = conditional_entropy(prm)
    assert efficiency(1000 * h, 1000, prm) == pytest.approx(1.0)
    assert efficiency(2000 * h, 1000, prm) == pytest.approx(2.0)
    # rate-0.5 syndrome over GF(8), n = 30000, at the ensemble threshold
    assert efficiency(45000, 30000, ChannelParams(0.239, 8)) == pytest.approx(1.024, abs=1e-3)
    assert math.isinf(efficiency(10, 100, ChannelParams(0.0, 4)))
    with pytest.raises(ValueError):
        efficiency(-1, 10, prm)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([2, 4, 8, 16, 32]), st.floats(0.0, 0.5), st.integers(0, 2**32 - 1))
def test_noise_keeps_alphabet(q, p, seed):
    x = make_rng(seed).integers(0, q, 200)
    y = add_symmetric_noise(x, ChannelParams(p, q), make_rng(seed + 1))
    assert y.min() >= 0 and y.max() < q


@given(st.sampled_from([4, 8, 32]), st.floats(0.001, 0.3))
def test_entropy_between_zero_and_log_q(q, p):
    h = conditional_entropy(ChannelParams(p, q))
    assert 0.0 < h < math.log2(q)
