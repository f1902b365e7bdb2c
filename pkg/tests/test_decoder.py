import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdrecon.channel import ChannelParams, sample_frame
from hdrecon.decoder import (CLAMP, DecoderState, channel_llrs, check_to_variable, decode,
                             gf_permute, inverse_walsh_hadamard, iterate, llr_from_channel,
                             llr_from_probs, normalize_llr, probs_from_llr, punctured_llr,
                             reference_iteration, shortened_llr, variable_update_and_decision,
                             walsh_hadamard)
from hdrecon.galois import gf_new
from hdrecon.nbldpc import SparseParityMatrix, syndrome

from oracles import spa_probability_domain, xor_convolve


def random_code(rng, q, n, m, max_row=5):
    dense = np.zeros((m, n), dtype=np.int64)
    for i in range(m):
        k = int(rng.integers(2, max_row + 1))
        cols = rng.choice(n, size=k, replace=False)
        dense[i, cols] = rng.integers(1, q, size=k)
    return SparseParityMatrix.from_dense(q, dense)


# -- LLR vectors -------------------------------------------------------------

def test_punctured_is_uniform():
    assert not punctured_llr(8).any()


def test_channel_llr_example():
    m = llr_from_channel(2, ChannelParams(0.15, 4))
    assert m[2] == pytest.approx(np.log(0.05 / 0.85))
    assert m[2] == pytest.approx(-2.833, abs=1e-3)
    assert m[[0, 1, 3]] == pytest.approx([0, 0, 0])
    p = probs_from_llr(m)
    assert p == pytest.approx([0.05, 0.05, 0.85, 0.05])
    rows = channel_llrs([2, 0], ChannelParams(0.15, 4))
    assert rows[0] == pytest.approx(m)


def test_shortened_pins_value():
    m = shortened_llr(3, 4)
    assert m[3] == -CLAMP
    assert np.argmin(m) == 3
    assert probs_from_llr(m)[3] > 1 - 1e-12
    assert not shortened_llr(0, 4).any() or np.argmin(shortened_llr(0, 4)) == 0


def test_saturation_is_relative_to_best_symbol():
    # a confident belief in symbol 2 keeps the other symbols distinct
    m = normalize_llr(np.array([0.0, -80.0, -100.0, -90.0]))
    assert np.argmin(m) == 2
    assert m.max() - m.min() <= CLAMP + 1e-12
    assert m[0] == 0.0


@given(st.lists(st.floats(0.01, 1.0), min_size=8, max_size=8))
def test_probability_round_trip(p):
    p = np.array(p) / sum(p)
    assert probs_from_llr(llr_from_probs(p)) == pytest.approx(p, abs=1e-12)


# -- permutations and transforms ---------------------------------------------

def test_permute_examples():
    ctx = gf_new(4)
    m = np.array([0.0, 1.0, 2.0, 3.0])
    assert np.array_equal(gf_permute(m, 1, "multiply", ctx), m)
    r = gf_permute(m, 2, "multiply", ctx)
    assert all(r[k] == m[ctx.mul(k, 2)] for k in range(4))
    with pytest.raises(ValueError):
        gf_permute(m, 0, "multiply", ctx)
    with pytest.raises(ValueError):
        gf_permute(m, 1, "rotate", ctx)


@given(st.sampled_from([4, 8, 16, 64]), st.integers(1, 255), st.integers(0, 2**31))
def test_permute_round_trip(q, a, seed):
    ctx = gf_new(q)
    a = a % (q - 1) + 1
    m = np.random.default_rng(seed).random(q)
    back = gf_permute(gf_permute(m, a, "multiply", ctx), a, "divide", ctx)
    assert np.array_equal(back, m)


def test_wht_of_delta_is_ones():
    d = np.zeros(8)
    d[0] = 1
    assert np.array_equal(walsh_hadamard(d), np.ones(8))


@settings(max_examples=50)
@given(st.sampled_from([2, 4, 8, 16]), st.integers(0, 2**31))
def test_convolution_theorem(q, seed):
    rng = np.random.default_rng(seed)
    p, r = rng.dirichlet(np.ones(q)), rng.dirichlet(np.ones(q))
    lhs = walsh_hadamard(xor_convolve(p, r))
    rhs = walsh_hadamard(p) * walsh_hadamard(r)
    assert np.max(np.abs(lhs - rhs)) < 1e-10
    assert np.max(np.abs(inverse_walsh_hadamard(walsh_hadamard(p)) - p)) < 1e-12


def test_wht_rejects_bad_length():
    with pytest.raises(ValueError):
        walsh_hadamard(np.ones(6))


# -- node updates ------------------------------------------------------------

def _state(rows, q, n, priors_p, s):
    H = SparseParityMatrix.from_rows(q, n, rows)
    return DecoderState.start(H, s, llr_from_probs(priors_p))


def _brute_check(q, w_self, w_other, p_other, syn):
    ctx = gf_new(q)
    out = np.zeros(q)
    for a in range(q):
        for b in range(q):
            if ctx.mul(w_self, a) ^ ctx.mul(w_other, b) == syn:
                out[a] += p_other[b]
    return out / out.sum()


def test_degree_two_pass_through():
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(4), size=2)
    st_ = _state([[(0, 1), (1, 1)]], 4, 2, p, [0])
    out = check_to_variable(st_, 0, 0)
    assert probs_from_llr(out) == pytest.approx(p[1], abs=1e-12)


@pytest.mark.parametrize("syn", [0, 1])
def test_degree_two_weighted_check(syn):
    rng = np.random.default_rng(2)
    p = rng.dirichlet(np.ones(4), size=2)
    st_ = _state([[(0, 2), (1, 3)]], 4, 2, p, [syn])
    got = probs_from_llr(check_to_variable(st_, 0, 0))
    assert got == pytest.approx(_brute_check(4, 2, 3, p[1], syn), abs=1e-12)
    if syn:
        ctx = gf_new(4)
        zero = _brute_check(4, 2, 3, p[1], 0)
        # nonzero syndrome shifts the coset: x -> x + s/w
        shift = ctx.div(syn, 2)
        assert got == pytest.approx(zero[np.arange(4) ^ shift], abs=1e-12)


def test_variable_updates():
    rng = np.random.default_rng(3)
    p = rng.dirichlet(np.ones(4), size=3)
    rows = [[(0, 1), (1, 2), (2, 3)], [(0, 2), (1, 1)], [(0, 3), (2, 1)]]
    st_ = _state(rows, 4, 3, p, [1, 2, 3])
    st_.cv = normalize_llr(rng.normal(size=st_.cv.shape))
    col_ptr, col_edges = st_.H.column_index()
    out, post, x = variable_update_and_decision(st_, 0)
    edges = col_edges[col_ptr[0]:col_ptr[1]]
    for k, e in enumerate(edges):
        # extrinsic identity: aposteriori = vc + cv on every edge
        assert normalize_llr(out[k] + st_.cv[e]) == pytest.approx(normalize_llr(post), abs=1e-12)
    # column 1 has degree 2; a degree-1 column passes its prior through
    H1 = SparseParityMatrix.from_rows(4, 2, [[(0, 1), (1, 1)]])
    s1 = DecoderState.start(H1, [0], llr_from_probs(p[:2]))
    s1.cv = normalize_llr(rng.normal(size=s1.cv.shape))
    out1, _, _ = variable_update_and_decision(s1, 1)
    assert out1[0] == pytest.approx(s1.prior[1])


def test_pinned_prior_wins():
    rng = np.random.default_rng(4)
    q = 4
    H = SparseParityMatrix.from_rows(q, 3, [[(0, 1), (1, 2), (2, 3)]] * 1)
    pri = channel_llrs([0, 1, 2], ChannelParams(0.1, q))
    pri[1] = shortened_llr(3, q)
    st_ = DecoderState.start(H, [0], pri)
    st_.cv = normalize_llr(rng.normal(scale=3.0, size=st_.cv.shape))
    assert variable_update_and_decision(st_, 1)[2] == 3


# -- whole decoder -----------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([2, 4, 8]))
def test_kernels_match_reference(seed, q):
    rng = np.random.default_rng(seed)
    H = random_code(rng, q, 14, 7)
    pri = llr_from_probs(rng.dirichlet(np.ones(q), size=14))
    s = rng.integers(0, q, 7)
    a, b = DecoderState.start(H, s, pri), DecoderState.start(H, s, pri)
    for _ in range(3):
        reference_iteration(a)
        iterate(b)
        assert np.max(np.abs(a.cv - b.cv)) < 1e-9
        assert np.max(np.abs(a.vc - b.vc)) < 1e-9
        assert np.array_equal(a.hard_decision, b.hard_decision)


def oracle_compare(seed, q):
    """Largest per-component gap between the decoder's messages and the
    probability-domain oracle over three iterations."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 13))
    m = int(rng.integers(3, min(6, n - 1) + 1))
    H = random_code(rng, q, n, m, max_row=5)
    pri = rng.dirichlet(np.ones(q), size=n)
    s = rng.integers(0, q, m)
    rows = [list(H.cols[a:b]) for a, b in zip(H.row_ptr[:-1], H.row_ptr[1:])]
    wts = [list(H.weights[a:b]) for a, b in zip(H.row_ptr[:-1], H.row_ptr[1:])]
    ref = spa_probability_domain(rows, wts, s, pri, gf_new(q).mul_table, 3)
    st_ = DecoderState.start(H, s, llr_from_probs(pri))
    edge_row = np.repeat(np.arange(m), np.diff(H.row_ptr))
    gap = 0.0
    for cv, vc, hard in ref:
        iterate(st_)
        for e in range(H.num_edges):
            key = (int(edge_row[e]), int(H.cols[e]))
            gap = max(gap, np.max(np.abs(probs_from_llr(st_.cv[e]) - cv[key])),
                      np.max(np.abs(probs_from_llr(st_.vc[e]) - vc[key])))
    return gap


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("q", [2, 4])
def test_matches_probability_domain_oracle(seed, q):
    assert oracle_compare(seed, q) < 1e-6


def test_consistent_input_succeeds_immediately():
    rng = np.random.default_rng(5)
    H = random_code(rng, 8, 40, 20)
    y = rng.integers(0, 8, 40)
    res = decode(H, syndrome(H, y, gf_new(8)), channel_llrs(y, ChannelParams(0.1, 8)))
    assert res.success and res.iterations == 0
    assert np.array_equal(res.x, y)


def test_decode_reports_failure_and_patience():
    rng = np.random.default_rng(6)
    H = random_code(rng, 4, 60, 50, max_row=4)
    fr = sample_frame(ChannelParams(0.6, 4), 60, seed=1)
    s = syndrome(H, fr.x, gf_new(4))
    full = decode(H, s, channel_llrs(fr.y, ChannelParams(0.6, 4)), max_iterations=30)
    short = decode(H, s, channel_llrs(fr.y, ChannelParams(0.6, 4)), max_iterations=30, patience=3)
    assert not full.success and full.iterations == 30
    assert not short.success and short.iterations < 30
