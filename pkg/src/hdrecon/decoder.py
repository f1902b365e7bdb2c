"""Log-domain FFT sum-product decoding of nonbinary LDPC syndromes.

Messages are LLR vectors ``m[k] = log(P(0) / P(k))`` of length q, kept
normalised to ``m[0] = 0``.  Saturation is applied against the most likely
symbol (no entry may sit more than ``CLAMP`` above the minimum); clamping
against symbol 0 instead would flatten all nonzero symbols to the same value
once a message becomes confident, which makes decoding diverge.  Check nodes work in
the probability domain: each incoming message is re-indexed by its edge
weight, moved to the Walsh-Hadamard domain (GF(2^v) addition is XOR, so the
WHT diagonalises the convolution), multiplied, transformed back, shifted by
the syndrome coset and re-indexed by the outgoing edge weight.

Two code paths exist.  The per-edge functions (``check_to_variable``,
``variable_update_and_decision``) are plain numpy and serve as the readable
reference.  ``decode`` and ``iterate`` run the same update with compiled
kernels over all edges at once (flooding schedule).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .channel import ChannelParams
from .galois import GfContext, gf_new
from .nbldpc import SparseParityMatrix

CLAMP = 30.0
PROB_FLOOR = 1e-30


# --------------------------------------------------------------------------
# LLR vectors


def _saturate(m) -> np.ndarray:
    c = np.minimum(m - m.min(axis=-1, keepdims=True), CLAMP)
    return c - c[..., :1]


def llr_from_probs(p) -> np.ndarray:
    p = np.maximum(np.asarray(p, dtype=np.float64), PROB_FLOOR)
    return _saturate(np.log(p[..., :1]) - np.log(p))


def probs_from_llr(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    e = np.exp(-(m - m.min(axis=-1, keepdims=True)))
    return e / e.sum(axis=-1, keepdims=True)


def normalize_llr(m) -> np.ndarray:
    return _saturate(np.asarray(m, dtype=np.float64))


def llr_from_channel(observed: int, params: ChannelParams) -> np.ndarray:
    """Prior for a symbol Bob received as ``observed``."""
    p = np.full(params.q, params.p / (params.q - 1))
    p[observed] = 1.0 - params.p
    return llr_from_probs(p)


def channel_llrs(y, params: ChannelParams) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    row = np.full(params.q, params.p / (params.q - 1))
    p = np.tile(row, (y.size, 1))
    p[np.arange(y.size), y] = 1.0 - params.p
    return llr_from_probs(p)


def punctured_llr(q: int) -> np.ndarray:
    return np.zeros(q)


def shortened_llr(value: int, q: int) -> np.ndarray:
    p = np.zeros(q)
    p[value] = 1.0
    return llr_from_probs(p)


# --------------------------------------------------------------------------
# field permutations and transforms


def gf_permute(msg, a: int, mode: str, ctx: GfContext) -> np.ndarray:
    """Re-index a message: ``multiply`` gives ``r[k] = msg[k*a]`` and
    ``divide`` gives ``r[k] = msg[k/a]`` (field arithmetic on the index)."""
    if a == 0:
        raise ValueError("cannot permute by the zero element")
    msg = np.asarray(msg)
    if mode == "multiply":
        idx = ctx.mul_table[:, a]
    elif mode == "divide":
        idx = ctx.div_table[:, a]
    else:
        raise ValueError("mode must be 'multiply' or 'divide'")
    return msg[..., idx]


def _check_pow2(n: int):
    if n < 1 or n & (n - 1):
        raise ValueError(f"transform length must be a power of two, got {n}")


def walsh_hadamard(p) -> np.ndarray:
    """Unnormalised fast Walsh-Hadamard transform along the last axis."""
    a = np.array(p, dtype=np.float64, copy=True)
    n = a.shape[-1]
    _check_pow2(n)
    h = 1
    while h < n:
        a = a.reshape(a.shape[:-1] + (n // (2 * h), 2, h))
        x, y = a[..., 0, :].copy(), a[..., 1, :].copy()
        a[..., 0, :] = x + y
        a[..., 1, :] = x - y
        a = a.reshape(a.shape[:-3] + (n,))
        h *= 2
    return a


def inverse_walsh_hadamard(P) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    return walsh_hadamard(P) / P.shape[-1]


# --------------------------------------------------------------------------
# decoder state and per-edge reference updates


@dataclass
class DecoderState:
    H: SparseParityMatrix
    ctx: GfContext
    syndrome: np.ndarray
    prior: np.ndarray
    vc: np.ndarray
    cv: np.ndarray
    aposteriori: np.ndarray
    hard_decision: np.ndarray
    iteration: int = 0
    max_iterations: int = 100
    history: list = field(default_factory=list)

    @classmethod
    def start(cls, H, s, priors, max_iterations=100, ctx=None):
        ctx = ctx or gf_new(H.q)
        priors = normalize_llr(np.asarray(priors, dtype=np.float64))
        if priors.shape != (H.n, H.q):
            raise ValueError(f"priors must have shape {(H.n, H.q)}")
        vc = priors[H.cols].copy()
        cv = np.zeros_like(vc)
        hard = np.argmin(priors, axis=1).astype(np.int64)
        return cls(H, ctx, np.asarray(s, dtype=np.int64), priors, vc, cv, priors.copy(), hard,
                   0, max_iterations)


def check_to_variable(state: DecoderState, row: int, edge: int) -> np.ndarray:
    """Check-to-variable LLR for one edge of ``row`` from the current
    variable-to-check messages of the other edges in that row."""
    H, ctx, q = state.H, state.ctx, state.H.q
    a, b = H.row_ptr[row], H.row_ptr[row + 1]
    if not a <= edge < b:
        raise ValueError("edge does not belong to row")
    acc = np.ones(q)
    for e in range(a, b):
        if e == edge:
            continue
        # distribution of w*x_e: r[k] = p[k / w]
        pz = gf_permute(probs_from_llr(state.vc[e]), int(H.weights[e]), "divide", ctx)
        acc = acc * walsh_hadamard(pz)
    t = np.maximum(inverse_walsh_hadamard(acc), PROB_FLOOR)
    s = int(state.syndrome[row])
    pz_j = t[np.arange(q) ^ s]
    px_j = gf_permute(pz_j, int(H.weights[edge]), "multiply", ctx)
    return llr_from_probs(px_j)


def variable_update_and_decision(state: DecoderState, col: int):
    """(outgoing VC messages for the column's edges, a-posteriori, hard symbol)."""
    col_ptr, col_edges = state.H.column_index()
    edges = col_edges[col_ptr[col]:col_ptr[col + 1]]
    post = state.prior[col] + state.cv[edges].sum(axis=0)
    out = normalize_llr(post[None, :] - state.cv[edges])
    return out, post, int(np.argmin(post))


def reference_iteration(state: DecoderState) -> None:
    """One flooding iteration using the per-edge reference functions."""
    H = state.H
    new_cv = np.empty_like(state.cv)
    for i in range(H.m):
        for e in range(H.row_ptr[i], H.row_ptr[i + 1]):
            new_cv[e] = check_to_variable(state, i, e)
    state.cv = new_cv
    col_ptr, col_edges = H.column_index()
    for j in range(H.n):
        out, post, x = variable_update_and_decision(state, j)
        state.vc[col_edges[col_ptr[j]:col_ptr[j + 1]]] = out
        state.aposteriori[j] = post
        state.hard_decision[j] = x
    state.iteration += 1


# --------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True, inline="always")
def _fwht(a, q):
    h = 1
    while h < q:
        for i in range(0, q, 2 * h):
            for j in range(i, i + h):
                x = a[j]
                y = a[j + h]
                a[j] = x + y
                a[j + h] = x - y
        h *= 2


@numba.njit(cache=True, inline="always")
def _saturate_into(m, lo, out, q):
    c0 = m[0] - lo
    if c0 > CLAMP:
        c0 = CLAMP
    for z in range(q):
        c = m[z] - lo
        if c > CLAMP:
            c = CLAMP
        out[z] = c - c0


@numba.njit(cache=True)
def _check_pass(row_ptr, cols, weights, syn, vc, cv, mul):
    m = row_ptr.size - 1
    q = vc.shape[1]
    dmax = 0
    for i in range(m):
        d = row_ptr[i + 1] - row_ptr[i]
        if d > dmax:
            dmax = d
    F = np.empty((dmax, q))
    pre = np.empty((dmax + 1, q))
    suf = np.empty((dmax + 1, q))
    px = np.empty(q)
    t = np.empty(q)
    for i in range(m):
        a = row_ptr[i]
        d = row_ptr[i + 1] - a
        for k in range(d):
            e = a + k
            w = weights[e]
            tot = 0.0
            for z in range(q):
                px[z] = np.exp(-vc[e, z])
                tot += px[z]
            for z in range(q):
                F[k, mul[w, z]] = px[z] / tot
            _fwht(F[k], q)
        for z in range(q):
            pre[0, z] = 1.0
            suf[d, z] = 1.0
        for k in range(d):
            for z in range(q):
                pre[k + 1, z] = pre[k, z] * F[k, z]
        for k in range(d - 1, -1, -1):
            for z in range(q):
                suf[k, z] = suf[k + 1, z] * F[k, z]
        s = syn[i]
        for k in range(d):
            e = a + k
            w = weights[e]
            for z in range(q):
                t[z] = pre[k, z] * suf[k + 1, z]
            _fwht(t, q)
            # P(x_e = z) = P(rest = w*z ^ s)
            lo = np.inf
            for z in range(q):
                pz = t[mul[w, z] ^ s] / q
                if pz < PROB_FLOOR:
                    pz = PROB_FLOOR
                px[z] = -np.log(pz)
                if px[z] < lo:
                    lo = px[z]
            _saturate_into(px, lo, cv[e], q)


@numba.njit(cache=True)
def _variable_pass(col_ptr, col_edges, prior, cv, vc, post, hard):
    n = col_ptr.size - 1
    q = prior.shape[1]
    buf = np.empty(q)
    for j in range(n):
        for z in range(q):
            post[j, z] = prior[j, z]
        for t in range(col_ptr[j], col_ptr[j + 1]):
            e = col_edges[t]
            for z in range(q):
                post[j, z] += cv[e, z]
        best = 0
        for z in range(1, q):
            if post[j, z] < post[j, best]:
                best = z
        hard[j] = best
        for t in range(col_ptr[j], col_ptr[j + 1]):
            e = col_edges[t]
            lo = np.inf
            for z in range(q):
                buf[z] = post[j, z] - cv[e, z]
                if buf[z] < lo:
                    lo = buf[z]
            _saturate_into(buf, lo, vc[e], q)


@numba.njit(cache=True)
def _syndrome_ok(row_ptr, cols, weights, syn, x, mul):
    for i in range(row_ptr.size - 1):
        acc = 0
        for e in range(row_ptr[i], row_ptr[i + 1]):
            acc ^= mul[weights[e], x[cols[e]]]
        if acc != syn[i]:
            return False
    return True


@numba.njit(cache=True)
def _unsatisfied(row_ptr, cols, weights, syn, x, mul):
    bad = 0
    for i in range(row_ptr.size - 1):
        acc = 0
        for e in range(row_ptr[i], row_ptr[i + 1]):
            acc ^= mul[weights[e], x[cols[e]]]
        if acc != syn[i]:
            bad += 1
    return bad


def _mul_table(ctx):
    return np.ascontiguousarray(ctx.mul_table)


def iterate(state: DecoderState, count: int = 1) -> None:
    """Advance ``count`` flooding iterations with the compiled kernels."""
    H = state.H
    mul = _mul_table(state.ctx)
    col_ptr, col_edges = H.column_index()
    for _ in range(count):
        _check_pass(H.row_ptr, H.cols, H.weights, state.syndrome, state.vc, state.cv, mul)
        _variable_pass(col_ptr, col_edges, state.prior, state.cv, state.vc, state.aposteriori,
                       state.hard_decision)
        state.iteration += 1


def syndrome_matches(state: DecoderState) -> bool:
    H = state.H
    return bool(_syndrome_ok(H.row_ptr, H.cols, H.weights, state.syndrome, state.hard_decision,
                             _mul_table(state.ctx)))


@dataclass
class DecodeResult:
    success: bool
    x: np.ndarray
    iterations: int


def decode(H: SparseParityMatrix, s, priors, max_iterations: int = 100, ctx=None,
           patience: int | None = None) -> DecodeResult:
    """Flooding log-FFT-SPA until the hard decision reproduces ``s`` or the
    iteration budget runs out.  On failure the last hard decision is returned.

    With ``patience`` set, decoding also gives up once the number of
    unsatisfied checks has not reached a new minimum for that many
    iterations."""
    state = DecoderState.start(H, s, priors, max_iterations, ctx)
    mul = _mul_table(state.ctx)
    best = _unsatisfied(H.row_ptr, H.cols, H.weights, state.syndrome, state.hard_decision, mul)
    if best == 0:
        return DecodeResult(True, state.hard_decision.copy(), 0)
    since = 0
    while state.iteration < max_iterations:
        iterate(state, 1)
        bad = _unsatisfied(H.row_ptr, H.cols, H.weights, state.syndrome, state.hard_decision, mul)
        if bad == 0:
            return DecodeResult(True, state.hard_decision.copy(), state.iteration)
        if bad < best:
            best, since = bad, 0
        else:
            since += 1
            if patience is not None and since >= patience:
                break
    return DecodeResult(False, state.hard_decision.copy(), state.iteration)
