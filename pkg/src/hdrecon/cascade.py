"""Binary Cascade and its high-dimensional variants.

Symbols are mapped to bits big-endian: bit position ``j * v + b`` holds bit
``b`` (most significant first) of symbol ``j``, so the partner bits of a
position are the other positions of the same length-``v`` run.

Every iteration owns an ordering of the bit positions.  Blocks are always
contiguous ranges of that ordering, which makes the blocks of one iteration
a laminar family (binary-search halves nest inside their parents).  For each
bit and iteration the engine remembers the smallest block whose parity Alice
has disclosed.  Bob's block parities come from a Fenwick tree per iteration so
that a correction costs O(log N) and a parity query O(log N); Alice's parities
come from prefix XORs of her static string.

Two schedules share the same primitives:

* ``serial``: top-level blocks are handled one at a time and every located
  error is cascaded to quiescence before moving on.  Each parity query and
  each partner request is its own message.
* ``parallel``: mismatching blocks are searched as a batch (one message round
  per search level), partner bits are requested in one round, and the
  Cascade step processes the whole list of known errors per pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .channel import ChannelParams, efficiency, make_rng
from .galois import bits_per_symbol
from .transcript import ALICE_TO_BOB, KIND_CODE, FrameOutcome, Transcript

MAX_ITERATIONS = 6
DEFAULT_FRAME_BITS = 1 << 16

_PARITY = KIND_CODE["parity"]
_BATCH = KIND_CODE["parity-batch"]
_PARTNER = KIND_CODE["partner-bits"]


# --------------------------------------------------------------------------
# block-size formulas


def qber_bin(q: int, qber_sym: float) -> float:
    """Expected bit error rate after mapping q-ary symbols to bits."""
    if not 0.0 <= qber_sym < 1.0:
        raise ValueError("QBER must lie in [0, 1)")
    return q / (2.0 * (q - 1)) * qber_sym


def p_odd(t: int, p: float) -> float:
    """Probability that t independent bits with error rate p hold an odd number of errors."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return (1.0 - (1.0 - 2.0 * p) ** t) / 2.0


def p_even(t: int, p: float) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    return (1.0 + (1.0 - 2.0 * p) ** t) / 2.0


def qber_second(t: int, qber: float) -> float:
    """Error rate of a bit whose smallest matching first-iteration block has length t."""
    if t < 1:
        raise ValueError("block length must be at least 1")
    return qber * p_odd(t - 1, qber) / p_even(t, qber)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def block_size(numerator: float, qber: float, cap: int) -> int:
    """``min(2^[log2(numerator / qber)], cap)`` with ``[.]`` rounding half up."""
    cap = max(1, int(cap))
    if qber <= 0.0:
        return cap
    e = _round_half_up(math.log2(numerator / qber))
    if e >= 62:
        return cap
    return max(1, min(1 << max(e, 0), cap))


@dataclass(frozen=True)
class CascadeSchedule:
    k1: int
    k2: int
    later: tuple
    iterations: int = MAX_ITERATIONS


def later_block_sizes(N: int, iterations: int = MAX_ITERATIONS) -> tuple:
    """Top-level sizes of iterations 3 and onwards: N/16 doubling up to N/2."""
    return tuple(max(2, min(N // 16 << i, N // 2)) for i in range(iterations - 2))


def top_block_sizes(qber_bin_value: float, q: int, N: int) -> CascadeSchedule:
    return CascadeSchedule(
        k1=block_size(1.0, qber_bin_value, N // 2),
        k2=block_size(2.0 * q, qber_bin_value, N // 2),
        later=later_block_sizes(N),
    )


def qber_group_printed(qber_bin_value: float, partner_counts, n: int, v: int) -> float:
    """Expected error rate of the next bit-plane group from the partner bits
    requested so far, QBER_BIN - sum(PB_j / v) / (2n)."""
    return qber_bin_value - sum(pb / v for pb in partner_counts) / (2.0 * n)


# --------------------------------------------------------------------------
# compiled primitives


@numba.njit(cache=True)
def _fen_update(fen, it, i):
    n = fen.shape[1] - 1
    i += 1
    while i <= n:
        fen[it, i] ^= 1
        i += i & -i


@numba.njit(cache=True)
def _fen_prefix(fen, it, i):
    r = 0
    while i > 0:
        r ^= fen[it, i]
        i -= i & -i
    return r


@numba.njit(cache=True)
def _fen_build(fen, it, ords, count, bob):
    fen[it, :] = 0
    n = fen.shape[1] - 1
    for k in range(count):
        fen[it, k + 1] = bob[ords[it, k]]
    for i in range(1, n + 1):
        j = i + (i & -i)
        if j <= n:
            fen[it, j] ^= fen[it, i]


@numba.njit(cache=True)
def _bob_par(fen, it, s, L):
    return _fen_prefix(fen, it, s + L) ^ _fen_prefix(fen, it, s)


@numba.njit(cache=True)
def _alice_par(apref, it, s, L):
    return apref[it, s + L] ^ apref[it, s]


@numba.njit(cache=True)
def _flip(p, bob, pos_in, fen, nit):
    bob[p] ^= 1
    for it in range(nit):
        k = pos_in[it, p]
        if k >= 0:
            _fen_update(fen, it, k)


@numba.njit(cache=True)
def _assign(it, s, L, ords, sb_start, sb_len, known):
    for k in range(s, s + L):
        p = ords[it, k]
        cur = sb_len[it, p]
        if cur == 0 or L < cur:
            sb_start[it, p] = s
            sb_len[it, p] = L
    if L == 1:
        known[ords[it, s]] = 1


@numba.njit(cache=True)
def _search(it, s, L, apref, fen, ords, sb_start, sb_len, known):
    """Halve until one bit is left; the disclosed half and its inferred
    sibling both become known blocks.  Returns (position, parities asked)."""
    depth = 0
    while L > 1:
        h = L // 2
        depth += 1
        if _alice_par(apref, it, s, h) != _bob_par(fen, it, s, h):
            _assign(it, s + h, L - h, ords, sb_start, sb_len, known)
            L = h
        else:
            _assign(it, s, h, ords, sb_start, sb_len, known)
            s += h
            L -= h
    _assign(it, s, 1, ords, sb_start, sb_len, known)
    return ords[it, s], depth


@numba.njit(cache=True)
def _push(ev, evn, kind, bits, rnd, units):
    i = evn[0]
    if i >= ev.shape[0]:
        grown = np.empty((2 * ev.shape[0] + 16, 4), np.int64)
        grown[:i] = ev[:i]
        ev = grown
    ev[i, 0] = kind
    ev[i, 1] = bits
    ev[i, 2] = rnd
    ev[i, 3] = units
    evn[0] = i + 1
    return ev


@numba.njit(cache=True)
def _best_block(e, flags_row, nit, sb_len):
    best = -1
    bl = 1 << 40
    for j in range(nit):
        if flags_row[j] == 0:
            L = sb_len[j, e]
            if L > 0 and L < bl:
                best = j
                bl = L
    return best


@numba.njit(cache=True)
def _partners(e, v, alice, bob, known, pos_in, fen, nit, wrong, nwrong):
    """Disclose the unknown partners of ``e``; wrong ones are corrected and
    appended to ``wrong``.  Returns (bits disclosed, new wrong count)."""
    base = (e // v) * v
    req = 0
    for b in range(v):
        p = base + b
        if p == e or known[p]:
            continue
        known[p] = 1
        req += 1
        if bob[p] != alice[p]:
            _flip(p, bob, pos_in, fen, nit)
            wrong[nwrong] = p
            nwrong += 1
    return req, nwrong


@numba.njit(cache=True)
def _serial_drain(stack, sflags, top, v, nit, alice, bob, known, ords, pos_in, fen, apref,
                  sb_start, sb_len, ev, evn, rnd, wrong):
    """Cascade the stacked errors one at a time, newest first."""
    while top > 0:
        i = top - 1
        e = stack[i]
        j = _best_block(e, sflags[i], nit, sb_len)
        if j < 0:
            top -= 1
            continue
        sflags[i, j] = 1
        s = sb_start[j, e]
        L = sb_len[j, e]
        if _alice_par(apref, j, s, L) == _bob_par(fen, j, s, L):
            continue
        p, d = _search(j, s, L, apref, fen, ords, sb_start, sb_len, known)
        for _ in range(d):
            rnd[0] += 1
            ev = _push(ev, evn, _PARITY, 1, rnd[0], 1)
        _flip(p, bob, pos_in, fen, nit)
        known[p] = 1
        stack[top] = p
        sflags[top, :] = 0
        sflags[top, j] = 1
        top += 1
        if v > 1:
            req, nw = _partners(p, v, alice, bob, known, pos_in, fen, nit, wrong, 0)
            if req > 0:
                rnd[0] += 1
                ev = _push(ev, evn, _PARTNER, req, rnd[0], 1)
            for w in range(nw):
                stack[top] = wrong[w]
                sflags[top, :] = 0
                top += 1
    return ev


@numba.njit(cache=True)
def _serial_iteration(it, tl_s, tl_l, v, nit, alice, bob, known, ords, pos_in, fen, apref,
                      sb_start, sb_len, ev, evn, rnd, stack, sflags, wrong):
    for b in range(tl_s.size):
        s = tl_s[b]
        L = tl_l[b]
        if _alice_par(apref, it, s, L) == _bob_par(fen, it, s, L):
            continue
        p, d = _search(it, s, L, apref, fen, ords, sb_start, sb_len, known)
        for _ in range(d):
            rnd[0] += 1
            ev = _push(ev, evn, _PARITY, 1, rnd[0], 1)
        _flip(p, bob, pos_in, fen, nit)
        known[p] = 1
        stack[0] = p
        sflags[0, :] = 0
        sflags[0, it] = 1
        top = 1
        if v > 1:
            req, nw = _partners(p, v, alice, bob, known, pos_in, fen, nit, wrong, 0)
            if req > 0:
                rnd[0] += 1
                ev = _push(ev, evn, _PARTNER, req, rnd[0], 1)
            for w in range(nw):
                stack[top] = wrong[w]
                sflags[top, :] = 0
                top += 1
        ev = _serial_drain(stack, sflags, top, v, nit, alice, bob, known, ords, pos_in, fen,
                           apref, sb_start, sb_len, ev, evn, rnd, wrong)
    return ev


@numba.njit(cache=True)
def _batch_search(its, starts, lens, apref, fen, ords, sb_start, sb_len, known, ev, evn, rnd):
    """Search every mismatching block against the same snapshot of Bob's
    string.  Emits one parity batch per search level."""
    nb = its.size
    found = np.empty(nb, np.int64)
    fit = np.empty(nb, np.int64)
    depth = np.empty(nb, np.int64)
    cnt = 0
    for b in range(nb):
        it = its[b]
        s = starts[b]
        L = lens[b]
        if _alice_par(apref, it, s, L) != _bob_par(fen, it, s, L):
            p, d = _search(it, s, L, apref, fen, ords, sb_start, sb_len, known)
            found[cnt] = p
            fit[cnt] = it
            depth[cnt] = d
            cnt += 1
    maxd = 0
    for i in range(cnt):
        if depth[i] > maxd:
            maxd = depth[i]
    for level in range(1, maxd + 1):
        k = 0
        for i in range(cnt):
            if depth[i] >= level:
                k += 1
        rnd[0] += 1
        ev = _push(ev, evn, _BATCH, k, rnd[0], k)
    return found[:cnt], fit[:cnt], ev


@numba.njit(cache=True)
def _apply_found(found, fit, bob, alice, known, pos_in, fen, nit):
    """Correct each distinct located error once.  Returns the distinct
    positions and, per position, a bitmask of the iterations that found it."""
    order = np.argsort(found, kind="mergesort")
    pos = np.empty(found.size, np.int64)
    mask = np.zeros(found.size, np.int64)
    n = 0
    for idx in order:
        p = found[idx]
        if n == 0 or pos[n - 1] != p:
            pos[n] = p
            n += 1
            _flip(p, bob, pos_in, fen, nit)
            known[p] = 1
        mask[n - 1] |= 1 << fit[idx]
    return pos[:n], mask[:n]


@numba.njit(cache=True)
def _batch_partners(errs, v, alice, bob, known, pos_in, fen, nit, wrong, ev, evn, rnd):
    nw = 0
    bits = 0
    requests = 0
    for e in errs:
        req, nw = _partners(e, v, alice, bob, known, pos_in, fen, nit, wrong, nw)
        bits += req
        if req > 0:
            requests += 1
    if bits > 0:
        rnd[0] += 1
        ev = _push(ev, evn, _PARTNER, bits, rnd[0], requests)
    return wrong[:nw].copy(), bits, ev


@numba.njit(cache=True)
def _cascade_parallel(errs, eflags, budget, v, nit, alice, bob, known, ords, pos_in, fen,
                      apref, sb_start, sb_len, ev, evn, rnd, wrong):
    """Batched Cascade step.  ``eflags`` holds one bitmask of already
    processed iterations per input error.  ``budget < 0`` means unlimited
    passes.  Returns (event buffer, passes run, errors left unprocessed)."""
    cap = bob.size + errs.size + 1
    pos = np.empty(cap, np.int64)
    flg = np.zeros((cap, nit), np.uint8)
    n = errs.size
    for i in range(n):
        pos[i] = errs[i]
        for j in range(nit):
            if eflags[i] >> j & 1:
                flg[i, j] = 1
    passes = 0
    sel_it = np.empty(cap, np.int64)
    sel_s = np.empty(cap, np.int64)
    sel_l = np.empty(cap, np.int64)
    while n > 0:
        if budget >= 0 and passes >= budget:
            break
        passes += 1
        # step 1: smallest unprocessed block per error; drop exhausted errors
        m = 0
        keep = 0
        for i in range(n):
            e = pos[i]
            j = _best_block(e, flg[i], nit, sb_len)
            if j < 0:
                continue
            flg[i, j] = 1
            sel_it[m] = j
            sel_s[m] = sb_start[j, e]
            sel_l[m] = sb_len[j, e]
            m += 1
            pos[keep] = e
            flg[keep] = flg[i]
            keep += 1
        n = keep
        if m == 0:
            break
        # identical blocks selected by several errors are checked once
        keys = (sel_it[:m] * (bob.size + 1) + sel_s[:m]) * (bob.size + 1) + sel_l[:m]
        srt = np.argsort(keys, kind="mergesort")
        mark = np.zeros(m, np.bool_)
        for r in range(m):
            if r == 0 or keys[srt[r]] != keys[srt[r - 1]]:
                mark[srt[r]] = True
        first = np.flatnonzero(mark)
        found, fit, ev = _batch_search(sel_it[first], sel_s[first], sel_l[first], apref, fen,
                                       ords, sb_start, sb_len, known, ev, evn, rnd)
        if found.size == 0:
            continue
        newp, mask = _apply_found(found, fit, bob, alice, known, pos_in, fen, nit)
        for i in range(newp.size):
            pos[n] = newp[i]
            for j in range(nit):
                flg[n, j] = 1 if mask[i] >> j & 1 else 0
            n += 1
        if v > 1:
            wr, _, ev = _batch_partners(newp, v, alice, bob, known, pos_in, fen, nit, wrong,
                                        ev, evn, rnd)
            for w in wr:
                pos[n] = w
                flg[n, :] = 0
                n += 1
    return ev, passes, n


# --------------------------------------------------------------------------
# engine


def symbols_to_bits(x, v: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    shifts = np.arange(v - 1, -1, -1)
    return ((x[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def bits_to_symbols(bits, v: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int64).reshape(-1, v)
    return (b << np.arange(v - 1, -1, -1)).sum(axis=1)


class CascadeState:
    """Both parties' working strings plus everything Bob has learned.

    Alice's string is only ever read through parities and partner-bit
    disclosures, each of which is recorded in the event buffer."""

    def __init__(self, alice_bits, bob_bits, v: int, iterations: int = MAX_ITERATIONS):
        alice = np.ascontiguousarray(alice_bits, dtype=np.uint8)
        bob = np.array(bob_bits, dtype=np.uint8, copy=True)
        if alice.shape != bob.shape or alice.ndim != 1:
            raise ValueError("Alice and Bob need equally long bit strings")
        if alice.size % v:
            raise ValueError("bit string length must be a multiple of v")
        N = alice.size
        self.v = v
        self.N = N
        self.alice = alice
        self.bob = bob
        self.known = np.zeros(N, np.uint8)
        self.ords = np.full((iterations, N), -1, np.int64)
        self.pos_in = np.full((iterations, N), -1, np.int64)
        self.counts = np.zeros(iterations, np.int64)
        self.fen = np.zeros((iterations, N + 1), np.uint8)
        self.apref = np.zeros((iterations, N + 1), np.uint8)
        self.sb_start = np.zeros((iterations, N), np.int64)
        self.sb_len = np.zeros((iterations, N), np.int64)
        self.nit = 0
        self.ev = np.empty((1024, 4), np.int64)
        self.evn = np.zeros(1, np.int64)
        self.rnd = np.full(1, -1, np.int64)
        self.stack = np.empty(N + 1, np.int64)
        self.sflags = np.zeros((N + 1, iterations), np.uint8)
        self.wrong = np.empty(N + 1, np.int64)

    # -- bookkeeping -------------------------------------------------------

    def emit(self, kind: str, bits: int, units: int):
        self.rnd[0] += 1
        self.ev = _push(self.ev, self.evn, KIND_CODE[kind], bits, self.rnd[0], units)

    def transcript(self) -> Transcript:
        tr = Transcript()
        ev = self.ev[: self.evn[0]]
        tr.extend(ALICE_TO_BOB, ev[:, 0], ev[:, 1], ev[:, 1], ev[:, 2], ev[:, 3])
        return tr

    @property
    def bit_errors(self) -> int:
        return int(np.count_nonzero(self.alice != self.bob))

    def smallest_block(self, position: int, iteration: int):
        """(start, length) of the smallest disclosed block holding
        ``position`` in ``iteration``, or None."""
        L = int(self.sb_len[iteration, position])
        return None if L == 0 else (int(self.sb_start[iteration, position]), L)

    def block_positions(self, iteration: int, start: int, length: int) -> np.ndarray:
        return self.ords[iteration, start:start + length].copy()

    # -- iterations ------------------------------------------------------

    def add_iteration(self, order, starts, lengths) -> int:
        """Register a new iteration: ``order`` lists the participating bit
        positions, the top-level blocks are ``order[starts[i]:starts[i]+lengths[i]]``.
        Alice's top-level parities are disclosed as one batch."""
        it = self.nit
        if it >= self.ords.shape[0]:
            raise ValueError("no iteration slots left")
        order = np.asarray(order, dtype=np.int64)
        starts = np.asarray(starts, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        c = order.size
        self.ords[it, :c] = order
        self.pos_in[it, order] = np.arange(c)
        self.counts[it] = c
        _fen_build(self.fen, it, self.ords, c, self.bob)
        np.bitwise_xor.accumulate(self.alice[order], out=self.apref[it, 1:c + 1])
        self.apref[it, c + 1:] = self.apref[it, c]
        self.nit = it + 1
        self.set_top_level(it, starts, lengths)
        return it

    def set_top_level(self, it, starts, lengths) -> None:
        """Record top-level blocks as the current smallest blocks of their bits."""
        starts = np.asarray(starts, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        if starts.size == 0:
            return
        order = self.ords[it]
        idx = np.concatenate([np.arange(s, s + L) for s, L in zip(starts, lengths)])
        self.sb_start[it, order[idx]] = np.repeat(starts, lengths)
        self.sb_len[it, order[idx]] = np.repeat(lengths, lengths)
        self.known[order[starts[lengths == 1]]] = 1

    def disclose_top_level(self, starts) -> None:
        if len(starts):
            self.emit("parity-batch", len(starts), len(starts))

    # -- protocol steps ------------------------------------------------------

    def block_mismatch(self, it, start, length) -> bool:
        return bool(_alice_par(self.apref, it, start, length) != _bob_par(self.fen, it, start, length))

    def binary_search(self, it: int, start: int, length: int) -> int:
        """Locate and correct one error in a mismatching block (serial
        messages, one disclosed parity per halving).  Partners are not
        requested here."""
        if not self.block_mismatch(it, start, length):
            raise ValueError("binary search needs a block with mismatching parity")
        p, d = _search(it, start, length, self.apref, self.fen, self.ords, self.sb_start,
                       self.sb_len, self.known)
        for _ in range(d):
            self.emit("parity", 1, 1)
        _flip(p, self.bob, self.pos_in, self.fen, self.nit)
        self.known[p] = 1
        return int(p)

    def search_batch(self, it, starts, lengths):
        """Search all mismatching blocks of one iteration in parallel and
        correct the located errors.  Returns (positions, iteration masks)."""
        starts = np.asarray(starts, dtype=np.int64)
        its = np.full(starts.size, it, np.int64)
        found, fit, self.ev = _batch_search(its, starts, np.asarray(lengths, dtype=np.int64),
                                            self.apref, self.fen, self.ords, self.sb_start,
                                            self.sb_len, self.known, self.ev, self.evn, self.rnd)
        return _apply_found(found, fit, self.bob, self.alice, self.known, self.pos_in, self.fen,
                            self.nit)

    def request_partners(self, errors) -> tuple:
        """One round of partner-bit disclosures for ``errors``; returns
        (wrong partners, now corrected; number of bits disclosed)."""
        errors = np.asarray(errors, dtype=np.int64)
        if self.v == 1 or errors.size == 0:
            return np.empty(0, np.int64), 0
        wr, bits, self.ev = _batch_partners(errors, self.v, self.alice, self.bob, self.known,
                                            self.pos_in, self.fen, self.nit, self.wrong, self.ev,
                                            self.evn, self.rnd)
        return wr, int(bits)

    def serial_iteration(self, it, starts, lengths) -> None:
        self.ev = _serial_iteration(it, np.asarray(starts, np.int64), np.asarray(lengths, np.int64),
                                    self.v, self.nit, self.alice, self.bob, self.known, self.ords,
                                    self.pos_in, self.fen, self.apref, self.sb_start, self.sb_len,
                                    self.ev, self.evn, self.rnd, self.stack, self.sflags, self.wrong)

    def cascade_step(self, errors, flags=None, budget: int | None = None) -> int:
        """Batched Cascade step over already-corrected ``errors``.  ``flags``
        is an optional per-error bitmask of iterations already processed.
        Returns the number of errors still listed when the pass budget ran
        out (0 when the step completed)."""
        errors = np.asarray(errors, dtype=np.int64)
        if errors.size == 0:
            return 0
        flags = np.zeros(errors.size, np.int64) if flags is None else np.asarray(flags, np.int64)
        self.ev, _, left = _cascade_parallel(errors, flags, -1 if budget is None else budget,
                                             self.v, self.nit, self.alice, self.bob, self.known,
                                             self.ords, self.pos_in, self.fen, self.apref,
                                             self.sb_start, self.sb_len, self.ev, self.evn,
                                             self.rnd, self.wrong)
        return int(left)


# --------------------------------------------------------------------------
# top-level partitions


def _blocks(offset: int, count: int, k: int):
    k = max(1, int(k))
    starts = np.arange(offset, offset + count, k, dtype=np.int64)
    lengths = np.minimum(k, offset + count - starts)
    return starts, lengths


def _second_groups(t_values, qber, q):
    """Group bits by the length t of their smallest first-iteration block,
    largest t first, merging groups too small for four blocks."""
    ts, counts = np.unique(t_values, return_counts=True)
    ts, counts = ts[::-1], counts[::-1]
    groups = []
    acc_t, acc_n, acc_w = [], 0, 0.0

    def k_for(n, w):
        return block_size(2.0 * q, w / n, n // 2)

    for t, c in zip(ts, counts):
        acc_t.append(int(t))
        acc_n += int(c)
        acc_w += int(c) * qber_second(int(t), qber)
        if acc_n >= 4 * k_for(acc_n, acc_w):
            groups.append((acc_t, acc_n, acc_w))
            acc_t, acc_n, acc_w = [], 0, 0.0
    if acc_n:
        if groups:
            gt, gn, gw = groups.pop()
            groups.append((gt + acc_t, gn + acc_n, gw + acc_w))
        else:
            groups.append((acc_t, acc_n, acc_w))
    return [(tuple(gt), k_for(gn, gw)) for gt, gn, gw in groups]


@dataclass
class _Plan:
    q: int
    v: int
    qber: float
    partners: bool
    schedule: str
    budget: int | None
    qber_policy: Callable
    iterations: int = MAX_ITERATIONS


def _run(x, y, plan: _Plan, seed) -> tuple:
    v = plan.v
    alice = symbols_to_bits(x, v)
    bob = symbols_to_bits(y, v)
    st = CascadeState(alice, bob, v if plan.partners else 1, plan.iterations)
    N = alice.size
    n = N // v
    rng = make_rng(seed)
    perms = [rng.permutation(N) for _ in range(plan.iterations)]
    serial = plan.schedule == "serial"

    # iteration 1
    if serial:
        order = perms[0]
        starts, lengths = _blocks(0, N, block_size(1.0, plan.qber, N // 2))
        it = st.add_iteration(order, starts, lengths)
        st.disclose_top_level(starts)
        st.serial_iteration(it, starts, lengths)
    else:
        vg = st.v
        ng = N // vg
        # stable sort keeps the permutation's relative order inside each bit plane
        order = perms[0][np.argsort(perms[0] % vg, kind="stable")]
        it = st.add_iteration(order, [], [])
        pending = []
        pb = []
        for g in range(vg):
            qg = plan.qber_policy(plan.qber, pb, ng, vg) if g else plan.qber
            starts, lengths = _blocks(g * ng, ng, block_size(1.0, max(qg, 0.0), ng // 2))
            st.set_top_level(it, starts, lengths)
            st.disclose_top_level(starts)
            found, _ = st.search_batch(it, starts, lengths)
            wrong, bits = st.request_partners(found)
            pb.append(bits)
            # partners in planes already processed now break matched parities
            pending.extend(int(p) for p in wrong if p % vg < g)
        st.cascade_step(pending, budget=plan.budget)

    # iteration 2: confidence groups
    if plan.iterations >= 2:
        t = st.sb_len[0].copy()
        eligible = (st.known == 0) & (t > 1)
        order_parts, starts_all, lengths_all = [], [], []
        offset = 0
        if eligible.any():
            ranked = perms[1][eligible[perms[1]]]
            tv = t[ranked]
            for ts, k in _second_groups(tv, plan.qber, plan.q if plan.partners else 2):
                members = ranked[np.isin(tv, ts)]
                s, L = _blocks(offset, members.size, k)
                order_parts.append(members)
                starts_all.append(s)
                lengths_all.append(L)
                offset += members.size
        order = np.concatenate(order_parts) if order_parts else np.empty(0, np.int64)
        starts = np.concatenate(starts_all) if starts_all else np.empty(0, np.int64)
        lengths = np.concatenate(lengths_all) if lengths_all else np.empty(0, np.int64)
        _later_iteration(st, order, starts, lengths, serial, plan.budget)

    for i, k in enumerate(later_block_sizes(N, plan.iterations)):
        starts, lengths = _blocks(0, N, k)
        _later_iteration(st, perms[i + 2], starts, lengths, serial, plan.budget)
    return st, alice


def _later_iteration(st: CascadeState, order, starts, lengths, serial, budget):
    it = st.add_iteration(order, starts, lengths)
    st.disclose_top_level(starts)
    if serial:
        st.serial_iteration(it, starts, lengths)
        return
    found, mask = st.search_batch(it, starts, lengths)
    wrong, _ = st.request_partners(found)
    errors = np.concatenate([found, wrong])
    flags = np.concatenate([mask, np.zeros(wrong.size, np.int64)])
    st.cascade_step(errors, flags, budget)


def _outcome(st: CascadeState, q: int, qber_true: float | None, n_symbols: int) -> FrameOutcome:
    tr = st.transcript()
    v = bits_per_symbol(q)
    bob_key = bits_to_symbols(st.bob, v)
    residual = int(np.count_nonzero(bits_to_symbols(st.alice, v) != bob_key))
    leak = tr.leak_bits
    f = efficiency(leak, n_symbols, ChannelParams(qber_true, q)) if qber_true is not None else math.nan
    return FrameOutcome(
        success=residual == 0,
        residual_errors=residual,
        leak_bits=leak,
        key_symbols=n_symbols,
        efficiency=f,
        message_rounds=tr.message_rounds,
        serial_messages=tr.serial_message_count,
        tries=1,
        transcript=tr,
        status="succeeded" if residual == 0 else "residual-errors",
        bob_key=bob_key,
    )


def _check_inputs(x, y, q):
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 1:
        raise ValueError("x and y must be equally long symbol strings")
    if x.min() < 0 or x.max() >= q or y.min() < 0 or y.max() >= q:
        raise ValueError("symbols out of range")
    return x, y


def run_binary_cascade(x, y, q: int, qber_estimate: float, seed=None, *, schedule: str = "serial",
                       budget: int | None = None, qber_true: float | None = None) -> FrameOutcome:
    """Plain binary Cascade on the bit mapping of two q-ary strings.

    Block sizes use the mapped bit error rate and no partner bits are ever
    requested; the efficiency is still measured against the q-ary channel.
    ``schedule`` selects serial or batched message exchange."""
    if schedule not in ("serial", "parallel"):
        raise ValueError("schedule must be 'serial' or 'parallel'")
    x, y = _check_inputs(x, y, q)
    v = bits_per_symbol(q)
    plan = _Plan(q, v, qber_bin(q, qber_estimate), False, schedule, budget, qber_group_printed)
    st, _ = _run(x, y, plan, seed)
    return _outcome(st, q, qber_estimate if qber_true is None else qber_true, x.size)


def run_hd_cascade_serial(x, y, q: int, qber_estimate: float, seed=None, *,
                          qber_true: float | None = None) -> FrameOutcome:
    """HD-Cascade with partner-bit requests and immediate cascading."""
    if q == 2:
        return run_binary_cascade(x, y, 2, qber_estimate, seed, schedule="serial", qber_true=qber_true)
    x, y = _check_inputs(x, y, q)
    plan = _Plan(q, bits_per_symbol(q), qber_bin(q, qber_estimate), True, "serial", None,
                 qber_group_printed)
    st, _ = _run(x, y, plan, seed)
    return _outcome(st, q, qber_estimate if qber_true is None else qber_true, x.size)


def run_hd_cascade_parallel(x, y, q: int, qber_estimate: float, seed=None, *,
                            budget: int | None = None, qber_true: float | None = None,
                            qber_policy: Callable = qber_group_printed) -> FrameOutcome:
    """Batched HD-Cascade: bit-plane groups in the first iteration and a
    list-based Cascade step after every iteration.  ``budget`` caps the
    number of passes of each Cascade step."""
    if q == 2:
        return run_binary_cascade(x, y, 2, qber_estimate, seed, schedule="parallel", budget=budget,
                                  qber_true=qber_true)
    x, y = _check_inputs(x, y, q)
    plan = _Plan(q, bits_per_symbol(q), qber_bin(q, qber_estimate), True, "parallel", budget,
                 qber_policy)
    st, _ = _run(x, y, plan, seed)
    return _outcome(st, q, qber_estimate if qber_true is None else qber_true, x.size)


def frame_symbols(q: int, N: int = DEFAULT_FRAME_BITS) -> int:
    """Symbols per frame when the binary frame holds (at most) N bits."""
    return N // bits_per_symbol(q)
