"""Blind rate adaptation around a fixed nonbinary LDPC code.

A fraction delta of the code positions is reserved before anything is sent.
Alice fills those positions with fresh random symbols (padding), so the key
occupies the other ``n - d`` positions.  She sends the syndrome of the whole
word once.  Bob decodes with uniform beliefs on the reserved positions
(punctured).  After each failure Alice discloses the values of a further
batch of reserved positions (shortening), and once none are left she
discloses key symbols in the clear, until Bob's decoder reproduces the
syndrome or the whole key is public.

Leakage about the key: the syndrome is worth ``m * v`` bits, minus ``v`` bits
for each padding symbol whose value is still undisclosed (random padding
masks that much of the syndrome), plus ``v`` bits per disclosed key symbol.
The transcript records the syndrome at full size, a local credit for the
padding and one event per disclosure, so the total is always recomputed
from the events.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams, efficiency, make_rng
from .decoder import CLAMP, channel_llrs, decode
from .galois import GfContext, gf_new
from .nbldpc import RateAdaptState, SparseParityMatrix, code_rate, shorten_step_size, syndrome
from .transcript import LOCAL, FrameOutcome, Transcript

DEFAULT_DELTA = 0.10
# a try that has not improved its unsatisfied-check count for this many
# iterations is treated as failed
DEFAULT_PATIENCE = 20


@dataclass(frozen=True)
class CodeChoice:
    index: int
    rate: float
    det: float
    supported: bool


def select_code(q: int, qber_estimate: float, catalog, margin: float = 1.0) -> CodeChoice:
    """Highest-rate code whose design threshold covers ``qber_estimate * margin``.

    ``catalog`` is a sequence of ``(rate, det)`` pairs for field order ``q``.
    When no code covers the estimate the lowest-rate one is returned with
    ``supported=False`` and a warning."""
    entries = list(catalog)
    if not entries:
        raise ValueError("empty code catalog")
    need = qber_estimate * margin
    ranked = sorted(range(len(entries)), key=lambda i: -entries[i][0])
    for i in ranked:
        if entries[i][1] >= need:
            return CodeChoice(i, float(entries[i][0]), float(entries[i][1]), True)
    low = ranked[-1]
    warnings.warn(f"no GF({q}) code supports QBER {qber_estimate}; using rate {entries[low][0]}",
                  stacklevel=2)
    return CodeChoice(low, float(entries[low][0]), float(entries[low][1]), False)


def _pinned(values, q):
    """LLR rows that pin each position to the given value."""
    m = np.full((len(values), q), CLAMP)
    m[np.arange(len(values)), values] = 0.0
    return m - m[:, :1]


class BlindSession:
    """State of one blind reconciliation; drive it with :meth:`run`."""

    def __init__(self, H: SparseParityMatrix, params: ChannelParams, delta: float = DEFAULT_DELTA,
                 seed=None, ctx: GfContext | None = None, max_iterations: int = 100,
                 patience: int | None = DEFAULT_PATIENCE):
        if params.q != H.q:
            raise ValueError("channel and code use different field orders")
        self.H = H
        self.params = params
        self.ctx = ctx or gf_new(H.q)
        self.max_iterations = max_iterations
        self.patience = patience
        self.rng = make_rng(seed)
        self.adapt = RateAdaptState.reserve(H.n, delta, self.rng)
        reserved = np.zeros(H.n, dtype=bool)
        reserved[self.adapt.punctured] = True
        self.key_positions = np.flatnonzero(~reserved)
        # disclosure order for key symbols once the reserve is used up
        self.reveal_order = self.rng.permutation(self.key_positions)
        self.revealed = 0
        self.padding = self.rng.integers(0, H.q, size=len(self.adapt.punctured))
        self.tries = 0
        self.iterations = []
        self.transcript = Transcript()
        self.status = "running"

    @property
    def v(self) -> int:
        return self.params.v

    @property
    def key_length(self) -> int:
        return self.key_positions.size

    def current_rate(self) -> float:
        p = len(self.adapt.punctured)
        s = len(self.adapt.shortened)
        return float(code_rate(self.H.n, self.H.m, p, s))

    def alice_word(self, x_key) -> np.ndarray:
        word = np.empty(self.H.n, dtype=np.int64)
        word[self.key_positions] = x_key
        word[self.adapt.punctured] = self.padding
        return word

    def _priors(self, y_key, word):
        q = self.H.q
        pri = np.zeros((self.H.n, q))
        pri[self.key_positions] = channel_llrs(y_key, self.params)
        sh = list(self.adapt.shortened)
        if sh:
            pri[sh] = _pinned([self.adapt.shortened[j] for j in sh], q)
        rv = self.reveal_order[: self.revealed]
        if rv.size:
            pri[rv] = _pinned(word[rv], q)
        return pri

    def run(self, x_key, y_key) -> FrameOutcome:
        x_key = np.asarray(x_key, dtype=np.int64)
        y_key = np.asarray(y_key, dtype=np.int64)
        if x_key.size != self.key_length or y_key.size != self.key_length:
            raise ValueError(f"key strings must hold {self.key_length} symbols")
        word = self.alice_word(x_key)
        v, tr = self.v, self.transcript
        s = syndrome(self.H, word, self.ctx)
        tr.append("syndrome", self.H.m * v, round=0)
        d = len(self.adapt.punctured)
        tr.append("padding", 0, round=0, leak=-d * v, units=0, direction=LOCAL)
        rnd = 0
        x_hat = None
        while True:
            self.tries += 1
            res = decode(self.H, s, self._priors(y_key, word), self.max_iterations, self.ctx,
                         self.patience)
            self.iterations.append(res.iterations)
            if res.success:
                x_hat = res.x
                self.status = "succeeded"
                break
            if self.revealed >= self.key_length:
                self.status = "aborted-full-reveal"
                x_hat = word.copy()
                break
            step = shorten_step_size(self.H.n, self.current_rate())
            rnd += 1
            if self.adapt.punctured:
                k = min(step, len(self.adapt.punctured))
                self.adapt.shorten(k, word)
                tr.append("shortened-values", k * v, round=rnd)
            else:
                k = min(step, self.key_length - self.revealed)
                self.revealed += k
                tr.append("plain-reveal", k * v, round=rnd)
        return self._outcome(x_key, x_hat)

    def _outcome(self, x_key, x_hat) -> FrameOutcome:
        residual = int(np.count_nonzero(x_hat[self.key_positions] != x_key))
        leak = self.transcript.leak_bits
        ok = self.status == "succeeded" and residual == 0
        return FrameOutcome(
            success=ok,
            residual_errors=residual,
            leak_bits=leak,
            key_symbols=self.key_length,
            efficiency=efficiency(leak, self.key_length, self.params),
            message_rounds=self.transcript.message_rounds,
            serial_messages=self.transcript.serial_message_count,
            tries=self.tries,
            iterations=list(self.iterations),
            transcript=self.transcript,
            status=self.status,
            bob_key=x_hat[self.key_positions].copy(),
        )


def key_length(n: int, delta: float = DEFAULT_DELTA) -> int:
    """Key symbols carried by a blind frame on a length-n code."""
    return n - math.ceil(delta * n)


def run_blind(x_key, y_key, H: SparseParityMatrix, params: ChannelParams, *,
              delta: float = DEFAULT_DELTA, seed=None, ctx: GfContext | None = None,
              max_iterations: int = 100, patience: int | None = DEFAULT_PATIENCE) -> FrameOutcome:
    """Reconcile ``n - ceil(delta n)`` key symbols with the blind protocol."""
    return BlindSession(H, params, delta, seed, ctx, max_iterations, patience).run(x_key, y_key)
