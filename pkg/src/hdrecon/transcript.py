"""Ledger of everything that crosses the public channel during a frame.

Each event carries the number of payload bits, the signed number of bits it
adds to ``leak_IR``, the message round it belongs to and how many messages it
would be worth in a fully serial exchange.  Leakage and message totals are
never stored separately; they are always recomputed from the events.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

KINDS = (
    "syndrome",
    "parity",
    "parity-batch",
    "partner-bits",
    "shortened-values",
    "plain-reveal",
    "padding",
)
KIND_CODE = {k: i for i, k in enumerate(KINDS)}

ALICE_TO_BOB = 0
BOB_TO_ALICE = 1
LOCAL = 2
DIRECTIONS = ("A->B", "B->A", "local")

_COLUMNS = ("direction", "kind", "bits", "leak", "round", "units")


class Transcript:
    """Append-only event table with columnar storage."""

    def __init__(self):
        self._cols = {c: np.zeros(64, dtype=np.int64) for c in _COLUMNS}
        self._len = 0

    def __len__(self):
        return self._len

    def _reserve(self, extra: int):
        need = self._len + extra
        cap = self._cols["bits"].size
        if need <= cap:
            return
        cap = max(need, 2 * cap)
        for c, arr in self._cols.items():
            grown = np.zeros(cap, dtype=np.int64)
            grown[: self._len] = arr[: self._len]
            self._cols[c] = grown

    @property
    def last_round(self) -> int:
        return int(self._cols["round"][self._len - 1]) if self._len else -1

    def append(self, kind: str, bits: int, *, round: int | None = None, leak: int | None = None,
               units: int = 1, direction: int = ALICE_TO_BOB) -> None:
        if round is None:
            round = self.last_round + 1
        if round < self.last_round:
            raise ValueError("round indices must be non-decreasing")
        self._reserve(1)
        i = self._len
        row = (direction, KIND_CODE[kind], bits, bits if leak is None else leak, round, units)
        for c, val in zip(_COLUMNS, row):
            self._cols[c][i] = val
        self._len += 1

    def extend(self, direction, kind, bits, leak, round, units) -> None:
        """Bulk append of equally long integer columns (kind as codes)."""
        kind = np.asarray(kind, dtype=np.int64)
        k = kind.size
        if k == 0:
            return
        rnd = np.asarray(round, dtype=np.int64)
        if np.any(np.diff(rnd) < 0) or rnd[0] < self.last_round:
            raise ValueError("round indices must be non-decreasing")
        self._reserve(k)
        sl = slice(self._len, self._len + k)
        for c, arr in zip(_COLUMNS, (direction, kind, bits, leak, rnd, units)):
            self._cols[c][sl] = np.broadcast_to(np.asarray(arr, dtype=np.int64), (k,))
        self._len += k

    def column(self, name: str) -> np.ndarray:
        return self._cols[name][: self._len]

    @property
    def leak_bits(self) -> int:
        return int(self.column("leak").sum())

    @property
    def disclosed_bits(self) -> int:
        msg = self.column("direction") != LOCAL
        return int(self.column("bits")[msg].sum())

    @property
    def message_rounds(self) -> int:
        a2b = self.column("direction") == ALICE_TO_BOB
        return int(np.unique(self.column("round")[a2b]).size)

    @property
    def serial_message_count(self) -> int:
        a2b = self.column("direction") == ALICE_TO_BOB
        return int(self.column("units")[a2b].sum())

    def bits_by_kind(self) -> dict[str, int]:
        kinds = self.column("kind")
        leak = self.column("leak")
        return {k: int(leak[kinds == i].sum()) for i, k in enumerate(KINDS) if np.any(kinds == i)}

    def events(self):
        cols = [self.column(c) for c in _COLUMNS]
        for d, k, b, lk, r, u in zip(*cols):
            yield {
                "dir": DIRECTIONS[d],
                "kind": KINDS[k],
                "bits": int(b),
                "leak": int(lk),
                "round": int(r),
                "units": int(u),
            }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, separators=(",", ":")) + "\n" for e in self.events())

    def to_bytes(self) -> bytes:
        """Canonical byte image used for determinism and reduction checks."""
        return np.stack([self.column(c) for c in _COLUMNS]).astype("<i8").tobytes()


@dataclass
class FrameOutcome:
    success: bool
    residual_errors: int
    leak_bits: int
    key_symbols: int
    efficiency: float
    message_rounds: int
    serial_messages: int
    tries: int = 0
    iterations: list = field(default_factory=list)
    transcript: Transcript | None = field(default=None, repr=False)
    status: str = ""
    # Bob's key after reconciliation, for end-to-end comparison
    bob_key: np.ndarray | None = field(default=None, repr=False)

    @property
    def failed(self) -> bool:
        return not self.success or self.residual_errors > 0


def finite_mean(values) -> float:
    vals = [v for v in values if math.isfinite(v)]
    return float(np.mean(vals)) if vals else float("nan")
