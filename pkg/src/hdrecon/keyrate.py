"""Finite-key secret key length for q-dimensional one-decoy QKD.

The bound credits ``log2 q`` bits per vacuum event and ``log2 q - H_HD`` bits
per single-photon event, then subtracts the reconciliation leakage and the
finite-size security terms.  D0 and D1 are taken as given, per
privacy-amplification block; deriving them from decoy statistics is out of
scope here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .channel import ChannelParams, conditional_entropy

EPS_DEFAULT = 1e-12
# returned by relative_improvement when the reference rate is zero
INFINITE_IMPROVEMENT = math.inf


def _xlog2(x: float) -> float:
    return x * math.log2(x) if x > 0 else 0.0


def h_hd(phi_z: float, q: int) -> float:
    """High-dimensional entropy of the phase-error rate."""
    if not 0.0 <= phi_z <= 1.0:
        raise ValueError("phi_z must lie in [0, 1]")
    if q < 2:
        raise ValueError("q must be at least 2")
    # split the log so tiny phi_z cannot underflow to log(0)
    err = 0.0 if phi_z == 0 else phi_z * (math.log2(q - 1) - math.log2(phi_z))
    return err - _xlog2(1.0 - phi_z)


@dataclass(frozen=True)
class KeyRateInputs:
    q: int
    D0: float
    D1: float
    phi_z: float
    leak_ir: float
    eps_sec: float = EPS_DEFAULT
    eps_cor: float = EPS_DEFAULT

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("q must be at least 2")
        if not 0.0 <= self.phi_z <= 1.0:
            raise ValueError("phi_z must lie in [0, 1]")
        if self.D0 < 0 or self.D1 < 0:
            raise ValueError("event counts must be non-negative")
        for eps in (self.eps_sec, self.eps_cor):
            if not 0.0 < eps < 1.0:
                raise ValueError("security parameters must lie in (0, 1)")
        if self.leak_ir < 0:
            raise ValueError("leak_ir must be non-negative")


def finite_size_penalty(eps_sec: float = EPS_DEFAULT, eps_cor: float = EPS_DEFAULT) -> float:
    return 6.0 * math.log2(19.0 / eps_sec) + math.log2(2.0 / eps_cor)


def key_length_bound(inp: KeyRateInputs) -> float:
    """Right-hand side of the bound before clamping; may be negative."""
    lq = math.log2(inp.q)
    return (lq * inp.D0 + inp.D1 * (lq - h_hd(inp.phi_z, inp.q)) - inp.leak_ir
            - finite_size_penalty(inp.eps_sec, inp.eps_cor))


def secret_key_length(inp: KeyRateInputs) -> float:
    """Extractable key bits per block, zero when the bound is not positive."""
    return max(0.0, key_length_bound(inp))


def relative_improvement(skr_a: float, skr_b: float) -> float:
    if skr_b < 0 or skr_a < 0:
        raise ValueError("key rates must be non-negative")
    if skr_b == 0:
        return INFINITE_IMPROVEMENT if skr_a > 0 else 0.0
    return skr_a / skr_b - 1.0


def reconciliation_leak(f: float, n: float, qber: float, q: int) -> float:
    """Leakage of a method running at efficiency ``f`` on ``n`` sifted symbols."""
    return f * n * conditional_entropy(ChannelParams(qber, q))


# --------------------------------------------------------------------------
# scenario fixtures

SCENARIO_FIELDS = ("loss_dB", "D0", "D1", "phi_z", "n")


@dataclass(frozen=True)
class Scenario:
    loss_dB: float
    D0: float
    D1: float
    phi_z: float
    n: float


def parse_scenarios(text: str) -> list[Scenario]:
    """One record per line, ``key=value`` tokens separated by whitespace.

    Blank lines and ``#`` comments are skipped.  Every record needs all of
    loss_dB, D0, D1, phi_z and n (counts are per block)."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        rec = {}
        for tok in line.split():
            key, sep, val = tok.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: expected key=value, got {tok!r}")
            if key not in SCENARIO_FIELDS:
                raise ValueError(f"line {lineno}: unknown field {key!r}")
            try:
                rec[key] = float(val)
            except ValueError:
                raise ValueError(f"line {lineno}: {key} is not a number") from None
        missing = [k for k in SCENARIO_FIELDS if k not in rec]
        if missing:
            raise ValueError(f"line {lineno}: missing {', '.join(missing)}")
        if rec["D0"] < 0 or rec["D1"] < 0 or rec["n"] <= 0 or not 0 <= rec["phi_z"] <= 1:
            raise ValueError(f"line {lineno}: value out of range")
        out.append(Scenario(**rec))
    if not out:
        raise ValueError("no scenarios found")
    return out


def load_scenarios(path) -> list[Scenario]:
    return parse_scenarios(Path(path).read_text())


def key_rate_table(scenarios, leak_rows, eps_sec=EPS_DEFAULT, eps_cor=EPS_DEFAULT):
    """Key length for every (scenario, reconciliation result) pair.

    ``leak_rows`` are mappings with method, q, qber and mean_f, as written by
    the experiment harness.  Rows whose mean_f is not finite are skipped."""
    table = []
    for row in leak_rows:
        f = float(row["mean_f"])
        if not math.isfinite(f):
            continue
        q, qber = int(row["q"]), float(row["qber"])
        for sc in scenarios:
            leak = reconciliation_leak(f, sc.n, qber, q)
            lq = secret_key_length(KeyRateInputs(q, sc.D0, sc.D1, sc.phi_z, leak, eps_sec, eps_cor))
            table.append({"method": row["method"], "q": q, "qber": qber, "mean_f": f,
                          "loss_dB": sc.loss_dB, "leak_bits": leak, "key_bits": lq})
    return table


def read_leak_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    need = {"method", "q", "qber", "mean_f"}
    if not rows or not need <= set(rows[0]):
        raise ValueError(f"{path}: expected columns {sorted(need)}")
    return rows
