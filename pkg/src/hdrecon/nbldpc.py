"""Nonbinary LDPC codes: degree distributions, PEG construction, syndromes
and puncture/shorten bookkeeping.

Degree distributions are given in edge view: ``lambda_coeffs`` holds
``(i, lambda_i)`` where ``lambda_i`` is the fraction of edges attached to
variable nodes of degree ``i`` (the coefficient of ``x**(i-1)``).  Check
nodes are concentrated on one or two adjacent degrees fixed by the design
rate.

Text formats
------------
Degree distribution (one key per line, ``#`` starts a comment)::

    q 8
    rate 0.50
    det 0.239          # optional
    eeff 1.024         # optional
    lambda 2 0.215     # repeated: node degree, edge fraction

Parity-check matrix::

    q n m
    col:weight col:weight ...    # one line per row, 0-indexed columns
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numba
import numpy as np

from .galois import GfContext, bits_per_symbol

MAX_VARIABLE_DEGREE = 40


class ConstructionError(ValueError):
    pass


class DistributionFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DegreeDistribution:
    lambda_coeffs: tuple
    rho_coeffs: tuple
    design_rate: float
    q: int
    det: float | None = None
    eeff: float | None = None
    raw_sum: float = 1.0
    name: str = ""

    @classmethod
    def from_lambda(cls, q, rate, lam, det=None, eeff=None, name="", rho=None):
        """Build from (degree, fraction) pairs.  Coefficients are renormalised;
        a warning is emitted when the printed ones miss 1 by more than 0.01."""
        bits_per_symbol(q)
        merged: dict[int, float] = {}
        for deg, frac in lam:
            deg = int(deg)
            if deg < 1 or deg > MAX_VARIABLE_DEGREE:
                raise DistributionFormatError(f"variable degree {deg} outside [1, {MAX_VARIABLE_DEGREE}]")
            if frac < 0:
                raise DistributionFormatError("negative edge fraction")
            merged[deg] = merged.get(deg, 0.0) + float(frac)
        raw = sum(merged.values())
        if raw <= 0:
            raise DistributionFormatError("empty lambda")
        if abs(raw - 1.0) > 0.01:
            warnings.warn(f"lambda coefficients of {name or 'distribution'} sum to {raw:.4f}; renormalised",
                          stacklevel=2)
        lam_n = tuple(sorted((d, f / raw) for d, f in merged.items() if f > 0))
        if rho is None:
            rho_n = concentrated_rho(lam_n, rate)
        else:
            tot = sum(f for _, f in rho)
            rho_n = tuple(sorted((int(d), f / tot) for d, f in rho if f > 0))
        return cls(lam_n, rho_n, float(rate), int(q), det, eeff, raw, name)

    @property
    def d_v_max(self) -> int:
        return max(d for d, _ in self.lambda_coeffs)

    @property
    def d_c_max(self) -> int:
        return max(d for d, _ in self.rho_coeffs)

    @property
    def mean_variable_degree(self) -> float:
        return 1.0 / sum(f / d for d, f in self.lambda_coeffs)

    @property
    def mean_check_degree(self) -> float:
        return 1.0 / sum(f / d for d, f in self.rho_coeffs)

    def node_fractions(self) -> list[tuple[int, float]]:
        w = [(d, f / d) for d, f in self.lambda_coeffs]
        tot = sum(x for _, x in w)
        return [(d, x / tot) for d, x in w]

    def variable_degrees(self, n: int) -> np.ndarray:
        """Per-node degrees for ``n`` variable nodes, ascending, with counts
        rounded by largest remainder."""
        fr = self.node_fractions()
        raw = np.array([f * n for _, f in fr])
        counts = np.floor(raw).astype(np.int64)
        short = n - counts.sum()
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
        return np.repeat([d for d, _ in fr], counts).astype(np.int64)


def concentrated_rho(lam, rate: float) -> tuple:
    """Check degrees on floor/ceil of the mean implied by the design rate."""
    a = (1.0 - rate) * sum(f / d for d, f in lam)
    if a <= 0:
        raise DistributionFormatError("design rate must be below 1")
    dc = 1.0 / a
    lo = int(math.floor(dc))
    if dc - lo < 1e-9:
        return ((lo, 1.0),)
    r_lo = (a - 1.0 / (lo + 1)) * lo * (lo + 1)
    return ((lo, r_lo), (lo + 1, 1.0 - r_lo))


def parse_distribution(text: str, name: str = "") -> DegreeDistribution:
    q = rate = None
    det = eeff = None
    lam = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, *vals = line.split()
        try:
            if key == "q":
                q = int(vals[0])
            elif key == "rate":
                rate = float(vals[0])
            elif key == "det":
                det = float(vals[0])
            elif key == "eeff":
                eeff = float(vals[0])
            elif key == "lambda":
                lam.append((int(vals[0]), float(vals[1])))
            else:
                raise DistributionFormatError(f"line {lineno}: unknown key {key!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, DistributionFormatError):
                raise
            raise DistributionFormatError(f"line {lineno}: malformed {line!r}") from exc
    if q is None or rate is None or not lam:
        raise DistributionFormatError("distribution needs q, rate and at least one lambda line")
    return DegreeDistribution.from_lambda(q, rate, lam, det, eeff, name)


def load_distribution(path) -> DegreeDistribution:
    path = Path(path)
    return parse_distribution(path.read_text(), name=path.stem)


def dump_distribution(dist: DegreeDistribution) -> str:
    out = [f"q {dist.q}", f"rate {dist.design_rate:g}"]
    if dist.det is not None:
        out.append(f"det {dist.det:g}")
    if dist.eeff is not None:
        out.append(f"eeff {dist.eeff:g}")
    out += [f"lambda {d} {f:.12g}" for d, f in dist.lambda_coeffs]
    return "\n".join(out) + "\n"


def table_distributions(q: int) -> list[DegreeDistribution]:
    """The nine published ensembles for GF(4) or GF(8), highest rate first."""
    files = sorted(
        (p for p in resources.files("hdrecon").joinpath("data").iterdir()
         if p.name.startswith(f"q{q}_r") and p.name.endswith(".txt")),
        key=lambda p: p.name,
        reverse=True,
    )
    if not files:
        raise FileNotFoundError(f"no bundled distributions for q={q}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return [parse_distribution(p.read_text(), name=p.name[:-4]) for p in files]


# --------------------------------------------------------------------------
# parity-check matrices


@dataclass(frozen=True, eq=False)
class SparseParityMatrix:
    """CSR storage: row ``i`` owns entries ``row_ptr[i]:row_ptr[i+1]``."""

    q: int
    m: int
    n: int
    row_ptr: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.cols.size != self.weights.size or self.row_ptr.size != self.m + 1:
            raise ValueError("inconsistent CSR arrays")
        if np.any(self.weights <= 0) or np.any(self.weights >= self.q):
            raise ValueError("weights must be nonzero field elements")
        for i in range(self.m):
            c = self.cols[self.row_ptr[i]:self.row_ptr[i + 1]]
            if np.unique(c).size != c.size:
                raise ValueError(f"duplicate column in row {i}")
        for a in (self.row_ptr, self.cols, self.weights):
            a.setflags(write=False)

    @classmethod
    def from_rows(cls, q, n, rows):
        row_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        cols, wts = [], []
        for i, r in enumerate(rows):
            r = sorted(r)
            cols += [c for c, _ in r]
            wts += [w for _, w in r]
            row_ptr[i + 1] = row_ptr[i] + len(r)
        return cls(q, len(rows), n, row_ptr, np.array(cols, dtype=np.int64), np.array(wts, dtype=np.int64))

    @classmethod
    def from_dense(cls, q, dense):
        dense = np.asarray(dense)
        rows = [[(int(j), int(dense[i, j])) for j in np.flatnonzero(dense[i])] for i in range(dense.shape[0])]
        return cls.from_rows(q, dense.shape[1], rows)

    @property
    def num_edges(self) -> int:
        return int(self.cols.size)

    @property
    def rows(self):
        return [list(zip(self.cols[a:b].tolist(), self.weights[a:b].tolist()))
                for a, b in zip(self.row_ptr[:-1], self.row_ptr[1:])]

    @property
    def edge_rows(self) -> np.ndarray:
        if "edge_rows" not in self._cache:
            self._cache["edge_rows"] = np.repeat(np.arange(self.m), np.diff(self.row_ptr))
        return self._cache["edge_rows"]

    def column_index(self):
        """(col_ptr, col_edges): edges of column j are col_edges[col_ptr[j]:col_ptr[j+1]]."""
        if "col" not in self._cache:
            order = np.argsort(self.cols, kind="stable")
            col_ptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(np.bincount(self.cols, minlength=self.n), out=col_ptr[1:])
            self._cache["col"] = (col_ptr, order.astype(np.int64))
        return self._cache["col"]

    def column_degrees(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.n)

    def row_degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def to_dense(self) -> np.ndarray:
        d = np.zeros((self.m, self.n), dtype=np.int64)
        d[self.edge_rows, self.cols] = self.weights
        return d

    def tobytes(self) -> bytes:
        return b"".join(a.astype("<i8").tobytes() for a in (self.row_ptr, self.cols, self.weights))


def write_matrix(path, H: SparseParityMatrix) -> None:
    lines = [f"{H.q} {H.n} {H.m}"]
    for a, b in zip(H.row_ptr[:-1], H.row_ptr[1:]):
        lines.append(" ".join(f"{c}:{w}" for c, w in zip(H.cols[a:b], H.weights[a:b])))
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> SparseParityMatrix:
    text = Path(path).read_text().split("\n")
    q, n, m = (int(t) for t in text[0].split())
    rows = []
    for i in range(m):
        line = text[i + 1].strip() if i + 1 < len(text) else ""
        rows.append([tuple(int(t) for t in tok.split(":")) for tok in line.split()])
    return SparseParityMatrix.from_rows(q, n, rows)


def syndrome(H: SparseParityMatrix, x, ctx: GfContext) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if x.size != H.n:
        raise ValueError(f"expected {H.n} symbols, got {x.size}")
    prod = ctx.mul_table[H.weights, x[H.cols]]
    s = np.zeros(H.m, dtype=np.int64)
    nonempty = np.diff(H.row_ptr) > 0
    if prod.size:
        red = np.bitwise_xor.reduceat(prod, H.row_ptr[:-1][nonempty])
        s[nonempty] = red
    return s


def code_rate(n: int, m: int, p: int = 0, s: int = 0) -> Fraction:
    if p < 0 or s < 0 or p + s > n or n - p - s <= 0:
        raise ValueError("need p + s < n")
    return Fraction(n - m - s, n - p - s)


def shorten_step_size(n: int, rate: float) -> int:
    """Number of punctured symbols to convert per failed decoding attempt."""
    if not 0.0 < rate <= 1.0:
        warnings.warn(f"rate {rate} outside (0, 1]; step clamped to 1", stacklevel=2)
    raw = n * (0.028 - 0.02 * float(rate))
    # guard against 360.00000000000006-style float noise before ceil
    return max(1, math.ceil(round(raw, 9)))


# --------------------------------------------------------------------------
# progressive edge growth


@numba.njit(cache=True)
def _peg_edges(var_deg, m, ccap, seed):
    np.random.seed(seed)
    n = var_deg.size
    dmax = 1
    for j in range(n):
        if var_deg[j] > dmax:
            dmax = var_deg[j]
    var_adj = np.empty((n, dmax), np.int64)
    var_cnt = np.zeros(n, np.int64)
    chk_adj = np.empty((m, ccap), np.int64)
    chk_cnt = np.zeros(m, np.int64)
    depth = np.zeros(m, np.int64)
    cstamp = np.zeros(m, np.int64)
    vstamp = np.zeros(n, np.int64)
    frontier = np.empty(m, np.int64)
    nxt = np.empty(m, np.int64)
    E = 0
    for j in range(n):
        E += var_deg[j]
    ev = np.empty(E, np.int64)
    ec = np.empty(E, np.int64)
    ne = 0
    stamp = 0
    for j in range(n):
        for k in range(var_deg[j]):
            stamp += 1
            reached = 0
            nf = 0
            for t in range(var_cnt[j]):
                c = var_adj[j, t]
                cstamp[c] = stamp
                depth[c] = 0
                frontier[nf] = c
                nf += 1
                reached += 1
            vstamp[j] = stamp
            level = 0
            while nf > 0 and reached < m:
                nn = 0
                for a in range(nf):
                    c = frontier[a]
                    for b in range(chk_cnt[c]):
                        u = chk_adj[c, b]
                        if vstamp[u] == stamp:
                            continue
                        vstamp[u] = stamp
                        for t in range(var_cnt[u]):
                            c2 = var_adj[u, t]
                            if cstamp[c2] != stamp:
                                cstamp[c2] = stamp
                                depth[c2] = level + 1
                                nxt[nn] = c2
                                nn += 1
                reached += nn
                for a in range(nn):
                    frontier[a] = nxt[a]
                nf = nn
                level += 1
            # pick the farthest check (unreached counts as infinitely far),
            # lowest current degree among those, uniformly random among ties
            best = -1
            bd = -2
            bdeg = 1 << 40
            cnt = 0
            for c in range(m):
                if cstamp[c] == stamp and depth[c] == 0:
                    continue
                dc = (1 << 30) if cstamp[c] != stamp else depth[c]
                if dc > bd or (dc == bd and chk_cnt[c] < bdeg):
                    bd = dc
                    bdeg = chk_cnt[c]
                    best = c
                    cnt = 1
                elif dc == bd and chk_cnt[c] == bdeg:
                    cnt += 1
                    if np.random.randint(cnt) == 0:
                        best = c
            if best < 0:
                return ev[:0], ec[:0]
            if chk_cnt[best] >= ccap:
                return ev[:0], ec[:0]
            var_adj[j, var_cnt[j]] = best
            var_cnt[j] += 1
            chk_adj[best, chk_cnt[best]] = j
            chk_cnt[best] += 1
            ev[ne] = j
            ec[ne] = best
            ne += 1
    return ev, ec


def _seed_int(seed) -> int:
    if isinstance(seed, (int, np.integer)) and 0 <= seed < 2**31:
        return int(seed)
    return int(np.random.SeedSequence(seed).generate_state(1)[0] & 0x7FFFFFFF)


def peg_construct(dist: DegreeDistribution, n: int, m: int, ctx: GfContext, seed=0) -> SparseParityMatrix:
    """Progressive-edge-growth Tanner graph for ``dist`` with uniformly random
    nonzero edge weights.  Variables are placed in ascending degree order and
    every new edge goes to the farthest reachable check of lowest degree."""
    if ctx.q != dist.q:
        raise ConstructionError("field order does not match the distribution")
    if m < 1 or m >= n:
        raise ConstructionError("need 1 <= m < n")
    var_deg = dist.variable_degrees(n)
    if var_deg.max() > m:
        raise ConstructionError(f"variable degree {var_deg.max()} exceeds the number of checks {m}")
    E = int(var_deg.sum())
    expected = dist.mean_check_degree * m
    if E < m or abs(E - expected) > 0.05 * expected + 2:
        raise ConstructionError(
            f"edge demand mismatch: variables need {E} edges, checks of mean degree "
            f"{dist.mean_check_degree:.3f} supply {expected:.0f}")
    s = _seed_int(seed)
    ev, ec = _peg_edges(var_deg, m, 2 * (-(-E // m)) + 16, s)
    if ev.size != E:
        raise ConstructionError("PEG ran out of admissible checks")
    rng = np.random.Generator(np.random.PCG64(s))
    order = np.lexsort((ev, ec))
    ev, ec = ev[order], ec[order]
    row_ptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(ec, minlength=m), out=row_ptr[1:])
    weights = rng.integers(1, ctx.q, size=E, dtype=np.int64)
    return SparseParityMatrix(ctx.q, m, n, row_ptr, ev.astype(np.int64), weights)


def check_count(n: int, rate: float) -> int:
    return int(round(n * (1.0 - rate)))


# --------------------------------------------------------------------------
# rate adaptation state


@dataclass
class RateAdaptState:
    """Reserved positions of a blind session: which are still punctured and
    which have been shortened (with the value disclosed)."""

    punctured: list
    shortened: dict
    delta_fraction: float

    @classmethod
    def reserve(cls, n: int, delta: float, rng) -> "RateAdaptState":
        d = math.ceil(delta * n)
        if not 0 < d < n:
            raise ValueError("delta must reserve between 1 and n-1 positions")
        # order of this list is the order in which positions get shortened
        return cls(list(rng.permutation(n)[:d].tolist()), {}, float(delta))

    @property
    def reserved(self) -> int:
        return len(self.punctured) + len(self.shortened)

    def shorten(self, count: int, values) -> list:
        take = self.punctured[:count]
        del self.punctured[:count]
        for pos in take:
            self.shortened[pos] = int(values[pos])
        return take
