"""Monte-Carlo density evolution for nonbinary LDPC ensembles.

A population of variable nodes with degrees drawn from lambda exchanges
messages with a population of check nodes of concentrated degree.  Every
iteration rewires the sockets at random, draws fresh edge weights and fresh
channel observations, so the graph seen by the messages is locally tree-like
in distribution.  The all-zero codeword is sent; decoding is judged to
converge once the mean entropy of the variable-to-check messages drops below
a threshold.  The node updates are the decoder's own compiled kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, add_symmetric_noise, conditional_entropy, make_rng
from .decoder import _check_pass, _variable_pass, channel_llrs, probs_from_llr
from .galois import GfContext, gf_new
from .nbldpc import DegreeDistribution


@dataclass
class EnsembleSim:
    dist: DegreeDistribution
    node_count: int = 10_000
    max_iterations: int = 150
    entropy_threshold: float = 1e-4
    qber_grid: list = field(default_factory=list)

    def __post_init__(self):
        if self.node_count < 1000:
            raise ValueError("node_count must be at least 1000")
        if self.entropy_threshold <= 0:
            raise ValueError("entropy_threshold must be positive")
        if list(self.qber_grid) != sorted(self.qber_grid):
            raise ValueError("qber grid must be ascending")


@dataclass(frozen=True)
class PointResult:
    p: float
    success: bool
    iterations: int
    entropy: float
    trajectory: tuple = field(repr=False, default=())


def check_degrees(dist: DegreeDistribution, edges: int) -> np.ndarray:
    """Check-node degrees realising exactly ``edges`` sockets, spread over the
    two degrees adjacent to the mean of rho."""
    m = max(1, int(round(edges / dist.mean_check_degree)))
    lo = edges // m
    deg = np.full(m, lo, dtype=np.int64)
    deg[: edges - lo * m] += 1
    return deg


def message_entropy(llr) -> np.ndarray:
    """Entropy in bits of each message (rows of LLR vectors)."""
    p = probs_from_llr(llr)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log2(p), 0.0)
    return h.sum(axis=-1)


def evolve(dist: DegreeDistribution, p: float, ctx: GfContext, node_count: int = 10_000,
           max_iterations: int = 150, entropy_threshold: float = 1e-4, seed=None) -> PointResult:
    """Run the population at one channel parameter."""
    q = ctx.q
    rng = make_rng(seed)
    params = ChannelParams(p, q)
    vdeg = dist.variable_degrees(node_count)
    E = int(vdeg.sum())
    cdeg = check_degrees(dist, E)
    col_ptr = np.zeros(node_count + 1, dtype=np.int64)
    np.cumsum(vdeg, out=col_ptr[1:])
    col_edges = np.arange(E, dtype=np.int64)
    row_ptr = np.zeros(cdeg.size + 1, dtype=np.int64)
    np.cumsum(cdeg, out=row_ptr[1:])
    dummy_cols = np.zeros(E, dtype=np.int64)
    syn = np.zeros(cdeg.size, dtype=np.int64)
    mul = np.ascontiguousarray(ctx.mul_table)
    zeros = np.zeros(node_count, dtype=np.int64)

    def fresh_prior():
        y = add_symmetric_noise(zeros, params, rng)
        return np.ascontiguousarray(channel_llrs(y, params))

    prior = fresh_prior()
    vc = np.repeat(prior, vdeg, axis=0)
    cv = np.zeros_like(vc)
    post = np.empty_like(prior)
    hard = np.empty(node_count, dtype=np.int64)
    traj = []
    h = float(message_entropy(vc).mean())
    traj.append(h)
    for it in range(1, max_iterations + 1):
        perm = rng.permutation(E)
        weights = rng.integers(1, q, size=E, dtype=np.int64)
        vc_chk = np.ascontiguousarray(vc[perm])
        cv_chk = np.empty_like(vc_chk)
        _check_pass(row_ptr, dummy_cols, weights, syn, vc_chk, cv_chk, mul)
        cv[perm] = cv_chk
        prior = fresh_prior()
        _variable_pass(col_ptr, col_edges, prior, cv, vc, post, hard)
        h = float(message_entropy(vc).mean())
        traj.append(h)
        if h < entropy_threshold:
            return PointResult(p, True, it, h, tuple(traj))
    return PointResult(p, False, max_iterations, h, tuple(traj))


def mcde_threshold(sim: EnsembleSim, ctx: GfContext | None = None, seed=None):
    """Largest grid value at which the population converges, with the
    per-point records.  Returns ``(None, records)`` when no point converges."""
    ctx = ctx or gf_new(sim.dist.q)
    if ctx.q != sim.dist.q:
        raise ValueError("field order does not match the distribution")
    ss = np.random.SeedSequence(seed)
    records = []
    for p, child in zip(sim.qber_grid, ss.spawn(len(sim.qber_grid))):
        records.append(evolve(sim.dist, float(p), ctx, sim.node_count, sim.max_iterations,
                              sim.entropy_threshold, child))
    ok = [r.p for r in records if r.success]
    return (max(ok) if ok else None), records


def ensemble_efficiency(dist: DegreeDistribution, p_t: float, q: int) -> float:
    """(1 - R) / H_q(X|Y) at the threshold."""
    if not 0.0 < p_t < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return (1.0 - dist.design_rate) / conditional_entropy(ChannelParams(p_t, q), "q")


def parse_grid(text: str) -> list:
    """``a:b:step`` inclusive of both ends (within half a step)."""
    try:
        a, b, step = (float(t) for t in text.split(":"))
    except ValueError as exc:
        raise ValueError(f"grid must look like a:b:step, got {text!r}") from exc
    if step <= 0 or b < a:
        raise ValueError("grid needs a positive step and a <= b")
    count = int(np.floor((b - a) / step + 0.5)) + 1
    return [round(a + i * step, 12) for i in range(count)]
