"""Experiment orchestration: configuration, sweeps, CSV output.

A configuration is a flat ``key = value`` text file; every key can also be
given on the command line, which wins.  One experiment sweeps one method at
one field order over a QBER grid and writes one CSV row per grid point.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .blind import DEFAULT_DELTA, DEFAULT_PATIENCE, key_length, run_blind, select_code
from .cascade import (DEFAULT_FRAME_BITS, frame_symbols, run_binary_cascade, run_hd_cascade_parallel,
                      run_hd_cascade_serial)
from .channel import ChannelParams, sample_frame
from .galois import InvalidOrderError, gf_new
from .mcde import parse_grid
from .nbldpc import (DegreeDistribution, check_count, dump_distribution, load_distribution,
                     peg_construct, read_matrix, table_distributions, write_matrix)
from .transcript import FrameOutcome, finite_mean

log = logging.getLogger(__name__)

METHODS = ("ldpc-blind", "cascade-binary", "cascade-hd-serial", "cascade-hd-parallel")
CSV_COLUMNS = ("method", "q", "qber", "frames", "mean_f", "fer", "mean_rounds",
               "mean_serial_messages", "mean_tries")
DEFAULT_CODE_MARGIN = 1.15


class ConfigError(ValueError):
    """Raised for any invalid or inconsistent experiment setting."""


@dataclass(frozen=True)
class ExperimentConfig:
    method: str
    q: int
    qber: tuple
    frames: int = 100
    N: int = DEFAULT_FRAME_BITS
    n: int = 10_000
    seed: int = 1
    catalog: str = "builtin"
    out: str | None = None
    budget: int | None = None
    delta: float = DEFAULT_DELTA
    code_margin: float = DEFAULT_CODE_MARGIN
    max_iterations: int = 100
    patience: int | None = DEFAULT_PATIENCE
    cache_dir: str | None = None
    transcripts: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {', '.join(METHODS)}")
        try:
            gf_new(self.q)
        except InvalidOrderError as exc:
            raise ConfigError(str(exc)) from None
        if not self.qber:
            raise ConfigError("qber grid is empty")
        if any(not 0.0 <= p < 1.0 for p in self.qber):
            raise ConfigError("qber values must lie in [0, 1)")
        if self.frames < 1:
            raise ConfigError("frames must be at least 1")
        if self.N < 2 or self.n < 10:
            raise ConfigError("frame length too small")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.code_margin <= 0:
            raise ConfigError("code_margin must be positive")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be positive")


def _optional_int(text):
    return None if text.lower() in ("", "none") else int(text)


def _optional_str(text):
    return None if text.lower() in ("", "none") else text


def parse_qber(text) -> tuple:
    """A single value, a comma list or an ``a:b:step`` range."""
    if isinstance(text, (int, float)):
        return (float(text),)
    text = str(text).strip()
    if ":" in text:
        return tuple(parse_grid(text))
    return tuple(float(t) for t in text.split(",") if t.strip())


_CONVERTERS = {
    "method": str,
    "q": int,
    "qber": parse_qber,
    "frames": int,
    "N": int,
    "n": int,
    "seed": int,
    "catalog": str,
    "out": _optional_str,
    "budget": _optional_int,
    "delta": float,
    "code_margin": float,
    "max_iterations": int,
    "patience": _optional_int,
    "cache_dir": _optional_str,
    "transcripts": _optional_str,
}


def parse_config_text(text: str) -> dict:
    """Raw ``key -> string`` mapping from flat config text."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in _CONVERTERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = val.strip()
    return out


def build_config(raw: dict) -> ExperimentConfig:
    values = {}
    for key, val in raw.items():
        if key not in _CONVERTERS:
            raise ConfigError(f"unknown key {key!r}")
        if val is None:
            continue
        try:
            values[key] = _CONVERTERS[key](val) if isinstance(val, str) else val
        except ValueError:
            raise ConfigError(f"bad value for {key}: {val!r}") from None
    for key in ("method", "q", "qber"):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    if "qber" in values and not isinstance(values["qber"], tuple):
        values["qber"] = parse_qber(values["qber"])
    return ExperimentConfig(**values)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    raw = parse_config_text(Path(path).read_text())
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(raw)


# --------------------------------------------------------------------------
# codes


def load_catalog(cfg: ExperimentConfig) -> list[DegreeDistribution]:
    """Degree distributions for ``cfg.q``: the built-in tables or every
    ``*.txt`` distribution file in a directory."""
    if cfg.catalog == "builtin":
        try:
            dists = table_distributions(cfg.q)
        except FileNotFoundError:
            dists = []
    else:
        root = Path(cfg.catalog)
        if not root.is_dir():
            raise ConfigError(f"code catalog {cfg.catalog} is not a directory")
        dists = [d for d in (load_distribution(p) for p in sorted(root.glob("*.txt"))) if d.q == cfg.q]
    usable = [d for d in dists if d.det is not None]
    if not usable:
        raise ConfigError(f"no GF({cfg.q}) code distributions with a threshold in {cfg.catalog}")
    return usable


def _cache_root(cfg: ExperimentConfig) -> Path:
    if cfg.cache_dir:
        return Path(cfg.cache_dir)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "hdrecon"


def code_for(dist: DegreeDistribution, n: int, seed: int, cache: Path | None = None):
    """PEG code for ``dist`` at length ``n``, reused from ``cache`` when present."""
    ctx = gf_new(dist.q)
    m = check_count(n, dist.design_rate)
    if cache is None:
        return peg_construct(dist, n, m, ctx, seed)
    tag = hashlib.sha256(dump_distribution(dist).encode()).hexdigest()[:12]
    path = cache / f"q{dist.q}_r{dist.design_rate:.2f}_n{n}_s{seed}_{tag}.txt"
    if path.exists():
        H = read_matrix(path)
        if (H.q, H.n, H.m) == (dist.q, n, m):
            return H
        log.warning("ignoring stale cached code %s", path)
    H = peg_construct(dist, n, m, ctx, seed)
    cache.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    write_matrix(tmp, H)
    tmp.replace(path)
    return H


# --------------------------------------------------------------------------
# running


def verify_keys(alice_key, bob_key) -> tuple[bool, int]:
    a = np.asarray(alice_key)
    b = np.asarray(bob_key)
    if a.shape != b.shape:
        raise ValueError(f"key lengths differ: {a.size} vs {b.size}")
    bad = int(np.count_nonzero(a != b))
    return bad == 0, bad


@dataclass
class PointSummary:
    method: str
    q: int
    qber: float
    frames: int
    mean_f: float
    fer: float
    mean_rounds: float
    mean_serial_messages: float
    mean_tries: float
    outcomes: list = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


def summarise(method, q, qber, outcomes: list[FrameOutcome]) -> PointSummary:
    ok = [o for o in outcomes if not o.failed]
    return PointSummary(
        method=method,
        q=q,
        qber=qber,
        frames=len(outcomes),
        mean_f=finite_mean([o.efficiency for o in ok]),
        fer=sum(o.failed for o in outcomes) / len(outcomes),
        mean_rounds=float(np.mean([o.message_rounds for o in outcomes])),
        mean_serial_messages=float(np.mean([o.serial_messages for o in outcomes])),
        mean_tries=float(np.mean([o.tries for o in outcomes])),
        outcomes=outcomes,
    )


class _Runner:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.ctx = gf_new(cfg.q)
        if cfg.method == "ldpc-blind":
            self.catalog = load_catalog(cfg)
            self.cache = _cache_root(cfg)
            self._codes = {}

    def code(self, p: float):
        cfg = self.cfg
        choice = select_code(cfg.q, p, [(d.design_rate, d.det) for d in self.catalog], cfg.code_margin)
        if choice.index not in self._codes:
            self._codes[choice.index] = code_for(self.catalog[choice.index], cfg.n, cfg.seed, self.cache)
        return self._codes[choice.index]

    def frame(self, p: float, point: int, k: int):
        """One frame; returns (outcome, alice key)."""
        cfg = self.cfg
        params = ChannelParams(p, cfg.q)
        chan_seed = [cfg.seed, point, k, 0]
        proto_seed = [cfg.seed, point, k, 1]
        if cfg.method == "ldpc-blind":
            H = self.code(p)
            fr = sample_frame(params, key_length(H.n, cfg.delta), chan_seed)
            out = run_blind(fr.x, fr.y, H, params, delta=cfg.delta, seed=proto_seed, ctx=self.ctx,
                            max_iterations=cfg.max_iterations, patience=cfg.patience)
            return out, fr.x
        fr = sample_frame(params, frame_symbols(cfg.q, cfg.N), chan_seed)
        if cfg.method == "cascade-binary":
            out = run_binary_cascade(fr.x, fr.y, cfg.q, p, proto_seed, schedule="serial")
        elif cfg.method == "cascade-hd-serial":
            out = run_hd_cascade_serial(fr.x, fr.y, cfg.q, p, proto_seed)
        else:
            out = run_hd_cascade_parallel(fr.x, fr.y, cfg.q, p, proto_seed, budget=cfg.budget)
        return out, fr.x


def run_experiment(cfg: ExperimentConfig, progress=None, keep_outcomes: bool = True) -> list[PointSummary]:
    """Run every grid point; write the CSV (and transcripts) if configured.

    Frames whose reconciled key differs from Alice's count as failures even
    if the protocol reported success.  Long sweeps can drop the per-frame
    outcomes with ``keep_outcomes=False``."""
    runner = _Runner(cfg)
    dump = open(cfg.transcripts, "w") if cfg.transcripts else None
    results = []
    try:
        for i, p in enumerate(cfg.qber):
            outcomes = []
            for k in range(cfg.frames):
                out, alice = runner.frame(p, i, k)
                equal, bad = verify_keys(alice, out.bob_key)
                if out.success and not equal:
                    log.error("frame %d at qber %g reported success with %d bad symbols", k, p, bad)
                    out = replace(out, success=False, residual_errors=bad)
                if dump is not None:
                    dump.write(_frame_header(cfg, p, k, out))
                    dump.write(out.transcript.to_jsonl())
                outcomes.append(out)
            summary = summarise(cfg.method, cfg.q, p, outcomes)
            if not keep_outcomes:
                summary.outcomes = []
            results.append(summary)
            if progress:
                progress(summary)
    finally:
        if dump is not None:
            dump.close()
    if cfg.out:
        write_csv(cfg.out, results)
    return results


def _frame_header(cfg, p, k, out) -> str:
    return (f'{{"frame":{k},"method":"{cfg.method}","q":{cfg.q},"qber":{p!r},'
            f'"success":{str(not out.failed).lower()},"leak":{out.leak_bits}}}\n')


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def csv_text(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        row = r.row()
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(path, results) -> None:
    Path(path).write_text(csv_text(results))


def config_keys() -> tuple:
    return tuple(f.name for f in fields(ExperimentConfig))
