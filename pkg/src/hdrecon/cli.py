"""``reconcile`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import math
import sys

from . import harness, keyrate
from .galois import gf_new
from .mcde import EnsembleSim, ensemble_efficiency, mcde_threshold, parse_grid
from .nbldpc import DistributionFormatError, load_distribution

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reconcile", description="Information reconciliation experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="sweep one method over a QBER grid")
    run.add_argument("--config", required=True, help="flat key = value config file")
    run.add_argument("--method", choices=harness.METHODS)
    run.add_argument("--q")
    run.add_argument("--qber", help="value, comma list or a:b:step")
    run.add_argument("--frames")
    run.add_argument("--seed")
    run.add_argument("--out")

    mc = sub.add_parser("mcde", help="Monte-Carlo density evolution threshold")
    mc.add_argument("--dist", required=True, help="degree distribution file")
    mc.add_argument("--grid", required=True, help="a:b:step")
    mc.add_argument("--nodes", type=int, default=10_000)
    mc.add_argument("--iterations", type=int, default=150)
    mc.add_argument("--seed", type=int, default=1)
    mc.add_argument("--out", help="per-point CSV (default: stdout)")

    kr = sub.add_parser("keyrate", help="secret key length from reconciliation results")
    kr.add_argument("--scenario", required=True, help="count scenario file")
    kr.add_argument("--leak-from", required=True, help="CSV written by 'reconcile run'")
    kr.add_argument("--eps-sec", type=float, default=keyrate.EPS_DEFAULT)
    kr.add_argument("--eps-cor", type=float, default=keyrate.EPS_DEFAULT)
    kr.add_argument("--out")
    return ap


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_run(args) -> int:
    overrides = {k: getattr(args, k) for k in ("method", "q", "qber", "frames", "seed", "out")}
    cfg = harness.load_config(args.config, overrides)

    def progress(s):
        print(f"{s.method} q={s.q} qber={s.qber:g}: f={s.mean_f:.4f} fer={s.fer:.3f} "
              f"rounds={s.mean_rounds:.1f} tries={s.mean_tries:.2f}", file=sys.stderr)

    results = harness.run_experiment(cfg, progress)
    if not cfg.out:
        sys.stdout.write(harness.csv_text(results))
    return EXIT_OK


def _cmd_mcde(args) -> int:
    try:
        grid = parse_grid(args.grid)
    except ValueError as exc:
        raise harness.ConfigError(str(exc)) from None
    try:
        dist = load_distribution(args.dist)
    except DistributionFormatError as exc:
        raise harness.ConfigError(str(exc)) from None
    try:
        sim = EnsembleSim(dist, args.nodes, args.iterations, qber_grid=grid)
    except ValueError as exc:
        raise harness.ConfigError(str(exc)) from None
    p_t, records = mcde_threshold(sim, gf_new(dist.q), args.seed)
    lines = ["p,success,iterations,entropy"]
    lines += [f"{r.p!r},{int(r.success)},{r.iterations},{r.entropy:.6e}" for r in records]
    _emit("\n".join(lines) + "\n", args.out)
    if p_t is None:
        print("no grid point converged", file=sys.stderr)
    else:
        eff = ensemble_efficiency(dist, p_t, dist.q)
        print(f"threshold {p_t:g} (efficiency {eff:.4f})", file=sys.stderr)
    return EXIT_OK


def _cmd_keyrate(args) -> int:
    try:
        scenarios = keyrate.load_scenarios(args.scenario)
        rows = keyrate.read_leak_csv(args.leak_from)
        table = keyrate.key_rate_table(scenarios, rows, args.eps_sec, args.eps_cor)
    except (ValueError, KeyError) as exc:
        raise harness.ConfigError(str(exc)) from None
    cols = ("method", "q", "qber", "mean_f", "loss_dB", "leak_bits", "key_bits")
    lines = [",".join(cols)]
    for r in table:
        lines.append(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "mcde": _cmd_mcde, "keyrate": _cmd_keyrate}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which is also our config code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except harness.ConfigError as exc:
        print(f"reconcile: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        # a missing config/scenario file is an I/O problem, not a bad setting
        print(f"reconcile: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"reconcile: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
