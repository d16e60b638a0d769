"""Command-line entry point.

    ldgap verify  [--level fast|full]
    ldgap phase   --config FILE [--seed U64] [--out FILE] [--set key=value ...]
    ldgap ldbound --config FILE [--out FILE] [--set key=value ...]
    ldgap plot    --in FILE --out FILE

LDGAP_THREADS caps worker parallelism (default: logical cores).
"""

from __future__ import annotations

import argparse
import sys

from .errors import LdgapError, ParameterError
from .harness import ldbound_table, parse_config, read_csv, run_ldbound, run_phase, write_rows
from .verify import render_report, run_verify


def cmd_verify(args) -> int:
    results = run_verify(args.level)
    return render_report(results, sys.stdout)


def cmd_phase(args) -> int:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"out={args.out}")
    cfg = parse_config(args.config, overrides)
    rows = run_phase(cfg)
    text = write_rows(rows, cfg, None)
    if not cfg.out:
        sys.stdout.write(text)
    return 0


def cmd_ldbound(args) -> int:
    cfg = parse_config(args.config, list(args.set or []))
    rows = run_ldbound(cfg)
    text = ldbound_table(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_plot(args) -> int:
    rows = read_csv(args.infile)  # raises before any file is written
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [float(r["delta2_target"]) for r in rows]
    ys = [float(r["exact_recovery_rate"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, "o-", label=rows[0].get("estimator", "estimator"))
    comp = float(rows[0]["comp_threshold"])
    stat = float(rows[0]["stat_threshold"])
    ax.axvline(comp, color="tab:red", linestyle="--", label="computational (indicative)")
    ax.axvline(stat, color="tab:green", linestyle=":", label="statistical (indicative)")
    ax.set_xlabel("target separation $\\Delta^2$")
    ax.set_ylabel("exact recovery rate")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    plt.close(fig)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldgap", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run the identity verification suite")
    v.add_argument("--level", choices=("fast", "full"), default="fast")
    v.set_defaults(func=cmd_verify)

    ph = sub.add_parser("phase", help="Monte-Carlo phase-diagram experiment")
    ph.add_argument("--config", required=True)
    ph.add_argument("--seed", type=int, default=None)
    ph.add_argument("--out", default=None)
    ph.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a config key (flags win)")
    ph.set_defaults(func=cmd_phase)

    lb = sub.add_parser("ldbound", help="tabulate low-degree bounds")
    lb.add_argument("--config", required=True)
    lb.add_argument("--out", default=None)
    lb.add_argument("--set", action="append", metavar="KEY=VALUE")
    lb.set_defaults(func=cmd_ldbound)

    pl = sub.add_parser("plot", help="render a phase CSV to a PNG")
    pl.add_argument("--in", dest="infile", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LdgapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
