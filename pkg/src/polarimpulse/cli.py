"""Command-line entry point: ``polarimpulse <command> ...``."""

from __future__ import annotations

import argparse
import logging
import math
import sys

from . import harness
from .config import CodeSpec, ExperimentConfig, NoiseSpec, load_config
from .errors import ConfigError, NumericalError, ParameterError
from .ofdm import OfdmConfig
from .polar_codec import format_info_set

FLOOR_IMPROVEMENT = 2.0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text):
    """Comma list or ``start:stop:step`` (inclusive stop)."""
    if ":" in text:
        a, b, s = (float(v) for v in text.split(":"))
        n = int(math.floor((b - a) / s + 1e-9)) + 1
        return [round(a + i * s, 10) for i in range(n)]
    return [float(v) for v in text.split(",") if v.strip()]


def _write(path, text):
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _load(args):
    cfg = load_config(args.config)
    over = {}
    for name in ("seed", "workers", "max_blocks", "min_block_errors"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    return cfg.replace(**over) if over else cfg


def cmd_construct(args):
    if args.config:
        cfg = load_config(args.config)
        method = args.method or cfg.code_spec.method
        design = args.design_snr_db if args.design_snr_db is not None else cfg.code_spec.design_snr_db
    else:
        missing = [f"--{n}" for n in ("N", "K", "A", "gamma", "design-snr-db", "method")
                   if getattr(args, n.replace("-", "_")) is None]
        if missing:
            raise ConfigError("construct needs --config or " + ", ".join(missing))
        method, design = args.method, args.design_snr_db
        ofdm_cfg = OfdmConfig(args.N, "none", None, "analytic") if args.modulation == "ofdm" else None
        cfg = ExperimentConfig(
            noise=NoiseSpec(args.A, args.gamma, args.truncation_M),
            code_spec=CodeSpec(args.N, args.K, method, design, None, args.samples, args.seed),
            snr_points=(design,), modulation=args.modulation, ofdm=ofdm_cfg)
    if method == "file":
        raise ConfigError("construct needs method de or heuristic")
    if design is None:
        raise ConfigError("construct needs a design SNR")
    res = harness.construct(cfg, method, design)
    _write(args.out, format_info_set(res.code()))
    if args.reliability:
        _write(args.reliability, res.reliability_csv())
    print(f"{res.method}: N={res.N} K={res.K} blep_product={res.blep_product:.4e} "
          f"blep_sum={res.blep_sum:.4e}", file=sys.stderr)
    return 0


def cmd_bound(args):
    cfg = harness.resolve(_load(args))
    _write(args.out, harness.bound_csv(cfg, harness.run_bound(cfg)))
    return 0


def cmd_simulate(args):
    cfg = harness.resolve(_load(args))

    def report(rec):
        print(f"snr={rec.snr_db:g} dB blocks={rec.blocks_run} errors={rec.block_errors} "
              f"fer={rec.fer:.3e}", file=sys.stderr)

    records = harness.run_fer(cfg, progress=None if args.quiet else report)
    bounds = harness.run_bound(cfg) if args.with_bound else None
    _write(args.out, harness.results_csv(cfg, records, bounds))
    return 0


def cmd_sweep_design_snr(args):
    cfg = _load(args)
    rows, best = harness.sweep_design_snr(cfg, _floats(args.design_snr), args.pilot_snr)
    lines = [f"# pilot_snr_db={args.pilot_snr!r}", "design_snr_db,blocks,block_errors,fer,ci95"]
    for d, _, rec in rows:
        lines.append(f"{d!r},{rec.blocks_run},{rec.block_errors},{rec.fer!r},{rec.ci95!r}")
    lines.append(f"# best_design_snr_db={best[0]!r}")
    _write(args.out, "\n".join(lines) + "\n")
    if args.best_out:
        _write(args.best_out, format_info_set(best[1]))
    return 0


def cmd_sweep_threshold(args):
    cfg = _load(args)
    rows = harness.sweep_threshold(cfg, _floats(args.thresholds), args.snr_db)
    lines = [f"# snr_db={args.snr_db!r}", "threshold_T,blocks,block_errors,fer,ci95"]
    for T, rec in rows:
        lines.append(f"{T!r},{rec.blocks_run},{rec.block_errors},{rec.fer!r},{rec.ci95!r}")
    best = min(rows, key=lambda r: r[1].fer)
    lines.append(f"# best_threshold_T={best[0]!r}")
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def compare_tables(curves):
    """Merge ``{label: (snrs, fers)}`` into rows plus a per-curve floor summary."""
    snrs = sorted({s for xs, _ in curves.values() for s in xs})
    rows = []
    for s in snrs:
        row = [s]
        for xs, ys in curves.values():
            row.append(dict(zip(xs, ys)).get(s))
        rows.append(row)
    summary = {}
    for label, (xs, ys) in curves.items():
        pts = [(x, y) for x, y in zip(xs, ys) if y > 0]
        imp = harness.per_db_improvement([p[0] for p in pts], [p[1] for p in pts]) if len(pts) > 1 else float("nan")
        summary[label] = {"per_db_improvement": imp,
                          "floor": bool(imp < FLOOR_IMPROVEMENT) if not math.isnan(imp) else None,
                          "lowest_fer": min((p[1] for p in pts), default=float("nan"))}
    return snrs, rows, summary


def cmd_compare(args):
    curves = {}
    for item in args.inputs:
        label, sep, path = item.partition("=")
        if not sep:
            raise ConfigError(f"expected LABEL=PATH, got {item!r}")
        try:
            cols = harness.read_csv_table(path)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}")
        col = args.column if args.column in cols else ("blep_product" if "blep_product" in cols else None)
        if col is None or "snr_db" not in cols:
            raise ConfigError(f"{path}: no snr_db/{args.column} columns")
        curves[label] = (cols["snr_db"], cols[col])
    _, rows, summary = compare_tables(curves)
    lines = [f"# {lab}: per_db_improvement_last_3dB={s['per_db_improvement']:.4g} "
             f"floor={'yes' if s['floor'] else 'no' if s['floor'] is not None else 'n/a'}"
             for lab, s in summary.items()]
    lines.append(",".join(["snr_db"] + list(curves)))
    for row in rows:
        lines.append(",".join("" if v is None else repr(float(v)) for v in row))
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def build_parser():
    p = _Parser(prog="polarimpulse", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("construct", help="build an information set")
    c.add_argument("--config")
    c.add_argument("--method", choices=("de", "heuristic"))
    c.add_argument("--N", type=int)
    c.add_argument("--K", type=int)
    c.add_argument("--A", type=float)
    c.add_argument("--gamma", type=float)
    c.add_argument("--truncation-M", type=int, default=20)
    c.add_argument("--design-snr-db", type=float)
    c.add_argument("--modulation", choices=("single-carrier", "ofdm"), default="single-carrier")
    c.add_argument("--samples", type=int, default=10**7)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.add_argument("--reliability")
    c.set_defaults(func=cmd_construct)

    def common(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--max-blocks", dest="max_blocks", type=int)
        sp.add_argument("--min-block-errors", dest="min_block_errors", type=int)

    b = sub.add_parser("bound", help="DE block-error bound per SNR point")
    common(b)
    b.set_defaults(func=cmd_bound)

    s = sub.add_parser("simulate", help="Monte Carlo FER per SNR point")
    common(s)
    s.add_argument("--with-bound", action="store_true")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("sweep-design-snr", help="pick the heuristic design SNR by simulated FER")
    common(d)
    d.add_argument("--design-snr", required=True, help="list a,b,c or start:stop:step")
    d.add_argument("--pilot-snr", type=float, required=True)
    d.add_argument("--best-out")
    d.set_defaults(func=cmd_sweep_design_snr)

    t = sub.add_parser("sweep-threshold", help="FER versus blanking/clipping threshold")
    common(t)
    t.add_argument("--thresholds", required=True, help="list a,b,c or start:stop:step")
    t.add_argument("--snr-db", type=float, required=True)
    t.set_defaults(func=cmd_sweep_threshold)

    m = sub.add_parser("compare", help="merge result CSVs into one table")
    m.add_argument("inputs", nargs="+", metavar="LABEL=PATH")
    m.add_argument("--column", default="fer")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (ConfigError, ParameterError, NumericalError) as exc:
        print(f"polarimpulse: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"polarimpulse: error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
