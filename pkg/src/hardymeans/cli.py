"""``hardymeans`` command line.

Subcommands
-----------
verify    the default full run; exit 0 iff every check passes
sweep     a run described by ``--config`` and/or flags
tabulate  fixed-width table of ratio and log_ratio_d2 over the grid
plot      SVG plots of ratio, log_ratio_d2, M and logM
list      catalogue ids

Exit codes: 0 success, 1 check failures, 2 configuration / usage errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .functions import FUNCTION_IDS, make_function, mean_profile
from .means import WeightedMean, diagnostics
from .numerics import NumericsError
from .report import (
    CHECK_FAMILIES,
    DEFAULT_TOLERANCES,
    PLOT_QUANTITIES,
    ConfigInvalid,
    ConvexityReport,
    Grid,
    IoError,
    RunConfig,
    default_config,
    emit_csv,
    emit_json,
    emit_svg_plot,
    run,
)
from .weights import WEIGHT_IDS, InvalidParameter, UnknownId, make_weight

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors already; keep the usage text on stderr
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _csv_list(raw: str) -> tuple:
    items = tuple(s.strip() for s in raw.split(",") if s.strip())
    if not items:
        raise ConfigInvalid(f"empty list {raw!r}")
    return items


def _float_list(raw: str) -> tuple:
    try:
        return tuple(float(s) for s in _csv_list(raw))
    except ValueError as exc:
        raise ConfigInvalid(f"bad number list {raw!r}") from exc


def _tol_override(raw: str) -> tuple:
    name, sep, value = raw.partition("=")
    if not sep:
        raise ConfigInvalid(f"--tol-family expects name=rel, got {raw!r}")
    if name not in DEFAULT_TOLERANCES:
        raise ConfigInvalid(f"unknown tolerance family {name!r}; known: {', '.join(sorted(DEFAULT_TOLERANCES))}")
    try:
        return name, float(value)
    except ValueError as exc:
        raise ConfigInvalid(f"bad tolerance {value!r}") from exc


def _add_common(p: argparse.ArgumentParser, out_default: Optional[str] = "hardymeans-out"):
    p.add_argument("--config", help="JSON file matching RunConfig")
    p.add_argument("--out", default=out_default, help="output directory (created if absent)")
    p.add_argument("--grid", help="lo:hi:n[:log|lin]")
    p.add_argument("--weights", help="comma-separated weight ids")
    p.add_argument("--functions", help="comma-separated function ids")
    p.add_argument("--p", help="comma-separated exponents, e.g. 2,4")
    p.add_argument("--checks", help=f"comma-separated subset of {','.join(CHECK_FAMILIES)}")
    p.add_argument("--tol-family", action="append", default=[], metavar="NAME=REL",
                   help="override one tolerance family (repeatable)")
    p.add_argument("--force", action="store_true", help="overwrite existing output files")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hardymeans", description="Numerical log-convexity checks for weighted Hardy means.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{verify,sweep,tabulate,plot,list}", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("verify", help="run every check with the default configuration")
    _add_common(p)
    p.add_argument("--quiet", action="store_true", help="only print the summary line")

    p = sub.add_parser("sweep", help="run a user configuration")
    _add_common(p)
    p.add_argument("--quiet", action="store_true", help="only print the summary line")

    p = sub.add_parser("tabulate", help="table of ratio and log_ratio_d2 over the grid")
    _add_common(p, out_default=None)

    p = sub.add_parser("plot", help="SVG plots of ratio, log_ratio_d2, M, logM")
    _add_common(p)
    p.add_argument("--quantity", action="append", choices=PLOT_QUANTITIES,
                   help="quantity to plot (repeatable, default all)")

    sub.add_parser("list", help="print catalogue ids")
    return parser


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid("config must be a JSON object")
    return data


def config_from_args(args, base: Optional[RunConfig] = None) -> RunConfig:
    """File values first, then flags on top."""
    base = base or RunConfig()
    d = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
    if args.config:
        d.update(RunConfig.from_dict(_load_config_file(args.config)).__dict__)
    if args.grid:
        d["grid"] = Grid.parse(args.grid)
    if args.weights:
        d["weight_ids"] = _csv_list(args.weights)
    if args.functions:
        d["function_ids"] = _csv_list(args.functions)
    if args.p:
        d["p_values"] = _float_list(args.p)
    if args.checks:
        d["checks"] = _csv_list(args.checks)
    if args.tol_family:
        tol = dict(d["tolerances"])
        tol.update(_tol_override(t) for t in args.tol_family)
        d["tolerances"] = tol
    # narrowed selections drop lemma subsets that no longer fit
    if d.get("lemma_functions") is not None:
        kept = tuple(f for f in d["lemma_functions"] if f in d["function_ids"])
        d["lemma_functions"] = kept or None
    if d.get("lemma_p") is not None:
        kept = tuple(p for p in d["lemma_p"] if p in d["p_values"])
        d["lemma_p"] = kept or None
    return RunConfig(**d)


def _targets(out_dir: Optional[str], names: Sequence[str], force: bool) -> list:
    if out_dir is None:
        return []
    paths = [Path(out_dir) / n for n in names]
    existing = [str(p) for p in paths if p.exists()]
    if existing and not force:
        raise FileExistsError(f"refusing to overwrite {', '.join(existing)} (use --force)")
    return paths


def _print_summary(report: ConvexityReport, quiet: bool) -> None:
    if not quiet:
        width = max(len(f) for f in report.summary) if report.summary else 10
        for fam, s in report.summary.items():
            rate = "n/a" if s.pass_rate is None else f"{100 * s.pass_rate:.2f}%"
            print(f"{fam:<{width}}  rows={s.total:<6d} skipped={s.skipped:<5d} failed={s.failed:<5d} pass={rate}")
            if s.failed and s.worst is not None:
                w = s.worst
                print(f"  first failure: {w.weight_id} {w.function_id} p={w.p} y={w.y} "
                      f"{w.quantity} value={w.value} {w.relation} {w.threshold}")
    total = sum(s.failed for s in report.summary.values())
    print("ALL CHECKS PASSED" if total == 0 else f"{total} CHECK(S) FAILED")


def _cmd_run(args, base: Optional[RunConfig]) -> int:
    cfg = config_from_args(args, base)
    csv_path, json_path = _targets(args.out, ("report.csv", "report.json"), args.force)
    report = run(cfg)
    emit_json(report, json_path)
    emit_csv(report, csv_path)
    _print_summary(report, args.quiet)
    if not args.quiet:
        print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK if report.all_passed else EXIT_FAIL


def _cmd_tabulate(args) -> int:
    cfg = config_from_args(args)
    ys = cfg.grid.values()
    lines = []
    header = f"{'y':>12}  {'ratio':>24}  {'log_ratio_d2':>24}  flags"
    for wid in sorted(cfg.weight_ids):
        w = make_weight(wid)
        for fid in sorted(cfg.function_ids):
            for p in sorted(cfg.p_values):
                wm = WeightedMean(w, mean_profile(make_function(fid), p), p=p)
                lines.append(f"# {wid} | {fid} | p={p:g}")
                lines.append(header)
                for d in diagnostics(wm, ys):
                    flags = ",".join(sorted(f.value for f in d.flags)) or "-"
                    lines.append(f"{d.y:12.6g}  {d.ratio:24.16e}  {d.log_ratio_d2:24.16e}  {flags}")
                lines.append("")
    text = "\n".join(lines)
    (path,) = _targets(args.out, ("table.txt",), args.force) or (None,)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    print(text)
    return EXIT_OK


def _cmd_plot(args) -> int:
    # only the families that produce plotted series
    base = RunConfig(checks=("thm_signs", "hip_inequality"), anchor_cluster=True)
    cfg = config_from_args(args, base)
    quantities = args.quantity or list(PLOT_QUANTITIES)
    paths = _targets(args.out, [f"{q}.svg" for q in quantities], args.force)
    report = run(dataclasses.replace(cfg, checks=tuple(c for c in cfg.checks
                                                        if c in ("thm_signs", "hip_inequality"))
                                     or ("thm_signs", "hip_inequality")))
    for q, path in zip(quantities, paths):
        emit_svg_plot(report, q, path)
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_list() -> int:
    print("weights:")
    for wid in WEIGHT_IDS:
        w = make_weight(wid)
        print(f"  {wid:<18} anchor={w.anchor.value:<6} family={w.family or '-'}")
    print("functions:")
    for fid in FUNCTION_IDS:
        f = make_function(fid)
        lo, hi = f.hardy_p_range
        print(f"  {fid:<18} p > {lo:g}")
    print("check families:")
    for fam in CHECK_FAMILIES:
        print(f"  {fam}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        if args.command == "list":
            return _cmd_list()
        if args.command == "verify":
            return _cmd_run(args, default_config())
        if args.command == "sweep":
            if not args.config and not any((args.weights, args.functions, args.p, args.checks, args.grid)):
                raise ConfigInvalid("sweep needs --config or selection flags")
            return _cmd_run(args, None)
        if args.command == "tabulate":
            return _cmd_tabulate(args)
        if args.command == "plot":
            return _cmd_plot(args)
    except (ConfigInvalid, UnknownId, InvalidParameter, FileExistsError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"hardymeans: configuration error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except IoError as exc:
        print(f"hardymeans: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"hardymeans: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    parser.print_usage(sys.stderr)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
