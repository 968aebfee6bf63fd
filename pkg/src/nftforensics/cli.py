"""Command-line entry point.

Exit codes: 0 success, 1 unreadable or invalid input, 2 bad configuration or flags.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from urllib.parse import urlsplit

from . import __version__
from .config import KEYS, build_settings, load_config
from .linkaudit import (HttpFetcher, read_allowlist, read_records, run_accessibility_rounds,
                        write_escrow_csv, write_records)
from .model import IngestError, account, ingest, write_stream
from .report import (DETECTORS, RunReport, describe_inputs, detect_report, parse_which, render_summary,
                     run_audit)
from .synth import SynthError, build_scenario, read_labels, write_scenario
from .trading import ConfigError

log = logging.getLogger("nftforensics")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2


class InputError(Exception):
    """Bad input data or an input file that cannot be read."""


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_threshold_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("thresholds (override --config)")
    for key, (_, default) in KEYS.items():
        g.add_argument(_flag(key), dest=f"set_{key}", metavar="V", default=None,
                       help=f"default {default}")


def _add_stream_flags(p: argparse.ArgumentParser, events_required: bool = True) -> None:
    p.add_argument("--events", required=events_required, help="newline-delimited event file")
    p.add_argument("--assets", help="newline-delimited asset records")
    p.add_argument("--config", help="key = value threshold file")
    p.add_argument("--out", help="report or output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nftforensics", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and canonicalize an event stream")
    _add_stream_flags(p)
    p.add_argument("--assets-out", help="write canonical asset records here (default: with the events)")

    p = sub.add_parser("detect", help="run trading and integrity detectors")
    _add_stream_flags(p)
    p.add_argument("--which", default="all", help=f"comma list of {', '.join(DETECTORS)} or all")
    p.add_argument("--images", help="directory of <contract>_<token_id> images for pHash matching")
    p.add_argument("--labels", help="labels file from synth; adds recall figures to the summary")
    _add_threshold_flags(p)

    p = sub.add_parser("audit", help="link persistence, verification and custody audits")
    _add_stream_flags(p)
    p.add_argument("--records", help="accessibility records to classify (offline)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--offline", dest="online", action="store_false", default=False,
                      help="classify recorded observations only (default)")
    mode.add_argument("--online", dest="online", action="store_true",
                      help="probe asset URLs live; requires --allowlist")
    p.add_argument("--allowlist", help="hosts that may be contacted in --online mode")
    p.add_argument("--records-out", help="where to save records observed in --online mode")
    p.add_argument("--later-assets", help="a later asset snapshot for metadata drift and takedowns")
    p.add_argument("--escrow", help="escrow account to count holdings for")
    p.add_argument("--escrow-at", type=int, help="timestamp for the escrow count (default: last transfer)")
    p.add_argument("--escrow-csv", help="write the escrow holding series as CSV")

    p = sub.add_parser("synth", help="generate a labelled synthetic scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--n-assets", type=int, default=100)
    p.add_argument("--sales", type=int, default=2000)
    p.add_argument("--auction-rate", type=float, default=0.2)
    p.add_argument("--rings", default="", help="comma list of wash ring sizes, e.g. 2,3,5")
    p.add_argument("--trades-per-pair", type=int, default=12)
    p.add_argument("--shill", type=int, default=0, help="number of shill auctions")
    p.add_argument("--shield", type=int, default=0, help="number of shield auctions")

    p = sub.add_parser("report", help="validate a saved report and print its summary")
    p.add_argument("path")
    return parser


# ------------------------------------------------------------------ helpers

def _require_file(path, flag: str) -> str:
    if path is not None and not Path(path).is_file():
        raise InputError(f"{flag} {path}: no such file")
    return path


def _settings(args):
    file_values = load_config(args.config) if args.config else {}
    overrides = {k: getattr(args, f"set_{k}") for k in KEYS if getattr(args, f"set_{k}", None) is not None}
    return build_settings(file_values, overrides, config_source=args.config or "config")


def _load(args):
    _require_file(args.events, "--events")
    _require_file(args.assets, "--assets")
    try:
        stream = ingest(args.events, assets=args.assets)
    except IngestError as exc:
        raise InputError(str(exc)) from exc
    for d in stream.diagnostics:
        log.warning("%s", d)
    return stream


def _emit(report: RunReport, out) -> None:
    if out:
        report.write(out)
    print(render_summary(report))
    if out:
        print(f"  report: {out}")


# ----------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    stream = _load(args)
    if args.out:
        write_stream(stream, args.out, args.assets_out)
    counts: dict = {}
    for d in stream.diagnostics:
        counts[d.code] = counts.get(d.code, 0) + 1
    print(f"ingested {len(stream.events)} events, {len(stream.assets)} assets")
    for code, n in sorted(counts.items()):
        print(f"  {code}: {n}")
    return EXIT_OK


def cmd_detect(args) -> int:
    settings = _settings(args)
    try:
        which = parse_which(args.which)
    except ValueError as exc:
        raise ConfigError(f"--which: {exc}") from None
    if args.images is not None and not Path(args.images).is_dir():
        raise InputError(f"--images {args.images}: not a directory")
    _require_file(args.labels, "--labels")
    stream = _load(args)
    labels = None
    if args.labels:
        try:
            labels = read_labels(args.labels)
        except ValueError as exc:
            raise InputError(f"--labels {args.labels}: {exc}") from exc
    inputs = describe_inputs({"events": args.events, "assets": args.assets, "config": args.config,
                              "labels": args.labels})
    report = detect_report(stream, settings, which, inputs, args.images, labels)
    _emit(report, args.out)
    return EXIT_OK


def cmd_audit(args) -> int:
    if args.online and not args.allowlist:
        raise ConfigError("--online requires --allowlist")
    if args.escrow is not None:
        try:
            escrow = account(args.escrow)
        except ValueError as exc:
            raise ConfigError(f"--escrow: {exc}") from None
    else:
        escrow = None
    _require_file(args.records, "--records")
    _require_file(args.later_assets, "--later-assets")
    _require_file(args.allowlist, "--allowlist")
    stream = _load(args)

    records = None
    if args.records:
        try:
            records = read_records(args.records)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    elif args.online:
        urls = {u for a in stream.assets.values() for u in (a.image_url, a.metadata_url) if u}
        fetcher = HttpFetcher(read_allowlist(args.allowlist))
        allowed = sorted(u for u in urls if _host(u) in fetcher.allowlist)
        records = run_accessibility_rounds(allowed, fetcher)
        if args.records_out:
            write_records(records, args.records_out)

    later = None
    if args.later_assets:
        try:
            later = ingest(args.later_assets).assets.values()
        except IngestError as exc:
            raise InputError(str(exc)) from exc

    findings, summary = run_audit(stream, records, later, escrow, args.escrow_at)
    if args.escrow_csv and escrow is not None:
        write_escrow_csv(findings["escrow_series"], args.escrow_csv)
    config = {"mode": "online" if args.online else "offline"}
    inputs = describe_inputs({"events": args.events, "assets": args.assets, "records": args.records,
                              "later_assets": args.later_assets, "allowlist": args.allowlist})
    _emit(RunReport("audit", config, inputs, findings, summary), args.out)
    return EXIT_OK


def _host(url: str) -> str:
    return (urlsplit(url).hostname or "").lower()


def cmd_synth(args) -> int:
    try:
        rings = [int(x) for x in args.rings.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--rings: expected comma-separated integers, got {args.rings!r}") from None
    try:
        sc = build_scenario(args.seed, args.users, args.n_assets, args.sales, rings, args.trades_per_pair,
                            args.shill, args.shield, args.auction_rate)
    except SynthError as exc:
        raise ConfigError(str(exc)) from None
    paths = write_scenario(sc, args.out)
    print(f"synth seed={args.seed}: {len(sc.events)} events, {len(sc.assets)} assets, {len(sc.labels)} labels")
    for role, path in sorted(paths.items()):
        print(f"  {role}: {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    _require_file(args.path, "report")
    try:
        report = RunReport.read(args.path)
    except ValueError as exc:
        raise InputError(f"{args.path}: {exc}") from exc
    print(render_summary(report))
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "detect": cmd_detect, "audit": cmd_audit, "synth": cmd_synth,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"input error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
