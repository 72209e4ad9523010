"""Command-line surface: simulate, track, count, eval.

The four subcommands compose end to end from one scenario file:

    probetrack simulate --config scenario.json --out-dir out/
    probetrack track    --log out/probes.csv --nodes out/nodes.csv --out-dir out/
    probetrack count    --tracks out/track.csv --zones out/zones.json --out-dir out/
    probetrack eval     --truth out/truth.csv --tracks out/track.csv \
                        --zones out/zones.json --out-dir out/

Exit codes: 0 success, 1 usage, 2 input validation, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import harness, metrics
from .ingest import load_nodes, parse_probe_log, write_nodes, write_probe_log
from .localization import ChannelParams
from .occupancy import (ZoneMapError, dwell_histogram, load_zone_map,
                        occupancy_series, write_dwell_csv, write_occupancy_csv)
from .scenario import Scenario
from .windows import SamplingWindowConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we use 1
        raise UsageError(message)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario JSON file")
    p.add_argument("--out-dir", default="out", help="output directory")
    p.add_argument("--seed", type=int, help="base seed override")
    p.add_argument("--n-min", type=int,
                   help="minimum reference nodes required to use a measurement")
    p.add_argument("--resolution-s", type=float,
                   help="occupancy snapshot resolution in seconds")
    p.add_argument("--grace-s", type=float, help="presence grace period")
    p.add_argument("--hold-l", type=int, help="sample-and-hold length in windows")
    p.add_argument("--window-t", type=float, help="sampling window length seconds")
    p.add_argument("--verbose", action="store_true")


def build_parser() -> _Parser:
    parser = _Parser(prog="probetrack",
                     description="Occupancy counting from WiFi probe-request logs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", parents=[], help="generate a probe log "
                           "and ground truth from a scenario")
    _common_flags(p_sim)
    p_sim.add_argument("--runs", type=int, help="Monte Carlo run count override")

    p_track = sub.add_parser("track", help="run the measurement pipeline and "
                             "IMM tracker over a probe log")
    _common_flags(p_track)
    p_track.add_argument("--log", required=True, help="probe log (CSV or JSONL)")
    p_track.add_argument("--nodes", required=True, help="reference-node table")
    p_track.add_argument("--t0", type=float, default=0.0,
                         help="window origin timestamp")
    p_track.add_argument("--no-filter", action="store_true",
                         help="keep static and passing-by devices")

    p_count = sub.add_parser("count", help="occupancy series and dwell "
                             "histogram from a track dump")
    _common_flags(p_count)
    p_count.add_argument("--tracks", required=True, help="track dump CSV")
    p_count.add_argument("--zones", required=True, help="zone map JSON")

    p_eval = sub.add_parser("eval", help="accuracy metrics against ground truth")
    _common_flags(p_eval)
    p_eval.add_argument("--truth", required=True, help="ground-truth CSV")
    p_eval.add_argument("--tracks", required=True, help="track dump CSV")
    p_eval.add_argument("--zones", required=True, help="zone map JSON")
    return parser


def _load_scenario(args) -> Scenario:
    if args.config:
        try:
            sc = Scenario.from_json(args.config)
        except (OSError, ValueError, KeyError) as exc:
            raise ValidationError(f"bad scenario file {args.config}: {exc}")
    else:
        sc = Scenario()
    if args.seed is not None:
        sc.base_seed = args.seed
    if args.n_min is not None:
        sc.n_min = args.n_min
    if args.grace_s is not None:
        sc.grace_s = args.grace_s
    if args.resolution_s is not None:
        sc.resolution_s = args.resolution_s
    if args.hold_l is not None or args.window_t is not None:
        sc.window = SamplingWindowConfig(
            window_length_s=(args.window_t if args.window_t is not None
                             else sc.window.window_length_s),
            hold_windows=(args.hold_l if args.hold_l is not None
                          else sc.window.hold_windows))
    return sc


def cmd_simulate(args) -> int:
    sc = _load_scenario(args)
    if getattr(args, "runs", None) is not None:
        sc.runs = args.runs
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        zone_map = sc.zone_map()
    except (ZoneMapError, KeyError, ValueError) as exc:
        raise ValidationError(f"invalid zone map in scenario: {exc}")
    records, truth = harness.simulate_scenario(sc)
    write_probe_log(out / "probes.csv", records)
    metrics.write_truth(out / "truth.csv", truth)
    write_nodes(out / "nodes.csv", sc.nodes)
    with (out / "zones.json").open("w") as fh:
        json.dump(sc.zones, fh, indent=2, sort_keys=True)
        fh.write("\n")
    sc.to_json(out / "scenario.json")
    print(f"simulate: {sc.runs} runs, {len(records)} probe records, "
          f"{len(truth)} truth windows -> {out}")
    return EXIT_OK


def cmd_track(args) -> int:
    sc = _load_scenario(args)
    try:
        nodes = load_nodes(args.nodes)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"bad node table: {exc}")
    try:
        records, diag = parse_probe_log(args.log, nodes=nodes)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"bad probe log: {exc}")
    total_seen = diag.parsed + diag.total_rejected
    skipped = diag.rejected_malformed + diag.rejected_nonfinite
    if total_seen > 0 and skipped / total_seen > 0.10:
        raise ValidationError(
            f"{skipped}/{total_seen} records unparseable (>10%)")

    channel = ChannelParams(p0=sc.assumed_p0(), n=sc.assumed_n(),
                            d0=sc.channel.d0, p0_known=sc.p0_known,
                            n_known=sc.n_known)
    rows, diag = harness.track_records(
        records, nodes, channel, sc.window, sc.tracker_params(),
        t0=args.t0, filter_devices=not args.no_filter, diagnostics=diag)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_track_dump(out / "track.csv", rows)
    with (out / "diagnostics.json").open("w") as fh:
        json.dump(diag.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    n_devices = len({r.device_id for r in rows})
    print(f"track: {len(records)} records -> {len(rows)} track rows "
          f"({n_devices} devices) -> {out}")
    return EXIT_OK


def cmd_count(args) -> int:
    sc = _load_scenario(args)
    try:
        zone_map = load_zone_map(args.zones)
    except (OSError, ValueError, KeyError) as exc:
        raise ValidationError(f"invalid zone map: {exc}")
    try:
        rows = metrics.read_track_dump(args.tracks)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"bad track dump: {exc}")
    observations = [(r.t, r.device_id, r.x, r.y) for r in rows]
    snapshots, dwell = occupancy_series(
        observations, zone_map, sc.resolution_s, sc.grace_s)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_occupancy_csv(out / "occupancy.csv", snapshots, zone_map.zone_ids())
    write_dwell_csv(out / "dwell.csv", dwell_histogram(dwell))
    print(f"count: {len(rows)} rows -> {len(snapshots)} snapshots, "
          f"{len(dwell)} devices -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        zone_map = load_zone_map(args.zones)
        truth = metrics.read_truth(args.truth)
        rows = metrics.read_track_dump(args.tracks)
    except (OSError, ValueError, KeyError) as exc:
        raise ValidationError(f"bad eval inputs: {exc}")
    try:
        report = metrics.evaluate(truth, rows, zone_map)
    except metrics.MisalignedInputsError as exc:
        raise ValidationError(str(exc))
    max_nodes = max([r.n_avail for r in rows], default=0)
    metrics.write_eval_report(args.out_dir, report, max_nodes)
    s = report.summary
    print(f"eval: {s['runs']} runs | median mean err raw="
          f"{s['median_raw_mean_err_m']:.2f} m imm="
          f"{s['median_imm_mean_err_m']:.2f} m | zone acc raw="
          f"{s['median_raw_zone_acc']:.3f} imm={s['median_imm_zone_acc']:.3f}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"simulate": cmd_simulate, "track": cmd_track,
                "count": cmd_count, "eval": cmd_eval}
    try:
        return handlers[args.command](args)
    except ValidationError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("unhandled failure")
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
