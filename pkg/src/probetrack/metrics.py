"""Evaluation: per-run error metrics, zone accuracy, availability statistics.

Joins ground truth with the track dump on (device, window) and reports, per
Monte Carlo run, the mean position error of the raw estimates and of the
filter output over the windows where both exist, plus zone-level accuracy and
the histogram of per-window sniffer availability. Aggregates are medians and
CDF tables over the per-run values.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .occupancy import ZoneMap
from .simulate import TruthRow
from .tracking import TrackRow

TRACK_FIELDS = ("device_id", "window", "t", "model", "x", "y", "vx", "vy",
                "cov_xx", "cov_yy", "cov_vx", "cov_vy", "n_avail", "n_fresh",
                "raw_x", "raw_y", "raw_estimator", "raw_quality")
TRUTH_FIELDS = ("run", "device_id", "window", "t", "x", "y", "zone")


@dataclass(frozen=True)
class RunMetrics:
    run: int
    n_truth_windows: int
    n_meas_windows: int
    raw_mean_err: float
    imm_mean_err: float
    raw_rmse: float
    imm_rmse: float
    raw_zone_acc: float
    imm_zone_acc: float


@dataclass
class EvalReport:
    per_run: list[RunMetrics]
    availability_fresh: Counter  # exact fresh-node count -> windows
    availability_held: Counter  # exact |P_k| (with holds) -> windows
    summary: dict


class MisalignedInputsError(ValueError):
    """Track dump and ground truth share no (device, window) pairs."""


def _median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values))) if values else float("nan")


def evaluate(
    truth_rows: Sequence[TruthRow],
    track_rows: Sequence[TrackRow],
    zone_map: ZoneMap,
) -> EvalReport:
    truth_by_key = {(r.device_id, r.window): r for r in truth_rows}
    runs_by_device: dict[str, int] = {r.device_id: r.run for r in truth_rows}
    track_by_key = {(r.device_id, r.window): r for r in track_rows}
    if truth_by_key and track_by_key and not (
            set(truth_by_key) & set(track_by_key)):
        raise MisalignedInputsError(
            "no (device, window) overlap between truth and track dump")

    fresh_hist: Counter = Counter()
    held_hist: Counter = Counter()
    per_run_meas: dict[int, list[tuple[float, float, bool, bool]]] = defaultdict(list)
    truth_windows_per_run: Counter = Counter()

    for key, truth in truth_by_key.items():
        run = truth.run
        truth_windows_per_run[run] += 1
        row = track_by_key.get(key)
        fresh_hist[row.n_fresh if row else 0] += 1
        held_hist[row.n_avail if row else 0] += 1
        if row is None or row.raw_x is None:
            continue
        raw_err = math.hypot(row.raw_x - truth.x, row.raw_y - truth.y)
        imm_err = math.hypot(row.x - truth.x, row.y - truth.y)
        truth_zone = truth.zone
        raw_ok = zone_map.zone_of((row.raw_x, row.raw_y)) == truth_zone
        imm_ok = zone_map.zone_of((row.x, row.y)) == truth_zone
        per_run_meas[run].append((raw_err, imm_err, raw_ok, imm_ok))

    per_run: list[RunMetrics] = []
    for run in sorted(truth_windows_per_run):
        rows = per_run_meas.get(run, [])
        if rows:
            raw_errs = np.array([r[0] for r in rows])
            imm_errs = np.array([r[1] for r in rows])
            metrics = RunMetrics(
                run=run,
                n_truth_windows=truth_windows_per_run[run],
                n_meas_windows=len(rows),
                raw_mean_err=float(raw_errs.mean()),
                imm_mean_err=float(imm_errs.mean()),
                raw_rmse=float(np.sqrt((raw_errs ** 2).mean())),
                imm_rmse=float(np.sqrt((imm_errs ** 2).mean())),
                raw_zone_acc=float(np.mean([r[2] for r in rows])),
                imm_zone_acc=float(np.mean([r[3] for r in rows])),
            )
        else:
            nan = float("nan")
            metrics = RunMetrics(run, truth_windows_per_run[run], 0,
                                 nan, nan, nan, nan, nan, nan)
        per_run.append(metrics)

    measured = [m for m in per_run if m.n_meas_windows > 0]
    nonzero_fresh = sum(c for n, c in fresh_hist.items() if n >= 1)
    single_share = (fresh_hist.get(1, 0) / nonzero_fresh) if nonzero_fresh else 0.0
    double_share = (fresh_hist.get(2, 0) / nonzero_fresh) if nonzero_fresh else 0.0
    loc_at = {m: sum(c for n, c in held_hist.items() if n >= m)
              for m in (1, 2, 3, 4)}
    summary = {
        "runs": len(per_run),
        "runs_with_measurements": len(measured),
        "median_raw_mean_err_m": _median([m.raw_mean_err for m in measured]),
        "median_imm_mean_err_m": _median([m.imm_mean_err for m in measured]),
        "median_raw_zone_acc": _median([m.raw_zone_acc for m in measured]),
        "median_imm_zone_acc": _median([m.imm_zone_acc for m in measured]),
        "single_node_fresh_share": single_share,
        "double_node_fresh_share": double_share,
        "localizable_windows_nmin1": loc_at[1],
        "localizable_windows_nmin2": loc_at[2],
        "localizable_windows_nmin3": loc_at[3],
        "localizable_windows_nmin4": loc_at[4],
    }
    if measured:
        summary["imm_to_raw_err_ratio"] = (
            summary["median_imm_mean_err_m"] / summary["median_raw_mean_err_m"]
            if summary["median_raw_mean_err_m"] > 0 else float("nan"))
    return EvalReport(per_run, fresh_hist, held_hist, summary)


def cdf_points(values: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF of per-run values: (value, cumulative fraction)."""
    vals = sorted(v for v in values if not math.isnan(v))
    n = len(vals)
    return [(v, (i + 1) / n) for i, v in enumerate(vals)]


# ---------------------------------------------------------------------------
# File round-trips (plot-ready delimited text).

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_track_dump(path: str | Path, rows: Iterable[TrackRow]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACK_FIELDS)
        for r in rows:
            writer.writerow([
                r.device_id, r.window, _fmt(r.t), r.model, _fmt(r.x), _fmt(r.y),
                _fmt(r.vx), _fmt(r.vy), *[_fmt(c) for c in r.cov_diag],
                r.n_avail, r.n_fresh, _fmt(r.raw_x), _fmt(r.raw_y),
                _fmt(r.raw_estimator), _fmt(r.raw_quality),
            ])


def read_track_dump(path: str | Path) -> list[TrackRow]:
    rows: list[TrackRow] = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACK_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing track columns {sorted(missing)}")
        for rec in reader:
            rows.append(TrackRow(
                device_id=rec["device_id"],
                window=int(rec["window"]),
                t=float(rec["t"]),
                model=int(rec["model"]),
                x=float(rec["x"]), y=float(rec["y"]),
                vx=float(rec["vx"]), vy=float(rec["vy"]),
                cov_diag=(float(rec["cov_xx"]), float(rec["cov_yy"]),
                          float(rec["cov_vx"]), float(rec["cov_vy"])),
                n_avail=int(rec["n_avail"]),
                n_fresh=int(rec["n_fresh"]),
                raw_x=float(rec["raw_x"]) if rec["raw_x"] else None,
                raw_y=float(rec["raw_y"]) if rec["raw_y"] else None,
                raw_estimator=rec["raw_estimator"] or None,
                raw_quality=rec["raw_quality"] or None,
            ))
    return rows


def write_truth(path: str | Path, rows: Iterable[TruthRow]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTH_FIELDS)
        for r in rows:
            writer.writerow([r.run, r.device_id, r.window, _fmt(r.t),
                             _fmt(r.x), _fmt(r.y), r.zone])


def read_truth(path: str | Path) -> list[TruthRow]:
    rows: list[TruthRow] = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRUTH_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing truth columns {sorted(missing)}")
        for rec in reader:
            rows.append(TruthRow(
                run=int(rec["run"]), device_id=rec["device_id"],
                window=int(rec["window"]), t=float(rec["t"]),
                x=float(rec["x"]), y=float(rec["y"]), zone=rec["zone"]))
    return rows


def write_eval_report(out_dir: str | Path, report: EvalReport,
                      max_nodes: int) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with (out / "per_run.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "n_truth_windows", "n_meas_windows",
                         "raw_mean_err_m", "imm_mean_err_m", "raw_rmse_m",
                         "imm_rmse_m", "raw_zone_acc", "imm_zone_acc"])
        for m in report.per_run:
            writer.writerow([m.run, m.n_truth_windows, m.n_meas_windows,
                             _fmt(m.raw_mean_err), _fmt(m.imm_mean_err),
                             _fmt(m.raw_rmse), _fmt(m.imm_rmse),
                             _fmt(m.raw_zone_acc), _fmt(m.imm_zone_acc)])

    with (out / "cdf.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value", "cum_fraction"])
        measured = [m for m in report.per_run if m.n_meas_windows > 0]
        for name, vals in (
                ("raw_mean_err_m", [m.raw_mean_err for m in measured]),
                ("imm_mean_err_m", [m.imm_mean_err for m in measured]),
                ("raw_zone_acc", [m.raw_zone_acc for m in measured]),
                ("imm_zone_acc", [m.imm_zone_acc for m in measured])):
            for value, frac in cdf_points(vals):
                writer.writerow([name, _fmt(value), _fmt(frac)])

    total = sum(report.availability_fresh.values())
    with (out / "availability.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_nodes", "fresh_windows", "fresh_share",
                         "held_windows", "held_share"])
        for n in range(0, max_nodes + 1):
            fresh = report.availability_fresh.get(n, 0)
            held = report.availability_held.get(n, 0)
            writer.writerow([n, fresh, _fmt(fresh / total if total else 0.0),
                             held, _fmt(held / total if total else 0.0)])

    with (out / "summary.json").open("w") as fh:
        json.dump(report.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
