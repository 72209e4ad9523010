"""End-to-end composition: simulate, track, count, evaluate.

Thin glue shared by the command-line interface and the Monte Carlo harness so
the same code path produces files on disk and in-memory metrics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import classify, metrics, simulate
from .ingest import IngestDiagnostics, ProbeRecord, ReferenceNode
from .localization import ChannelParams
from .occupancy import ZoneMap
from .scenario import Scenario
from .tracking import TrackRow, TrackerParams, run_device_track
from .windows import SamplingWindowConfig, build_device_windows

logger = logging.getLogger(__name__)


def simulate_scenario(
    sc: Scenario,
    runs: Optional[int] = None,
) -> tuple[list[ProbeRecord], list[simulate.TruthRow]]:
    """All Monte Carlo runs of a scenario: probe records plus ground truth
    sampled at window centers. Deterministic under (base_seed, run index)."""
    zone_map = sc.zone_map()
    n_runs = sc.runs if runs is None else runs
    window_s = sc.window.window_length_s
    records: list[ProbeRecord] = []
    truth: list[simulate.TruthRow] = []
    for run in range(n_runs):
        rng = np.random.default_rng(simulate.run_seed(sc.base_seed, run))
        for dev_idx in range(sc.devices_per_run):
            device_id, traj, recs = simulate.simulate_device(
                run, dev_idx, sc.floor_bounds, sc.nodes, sc.channel, sc.probe,
                sc.trajectory, window_s, rng)
            records.extend(recs)
            for k, x, y in traj.window_positions(window_s):
                truth.append(simulate.TruthRow(
                    run, device_id, k, (k + 0.5) * window_s, x, y,
                    zone_map.zone_of((x, y))))
    records.sort(key=lambda r: (r.timestamp, r.device_id, r.sniffer_id))
    return records, truth


def track_records(
    records: Sequence[ProbeRecord],
    nodes: Sequence[ReferenceNode],
    channel: ChannelParams,
    window_cfg: SamplingWindowConfig,
    params: TrackerParams,
    t0: float = 0.0,
    filter_devices: bool = True,
    diagnostics: Optional[IngestDiagnostics] = None,
) -> tuple[list[TrackRow], IngestDiagnostics]:
    """Measurement pipeline plus per-device tracking over a batch of records."""
    diag = diagnostics if diagnostics is not None else IngestDiagnostics()
    kept = list(records)
    if filter_devices and kept:
        kept, class_counts = classify.split_devices(kept)
        diag.device_classes = class_counts
    per_device = build_device_windows(kept, window_cfg, t0, diag)
    rows: list[TrackRow] = []
    for device_id in sorted(per_device):
        rows.extend(run_device_track(
            device_id, per_device[device_id], nodes, channel, params, t0))
    return rows, diag


def scenario_channel_params(sc: Scenario) -> ChannelParams:
    return ChannelParams(
        p0=sc.assumed_p0(), n=sc.assumed_n(), d0=sc.channel.d0,
        p0_known=sc.p0_known, n_known=sc.n_known)


def run_monte_carlo(
    sc: Scenario,
    runs: Optional[int] = None,
) -> tuple[metrics.EvalReport, list[TrackRow], list[simulate.TruthRow]]:
    """Simulate, track, and evaluate a scenario in memory."""
    records, truth = simulate_scenario(sc, runs)
    rows, _ = track_records(
        records, sc.nodes, scenario_channel_params(sc), sc.window,
        sc.tracker_params(), filter_devices=False)
    report = metrics.evaluate(truth, rows, sc.zone_map())
    return report, rows, truth
