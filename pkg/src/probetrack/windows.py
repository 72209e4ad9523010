"""Sampling windows: RSS aggregation into per-window representative values.

Raw probe records are binned into fixed-length windows, each (device, sniffer,
window) burst is reduced to its median RSS, and a sample-and-hold stage repeats
the last fresh value for up to a configurable number of empty windows before
the sniffer drops out of the available set.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .ingest import IngestDiagnostics, ProbeRecord


@dataclass(frozen=True)
class SamplingWindowConfig:
    """Window length T (seconds) and hold length L (windows)."""

    window_length_s: float = 3.0
    hold_windows: int = 2

    def __post_init__(self):
        if not (self.window_length_s > 0):
            raise ValueError("window_length_s must be > 0")
        if self.hold_windows < 0 or int(self.hold_windows) != self.hold_windows:
            raise ValueError("hold_windows must be a non-negative integer")

    def window_of(self, t: float, t0: float) -> int:
        return math.floor((t - t0) / self.window_length_s)


@dataclass(frozen=True)
class MeasurementEntry:
    sniffer_id: str
    rss: float  # dBm, representative (median) value
    hold_age: int  # windows since the last fresh sample; 0 = fresh


@dataclass(frozen=True)
class WindowedMeasurement:
    """Available representative RSS set for one device in one window."""

    device_id: str
    window: int
    entries: tuple[MeasurementEntry, ...]

    @property
    def n_available(self) -> int:
        return len(self.entries)

    @property
    def n_fresh(self) -> int:
        return sum(1 for e in self.entries if e.hold_age == 0)

    def strongest(self, k: int = 1) -> list[MeasurementEntry]:
        return sorted(self.entries, key=lambda e: (-e.rss, e.sniffer_id))[:k]


def assign_windows(
    records: Iterable[ProbeRecord],
    cfg: SamplingWindowConfig,
    t0: float,
    diagnostics: Optional[IngestDiagnostics] = None,
) -> tuple[dict[int, dict[tuple[str, str], list[float]]], IngestDiagnostics]:
    """Bin records into windows: k = floor((t - t0) / T), half-open intervals.

    Returns {window -> {(device_id, sniffer_id) -> [rss, ...]}}. Records with a
    non-finite timestamp are rejected and counted; nothing else is dropped or
    duplicated.
    """
    diag = diagnostics if diagnostics is not None else IngestDiagnostics()
    out: dict[int, dict[tuple[str, str], list[float]]] = defaultdict(
        lambda: defaultdict(list))
    for rec in records:
        if not math.isfinite(rec.timestamp):
            diag.rejected_nonfinite += 1
            continue
        k = cfg.window_of(rec.timestamp, t0)
        out[k][(rec.device_id, rec.sniffer_id)].append(rec.rss)
    return {k: dict(v) for k, v in out.items()}, diag


def representative_rss(samples: Sequence[float]) -> Optional[float]:
    """Median RSS of a window's burst; even counts average the two middle values.

    Empty input is the no-measurement signal and returns None.
    """
    if len(samples) == 0:
        return None
    arr = np.asarray(samples, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite RSS sample")
    return float(np.median(arr))


def apply_sample_and_hold(
    fresh: dict[int, float],
    hold_windows: int,
) -> dict[int, tuple[float, int]]:
    """Expand per-window fresh values with sample-and-hold.

    ``fresh`` maps window index -> fresh representative RSS. A gap of up to
    ``hold_windows`` after a fresh sample repeats that value with increasing
    hold age; beyond the hold length the sniffer is absent. Returns
    {window -> (rss, hold_age)}.
    """
    if not fresh:
        return {}
    out: dict[int, tuple[float, int]] = {}
    ks = sorted(fresh)
    for idx, k in enumerate(ks):
        value = fresh[k]
        out[k] = (value, 0)
        next_fresh = ks[idx + 1] if idx + 1 < len(ks) else None
        for age in range(1, hold_windows + 1):
            held_k = k + age
            if next_fresh is not None and held_k >= next_fresh:
                break
            out[held_k] = (value, age)
    return out


def build_device_windows(
    records: Sequence[ProbeRecord],
    cfg: SamplingWindowConfig,
    t0: float,
    diagnostics: Optional[IngestDiagnostics] = None,
) -> dict[str, list[WindowedMeasurement]]:
    """Full pipeline for a batch of records: windows, medians, sample-and-hold.

    Returns per-device lists of nonempty WindowedMeasurements ordered by
    window index. Per-device state is independent, so callers may shard by
    device id.
    """
    binned, diag = assign_windows(records, cfg, t0, diagnostics)

    # (device, sniffer) -> {window -> fresh median}
    fresh: dict[str, dict[str, dict[int, float]]] = defaultdict(
        lambda: defaultdict(dict))
    for k, groups in binned.items():
        for (dev, sniffer), samples in groups.items():
            rep = representative_rss(samples)
            if rep is not None:
                fresh[dev][sniffer][k] = rep

    result: dict[str, list[WindowedMeasurement]] = {}
    for dev in sorted(fresh):
        per_window: dict[int, list[MeasurementEntry]] = defaultdict(list)
        for sniffer in sorted(fresh[dev]):
            held = apply_sample_and_hold(fresh[dev][sniffer], cfg.hold_windows)
            for k, (rss, age) in held.items():
                per_window[k].append(MeasurementEntry(sniffer, rss, age))
        result[dev] = [
            WindowedMeasurement(dev, k, tuple(per_window[k]))
            for k in sorted(per_window)
        ]
    return result
