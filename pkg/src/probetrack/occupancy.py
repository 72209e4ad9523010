"""Zone mapping and per-zone occupancy counting with a silence grace period.

Filtered positions map to building zones by point-in-polygon lookup; a device
stays counted in its last zone until it has been silent longer than the grace
period (devices routinely stop probing for minutes with the screen off).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

DEFAULT_GRACE_S = 300.0
DWELL_BIN_HOURS = 1.0
DWELL_MAX_BIN = 12  # final bin is open-ended ("12+")
_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class Zone:
    zone_id: str
    polygon: np.ndarray  # (k, 2) vertices, meters

    def __post_init__(self):
        if self.polygon.shape[0] < 3:
            raise ValueError(f"zone {self.zone_id}: polygon needs >= 3 vertices")


@dataclass
class ZoneMapDiagnostics:
    out_of_zone: int = 0
    time_regressions: int = 0


class ZoneMapError(ValueError):
    """Zone map failed validation (overlaps, bad polygons, bounds)."""


def _point_on_segment(px, py, ax, ay, bx, by) -> bool:
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    seg2 = (bx - ax) ** 2 + (by - ay) ** 2
    if cross * cross > _EDGE_EPS * max(seg2, _EDGE_EPS):
        return False
    dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay)
    return -_EDGE_EPS <= dot <= seg2 + _EDGE_EPS


def point_in_polygon(point: tuple[float, float], polygon: np.ndarray) -> bool:
    """Ray casting with an explicit boundary check (boundary counts as inside,
    so the caller's index-order scan gives a deterministic tie-break)."""
    px, py = point
    n = polygon.shape[0]
    inside = False
    j = n - 1
    for i in range(n):
        ax, ay = polygon[i]
        bx, by = polygon[j]
        if _point_on_segment(px, py, ax, ay, bx, by):
            return True
        if (ay > py) != (by > py):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < x_cross:
                inside = not inside
        j = i
    return inside


class ZoneMap:
    """Ordered zone list over a rectangular floor."""

    def __init__(self, zones: Sequence[Zone],
                 floor_bounds: tuple[float, float, float, float]):
        self.zones = list(zones)
        self.floor_bounds = floor_bounds
        self.diagnostics = ZoneMapDiagnostics()
        self._centroids = [np.mean(z.polygon, axis=0) for z in self.zones]

    def clamp(self, position: tuple[float, float]) -> tuple[float, float]:
        x0, y0, x1, y1 = self.floor_bounds
        return (min(max(position[0], x0), x1), min(max(position[1], y0), y1))

    def zone_of(self, position: tuple[float, float]) -> str:
        """Lowest-indexed containing zone; points in no zone (coverage gaps)
        fall back to the nearest zone centroid with a counted diagnostic."""
        pos = self.clamp(position)
        for z in self.zones:
            if point_in_polygon(pos, z.polygon):
                return z.zone_id
        self.diagnostics.out_of_zone += 1
        dists = [float(np.hypot(pos[0] - c[0], pos[1] - c[1]))
                 for c in self._centroids]
        return self.zones[int(np.argmin(dists))].zone_id

    def zone_ids(self) -> list[str]:
        return [z.zone_id for z in self.zones]


def load_zone_map(path: str | Path) -> ZoneMap:
    with Path(path).open() as fh:
        data = json.load(fh)
    return zone_map_from_dict(data)


def zone_map_from_dict(data: dict) -> ZoneMap:
    bounds = tuple(float(v) for v in data["floor_bounds"])
    if len(bounds) != 4 or bounds[2] <= bounds[0] or bounds[3] <= bounds[1]:
        raise ZoneMapError("floor_bounds must be [x0, y0, x1, y1] with x1>x0, y1>y0")
    zones = [Zone(str(z["id"]), np.asarray(z["polygon"], dtype=float))
             for z in data["zones"]]
    if len({z.zone_id for z in zones}) != len(zones):
        raise ZoneMapError("duplicate zone ids")
    validate_zone_map(zones, bounds)
    return ZoneMap(zones, bounds)


def validate_zone_map(zones: Sequence[Zone],
                      bounds: tuple[float, float, float, float],
                      area_tol: float = 1e-3) -> list[str]:
    """Startup validation: simple polygons, pairwise interior-disjoint,
    union covering the floor within 0.1% of its area. Overlap is a hard
    error; coverage gaps only warn (zone_of falls back to nearest)."""
    from shapely.geometry import Polygon, box
    from shapely.ops import unary_union

    polys = []
    for z in zones:
        poly = Polygon(z.polygon)
        if not poly.is_valid or poly.area <= 0:
            raise ZoneMapError(f"zone {z.zone_id}: polygon is not simple")
        polys.append((z.zone_id, poly))
    floor = box(*bounds)
    floor_area = floor.area
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            overlap = polys[i][1].intersection(polys[j][1]).area
            if overlap > area_tol * floor_area:
                raise ZoneMapError(
                    f"zones {polys[i][0]} and {polys[j][0]} overlap "
                    f"({overlap:.2f} m^2)")
    warnings = []
    covered = unary_union([p for _, p in polys]).intersection(floor).area
    gap = floor_area - covered
    if gap > area_tol * floor_area:
        warnings.append(
            f"zone map leaves {gap:.2f} m^2 of the floor uncovered; "
            "points there map to the nearest zone")
    return warnings


@dataclass(frozen=True)
class OccupancySnapshot:
    timestamp: float
    counts: dict[str, int]
    total: int


@dataclass
class PresenceState:
    device_id: str
    current_zone: str
    last_seen: float
    first_seen: float


class PresenceTable:
    """Single-writer presence tracking; active iff now - last_seen <= grace."""

    def __init__(self, zone_map: ZoneMap, grace_s: float = DEFAULT_GRACE_S):
        self.zone_map = zone_map
        self.grace_s = grace_s
        self._presence: dict[str, PresenceState] = {}
        self._dwell_runs: dict[str, list[tuple[float, float]]] = {}
        self.diagnostics = ZoneMapDiagnostics()

    def update(self, device_id: str, zone: str, t: float) -> Optional[PresenceState]:
        state = self._presence.get(device_id)
        if state is not None and t < state.last_seen:
            self.diagnostics.time_regressions += 1
            return None
        if state is None or t - state.last_seen > self.grace_s:
            state = PresenceState(device_id, zone, t, t)
            self._presence[device_id] = state
            self._dwell_runs.setdefault(device_id, []).append((t, t))
        else:
            state.current_zone = zone
            state.last_seen = t
            runs = self._dwell_runs[device_id]
            runs[-1] = (runs[-1][0], t)
        return state

    def is_active(self, device_id: str, t: float) -> bool:
        st = self._presence.get(device_id)
        return (st is not None and st.first_seen <= t
                and t - st.last_seen <= self.grace_s)

    def snapshot(self, t: float) -> OccupancySnapshot:
        counts = {zid: 0 for zid in self.zone_map.zone_ids()}
        for dev, st in self._presence.items():
            if st.first_seen <= t and t - st.last_seen <= self.grace_s:
                counts[st.current_zone] += 1
        return OccupancySnapshot(t, counts, sum(counts.values()))

    def dwell_seconds(self) -> dict[str, float]:
        """Total presence per device: each observation run contributes its span
        plus one grace period (a single sighting counts exactly the grace)."""
        return {dev: sum((end - start) + self.grace_s for start, end in runs)
                for dev, runs in self._dwell_runs.items()}


def occupancy_series(
    observations: Iterable[tuple[float, str, float, float]],
    zone_map: ZoneMap,
    resolution_s: float,
    grace_s: float = DEFAULT_GRACE_S,
    span: Optional[tuple[float, float]] = None,
) -> tuple[list[OccupancySnapshot], dict[str, float]]:
    """Snapshots at fixed resolution plus per-device dwell durations.

    ``observations`` are (t, device_id, x, y) tuples; they are merged in time
    order before feeding the single-writer presence table. Snapshots are taken
    at the end of each resolution interval over the observation span.
    """
    obs = sorted(observations, key=lambda o: (o[0], o[1]))
    table = PresenceTable(zone_map, grace_s)
    if span is None:
        if not obs:
            return [], {}
        span = (obs[0][0], obs[-1][0])
    t_start, t_end = span
    n_snaps = max(0, math.floor((t_end - t_start) / resolution_s + 1e-9))
    snap_times = [t_start + (i + 1) * resolution_s for i in range(n_snaps)]

    snapshots: list[OccupancySnapshot] = []
    idx = 0
    for st in snap_times:
        while idx < len(obs) and obs[idx][0] <= st:
            t, dev, x, y = obs[idx]
            table.update(dev, zone_map.zone_of((x, y)), t)
            idx += 1
        snapshots.append(table.snapshot(st))
    while idx < len(obs):
        t, dev, x, y = obs[idx]
        table.update(dev, zone_map.zone_of((x, y)), t)
        idx += 1
    return snapshots, table.dwell_seconds()


def dwell_histogram(dwell_seconds: dict[str, float]) -> list[tuple[str, float]]:
    """(bin label, percentage) rows with 1-hour bins, final bin open-ended."""
    labels = [f"{h} to {h + 1} hours" for h in range(DWELL_MAX_BIN)]
    labels.append(f"{DWELL_MAX_BIN}+ hours")
    counts = [0] * (DWELL_MAX_BIN + 1)
    for seconds in dwell_seconds.values():
        h = int(seconds / 3600.0 / DWELL_BIN_HOURS)
        counts[min(h, DWELL_MAX_BIN)] += 1
    total = sum(counts)
    if total == 0:
        return [(label, 0.0) for label in labels]
    return [(label, 100.0 * c / total) for label, c in zip(labels, counts)]


def write_occupancy_csv(path: str | Path, snapshots: Sequence[OccupancySnapshot],
                        zone_ids: Sequence[str]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_s", *zone_ids, "total"])
        for snap in snapshots:
            writer.writerow([repr(snap.timestamp),
                             *[snap.counts.get(z, 0) for z in zone_ids],
                             snap.total])


def write_dwell_csv(path: str | Path, hist: Sequence[tuple[str, float]]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin", "percentage"])
        for label, pct in hist:
            writer.writerow([label, repr(pct)])
