"""Trajectory, probe-emission, and RSS observation simulator.

Walkers move by random waypoint (or replay a scripted path), emit probe
requests in bursts separated by long idle gaps, and each emission is observed
at every reference node through a log-distance channel with Gaussian
shadowing, an optional multipath perturbation, and an RSS-margin detection
probability. Everything is deterministic under the run seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ingest import ProbeRecord, ReferenceNode


@dataclass(frozen=True)
class SimChannelConfig:
    """Propagation and detection parameters (Table-style defaults)."""

    p0: float = -35.0  # dBm at the reference distance
    n: float = 3.0  # path-loss exponent
    d0: float = 1.0  # meters
    shadowing_sigma: float = 6.0  # dB
    noise_floor: float = -90.0  # dBm
    detection_threshold: float = -90.0  # dBm
    multipath: bool = False
    multipath_taps: int = 3
    multipath_decay: float = 1.0  # per-tap power decay exponent
    detection_offset_db: float = 3.0  # logistic midpoint above threshold
    detection_scale_db: float = 2.0

    def __post_init__(self):
        if self.shadowing_sigma < 0:
            raise ValueError("shadowing_sigma must be >= 0")
        if self.detection_threshold < self.noise_floor:
            raise ValueError("detection_threshold must be >= noise_floor")


@dataclass(frozen=True)
class ProbeProcessConfig:
    """Burst/idle renewal process for probe emissions."""

    burst_size_poisson_mean: float = 3.0  # size = 1 + Poisson(mean), capped
    burst_size_cap: int = 10
    intra_burst_gap_s: tuple[float, float] = (0.02, 0.3)  # uniform
    inter_burst_median_s: float = 45.0  # lognormal median
    inter_burst_sigma: float = 1.0  # lognormal shape
    inter_burst_cap_s: float = 600.0


@dataclass(frozen=True)
class TrajectoryConfig:
    model: str = "random_waypoint"  # or "scripted"
    duration_s: float = 600.0
    speed_range: tuple[float, float] = (0.5, 1.5)  # m/s
    pause_range: tuple[float, float] = (0.0, 5.0)  # s at each waypoint
    scripted_path: Optional[list[tuple[float, float]]] = None
    scripted_speed: float = 1.0


@dataclass
class Trajectory:
    """Piecewise-linear path; segments are (t0, t1, p0, p1) with p0 == p1
    during pauses."""

    segments: list[tuple[float, float, tuple[float, float], tuple[float, float]]]
    duration_s: float

    def position(self, t: float) -> tuple[float, float]:
        t = min(max(t, 0.0), self.duration_s)
        for t0, t1, p0, p1 in self.segments:
            if t <= t1:
                if t1 == t0:
                    return p0
                u = (t - t0) / (t1 - t0)
                return (p0[0] + u * (p1[0] - p0[0]), p0[1] + u * (p1[1] - p0[1]))
        return self.segments[-1][3]

    def window_positions(self, window_s: float) -> list[tuple[int, float, float]]:
        """True position per window, sampled at window centers."""
        n = int(self.duration_s / window_s)
        return [(k, *self.position((k + 0.5) * window_s)) for k in range(n)]


def gen_trajectory(
    cfg: TrajectoryConfig,
    floor_bounds: tuple[float, float, float, float],
    rng: np.random.Generator,
) -> Trajectory:
    x0, y0, x1, y1 = floor_bounds
    segments = []
    if cfg.model == "scripted":
        if not cfg.scripted_path or len(cfg.scripted_path) < 2:
            raise ValueError("scripted trajectory needs >= 2 vertices")
        verts = [tuple(map(float, v)) for v in cfg.scripted_path]
        t = 0.0
        pos = verts[0]
        i = 1
        while t < cfg.duration_s:
            nxt = verts[i % len(verts)]
            dist = math.hypot(nxt[0] - pos[0], nxt[1] - pos[1])
            if dist == 0.0:
                i += 1
                continue
            t_end = t + dist / cfg.scripted_speed
            segments.append((t, t_end, pos, nxt))
            t, pos = t_end, nxt
            i += 1
        return Trajectory(segments, cfg.duration_s)

    if cfg.model != "random_waypoint":
        raise ValueError(f"unknown trajectory model {cfg.model!r}")
    pos = (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))
    t = 0.0
    while t < cfg.duration_s:
        target = (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))
        speed = float(rng.uniform(*cfg.speed_range))
        dist = math.hypot(target[0] - pos[0], target[1] - pos[1])
        if dist > 0.0:
            t_end = t + dist / speed
            segments.append((t, t_end, pos, target))
            t, pos = t_end, target
        pause = float(rng.uniform(*cfg.pause_range))
        if pause > 0.0:
            segments.append((t, t + pause, pos, pos))
            t += pause
    if not segments:
        segments.append((0.0, cfg.duration_s, pos, pos))
    return Trajectory(segments, cfg.duration_s)


def gen_probes(
    duration_s: float,
    cfg: ProbeProcessConfig,
    rng: np.random.Generator,
) -> list[float]:
    """Emission times of a burst/idle renewal process over [0, duration)."""
    if duration_s <= 0:
        return []
    times: list[float] = []
    mu = math.log(cfg.inter_burst_median_s)
    # First burst lands inside a typical idle gap rather than always at t=0.
    t = float(rng.uniform(0.0, cfg.inter_burst_median_s))
    while t < duration_s:
        size = 1 + int(rng.poisson(cfg.burst_size_poisson_mean))
        size = min(size, cfg.burst_size_cap)
        emit = t
        for i in range(size):
            if emit >= duration_s:
                break
            times.append(emit)
            if i < size - 1:
                emit += float(rng.uniform(*cfg.intra_burst_gap_s))
        gap = float(rng.lognormal(mu, cfg.inter_burst_sigma))
        gap = min(gap, cfg.inter_burst_cap_s)
        t = emit + gap
    return times


def detection_prob(rss: float, threshold: float, offset_db: float,
                   scale_db: float) -> float:
    """Logistic in the RSS margin above the detection threshold."""
    return 1.0 / (1.0 + math.exp(-((rss - threshold) - offset_db) / scale_db))


def _multipath_db(ch: SimChannelConfig, rng: np.random.Generator) -> float:
    # Tap powers decay exponentially and are normalized to unit mean power;
    # random complex tap gains are summed in linear power, then taken to dB.
    k = np.arange(ch.multipath_taps)
    powers = np.exp(-ch.multipath_decay * k)
    powers /= powers.sum()
    re = rng.standard_normal(ch.multipath_taps)
    im = rng.standard_normal(ch.multipath_taps)
    gains = np.sqrt(powers / 2.0) * (re + 1j * im)
    lin = abs(np.sum(gains)) ** 2
    return 10.0 * math.log10(max(lin, 1e-12))


def observe(
    t: float,
    position: tuple[float, float],
    device_id: str,
    nodes: Sequence[ReferenceNode],
    ch: SimChannelConfig,
    rng: np.random.Generator,
) -> list[ProbeRecord]:
    """Per-node RSS draw for one emission; a record is produced only when the
    RSS clears the node threshold and a Bernoulli detection draw succeeds."""
    records = []
    for node in nodes:
        d = math.hypot(position[0] - node.position[0],
                       position[1] - node.position[1])
        d = max(d, ch.d0)
        rss = ch.p0 - 10.0 * ch.n * math.log10(d / ch.d0)
        if ch.shadowing_sigma > 0:
            rss += float(rng.normal(0.0, ch.shadowing_sigma))
        if ch.multipath:
            rss += _multipath_db(ch, rng)
        if rss < node.detection_threshold:
            continue
        p = detection_prob(rss, node.detection_threshold,
                           ch.detection_offset_db, ch.detection_scale_db)
        if float(rng.uniform()) < p:
            records.append(ProbeRecord(t, node.id, device_id, rss))
    return records


@dataclass(frozen=True)
class TruthRow:
    run: int
    device_id: str
    window: int
    t: float
    x: float
    y: float
    zone: str


def run_seed(base_seed: int, run: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(run,))


def simulate_device(
    run: int,
    device_index: int,
    floor_bounds: tuple[float, float, float, float],
    nodes: Sequence[ReferenceNode],
    channel: SimChannelConfig,
    probe_cfg: ProbeProcessConfig,
    traj_cfg: TrajectoryConfig,
    window_s: float,
    rng: np.random.Generator,
) -> tuple[str, Trajectory, list[ProbeRecord]]:
    device_id = f"r{run:03d}-d{device_index:02d}"
    traj = gen_trajectory(traj_cfg, floor_bounds, rng)
    emissions = gen_probes(traj_cfg.duration_s, probe_cfg, rng)
    records: list[ProbeRecord] = []
    for t in emissions:
        records.extend(observe(t, traj.position(t), device_id, nodes, channel, rng))
    return device_id, traj, records
