"""Scenario configuration: one JSON file describes a full simulation run.

Every simulation parameter is a named key with its default baked in, so a
minimal scenario file can be empty ("{}") and still reproduce the reference
setup: a 40 m x 90 m floor, seven sniffers, 3 s windows, and a 300 s grace
period.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, asdict
from importlib import resources
from pathlib import Path
from typing import Optional

from .ingest import ReferenceNode
from .occupancy import ZoneMap, zone_map_from_dict
from .simulate import ProbeProcessConfig, SimChannelConfig, TrajectoryConfig
from .tracking import TrackerParams
from .windows import SamplingWindowConfig

DEFAULT_FLOOR = (0.0, 0.0, 40.0, 90.0)


@dataclass
class Scenario:
    name: str = "default"
    floor_bounds: tuple[float, float, float, float] = DEFAULT_FLOOR
    nodes: list[ReferenceNode] = field(default_factory=lambda: default_nodes())
    channel: SimChannelConfig = field(default_factory=SimChannelConfig)
    probe: ProbeProcessConfig = field(default_factory=ProbeProcessConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    window: SamplingWindowConfig = field(default_factory=SamplingWindowConfig)
    zones: dict = field(default_factory=lambda: default_zones_dict())
    runs: int = 200
    devices_per_run: int = 1
    base_seed: int = 1
    grace_s: float = 300.0
    n_min: int = 1
    resolution_s: float = 3600.0
    # Estimation-side channel knowledge; the assumed values default to the
    # generation-side truth (calibrated from ground truth in a deployment).
    est_p0: Optional[float] = None
    est_n: Optional[float] = None
    p0_known: bool = True
    n_known: bool = True
    meas_sigma: float = 4.0
    process_density: float = 0.5
    v_max: float = 3.0
    ema_weight: float = 0.2
    nls_n0: float = 3.0
    nls_p0_bar: float = -40.0

    def zone_map(self) -> ZoneMap:
        return zone_map_from_dict(self.zones)

    def tracker_params(self) -> TrackerParams:
        return TrackerParams(
            window_length_s=self.window.window_length_s,
            meas_sigma=self.meas_sigma,
            process_density=self.process_density,
            v_max=self.v_max,
            n_min=self.n_min,
            grace_s=self.grace_s,
            ema_weight=self.ema_weight,
            nls_n0=self.nls_n0,
            nls_p0_bar=self.nls_p0_bar,
            floor_bounds=self.floor_bounds,
        )

    def assumed_p0(self) -> float:
        return self.channel.p0 if self.est_p0 is None else self.est_p0

    def assumed_n(self) -> float:
        return self.channel.n if self.est_n is None else self.est_n

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "floor_bounds": list(self.floor_bounds),
            "nodes": [
                {"id": n.id, "x_m": n.position[0], "y_m": n.position[1],
                 "coverage_radius_m": n.coverage_radius,
                 "detection_threshold_dbm": n.detection_threshold}
                for n in self.nodes
            ],
            "channel": asdict(self.channel),
            "probe": asdict(self.probe),
            "trajectory": asdict(self.trajectory),
            "window": {"window_length_s": self.window.window_length_s,
                       "hold_windows": self.window.hold_windows},
            "zones": self.zones,
            "runs": self.runs,
            "devices_per_run": self.devices_per_run,
            "base_seed": self.base_seed,
            "grace_s": self.grace_s,
            "n_min": self.n_min,
            "resolution_s": self.resolution_s,
            "estimation": {
                "est_p0": self.est_p0, "est_n": self.est_n,
                "p0_known": self.p0_known, "n_known": self.n_known,
                "meas_sigma": self.meas_sigma,
                "process_density": self.process_density,
                "v_max": self.v_max, "ema_weight": self.ema_weight,
                "nls_n0": self.nls_n0, "nls_p0_bar": self.nls_p0_bar,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        sc = cls()
        if "name" in data:
            sc.name = str(data["name"])
        if "floor_bounds" in data:
            sc.floor_bounds = tuple(float(v) for v in data["floor_bounds"])
        if "nodes" in data:
            sc.nodes = [
                ReferenceNode(str(n["id"]), (float(n["x_m"]), float(n["y_m"])),
                              float(n["coverage_radius_m"]),
                              float(n.get("detection_threshold_dbm", -90.0)))
                for n in data["nodes"]
            ]
        if "channel" in data:
            ch = data["channel"]
            if "intra_burst_gap_s" in ch:
                raise ValueError("probe-process keys found under 'channel'")
            base = asdict(SimChannelConfig())
            base.update(ch)
            for key in ("multipath_taps",):
                base[key] = int(base[key])
            sc.channel = SimChannelConfig(**_tupled(base, ()))
        if "probe" in data:
            base = asdict(ProbeProcessConfig())
            base.update(data["probe"])
            sc.probe = ProbeProcessConfig(**_tupled(base, ("intra_burst_gap_s",)))
        if "trajectory" in data:
            base = asdict(TrajectoryConfig())
            base.update(data["trajectory"])
            cfg = _tupled(base, ("speed_range", "pause_range"))
            if cfg.get("scripted_path") is not None:
                cfg["scripted_path"] = [tuple(map(float, v))
                                        for v in cfg["scripted_path"]]
            sc.trajectory = TrajectoryConfig(**cfg)
        if "window" in data:
            w = data["window"]
            sc.window = SamplingWindowConfig(
                window_length_s=float(w.get("window_length_s", 3.0)),
                hold_windows=int(w.get("hold_windows", 2)))
        if "zones" in data:
            sc.zones = data["zones"]
        for key in ("runs", "devices_per_run", "base_seed", "n_min"):
            if key in data:
                setattr(sc, key, int(data[key]))
        for key in ("grace_s", "resolution_s"):
            if key in data:
                setattr(sc, key, float(data[key]))
        est = data.get("estimation", {})
        for key in ("est_p0", "est_n"):
            if key in est:
                setattr(sc, key, None if est[key] is None else float(est[key]))
        for key in ("p0_known", "n_known"):
            if key in est:
                setattr(sc, key, bool(est[key]))
        for key in ("meas_sigma", "process_density", "v_max", "ema_weight",
                    "nls_n0", "nls_p0_bar"):
            if key in est:
                setattr(sc, key, float(est[key]))
        return sc

    @classmethod
    def from_json(cls, path: str | Path) -> "Scenario":
        with Path(path).open() as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _tupled(cfg: dict, tuple_keys: tuple[str, ...]) -> dict:
    out = dict(cfg)
    for key in tuple_keys:
        if out.get(key) is not None:
            out[key] = tuple(float(v) for v in out[key])
    return out


def default_nodes() -> list[ReferenceNode]:
    """Versioned default deployment: seven sniffers on the 40 x 90 m floor."""
    text = resources.files("probetrack").joinpath("data/default_nodes.csv").read_text()
    reader = csv.DictReader(io.StringIO(text))
    return [
        ReferenceNode(str(row["id"]), (float(row["x_m"]), float(row["y_m"])),
                      float(row["coverage_radius_m"]),
                      float(row["detection_threshold_dbm"]))
        for row in reader
    ]


def default_zones_dict() -> dict:
    text = resources.files("probetrack").joinpath("data/default_zones.json").read_text()
    return json.loads(text)
