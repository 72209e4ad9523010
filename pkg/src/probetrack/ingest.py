"""Probe-request log ingest: record parsing, device-id hashing, reference nodes."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Optional, Sequence

LOG_FIELDS = ("timestamp_s", "sniffer_id", "mac_or_hash", "rss_dbm")
NODE_FIELDS = ("id", "x_m", "y_m", "coverage_radius_m", "detection_threshold_dbm")

# Raw MAC addresses get hashed at ingest; anything else is treated as an
# already-opaque device key and passed through.
_MAC_RE = re.compile(r"^[0-9A-Fa-f]{2}([:-][0-9A-Fa-f]{2}){5}$")
DEFAULT_SALT = "probetrack"


@dataclass(frozen=True)
class ProbeRecord:
    """One sniffed probe request."""

    timestamp: float  # unix epoch seconds, fractional
    sniffer_id: str
    device_id: str  # opaque device key (hashed MAC)
    rss: float  # dBm


@dataclass(frozen=True)
class ReferenceNode:
    """A deployed sniffer at a known position."""

    id: str
    position: tuple[float, float]  # meters
    coverage_radius: float  # meters
    detection_threshold: float = -90.0  # dBm

    def __post_init__(self):
        if not (self.coverage_radius > 0):
            raise ValueError(f"node {self.id}: coverage_radius must be > 0")
        if not all(math.isfinite(c) for c in self.position):
            raise ValueError(f"node {self.id}: non-finite position")


@dataclass
class IngestDiagnostics:
    """Counters for records rejected or dropped during ingest."""

    parsed: int = 0
    rejected_nonfinite: int = 0
    rejected_malformed: int = 0
    rejected_unknown_sniffer: int = 0
    rejected_below_threshold: int = 0
    dropped_late: int = 0
    device_classes: dict = field(default_factory=dict)

    @property
    def total_rejected(self) -> int:
        return (self.rejected_nonfinite + self.rejected_malformed
                + self.rejected_unknown_sniffer + self.rejected_below_threshold)

    def as_dict(self) -> dict:
        return asdict(self)


def hash_device_id(raw: str, salt: str = DEFAULT_SALT) -> str:
    """Salted one-way hash for raw MAC addresses; opaque ids pass through."""
    if _MAC_RE.match(raw):
        digest = hashlib.sha256(f"{salt}:{raw.lower()}".encode()).hexdigest()
        return digest[:16]
    return raw


def _make_record(ts, sniffer, dev, rss, salt, nodes_by_id, diag):
    try:
        t = float(ts)
        r = float(rss)
    except (TypeError, ValueError):
        diag.rejected_malformed += 1
        return None
    if not (math.isfinite(t) and math.isfinite(r)):
        diag.rejected_nonfinite += 1
        return None
    sniffer = str(sniffer)
    if nodes_by_id is not None:
        node = nodes_by_id.get(sniffer)
        if node is None:
            diag.rejected_unknown_sniffer += 1
            return None
        if r < node.detection_threshold:
            diag.rejected_below_threshold += 1
            return None
    return ProbeRecord(t, sniffer, hash_device_id(str(dev), salt), r)


def parse_probe_log(
    path: str | Path,
    nodes: Optional[Sequence[ReferenceNode]] = None,
    salt: str = DEFAULT_SALT,
    diagnostics: Optional[IngestDiagnostics] = None,
) -> tuple[list[ProbeRecord], IngestDiagnostics]:
    """Parse a probe log (CSV with header, or line-JSON).

    Records with non-finite fields, unknown sniffers, or sub-threshold RSS are
    dropped and counted in the returned diagnostics.
    """
    diag = diagnostics if diagnostics is not None else IngestDiagnostics()
    path = Path(path)
    records: list[ProbeRecord] = []
    with path.open(newline="") as fh:
        first = fh.readline()
        fh.seek(0)
        nodes_by_id = {n.id: n for n in nodes} if nodes is not None else None
        if first.lstrip().startswith("{"):
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    rec = _make_record(
                        obj["timestamp_s"], obj["sniffer_id"], obj["mac_or_hash"],
                        obj["rss_dbm"], salt, nodes_by_id, diag)
                except (json.JSONDecodeError, KeyError):
                    diag.rejected_malformed += 1
                    continue
                if rec is not None:
                    records.append(rec)
                    diag.parsed += 1
        else:
            reader = csv.DictReader(fh)
            missing = set(LOG_FIELDS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(
                    f"{path}: missing required log columns {sorted(missing)}")
            for row in reader:
                rec = _make_record(
                    row.get("timestamp_s"), row.get("sniffer_id"),
                    row.get("mac_or_hash"), row.get("rss_dbm"),
                    salt, nodes_by_id, diag)
                if rec is not None:
                    records.append(rec)
                    diag.parsed += 1
    return records, diag


def write_probe_log(path: str | Path, records: Iterable[ProbeRecord]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_FIELDS)
        for rec in records:
            writer.writerow([repr(rec.timestamp), rec.sniffer_id,
                             rec.device_id, repr(rec.rss)])


def load_nodes(path: str | Path) -> list[ReferenceNode]:
    """Load the reference-node table (CSV with header)."""
    path = Path(path)
    nodes: list[ReferenceNode] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(NODE_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing node columns {sorted(missing)}")
        for row in reader:
            nodes.append(ReferenceNode(
                id=str(row["id"]),
                position=(float(row["x_m"]), float(row["y_m"])),
                coverage_radius=float(row["coverage_radius_m"]),
                detection_threshold=float(row["detection_threshold_dbm"]),
            ))
    if len({n.id for n in nodes}) != len(nodes):
        raise ValueError(f"{path}: duplicate node ids")
    return nodes


def write_nodes(path: str | Path, nodes: Iterable[ReferenceNode]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(NODE_FIELDS)
        for n in nodes:
            writer.writerow([n.id, repr(n.position[0]), repr(n.position[1]),
                             repr(n.coverage_radius), repr(n.detection_threshold)])
