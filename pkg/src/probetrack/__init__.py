"""probetrack: zone-level occupancy counting from sniffed WiFi probe requests.

Pipeline: probe log -> sampling windows with median RSS and sample-and-hold ->
availability-adaptive localization -> IMM Kalman tracking -> zone mapping and
occupancy counts. A simulator and Monte Carlo harness cover evaluation.
"""

from .ingest import ProbeRecord, ReferenceNode
from .windows import (MeasurementEntry, SamplingWindowConfig,
                      WindowedMeasurement)
from .localization import ChannelParams, PositionEstimate
from .tracking import ModelBank, TrackRow, TrackState, TrackerParams
from .occupancy import OccupancySnapshot, ZoneMap
from .scenario import Scenario

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "MeasurementEntry", "ModelBank", "OccupancySnapshot",
    "PositionEstimate", "ProbeRecord", "ReferenceNode", "SamplingWindowConfig",
    "Scenario", "TrackRow", "TrackState", "TrackerParams",
    "WindowedMeasurement", "ZoneMap", "__version__",
]
