"""Per-device Kalman tracking over sampling windows.

A constant-velocity (Wiener process velocity) state-space model is shared by
three measurement models selected per window from the number of available
sniffers: one node steers the range along the predicted bearing, two nodes
average the line estimate with the prediction, three or more feed the LLS/NLS
estimate directly. Model probabilities are binary and deterministic, so the
interaction step reduces to hard selection and all models share one state
stream. Measurement noise shrinks as availability grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import localization as loc
from .ingest import ReferenceNode
from .windows import WindowedMeasurement

COAST = 0  # model tag for windows with no usable measurement


@dataclass(frozen=True)
class ModelBank:
    """Shared state-space matrices plus per-model measurement covariance."""

    dt: float
    a: np.ndarray  # 4x4 transition
    h: np.ndarray  # 2x4 position measurement
    q: np.ndarray  # 4x4 process noise
    r_by_model: tuple[np.ndarray, np.ndarray, np.ndarray]  # j = 1, 2, 3
    meas_sigma: float

    def r(self, j: int) -> np.ndarray:
        return self.r_by_model[j - 1]


def make_model_bank(dt: float, meas_sigma: float = 4.0,
                    process_density: float = 0.5) -> ModelBank:
    """Wiener-velocity discretization with spectral density ``process_density``
    (m^2/s^3); R_j = diag(sigma_M^2 / c_j) with c = (1, 2, 4)."""
    a = np.array([
        [1.0, 0.0, dt, 0.0],
        [0.0, 1.0, 0.0, dt],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    h = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
    ])
    qs = process_density
    q = qs * np.array([
        [dt ** 3 / 3.0, 0.0, dt ** 2 / 2.0, 0.0],
        [0.0, dt ** 3 / 3.0, 0.0, dt ** 2 / 2.0],
        [dt ** 2 / 2.0, 0.0, dt, 0.0],
        [0.0, dt ** 2 / 2.0, 0.0, dt],
    ])
    var = meas_sigma ** 2
    r_by_model = tuple(np.diag([var / c, var / c]) for c in (1.0, 2.0, 4.0))
    return ModelBank(dt, a, h, q, r_by_model, meas_sigma)


@dataclass
class TrackState:
    device_id: str
    mean: np.ndarray  # (x, y, vx, vy)
    cov: np.ndarray  # 4x4, kept symmetric PSD
    model_index: int  # j of the last update (0 while coasting)
    last_fresh_window: int  # last window with an accepted measurement

    @property
    def position(self) -> tuple[float, float]:
        return (float(self.mean[0]), float(self.mean[1]))


@dataclass(frozen=True)
class KalmanStep:
    mean_pred: np.ndarray
    cov_pred: np.ndarray
    innovation: np.ndarray
    innovation_cov: np.ndarray
    gain: np.ndarray
    mean: np.ndarray
    cov: np.ndarray


def predict(mean: np.ndarray, cov: np.ndarray,
            bank: ModelBank) -> tuple[np.ndarray, np.ndarray]:
    mean_pred = bank.a @ mean
    cov_pred = bank.a @ cov @ bank.a.T + bank.q
    return mean_pred, cov_pred


def update(mean_pred: np.ndarray, cov_pred: np.ndarray, bank: ModelBank,
           j: int, y: Sequence[float]) -> Optional[KalmanStep]:
    """Standard update with the model-j measurement covariance.

    Returns None when the innovation covariance is not invertible (the caller
    keeps the prediction and counts a diagnostic).
    """
    y = np.asarray(y, dtype=float)
    h = bank.h
    innovation = y - h @ mean_pred
    s = h @ cov_pred @ h.T + bank.r(j)
    try:
        gain = np.linalg.solve(s, (cov_pred @ h.T).T).T
    except np.linalg.LinAlgError:
        return None
    mean = mean_pred + gain @ innovation
    cov = cov_pred - gain @ s @ gain.T
    cov = 0.5 * (cov + cov.T)
    return KalmanStep(mean_pred, cov_pred, innovation, s, gain, mean, cov)


def model_select(measurement: WindowedMeasurement) -> int:
    """Deterministic model order: j = min(|available set|, 3)."""
    if measurement.n_available < 1:
        raise ValueError("model selection needs a nonempty measurement")
    return min(measurement.n_available, 3)


def measure_model1(
    node_pos: tuple[float, float],
    d_hat: float,
    predicted_pos: tuple[float, float],
    last_pos: Optional[tuple[float, float]] = None,
) -> tuple[float, float]:
    """Single-node measurement: d_hat from the node toward the prediction."""
    node = np.asarray(node_pos, dtype=float)
    for ref in (predicted_pos, last_pos):
        if ref is None:
            continue
        direction = np.asarray(ref, dtype=float) - node
        norm = float(np.linalg.norm(direction))
        if norm > 0.0:
            est = node + d_hat * direction / norm
            return (float(est[0]), float(est[1]))
    # Prediction sits exactly on the node and no usable history: arbitrary
    # but fixed bearing.
    return (float(node[0] + d_hat), float(node[1]))


def measure_model2(
    pos_i: tuple[float, float],
    pos_u: tuple[float, float],
    d_i: float,
    d_u: float,
    predicted_pos: tuple[float, float],
) -> tuple[float, float]:
    """Two-node measurement: midpoint of the line estimate and the prediction."""
    line = loc.locate_two_nodes(pos_i, pos_u, d_i, d_u)
    return (0.5 * (line[0] + predicted_pos[0]),
            0.5 * (line[1] + predicted_pos[1]))


INIT_POS_SIGMA = {loc.H1: 10.0, loc.H2: 6.0}  # meters; LLS/NLS default below
INIT_POS_SIGMA_DEFAULT = 3.0
INIT_VEL_SIGMA = 1.5  # m/s
V_MAX = 3.0  # m/s, indoor walking bound


def init_track(estimate: loc.PositionEstimate, device_id: str,
               window: int) -> TrackState:
    """Zero-velocity start at the raw estimate; coarser initializers (fewer
    nodes) get wider position priors."""
    sigma = INIT_POS_SIGMA.get(estimate.estimator, INIT_POS_SIGMA_DEFAULT)
    mean = np.array([estimate.position[0], estimate.position[1], 0.0, 0.0])
    cov = np.diag([sigma ** 2, sigma ** 2, INIT_VEL_SIGMA ** 2,
                   INIT_VEL_SIGMA ** 2])
    return TrackState(device_id, mean, cov, 0, window)


def clamp_speed(mean: np.ndarray, v_max: float = V_MAX) -> np.ndarray:
    speed = math.hypot(mean[2], mean[3])
    if speed > v_max:
        mean = mean.copy()
        scale = v_max / speed
        mean[2] *= scale
        mean[3] *= scale
    return mean


@dataclass(frozen=True)
class TrackRow:
    """One per-window tracker output record (the track-dump line)."""

    device_id: str
    window: int
    t: float
    model: int  # 1..3, or 0 for coasting
    x: float
    y: float
    vx: float
    vy: float
    cov_diag: tuple[float, float, float, float]
    n_avail: int
    n_fresh: int
    raw_x: Optional[float] = None
    raw_y: Optional[float] = None
    raw_estimator: Optional[str] = None
    raw_quality: Optional[str] = None


@dataclass
class TrackerParams:
    window_length_s: float = 3.0
    meas_sigma: float = 4.0
    process_density: float = 0.5
    v_max: float = V_MAX
    n_min: int = 1
    grace_s: float = 300.0
    ema_weight: float = 0.2
    nls_n0: float = 3.0
    nls_p0_bar: float = -40.0
    floor_bounds: Optional[tuple[float, float, float, float]] = None


class DeviceTracker:
    """Sequential per-device tracker; one instance per device, not reentrant."""

    def __init__(self, device_id: str, nodes: Sequence[ReferenceNode],
                 channel: loc.ChannelParams, params: TrackerParams,
                 t0: float = 0.0):
        self.device_id = device_id
        self.nodes_by_id = {n.id: n for n in nodes}
        self.params = params
        self.channel = loc.ChannelState(channel, params.ema_weight)
        self.bank = make_model_bank(params.window_length_s, params.meas_sigma,
                                    params.process_density)
        self.t0 = t0
        self.state: Optional[TrackState] = None
        self.skipped_updates = 0

    def _window_time(self, window: int) -> float:
        return self.t0 + window * self.params.window_length_s

    def _usable(self, measurement: Optional[WindowedMeasurement]) -> bool:
        return (measurement is not None
                and measurement.n_available >= self.params.n_min)

    def _raw_estimate(self, measurement: WindowedMeasurement) -> loc.PositionEstimate:
        return loc.localize(measurement, self.nodes_by_id, self.channel,
                            self.params.floor_bounds,
                            n0=self.params.nls_n0,
                            p0_bar=self.params.nls_p0_bar)

    def _model_measurement(self, j: int, measurement: WindowedMeasurement,
                           raw: loc.PositionEstimate,
                           mean_pred: np.ndarray) -> tuple[float, float]:
        predicted = (float(mean_pred[0]), float(mean_pred[1]))
        if j >= 3:
            return raw.position
        ch = self.channel
        d0 = ch.params.d0
        entries = measurement.strongest(2)
        node_i = self.nodes_by_id[entries[0].sniffer_id]
        d_i = loc.range_from_rss(entries[0].rss, ch.p0, ch.n, d0)
        if j == 2:
            node_u = self.nodes_by_id[entries[1].sniffer_id]
            if node_u.position == node_i.position:
                # Coincident nodes carry no baseline; fall back to the
                # single-node construction on the stronger one.
                y = measure_model1(node_i.position, d_i, predicted,
                                   self.state.position if self.state else None)
            else:
                d_u = loc.range_from_rss(entries[1].rss, ch.p0, ch.n, d0)
                y = measure_model2(node_i.position, node_u.position, d_i, d_u,
                                   predicted)
        else:
            y = measure_model1(node_i.position, d_i, predicted,
                               self.state.position if self.state else None)
        return loc.clamp_to_bounds(y, self.params.floor_bounds)

    def step(self, window: int,
             measurement: Optional[WindowedMeasurement]) -> Optional[TrackRow]:
        """Advance one window. Returns the dump row, or None when the track is
        lost (no measurements within the grace period) or not yet started."""
        p = self.params
        usable = self._usable(measurement)

        if self.state is None:
            if not usable:
                return None
            raw = self._raw_estimate(measurement)
            self.state = init_track(raw, self.device_id, window)
            self.state.model_index = model_select(measurement)
            return self._row(window, self.state.model_index, measurement, raw)

        gap_s = (window - self.state.last_fresh_window) * p.window_length_s
        if not usable and gap_s > p.grace_s:
            # Track lost; the next usable measurement re-initializes.
            self.state = None
            return None

        mean_pred, cov_pred = predict(self.state.mean, self.state.cov, self.bank)
        if not usable:
            self.state.mean = mean_pred
            self.state.cov = cov_pred
            self.state.model_index = COAST
            return self._row(window, COAST, measurement, None)

        if gap_s > p.grace_s:
            raw = self._raw_estimate(measurement)
            self.state = init_track(raw, self.device_id, window)
            self.state.model_index = model_select(measurement)
            return self._row(window, self.state.model_index, measurement, raw)

        j = model_select(measurement)
        raw = self._raw_estimate(measurement)
        y = self._model_measurement(j, measurement, raw, mean_pred)
        step = update(mean_pred, cov_pred, self.bank, j, y)
        if step is None:
            self.skipped_updates += 1
            self.state.mean = mean_pred
            self.state.cov = cov_pred
            self.state.model_index = COAST
            return self._row(window, COAST, measurement, raw)
        self.state.mean = clamp_speed(step.mean, p.v_max)
        self.state.cov = step.cov
        self.state.model_index = j
        self.state.last_fresh_window = window
        return self._row(window, j, measurement, raw)

    def _row(self, window: int, model: int,
             measurement: Optional[WindowedMeasurement],
             raw: Optional[loc.PositionEstimate]) -> TrackRow:
        st = self.state
        return TrackRow(
            device_id=self.device_id,
            window=window,
            t=self._window_time(window),
            model=model,
            x=float(st.mean[0]), y=float(st.mean[1]),
            vx=float(st.mean[2]), vy=float(st.mean[3]),
            cov_diag=tuple(float(v) for v in np.diag(st.cov)),
            n_avail=measurement.n_available if measurement else 0,
            n_fresh=measurement.n_fresh if measurement else 0,
            raw_x=raw.position[0] if raw else None,
            raw_y=raw.position[1] if raw else None,
            raw_estimator=raw.estimator if raw else None,
            raw_quality=raw.quality if raw else None,
        )


def run_device_track(
    device_id: str,
    measurements: Sequence[WindowedMeasurement],
    nodes: Sequence[ReferenceNode],
    channel: loc.ChannelParams,
    params: TrackerParams,
    t0: float = 0.0,
) -> list[TrackRow]:
    """Run a tracker over a device's windowed measurements, coasting through
    gaps within the grace period."""
    if not measurements:
        return []
    by_window = {m.window: m for m in measurements}
    tracker = DeviceTracker(device_id, nodes, channel, params, t0)
    rows: list[TrackRow] = []
    for window in range(min(by_window), max(by_window) + 1):
        row = tracker.step(window, by_window.get(window))
        if row is not None:
            rows.append(row)
    return rows
