"""Availability-adaptive position estimation from representative RSS sets.

The estimator is selected by how many sniffers heard the device and which
channel parameters are trusted:

  * one node: component-wise median of the node's coverage disc minus every
    other node's disc (the device was not heard elsewhere, so it is assumed
    outside those discs);
  * two nodes: a point on the line through both nodes, placed by the two
    range estimates with the range-sum deficit split evenly;
  * three or more: linear least squares on mean-centered coordinates, or the
    trust-region NLS variants when a channel parameter is untrusted.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import gtrs
from .windows import WindowedMeasurement
from .ingest import ReferenceNode

H1 = "H1"
H2 = "H2"
H3_LLS = "H3_LLS"
NLS_V1 = "NLS_v1"
NLS_V2 = "NLS_v2"
NLS_V3 = "NLS_v3"
MODEL_1 = "M1"
MODEL_2 = "M2"

QUALITY_OK = "ok"
QUALITY_FALLBACK = "fallback"

H1_GRID_STEP_M = 0.25


class CollinearNodesError(ValueError):
    """LLS geometry matrix is rank deficient (nodes on one line)."""


@dataclass(frozen=True)
class ChannelParams:
    """Log-distance path-loss parameters and which of them are trusted."""

    p0: float  # dBm at the reference distance
    n: float  # path-loss exponent
    d0: float = 1.0  # meters
    p0_known: bool = True
    n_known: bool = True

    def __post_init__(self):
        if not (self.n > 0):
            raise ValueError("path-loss exponent must be > 0")
        if not (self.d0 > 0):
            raise ValueError("reference distance must be > 0")


class ChannelState:
    """Working channel values for one tracked device.

    Starts from the configured parameters; every NLS solve that produces an
    estimate blends it in with an exponential moving average, so ranging in
    the heuristic estimators sharpens over time even when a parameter is
    configured unknown.
    """

    def __init__(self, params: ChannelParams, ema_weight: float = 0.2):
        self.params = params
        self.ema_weight = ema_weight
        self.p0 = params.p0
        self.n = params.n

    def absorb(self, p0_est: Optional[float], n_est: Optional[float]) -> None:
        w = self.ema_weight
        if p0_est is not None and math.isfinite(p0_est):
            self.p0 = (1.0 - w) * self.p0 + w * p0_est
        if n_est is not None and n_est > 0 and math.isfinite(n_est):
            self.n = (1.0 - w) * self.n + w * n_est


@dataclass(frozen=True)
class PositionEstimate:
    position: tuple[float, float]
    estimator: str
    num_nodes_used: int
    p0_est: Optional[float] = None
    n_est: Optional[float] = None
    quality: str = QUALITY_OK


def range_from_rss(rss: float, p0: float, n: float, d0: float = 1.0) -> float:
    """Invert the log-distance model: d = d0 * 10^((p0 - rss) / (10 n))."""
    if not math.isfinite(rss):
        raise ValueError("non-finite RSS")
    return d0 * 10.0 ** ((p0 - rss) / (10.0 * n))


def select_estimator(n_avail: int, p0_known: bool, n_known: bool,
                     has_prior: bool) -> str:
    """Total dispatch: every (availability, knowledge, prior) combination maps
    to exactly one estimator tag."""
    if n_avail < 1:
        raise ValueError("dispatch needs at least one available measurement")
    if n_avail == 1:
        return MODEL_1 if has_prior else H1
    if n_avail == 2:
        return MODEL_2 if has_prior else H2
    if p0_known and n_known:
        return H3_LLS
    if not p0_known and n_known:
        return NLS_V1
    if p0_known and not n_known:
        return NLS_V2
    # Both unknown: the joint variant needs four nodes; with exactly three the
    # lower-order path ranges with the working parameter values.
    return NLS_V3 if n_avail >= 4 else H3_LLS


def locate_one_node(
    node: ReferenceNode,
    all_nodes: Sequence[ReferenceNode],
    grid_step: float = H1_GRID_STEP_M,
) -> tuple[float, float]:
    """Median location over the detecting node's coverage disc, excluding every
    other node's disc. Empty survivor set falls back to the node position."""
    cx, cy = node.position
    r = node.coverage_radius
    offsets = np.arange(-r, r + grid_step / 2, grid_step)
    gx, gy = np.meshgrid(cx + offsets, cy + offsets)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    mask = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2 <= r * r
    for other in all_nodes:
        if other.id == node.id:
            continue
        ox, oy = other.position
        d2 = (pts[:, 0] - ox) ** 2 + (pts[:, 1] - oy) ** 2
        mask &= d2 > other.coverage_radius ** 2
    survivors = pts[mask]
    if survivors.shape[0] == 0:
        return node.position
    return (float(np.median(survivors[:, 0])), float(np.median(survivors[:, 1])))


# The disc-median estimate depends only on the deployment geometry, never on
# RSS, so it is cached per (node, deployment).
@functools.lru_cache(maxsize=512)
def _locate_one_node_cached(node: ReferenceNode,
                            all_nodes: tuple[ReferenceNode, ...]) -> tuple[float, float]:
    return locate_one_node(node, all_nodes)


def locate_two_nodes(
    pos_i: tuple[float, float],
    pos_u: tuple[float, float],
    d_i: float,
    d_u: float,
) -> tuple[float, float]:
    """Point on the line through the two nodes: d_i from node i plus half of
    the range-sum excess over the node separation."""
    xi = np.asarray(pos_i, dtype=float)
    xu = np.asarray(pos_u, dtype=float)
    diff = xu - xi
    d_iu = float(np.linalg.norm(diff))
    if d_iu == 0.0:
        raise ValueError("coincident reference nodes")
    along = d_i + (d_i + d_u - d_iu) / 2.0
    est = xi + along * diff / d_iu
    return (float(est[0]), float(est[1]))


def locate_lls(
    positions: Sequence[tuple[float, float]],
    ranges: Sequence[float],
) -> tuple[float, float]:
    """Mean-centered linear least squares over >= 3 non-collinear nodes.

    Raises CollinearNodesError on rank deficiency so the caller can fall back
    to the two-node estimator.
    """
    a = np.asarray(positions, dtype=float)
    d = np.asarray(ranges, dtype=float)
    if a.shape[0] < 3:
        raise ValueError("LLS needs at least three nodes")
    m = a - a.mean(axis=0)
    sing = np.linalg.svd(m, compute_uv=False)
    if sing[-1] <= 1e-8 * sing[0]:
        raise CollinearNodesError("reference nodes are collinear")
    norms2 = np.sum(a * a, axis=1)
    d2 = d * d
    b = 0.5 * ((norms2 - norms2.mean()) - (d2 - d2.mean()))
    sol, *_ = np.linalg.lstsq(m, b, rcond=None)
    return (float(sol[0]), float(sol[1]))


def clamp_to_bounds(
    position: tuple[float, float],
    bounds: Optional[tuple[float, float, float, float]],
) -> tuple[float, float]:
    if bounds is None:
        return position
    x0, y0, x1, y1 = bounds
    return (min(max(position[0], x0), x1), min(max(position[1], y0), y1))


def localize(
    measurement: WindowedMeasurement,
    nodes_by_id: dict[str, ReferenceNode],
    channel: ChannelState,
    floor_bounds: Optional[tuple[float, float, float, float]] = None,
    n0: float = gtrs.DEFAULT_N0,
    p0_bar: float = gtrs.DEFAULT_P0_BAR,
) -> PositionEstimate:
    """Raw (no-prior) estimate for one window, per the availability dispatch.

    This is the initialization / baseline path; the prior-corrected Model-1/2
    measurement constructions live with the tracker.
    """
    entries = measurement.entries
    if not entries:
        raise ValueError("empty measurement")
    params = channel.params
    tag = select_estimator(len(entries), params.p0_known, params.n_known,
                           has_prior=False)
    nodes = [nodes_by_id[e.sniffer_id] for e in entries]
    rss = [e.rss for e in entries]
    quality = QUALITY_OK
    p0_est = n_est = None

    if tag == H1:
        deployment = tuple(sorted(nodes_by_id.values(), key=lambda n: n.id))
        pos = _locate_one_node_cached(nodes[0], deployment)
    elif tag == H2:
        # Node i is the stronger-RSS node; the construction is not symmetric
        # when the range sum differs from the node separation.
        i, u = sorted(range(2), key=lambda j: (-rss[j], nodes[j].id))
        d_i = range_from_rss(rss[i], channel.p0, channel.n, params.d0)
        d_u = range_from_rss(rss[u], channel.p0, channel.n, params.d0)
        pos = locate_two_nodes(nodes[i].position, nodes[u].position, d_i, d_u)
    elif tag in (NLS_V1, NLS_V2, NLS_V3):
        variant = {NLS_V1: 1, NLS_V2: 2, NLS_V3: 3}[tag]
        prob = gtrs.build_gtrs(variant, [n.position for n in nodes], rss,
                               path_loss_n=channel.n, p0=channel.p0,
                               n0=n0, p0_bar=p0_bar)
        sol = gtrs.solve_gtrs(prob)
        pos = sol.position
        p0_est, n_est = sol.p0_est, sol.n_est
        if sol.quality != gtrs.QUALITY_OK:
            quality = QUALITY_FALLBACK
        channel.absorb(p0_est, n_est)
    else:  # H3_LLS
        ranges = [range_from_rss(p, channel.p0, channel.n, params.d0)
                  for p in rss]
        try:
            pos = locate_lls([n.position for n in nodes], ranges)
        except CollinearNodesError:
            # Two strongest-RSS nodes carry the fallback.
            order = sorted(range(len(rss)), key=lambda i: (-rss[i], nodes[i].id))
            i, u = order[0], order[1]
            pos = locate_two_nodes(nodes[i].position, nodes[u].position,
                                   ranges[i], ranges[u])
            tag = H2
            quality = QUALITY_FALLBACK

    pos = clamp_to_bounds(pos, floor_bounds)
    return PositionEstimate(pos, tag, len(entries), p0_est, n_est, quality)
