"""Localization estimators: ranging, disc median, two-node line, LLS, dispatch."""

import math

import numpy as np
import pytest

from probetrack.ingest import ReferenceNode
from probetrack.localization import (H1, H2, H3_LLS, MODEL_1, MODEL_2, NLS_V1,
                                     NLS_V2, NLS_V3, ChannelParams,
                                     ChannelState, CollinearNodesError,
                                     clamp_to_bounds, locate_lls,
                                     locate_one_node, locate_two_nodes,
                                     localize, range_from_rss,
                                     select_estimator)
from probetrack.windows import MeasurementEntry, WindowedMeasurement


def _node(nid, x, y, r=15.0):
    return ReferenceNode(nid, (float(x), float(y)), float(r))


def _meas(entries, dev="d", window=0):
    return WindowedMeasurement(dev, window, tuple(
        MeasurementEntry(s, rss, 0) for s, rss in entries))


class TestRangeFromRss:
    def test_direct_evaluation(self):
        assert range_from_rss(-55.0, p0=-35.0, n=2.0) == pytest.approx(10.0)

    def test_reference_distance_at_p0(self):
        assert range_from_rss(-35.0, p0=-35.0, n=2.0) == pytest.approx(1.0)

    def test_steeper_exponent(self):
        assert range_from_rss(-75.0, p0=-35.0, n=4.0) == pytest.approx(10.0)

    def test_strictly_decreasing_in_rss(self):
        ds = [range_from_rss(p, -35.0, 3.0) for p in (-40, -50, -60, -70)]
        assert all(a < b for a, b in zip(ds, ds[1:]))

    def test_forward_inverse_identity(self):
        # exact forward model with zero noise inverts to the true distance
        rng = np.random.default_rng(9)
        for _ in range(100):
            d = float(rng.uniform(0.5, 80.0))
            n = float(rng.uniform(2.0, 6.0))
            p0 = float(rng.uniform(-45.0, -25.0))
            rss = p0 - 10.0 * n * math.log10(d / 1.0)
            assert range_from_rss(rss, p0, n) == pytest.approx(d, rel=1e-12)

    def test_nonfinite_rss_rejected(self):
        with pytest.raises(ValueError):
            range_from_rss(float("nan"), -35.0, 2.0)


class TestLocateOneNode:
    def test_single_deployed_node_symmetric_disc(self):
        node = _node("a", 10, 10, r=15)
        assert locate_one_node(node, [node]) == pytest.approx((10.0, 10.0))

    def test_no_overlap_keeps_disc_center(self):
        a, b = _node("a", 0, 0, 10), _node("b", 20, 0, 10)
        est = locate_one_node(a, [a, b])
        # boundary tangency removes only measure-zero points
        assert est == pytest.approx((0.0, 0.0), abs=0.2)

    def test_exclusion_shifts_median_away_from_other_node(self):
        a, b = _node("a", 0, 0, 10), _node("b", 10, 0, 10)
        x, y = locate_one_node(a, [a, b])
        assert x < 0.0
        assert y == pytest.approx(0.0, abs=1e-9)

    def test_fully_covered_falls_back_to_node_position(self):
        a, b = _node("a", 0, 0, 5), _node("b", 0, 0.1, 30)
        assert locate_one_node(a, [a, b]) == (0.0, 0.0)


class TestLocateTwoNodes:
    def test_symmetric_ranges_meet_at_midpoint(self):
        assert locate_two_nodes((0, 0), (10, 0), 5, 5) == pytest.approx((5, 0))

    def test_exact_ranges_no_excess(self):
        assert locate_two_nodes((0, 0), (10, 0), 2, 8) == pytest.approx((2, 0))

    def test_excess_split_evenly(self):
        # 4 + (4 + 8 - 10) / 2 = 5
        assert locate_two_nodes((0, 0), (10, 0), 4, 8) == pytest.approx((5, 0))

    def test_estimate_on_node_line(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            pi = rng.uniform(-20, 20, 2)
            pu = rng.uniform(-20, 20, 2)
            if np.allclose(pi, pu):
                continue
            est = np.array(locate_two_nodes(tuple(pi), tuple(pu),
                                            float(rng.uniform(0.1, 30)),
                                            float(rng.uniform(0.1, 30))))
            cross = np.cross(est - pi, pu - pi)
            assert abs(cross) < 1e-9 * max(1.0, np.linalg.norm(pu - pi) ** 2)

    def test_coincident_nodes_error(self):
        with pytest.raises(ValueError):
            locate_two_nodes((1, 1), (1, 1), 2, 3)


class TestLocateLls:
    def test_square_symmetric_exact(self):
        nodes = [(0, 0), (10, 0), (0, 10), (10, 10)]
        target = np.array([5.0, 5.0])
        ranges = [float(np.linalg.norm(target - np.array(n))) for n in nodes]
        assert locate_lls(nodes, ranges) == pytest.approx((5.0, 5.0))

    def test_noiseless_recovery_vs_direct_solve(self):
        # Oracle: build the mean-centered system by hand and solve directly.
        nodes = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]
        target = np.array([3.0, 4.0])
        ranges = [float(np.linalg.norm(target - np.array(n))) for n in nodes]
        a = np.array(nodes)
        m = a - a.mean(axis=0)
        d2 = np.array(ranges) ** 2
        norms2 = (a ** 2).sum(axis=1)
        b = 0.5 * ((norms2 - norms2.mean()) - (d2 - d2.mean()))
        oracle = np.linalg.solve(m.T @ m, m.T @ b)
        assert oracle == pytest.approx((3.0, 4.0), abs=1e-9)
        assert locate_lls(nodes, ranges) == pytest.approx(tuple(oracle), abs=1e-9)

    def test_noiseless_exactness_random_instances(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            k = int(rng.integers(3, 8))
            nodes = rng.uniform(0, 50, size=(k, 2))
            while np.linalg.svd(nodes - nodes.mean(0), compute_uv=False)[-1] < 1.0:
                nodes = rng.uniform(0, 50, size=(k, 2))
            target = nodes.min(0) + rng.uniform(0, 1, 2) * (nodes.max(0) - nodes.min(0))
            ranges = np.linalg.norm(nodes - target, axis=1)
            est = locate_lls([tuple(n) for n in nodes], list(ranges))
            assert np.linalg.norm(np.array(est) - target) < 1e-6

    def test_collinear_raises(self):
        with pytest.raises(CollinearNodesError):
            locate_lls([(0, 0), (5, 0), (10, 0)], [1.0, 2.0, 3.0])


class TestDispatch:
    def test_every_combination_maps_to_one_estimator(self):
        for n_avail in range(1, 8):
            for p0k in (True, False):
                for nk in (True, False):
                    for prior in (True, False):
                        tag = select_estimator(n_avail, p0k, nk, prior)
                        assert tag in {H1, H2, H3_LLS, NLS_V1, NLS_V2, NLS_V3,
                                       MODEL_1, MODEL_2}

    def test_table_rows(self):
        assert select_estimator(2, True, True, False) == H2
        assert select_estimator(5, True, True, False) == H3_LLS
        assert select_estimator(4, False, False, False) == NLS_V3
        assert select_estimator(1, True, True, True) == MODEL_1
        assert select_estimator(2, True, True, True) == MODEL_2
        assert select_estimator(3, False, True, False) == NLS_V1
        assert select_estimator(3, True, False, False) == NLS_V2
        # joint variant needs four nodes; three falls to the LLS path
        assert select_estimator(3, False, False, False) == H3_LLS


class TestLocalize:
    CH = ChannelParams(p0=-35.0, n=2.0)

    def _nodes(self):
        return {n.id: n for n in [
            _node("a", 0, 0), _node("b", 30, 0), _node("c", 0, 30),
            _node("d", 30, 30)]}

    def _rss_at(self, target, node, p0=-35.0, n=2.0):
        d = max(math.hypot(target[0] - node.position[0],
                           target[1] - node.position[1]), 1.0)
        return p0 - 10.0 * n * math.log10(d)

    def test_two_entries_dispatches_h2(self):
        est = localize(_meas([("a", -55.0), ("b", -55.0)]), self._nodes(),
                       ChannelState(self.CH))
        assert est.estimator == H2
        assert est.num_nodes_used == 2

    def test_three_entries_known_params_lls_recovers_truth(self):
        nodes = self._nodes()
        target = (12.0, 9.0)
        entries = [(nid, self._rss_at(target, nodes[nid]))
                   for nid in ("a", "b", "c")]
        est = localize(_meas(entries), nodes, ChannelState(self.CH))
        assert est.estimator == H3_LLS
        assert est.position == pytest.approx(target, abs=1e-6)

    def test_collinear_falls_back_to_h2_flagged(self):
        nodes = {n.id: n for n in [
            _node("a", 0, 0), _node("b", 15, 0), _node("c", 30, 0)]}
        target = (15.0, 0.0)
        entries = [(nid, self._rss_at(target, nodes[nid]))
                   for nid in ("a", "b", "c")]
        est = localize(_meas(entries), nodes, ChannelState(self.CH))
        assert est.estimator == H2
        assert est.quality == "fallback"

    def test_empty_measurement_rejected(self):
        with pytest.raises(ValueError):
            localize(_meas([]), self._nodes(), ChannelState(self.CH))

    def test_clamped_to_floor(self):
        est = localize(_meas([("a", -85.0), ("b", -30.0)]), self._nodes(),
                       ChannelState(self.CH), floor_bounds=(0, 0, 30, 30))
        assert 0 <= est.position[0] <= 30
        assert 0 <= est.position[1] <= 30


def test_clamp_to_bounds():
    assert clamp_to_bounds((-3.0, 5.0), (0, 0, 10, 10)) == (0.0, 5.0)
    assert clamp_to_bounds((4.0, 12.0), (0, 0, 10, 10)) == (4.0, 10.0)
    assert clamp_to_bounds((4.0, 5.0), None) == (4.0, 5.0)


def test_channel_state_ema():
    ch = ChannelState(ChannelParams(p0=-40.0, n=3.0, p0_known=False), 0.2)
    ch.absorb(-35.0, None)
    assert ch.p0 == pytest.approx(0.8 * -40.0 + 0.2 * -35.0)
    assert ch.n == 3.0
    ch.absorb(None, 4.0)
    assert ch.n == pytest.approx(0.8 * 3.0 + 0.2 * 4.0)
