"""Measurement pipeline: window assignment, median extraction, sample-and-hold."""

import math

import numpy as np
import pytest

from probetrack.ingest import ProbeRecord
from probetrack.windows import (SamplingWindowConfig, apply_sample_and_hold,
                                assign_windows, build_device_windows,
                                representative_rss)


def _rec(t, sniffer="s1", dev="d1", rss=-60.0):
    return ProbeRecord(t, sniffer, dev, rss)


CFG = SamplingWindowConfig(window_length_s=3.0, hold_windows=2)


class TestAssignWindows:
    def test_simple_floor(self):
        binned, _ = assign_windows([_rec(7.2)], CFG, t0=0.0)
        assert list(binned) == [2]

    def test_boundary_goes_to_later_window(self):
        binned, _ = assign_windows([_rec(3.0)], CFG, t0=0.0)
        assert list(binned) == [1]

    def test_hand_evaluated_batch(self):
        # floor(t/3) per record: 0.1->0, 0.2->0, 4->1, 4.1->1, 9->3
        records = [_rec(t) for t in (0.1, 0.2, 4.0, 4.1, 9.0)]
        binned, _ = assign_windows(records, CFG, t0=0.0)
        counts = {k: sum(len(v) for v in groups.values())
                  for k, groups in binned.items()}
        assert counts == {0: 2, 1: 2, 3: 1}

    def test_partition_no_loss_no_duplication(self):
        rng = np.random.default_rng(7)
        records = [_rec(float(t)) for t in rng.uniform(0, 100, size=500)]
        binned, _ = assign_windows(records, CFG, t0=0.0)
        total = sum(len(v) for groups in binned.values()
                    for v in groups.values())
        assert total == len(records)

    def test_nonfinite_timestamp_rejected_and_counted(self):
        binned, diag = assign_windows([_rec(float("nan")), _rec(1.0)], CFG, 0.0)
        assert diag.rejected_nonfinite == 1
        assert sum(len(v) for g in binned.values() for v in g.values()) == 1


class TestRepresentativeRss:
    def test_odd_median(self):
        assert representative_rss([-50, -52, -90]) == -52

    def test_even_median_averages_middle_pair(self):
        assert representative_rss([-50, -52, -54, -90]) == -53

    def test_singleton(self):
        assert representative_rss([-60]) == -60

    def test_empty_is_no_measurement(self):
        assert representative_rss([]) is None

    def test_permutation_invariant_and_in_range(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            samples = list(rng.uniform(-90, -20, size=rng.integers(1, 12)))
            med = representative_rss(samples)
            assert med == representative_rss(samples[::-1])
            assert min(samples) <= med <= max(samples)

    def test_median_breakdown_resists_minority_corruption(self):
        # k corrupted out of 2k+1 leaves the median within the clean range
        rng = np.random.default_rng(11)
        for _ in range(50):
            k = int(rng.integers(1, 6))
            clean = list(rng.uniform(-60, -50, size=k + 1))
            corrupt = list(rng.uniform(-200, 200, size=k))
            med = representative_rss(clean + corrupt)
            assert min(clean) <= med <= max(clean)


class TestSampleAndHold:
    def test_hold_two_then_drop(self):
        held = apply_sample_and_hold({5: -60.0}, hold_windows=2)
        assert held == {5: (-60.0, 0), 6: (-60.0, 1), 7: (-60.0, 2)}

    def test_zero_hold(self):
        held = apply_sample_and_hold({5: -60.0}, hold_windows=0)
        assert held == {5: (-60.0, 0)}

    def test_fresh_sample_resets_age(self):
        held = apply_sample_and_hold({5: -60.0, 7: -55.0}, hold_windows=3)
        assert held[5] == (-60.0, 0)
        assert held[6] == (-60.0, 1)
        assert held[7] == (-55.0, 0)
        assert held[8] == (-55.0, 1)

    def test_age_bounded_and_value_matches_last_fresh(self):
        rng = np.random.default_rng(5)
        for hold in range(6):
            fresh = {int(k): float(rng.uniform(-90, -30))
                     for k in rng.choice(40, size=10, replace=False)}
            held = apply_sample_and_hold(fresh, hold)
            for k, (value, age) in held.items():
                assert 0 <= age <= hold
                if age > 0:
                    assert value == held[k - age][0]
                    assert held[k - age][1] == 0
                else:
                    assert value == fresh[k]


class TestBuildDeviceWindows:
    def test_median_then_hold_composition(self):
        records = [
            _rec(0.1, rss=-50.0), _rec(0.2, rss=-52.0), _rec(0.3, rss=-90.0),
            # nothing in windows 1..2 -> held with ages 1..2, dropped at 3
            _rec(12.5, rss=-70.0),
        ]
        out = build_device_windows(records, CFG, t0=0.0)
        ms = {m.window: m for m in out["d1"]}
        assert ms[0].entries[0].rss == -52.0  # median of the burst
        assert ms[0].entries[0].hold_age == 0
        assert ms[1].entries[0] .rss == -52.0
        assert ms[1].entries[0].hold_age == 1
        assert ms[2].entries[0].hold_age == 2
        assert 3 not in ms
        assert ms[4].entries[0].rss == -70.0

    def test_entries_at_most_one_per_sniffer(self):
        records = [_rec(0.1, "s1"), _rec(0.2, "s1"), _rec(0.2, "s2"),
                   _rec(1.0, "s2")]
        out = build_device_windows(records, CFG, t0=0.0)
        m = out["d1"][0]
        sniffers = [e.sniffer_id for e in m.entries]
        assert sorted(sniffers) == ["s1", "s2"]
        assert len(set(sniffers)) == len(sniffers)

    def test_devices_independent(self):
        records = [_rec(0.1, dev="a"), _rec(0.1, dev="b"), _rec(9.5, dev="b")]
        out = build_device_windows(records, CFG, t0=0.0)
        assert {m.window for m in out["a"]} == {0, 1, 2}  # holds L=2
        # b: fresh at 0 and 3, each followed by two held windows
        assert {m.window for m in out["b"]} == {0, 1, 2, 3, 4, 5}
