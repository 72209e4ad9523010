"""Device classification: static and passing-by exclusion rules."""

import numpy as np

from probetrack.classify import (PASSING_BY, STATIC, TRACKED,
                                 ClassifierThresholds, classify_device,
                                 gather_evidence, split_devices)
from probetrack.ingest import ProbeRecord


def _records(dev, times, rss, sniffers):
    return [ProbeRecord(t, s, dev, r) for t, s, r in zip(times, sniffers, rss)]


def test_static_printer_profile():
    # thousands of probes with near-constant RSS at one sniffer
    rng = np.random.default_rng(1)
    times = np.arange(5000) * 2.0
    rss = -55.0 + rng.normal(0, 0.6, size=5000)  # variance ~0.36 dB^2
    recs = _records("printer", times, rss, ["s1"] * 5000)
    ev = gather_evidence(recs)["printer"]
    assert ev.dominant_rss_variance < 1.0
    assert classify_device(ev) == STATIC


def test_passing_by_profile():
    recs = _records("walker", [0.0, 10.0, 20.0], [-85.0, -88.0, -86.0],
                    ["s1", "s1", "s2"])
    ev = gather_evidence(recs)["walker"]
    assert classify_device(ev) == PASSING_BY


def test_tracked_profile():
    rng = np.random.default_rng(2)
    times = np.sort(rng.uniform(0, 7200, size=60))
    sniffers = [f"s{i % 4}" for i in range(60)]
    rss = rng.uniform(-75, -40, size=60)
    ev = gather_evidence(_records("occupant", times, rss, sniffers))["occupant"]
    assert classify_device(ev) == TRACKED


def test_determinism_identical_evidence_identical_class():
    recs = _records("d", [0.0, 30.0], [-82.0, -83.0], ["s1", "s2"])
    ev1 = gather_evidence(recs)["d"]
    ev2 = gather_evidence(list(recs))["d"]
    assert ev1 == ev2
    assert classify_device(ev1) == classify_device(ev2)


def test_split_devices_counts_and_filtering():
    static = _records("p", np.arange(2000) * 1.0, [-50.0] * 2000, ["s1"] * 2000)
    passing = _records("q", [0.0, 5.0], [-88.0, -89.0], ["s1", "s1"])
    tracked = _records("r", np.arange(50) * 100.0,
                       list(np.linspace(-70, -50, 50)),
                       [f"s{i % 3}" for i in range(50)])
    kept, counts = split_devices(static + passing + tracked)
    assert counts == {TRACKED: 1, STATIC: 1, PASSING_BY: 1}
    assert {r.device_id for r in kept} == {"r"}


def test_thresholds_configurable():
    recs = _records("d", [0.0, 5.0, 10.0], [-85.0] * 3, ["s1"] * 3)
    ev = gather_evidence(recs)["d"]
    strict = ClassifierThresholds(passing_max_probes=2)
    assert classify_device(ev) == PASSING_BY
    assert classify_device(ev, strict) == TRACKED
