"""Top-level figure-of-merit checks, one printed line per criterion.

Each named check simulates at its documented scale and tolerance via
spsim.acceptance; the final test runs the compact deterministic
property bundle (exact equalities, no statistics).  Lines print even
under captured output so the scoreboard is visible in any pytest run.
"""

import numpy as np
import pytest

import helpers
from spsim import acceptance, analysis, demux, source, timetags

CRITERIA = list(acceptance.ALL_CHECKS)


def report(capsys, line):
    with capsys.disabled():
        print("\n" + line, flush=True)


@pytest.mark.parametrize("name", CRITERIA)
def test_criterion(name, capsys):
    result = acceptance.run_check(name)
    report(capsys, result.line())
    if name == "equation-suite":
        assert result.runtime_s < 1.0, f"took {result.runtime_s:.3f}s, budget 1s"
    assert result.passed, result.detail


def property_histogram_brute_force():
    rng = np.random.default_rng(11)
    ts = np.sort(rng.integers(0, 2_000_000, 4000)).astype(np.int64)
    hist = analysis.g2_histogram(ts, ts, bin_width_ps=100, max_tau_ps=50_000)
    oracle = helpers.brute_force_counts(ts, ts, 100, hist.k_max, same_stream=True)
    return np.array_equal(hist.counts, oracle)


def property_tag_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    tags = np.zeros(5000, dtype=timetags.TAG_DTYPE)
    tags["timestamp_ps"] = np.sort(rng.integers(0, 10**12, 5000))
    tags["channel"] = rng.integers(0, 6, 5000)
    tags["flags"] = rng.integers(0, 2, 5000)
    path = tmp_path / "prop.spstag"
    timetags.write_stream(path, tags, n_channels=6, metadata={"k": 1})
    back, header = timetags.read_stream(path)
    again = tmp_path / "prop2.spstag"
    timetags.write_stream(again, back, n_channels=header.n_channels,
                          metadata=header.metadata)
    return path.read_bytes() == again.read_bytes() and np.array_equal(tags, back)


def property_merge_matches_sort():
    rng = np.random.default_rng(13)
    streams = []
    for _ in range(4):
        t = np.zeros(800, dtype=timetags.TAG_DTYPE)
        t["timestamp_ps"] = rng.integers(0, 5000, 800)  # force ties
        t["channel"] = rng.integers(0, 6, 800)
        t = t[np.lexsort((t["channel"], t["timestamp_ps"]))]
        streams.append(t)
    merged = timetags.merge(streams)
    oracle = sorted(
        (int(r["timestamp_ps"]), int(r["channel"]), i, j)
        for i, s in enumerate(streams) for j, r in enumerate(s)
    )
    keys = [(int(r["timestamp_ps"]), int(r["channel"])) for r in merged]
    return keys == [(a, b) for a, b, _, _ in oracle]


def property_routing_partitions_pulses():
    cfg = demux.DemuxConfig()
    ppc = demux.pulses_per_cycle(cfg, 12.1e-9)
    idx = np.arange(3 * ppc, dtype=np.uint64)
    ch = demux.route_channels(idx, cfg, 12.1e-9)
    per_cycle = ch.reshape(3, ppc)
    for cycle in per_cycle:
        counts = np.bincount(cycle[cycle >= 0], minlength=cfg.n_channels)
        if not np.all(counts == cfg.pack_size):
            return False
        if np.sum(cycle < 0) != ppc - cfg.n_channels * cfg.pack_size:
            return False
    return np.array_equal(per_cycle[0], per_cycle[1])


def property_sync_delays_align_cycle():
    cfg = demux.DemuxConfig(
        channel_efficiency=(1.0,) * 6, pockels_transmission=1.0,
        detector_efficiency=(1.0,) * 6,
    )
    period = 12.1e-9
    pulses = np.array([4 * c for c in range(6)], dtype=np.uint64)
    events = helpers.make_events(pulses, n_pulses=51)
    result = demux.simulate_demux(events, cfg, period, rng_seed=1)
    stamps = {int(result.channels[c][0]["timestamp_ps"]) for c in range(6)}
    return stamps == {20 * 12100}


def property_fit_self_consistency():
    p_true, slots = 0.437, 6.4e6
    ns = np.array([2, 3, 4, 5, 6])
    rates = slots * (0.1 * p_true) ** ns
    p = analysis.fit_pn((ns, rates), slots_per_second=slots, source_prob=0.1)
    if abs(p - p_true) > 1e-6 * p_true:
        return False
    q, t_on = 0.59, 5.2e-6
    tau = np.linspace(12100.0, 3e7, 3000)
    vals = 1.0 + (1 - q) / q * np.exp(-tau * 1e-12 / (t_on * (1 - q)))
    fit = analysis.fit_blinking((tau, vals))
    return abs(fit.q - q) <= 1e-6 * q and abs(fit.t_on_s - t_on) <= 1e-6 * t_on


def property_thread_count_invariance():
    rng = np.random.default_rng(14)
    ts = np.sort(rng.integers(0, 10**9, 30_000)).astype(np.int64)
    base = analysis.g2_histogram(ts, ts, 100, 100_000, threads=1)
    return all(
        np.array_equal(
            base.counts,
            analysis.g2_histogram(ts, ts, 100, 100_000, threads=k).counts,
        )
        for k in range(2, 9)
    )


def test_property_suite(tmp_path, capsys):
    checks = {
        "histogram-vs-brute-force": property_histogram_brute_force(),
        "tag-byte-round-trip": property_tag_round_trip(tmp_path),
        "merge-vs-sort": property_merge_matches_sort(),
        "routing-partition": property_routing_partitions_pulses(),
        "sync-exact-coincidence": property_sync_delays_align_cycle(),
        "fit-self-consistency": property_fit_self_consistency(),
        "thread-invariance": property_thread_count_invariance(),
    }
    failed = sorted(k for k, ok in checks.items() if not ok)
    status = "PASS" if not failed else "FAIL"
    detail = "all 7 exact" if not failed else f"failed: {', '.join(failed)}"
    report(capsys, f"{status}  property-suite: {detail}")
    assert not failed, detail
