"""Shared test utilities: slow reference oracles and event constructors."""

import numpy as np

from spsim.source import PhotonEvents


def brute_force_counts(ts_a, ts_b, bin_width_ps, k_max, same_stream):
    """O(n^2) reference for the correlation kernel.

    Applies the same round-half-to-even binning as the production code
    but no windowing or partitioning, so any pruning bug shows up as a
    count mismatch.
    """
    a = np.asarray(ts_a, dtype=np.int64)
    b = np.asarray(ts_b, dtype=np.int64)
    counts = np.zeros(2 * k_max + 1, dtype=np.int64)
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            if same_stream and i == j:
                continue
            k = int(np.rint((int(b[j]) - int(a[i])) / bin_width_ps))
            if -k_max <= k <= k_max:
                counts[k + k_max] += 1
    return counts


def make_events(
    pulse_indices,
    period_ps=12100,
    jitter_ps=None,
    impurity=None,
    n_pulses=None,
):
    """Hand-built PhotonEvents with exact, controllable emission times."""
    idx = np.asarray(pulse_indices, dtype=np.uint64)
    n = idx.shape[0]
    jit = np.zeros(n) if jitter_ps is None else np.asarray(jitter_ps, dtype=np.float64)
    imp = np.zeros(n, bool) if impurity is None else np.asarray(impurity, dtype=bool)
    time_ps = idx.astype(np.float64) * period_ps + jit
    order = np.argsort(time_ps, kind="stable")
    if n_pulses is None:
        n_pulses = int(idx.max()) + 1 if n else 1
    return PhotonEvents(
        pulse_index=idx[order],
        time_ps=time_ps[order],
        detuning_rad_s=np.zeros(n),
        is_impurity=imp[order],
        pulse_period_ps=int(period_ps),
        n_pulses=int(n_pulses),
    )
