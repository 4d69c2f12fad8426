"""Time-tag analysis: correlation histograms and figure-of-merit fits.

Estimators recover, from nothing but tag streams, the quantities the
simulator was configured with: the single-photon purity g2(0) from
pulsed side-peak ratios, the blink duty cycle and bright dwell from the
long-range bunching envelope, two-photon indistinguishability from the
interferometer cross-correlation, and per-slot efficiency from n-fold
coincidence rates.

Histogram filling uses integer picosecond differences binned by
round-half-even nearest-bin assignment, which is symmetric under time
reversal, so auto-correlations are exactly mirror symmetric.  The fill
loops are compiled and release the GIL; work is split over a fixed
partition grid so thread count never changes the result.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import least_squares

from .errors import AnalysisError, ConvergenceError, DomainError

__all__ = [
    "Histogram",
    "g2_histogram",
    "g2_zero",
    "BunchingEnvelope",
    "bunching_envelope",
    "BlinkingFit",
    "fit_blinking",
    "simulate_hom",
    "HomResult",
    "hom_visibility",
    "SlotGrid",
    "slot_ids",
    "NfoldTable",
    "count_nfold",
    "fit_pn",
]

_N_PARTITIONS = 64  # fixed work split; results identical for any thread count


def _timestamps_i64(tags) -> np.ndarray:
    arr = np.asarray(tags)
    if arr.dtype.names and "timestamp_ps" in arr.dtype.names:
        arr = arr["timestamp_ps"]
    return np.ascontiguousarray(arr.astype(np.int64, copy=False))


@dataclass(frozen=True)
class Histogram:
    """Coincidence counts on a symmetric grid of lag bins.

    Bin k (for k in -K..K) is centered at k * bin_width_ps and holds
    pair counts whose lag rounds to that center (ties to even).
    """

    counts: np.ndarray
    bin_width_ps: int
    normalization: str = "raw"

    def __post_init__(self):
        if self.bin_width_ps < 1:
            raise DomainError(f"bin_width_ps must be >= 1, got {self.bin_width_ps}")
        if self.counts.shape[0] % 2 != 1:
            raise DomainError("histogram needs an odd bin count (symmetric lags)")

    @property
    def k_max(self) -> int:
        return (self.counts.shape[0] - 1) // 2

    @property
    def centers_ps(self) -> np.ndarray:
        k = np.arange(-self.k_max, self.k_max + 1, dtype=np.int64)
        return k * self.bin_width_ps

    @property
    def span_ps(self) -> float:
        return self.k_max * self.bin_width_ps + 0.5 * self.bin_width_ps

    def peak_area(self, center_ps: float, halfwidth_ps: float) -> int:
        """Total counts in bins whose centers lie within +-halfwidth."""
        bw = self.bin_width_ps
        lo = math.ceil((center_ps - halfwidth_ps) / bw)
        hi = math.floor((center_ps + halfwidth_ps) / bw)
        lo = max(lo, -self.k_max)
        hi = min(hi, self.k_max)
        if lo > hi:
            return 0
        return int(self.counts[lo + self.k_max : hi + self.k_max + 1].sum())


@njit(cache=True, nogil=True)
def _corr_kernel(a, b, i0, i1, bw, k_max, same):
    counts = np.zeros(2 * k_max + 1, dtype=np.int64)
    nb = b.shape[0]
    span = (k_max + 1) * bw
    lo = 0
    hi = 0
    for i in range(i0, i1):
        t = a[i]
        tmin = t - span
        tmax = t + span
        while lo < nb and b[lo] < tmin:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < nb and b[hi] <= tmax:
            hi += 1
        for j in range(lo, hi):
            if same and j == i:
                continue
            k = int(np.rint((b[j] - t) / bw))
            if -k_max <= k <= k_max:
                counts[k + k_max] += 1
    return counts


def g2_histogram(
    tags_a,
    tags_b,
    bin_width_ps: int,
    max_tau_ps: float,
    threads: int = 1,
    same_stream: bool | None = None,
) -> Histogram:
    """Histogram of lags t_b - t_a over all pairs within +-max_tau.

    Set same_stream (or pass the identical array twice) to drop each
    tag's pairing with itself in an auto-correlation; distinct tags of
    the same stream still pair in both orders, giving the mirror
    symmetric histogram.  ``threads`` splits the outer loop over a
    fixed partition grid, so counts are bit-identical for any value.
    """
    if same_stream is None:
        same_stream = tags_a is tags_b
    a = _timestamps_i64(tags_a)
    b = _timestamps_i64(tags_b)
    if int(bin_width_ps) != bin_width_ps or bin_width_ps < 1:
        raise DomainError(f"bin_width_ps must be a positive integer, got {bin_width_ps}")
    bin_width_ps = int(bin_width_ps)
    k_max = int(round(max_tau_ps / bin_width_ps))
    if k_max < 1:
        raise DomainError("max_tau_ps must cover at least one bin")
    if threads < 1:
        raise DomainError(f"threads must be >= 1, got {threads}")
    if same_stream and a.shape[0] != b.shape[0]:
        raise DomainError("same_stream requires equal-length inputs")

    bounds = np.linspace(0, a.shape[0], _N_PARTITIONS + 1).astype(np.int64)
    jobs = [
        (int(bounds[p]), int(bounds[p + 1]))
        for p in range(_N_PARTITIONS)
        if bounds[p + 1] > bounds[p]
    ]
    if threads == 1 or len(jobs) <= 1:
        parts = [_corr_kernel(a, b, i0, i1, bin_width_ps, k_max, same_stream) for i0, i1 in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    lambda ij: _corr_kernel(a, b, ij[0], ij[1], bin_width_ps, k_max, same_stream),
                    jobs,
                )
            )
    counts = np.zeros(2 * k_max + 1, dtype=np.int64)
    for p in parts:  # int64 addition, summed in partition order
        counts += p
    return Histogram(counts=counts, bin_width_ps=bin_width_ps)


def g2_zero(
    hist: Histogram,
    pulse_period_ps: float,
    peak_halfwidth_ps: float,
    n_side_peaks: int = 6,
) -> float:
    """Central peak area over the mean of the nearest side-peak areas.

    Scale invariant: multiplying all counts by a constant cancels in
    the ratio.
    """
    if peak_halfwidth_ps <= 0 or peak_halfwidth_ps >= pulse_period_ps / 2:
        raise DomainError(
            f"peak_halfwidth_ps must be in (0, period/2), got {peak_halfwidth_ps}"
        )
    if n_side_peaks < 1:
        raise DomainError(f"n_side_peaks must be >= 1, got {n_side_peaks}")
    if hist.span_ps < n_side_peaks * pulse_period_ps + peak_halfwidth_ps:
        raise AnalysisError(
            f"histogram spans {hist.span_ps:.0f} ps, too short for "
            f"{n_side_peaks} side peaks of period {pulse_period_ps:.0f} ps"
        )
    side = [
        hist.peak_area(s * k * pulse_period_ps, peak_halfwidth_ps)
        for k in range(1, n_side_peaks + 1)
        for s in (-1, 1)
    ]
    side_mean = float(np.mean(side))
    if side_mean == 0.0:
        raise AnalysisError("no side-peak coincidences; cannot normalize g2")
    return hist.peak_area(0.0, peak_halfwidth_ps) / side_mean


@dataclass(frozen=True)
class BunchingEnvelope:
    """Smoothed, tail-normalized per-pulse coincidence envelope.

    values[i] is the local mean side-peak area at lag tau_ps[i],
    normalized so the long-lag tail sits at 1.  The zero-lag peak is
    excluded (it carries the antibunching dip, not the blink envelope).
    """

    tau_ps: np.ndarray
    values: np.ndarray
    asymptote_counts: float
    span_warning: bool = False


def bunching_envelope(
    hist: Histogram,
    smooth_halfwidth_ps: float,
    pulse_period_ps: float,
    tail_fraction: float = 0.2,
) -> BunchingEnvelope:
    """Extract the slow bunching envelope from a wide auto-correlation.

    Aggregates counts into one area per pulse period, smooths with a
    moving average of +-smooth_halfwidth, and divides by the mean over
    the outer tail_fraction of lags on both sides.  Warns (and flags
    the result) when the histogram span looks shorter than about ten
    correlation times, where the tail normalization goes biased.
    """
    if pulse_period_ps <= 0:
        raise DomainError(f"pulse_period_ps must be positive, got {pulse_period_ps}")
    if not 0.0 < tail_fraction < 0.5:
        raise DomainError(f"tail_fraction must be in (0, 0.5), got {tail_fraction}")
    centers = hist.centers_ps
    peak_k = np.rint(centers / pulse_period_ps).astype(np.int64)
    k_peak_max = int((hist.span_ps - pulse_period_ps / 2) // pulse_period_ps)
    if k_peak_max < 10:
        raise AnalysisError(
            f"histogram span covers only {k_peak_max} pulse periods; need >= 10"
        )
    n_peaks = 2 * k_peak_max + 1
    areas = np.zeros(n_peaks, dtype=np.float64)
    in_range = np.abs(peak_k) <= k_peak_max
    np.add.at(areas, peak_k[in_range] + k_peak_max, hist.counts[in_range])

    w = int(round(smooth_halfwidth_ps / pulse_period_ps))
    w = max(w, 0)
    if 2 * w + 1 >= n_peaks:
        raise DomainError("smooth_halfwidth_ps exceeds the histogram span")
    # Moving average that skips the zero-lag peak wherever it enters a window.
    weights = np.ones(n_peaks)
    weights[k_peak_max] = 0.0
    masked = areas * weights
    kernel = np.ones(2 * w + 1)
    num = np.convolve(masked, kernel, mode="same")
    den = np.convolve(weights, kernel, mode="same")
    with np.errstate(invalid="ignore", divide="ignore"):
        smoothed = num / den  # 0/0 only at the excluded zero-lag slot

    keep = np.abs(np.arange(n_peaks) - k_peak_max) <= (k_peak_max - w)
    keep[k_peak_max] = False
    tau = (np.arange(n_peaks, dtype=np.float64) - k_peak_max) * pulse_period_ps
    tau = tau[keep]
    env = smoothed[keep]

    n_tail = max(int(round(tail_fraction * env.shape[0] / 2)), 1)
    asymptote = float(np.mean(np.concatenate([env[:n_tail], env[-n_tail:]])))
    if asymptote <= 0.0:
        raise AnalysisError("empty tail; cannot normalize the bunching envelope")
    env = env / asymptote

    span_warning = False
    excess = env - 1.0
    peak = float(excess.max())
    if peak > 0.0:
        over = np.flatnonzero(excess >= peak / math.e)
        tau_c_crude = float(np.abs(tau[over]).max()) if over.size else 0.0
        if tau_c_crude > 0.0 and np.abs(tau).max() < 10.0 * tau_c_crude:
            span_warning = True
            warnings.warn(
                "histogram span is shorter than ~10 correlation times; "
                "the envelope tail normalization may be biased",
                stacklevel=2,
            )
    return BunchingEnvelope(
        tau_ps=tau, values=env, asymptote_counts=asymptote, span_warning=span_warning
    )


@dataclass(frozen=True)
class BlinkingFit:
    """Two-state blink parameters recovered from the bunching envelope.

    q is the bright duty cycle; t_on_s the mean bright dwell (nan when
    the envelope is flat and the dwell is undefined); residual the rms
    misfit of the normalized envelope.
    """

    q: float
    t_on_s: float
    residual: float
    amplitude: float
    tau_c_s: float

    @property
    def t_on_defined(self) -> bool:
        return not math.isnan(self.t_on_s)

    @property
    def t_off_s(self) -> float:
        if not self.t_on_defined or self.q >= 1.0:
            return 0.0
        return self.t_on_s * (1.0 - self.q) / self.q


def _envelope_model(tau_abs_s: np.ndarray, amplitude: float, tau_c_s: float) -> np.ndarray:
    return 1.0 + amplitude * np.exp(-tau_abs_s / tau_c_s)


def fit_blinking(envelope) -> BlinkingFit:
    """Fit 1 + A exp(-|tau|/tau_c) and map to (q, t_on).

    The stationary two-state telegraph gives A = (1 - q)/q and
    tau_c = t_on (1 - q), so q = 1/(1 + A) and t_on = tau_c (1 + A)/A.
    A flat envelope means no dark state: q = 1 exactly, t_on undefined.
    Deterministic: a fixed coarse grid picks the start (ties broken by
    lower residual, then lower q) and a bounded least-squares refines it.
    """
    if isinstance(envelope, BunchingEnvelope):
        tau_ps, values = envelope.tau_ps, envelope.values
    else:
        tau_ps, values = envelope
        tau_ps = np.asarray(tau_ps, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
    if tau_ps.shape != values.shape or tau_ps.ndim != 1:
        raise DomainError("envelope arrays must be 1-d and equal length")
    if tau_ps.shape[0] < 20:
        raise AnalysisError(f"need >= 20 envelope points, got {tau_ps.shape[0]}")
    tau_abs = np.abs(tau_ps) * 1e-12

    flat_scale = max(abs(float(values.max())), 1.0)
    if float(values.max() - values.min()) <= 1e-12 * flat_scale:
        residual = float(np.sqrt(np.mean((values - 1.0) ** 2)))
        return BlinkingFit(
            q=1.0, t_on_s=float("nan"), residual=residual, amplitude=0.0,
            tau_c_s=float("nan"),
        )

    a_hat = max(float(values.max()) - 1.0, 1e-6)
    tau_span = float(tau_abs.max())
    tau_grid = np.geomspace(tau_span * 5e-3, tau_span * 2.0, 25)
    amp_grid = a_hat * np.array([0.5, 1.0, 2.0])
    best = None
    for tc in tau_grid:
        for amp in amp_grid:
            sse = float(np.sum((_envelope_model(tau_abs, amp, tc) - values) ** 2))
            q_cand = 1.0 / (1.0 + amp)
            key = (sse, q_cand)
            if best is None or key < best[0]:
                best = (key, amp, tc)
    _, amp0, tc0 = best

    result = least_squares(
        lambda x: _envelope_model(tau_abs, x[0], x[1]) - values,
        x0=[amp0, tc0],
        bounds=([0.0, tau_span * 1e-6], [np.inf, tau_span * 1e3]),
        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000,
    )
    if not result.success:
        raise ConvergenceError(f"blinking fit failed: {result.message}")
    amp, tau_c = float(result.x[0]), float(result.x[1])
    residual = float(np.sqrt(np.mean(result.fun**2)))
    if amp < 1e-9:
        return BlinkingFit(
            q=1.0, t_on_s=float("nan"), residual=residual, amplitude=amp,
            tau_c_s=float("nan"),
        )
    # A = (1-q)/q and tau_c = t_on (1-q) invert to:
    q = 1.0 / (1.0 + amp)
    t_on = tau_c * (1.0 + amp) / amp
    return BlinkingFit(q=q, t_on_s=t_on, residual=residual, amplitude=amp, tau_c_s=tau_c)


def simulate_hom(events, delay_s: float, overlap_fn, rng_seed: int):
    """Propagate emitted photons through an unbalanced interferometer.

    Each photon takes the long arm (adding ``delay_s``, an integer
    number of pulse periods) with probability 1/2.  When two photons
    land in the same output slot, the first two by arrival interfere:
    with probability overlap_fn(|dt_emission|) they coalesce onto one
    common output port, otherwise they exit on opposite ports.  Photons
    alone in a slot (and any extras beyond a pair) choose a port 50:50.

    Returns (tags_a, tags_b): sorted integer-picosecond tag arrays for
    output ports 0 and 1.  Impurity flags propagate from the input.
    """
    from . import timetags

    period_ps = events.pulse_period_ps
    d = delay_s / (period_ps * 1e-12)
    d_int = int(round(d))
    if d_int < 1 or abs(d - d_int) > 1e-9 * max(d, 1.0):
        raise DomainError(
            f"delay must be a positive integer number of pulse periods, got {delay_s}"
        )
    rng = np.random.default_rng(rng_seed)
    n = len(events)
    long_arm = rng.random(n) < 0.5
    arrival_ps = events.time_ps + long_arm * (d_int * float(period_ps))
    slot = events.pulse_index + long_arm.astype(np.uint64) * np.uint64(d_int)

    order = np.lexsort((arrival_ps, slot))
    slot_s = slot[order]
    arrival_s = arrival_ps[order]
    emission_s = events.time_ps[order]
    flags_s = np.where(events.is_impurity[order], timetags.FLAG_IMPURITY, 0).astype(np.uint8)

    new_run = np.empty(n, dtype=bool)
    if n:
        new_run[0] = True
        new_run[1:] = slot_s[1:] != slot_s[:-1]
    run_start = np.flatnonzero(new_run)
    run_len = np.diff(np.append(run_start, n))
    pos = np.arange(n) - np.repeat(run_start, run_len)

    first = np.repeat(run_len, run_len) >= 2
    pair_a = np.flatnonzero((pos == 0) & first)
    pair_b = pair_a + 1
    single = np.flatnonzero((pos >= 2) | ((pos == 0) & ~first))

    dt_s = np.abs(emission_s[pair_b] - emission_s[pair_a]) * 1e-12
    try:
        m = np.asarray(overlap_fn(dt_s), dtype=np.float64)
        if m.shape != dt_s.shape:
            raise TypeError
    except TypeError:
        m = np.array([float(overlap_fn(float(x))) for x in dt_s])
    if np.any((m < 0.0) | (m > 1.0)):
        raise DomainError("overlap_fn returned a value outside [0, 1]")

    coalesce = rng.random(pair_a.shape[0]) < m
    pair_port = (rng.random(pair_a.shape[0]) < 0.5).astype(np.uint8)
    single_port = (rng.random(single.shape[0]) < 0.5).astype(np.uint8)

    port = np.empty(n, dtype=np.uint8)
    port[pair_a] = pair_port
    port[pair_b] = np.where(coalesce, pair_port, 1 - pair_port)
    port[single] = single_port

    out = []
    for p in (0, 1):
        sel = port == p
        ts = np.rint(arrival_s[sel]).astype(np.uint64)
        fl = flags_s[sel]
        o = np.argsort(ts, kind="stable")
        out.append(timetags.make_tags(ts[o], p, fl[o]))
    return out[0], out[1]


@dataclass(frozen=True)
class HomResult:
    """Interference summary from an output cross-correlation."""

    visibility: float
    central_area: float
    side_mean: float
    neighbor_index: int
    drift_slope: float


def hom_visibility(
    hist: Histogram,
    pulse_period_ps: float,
    peak_halfwidth_ps: float,
    mzi_delay_s: float | None = None,
    far_peak_range: tuple[int, int] = (5, 10),
) -> HomResult:
    """Two-photon interference visibility from peak-area ratios.

    V = 1 - 2 A0 / (A-nb + A+nb), where the comparison peaks nb are the
    nearest side peaks not altered by the interferometer geometry: when
    the delay is one pulse period the +-1 peaks are themselves partly
    suppressed, so nb = 2 is used whenever mzi_delay_s rounds to one
    period.  Peak areas are first corrected for slow drift by a linear
    trend fitted over far side peaks (|k| in far_peak_range); a flat
    far region leaves areas exactly unchanged.  The result is clamped
    to [-1, 1].
    """
    if peak_halfwidth_ps <= 0 or peak_halfwidth_ps >= pulse_period_ps / 2:
        raise DomainError(
            f"peak_halfwidth_ps must be in (0, period/2), got {peak_halfwidth_ps}"
        )
    far_lo, far_hi = far_peak_range
    if not 2 <= far_lo <= far_hi:
        raise DomainError(f"bad far_peak_range {far_peak_range}")

    nb = 1
    if mzi_delay_s is not None:
        d = int(round(mzi_delay_s / (pulse_period_ps * 1e-12)))
        if d < 1:
            raise DomainError(f"mzi_delay_s must be >= one period, got {mzi_delay_s}")
        if d == 1:
            nb = 2
    if hist.span_ps < max(4, nb) * pulse_period_ps + peak_halfwidth_ps:
        raise AnalysisError(
            "histogram too short: need the central peak plus at least "
            "4 side peaks on each side"
        )

    def area(k: int) -> float:
        return float(hist.peak_area(k * pulse_period_ps, peak_halfwidth_ps))

    k_avail = int((hist.span_ps - peak_halfwidth_ps) // pulse_period_ps)
    far_ks = [
        s * k for k in range(far_lo, min(far_hi, k_avail) + 1) for s in (-1, 1)
    ]
    a0, am, ap = area(0), area(-nb), area(nb)
    slope = 0.0
    if len(far_ks) >= 4:
        ks = np.asarray(far_ks, dtype=np.float64)
        vals = np.asarray([area(int(k)) for k in far_ks], dtype=np.float64)
        mean_far = float(vals.mean())
        slope = float((ks * (vals - mean_far)).sum() / (ks * ks).sum())
        trend = lambda k: mean_far + slope * k
        if mean_far > 0 and all(trend(k) > 0 for k in (0, -nb, nb)):
            a0 *= mean_far / trend(0)
            am *= mean_far / trend(-nb)
            ap *= mean_far / trend(nb)
    if am + ap == 0.0:
        raise AnalysisError("empty comparison side peaks; cannot form visibility")
    v = 1.0 - 2.0 * a0 / (am + ap)
    v = min(1.0, max(-1.0, v))
    return HomResult(
        visibility=v, central_area=a0, side_mean=0.5 * (am + ap),
        neighbor_index=nb, drift_slope=slope,
    )


@dataclass(frozen=True)
class SlotGrid:
    """Arrival-time comb for coincidence slots.

    Usable slots sit at origin_ps + m * period_ps for integers m >= 0
    with (m mod cycle_len_pulses) < slots_per_cycle; the rest of each
    cycle belongs to other outputs and is skipped.
    """

    origin_ps: int
    period_ps: int
    slots_per_cycle: int
    cycle_len_pulses: int

    def __post_init__(self):
        if self.period_ps < 1:
            raise DomainError(f"period_ps must be >= 1, got {self.period_ps}")
        if not 1 <= self.slots_per_cycle <= self.cycle_len_pulses:
            raise DomainError(
                f"slots_per_cycle must be in [1, cycle_len_pulses], got "
                f"{self.slots_per_cycle} vs {self.cycle_len_pulses}"
            )

    @property
    def slots_per_second(self) -> float:
        return self.slots_per_cycle / (self.cycle_len_pulses * self.period_ps * 1e-12)


def slot_ids(tags, grid: SlotGrid, tolerance_ps: float) -> np.ndarray:
    """Unique sorted indices of usable slots hit by the given tags.

    A tag hits slot m when it lies within +-tolerance of the slot
    center; tags in skipped phases or outside tolerance are ignored.
    """
    if not 0 <= tolerance_ps <= grid.period_ps / 2:
        raise DomainError(
            f"tolerance_ps must be in [0, period/2], got {tolerance_ps}"
        )
    ts = _timestamps_i64(tags)
    u = ts - grid.origin_ps
    m = (u + grid.period_ps // 2) // grid.period_ps
    r = u - m * grid.period_ps
    ok = (np.abs(r) <= tolerance_ps) & (m >= 0)
    ok &= (m % grid.cycle_len_pulses) < grid.slots_per_cycle
    return np.unique(m[ok])


@dataclass(frozen=True)
class NfoldTable:
    """Coincidence counts and rates for n = 2 .. n_channels."""

    ns: np.ndarray
    counts: np.ndarray
    detected_rate_hz: np.ndarray
    generated_rate_hz: np.ndarray
    integration_time_s: float
    mode: str

    def rate_for(self, n: int, generated: bool = False) -> float:
        i = int(np.flatnonzero(self.ns == n)[0])
        return float(self.generated_rate_hz[i] if generated else self.detected_rate_hz[i])


def _nfold_counts_from_ids(ids_list: list[np.ndarray], mode: str) -> np.ndarray:
    """Counts of n-fold slot coincidences for n = 2 .. len(ids_list)."""
    n_ch = len(ids_list)
    counts = np.zeros(n_ch - 1, dtype=np.int64)
    if mode == "first-n":
        cur = ids_list[0]
        for i in range(1, n_ch):
            cur = np.intersect1d(cur, ids_list[i], assume_unique=True)
            counts[i - 1] = cur.shape[0]
    elif mode == "any-n":
        occ = np.unique(np.concatenate(ids_list), return_counts=True)[1]
        for i, n in enumerate(range(2, n_ch + 1)):
            counts[i] = int((occ >= n).sum())
    else:
        raise DomainError(f"mode must be 'first-n' or 'any-n', got {mode!r}")
    return counts


def count_nfold(
    streams,
    grid: SlotGrid,
    tolerance_s: float,
    integration_time_s: float,
    detector_efficiency=None,
    mode: str = "first-n",
) -> NfoldTable:
    """n-fold coincidence rates across detector channels.

    In the default "first-n" mode an n-fold event is one slot with a
    tag on every one of channels 0..n-1, matching a fixed detector
    subset; generated rates divide detected rates by the product of
    those channels' detector efficiencies.  The "any-n" mode counts
    slots covered by at least n distinct channels (any subset); its
    generated rate has no single efficiency correction and is reported
    as nan.
    """
    if len(streams) < 2:
        raise DomainError("need at least two channels for coincidences")
    if integration_time_s <= 0:
        raise DomainError(
            f"integration_time_s must be positive, got {integration_time_s}"
        )
    ids = [slot_ids(s, grid, tolerance_s * 1e12) for s in streams]
    counts = _nfold_counts_from_ids(ids, mode)
    ns = np.arange(2, len(streams) + 1)
    detected = counts / integration_time_s
    if detector_efficiency is not None and mode == "first-n":
        eff = np.asarray(detector_efficiency, dtype=np.float64)
        if eff.shape[0] != len(streams):
            raise DomainError(
                f"need one detector efficiency per channel, got {eff.shape[0]}"
            )
        if np.any((eff <= 0) | (eff > 1)):
            raise DomainError("detector efficiencies must be in (0, 1]")
        corr = np.cumprod(eff)[1:]
        generated = detected / corr
    else:
        generated = np.full(ns.shape[0], np.nan)
    return NfoldTable(
        ns=ns, counts=counts, detected_rate_hz=detected,
        generated_rate_hz=generated, integration_time_s=integration_time_s,
        mode=mode,
    )


def fit_pn(rates_hz, slots_per_second: float, source_prob: float) -> float:
    """Per-channel efficiency from the geometric decay of n-fold rates.

    With per-slot delivered probability s * p the n-fold generation
    rate is R_n = S (s p)^n for slot rate S, so ln P_n = n ln(s p) with
    P_n = R_n / S.  The closed-form least-squares slope through the
    origin gives ln(s p) = sum(n ln P_n) / sum(n^2); dividing by the
    source probability s returns p.  Accepts {n: rate} or a (ns, rates)
    pair; a single point inverts exactly.
    """
    if isinstance(rates_hz, dict):
        ns = np.asarray(sorted(rates_hz), dtype=np.float64)
        rates = np.asarray([rates_hz[int(n)] for n in ns], dtype=np.float64)
    else:
        ns, rates = rates_hz
        ns = np.asarray(ns, dtype=np.float64)
        rates = np.asarray(rates, dtype=np.float64)
    if ns.shape[0] < 1:
        raise AnalysisError("need at least one rate point")
    if slots_per_second <= 0:
        raise DomainError(f"slots_per_second must be positive, got {slots_per_second}")
    if not 0.0 < source_prob <= 1.0:
        raise DomainError(f"source_prob must be in (0, 1], got {source_prob}")
    if np.any(ns < 1) or np.any(ns != np.rint(ns)):
        raise AnalysisError(f"orders must be positive integers, got {ns}")
    pn = rates / slots_per_second
    if np.any(pn <= 0):
        raise AnalysisError("all rates must be positive to take logarithms")
    if np.any(pn >= 1):
        raise AnalysisError("per-slot probability >= 1; check slots_per_second")
    ln_q = float((ns * np.log(pn)).sum() / (ns * ns).sum())
    return math.exp(ln_q) / source_prob
