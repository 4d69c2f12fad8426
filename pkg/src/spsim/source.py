"""Pulsed single-photon emission Monte Carlo.

Per excitation pulse the emitter delivers at most one primary photon:
the dot must be in its bright telegraph state and an independent
Bernoulli draw with the in-fiber probability must succeed.  Emission
time is the pulse epoch plus an exponential radiative delay.  With a
small conditional probability a residual second photon follows the
primary within the same pulse, again exponentially delayed.

Spectral wander is an Ornstein-Uhlenbeck detuning sampled exactly at
the emission times.  Two photons emitted a time ``dt`` apart have mean
squared detuning difference ``2 sigma^2 (1 - exp(-dt/tau))``; averaging
the Lorentzian-vs-detuning overlap over that Gaussian gives the closed
form in pairwise_overlap, used for wavepacket-overlap bookkeeping.

Randomness is split into named child streams (telegraph, delivery,
radiative jitter, impurity choice, impurity jitter, detuning) so that
changing one physics knob never perturbs draws for the others; pulses
are processed in fixed chunks so results are byte-identical for a
given (config, n_pulses) pair regardless of platform or memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy.optimize import brentq
from scipy.special import erfcx

from .errors import CapacityError, ConvergenceError, DomainError
from . import timetags

__all__ = [
    "SourceConfig",
    "PhotonEvents",
    "TelegraphProcess",
    "PRESETS",
    "t_off_from",
    "simulate_source",
    "calibrate_two_photon_prob",
    "pairwise_overlap",
    "calibrate_detuning",
]

_CHUNK_PULSES = 1 << 20  # fixed so RNG draw order never depends on memory
_PS = 1e12


def t_off_from(q_on: float, t_on: float) -> float:
    """Mean dark dwell time from the bright duty cycle and bright dwell.

    Stationarity of the two-state telegraph gives
    q = t_on / (t_on + t_off), hence t_off = t_on (1 - q) / q.
    """
    if not 0.0 < q_on < 1.0:
        raise DomainError(f"q_on must be in (0, 1), got {q_on}")
    if t_on <= 0.0:
        raise DomainError(f"t_on must be positive, got {t_on}")
    return t_on * (1.0 - q_on) / q_on


def _overlap_closed_form(dt_s, sigma: float, tau: float, lifetime: float):
    """sqrt(pi) r erfcx(r) with r = Gamma / sqrt(2 v(dt)), vectorized."""
    dt = np.asarray(dt_s, dtype=np.float64)
    gamma = 1.0 / lifetime
    var = 2.0 * sigma * sigma * (1.0 - np.exp(-dt / tau))
    out = np.ones_like(dt)
    pos = var > 0.0
    r = gamma / np.sqrt(2.0 * var[pos])
    out[pos] = math.sqrt(math.pi) * r * erfcx(r)
    if np.any(dt < 0.0):
        raise DomainError("pair separation must be non-negative")
    return out


def calibrate_detuning(
    overlap_near: float = 0.93,
    overlap_far: float = 0.91,
    dt_near_s: float = 12.1e-9,
    dt_far_s: float = 242.0e-9,
    lifetime_s: float = 184.0e-12,
) -> tuple[float, float]:
    """Solve (sigma, tau) so the overlap model hits two measured points.

    The far point is taken on the saturated plateau (dt >> tau), fixing
    sigma; tau then follows from the near point.  Returns
    (sigma in rad/s, tau in seconds).
    """
    if not 0.0 < overlap_far < overlap_near < 1.0:
        raise DomainError("need 0 < overlap_far < overlap_near < 1")
    gamma = 1.0 / lifetime_s

    def plateau(sigma):
        r = gamma / (2.0 * sigma)
        return math.sqrt(math.pi) * r * erfcx(r) - overlap_far

    sigma = brentq(plateau, 1e-6 * gamma, 1e3 * gamma, xtol=1e-30, rtol=1e-15)

    def near(tau):
        return (
            float(_overlap_closed_form(dt_near_s, sigma, tau, lifetime_s))
            - overlap_near
        )

    # Default xtol (2e-12, absolute) is far too coarse for tau ~ 1e-8 s.
    tau = brentq(near, 1e-3 * dt_near_s, 1e4 * dt_near_s, xtol=1e-24, rtol=1e-15)
    return float(sigma), float(tau)


# Matches the measured overlap at one and twenty pulse separations.
DEFAULT_DETUNING_SIGMA, DEFAULT_DETUNING_TAU = calibrate_detuning()


@dataclass(frozen=True)
class SourceConfig:
    """Emitter and collection parameters.

    All times are seconds; detuning_sigma is rad/s.  two_photon_prob is
    the conditional probability that a delivered pulse carries a second
    photon.  The defaults describe a neutral-exciton line: 59% bright
    duty cycle with 5.2 us bright dwell, 184 ps lifetime, 10% delivered
    fraction, and spectral wander calibrated to the measured two-photon
    overlap at short and long pulse separation.
    """

    pulse_period: float = 12.1e-9
    lifetime: float = 184.0e-12
    q_on: float = 0.59
    t_on: float = 5.2e-6
    two_photon_prob: float = 0.0
    in_fiber_prob: float = 0.10
    detuning_sigma: float = DEFAULT_DETUNING_SIGMA
    detuning_tau: float = DEFAULT_DETUNING_TAU
    rng_seed: int = 1

    def validate(self) -> None:
        if self.pulse_period <= 0.0:
            raise DomainError(f"pulse_period must be positive, got {self.pulse_period}")
        if self.lifetime <= 0.0:
            raise DomainError(f"lifetime must be positive, got {self.lifetime}")
        if not 0.0 < self.q_on <= 1.0:
            raise DomainError(f"q_on must be in (0, 1], got {self.q_on}")
        if self.t_on <= 0.0:
            raise DomainError(f"t_on must be positive, got {self.t_on}")
        if not 0.0 <= self.two_photon_prob < 1.0:
            raise DomainError(
                f"two_photon_prob must be in [0, 1), got {self.two_photon_prob}"
            )
        if not 0.0 < self.in_fiber_prob <= 1.0:
            raise DomainError(
                f"in_fiber_prob must be in (0, 1], got {self.in_fiber_prob}"
            )
        if self.detuning_sigma < 0.0:
            raise DomainError(
                f"detuning_sigma must be non-negative, got {self.detuning_sigma}"
            )
        if self.detuning_tau <= 0.0:
            raise DomainError(
                f"detuning_tau must be positive, got {self.detuning_tau}"
            )

    @property
    def t_off(self) -> float:
        return t_off_from(self.q_on, self.t_on)


PRESETS = {
    "neutral-exciton": SourceConfig(),
    # Charged-exciton line on the same chip: far lower bright duty cycle.
    "trion": replace(SourceConfig(), q_on=0.10),
}


@dataclass(frozen=True)
class TelegraphState:
    """Instantaneous blink state: bright flag plus the next flip epoch."""

    bright: bool
    next_flip_ps: float


class TelegraphProcess:
    """Two-state random telegraph sampled over a fixed horizon.

    Dwell times are exponential with means t_on (bright) and t_off
    (dark); the initial state and its residual dwell are drawn from the
    stationary law, so the bright probability is q_on at every instant.
    Flip times are materialized up to ``horizon_ps`` (plus one complete
    dwell beyond it, so interval statistics near the edge stay unbiased).
    """

    def __init__(self, config: SourceConfig, horizon_ps: float, rng: np.random.Generator):
        self._t_on_ps = config.t_on * _PS
        if config.q_on >= 1.0:
            # Degenerate always-bright case: no flips ever.
            self.initial_bright = True
            self.flip_times_ps = np.zeros(0, dtype=np.float64)
            return
        t_off_ps = t_off_from(config.q_on, config.t_on) * _PS
        self.initial_bright = bool(rng.random() < config.q_on)
        # Residual dwell of a stationary renewal interval is exponential
        # again for exponential dwells, so the first draw needs no bias.
        batch = max(256, int(horizon_ps / (self._t_on_ps + t_off_ps)) + 16)
        batch += batch & 1  # even batches leave the dwell parity unchanged
        scales = np.empty(batch, dtype=np.float64)
        scales[0::2] = self._t_on_ps if self.initial_bright else t_off_ps
        scales[1::2] = t_off_ps if self.initial_bright else self._t_on_ps
        parts = []
        t = 0.0
        while t <= horizon_ps:
            seg = t + np.cumsum(rng.exponential(1.0, batch) * scales)
            parts.append(seg)
            t = float(seg[-1])
        flips = np.concatenate(parts)
        keep = int(np.searchsorted(flips, horizon_ps, side="right")) + 1
        self.flip_times_ps = flips[:keep]

    def bright_at(self, times_ps) -> np.ndarray:
        """Vectorized state lookup."""
        times_ps = np.asarray(times_ps, dtype=np.float64)
        n_flips = np.searchsorted(self.flip_times_ps, times_ps, side="right")
        odd = (n_flips & 1).astype(bool)
        return odd != self.initial_bright

    def state_at(self, time_ps: float) -> TelegraphState:
        i = int(np.searchsorted(self.flip_times_ps, time_ps, side="right"))
        bright = bool(self.bright_at(np.asarray([time_ps]))[0])
        nxt = (
            float(self.flip_times_ps[i]) if i < self.flip_times_ps.shape[0] else math.inf
        )
        return TelegraphState(bright=bright, next_flip_ps=nxt)

    def complete_intervals_ps(self, bright: bool) -> np.ndarray:
        """Durations of fully-realized dwells in the requested state."""
        f = self.flip_times_ps
        if f.shape[0] < 2:
            return np.zeros(0, dtype=np.float64)
        d = np.diff(f)
        # Interval k (between flips k and k+1) has the state opposite to
        # the initial one when k is even.
        state_of_interval = np.empty(d.shape[0], dtype=bool)
        state_of_interval[0::2] = not self.initial_bright
        state_of_interval[1::2] = self.initial_bright
        return d[state_of_interval == bright]


@dataclass(frozen=True)
class PhotonEvents:
    """Columnar emission record, strictly ordered by emission time.

    time_ps is the absolute emission time in picoseconds (float64 keeps
    sub-ps precision out to ~100 days); detuning_rad_s is the frequency
    offset sampled at emission; is_impurity marks residual second
    photons of a pulse.
    """

    pulse_index: np.ndarray
    time_ps: np.ndarray
    detuning_rad_s: np.ndarray
    is_impurity: np.ndarray
    pulse_period_ps: int
    n_pulses: int

    def __len__(self) -> int:
        return self.pulse_index.shape[0]

    @property
    def emission_time_s(self) -> np.ndarray:
        return self.time_ps * 1e-12

    @property
    def jitter_ps(self) -> np.ndarray:
        return self.time_ps - self.pulse_index.astype(np.float64) * self.pulse_period_ps

    def to_tags(self, channel: int = 255) -> np.ndarray:
        """Round to integer picoseconds on one pseudo-channel."""
        flags = np.where(self.is_impurity, timetags.FLAG_IMPURITY, 0)
        return timetags.make_tags(
            np.rint(self.time_ps).astype(np.uint64), channel, flags
        )


@njit(cache=True)
def _ou_path(phi: np.ndarray, z: np.ndarray, sigma: float) -> np.ndarray:
    """Exact OU update chained over irregular gaps; phi[k] = exp(-dt_k/tau)."""
    n = z.shape[0]
    x = np.empty(n, dtype=np.float64)
    if n == 0:
        return x
    x[0] = sigma * z[0]
    for k in range(1, n):
        p = phi[k]
        x[k] = p * x[k - 1] + sigma * math.sqrt(1.0 - p * p) * z[k]
    return x


def _spawn_streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("telegraph", "delivery", "jitter", "impurity", "impurity_jitter", "detuning")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(s) for n, s in zip(names, children)}


def simulate_source(
    config: SourceConfig,
    n_pulses: int,
    max_events: int = 60_000_000,
) -> PhotonEvents:
    """Run the emission Monte Carlo for ``n_pulses`` excitation pulses.

    Raises CapacityError if the event count would exceed ``max_events``
    (the expected count is about n_pulses * q_on * in_fiber_prob).
    """
    config.validate()
    if n_pulses <= 0:
        raise DomainError(f"n_pulses must be positive, got {n_pulses}")
    period_ps = config.pulse_period * _PS
    lifetime_ps = config.lifetime * _PS
    streams = _spawn_streams(config.rng_seed)

    expected = n_pulses * config.q_on * config.in_fiber_prob
    if expected * (1.0 + config.two_photon_prob) > max_events * 1.05 + 1024:
        raise CapacityError(
            f"expected ~{expected:.3g} events exceeds budget {max_events}"
        )

    telegraph = TelegraphProcess(config, n_pulses * period_ps, streams["telegraph"])

    idx_parts: list[np.ndarray] = []
    time_parts: list[np.ndarray] = []
    imp_parts: list[np.ndarray] = []
    total = 0
    for start in range(0, n_pulses, _CHUNK_PULSES):
        stop = min(start + _CHUNK_PULSES, n_pulses)
        count = stop - start
        pulse_t = np.arange(start, stop, dtype=np.float64) * period_ps
        delivered = streams["delivery"].random(count) < config.in_fiber_prob
        if config.q_on < 1.0:
            delivered &= telegraph.bright_at(pulse_t)
        hit = np.flatnonzero(delivered)
        n_hit = hit.shape[0]
        jit = streams["jitter"].exponential(lifetime_ps, n_hit)
        second = streams["impurity"].random(n_hit) < config.two_photon_prob
        n_sec = int(second.sum())
        jit2 = streams["impurity_jitter"].exponential(lifetime_ps, n_sec)

        p_idx = (start + hit).astype(np.uint64)
        p_time = pulse_t[hit] + jit
        s_idx = p_idx[second]
        s_time = p_time[second] + jit2

        idx_parts.append(p_idx)
        time_parts.append(p_time)
        imp_parts.append(np.zeros(n_hit, dtype=bool))
        if n_sec:
            idx_parts.append(s_idx)
            time_parts.append(s_time)
            imp_parts.append(np.ones(n_sec, dtype=bool))
        total += n_hit + n_sec
        if total > max_events:
            raise CapacityError(
                f"event budget {max_events} exceeded after pulse {stop}"
            )

    pulse_index = np.concatenate(idx_parts) if idx_parts else np.zeros(0, np.uint64)
    time_ps = np.concatenate(time_parts) if time_parts else np.zeros(0, np.float64)
    is_impurity = np.concatenate(imp_parts) if imp_parts else np.zeros(0, bool)

    order = np.argsort(time_ps, kind="stable")
    pulse_index = pulse_index[order]
    time_ps = time_ps[order]
    is_impurity = is_impurity[order]

    if config.detuning_sigma > 0.0 and time_ps.shape[0]:
        tau_ps = config.detuning_tau * _PS
        phi = np.empty_like(time_ps)
        phi[0] = 0.0
        np.exp(-np.diff(time_ps) / tau_ps, out=phi[1:])
        z = streams["detuning"].standard_normal(time_ps.shape[0])
        detuning = _ou_path(phi, z, config.detuning_sigma)
    else:
        detuning = np.zeros_like(time_ps)

    return PhotonEvents(
        pulse_index=pulse_index,
        time_ps=time_ps,
        detuning_rad_s=detuning,
        is_impurity=is_impurity,
        pulse_period_ps=int(round(period_ps)),
        n_pulses=n_pulses,
    )


def pairwise_overlap(dt_s, config: SourceConfig):
    """Mean two-photon wavepacket overlap at emission separation dt.

    Averages the Lorentzian overlap 1/(1 + (delta/Gamma)^2) over the
    Gaussian relative detuning of the OU wander, which reduces to
    sqrt(pi) r erfcx(r) with r = Gamma/sqrt(2 v), v = 2 sigma^2
    (1 - exp(-dt/tau)).  Accepts scalars or arrays; returns 1 at dt=0
    or when wander is disabled.
    """
    if config.detuning_sigma == 0.0:
        return np.ones_like(np.asarray(dt_s, dtype=np.float64)) if np.ndim(dt_s) else 1.0
    out = _overlap_closed_form(
        dt_s, config.detuning_sigma, config.detuning_tau, config.lifetime
    )
    return out if np.ndim(dt_s) else float(out)


def calibrate_two_photon_prob(
    g2_target: float,
    config: SourceConfig,
    n_pulses_probe: int = 10_000_000,
    rel_tol: float = 0.05,
    max_iter: int = 40,
) -> float:
    """Find the impurity probability that reproduces a target g2(0).

    Probes run the full Monte Carlo plus histogram estimator with common
    random numbers (same seed, impurity stream isolated), so the
    measured g2 is monotone in the knob and bisection converges without
    statistical flapping.  Raises ConvergenceError if the bracket or
    tolerance cannot be met within max_iter probes.
    """
    from .analysis import g2_histogram, g2_zero

    if g2_target < 0.0:
        raise DomainError(f"g2_target must be non-negative, got {g2_target}")
    if g2_target == 0.0:
        return 0.0
    period_ps = int(round(config.pulse_period * _PS))

    def probe(eps: float) -> float:
        ev = simulate_source(replace(config, two_photon_prob=eps), n_pulses_probe)
        ts = np.rint(ev.time_ps).astype(np.int64)
        hist = g2_histogram(
            ts, ts, bin_width_ps=100, max_tau_ps=7 * period_ps, same_stream=True
        )
        return g2_zero(hist, pulse_period_ps=period_ps, peak_halfwidth_ps=2000)

    lo, hi = 0.0, min(0.5, max(4.0 * g2_target * config.in_fiber_prob, 1e-6))
    g_hi = probe(hi)
    n_probe = 1
    while g_hi < g2_target:
        if hi >= 0.5 or n_probe >= max_iter:
            raise ConvergenceError(
                f"cannot bracket g2 target {g2_target}: g2({hi:.3g}) = {g_hi:.3g}"
            )
        hi = min(0.5, hi * 4.0)
        g_hi = probe(hi)
        n_probe += 1

    best, best_err = hi, abs(g_hi - g2_target)
    while n_probe < max_iter:
        mid = 0.5 * (lo + hi)
        g_mid = probe(mid)
        n_probe += 1
        err = abs(g_mid - g2_target)
        if err < best_err:
            best, best_err = mid, err
        if err <= rel_tol * g2_target:
            return mid
        if g_mid < g2_target:
            lo = mid
        else:
            hi = mid
    if best_err <= rel_tol * g2_target:
        return best
    raise ConvergenceError(
        f"two-photon calibration missed tolerance: best |g2 - target| = {best_err:.3g}"
    )
