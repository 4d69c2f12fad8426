"""Temporal-to-spatial demultiplexer: routing, delays, detection.

An electro-optic switch chops the pulse train into repeating cycles of
``pulses_per_cycle`` pulses and deals consecutive packs of ``pack_size``
pulses to output channels 0, 1, ... in order.  Pulses beyond
n_channels * pack_size in each cycle fall outside the switching window
and are discarded.  Channel c then passes through a delay line of
(n_channels - 1 - c) * delay_step so all packs of one cycle arrive in
the same time window, and ends on a detector with its own efficiency.

Losses are lumped per channel into one Bernoulli survival draw:
switch transmission x coupler transmission x channel efficiency x
detector efficiency.  Detected tags get integer-picosecond timestamps,
optional Gaussian detector jitter, and optional uniform dark counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import timetags
from .errors import ConfigError, DomainError

__all__ = [
    "DemuxConfig",
    "RoutingDecision",
    "DemuxResult",
    "pulses_per_cycle",
    "route",
    "route_channels",
    "synchronizing_delay",
    "simulate_demux",
]

_PS = 1e12


@dataclass(frozen=True)
class DemuxConfig:
    """Switch, delay and detector parameters.

    channel_efficiency and detector_efficiency must each have one entry
    per channel.  cycle_rate is the full demultiplexer cycle frequency
    in Hz; delay_step the per-channel synchronizing delay in seconds.
    dark_count_rate (Hz per detector) and detector_jitter_sigma
    (seconds, Gaussian) default to off; coupler_transmission models any
    extra per-channel coupling loss common to all channels.
    """

    n_channels: int = 6
    pack_size: int = 4
    cycle_rate: float = 1.6e6
    delay_step: float = 48.4e-9
    channel_efficiency: tuple = (0.51, 0.51, 0.51, 0.51, 0.51, 0.51)
    pockels_transmission: float = 0.999
    detector_efficiency: tuple = (0.86, 0.86, 0.87, 0.86, 0.85, 0.85)
    coupler_transmission: float = 1.0
    detector_jitter_sigma: float = 0.0
    dark_count_rate: float = 0.0

    def validate(self) -> None:
        if self.n_channels < 1:
            raise ConfigError(f"n_channels must be >= 1, got {self.n_channels}")
        if self.pack_size < 1:
            raise ConfigError(f"pack_size must be >= 1, got {self.pack_size}")
        if self.cycle_rate <= 0.0:
            raise ConfigError(f"cycle_rate must be positive, got {self.cycle_rate}")
        if self.delay_step < 0.0:
            raise ConfigError(f"delay_step must be >= 0, got {self.delay_step}")
        for name in ("channel_efficiency", "detector_efficiency"):
            values = getattr(self, name)
            if len(values) != self.n_channels:
                raise ConfigError(
                    f"{name} needs {self.n_channels} entries, got {len(values)}"
                )
            if any(not 0.0 < v <= 1.0 for v in values):
                raise ConfigError(f"{name} entries must be in (0, 1], got {values}")
        for name in ("pockels_transmission", "coupler_transmission"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1], got {v}")
        if self.detector_jitter_sigma < 0.0:
            raise ConfigError(
                f"detector_jitter_sigma must be >= 0, got {self.detector_jitter_sigma}"
            )
        if self.dark_count_rate < 0.0:
            raise ConfigError(
                f"dark_count_rate must be >= 0, got {self.dark_count_rate}"
            )

    def survival_probability(self, channel: int) -> float:
        """End-to-end detection probability for a pulse routed to channel."""
        return (
            self.pockels_transmission
            * self.coupler_transmission
            * self.channel_efficiency[channel]
            * self.detector_efficiency[channel]
        )


@dataclass(frozen=True)
class RoutingDecision:
    """Where one pulse goes: channel index, or None when discarded."""

    pulse_index: int
    channel: int | None


def pulses_per_cycle(config: DemuxConfig, pulse_period: float) -> int:
    """Laser pulses per demultiplexer cycle, truncated to a whole pulse.

    The cycle clock is free-running relative to the pulse train only in
    configuration; in operation both derive from one oscillator, and a
    partial trailing pulse is never switched, so the count rounds down.
    Raises ConfigError when the packs do not fit in one cycle.
    """
    if pulse_period <= 0.0:
        raise DomainError(f"pulse_period must be positive, got {pulse_period}")
    config.validate()
    ppc = int(math.floor(1.0 / (config.cycle_rate * pulse_period)))
    if ppc < 1:
        raise ConfigError(
            f"cycle of {1.0 / config.cycle_rate:.3e} s holds no full pulse period"
        )
    if config.n_channels * config.pack_size > ppc:
        raise ConfigError(
            f"{config.n_channels} channels x {config.pack_size} pulses exceed "
            f"the {ppc}-pulse cycle"
        )
    return ppc


def route_channels(pulse_indices, config: DemuxConfig, pulse_period: float) -> np.ndarray:
    """Vectorized routing: channel per pulse, -1 for discarded pulses."""
    ppc = pulses_per_cycle(config, pulse_period)
    phase = np.asarray(pulse_indices, dtype=np.int64) % ppc
    ch = phase // config.pack_size
    return np.where(ch < config.n_channels, ch, -1).astype(np.int8)


def route(pulse_index: int, config: DemuxConfig, pulse_period: float) -> RoutingDecision:
    """Routing decision for a single pulse index."""
    if pulse_index < 0:
        raise DomainError(f"pulse_index must be >= 0, got {pulse_index}")
    ch = int(route_channels(np.asarray([pulse_index]), config, pulse_period)[0])
    return RoutingDecision(pulse_index=pulse_index, channel=None if ch < 0 else ch)


def synchronizing_delay(channel: int, config: DemuxConfig) -> float:
    """Delay line length (seconds) that aligns channel packs in time.

    Channel 0 is switched first and waits longest: delay falls by one
    delay_step per channel, reaching zero on the last channel.
    """
    if not 0 <= channel < config.n_channels:
        raise IndexError(
            f"channel {channel} out of range for {config.n_channels} channels"
        )
    return (config.n_channels - 1 - channel) * config.delay_step


@dataclass(frozen=True)
class DemuxResult:
    """Per-channel detected tag arrays plus routing bookkeeping."""

    channels: list
    routed_counts: np.ndarray
    discarded_count: int
    detected_counts: np.ndarray
    duration_s: float

    def merged(self) -> np.ndarray:
        return timetags.merge_arrays(self.channels)


def simulate_demux(
    events,
    config: DemuxConfig,
    pulse_period: float,
    rng_seed: int,
) -> DemuxResult:
    """Route emitted photons, apply losses, and time-tag detections.

    ``events`` is a PhotonEvents record; its pulse indices choose the
    channel, its emission times (plus the channel's synchronizing
    delay, optional detector jitter, and rounding to integer
    picoseconds) become detected timestamps.  One uniform draw per
    routed photon decides survival; draw order is fixed by the event
    order, so results depend only on (events, config, rng_seed).
    """
    config.validate()
    rng = np.random.default_rng(rng_seed)
    period_ps = int(round(pulse_period * _PS))
    step_ps = config.delay_step * _PS

    ch = route_channels(events.pulse_index, config, pulse_period)
    routed = ch >= 0
    discarded = int((~routed).sum())
    routed_counts = np.bincount(ch[routed], minlength=config.n_channels)

    p = np.asarray(
        [config.survival_probability(c) for c in range(config.n_channels)]
    )
    survive = np.zeros(len(events), dtype=bool)
    survive[routed] = rng.random(int(routed.sum())) < p[ch[routed]]

    t = events.time_ps[survive].copy()
    c_kept = ch[survive]
    flags = np.where(events.is_impurity[survive], timetags.FLAG_IMPURITY, 0)
    t += (config.n_channels - 1 - c_kept) * step_ps
    if config.detector_jitter_sigma > 0.0:
        t += rng.normal(0.0, config.detector_jitter_sigma * _PS, t.shape[0])
        if np.any(t < 0.0):
            raise DomainError("detector jitter pushed a timestamp below zero")

    duration_s = events.n_pulses * pulse_period
    span_ps = events.n_pulses * period_ps + (config.n_channels - 1) * step_ps

    channels = []
    detected = np.zeros(config.n_channels, dtype=np.int64)
    for c in range(config.n_channels):
        sel = c_kept == c
        ts = np.rint(t[sel]).astype(np.uint64)
        fl = flags[sel].astype(np.uint8)
        if config.dark_count_rate > 0.0:
            n_dark = rng.poisson(config.dark_count_rate * duration_s)
            dark_ts = np.rint(rng.random(n_dark) * span_ps).astype(np.uint64)
            ts = np.concatenate([ts, dark_ts])
            fl = np.concatenate([fl, np.zeros(n_dark, dtype=np.uint8)])
        order = np.argsort(ts, kind="stable")
        channels.append(timetags.make_tags(ts[order], c, fl[order]))
        detected[c] = ts.shape[0]

    return DemuxResult(
        channels=channels,
        routed_counts=routed_counts,
        discarded_count=discarded,
        detected_counts=detected,
        duration_s=duration_s,
    )
