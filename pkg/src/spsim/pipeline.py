"""End-to-end n-fold coincidence pipeline for long integrations.

Materializing every emitted photon of a multi-hour run wastes memory
on the ~95% that never survive to a detector.  For slot-coincidence
counting the chain "bright AND delivered AND routed AND survives" is
one Bernoulli draw per usable slot per channel, so this pipeline
samples detections directly: per channel, slot hits are generated by
geometric gap skipping (identical in law to per-slot Bernoulli draws),
thinned by the shared blink telegraph when the duty cycle is below
one, and each hit gets an honest exponential emission delay before the
slot-tolerance test.  Chunks split at cycle boundaries; a coincidence
slot never spans chunks, so per-chunk counts add exactly.

The conditional two-photon impurity is ignored here: a second photon
in an already-occupied slot cannot change slot occupancy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import NfoldTable, SlotGrid, _nfold_counts_from_ids, slot_ids
from .demux import DemuxConfig, pulses_per_cycle, synchronizing_delay
from .errors import CapacityError, DomainError
from .source import SourceConfig, TelegraphProcess

__all__ = ["NfoldSummary", "arrival_slot_grid", "run_nfold_pipeline"]

_PS = 1e12
_MAX_TELEGRAPH_FLIPS = 100_000_000


@dataclass(frozen=True)
class NfoldSummary:
    """Streaming pipeline output: coincidence table plus bookkeeping."""

    table: NfoldTable
    grid: SlotGrid
    duration_s: float
    n_cycles: int
    per_channel_detected: np.ndarray

    @property
    def per_channel_rate_hz(self) -> np.ndarray:
        return self.per_channel_detected / self.duration_s


def arrival_slot_grid(source_config: SourceConfig, demux_config: DemuxConfig) -> SlotGrid:
    """Slot comb at the detectors after synchronizing delays.

    A photon of cycle k, channel c, intra-pack position j is emitted at
    pulse (k ppc + c pack + j) and delayed by (n-1-c) pack periods, so
    every channel's pack lands on slots k ppc + j counted from an
    origin of (n-1) pack periods.
    """
    period_ps = int(round(source_config.pulse_period * _PS))
    ppc = pulses_per_cycle(demux_config, source_config.pulse_period)
    step_ps = demux_config.delay_step * _PS
    if abs(step_ps - demux_config.pack_size * period_ps) > 0.5:
        raise DomainError(
            "delay_step must equal pack_size pulse periods for packs to "
            f"overlap in time (got {demux_config.delay_step} s)"
        )
    origin = (demux_config.n_channels - 1) * demux_config.pack_size * period_ps
    return SlotGrid(
        origin_ps=origin,
        period_ps=period_ps,
        slots_per_cycle=demux_config.pack_size,
        cycle_len_pulses=ppc,
    )


def _slot_hits(rng: np.random.Generator, p: float, n_slots: int) -> np.ndarray:
    """Ordinals of hit slots among n_slots iid Bernoulli(p) trials."""
    if p <= 0.0:
        return np.zeros(0, dtype=np.int64)
    parts = []
    last = -1
    batch = max(1024, int(n_slots * p * 1.05) + 64)
    while last < n_slots:
        gaps = rng.geometric(p, batch).astype(np.int64)
        pos = last + np.cumsum(gaps)
        parts.append(pos)
        last = int(pos[-1])
    hits = np.concatenate(parts)
    return hits[: int(np.searchsorted(hits, n_slots, side="left"))]


def run_nfold_pipeline(
    source_config: SourceConfig,
    demux_config: DemuxConfig,
    duration_s: float,
    rng_seed: int,
    tolerance_s: float = 1e-9,
    mode: str = "first-n",
    chunk_cycles: int = 1 << 22,
) -> NfoldSummary:
    """Simulate detections for ``duration_s`` and count n-fold events.

    The duration rounds to a whole number of demultiplexer cycles.
    Results depend only on (configs, duration, seed); chunking is fixed
    at ``chunk_cycles`` so the draw order never varies with memory.
    """
    source_config.validate()
    demux_config.validate()
    if duration_s <= 0.0:
        raise DomainError(f"duration_s must be positive, got {duration_s}")

    grid = arrival_slot_grid(source_config, demux_config)
    period_ps = grid.period_ps
    ppc = grid.cycle_len_pulses
    pack = demux_config.pack_size
    n_ch = demux_config.n_channels
    lifetime_ps = source_config.lifetime * _PS
    cycle_s = ppc * period_ps * 1e-12
    n_cycles = max(int(round(duration_s / cycle_s)), 1)
    duration_s = n_cycles * cycle_s

    p_slot = np.asarray(
        [
            source_config.in_fiber_prob * demux_config.survival_probability(c)
            for c in range(n_ch)
        ]
    )
    delay_ps = np.asarray(
        [round(synchronizing_delay(c, demux_config) * _PS) for c in range(n_ch)]
    )

    seeds = np.random.SeedSequence(rng_seed).spawn(n_ch + 1)
    chan_rng = [np.random.default_rng(s) for s in seeds[:n_ch]]
    telegraph = None
    if source_config.q_on < 1.0:
        horizon_ps = float(n_cycles) * ppc * period_ps
        mean_dwell_ps = (source_config.t_on + source_config.t_off) * _PS
        if horizon_ps / mean_dwell_ps > _MAX_TELEGRAPH_FLIPS:
            raise CapacityError(
                f"a {duration_s:.0f} s run needs more than "
                f"{_MAX_TELEGRAPH_FLIPS} telegraph flips; shorten the run "
                "or set q_on = 1"
            )
        telegraph = TelegraphProcess(
            source_config, horizon_ps, np.random.default_rng(seeds[n_ch])
        )

    tol_ps = tolerance_s * _PS
    counts = np.zeros(n_ch - 1, dtype=np.int64)
    detected = np.zeros(n_ch, dtype=np.int64)
    for k0 in range(0, n_cycles, chunk_cycles):
        cyc = min(chunk_cycles, n_cycles - k0)
        n_slots = cyc * pack
        ids = []
        for c in range(n_ch):
            hits = _slot_hits(chan_rng[c], float(p_slot[c]), n_slots)
            k = k0 + hits // pack
            j = hits % pack
            pulse_idx = (k * ppc + c * pack + j).astype(np.float64)
            pulse_t = pulse_idx * period_ps
            if telegraph is not None:
                keep = telegraph.bright_at(pulse_t)
                pulse_t = pulse_t[keep]
            n_kept = pulse_t.shape[0]
            jit = chan_rng[c].exponential(lifetime_ps, n_kept)
            ts = np.rint(pulse_t + jit + delay_ps[c]).astype(np.int64)
            detected[c] += n_kept
            ids.append(slot_ids(ts, grid, tol_ps))
        counts += _nfold_counts_from_ids(ids, mode)

    ns = np.arange(2, n_ch + 1)
    detected_rate = counts / duration_s
    if mode == "first-n":
        corr = np.cumprod(np.asarray(demux_config.detector_efficiency))[1:]
        generated_rate = detected_rate / corr
    else:
        generated_rate = np.full(n_ch - 1, np.nan)
    table = NfoldTable(
        ns=ns,
        counts=counts,
        detected_rate_hz=detected_rate,
        generated_rate_hz=generated_rate,
        integration_time_s=duration_s,
        mode=mode,
    )
    return NfoldSummary(
        table=table,
        grid=grid,
        duration_s=duration_s,
        n_cycles=n_cycles,
        per_channel_detected=detected,
    )
