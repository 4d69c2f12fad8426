"""Single-photon source and temporal demultiplexer simulator.

A discrete-event Monte Carlo of a pulsed quantum emitter (blinking,
residual two-photon emission, spectral wander) feeding a multi-channel
temporal-to-spatial demultiplexer, together with the time-tag analysis
that recovers the source figures of merit from the simulated streams.
"""

from .cavity import (
    BrightnessBudget,
    CavitySpec,
    EmitterSpec,
    beta_from_purcell,
    brightness,
    brightness_budget,
    energy_ev_from_wavelength,
    eta_out_from_rates,
    eta_out_from_reflectance,
    purcell_from_lifetimes,
    purcell_from_mode,
    quality_factor,
    reflectance_from_eta_out,
    wavelength_from_energy_ev,
)
from .source import (
    PRESETS,
    PhotonEvents,
    SourceConfig,
    TelegraphProcess,
    calibrate_detuning,
    calibrate_two_photon_prob,
    pairwise_overlap,
    simulate_source,
    t_off_from,
)
from .demux import (
    DemuxConfig,
    DemuxResult,
    RoutingDecision,
    pulses_per_cycle,
    route,
    route_channels,
    simulate_demux,
    synchronizing_delay,
)
from .analysis import (
    BlinkingFit,
    BunchingEnvelope,
    Histogram,
    HomResult,
    NfoldTable,
    SlotGrid,
    bunching_envelope,
    count_nfold,
    fit_blinking,
    fit_pn,
    g2_histogram,
    g2_zero,
    hom_visibility,
    simulate_hom,
    slot_ids,
)
from .pipeline import NfoldSummary, arrival_slot_grid, run_nfold_pipeline
from .config import AnalysisConfig, RunConfig, RunParams, load_run_config
from .errors import (
    AnalysisError,
    CapacityError,
    ConfigError,
    ConvergenceError,
    DomainError,
    FormatError,
)
from . import timetags

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "timetags",
    # cavity
    "BrightnessBudget", "CavitySpec", "EmitterSpec", "beta_from_purcell",
    "brightness", "brightness_budget", "energy_ev_from_wavelength",
    "eta_out_from_rates", "eta_out_from_reflectance", "purcell_from_lifetimes",
    "purcell_from_mode", "quality_factor", "reflectance_from_eta_out",
    "wavelength_from_energy_ev",
    # source
    "PRESETS", "PhotonEvents", "SourceConfig", "TelegraphProcess",
    "calibrate_detuning", "calibrate_two_photon_prob", "pairwise_overlap",
    "simulate_source", "t_off_from",
    # demux
    "DemuxConfig", "DemuxResult", "RoutingDecision", "pulses_per_cycle",
    "route", "route_channels", "simulate_demux", "synchronizing_delay",
    # analysis
    "BlinkingFit", "BunchingEnvelope", "Histogram", "HomResult", "NfoldTable",
    "SlotGrid", "bunching_envelope", "count_nfold", "fit_blinking", "fit_pn",
    "g2_histogram", "g2_zero", "hom_visibility", "simulate_hom", "slot_ids",
    # pipeline
    "NfoldSummary", "arrival_slot_grid", "run_nfold_pipeline",
    # config
    "AnalysisConfig", "RunConfig", "RunParams", "load_run_config",
    # errors
    "AnalysisError", "CapacityError", "ConfigError", "ConvergenceError",
    "DomainError", "FormatError",
]
