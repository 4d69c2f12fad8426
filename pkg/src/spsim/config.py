"""Run configuration: strict JSON loading for the command line tools.

A run file has four sections, each mapping onto one dataclass:

    {
      "source":   {... SourceConfig fields ...},
      "demux":    {... DemuxConfig fields ...},
      "analysis": {... AnalysisConfig fields ...},
      "run":      {... RunParams fields ...}
    }

Every section is optional (defaults apply) but unknown sections and
unknown keys are rejected, not ignored: a typo that silently reverts a
parameter to its default is the most expensive failure mode a long
simulation can have.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .demux import DemuxConfig
from .errors import ConfigError
from .source import SourceConfig

__all__ = ["AnalysisConfig", "RunParams", "RunConfig", "load_run_config", "build_section"]


@dataclass(frozen=True)
class AnalysisConfig:
    """Estimator settings used by the analyze and roundtrip commands.

    Lag quantities are picoseconds.  g2 settings size the purity
    histogram; blink settings the wide bunching histogram; hom settings
    the interferometer pass; nfold settings the streaming coincidence
    run (duration in seconds, slot tolerance in seconds).
    """

    g2_bin_width_ps: int = 100
    g2_max_tau_ps: float = 90_000.0
    g2_peak_halfwidth_ps: float = 2_000.0
    g2_n_side_peaks: int = 6
    blink_max_tau_ps: float = 60_000_000.0
    blink_smooth_halfwidth_ps: float = 121_000.0
    hom_delay_periods: int = 1
    hom_peak_halfwidth_ps: float = 2_000.0
    nfold_duration_s: float = 32.0
    nfold_tolerance_s: float = 1.0e-9
    nfold_mode: str = "first-n"

    def validate(self) -> None:
        if self.g2_bin_width_ps < 1:
            raise ConfigError(f"g2_bin_width_ps must be >= 1, got {self.g2_bin_width_ps}")
        for name in (
            "g2_max_tau_ps", "g2_peak_halfwidth_ps", "blink_max_tau_ps",
            "blink_smooth_halfwidth_ps", "hom_peak_halfwidth_ps",
            "nfold_duration_s", "nfold_tolerance_s",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.g2_n_side_peaks < 1:
            raise ConfigError(f"g2_n_side_peaks must be >= 1, got {self.g2_n_side_peaks}")
        if self.hom_delay_periods < 1:
            raise ConfigError(f"hom_delay_periods must be >= 1, got {self.hom_delay_periods}")
        if self.nfold_mode not in ("first-n", "any-n"):
            raise ConfigError(f"nfold_mode must be 'first-n' or 'any-n', got {self.nfold_mode!r}")


@dataclass(frozen=True)
class RunParams:
    """Execution settings: sizes, seed, threading, output location."""

    run_id: str = "run"
    n_pulses: int = 10_000_000
    seed: int = 1
    threads: int = 1
    out_dir: str = "out"

    def validate(self) -> None:
        if not self.run_id or "/" in self.run_id:
            raise ConfigError(f"run_id must be a non-empty name, got {self.run_id!r}")
        if self.n_pulses < 1:
            raise ConfigError(f"n_pulses must be >= 1, got {self.n_pulses}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")


@dataclass(frozen=True)
class RunConfig:
    """One validated bundle: physics, hardware, estimators, execution."""

    source: SourceConfig
    demux: DemuxConfig
    analysis: AnalysisConfig
    run: RunParams

    def validate(self) -> None:
        self.source.validate()
        self.demux.validate()
        self.analysis.validate()
        self.run.validate()

    def to_dict(self) -> dict:
        return {
            "source": dataclasses.asdict(self.source),
            "demux": dataclasses.asdict(self.demux),
            "analysis": dataclasses.asdict(self.analysis),
            "run": dataclasses.asdict(self.run),
        }


def build_section(cls, data: dict, section: str):
    """Construct a config dataclass, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in section {section!r}: {', '.join(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad value in section {section!r}: {exc}") from exc


_SECTIONS = {
    "source": SourceConfig,
    "demux": DemuxConfig,
    "analysis": AnalysisConfig,
    "run": RunParams,
}


def load_run_config(path) -> RunConfig:
    """Load and validate a JSON run file; see the module docstring."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = sorted(set(raw) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"{path}: unknown section(s): {', '.join(unknown)}")
    parts = {
        name: build_section(cls, raw.get(name, {}), name)
        for name, cls in _SECTIONS.items()
    }
    config = RunConfig(**parts)
    config.validate()
    return config
