"""Command line interface.

Commands:
    cavity     brightness budget from cavity/emitter parameters (JSON in/out)
    simulate   run the source + demultiplexer Monte Carlo, write tag files
    analyze    estimators over tag files: g2, blinking, hom, nfold, pn
    roundtrip  simulate, analyze, and compare recovered vs configured values

Exit codes: 0 success; 2 configuration, input, or validation errors;
3 analysis or convergence failures.  The SPS_SIM_SEED environment
variable overrides the configured seed.  Outputs land under
<out_dir>/<run_id>/{tags,results,report} and contain no wall-clock
timestamps, so a rerun with the same inputs is byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, cavity, demux, pipeline, source, timetags
from .config import AnalysisConfig, RunConfig, build_section, load_run_config
from .errors import (
    AnalysisError,
    CapacityError,
    ConfigError,
    ConvergenceError,
    DomainError,
    FormatError,
)

_PS = 1e12


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    return obj


def _emit(payload: dict, out_path: str | None) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _resolve_seed(seed: int, override: int | None) -> int:
    if override is not None:
        return override
    env = os.environ.get("SPS_SIM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"SPS_SIM_SEED must be an integer, got {env!r}") from exc
    return seed


def _load_tags(path: str) -> np.ndarray:
    tags, _header = timetags.read_stream(path)
    return tags


def cmd_cavity(args) -> None:
    with open(args.params, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.params}: not valid JSON ({exc})") from exc
    spec_keys = set(raw) - {"cavity", "emitter", "branch"}
    if spec_keys:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(spec_keys))}")
    cav = build_section(cavity.CavitySpec, raw.get("cavity", {}), "cavity")
    emi = build_section(cavity.EmitterSpec, raw.get("emitter", {}), "emitter")
    branch = args.branch or raw.get("branch")
    budget = cavity.brightness_budget(cav, emi, branch=branch)
    _emit(dataclasses.asdict(budget), args.out)


def _write_simulation(config: RunConfig, seed: int, run_dir: Path) -> dict:
    src_cfg = dataclasses.replace(config.source, rng_seed=seed)
    events = source.simulate_source(src_cfg, config.run.n_pulses)
    result = demux.simulate_demux(
        events, config.demux, src_cfg.pulse_period, rng_seed=seed + 1
    )
    tags_dir = run_dir / "tags"
    tags_dir.mkdir(parents=True, exist_ok=True)
    meta = {"pulse_period_ps": events.pulse_period_ps, "n_pulses": events.n_pulses}
    timetags.write_stream(
        tags_dir / "source.spstag", events.to_tags(), n_channels=1, metadata=meta
    )
    for c, tags in enumerate(result.channels):
        timetags.write_stream(
            tags_dir / f"channel{c}.spstag",
            tags,
            n_channels=config.demux.n_channels,
            metadata=meta | {"channel": c},
        )
    timetags.write_stream(
        tags_dir / "merged.spstag",
        result.merged(),
        n_channels=config.demux.n_channels,
        metadata=meta,
    )
    summary = {
        "n_pulses": events.n_pulses,
        "n_emitted": len(events),
        "duration_s": result.duration_s,
        "routed_counts": result.routed_counts,
        "discarded_count": result.discarded_count,
        "detected_counts": result.detected_counts,
        "seed": seed,
    }
    results_dir = run_dir / "results"
    results_dir.mkdir(parents=True, exist_ok=True)
    _emit(summary, results_dir / "simulate_summary.json")
    resolved = dataclasses.replace(
        config, source=src_cfg, run=dataclasses.replace(config.run, seed=seed)
    )
    _emit(resolved.to_dict(), results_dir / "resolved_config.json")
    return {"events": events, "result": result, "summary": summary, "config": resolved}


def cmd_simulate(args) -> None:
    config = load_run_config(args.config)
    seed = _resolve_seed(config.run.seed, args.seed)
    out_dir = Path(args.out_dir or config.run.out_dir)
    run_dir = out_dir / config.run.run_id
    sim = _write_simulation(config, seed, run_dir)
    print(
        f"{sim['summary']['n_emitted']} photons over "
        f"{sim['summary']['duration_s']:.6g} s -> {run_dir}"
    )


def cmd_analyze_g2(args) -> None:
    tags_a = _load_tags(args.tags)
    tags_b = _load_tags(args.tags_b) if args.tags_b else tags_a
    hist = analysis.g2_histogram(
        tags_a,
        tags_b,
        bin_width_ps=args.bin_width_ps,
        max_tau_ps=args.max_tau_ps,
        threads=args.threads,
        same_stream=args.tags_b is None,
    )
    value = analysis.g2_zero(
        hist,
        pulse_period_ps=args.pulse_period_ps,
        peak_halfwidth_ps=args.peak_halfwidth_ps,
        n_side_peaks=args.n_side_peaks,
    )
    _emit(
        {
            "g2_zero": value,
            "bin_width_ps": hist.bin_width_ps,
            "n_bins": int(hist.counts.shape[0]),
            "total_pairs": int(hist.counts.sum()),
        },
        args.out,
    )


def cmd_analyze_blinking(args) -> None:
    tags = _load_tags(args.tags)
    hist = analysis.g2_histogram(
        tags,
        tags,
        bin_width_ps=args.bin_width_ps or int(args.pulse_period_ps),
        max_tau_ps=args.max_tau_ps,
        threads=args.threads,
        same_stream=True,
    )
    env = analysis.bunching_envelope(
        hist,
        smooth_halfwidth_ps=args.smooth_halfwidth_ps,
        pulse_period_ps=args.pulse_period_ps,
    )
    fit = analysis.fit_blinking(env)
    _emit(
        {
            "q": fit.q,
            "t_on_s": fit.t_on_s,
            "tau_c_s": fit.tau_c_s,
            "residual": fit.residual,
            "t_on_defined": fit.t_on_defined,
            "span_warning": env.span_warning,
        },
        args.out,
    )


def cmd_analyze_hom(args) -> None:
    tags_a = _load_tags(args.tags_a)
    tags_b = _load_tags(args.tags_b)
    hist = analysis.g2_histogram(
        tags_a,
        tags_b,
        bin_width_ps=args.bin_width_ps,
        max_tau_ps=args.max_tau_ps,
        threads=args.threads,
        same_stream=False,
    )
    result = analysis.hom_visibility(
        hist,
        pulse_period_ps=args.pulse_period_ps,
        peak_halfwidth_ps=args.peak_halfwidth_ps,
        mzi_delay_s=args.mzi_delay_ps * 1e-12 if args.mzi_delay_ps else None,
    )
    _emit(dataclasses.asdict(result), args.out)


def cmd_analyze_nfold(args) -> None:
    streams = [_load_tags(p) for p in args.tags]
    grid = analysis.SlotGrid(
        origin_ps=args.origin_ps,
        period_ps=args.period_ps,
        slots_per_cycle=args.slots_per_cycle,
        cycle_len_pulses=args.cycle_len_pulses,
    )
    table = analysis.count_nfold(
        streams,
        grid,
        tolerance_s=args.tolerance_ps * 1e-12,
        integration_time_s=args.integration_time_s,
        detector_efficiency=args.detector_efficiency,
        mode=args.mode,
    )
    _emit(dataclasses.asdict(table), args.out)


def cmd_analyze_pn(args) -> None:
    if len(args.orders) != len(args.rates):
        raise ConfigError(
            f"got {len(args.orders)} orders but {len(args.rates)} rates"
        )
    p = analysis.fit_pn(
        (args.orders, args.rates),
        slots_per_second=args.slots_per_second,
        source_prob=args.source_prob,
    )
    _emit({"p": p, "orders": args.orders, "rates_hz": args.rates}, args.out)


def _roundtrip_report(config: RunConfig, seed: int, run_dir: Path) -> dict:
    acfg: AnalysisConfig = config.analysis
    sim = _write_simulation(config, seed, run_dir)
    events = sim["events"]
    result = sim["result"]
    src_cfg = sim["config"].source
    period_ps = events.pulse_period_ps
    threads = config.run.threads

    # Purity and blinking are source properties; the merged detector
    # stream is useless for them because the synchronizing delays fold
    # photons from different pulses onto the same arrival slots.
    source_tags = events.to_tags()
    hist_g2 = analysis.g2_histogram(
        source_tags, source_tags, acfg.g2_bin_width_ps, acfg.g2_max_tau_ps,
        threads=threads, same_stream=True,
    )
    g2 = analysis.g2_zero(
        hist_g2, period_ps, acfg.g2_peak_halfwidth_ps, acfg.g2_n_side_peaks
    )

    hist_blink = analysis.g2_histogram(
        source_tags, source_tags, period_ps, acfg.blink_max_tau_ps,
        threads=threads, same_stream=True,
    )
    env = analysis.bunching_envelope(
        hist_blink, acfg.blink_smooth_halfwidth_ps, period_ps
    )
    blink = analysis.fit_blinking(env)

    delay_s = acfg.hom_delay_periods * period_ps * 1e-12
    tags_a, tags_b = analysis.simulate_hom(
        events, delay_s, lambda dt: source.pairwise_overlap(dt, src_cfg), seed + 2
    )
    hist_hom = analysis.g2_histogram(
        tags_a, tags_b, acfg.g2_bin_width_ps, acfg.g2_max_tau_ps, threads=threads
    )
    hom = analysis.hom_visibility(
        hist_hom, period_ps, acfg.hom_peak_halfwidth_ps, mzi_delay_s=delay_s
    )

    summary = pipeline.run_nfold_pipeline(
        src_cfg,
        config.demux,
        duration_s=acfg.nfold_duration_s,
        rng_seed=seed + 3,
        tolerance_s=acfg.nfold_tolerance_s,
        mode=acfg.nfold_mode,
    )
    table = summary.table
    # Orders with only a handful of events carry enormous log-rate noise
    # and dominate the order-weighted fit; keep the well-populated ones.
    usable = table.counts >= 10
    p_fit = float("nan")
    if usable.sum() >= 1:
        p_fit = analysis.fit_pn(
            (table.ns[usable], table.generated_rate_hz[usable]),
            slots_per_second=summary.grid.slots_per_second,
            source_prob=src_cfg.in_fiber_prob,
        )
    p_configured = (
        config.demux.pockels_transmission
        * config.demux.coupler_transmission
        * float(np.mean(config.demux.channel_efficiency))
    )

    report = {
        "configured": {
            "q_on": src_cfg.q_on,
            "t_on_s": src_cfg.t_on,
            "two_photon_prob": src_cfg.two_photon_prob,
            "overlap_at_delay": float(
                source.pairwise_overlap(delay_s, src_cfg)
            ),
            "per_slot_efficiency": p_configured,
        },
        "recovered": {
            "g2_zero": g2,
            "q_on": blink.q,
            "t_on_s": blink.t_on_s,
            "hom_visibility": hom.visibility,
            "p_fit": p_fit,
        },
        "nfold": dataclasses.asdict(table),
        "per_channel_rate_hz": summary.per_channel_rate_hz,
        "seed": seed,
    }
    report_dir = run_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    _emit(report, report_dir / "report.json")
    return report


def cmd_roundtrip(args) -> None:
    config = load_run_config(args.config)
    if args.quick:
        config = dataclasses.replace(
            config,
            run=dataclasses.replace(
                config.run, n_pulses=min(config.run.n_pulses, 2_000_000)
            ),
            analysis=dataclasses.replace(
                config.analysis, nfold_duration_s=min(config.analysis.nfold_duration_s, 4.0)
            ),
        )
    seed = _resolve_seed(config.run.seed, args.seed)
    run_dir = Path(args.out_dir or config.run.out_dir) / config.run.run_id
    report = _roundtrip_report(config, seed, run_dir)
    conf, rec = report["configured"], report["recovered"]
    rows = [
        ("g2(0)", "-", f"{rec['g2_zero']:.4f}"),
        ("bright duty q", f"{conf['q_on']:.3f}", f"{rec['q_on']:.3f}"),
        ("bright dwell t_on [us]",
         f"{conf['t_on_s'] * 1e6:.2f}",
         f"{rec['t_on_s'] * 1e6:.2f}" if rec["t_on_s"] == rec["t_on_s"] else "undefined"),
        ("HOM visibility", f"{conf['overlap_at_delay']:.4f}", f"{rec['hom_visibility']:.4f}"),
        ("per-slot efficiency p", f"{conf['per_slot_efficiency']:.4f}", f"{rec['p_fit']:.4f}"),
    ]
    width = max(len(r[0]) for r in rows)
    print(f"{'quantity'.ljust(width)}  {'configured':>12}  {'recovered':>12}")
    for name, c, r in rows:
        print(f"{name.ljust(width)}  {c:>12}  {r:>12}")
    print(f"report: {run_dir / 'report' / 'report.json'}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spsim",
        description="single-photon source and demultiplexer simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cavity", help="brightness budget from cavity parameters")
    p.add_argument("--params", required=True, help="JSON with cavity/emitter sections")
    p.add_argument("--branch", choices=("low", "high"), default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_cavity)

    p = sub.add_parser("simulate", help="run the Monte Carlo and write tag files")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    pa = sub.add_parser("analyze", help="estimators over tag files")
    asub = pa.add_subparsers(dest="analysis", required=True)

    def common(q):
        q.add_argument("--threads", type=int, default=1)
        q.add_argument("--out", default=None)

    q = asub.add_parser("g2", help="pulsed g2(0) from side-peak ratios")
    q.add_argument("--tags", required=True)
    q.add_argument("--tags-b", default=None)
    q.add_argument("--pulse-period-ps", type=float, default=12100.0)
    q.add_argument("--bin-width-ps", type=int, default=100)
    q.add_argument("--max-tau-ps", type=float, default=90_000.0)
    q.add_argument("--peak-halfwidth-ps", type=float, default=2_000.0)
    q.add_argument("--n-side-peaks", type=int, default=6)
    common(q)
    q.set_defaults(func=cmd_analyze_g2)

    q = asub.add_parser("blinking", help="blink duty cycle from the bunching envelope")
    q.add_argument("--tags", required=True)
    q.add_argument("--pulse-period-ps", type=float, default=12100.0)
    q.add_argument("--bin-width-ps", type=int, default=None)
    q.add_argument("--max-tau-ps", type=float, default=60_000_000.0)
    q.add_argument("--smooth-halfwidth-ps", type=float, default=121_000.0)
    common(q)
    q.set_defaults(func=cmd_analyze_blinking)

    q = asub.add_parser("hom", help="interference visibility from two ports")
    q.add_argument("--tags-a", required=True)
    q.add_argument("--tags-b", required=True)
    q.add_argument("--pulse-period-ps", type=float, default=12100.0)
    q.add_argument("--bin-width-ps", type=int, default=100)
    q.add_argument("--max-tau-ps", type=float, default=150_000.0)
    q.add_argument("--peak-halfwidth-ps", type=float, default=2_000.0)
    q.add_argument("--mzi-delay-ps", type=float, default=None)
    common(q)
    q.set_defaults(func=cmd_analyze_hom)

    q = asub.add_parser("nfold", help="n-fold coincidence rates on a slot grid")
    q.add_argument("--tags", nargs="+", required=True)
    q.add_argument("--origin-ps", type=int, required=True)
    q.add_argument("--period-ps", type=int, default=12100)
    q.add_argument("--slots-per-cycle", type=int, default=4)
    q.add_argument("--cycle-len-pulses", type=int, default=51)
    q.add_argument("--tolerance-ps", type=float, default=1000.0)
    q.add_argument("--integration-time-s", type=float, required=True)
    q.add_argument("--detector-efficiency", type=float, nargs="+", default=None)
    q.add_argument("--mode", choices=("first-n", "any-n"), default="first-n")
    common(q)
    q.set_defaults(func=cmd_analyze_nfold)

    q = asub.add_parser("pn", help="per-channel efficiency from n-fold rates")
    q.add_argument("--orders", type=int, nargs="+", required=True)
    q.add_argument("--rates", type=float, nargs="+", required=True)
    q.add_argument("--slots-per-second", type=float, required=True)
    q.add_argument("--source-prob", type=float, required=True)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_analyze_pn)

    p = sub.add_parser("roundtrip", help="simulate, analyze, compare")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quick", action="store_true", help="shrink sizes for a fast pass")
    p.set_defaults(func=cmd_roundtrip)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, DomainError, FormatError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AnalysisError, ConvergenceError) as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
