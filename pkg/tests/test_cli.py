"""End-to-end checks of the command line entry points.

Each test drives cli.main(argv) in-process and inspects the files and
JSON it writes, so exit codes, file layout, and seed resolution are all
covered without spawning subprocesses.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from spsim import cli, timetags

N_TAG_FILES = 8  # source + 6 channels + merged


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def cavity_params(tmp_path):
    return write_json(tmp_path / "cavity.json", {
        "cavity": {
            "center_energy": 1.3332,
            "linewidth_fwhm": 1.3332 / 1501.0,
            "wavelength_vacuum": 9.3e-7,
            "refractive_index": 3.32,
            "r_min": 0.4096,
        },
        "emitter": {
            "lifetime_cavity": 184e-12,
            "lifetime_bulk": 800e-12,
            "quantum_yield": 0.59,
        },
        "branch": "high",
    })


def run_config(tmp_path, **overrides):
    payload = {
        "source": {"q_on": 1.0, "rng_seed": 11},
        "run": {"run_id": "tiny", "n_pulses": 200_000, "seed": 11,
                "out_dir": str(tmp_path / "out")},
    }
    for section, fields in overrides.items():
        payload.setdefault(section, {}).update(fields)
    return write_json(tmp_path / "run.json", payload)


def test_cavity_command_reports_budget(tmp_path, capsys):
    rc = cli.main(["cavity", "--params", cavity_params(tmp_path)])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["beta"] == pytest.approx(100 / 123, rel=1e-9)
    assert out["eta_out"] == pytest.approx(0.82, abs=1e-12)
    assert out["brightness"] == pytest.approx(0.82 * 0.59 * 100 / 123, rel=1e-9)
    assert out["quality"] == pytest.approx(1501.0, rel=1e-12)


def test_simulate_writes_tags_and_summary(tmp_path, capsys):
    rc = cli.main(["simulate", "--config", run_config(tmp_path)])
    assert rc == 0
    run_dir = tmp_path / "out" / "tiny"
    tag_files = sorted((run_dir / "tags").glob("*.spstag"))
    assert len(tag_files) == N_TAG_FILES

    summary = json.loads((run_dir / "results" / "simulate_summary.json").read_text())
    merged, _ = timetags.read_stream(run_dir / "tags" / "merged.spstag")
    assert sum(summary["detected_counts"]) == merged.shape[0]
    assert summary["n_pulses"] == 200_000

    resolved = json.loads((run_dir / "results" / "resolved_config.json").read_text())
    assert resolved["run"]["seed"] == 11


def test_simulate_is_idempotent(tmp_path, capsys):
    cfg = run_config(tmp_path)
    assert cli.main(["simulate", "--config", cfg]) == 0
    run_dir = tmp_path / "out" / "tiny"
    first = {p.name: p.read_bytes() for p in (run_dir / "tags").glob("*.spstag")}
    assert cli.main(["simulate", "--config", cfg]) == 0
    second = {p.name: p.read_bytes() for p in (run_dir / "tags").glob("*.spstag")}
    assert first == second


def test_seed_env_and_flag_precedence(tmp_path, capsys, monkeypatch):
    cfg = run_config(tmp_path)
    resolved = tmp_path / "out" / "tiny" / "results" / "resolved_config.json"

    def resolved_seeds():
        data = json.loads(resolved.read_text())
        return data["run"]["seed"], data["source"]["rng_seed"]

    monkeypatch.setenv("SPS_SIM_SEED", "777")
    assert cli.main(["simulate", "--config", cfg]) == 0
    assert resolved_seeds() == (777, 777)

    assert cli.main(["simulate", "--config", cfg, "--seed", "888"]) == 0
    assert resolved_seeds() == (888, 888)

    monkeypatch.setenv("SPS_SIM_SEED", "not-a-number")
    assert cli.main(["simulate", "--config", cfg]) == 2


def test_analyze_g2_on_written_stream(tmp_path, capsys):
    assert cli.main(["simulate", "--config", run_config(tmp_path)]) == 0
    capsys.readouterr()  # drop the simulate status line
    stream = tmp_path / "out" / "tiny" / "tags" / "source.spstag"
    rc = cli.main([
        "analyze", "g2", "--tags", str(stream),
        "--bin-width-ps", "100", "--max-tau-ps", "90000",
        "--peak-halfwidth-ps", "2000",
    ])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    # No two-photon component configured, so zero-lag stays empty.
    assert out["g2_zero"] == pytest.approx(0.0, abs=1e-3)
    assert out["total_pairs"] > 0


def test_analyze_pn_recovers_source_probability(capsys):
    # Exact geometric ladder rates: r_n = S * p**n with p = 0.45.
    p, slots = 0.45, 6.482e6
    argv = ["analyze", "pn", "--orders", "2", "3", "4", "5", "6",
            "--rates"] + [repr(slots * p**n) for n in (2, 3, 4, 5, 6)] + [
            "--slots-per-second", repr(slots), "--source-prob", "1.0"]
    assert cli.main(argv) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["p"] == pytest.approx(p, rel=1e-9)


def test_analyze_pn_rejects_negative_rates(capsys):
    argv = ["analyze", "pn", "--orders", "2", "--rates", "-1.0",
            "--slots-per-second", "1e6", "--source-prob", "1.0"]
    assert cli.main(argv) == 3


def test_analyze_blinking_hom_nfold_wrappers(tmp_path, capsys):
    # One shared simulation feeds all three estimator subcommands.
    cfg = run_config(tmp_path, source={"q_on": 0.59},
                     run={"n_pulses": 1_500_000})
    assert cli.main(["simulate", "--config", cfg]) == 0
    run_dir = tmp_path / "out" / "tiny"
    summary = json.loads((run_dir / "results" / "simulate_summary.json").read_text())

    capsys.readouterr()
    rc = cli.main([
        "analyze", "blinking", "--tags", str(run_dir / "tags" / "source.spstag"),
    ])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert 0.0 < out["q"] <= 1.0
    assert out["tau_c_s"] > 0

    from spsim import analysis, source

    events = source.simulate_source(
        source.SourceConfig(q_on=1.0, rng_seed=5), 1_000_000
    )
    port_a, port_b = analysis.simulate_hom(
        events, 12.1e-9, lambda dt: 0.9, rng_seed=6
    )
    for name, tags in (("a", port_a), ("b", port_b)):
        timetags.write_stream(tmp_path / f"port_{name}.spstag", tags, n_channels=2)
    rc = cli.main([
        "analyze", "hom",
        "--tags-a", str(tmp_path / "port_a.spstag"),
        "--tags-b", str(tmp_path / "port_b.spstag"),
        "--mzi-delay-ps", "12100",
    ])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["visibility"] == pytest.approx(0.9, abs=0.05)
    assert out["neighbor_index"] == 2

    channels = [str(run_dir / "tags" / f"channel{c}.spstag") for c in range(6)]
    rc = cli.main([
        "analyze", "nfold", "--tags", *channels,
        "--origin-ps", "242000",
        "--integration-time-s", repr(summary["duration_s"]),
        "--detector-efficiency", "0.86", "0.86", "0.87", "0.86", "0.85", "0.85",
    ])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ns"] == [2, 3, 4, 5, 6]
    assert out["counts"][0] > 0
    assert out["mode"] == "first-n"


def test_config_errors_exit_2(tmp_path, capsys):
    bad_key = run_config(tmp_path, source={"wavelength": 930e-9})
    assert cli.main(["simulate", "--config", bad_key]) == 2

    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert cli.main(["simulate", "--config", str(broken)]) == 2


def test_roundtrip_quick_writes_full_report(tmp_path, capsys):
    cfg = run_config(
        tmp_path,
        source={"q_on": 0.59, "two_photon_prob": 0.01},
        run={"run_id": "round", "n_pulses": 1_000_000},
        analysis={"nfold_duration_s": 2.0},
    )
    rc = cli.main(["roundtrip", "--config", cfg, "--quick"])
    assert rc == 0
    report_path = tmp_path / "out" / "round" / "report" / "report.json"
    report = json.loads(report_path.read_text())

    assert report["configured"]["q_on"] == 0.59
    assert report["configured"]["two_photon_prob"] == 0.01
    recovered = report["recovered"]
    assert recovered["q_on"] == pytest.approx(0.59, abs=0.10)
    assert recovered["t_on_s"] == pytest.approx(5.2e-6, rel=0.5)
    assert 0.0 <= recovered["hom_visibility"] <= 1.0
    assert math.isfinite(recovered["g2_zero"])
    assert set(report["nfold"]["ns"]) == {2, 3, 4, 5, 6}
    assert len(report["per_channel_rate_hz"]) == 6
    assert report["seed"] == 11
