from __future__ import annotations

import json
import os

import numpy as np
import pytest

from reldec.cli import main
from reldec.channel import load_dataset
from reldec.codes import build_ab_code, dump_alist, read_alist_file
from reldec.policy import load_policy


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture()
def ab_alist(workdir):
    assert run("build-code", "--ab", 3, 5, "--out", "ab.alist") == 0
    return workdir / "ab.alist"


@pytest.fixture()
def small_data(workdir, ab_alist):
    assert run(
        "gen-data", "--code", ab_alist, "--snrs", "1,2,3", "--per-snr", 8,
        "--seed", 5, "--out", "data.npz",
    ) == 0
    return workdir / "data.npz"


class TestBuildCode:
    def test_ab_alist_matches_library(self, workdir, ab_alist):
        assert read_alist_file(ab_alist) == build_ab_code(3, 5)
        manifest = json.loads((workdir / "ab.alist.manifest.json").read_text())
        assert manifest["command"] == "build-code"
        assert manifest["code_fingerprint"] == build_ab_code(3, 5).fingerprint

    def test_random_lift(self, workdir, ab_alist):
        assert run(
            "build-code", "--base", ab_alist, "--lift-factor", 4,
            "--lift-seed", 3, "--out", "lifted.alist",
        ) == 0
        lifted = read_alist_file(workdir / "lifted.alist")
        assert (lifted.m, lifted.n) == (60, 100)

    def test_lift_spec_file(self, workdir):
        base = build_ab_code(2, 3)
        (workdir / "base.alist").write_text(dump_alist(base))
        lines = ["lift_factor 5"]
        lines += [f"{r} {c} {(r + c) % 5}" for r, c in base.entries()]
        (workdir / "table.liftspec").write_text("\n".join(lines) + "\n")
        assert run(
            "build-code", "--base", "base.alist", "--lift-factor", 5,
            "--lift-spec", "table.liftspec", "--out", "qc.alist",
        ) == 0
        assert read_alist_file(workdir / "qc.alist").m == 30

    def test_invalid_args_exit_nonzero(self, workdir, capsys):
        assert run("build-code", "--ab", 3, 6, "--out", "x.alist") == 2
        assert "error" in capsys.readouterr().err
        assert not (workdir / "x.alist").exists()


class TestGenData:
    def test_counts_and_metadata(self, workdir, ab_alist, small_data):
        ds = load_dataset(small_data)
        assert len(ds) == 24
        assert ds.code_fingerprint == read_alist_file(ab_alist).fingerprint

    def test_per_snr_grouped(self, workdir, ab_alist):
        assert run(
            "gen-data", "--code", ab_alist, "--snrs", "1,2", "--per-snr", 4,
            "--mixing", "per-snr", "--seed", 1, "--out", "grouped.npz",
        ) == 0
        ds = load_dataset(workdir / "grouped.npz")
        assert ds.snr_db.tolist() == [1.0] * 4 + [2.0] * 4


class TestTrainAdaptDecode:
    def test_reldec_train_and_decode(self, workdir, ab_alist, small_data):
        assert run(
            "train", "--code", ab_alist, "--scheme", "reldec", "--data",
            small_data, "--seed", 2, "--out", "pol.json", "--log", "log.csv",
        ) == 0
        art = load_policy(workdir / "pol.json")
        assert art.scheme == "reldec"
        assert (workdir / "log.csv").read_text().splitlines()[0].startswith("phase,")

        assert run(
            "decode", "--code", ab_alist, "--scheduler", "policy", "--policy",
            "pol.json", "--input", small_data, "--imax", 20, "--seed", 4,
            "--out", "frames.csv",
        ) == 0
        lines = (workdir / "frames.csv").read_text().splitlines()
        assert lines[0] == "frame,snr_db,converged,bit_errors,iterations,messages"
        assert len(lines) == 25

    def test_am_reldec_with_adapt_step(self, workdir, ab_alist):
        assert run(
            "gen-data", "--code", ab_alist, "--snrs", "1,3", "--per-snr", 6,
            "--mixing", "per-snr", "--seed", 2, "--out", "local.npz",
        ) == 0
        assert run(
            "gen-data", "--code", ab_alist, "--snrs", "1,3", "--per-snr", 4,
            "--seed", 3, "--out", "global.npz",
        ) == 0
        assert run(
            "train", "--code", ab_alist, "--scheme", "am-reldec",
            "--data", "global.npz", "--local-data", "local.npz",
            "--meta-iters", 2, "--adapt-size", 3, "--ell-max", 10,
            "--seed", 4, "--out", "am.json", "--log", "am_log.csv",
        ) == 0
        art = load_policy(workdir / "am.json")
        assert art.scheme == "am_reldec"
        assert art.local_q is None
        log = (workdir / "am_log.csv").read_text()
        assert "adapt," in log  # final meta-step exercised the online path

    def test_m_reldec_stores_locals(self, workdir, ab_alist):
        assert run(
            "gen-data", "--code", ab_alist, "--snrs", "1,3", "--per-snr", 5,
            "--mixing", "per-snr", "--seed", 2, "--out", "local.npz",
        ) == 0
        assert run(
            "gen-data", "--code", ab_alist, "--snrs", "1,3", "--per-snr", 3,
            "--seed", 3, "--out", "global.npz",
        ) == 0
        assert run(
            "train", "--code", ab_alist, "--scheme", "m-reldec",
            "--data", "global.npz", "--local-data", "local.npz",
            "--ell-max", 8, "--seed", 4, "--out", "m.json",
        ) == 0
        art = load_policy(workdir / "m.json")
        assert set(art.local_q) == {"1.0", "3.0"}

    def test_adapt_subcommand(self, workdir, ab_alist, small_data):
        assert run(
            "train", "--code", ab_alist, "--scheme", "reldec", "--data",
            small_data, "--seed", 2, "--out", "pol.json",
        ) == 0
        assert run(
            "adapt", "--code", ab_alist, "--policy", "pol.json", "--data",
            small_data, "--snr", 2.0, "--take", 5, "--seed", 9,
            "--out", "adapted.json",
        ) == 0
        adapted = load_policy(workdir / "adapted.json")
        assert adapted.provenance["adapt_size"] == 5

    def test_missing_local_data_fails(self, workdir, ab_alist, small_data, capsys):
        assert run(
            "train", "--code", ab_alist, "--scheme", "am-reldec", "--data",
            small_data, "--out", "x.json",
        ) == 2
        assert "local-data" in capsys.readouterr().err
        assert not (workdir / "x.json").exists()


class TestSimulate:
    def test_flooding_message_identity(self, workdir, ab_alist):
        assert run(
            "count-messages", "--code", ab_alist, "--scheduler", "flooding",
            "--snrs", "2", "--frames", 40, "--imax", 6, "--no-early-stop",
            "--seed", 1, "--out", "msg.csv",
        ) == 0
        rows = [
            ln for ln in (workdir / "msg.csv").read_text().splitlines()
            if not ln.startswith("#")
        ]
        header, data = rows[0], rows[1]
        assert header.startswith("scheduler,snr_db,frames")
        fields = data.split(",")
        assert fields[0] == "flooding"
        assert float(fields[3]) == 6 * 75

    def test_simulate_writes_csv_and_manifest(self, workdir, ab_alist):
        assert run(
            "simulate", "--code", ab_alist, "--scheduler", "random",
            "--snrs", "2,3", "--min-frame-errors", 5, "--max-frames", 300,
            "--imax", 10, "--seed", 6, "--out", "sim.csv",
        ) == 0
        text = (workdir / "sim.csv").read_text()
        assert text.startswith("# schema=reldec-campaign-v1")
        manifest = json.loads((workdir / "sim.csv.manifest.json").read_text())
        assert manifest["options"]["snrs"] == "2,3"

    def test_byte_identical_reruns_and_workers(self, workdir, ab_alist):
        base = [
            "simulate", "--code", ab_alist, "--scheduler", "flooding",
            "--snrs", "2", "--min-frame-errors", 5, "--max-frames", 200,
            "--imax", 8, "--seed", 6, "--chunk-frames", 32,
        ]
        assert run(*base, "--workers", 1, "--out", "w1.csv") == 0
        assert run(*base, "--workers", 2, "--out", "w2.csv") == 0
        assert run(*base, "--workers", 1, "--out", "w1b.csv") == 0
        w1 = (workdir / "w1.csv").read_bytes()
        assert w1 == (workdir / "w2.csv").read_bytes()
        assert w1 == (workdir / "w1b.csv").read_bytes()


class TestConfigFile:
    def test_config_supplies_flags(self, workdir, ab_alist):
        (workdir / "sim.conf").write_text(
            "scheduler = flooding\nsnrs = 2\nmin-frame-errors = 0\n"
            "max-frames = 50\nimax = 3\nno-early-stop = true\nseed = 3\n"
        )
        assert run(
            "simulate", "--config", "sim.conf", "--code", ab_alist,
            "--out", "c.csv",
        ) == 0
        rows = [
            ln for ln in (workdir / "c.csv").read_text().splitlines()
            if not ln.startswith("#") and ln
        ]
        assert rows[1].split(",")[1] == "50"  # frames from config cap

    def test_cli_flag_overrides_config(self, workdir, ab_alist):
        (workdir / "sim.conf").write_text(
            "scheduler = flooding\nsnrs = 2\nmin-frame-errors = 0\n"
            "max-frames = 50\nimax = 3\nseed = 3\n"
        )
        assert run(
            "simulate", "--config", "sim.conf", "--code", ab_alist,
            "--max-frames", 30, "--out", "c.csv",
        ) == 0
        rows = [
            ln for ln in (workdir / "c.csv").read_text().splitlines()
            if not ln.startswith("#") and ln
        ]
        assert rows[1].split(",")[1] == "30"

    def test_bad_config_line(self, workdir, ab_alist, capsys):
        (workdir / "bad.conf").write_text("this is not a key value pair\n")
        assert run("simulate", "--config", "bad.conf", "--code", ab_alist,
                   "--out", "c.csv") == 2
        assert "key = value" in capsys.readouterr().err


class TestExportPlotCsv:
    def test_merges_labeled_series(self, workdir, ab_alist):
        for name, sched in (("a.csv", "flooding"), ("b.csv", "random")):
            assert run(
                "simulate", "--code", ab_alist, "--scheduler", sched,
                "--snrs", "2", "--min-frame-errors", 0, "--max-frames", 40,
                "--imax", 5, "--seed", 1, "--out", name,
            ) == 0
        assert run(
            "export-plot-csv", "--inputs", "a.csv", "b.csv",
            "--labels", "flooding,random", "--out", "plot.csv",
        ) == 0
        lines = (workdir / "plot.csv").read_text().splitlines()
        assert lines[0] == "label,snr_db,ber,fer,avg_messages"
        assert lines[1].startswith("flooding,2.0,")
        assert lines[2].startswith("random,2.0,")
