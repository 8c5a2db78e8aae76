import csv
import io
import os

import pytest
import yaml

from evocache.cli import (EXIT_INVARIANT, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE,
                          main)

GEN_ARGS = ["gen-trace", "--contents", "40", "--requests", "2000",
            "--zipf-alpha", "0.9", "--mean-interarrival", "7.2", "--seed", "1"]


def gen(tmp_path, name="trace.txt", extra=()):
    path = str(tmp_path / name)
    assert main(GEN_ARGS + list(extra) + ["--out", path]) == EXIT_OK
    return path


def read_result(out):
    with open(os.path.join(out, "result.csv")) as fh:
        return dict(csv.reader(fh))


# --- gen-trace -----------------------------------------------------------


def test_gen_trace_deterministic(tmp_path):
    a = gen(tmp_path, "a.txt")
    b = gen(tmp_path, "b.txt")
    with open(a) as fa, open(b) as fb:
        assert fa.read() == fb.read()


def test_gen_trace_rejects_bad_values(tmp_path, capsys):
    assert main(["gen-trace", "--contents", "0",
                 "--out", str(tmp_path / "t.txt")]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_gen_trace_reads_config_file(tmp_path):
    cfg = tmp_path / "gen.yaml"
    cfg.write_text(yaml.safe_dump({"contents": 25, "requests": 500,
                                   "mean_interarrival": 7.2, "seed": 3}))
    out = str(tmp_path / "t.txt")
    assert main(["gen-trace", "--config", str(cfg), "--out", out]) == EXIT_OK
    with open(out) as fh:
        catalog_rows = [l for l in fh if l.startswith("C ")]
    assert len(catalog_rows) == 25


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "gen.yaml"
    cfg.write_text(yaml.safe_dump({"contentz": 25}))
    assert main(["gen-trace", "--config", str(cfg)]) == EXIT_USAGE
    assert "contentz" in capsys.readouterr().err


def test_flag_overrides_config(tmp_path):
    cfg = tmp_path / "gen.yaml"
    cfg.write_text(yaml.safe_dump({"contents": 25, "requests": 500,
                                   "mean_interarrival": 7.2}))
    out = str(tmp_path / "t.txt")
    assert main(["gen-trace", "--config", str(cfg), "--contents", "10",
                 "--out", out]) == EXIT_OK
    with open(out) as fh:
        assert sum(l.startswith("C ") for l in fh) == 10


# --- simulate -------------------------------------------------------------


def test_simulate_lru_end_to_end(tmp_path):
    trace = gen(tmp_path)
    out = str(tmp_path / "res")
    assert main(["simulate", "--trace", trace, "--policy", "lru",
                 "--cache-size", "5", "--warmup-hours", "1",
                 "--out", out]) == EXIT_OK
    result = read_result(out)
    assert result["policy"] == "lru"
    assert result["capacity"] == "5"
    assert 0.0 <= float(result["hit_rate"]) <= 1.0
    assert int(result["test_hits"]) + int(result["cold_misses"]) + \
        int(result["capacity_misses"]) == int(result["test_requests"]) + \
        int(result["warmup_requests"]) - int(result["warmup_hits"])
    assert os.path.exists(os.path.join(out, "config.yaml"))
    assert os.path.exists(os.path.join(out, "series_lru.csv"))
    assert os.path.exists(os.path.join(out, "series.png"))


def test_simulate_percentage_capacity(tmp_path):
    trace = gen(tmp_path, extra=["--contents", "200", "--requests", "1000",
                                 "--mean-interarrival", "14.4"])
    out = str(tmp_path / "res")
    assert main(["simulate", "--trace", trace, "--policy", "lru",
                 "--cache-percentage", "1.0", "--warmup-hours", "0",
                 "--out", out]) == EXIT_OK
    assert read_result(out)["capacity"] == "2"  # ceil(1% of 200)


def test_simulate_pa_emits_alpha_and_figures(tmp_path):
    trace = gen(tmp_path)
    out = str(tmp_path / "res")
    assert main(["simulate", "--trace", trace, "--policy", "pa",
                 "--cache-size", "4", "--warmup-hours", "1",
                 "--depth", "2", "--first-width", "8", "--last-width", "4",
                 "--eta", "1.0", "--epochs-per-retrain", "2",
                 "--out", out]) == EXIT_OK
    assert os.path.exists(os.path.join(out, "alpha.csv"))
    assert os.path.exists(os.path.join(out, "alpha.png"))


def test_simulate_missing_trace_flag(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path / "r")]) == EXIT_USAGE


def test_simulate_malformed_trace_is_runtime_error(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("C A 0.0 movie cn mandarin 100.0 7.5 12 d p\nR A not_a_number\n")
    assert main(["simulate", "--trace", str(bad),
                 "--out", str(tmp_path / "r")]) == EXIT_RUNTIME
    assert "trace error" in capsys.readouterr().err


def test_simulate_config_echo_round_trips(tmp_path):
    trace = gen(tmp_path)
    out = str(tmp_path / "res")
    main(["simulate", "--trace", trace, "--policy", "lfu", "--cache-size", "3",
          "--warmup-hours", "0", "--out", out])
    with open(os.path.join(out, "config.yaml")) as fh:
        echoed = yaml.safe_load(fh)
    assert echoed["policy"] == "lfu"
    assert echoed["cache_size"] == 3
    assert echoed["warmup_hours"] == 0.0


# --- sweep ---------------------------------------------------------------


def test_sweep_row_count_and_files(tmp_path):
    out = str(tmp_path / "sw")
    assert main(["sweep", "--policies", "lru", "lfu", "--cache-percentages",
                 "5", "10", "--seeds", "0", "1", "2",
                 "--contents", "30", "--requests", "1000",
                 "--mean-interarrival", "14.4", "--warmup-hours", "1",
                 "--out", out]) == EXIT_OK
    with open(os.path.join(out, "sweep.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12  # 2 policies x 2 percentages x 3 seeds
    assert all(r["error"] == "" for r in rows)
    assert os.path.exists(os.path.join(out, "sweep_agg.csv"))
    assert os.path.exists(os.path.join(out, "sweep.png"))


def test_sweep_parallelism_is_invisible(tmp_path):
    outs = []
    for jobs in ("1", "4"):
        out = str(tmp_path / f"sw{jobs}")
        assert main(["sweep", "--policies", "lru", "--cache-percentages", "10",
                     "--seeds", "0", "1", "--contents", "30", "--requests", "800",
                     "--mean-interarrival", "18", "--warmup-hours", "1",
                     "--jobs", jobs, "--out", out]) == EXIT_OK
        outs.append(out)
    for name in ("sweep.csv", "sweep_agg.csv"):
        with open(os.path.join(outs[0], name), "rb") as fa, \
                open(os.path.join(outs[1], name), "rb") as fb:
            assert fa.read() == fb.read()


# --- check / parser ---------------------------------------------------------


def test_check_loss_suite_passes(capsys):
    assert main(["check", "--suite", "loss"]) == EXIT_OK
    assert "PASS loss" in capsys.readouterr().out


def test_check_rejects_unknown_suite():
    assert main(["check", "--suite", "nonsense"]) == EXIT_USAGE


def test_unknown_subcommand_is_usage_error():
    assert main(["frobnicate"]) == EXIT_USAGE


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "gen-trace" in capsys.readouterr().out
