import csv
import json
import os

import pytest

from poolal.cli import main
from poolal.config import (FAST_EPOCH_CAP, GenDataJob, PropagateJob, RunJob,
                           build_job, parse_config_file, validate_strategy)
from poolal.dataset import load_dataset
from poolal.errors import ConfigError
from poolal.graph import load_edges


# --- config file parsing ---

def write(tmp_path, text, name="job.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_config_file_basics(tmp_path):
    path = write(tmp_path, """
# a comment line
seed = 5      # trailing comment
strategy=uncertainty

budget =  7
""")
    assert parse_config_file(path) == {"seed": "5", "strategy": "uncertainty",
                                       "budget": "7"}


def test_parse_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="line 2: expected"):
        parse_config_file(write(tmp_path, "a = 1\nb c\n"))
    with pytest.raises(ConfigError, match="line 2: empty key"):
        parse_config_file(write(tmp_path, "a = 1\n = 2\n"))
    with pytest.raises(ConfigError, match="line 3: duplicate key 'a'"):
        parse_config_file(write(tmp_path, "a = 1\nb = 2\na = 3\n"))
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config_file(str(tmp_path / "missing.cfg"))


# --- job construction ---

def test_build_job_precedence():
    file_values = {"seed": "5", "budget": "7", "dataset": "pool.csv"}
    job = build_job(RunJob, file_values, {"budget": 9, "seed": None})
    assert job.dataset == "pool.csv"
    assert job.seed == 5        # file beats default
    assert job.budget == 9      # flag beats file
    assert job.cycles == 5      # untouched default


def test_build_job_none_clears_optionals():
    job = build_job(GenDataJob, {"noise": "none", "dim": "null"}, {})
    assert job.noise is None and job.dim is None


def test_build_job_parses_labeled_list():
    job = build_job(PropagateJob, {"dataset": "d.csv", "labeled": "3, 5,7"}, {})
    assert job.labeled == [3, 5, 7]
    job = build_job(PropagateJob, {"dataset": "d.csv"}, {"labeled": [1, 2]})
    assert job.labeled == [1, 2]


def test_build_job_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="invalid configuration"):
        build_job(RunJob, {"dataset": "d.csv", "bogus": "1"}, {})


def test_enum_and_range_validators():
    with pytest.raises(ConfigError, match="strategy must be one of"):
        build_job(RunJob, {}, {"dataset": "d.csv", "strategy": "bogus"})
    with pytest.raises(ConfigError, match="format must be one of"):
        build_job(RunJob, {}, {"dataset": "d.csv", "format": "tsv"})
    with pytest.raises(ConfigError, match="model must be one of"):
        build_job(RunJob, {}, {"dataset": "d.csv", "model": "resnet"})
    with pytest.raises(ConfigError, match="coreset_metric must be one of"):
        build_job(RunJob, {}, {"dataset": "d.csv", "coreset_metric": "manhattan"})
    with pytest.raises(ConfigError, match="alpha must be in"):
        build_job(RunJob, {}, {"dataset": "d.csv", "alpha": 1.0})
    with pytest.raises(ConfigError, match="shape must be one of"):
        build_job(GenDataJob, {}, {"shape": "spiral"})
    assert validate_strategy("jlp") == "jlp"
    with pytest.raises(ConfigError, match="unknown strategy"):
        validate_strategy("bogus")


def test_fast_profile_caps_epochs():
    base = dict(dataset="d.csv", epochs=200)
    assert RunJob(**base, fast=True).to_run_config().plan.epochs == FAST_EPOCH_CAP
    assert RunJob(**base).to_run_config().plan.epochs == 200
    assert RunJob(dataset="d.csv", epochs=5, fast=True).to_run_config().plan.epochs == 5


def test_to_run_config_carries_fields_through():
    job = RunJob(dataset="d.csv", strategy="coreset", budget=3, alpha=0.5,
                 momentum=0.7, warmup_epochs=4)
    cfg = job.to_run_config()
    assert cfg.strategy == "coreset" and cfg.budget == 3 and cfg.alpha == 0.5
    assert cfg.plan.momentum == 0.7 and cfg.plan.warmup_epochs == 4


# --- command-line end to end ---

@pytest.fixture(scope="module")
def pool_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    path = str(d / "pool.csv")
    rc = main(["gen-data", "--shape", "two-moons", "--n", "60", "--seed", "3",
               "--out", path])
    assert rc == 0
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_gen_data_outputs_load(pool_csv, tmp_path):
    ds = load_dataset(pool_csv, "csv")
    assert ds.n == 60 and ds.num_classes == 2

    raw = str(tmp_path / "pool.bin")
    rc = main(["gen-data", "--shape", "blobs", "--n", "30", "--c", "3",
               "--out", raw, "--file-format", "raw-f32"])
    assert rc == 0
    ds = load_dataset(raw, "raw-f32")
    assert ds.n == 30 and ds.num_classes == 3


def test_gen_data_respects_config_file_and_flag_override(tmp_path):
    cfg = write(tmp_path, "shape = blobs\nn = 40\nseed = 1\n")
    rc = main(["gen-data", "--config", cfg, "--n", "30",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    ds = load_dataset(str(tmp_path / "blobs.csv"), "csv")
    assert ds.n == 30  # the flag beat the file


RUN_FLAGS = ["--budget", "2", "--cycles", "2", "--repeats", "2",
             "--per-class", "2", "--epochs", "4", "--k-graph", "8",
             "--seed", "1"]


def test_run_writes_records_and_curves(pool_csv, tmp_path, capsys):
    rc = main(["run", "--dataset", pool_csv, *RUN_FLAGS, "--out-dir", str(tmp_path)])
    assert rc == 0
    assert "final-cycle mean accuracy" in capsys.readouterr().out

    records = [json.loads(l) for l in
               (tmp_path / "records.jsonl").read_text().splitlines()]
    assert len(records) == 4  # repeats * cycles
    assert {r["cycle"] for r in records} == {0, 1}
    for rec in records:
        assert set(rec) == {"strategy", "seed", "repeat", "cycle", "labeled_count",
                            "accuracy", "lp_accuracy", "oracle_calls",
                            "ceal_pseudo_count"}

    curves = read_csv(tmp_path / "curves.csv")
    assert curves[0] == ["strategy", "cycle", "labeled_count", "mean_accuracy",
                         "std_accuracy", "repeats", "single_repeat"]
    assert len(curves) == 3  # header + one row per cycle


def test_identical_invocations_write_identical_bytes(pool_csv, tmp_path):
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        rc = main(["run", "--dataset", pool_csv, *RUN_FLAGS, "--out-dir", str(out)])
        assert rc == 0
        outs.append(out)
    for name in ("records.jsonl", "curves.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_propagate_command(pool_csv, tmp_path):
    dump = str(tmp_path / "edges.txt")
    rc = main(["propagate", "--dataset", pool_csv, "--labeled", "0,30",
               "--k-graph", "8", "--alpha", "0.9", "--out-dir", str(tmp_path),
               "--dump-graph", dump])
    assert rc == 0
    rows = read_csv(tmp_path / "propagation.csv")
    assert rows[0] == ["index", "pseudo_label", "weight"]
    assert len(rows) == 1 + 58  # every unlabeled index
    for _, label, weight in rows[1:]:
        assert int(label) in (0, 1)
        assert 0.0 <= float(weight) <= 1.0
    g = load_edges(dump, 60)
    assert g.n == 60 and g.adjacency.nnz > 0


def test_acquire_command(pool_csv, tmp_path):
    rc = main(["acquire", "--dataset", pool_csv, "--strategy", "uncertainty",
               "--budget", "3", "--epochs", "5", "--per-class", "2",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    rows = read_csv(tmp_path / "acquired.csv")
    assert rows[0] == ["order", "index", "score"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
    scores = [float(r[2]) for r in rows[1:]]
    assert scores == sorted(scores, reverse=True)


def test_acquire_random_scores_blank(pool_csv, tmp_path):
    rc = main(["acquire", "--dataset", pool_csv, "--strategy", "random",
               "--budget", "2", "--epochs", "2", "--out-dir", str(tmp_path)])
    assert rc == 0
    rows = read_csv(tmp_path / "acquired.csv")
    assert all(r[2] == "" for r in rows[1:])


def test_agree_command(pool_csv, tmp_path, capsys):
    rc = main(["agree", "--dataset", pool_csv, "--strategy-a", "uncertainty",
               "--strategy-b", "coreset", "--budget", "4", "--epochs", "5",
               "--per-class", "2", "--k-graph", "8", "--sample-frac", "0.2",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    assert "% agree" in capsys.readouterr().out
    agree = read_csv(tmp_path / "agreement.csv")
    assert agree[0][:4] == ["strategy_a", "strategy_b", "pool_size", "agree_count"]
    assert len(agree) == 2
    scatter = read_csv(tmp_path / "scatter.csv")
    assert scatter[0] == ["index", "rank_a", "rank_b"]
    assert len(scatter) >= 2


def test_no_stale_temp_files(pool_csv, tmp_path):
    main(["run", "--dataset", pool_csv, *RUN_FLAGS, "--out-dir", str(tmp_path)])
    assert not [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")]


# --- exit codes ---

def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert main(["run", "--help"]) == 0
    out = " ".join(capsys.readouterr().out.split())  # undo argparse line wrapping
    assert "(default: 0.99)" in out   # flag defaults surface in help
    assert "--semi" in out and "--no-semi" in out


def test_no_command_prints_help_and_fails(capsys):
    assert main([]) == 1
    assert "command" in capsys.readouterr().out


def test_usage_error_exits_one():
    assert main(["run", "--budget", "not-a-number"]) == 1
    assert main(["bogus-command"]) == 1


def test_missing_dataset_exits_one(tmp_path, capsys):
    rc = main(["run", "--dataset", str(tmp_path / "absent.csv"),
               "--out-dir", str(tmp_path)])
    assert rc == 1
    assert "not found" in capsys.readouterr().err


def test_bad_enum_exits_one(pool_csv, tmp_path, capsys):
    rc = main(["acquire", "--dataset", pool_csv, "--strategy", "bogus",
               "--out-dir", str(tmp_path)])
    assert rc == 1
    assert "strategy must be one of" in capsys.readouterr().err


def test_malformed_dataset_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x0,x1,label\n1.0,2.0\n")
    rc = main(["propagate", "--dataset", str(bad), "--out-dir", str(tmp_path)])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_engine_failure_exits_two(pool_csv, tmp_path, capsys):
    # budget larger than the pool is only detected inside the engine
    rc = main(["acquire", "--dataset", pool_csv, "--budget", "500",
               "--epochs", "2", "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "error" in capsys.readouterr().err
