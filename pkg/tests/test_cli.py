import csv
import json
import subprocess
import sys

import pytest

from stripesim import cli
from stripesim.threads import THREADS_ENV, thread_count


def run(*argv):
    return cli.main([str(a) for a in argv])


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fiber_csv(tmp_path):
    out = tmp_path / "fiber.csv"
    assert run("fiber", "--out", out) == 0
    assert header(out) == cli.FIBER_HEADER
    body = rows(out)
    assert len(body) == 11
    assert float(body[0]["p_sig_dbm"]) == 4.0


def test_launch_override(tmp_path):
    out = tmp_path / "fiber.csv"
    assert run("fiber", "--launch-dbm", "-2", "--out", out) == 0
    assert float(rows(out)[0]["p_sig_dbm"]) == -2.0


def test_air_and_endtoend_headers(tmp_path):
    assert run("air", "--grid-step", "0.5", "--out", tmp_path / "air.csv") == 0
    assert header(tmp_path / "air.csv") == cli.AIR_HEADER
    assert len(rows(tmp_path / "air.csv")) == 31
    assert run("endtoend", "--fiber-atten", "1", "--coupler-loss", "0.5", "--booster-gain", "0",
               "--grid-step", "0.5", "--out", tmp_path / "e2e.csv") == 0
    assert header(tmp_path / "e2e.csv") == cli.ENDTOEND_HEADER


def test_energy_csv(tmp_path):
    out = tmp_path / "energy.csv"
    assert run("energy", "--out", out) == 0
    assert rows(out) == [{"n_active_rus": "10", "total_w": "5.100000", "pj_per_bit": "255.000000"}]
    assert run("energy", "--serving-ru", "3", "--out", out) == 0
    assert rows(out)[0]["n_active_rus"] == "4"


def test_dualband_train_then_eval(tmp_path):
    data = tmp_path / "data.csv"
    assert run("dualband", "train", "--grid-step", "1.0", "--out", data) == 0
    h = header(data)
    assert h[:2] == ["x", "y"] and h[-2:] == ["ru_label", "beam_label"] and len(h) == 20
    metrics = tmp_path / "metrics.csv"
    assert run("dualband", "eval", "--grid-step", "1.0", "--dataset", data, "--k", "1,50",
               "--out", metrics) == 0
    assert header(metrics) == cli.METRICS_HEADER
    m = rows(metrics)
    assert [r["k"] for r in m] == ["1", "50"]
    assert float(m[1]["topk_rate"]) == 1.0 and float(m[1]["mean_gain_loss_db"]) == 0.0
    # the dataset file is a faithful stand-in for rebuilding it
    rebuilt = tmp_path / "rebuilt.csv"
    assert run("dualband", "eval", "--grid-step", "1.0", "--k", "1,50", "--out", rebuilt) == 0
    assert rebuilt.read_bytes() == metrics.read_bytes()


def test_reproduce_commands(tmp_path, capsys):
    assert run("reproduce-fig3", "--out-dir", tmp_path) == 0
    assert "crossover: 9.0 m" in capsys.readouterr().out
    assert header(tmp_path / "fig3_top.csv") == cli.AIR_HEADER
    assert header(tmp_path / "fig3_bottom.csv") == cli.FIBER_HEADER
    assert run("reproduce-fig4", "--out-dir", tmp_path) == 0
    assert header(tmp_path / "fig4.csv") == cli.FIG4_HEADER


def test_manifest_and_replay_are_byte_identical(tmp_path):
    out = tmp_path / "a" / "air.csv"
    assert run("air", "--seed", "7", "--grid-step", "0.25", "--out", out) == 0
    manifest = json.loads((tmp_path / "a" / "air.csv.manifest.json").read_text())
    assert manifest["command"] == "air" and manifest["seed"] == 7
    assert "seed = 7" in manifest["config"]
    redo = tmp_path / "b"
    assert run("replay", tmp_path / "a" / "air.csv.manifest.json", "--into", redo) == 0
    assert (redo / "air.csv").read_bytes() == out.read_bytes()
    again = json.loads((redo / "air.csv.manifest.json").read_text())
    for m in (manifest, again):  # only the redirected paths may differ
        del m["outputs"], m["params"]["out"]
    assert again == manifest


def test_rerun_is_byte_identical(tmp_path):
    for name in ("one", "two"):
        assert run("dualband", "eval", "--grid-step", "1.0", "--out", tmp_path / name / "m.csv") == 0
        assert run("reproduce-fig3", "--out-dir", tmp_path / name) == 0
    for f in ("m.csv", "fig3_top.csv", "fig3_bottom.csv"):
        assert (tmp_path / "one" / f).read_bytes() == (tmp_path / "two" / f).read_bytes()


def test_config_file_is_used(tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text("[cu]\nbackoff_db = 8.0\n")
    out = tmp_path / "f.csv"
    assert run("fiber", "--config", cfg, "--out", out) == 0
    assert float(rows(out)[0]["p_sig_dbm"]) == 2.0


@pytest.mark.parametrize("argv", [
    [],
    ["fiber"],
    ["bogus"],
    ["fiber", "--out", "x.csv", "--launch-dbm", "loud"],
    ["dualband", "eval", "--out", "x.csv", "--k", "0"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert cli.main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_runtime_errors_exit_2(tmp_path, capsys):
    assert run("fiber", "--config", tmp_path / "none.toml", "--out", tmp_path / "f.csv") == 2
    assert "file not found" in capsys.readouterr().err
    bad = tmp_path / "bad.toml"
    bad.write_text("[room\n")
    assert run("fiber", "--config", bad, "--out", tmp_path / "f.csv") == 2
    assert "parse error" in capsys.readouterr().err
    invalid = tmp_path / "invalid.toml"
    invalid.write_text("[fiber]\natten_db_per_m = -1.0\n")
    assert run("fiber", "--config", invalid, "--out", tmp_path / "f.csv") == 2
    assert "fiber.atten_db_per_m" in capsys.readouterr().err
    assert run("energy", "--serving-ru", "10", "--out", tmp_path / "e.csv") == 2


def test_help_exits_0():
    assert cli.main(["--help"]) == 0


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stripesim", "energy", "--out", str(tmp_path / "e.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    proc = subprocess.run([sys.executable, "-m", "stripesim", "fiber"], capture_output=True, text=True)
    assert proc.returncode == 1


def test_thread_count(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert thread_count() == 1
    monkeypatch.setenv(THREADS_ENV, "4")
    assert thread_count() == 4
    monkeypatch.setenv(THREADS_ENV, "many")
    assert thread_count() == 1


def test_thread_count_does_not_change_results(tmp_path, monkeypatch):
    big = tmp_path / "big.toml"  # 10 000 points, several work chunks
    big.write_text("[room]\nlength_m = 50.0\nwidth_m = 50.0\n")
    outs = []
    for n in ("1", "3"):
        monkeypatch.setenv(THREADS_ENV, n)
        out = tmp_path / f"d{n}.csv"
        assert run("dualband", "train", "--config", big, "--grid-step", "0.5", "--out", out) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
