import csv
import json

import pytest

from nifsched.cli import (EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, main,
                          read_demand_file)
from nifsched.config import ConfigError, RadioConfig, load_config

SMALL = "periods = 2\nrealizations = 2\n"


def write_cfg(tmp_path, text=SMALL):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_show_config_round_trip(tmp_path, capsys):
    assert main(["show-config", "--config", str(write_cfg(tmp_path)), "--seed", "7"]) == EXIT_OK
    text = capsys.readouterr().out
    again = tmp_path / "again.cfg"
    again.write_text(text)
    cfg = load_config(again)
    assert cfg.seed == 7 and cfg.radio.periods == 2 and cfg.realizations == 2


def test_bad_config_exit_code(tmp_path, capsys):
    assert main(["show-config", "--config", str(write_cfg(tmp_path, "K = -1\n"))]) == EXIT_CONFIG
    assert "K" in capsys.readouterr().err
    assert main(["show-config", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


def test_unwritable_output_exit_code(tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    assert main(["scenario", "--realizations", "1", "--out", str(blocker / "sub")]) == EXIT_IO


def test_scenario_files(tmp_path):
    assert main(["scenario", "--realizations", "2", "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "scenario_4.json").read_text())
    assert len(doc["gamma_bps"]) == 7 and len(doc["gamma_bps"][0]) == 8


def test_graph_stats_edges_fall_with_epsilon(tmp_path):
    cfg = write_cfg(tmp_path, "realizations = 3\nepsilon_list = 0.01, 0.05, 0.2\nmax_cycle_len = 5\n")
    assert main(["graph-stats", "--config", str(cfg), "--out", str(tmp_path), "--figures"]) == EXIT_OK
    table = rows(tmp_path / "graph_stats.csv")
    edges = [float(r["mean_edges"]) for r in table]
    assert edges == sorted(edges, reverse=True)        # a looser threshold drops edges
    assert (tmp_path / "induced_cycles.png").stat().st_size > 0


def test_schedule_outputs_and_worker_reproducibility(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["schedule", "--realizations", "3", "--out", str(a)]) == EXIT_OK
    assert main(["schedule", "--realizations", "3", "--out", str(b), "--workers", "2"]) == EXIT_OK
    assert (a / "schedule_unfulfilled.csv").read_bytes() == (b / "schedule_unfulfilled.csv").read_bytes()
    for r in rows(a / "schedule_unfulfilled.csv"):
        assert int(r["violations"]) == 0
        assert float(r["bound_pct"]) <= float(r["scheme_pct"])


def test_schedule_rejects_is_based(tmp_path):
    assert main(["schedule", "--mode", "is_based", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_schedule_from_demand_file(tmp_path):
    d = tmp_path / "d.txt"
    d.write_text("# per-cell demands\n" + "\n".join(["8 8 8 8 8 8 8 8"] * 7) + "\n")
    args = ["schedule", "--realizations", "1", "--d-source", "file", "--d-file", str(d),
            "--out", str(tmp_path), "--figures"]
    assert main(args) == EXIT_OK
    (row,) = rows(tmp_path / "schedule_unfulfilled.csv")
    assert int(row["demand_total"]) == 7 * 64
    assert (tmp_path / "unfulfilled.png").exists()


def test_demand_file_errors_carry_line(tmp_path):
    cfg = RadioConfig(K=2, U=2, N=4, N_RF=1)
    d = tmp_path / "d.txt"
    d.write_text("1 2\n\n1 x\n")
    with pytest.raises(ConfigError, match=r"d.txt:3"):
        read_demand_file(d, cfg)
    d.write_text("1 2\n1 2 3\n")
    with pytest.raises(ConfigError, match=r"d.txt:2: expected 2"):
        read_demand_file(d, cfg)
    d.write_text("1 2\n1 9\n")
    with pytest.raises(ConfigError, match=r"d.txt:2"):
        read_demand_file(d, cfg)
    d.write_text("1 2\n2, 2\n")
    with pytest.raises(ConfigError, match=r"d.txt:1: cell total 3"):
        read_demand_file(d, cfg, strict=True)
    assert read_demand_file(d, cfg).tolist() == [1, 2, 2, 2]


def test_simulate_outputs(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "pmax_list = 20, 30\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--figures", "--save-traces"]) == EXIT_OK
    metrics = rows(out / "metrics.csv")
    assert len(metrics) == 4
    assert list(metrics[0]) == ["seed", "period", "total_power_dbm", "ee_bits_per_joule",
                                "unfulfilled_rate_frac", "n0_pct"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["realizations"] == 2
    assert len((out / "traces.jsonl").read_text().splitlines()) == 2
    feas = rows(out / "feasibility.csv")
    assert [float(r["pmax_dbm"]) for r in feas] == [20.0, 30.0]
    for name in ("power_traces.png", "rate_cdf.png", "feasibility.png"):
        assert (out / name).stat().st_size > 0


def test_simulate_is_reproducible_across_workers(tmp_path):
    cfg = write_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == EXIT_OK
    assert main(["simulate", "--config", str(cfg), "--out", str(b), "--workers", "2"]) == EXIT_OK
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()


def test_simulate_without_users(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "U = 0\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "metrics.csv").read_text().count("\n") == 1


def test_strict_simulation_reports_infeasible(tmp_path):
    # tiny power budget: no realization can meet its rates
    cfg = write_cfg(tmp_path, SMALL + "Pmax_dBm = -30\nP0_dBm = -30\n")
    code = main(["simulate", "--config", str(cfg), "--mode", "is_based", "--strict", "--out", str(tmp_path)])
    assert code == EXIT_INFEASIBLE
    assert json.loads((tmp_path / "summary.json").read_text())["strict_failures"]
