import csv
import filecmp

import pytest

from casegen import case_text, plain_bus, slack_bus
from preventive_ems.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def islanded_case(tmp_path):
    text = case_text(
        [slack_bus(1, -10.0, 10.0), plain_bus(2), plain_bus(3)],
        [(1, 1, 2, 1.0, -10.0, 100.0, 100.0, 0.1), (2, 2, 3, 1.0, -10.0, 100.0, 100.0, 0.1)],
        loads=[(1, 3, "critical", [5.0])],
        kind="ac",
        line_failures=True,
    )
    path = tmp_path / "island.case"
    path.write_text(text)
    return path


@pytest.mark.parametrize("name", ["toy3", "mvdc12", "ieee30"])
def test_validate_bundled(capsys, name):
    code, out, _ = run(capsys, "validate", "--case", name)
    assert code == 0 and ": ok (" in out


def test_validate_broken_and_missing(capsys, tmp_path):
    bad = tmp_path / "bad.case"
    bad.write_text(case_text([plain_bus(1)], loads=[(1, 1, "critical", [1.0])]))
    code, out, _ = run(capsys, "validate", "--case", bad)
    assert code == 1 and out.strip()
    code, _, err = run(capsys, "validate", "--case", tmp_path / "nowhere.case")
    assert code == 2 and "cannot read" in err


def test_powerflow_no_load(capsys, tmp_path):
    code, out, _ = run(capsys, "powerflow", "--case", "mvdc12", "--no-load", "--out", tmp_path)
    assert code == 0 and out.startswith("converged=True")
    lines = read_csv(tmp_path / "pf_line.csv")
    assert lines and all(float(v) == 0.0 for r in lines for k, v in r.items() if k.startswith("p_"))


def test_powerflow_ieee30(capsys, tmp_path):
    code, out, _ = run(capsys, "powerflow", "--case", "ieee30", "--out", tmp_path)
    assert code == 0 and "converged=True" in out
    assert len(read_csv(tmp_path / "pf_bus.csv")) == 30


def test_powerflow_islanded_exits_one(capsys, tmp_path, islanded_case):
    code, out, _ = run(capsys, "powerflow", "--case", islanded_case, "--scenario", "2", "--out", tmp_path)
    assert code == 1
    assert "converged=False" in out and "residual:" in out


@pytest.mark.parametrize("threshold,dropped", [(0.0, "0"), (1.0, "1")])
def test_scenarios_threshold_extremes(capsys, tmp_path, threshold, dropped):
    code, out, _ = run(capsys, "scenarios", "--case", "toy3", "--threshold", threshold, "--out", tmp_path)
    assert code == 0
    fields = dict(kv.split("=") for kv in out.split())
    n = int(fields["n"])
    assert int(fields["total"]) == 2 ** n
    want = 2 ** n if threshold == 0.0 else 0
    assert int(fields["retained"]) == want and fields["dropped_mass"] == dropped
    assert len(read_csv(tmp_path / "scenarios.csv")) == want


def test_scenarios_mvdc12_count(capsys, tmp_path):
    code, out, _ = run(capsys, "scenarios", "--case", "mvdc12", "--out", tmp_path)
    assert code == 0 and "n=14 total=16384 retained=106" in out


def test_train_zero_episodes_then_evaluate(capsys, tmp_path):
    code, out, _ = run(capsys, "train", "--case", "toy3", "--episodes", 0, "--out", tmp_path)
    assert code == 0 and "updates=0 episodes=0" in out
    assert (tmp_path / "policy.bin").exists()
    code, out, _ = run(capsys, "evaluate", "--case", "toy3", "--out", tmp_path)
    assert code == 0 and "critical=" in out and "cvar=" in out
    assert (tmp_path / "risk.json").exists()
    assert len(read_csv(tmp_path / "served_critical.csv")) == 24


def test_evaluate_missing_checkpoint(capsys, tmp_path):
    code, _, err = run(capsys, "evaluate", "--case", "toy3", "--out", tmp_path)
    assert code == 1 and err


def test_evaluate_single_scenario_cvar_is_its_loss(capsys, tmp_path):
    run(capsys, "train", "--case", "toy3", "--episodes", 0, "--out", tmp_path)
    code, out, _ = run(capsys, "evaluate", "--case", "toy3", "--scenario", "1", "--out", tmp_path)
    assert code == 0
    assert "var=0 cvar=0" in out  # one scenario: its loss against its own expectation is zero


def test_benchmark_and_report(capsys, tmp_path):
    run(capsys, "train", "--case", "toy3", "--episodes", 0, "--out", tmp_path)
    code, out, _ = run(capsys, "benchmark", "--case", "toy3", "--out", tmp_path)
    assert code == 0
    summary = {r["method"]: r for r in read_csv(tmp_path / "benchmark_summary.csv")}
    assert set(summary) == {"base", "opt", "rl"}
    assert float(summary["base"]["weighted_served"]) >= float(summary["opt"]["weighted_served"]) - 1e-6
    timing = read_csv(tmp_path / "timing.csv")
    assert any(r["source"] == "paper-reference" for r in timing)
    code, out, _ = run(capsys, "report", "--out", tmp_path)
    assert code == 0
    first = (tmp_path / "report.md").read_text()
    for heading in ("## Totals", "## Served load", "## Storage state of charge", "## Converter output shares",
                    "## Wall-clock"):
        assert heading in first
    run(capsys, "report", "--out", tmp_path)
    assert (tmp_path / "report.md").read_text() == first


def test_benchmark_without_policy_reports_partial(capsys, tmp_path):
    code, _, err = run(capsys, "benchmark", "--case", "toy3", "--out", tmp_path)
    assert code == 1 and "failed rl" in err
    rows = {r["method"]: r["status"] for r in read_csv(tmp_path / "benchmark_summary.csv")}
    assert rows == {"base": "ok", "opt": "ok", "rl": "failed"}


def test_report_on_empty_dir(capsys, tmp_path):
    code, out, _ = run(capsys, "report", "--out", tmp_path)
    assert code == 1 and "missing input" in out


def pipeline(capsys, out):
    assert run(capsys, "scenarios", "--case", "toy3", "--out", out)[0] == 0
    assert run(capsys, "powerflow", "--case", "toy3", "--out", out)[0] == 0
    assert run(capsys, "train", "--case", "toy3", "--episodes", 16, "--seed", 3, "--out", out)[0] == 0
    assert run(capsys, "evaluate", "--case", "toy3", "--out", out)[0] == 0
    assert run(capsys, "evaluate", "--case", "toy3", "--mode", "resilient-opt", "--out", out)[0] == 0
    assert run(capsys, "benchmark", "--case", "toy3", "--out", out)[0] == 0
    assert run(capsys, "report", "--out", out)[0] == 0


WALL_CLOCK = {"timing.csv", "training_timing.csv"}


def test_reruns_are_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    pipeline(capsys, a)
    pipeline(capsys, b)
    names = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    assert names == sorted(p.relative_to(b) for p in b.rglob("*.csv"))
    compared = [n for n in names if n.name not in WALL_CLOCK]
    assert len(compared) > 10
    for n in compared:
        assert filecmp.cmp(a / n, b / n, shallow=False), n
    assert (a / "policy.bin").read_bytes() == (b / "policy.bin").read_bytes()


def test_bad_usage_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    code, _, _ = run(capsys, "powerflow", "--case", "toy3", "--hour", 99)
    assert code == 2
