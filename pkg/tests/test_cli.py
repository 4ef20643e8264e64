from __future__ import annotations

import csv
import subprocess
import sys

import pytest

from groupdraw.cli import _scenarios, build_parser, main
from groupdraw.experiments import ExperimentConfig, read_metrics


def test_scenario_parsing():
    assert _scenarios("all") == tuple(range(32))
    assert _scenarios("0,2,28-31") == (0, 2, 28, 29, 30, 31)


def test_parser_defaults():
    args = build_parser().parse_args([])
    assert args.instance == "wc2018" and args.iterations == 1_000_000
    assert args.scenarios == tuple(range(32))


@pytest.mark.parametrize(
    "kwargs",
    [{"iterations": 0}, {"alpha_step": 0.0}, {"alpha_step": 1.5}, {"experiment": "x"}, {"scenarios": (40,)}],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ExperimentConfig(**kwargs)


def test_example1_verify(tmp_path, capsys):
    assert main(["--experiment", "example1-verify", "--iterations", "100000", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 8
    assert (tmp_path / "example1.txt").exists()


def test_unreadable_instance(tmp_path, capsys):
    assert main(["--instance", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def _sweep(out):
    argv = ["--instance", "wc2022", "--scenarios", "0,16,31", "--iterations", "3000", "--seed", "4", "--out", str(out)]
    assert main(argv) == 0
    return (out / "wc2022_metrics.csv").read_bytes()


def test_sweep_byte_identical(tmp_path):
    first = _sweep(tmp_path / "a")
    assert first == _sweep(tmp_path / "b")
    table = read_metrics(tmp_path / "a" / "wc2022_metrics.csv")
    assert [m.scenario for m in table] == [0, 16, 31]
    m31 = table[2]
    assert m31.psi == pytest.approx(5.0) and m31.support_size == 355 and m31.n_uniform >= 3000
    assert table[0].delta < 1.0 and table[0].skip_uniform


def test_frontier_from_metrics(tmp_path):
    _sweep(tmp_path)
    argv = ["--instance", "wc2022", "--experiment", "frontier", "--metrics", str(tmp_path / "wc2022_metrics.csv"),
            "--alpha-step", "0.1", "--out", str(tmp_path)]
    assert main(argv) == 0
    rows = list(csv.DictReader((tmp_path / "wc2022_frontier.csv").open()))
    for kind in ("opt1", "opt2"):
        ivs = [r for r in rows if r["kind"] == kind]
        assert ivs[0]["alpha_low"] == "0.000000" and ivs[-1]["alpha_high"] == "1.000000"
    env = list(csv.DictReader((tmp_path / "wc2022_envelope.csv").open()))
    assert len(env) == 22


def test_host_policy_outputs(tmp_path):
    argv = ["--instance", "wc2022", "--experiment", "host-policy", "--scenarios", "31", "--iterations", "2000",
            "--out", str(tmp_path)]
    assert main(argv) == 0
    for name in ("team_bias", "pair_bias_pre-assign", "pair_bias_relabel", "host_policy_metrics"):
        assert (tmp_path / f"wc2022_{name}.csv").exists()
    rows = list(csv.DictReader((tmp_path / "wc2022_team_bias.csv").open()))
    assert len(rows) == 64 and {r["policy"] for r in rows} == {"pre-assign", "relabel"}


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "groupdraw", "--experiment", "example1-verify", "--iterations", "1000", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
