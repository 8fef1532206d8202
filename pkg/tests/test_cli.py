import copy
import json

import pytest

from ecoplatoon.cli import main
from ecoplatoon.sim import PAPER_SEC5


def write_config(tmp_path, **changes):
    data = copy.deepcopy(PAPER_SEC5)
    data.update(changes)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_validate_preset(capsys):
    assert main(["validate", "paper-sec5"]) == 0
    assert capsys.readouterr().out.startswith("ok: 3 vehicles, 3 lights, 240 steps")


def test_validate_reports_field(tmp_path, capsys):
    path = write_config(tmp_path, safe_gap=5.0)
    assert main(["validate", path]) == 2
    err = capsys.readouterr().err
    assert err.startswith("config error: safe_gap")


def test_unknown_file_is_config_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.json")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_negative_duration_rejected(tmp_path, capsys):
    assert main(["run", "paper-sec5", "--duration", "-1", "--out", str(tmp_path)]) == 2


def test_bad_ratio_list_exits_with_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["sweep-soft", "paper-sec5", "--ratios", "a,b"])
    assert exc.value.code == 2


def test_run_writes_identical_files(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "paper-sec5", "--duration", "30", "--seed", "4", "--out", str(a)]) == 0
    first = json.loads(capsys.readouterr().out)
    assert main(["run", "paper-sec5", "--duration", "30", "--seed", "4", "--out", str(b)]) == 0
    assert json.loads(capsys.readouterr().out) == first
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert {"trace.csv", "events.json"} <= set(names)
    assert any(n.startswith("plan_000_k0") for n in names)
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_run_mode_override(tmp_path, capsys):
    assert main(["run", "paper-sec5", "--duration", "10", "--mode", "acc", "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["plans"] == 0
    assert not list(tmp_path.glob("plan_*.csv"))


def test_compare_fuel(tmp_path, capsys):
    assert main(["compare-fuel", "paper-sec5", "--duration", "20", "--trials", "2", "--out", str(tmp_path)]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["seed"] for r in rows] == [0, 1]
    assert all(r["proposed"] > 0 and r["acc"] > 0 for r in rows)
    curve = (tmp_path / "fuel_acc_seed1.csv").read_text().splitlines()
    assert curve[0] == "time,platoon_fuel" and len(curve) == 21


def test_sweep_soft(tmp_path, capsys):
    data = copy.deepcopy(PAPER_SEC5)
    path = write_config(tmp_path, lights=data["lights"][:1])
    out = tmp_path / "sweep"
    assert main(["sweep-soft", path, "--ratios", "2", "--trials", "1", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert text == (out / "success_table.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "ratio,mode,trials,encounters,successes,rate,unreached"
    assert [l.split(",")[1] for l in lines[1:]] == ["strict", "soft"]
