import csv
import json

import pytest

from photonbell import cli
from photonbell.exceptions import DomainError

TINY = {"population": 10, "de_generations": 6, "nm_max_iters": 150, "nm_top": 1, "sa_restarts": 1}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"optimizer": TINY, "threads": 1}))
    return str(path)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def data_rows(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_parse_grid():
    assert cli.parse_grid("0:1:3") == [0.0, 0.5, 1.0]
    assert cli.parse_grid("0.1,0.2") == [0.1, 0.2]
    assert cli.parse_grid("log:0.01:1:3") == pytest.approx([0.01, 0.1, 1.0])
    for bad in ("a:b:c", "", "log:0:1:3"):
        with pytest.raises(cli.ConfigError):
            cli.parse_grid(bad)


def test_config_merge_order(config):
    cfg = cli.resolve_config(["scan2", "--config", config, "--seed", "5", "--point", "0.5,0.7"])
    assert cfg["seed"] == 5 and cfg["threads"] == 1
    assert "threads" not in cli.provenance(cfg)["config"]
    assert cfg["optimizer"]["population"] == 10 and cfg["optimizer"]["seed"] == 5
    assert cfg["c00"] == "-1:1:61"  # untouched default


def test_scan2_point_csv_header_and_rows(config, capsys):
    code, out, _ = run(["scan2", "--config", config, "--point", "0.5,0.7", "--no-tolerance"], capsys)
    assert code == 0
    head = out.splitlines()[:3]
    assert head[0].startswith("# photonbell ") and head[1] == "# seed: 20240601"
    assert json.loads(head[2][len("# config: "):])["point"] == "0.5,0.7"
    rows = data_rows(out)
    assert [r["test"] for r in rows] == ["zero_nonzero", "even_odd", "combined"]
    assert all(r["status"] == "ok" for r in rows)
    assert abs(float(rows[2]["bell_value"])) == max(abs(float(r["bell_value"])) for r in rows[:2])
    assert set(json.loads(rows[0]["settings"])) == {"a1", "a2", "b1", "b2"}


def test_empty_grid_leaves_header_only(config, capsys):
    code, out, _ = run(["scan2", "--config", config, "--c00", "0.9", "--c11", "0.9"], capsys)
    assert code == 0
    assert data_rows(out) == []
    assert out.splitlines()[3].startswith("C00,C11,C22,test")


def test_json_matches_csv(config, capsys):
    base = ["scan2", "--config", config, "--point", "0.5,0.7", "--no-tolerance", "--tests", "zero_nonzero"]
    _, out_csv, _ = run(base, capsys)
    _, out_json, _ = run(base + ["--format", "json"], capsys)
    doc = json.loads(out_json)
    assert doc["provenance"]["seed"] == 20240601
    row_csv, row_json = data_rows(out_csv)[0], doc["rows"][0]
    assert float(row_csv["bell_value"]) == row_json["bell_value"]
    assert row_csv["settings"] == row_json["settings"]


def test_rerun_is_bit_for_bit(config, tmp_path, capsys):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["scan2", "--config", config, "--c00", "0.5,0.6", "--c11", "0.7", "--tests", "zero_nonzero"]
    assert run(argv + ["--out", str(out1)], capsys)[0] == 0
    assert run(argv + ["--out", str(out2)], capsys)[0] == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_threads_do_not_change_results(config, tmp_path, capsys):
    argv = ["scan2", "--config", config, "--c00", "0.5,0.6", "--c11", "0.7", "--tests", "zero_nonzero",
            "--no-tolerance"]
    one, two = tmp_path / "1.csv", tmp_path / "2.csv"
    run(argv + ["--threads", "1", "--out", str(one)], capsys)
    run(argv + ["--threads", "2", "--out", str(two)], capsys)
    assert one.read_bytes() == two.read_bytes()


def test_resume_reuses_complete_units(config, tmp_path, capsys, monkeypatch):
    out = tmp_path / "scan.csv"
    argv = ["scan2", "--config", config, "--c00", "0.5,0.6", "--c11", "0.7", "--tests", "zero_nonzero",
            "--no-tolerance", "--out", str(out)]
    run(argv, capsys)
    full = out.read_text()
    lines = full.splitlines()
    out.write_text("\n".join(lines[:-1]) + "\n")  # drop the second row's last line

    calls = []
    real = cli.scan_row

    def counting(c00, *a, **k):
        calls.append(c00)
        return real(c00, *a, **k)

    monkeypatch.setattr(cli, "scan_row", counting)
    assert run(argv + ["--resume"], capsys)[0] == 0
    assert calls == [0.6]
    assert out.read_text() == full


def test_resume_needs_out(config, capsys):
    assert run(["scan2", "--config", config, "--resume"], capsys)[0] == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["scan2", "--tests", "bogus"],
        ["scan2", "--c00", "x:y:z"],
        ["tmsv", "--g", "-1,0.5"],
        ["qkd", "--eps", "1.5"],
        ["qkd", "--loss", "0,2"],
        ["scan2", "--threads", "0"],
        ["scan2", "--budget", "huge"],
        ["nosuchcommand"],
    ],
)
def test_bad_configuration_exits_2(argv, capsys):
    assert run(argv, capsys)[0] == 2


def test_bad_config_file_exits_2(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"nonsense": 1}))
    assert run(["scan2", "--config", str(p)], capsys)[0] == 2
    p.write_text(json.dumps({"optimizer": {"colour": "red"}}))
    assert run(["scan2", "--config", str(p)], capsys)[0] == 2
    p.write_text("{not json")
    assert run(["scan2", "--config", str(p)], capsys)[0] == 2


def test_numeric_failure_exits_3(config, capsys, monkeypatch):
    def boom(*a, **k):
        raise DomainError("forced failure")

    monkeypatch.setattr(cli, "scan_row", boom)
    code, out, err = run(["scan2", "--config", config, "--point", "0.5,0.7"], capsys)
    assert code == 3
    assert "rows failed numerically" in err
    assert all(r["status"].startswith("error") for r in data_rows(out))


def test_tmsv_zero_gain_is_skipped(config, capsys):
    code, out, _ = run(["tmsv", "--config", config, "--g", "0,0.5", "--tests", "zero_nonzero", "--no-tolerance"],
                       capsys)
    rows = data_rows(out)
    assert code == 0
    assert rows[0]["status"].startswith("skipped") and rows[1]["status"] == "ok"
    assert abs(float(rows[1]["bell_value"])) > 2


def test_qkd_rows(config, capsys):
    code, out, _ = run(["qkd", "--config", config, "--loss", "0,0.3", "--eps", "0.5", "--direction", "B_given_A"],
                       capsys)
    rows = data_rows(out)
    assert code == 0 and len(rows) == 2
    assert float(rows[0]["key_rate"]) > 0 > float(rows[1]["key_rate"])
    # with H(B|A) keying the bit-error bound never beats the entropy bound
    for r in rows:
        assert float(r["key_rate_qber_bound"]) <= float(r["key_rate"]) + 1e-12


def test_cglmp_rows_carry_raw_check(config, capsys):
    code, out, _ = run(["cglmp", "--config", config, "--c00", "0.5", "--c11", "-0.5,0.5,0.95", "--refine", "1"],
                       capsys)
    rows = data_rows(out)
    assert code == 0 and len(rows) == 2
    assert rows[0]["bell_value"] == rows[1]["bell_value"]
    assert all(float(r["raw_check"]) < 1e-9 for r in rows)


def test_gnuplot_stub(config, tmp_path, capsys):
    out = tmp_path / "t.csv"
    run(["tmsv", "--config", config, "--g", "0.5", "--tests", "zero_nonzero", "--no-tolerance", "--out", str(out),
         "--gnuplot-stub"], capsys)
    stub = (tmp_path / "t.gp").read_text()
    assert str(out) in stub and "plot" in stub


def test_verify_single_criterion(config, capsys):
    code, out, _ = run(["verify", "--config", config, "--only", "9"], capsys)
    assert code == 0
    assert out.splitlines()[0].startswith("[PASS] criterion  9")
    assert "1/1 criteria passed" in out


def test_version(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--version"])
    assert "photonbell" in capsys.readouterr().out
