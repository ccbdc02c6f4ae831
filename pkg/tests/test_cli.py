import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kaclab import cli, experiments
from kaclab.experiments import ConfigError, ExperimentConfig, ExperimentRecord


@given(a=st.integers(1, 500), n=st.integers(0, 50))
def test_parse_int_range(a, n):
    assert experiments.parse_int_list(f"{a}..{a + n}") == list(range(a, a + n + 1))


def test_parse_lists_and_specs():
    assert experiments.parse_int_list("100,500") == [100, 500]
    assert experiments.parse_float_list("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert experiments.parse_float_list("0.5,1,2") == [0.5, 1.0, 2.0]
    assert experiments.density_from_spec("fdelta:0.25").delta == 0.25
    assert experiments.density_from_spec("gaussian").is_maxwellian
    with pytest.raises(ConfigError):
        experiments.density_from_spec("pareto:2")
    with pytest.raises(ConfigError):
        experiments.parse_int_list("")


def test_unknown_experiment_and_missing_seed():
    with pytest.raises(ConfigError):
        experiments.run_experiment(ExperimentConfig("nope", 1))
    with pytest.raises(ConfigError):
        experiments.run_experiment(ExperimentConfig("gap-check", None))
    with pytest.raises(SystemExit) as e:
        cli.main(["nope", "--seed", "1"])
    assert e.value.code == 2


def test_missing_seed_exit_code(tmp_path, capsys):
    assert cli.main(["gap-check", "--out", str(tmp_path)]) == 2
    assert "--seed" in capsys.readouterr().err


def test_bad_kernel_exit_code(tmp_path):
    assert cli.main(["gap-check", "--seed", "1", "--kernel", "wobbly", "--out", str(tmp_path)]) == 2


def test_same_seed_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["gap-check", "--seed", "42", "--N", "3..5", "--out", str(d)]) == 0
    assert (a / "gap-check.csv").read_bytes() == (b / "gap-check.csv").read_bytes()
    c = tmp_path / "c"
    cli.main(["gap-check", "--seed", "43", "--N", "3..5", "--out", str(c)])
    assert (a / "gap-check.csv").read_bytes() != (c / "gap-check.csv").read_bytes()


def test_csv_format_and_roundtrip(tmp_path):
    rec = ExperimentRecord("x", ["N", "value", "label"], [[3, 0.1, "fit"], [4, float("nan"), "a"]], {})
    p = cli.emit_csv(rec, tmp_path / "x.csv")
    raw = p.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    assert raw.decode().splitlines()[1] == "3,0.10000000000000001,fit"
    header, rows = cli.read_csv(p)
    assert header == rec.header
    assert rows[0] == [3, 0.1, "fit"]
    assert np.isnan(rows[1][1])


def test_empty_record_is_header_only(tmp_path):
    p = cli.emit_csv(ExperimentRecord("e", ["a", "b"], [], {}), tmp_path / "e.csv")
    assert p.read_text() == "a,b\n"


def test_manifest_echoes_resolved_config(tmp_path):
    cli.main(["k-spectrum", "--seed", "3", "--out", str(tmp_path)])
    man = (tmp_path / "k-spectrum.manifest.txt").read_text()
    assert "seed = 3" in man and "N = [5, 6," in man and "param.m_max = 6" in man
    assert "code_version = kaclab" in man and "wall_time_s" in man and "status = pass" in man


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nseed = 9\nN = 3..4\npoints = 5\n")
    assert cli.main(["gap-check", "--config", str(cfg), "--N", "5", "--out", str(tmp_path)]) == 0
    header, rows = cli.read_csv(tmp_path / "gap-check.csv")
    assert [r[0] for r in rows] == [5]
    man = (tmp_path / "gap-check.manifest.txt").read_text()
    assert "seed = 9" in man and "param.points = 5" in man


def test_output_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["gap-check", "--seed", "1", "--N", "3"]) == 0
    assert (tmp_path / "env" / "gap-check.csv").exists()
    assert cli.main(["gap-check", "--seed", "1", "--N", "3", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "gap-check.csv").exists()


def test_check_failure_exit_code(tmp_path, monkeypatch):
    def failing(cfg):
        return ExperimentRecord(cfg.name, ["a"], [[1]], {"never": False}, cfg)

    monkeypatch.setitem(experiments.EXPERIMENTS, "gap-check", (failing, "a"))
    assert cli.main(["gap-check", "--seed", "1", "--out", str(tmp_path)]) == 3
    assert "check.never = FAIL" in (tmp_path / "gap-check.manifest.txt").read_text()


def test_interrupt_flushes_partial_rows(tmp_path, monkeypatch):
    def interrupted(cfg):
        rows = experiments._rows(cfg)
        rows.append([3, 1.25, 1.25, 0.0, 1.25, 1])
        raise KeyboardInterrupt

    monkeypatch.setitem(experiments.EXPERIMENTS, "gap-check", (interrupted, experiments.EXPERIMENTS["gap-check"][1]))
    assert cli.main(["gap-check", "--seed", "1", "--out", str(tmp_path)]) == 130
    header, rows = cli.read_csv(tmp_path / "gap-check.csv")
    assert header[0] == "N" and rows == [[3, 1.25, 1.25, 0.0, 1.25, 1]]
    assert "status = interrupted" in (tmp_path / "gap-check.manifest.txt").read_text()


def test_help_documents_csv_schemas(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    for name, (_, cols) in experiments.EXPERIMENTS.items():
        assert name in out
    with pytest.raises(SystemExit):
        cli.main(["zn-limit", "--help"])
    assert "N,logZ,logZ_stderr,Z,Z_stderr,target" in capsys.readouterr().out


def test_fast_experiments_pass(tmp_path):
    for name in ("gap-check", "k-spectrum", "zn-limit"):
        assert cli.main([name, "--seed", "1", "--out", str(tmp_path)]) == 0


def test_gap_check_with_nonuniform_kernel(tmp_path):
    assert cli.main(["gap-check", "--seed", "1", "--N", "3..5", "--kernel", "cos2", "--out", str(tmp_path)]) == 0
    header, rows = cli.read_csv(tmp_path / "gap-check.csv")
    assert rows[0][1] == pytest.approx(1.25) and rows[0][5] == 1
