import math

import numpy as np
import pytest

from pairqfi import cli
from pairqfi.errors import ConsistencyError, DegenerateOverlapError
from pairqfi.report import read_table


def run_to(tmp_path, name, *args):
    out = tmp_path / f"{name}.csv"
    code = cli.main([*args, "--out", str(out)])
    return code, out


def test_qcrb_ll_table(tmp_path):
    code, out = run_to(tmp_path, "ll", "qcrb-ll")
    assert code == 0
    t = read_table(out)
    assert t.meta["command"] == "qcrb-ll" and t.meta["quadrature"] == "80x160" and len(t.meta["config_hash"]) == 16
    row = dict(zip(t.columns, t.rows[0]))
    assert float(row["qcrb_xx"]) == pytest.approx(1 / (4 * math.pi**2), rel=1e-10)
    assert float(row["qcrb_zz"]) == pytest.approx(3 / math.pi**2, rel=1e-10)
    assert float(row["hll_xy"]) == pytest.approx(0, abs=1e-10)


def test_stdout_output(capsys):
    assert cli.main(["qcrb-ll", "--nr", "20", "--ntheta", "40"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# command=qcrb-ll") and lines[1].startswith("hll_xx,")


def test_gaussian_pupil_from_config_file(tmp_path):
    cfg = tmp_path / "g.cfg"
    cfg.write_text("# apodized\npupil = gaussian\npupil_sigma = 0.5\n")
    code, out = run_to(tmp_path, "g", "qcrb-ll", "--config", str(cfg))
    assert code == 0
    row = dict(zip(read_table(out).columns, read_table(out).rows[0]))
    assert float(row["qcrb_xx"]) > 1.5 / (4 * math.pi**2)


def test_qcrb_ss_sweep_and_plot(tmp_path):
    code, out = run_to(tmp_path, "ss", "qcrb-ss", "--axis", "x", "--start", "0", "--stop", "0.2",
                       "--step", "0.05", "--l", "0,0.1,0.025", "--plot")
    assert code == 0
    t = read_table(out)
    assert t.columns == cli.SWEEP_COLUMNS
    assert [r[0] for r in t.rows] == ["0", "0.05", "0.1", "0.15", "0.2"]
    assert (tmp_path / "ss.png").stat().st_size > 1000


def test_qcrb_ss_degenerate_row_flagged(tmp_path):
    code, out = run_to(tmp_path, "deg", "qcrb-ss", "--axis", "x", "--values", "0,0.1")
    assert code == 0
    rows = read_table(out).rows
    assert rows[0][-1] == "degenerate" and rows[0][4] == "nan"
    assert rows[1][-1] == ""


@pytest.mark.parametrize(
    "args",
    [
        ["qcrb-ss", "--axis", "x", "--start", "1", "--stop", "0", "--step", "0.1"],
        ["qcrb-ss", "--axis", "x"],
        ["qcrb-ss", "--axis", "w", "--values", "0.1"],
        ["qcrb-ll", "--nr", "2"],
        ["fi", "--l", "0.1,0.2"],
        ["qcrb-ss", "--axis", "x", "--values", "0.1", "--plot"],
    ],
)
def test_config_errors_exit_2(args, capsys):
    assert cli.main(args) == 2
    assert "config error" in capsys.readouterr().err


def test_config_file_errors_name_line(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nr = 40\nbogus = 1\n")
    assert cli.main(["qcrb-ll", "--config", str(cfg)]) == 2
    assert "bad.cfg:2" in capsys.readouterr().err
    cfg.write_text("nr = 40\nnr = 50\n")
    assert cli.main(["qcrb-ll", "--config", str(cfg)]) == 2
    cfg.write_text("seed = 3\n")
    assert cli.main(["qcrb-ll", "--config", str(cfg)]) == 2
    assert cli.main(["qcrb-ll", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as info:
        cli.main(["qcrb-ll", "--nope", "1"])
    assert info.value.code == 2


def test_numerical_and_consistency_exit_codes(monkeypatch):
    def degenerate(cfg):
        raise DegenerateOverlapError("unresolved", delta=1.0)

    def inconsistent(cfg):
        raise ConsistencyError("paths disagree")

    monkeypatch.setitem(cli.COMMANDS, "qcrb-ll", degenerate)
    assert cli.main(["qcrb-ll"]) == 3
    monkeypatch.setitem(cli.COMMANDS, "qcrb-ll", inconsistent)
    assert cli.main(["qcrb-ll"]) == 4


def test_verify_summary(tmp_path):
    code, out = run_to(tmp_path, "v", "verify", "--samples", "8", "--seed", "4")
    assert code == 0
    t = read_table(out)
    assert t.meta["seed"] == "4"
    summary = dict(zip(t.columns, t.rows[-1]))
    assert summary["flag"] == "summary" and len(t.rows) == 9
    for k in ("hsl_max", "identity_residual", "direct_qfi_residual"):
        assert float(summary[k]) < 1e-8


def test_channels_table(tmp_path):
    code, out = run_to(tmp_path, "c", "channels", "--l", "0.2,0.025,0.025", "--channels", "5")
    assert code == 0
    row = dict(zip(*[read_table(out).columns, read_table(out).rows[0]]))
    total = sum(float(row[f"P{k}"]) for k in range(1, 6)) + float(row["P_bar"])
    assert total == pytest.approx(1.0, abs=1e-12)
    assert float(row["fd_rel_error"]) < 1e-5


def test_fi_table_axial_divergence(tmp_path):
    code, out = run_to(tmp_path, "fi", "fi", "--l", "0.025,0.025,0.001", "--photons", "1")
    assert code == 0
    row = dict(zip(read_table(out).columns, read_table(out).rows[0]))
    assert float(row["crb_zz"]) > 10 * float(row["qcrb_zz"])


def test_fi_singular_flag(tmp_path):
    code, out = run_to(tmp_path, "fi0", "fi", "--l", "0,0,0")
    assert code == 0
    row = dict(zip(read_table(out).columns, read_table(out).rows[0]))
    assert row["flag"] == "singular" and row["crb_xx"] == "nan"


SIM = ["simulate", "--l", "0.2,0.025,0.025", "--draws", "2", "--frames", "4", "--photons", "10000", "--seed", "9"]


def test_simulate_deterministic_and_plots(tmp_path):
    code, a = run_to(tmp_path, "a", *SIM)
    assert code == 0
    _, b = run_to(tmp_path, "b", *SIM, "--workers", "3", "--plot")
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "b.png").exists()
    t = read_table(a)
    assert [r[3] for r in t.rows] == ["0", "1", "summary"]


def test_simulate_full_scale_resolution():
    cfg = cli.resolve("simulate", {}, {"scale": "full"})
    cfg = cli.apply_scale(cfg, {"scale"})
    assert (cfg["draws"], cfg["frames"], cfg["photons"]) == (40, 400, 10**6)
    cfg = cli.apply_scale(cli.resolve("simulate", {}, {"scale": "full", "frames": "7"}), {"scale", "frames"})
    assert cfg["frames"] == 7


def test_figures_bundle(tmp_path):
    code = cli.main(["figures", "--outdir", str(tmp_path), "--nr", "40", "--ntheta", "80"])
    assert code == 0
    for stem in ("qcrb_vs_lx_lz0.025", "qcrb_vs_ly_lz0.25", "qcrb_vs_lz", "crb_vs_lx", "crb_vs_lz"):
        assert (tmp_path / f"{stem}.csv").exists() and (tmp_path / f"{stem}.png").exists()
    t = read_table(tmp_path / "qcrb_vs_lz.csv")
    q = np.array([float(v) for v in t.column("qcrb_sz")])
    assert np.nanmin(q) == pytest.approx(0.304, rel=0.03)
