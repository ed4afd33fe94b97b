import csv
import filecmp
import math

import numpy as np
import pytest

from gemsim import cli, scenario
from gemsim.engine import NumericalError
from gemsim.pgm import save_frame
from gemsim.scenario import ConfigError, parse_config

MINIMAL = """\
[scenario]
name = pixel
kind = echo

[grid]
nx = 1
ny = 1
nz = 128
t_max_us = 8.0

[gradient]
flip_times_us = 4.25

[write]
t_off_us = 4.0

[read]
t_on_us = 4.25
t_off_us = 8.0
"""


def write_cfg(tmp_path, text, name="s.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


# --- parsing ---------------------------------------------------------------

def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.kind == "echo"
    assert cfg.sections["grid"]["dt_us"] == "auto"
    assert cfg.sections["write"]["rabi_mhz"] == 50.0
    assert cfg.sections["gradient"]["flip_times_us"] == (4.25,)


@pytest.mark.parametrize("edit,line,needle", [
    (("nz = 128", "nz = many"), 8, "nz"),
    (("t_max_us = 8.0", "t_max_us = 8.0\ncolour = blue"), 10, "colour"),
    (("[read]", "[readout]"), 17, "readout"),
    (("kind = echo", "kind = movie"), 3, "movie"),
])
def test_errors_carry_line_numbers(edit, line, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace(*edit), "s.ini")
    assert exc.value.line == line
    assert needle in str(exc.value) and f"s.ini:{line}" in str(exc.value)


def test_missing_required_key():
    with pytest.raises(ConfigError, match="t_off_us"):
        parse_config(MINIMAL.replace("t_off_us = 4.0\n", "", 1))


def test_missing_required_section():
    with pytest.raises(ConfigError, match=r"\[sweep\]"):
        parse_config(MINIMAL.replace("kind = echo", "kind = erase-decay"))


def test_missing_mask_file(tmp_path):
    cfg = parse_config(MINIMAL + "\n[probe]\nmask = nowhere.pgm\n", tmp_path / "s.ini")
    with pytest.raises(ConfigError, match="nowhere.pgm"):
        scenario.build_protocol(cfg)


def test_presets_load():
    kinds = {name: scenario.load_preset(name).kind for name in scenario.PRESETS}
    assert kinds == {"fig2": "echo", "fig3": "visibility-decay", "fig4": "erase-decay"}


def test_fig2_preset_timing():
    cfg = scenario.load_preset("fig2")
    built = scenario.build_protocol(cfg)
    reads = built.protocol.beams.windows("read")
    write_off = built.protocol.beams.windows("write")[0][1]
    # Read windows centred 2, 2.5 and 3 us after writing stops.
    assert [0.5 * (a + b) - write_off for a, b in reads] == pytest.approx([2.0, 2.5, 3.0])
    assert built.protocol.grid.dt <= 0.1 / (abs(built.protocol.gradient.eta0) * 200.0) + 1e-15


def test_fig4_eraser_calibration():
    cfg = scenario.load_preset("fig4")
    er = scenario.build_eraser(cfg, scenario.build_protocol(cfg).protocol.grid, cfg.eraser_sections()[0])
    rate = er.rate_field().max()
    assert 1.0 / (2.0 * rate) == pytest.approx(0.498, rel=1e-9)


# --- running ---------------------------------------------------------------

def test_minimal_run_outputs(tmp_path):
    cfg_path = write_cfg(tmp_path, MINIMAL)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg_path), "-o", str(out)]) == 0
    rows = list(csv.reader((out / "echo_trace.csv").open()))
    assert rows[0] == ["t_us", "input_power", "output_power"]
    assert len(rows) == 1 + 640
    summary = (out / "summary.txt").read_text()
    assert "efficiency" in summary
    frames = sorted((out / "frames").glob("*.pgm"))
    assert len(frames) >= 80
    edges = np.load(out / "frames_raw.npz")["edges"]
    assert 4.25 in edges.tolist() and np.all(np.diff(edges) > 0)


def test_run_is_reproducible_across_workers(tmp_path):
    cfg_path = write_cfg(tmp_path, MINIMAL.replace("nx = 1", "nx = 6").replace("ny = 1", "ny = 2"))
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", str(cfg_path), "-o", str(a)]) == 0
    assert cli.main(["run", str(cfg_path), "-o", str(b), "--workers", "3"]) == 0
    cmp = filecmp.dircmp(a, b)
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    assert not filecmp.dircmp(a / "frames", b / "frames").diff_files


def test_config_error_exit_code(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path, MINIMAL.replace("nz = 128", "nz = -4"))
    assert cli.main(["run", str(cfg_path), "-o", str(tmp_path / "o")]) == 1
    assert cli.main(["run", str(tmp_path / "absent.ini")]) == 1
    assert "error" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["capacity", "--D", "35"])
    assert exc.value.code == 1


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise NumericalError("non-finite spin wave")
    monkeypatch.setattr(scenario, "run_protocol", boom)
    cfg_path = write_cfg(tmp_path, MINIMAL)
    assert cli.main(["run", str(cfg_path), "-o", str(tmp_path / "o")]) == 2


def _csv_rows(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#") and not l[0].isalpha()]
    return [list(map(float, r)) for r in csv.reader(lines)]


def test_capacity_command(capsys):
    assert cli.main(["capacity", "--D", "35", "--t", "15", "--vlim", "0.9", "--b", "0.05,0.1,0.2"]) == 0
    rows = _csv_rows(capsys.readouterr().out)
    assert all(6.3 <= r[3] <= 7.9 for r in rows)
    assert cli.main(["capacity", "--D", "35", "--t", "15", "--vlim", "1e-12", "--b", "0.1"]) == 0
    assert _csv_rows(capsys.readouterr().out)[0][2] == pytest.approx(10.0, rel=1e-9)
    cli.main(["capacity", "--D", "35", "--t", "15", "--vlim", "0.9", "--b", "0.1"])
    cli.main(["capacity", "--D", "35", "--t", "60", "--vlim", "0.9", "--b", "0.1"])
    r15, r60 = _csv_rows(capsys.readouterr().out)
    assert r60[1] == pytest.approx(2 * r15[1], rel=1e-14)
    assert cli.main(["capacity", "--D", "35", "--t", "15", "--vlim", "1.0", "--b", "0.1"]) == 1


def test_visibility_decay_command(capsys, tmp_path):
    out = tmp_path / "v.csv"
    assert cli.main(["visibility-decay", "--lppm", "1", "--D", "35", "--t-list", "0,5,10",
                     "--background", "0.1", "-o", str(out)]) == 0
    rows = _csv_rows(capsys.readouterr().out)
    assert rows[0][1] == pytest.approx(1 / 1.2) and rows[0][2] == pytest.approx(1 / 1.2)
    assert rows[1][1] > rows[2][1]
    assert out.exists()
    cli.main(["visibility-decay", "--lppm", "1", "--D", "0", "--t-list", "0,5,10"])
    flat = _csv_rows(capsys.readouterr().out)
    assert all(r[1] == 1.0 and r[2] == 1.0 for r in flat)


def test_profile_command(tmp_path, capsys):
    frame = np.zeros((40, 10))
    frame[:20] = 1.0
    p = tmp_path / "f.pgm"
    save_frame(frame, p)
    assert cli.main(["profile", "--frame", str(p), "--rows", "2:8", "--width-mm", "4",
                     "--edge-at", "0"]) == 0
    out = capsys.readouterr().out
    rows = _csv_rows(out)
    assert len(rows) == 40 and rows[0][1] == 1.0 and rows[-1][1] == 0.0
    assert "edge_width_10_90" in out


def test_erase_decay_rejects_wrong_kind(tmp_path):
    cfg_path = write_cfg(tmp_path, MINIMAL)
    assert cli.main(["erase-decay", str(cfg_path), "-o", str(tmp_path / "o")]) == 1


def test_visibility_decay_preset(tmp_path):
    s = scenario.run_scenario(scenario.load_preset("fig3"), tmp_path)
    rows = _csv_rows((tmp_path / "visibility_decay.csv").read_text())
    model = [r[1] for r in rows]
    assert all(a > b for a, b in zip(model, model[1:]))
    t = np.array([r[0] for r in rows])
    slope = np.diff(model) / np.diff(t)
    assert np.all(np.diff(slope)[t[1:-1] >= 5.0] > 0)
    assert s["max_abs_difference"] >= 0
