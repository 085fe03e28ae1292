import time

import numpy as np
import pytest

from gradex.cli import build_parser, load_settings, main, parse_config
from gradex.continuation import turning_points
from gradex.errors import ConfigError
from gradex.fixtures import mueller_brown_fixtures
from gradex.io import read_csv, read_json


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_parse_config_coerces_types():
    s = parse_config({"sampler.N": "300", "continuation.h0": "0.02", "run.branch": "largest",
                      "continuation.relative": "true"})
    assert s["sampler"]["N"] == 300 and isinstance(s["sampler"]["N"], int)
    assert s["continuation"]["h0"] == 0.02
    assert s["run"]["branch"] == "largest"
    assert s["continuation"]["relative"] is True


@pytest.mark.parametrize("key", ["sampler.nope", "bogus.N", "sampler", "run.p0"])
def test_parse_config_rejects_unknown_keys(key):
    with pytest.raises(ConfigError):
        parse_config({key: "1"})


def test_parse_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        parse_config({"sampler.N": "many"})
    with pytest.raises(ConfigError):
        parse_config({"continuation.relative": "maybe"})


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# demo settings\nrun.seed = 3\nsampler.N = 250\nrun.max_charts = 12\n")
    args = build_parser().parse_args(["demo", "mb-plane", "--config", str(cfg), "--seed", "9",
                                      "--direction-sign", "+"])
    s = load_settings(args)
    assert s["run"]["seed"] == 9
    assert s["run"]["max_charts"] == 12
    assert s["run"]["sign"] == 1.0
    assert s["sampler"]["N"] == 250


def test_unknown_key_in_file_exits_1(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("sampler.typo = 3\n")
    assert main(["demo", "mb-plane", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "unknown config key" in capsys.readouterr().err


def test_invalid_config_value_exits_1(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("continuation.tol = -1\n")
    assert main(["demo", "mb-plane", "--config", str(cfg), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("argv", [["compare"], ["compare", "nowhere"], ["demo"], [], ["frobnicate"]])
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


# ---------------------------------------------------------------------------
# demos
# ---------------------------------------------------------------------------

def test_demo_mb_plane(tmp_path):
    assert main(["demo", "mb-plane", "--out", str(tmp_path)]) == 0
    out = tmp_path / "mb-plane"
    assert (out / "ge_path.csv").exists() and (out / "fixtures.json").exists()
    man = read_json(out / "manifest.json")
    assert man["grad_norm"] < 1e-6
    assert man["nearest_fixture"]["kind"] == "saddle"
    assert man["nearest_fixture"]["distance"] < 1e-4
    assert len(read_json(out / "fixtures.json")) == len(mueller_brown_fixtures())
    header, data = read_csv(out / "ge_path.csv")
    assert header[:6] == ["step", "u1", "u2", "lambda", "L", "residual"]
    assert len(data) == man["states"]


def test_demo_rerun_overwrites_identically(tmp_path):
    assert main(["demo", "mb-plane", "--out", str(tmp_path)]) == 0
    first = {p.name: p.read_bytes() for p in (tmp_path / "mb-plane").iterdir()}
    assert main(["demo", "mb-plane", "--out", str(tmp_path)]) == 0
    second = {p.name: p.read_bytes() for p in (tmp_path / "mb-plane").iterdir()}
    assert first == second


def test_csv_round_trip_precision(tmp_path):
    main(["demo", "mb-plane", "--out", str(tmp_path)])
    text = (tmp_path / "mb-plane" / "ge_path.csv").read_text().splitlines()[2]
    vals = text.split(",")
    assert all(float(repr(float(v))) == float(v) for v in vals)
    assert max(len(v.lstrip("-").replace(".", "").lstrip("0")) for v in vals) >= 15


def test_demo_vdp_disk_origin_row(tmp_path):
    assert main(["demo", "vdp-disk", "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "vdp-disk" / "vdp_grid.csv")
    assert header == ["y1", "y2", "squared_length"]
    origin = data[np.all(data[:, :2] == 0.0, axis=1)]
    assert len(origin) == 1 and origin[0, 2] == 0.0
    assert np.all(data[:, 2] >= 0)


def test_demo_cstr(tmp_path):
    assert main(["demo", "cstr", "--out", str(tmp_path)]) == 0
    man = read_json(tmp_path / "cstr" / "manifest.json")
    assert man["field_norm"] < 1e-6
    assert man["nearest_steady_state"]["distance"] < 1e-4


def test_gradex_out_overrides_flag(tmp_path, monkeypatch):
    env_dir, flag_dir = tmp_path / "env", tmp_path / "flag"
    monkeypatch.setenv("GRADEX_OUT", str(env_dir))
    assert main(["demo", "vdp-disk", "--out", str(flag_dir)]) == 0
    assert (env_dir / "vdp-disk" / "manifest.json").exists()
    assert not flag_dir.exists()


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def test_check_clean_build_passes(capsys):
    t0 = time.perf_counter()
    assert main(["check"]) == 0
    assert time.perf_counter() - t0 < 60
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS" in out


def test_check_injected_fault_fails(capsys):
    assert main(["check", "--inject-fault", "gamma-asymmetry"]) == 1
    out = capsys.readouterr().out
    line = next(l for l in out.splitlines() if l.startswith("Christoffel symmetry"))
    assert "FAIL" in line


# ---------------------------------------------------------------------------
# dump-chart and compare
# ---------------------------------------------------------------------------

def test_dump_chart(tmp_path):
    assert main(["dump-chart", "--out", str(tmp_path), "--seed", "2"]) == 0
    out = tmp_path / "dump-chart"
    for name in ("cloud.csv", "embedding.csv", "manifest.json", "chart.json", "chart.npz"):
        assert (out / name).exists()
    header, data = read_csv(out / "cloud.csv")
    assert header == ["x1", "x2", "x3", "energy"]
    assert len(data) == 500
    assert read_json(out / "manifest.json")["dump-chart"]["boundary_threshold"] > 0


@pytest.mark.slow
def test_compare_mb(tmp_path):
    assert main(["compare", "mb", "--out", str(tmp_path)]) == 0
    out = tmp_path / "compare-mb"
    for name in ("ge.csv", "nt.csv", "gad.csv", "string.csv", "hausdorff.csv"):
        assert (out / name).exists()
    man = read_json(out / "manifest.json")
    D = np.array(man["hausdorff"]["matrix"])
    assert D.shape == (4, 4)
    assert D[~np.eye(4, dtype=bool)].min() > 1e-2


@pytest.mark.slow
def test_compare_meander_ge_turns(tmp_path):
    main(["compare", "meander", "--out", str(tmp_path)])
    header, data = read_csv(tmp_path / "compare-meander" / "ge_levels.csv")
    assert turning_points(data[:, header.index("L")]) >= 2
