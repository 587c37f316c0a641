import json
import subprocess
import sys

import pytest

from flatskin import csvio
from flatskin.cli import RunConfig, main, parse_grid, parse_sizes
from flatskin.errors import ConfigurationError


def run(tmp_path, *args, sub="o"):
    out = tmp_path / sub
    code = main([*args, "--out", str(out)])
    return code, out


def test_spectrum_layout(tmp_path, capsys):
    code, out = run(tmp_path, "spectrum", "-N", "20", "--kpoints", "64")
    assert code == 0
    meta, header, rows = csvio.read_csv(out / "spectrum.csv")
    assert header == ["source", "k_or_index", "re_E", "im_E", "band"]
    assert sum(r[0] == "pbc" for r in rows) == 64 * 3
    assert sum(r[0] == "obc" for r in rows) == 60
    assert meta["command"] == "spectrum"
    assert "region: I" in capsys.readouterr().out


def test_hermitian_flag_gives_real_spectrum(tmp_path):
    code, out = run(tmp_path, "spectrum", "--hermitian", "--kpoints", "64")
    _, _, rows = csvio.read_csv(out / "spectrum.csv")
    assert code == 0 and max(abs(float(r[3])) for r in rows) < 1e-12


def test_gamma2_one_gives_complex_obc(tmp_path):
    _, out = run(tmp_path, "spectrum", "--gamma2", "1.0", "--kpoints", "64")
    _, _, rows = csvio.read_csv(out / "spectrum.csv")
    assert max(abs(float(r[3])) for r in rows if r[0] == "obc") > 1e-3


def test_phase_map_deterministic_and_verifiable(tmp_path):
    args = ["phase-map", "--grid", "0:2:9,0:2:9", "-N", "12"]
    code1, out1 = run(tmp_path, *args, sub="a")
    code2, out2 = run(tmp_path, *args, sub="b")
    assert code1 == code2 == 0
    for name in ("chi_map.csv", "boundaries.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    assert main(["verify", "--out", str(out1)]) == 0
    (out1 / "chi_map.csv").write_text("tampered\n")
    assert main(["verify", "--out", str(out1)]) == 3


def test_config_round_trip(tmp_path):
    code, out = run(tmp_path, "response", "--gamma1", "0.9", "-N", "14", sub="a")
    manifest = json.loads((out / "manifest.json").read_text())
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps(manifest["config"]))
    code2 = main(["response", "--config", str(cfg_file), "--out", str(tmp_path / "b")])
    assert code == code2 == 0
    assert (out / "response.csv").read_bytes() == (tmp_path / "b" / "response.csv").read_bytes()
    assert manifest["files"]["response.csv"] == csvio.sha256(out / "response.csv")
    assert "timestamp" not in json.dumps(manifest)


def test_phase_map_gamma2_line(tmp_path):
    # C sites decouple from the backbone on gamma2 = -t2: no flat-band skin response.
    # Near gamma1 = |t1| the backbone itself is singular (t1 + gamma1 -> 0) and its
    # edge pseudo-mode dominates the resolvent at eta = 1e-8, so that window is skipped.
    _, out = run(tmp_path, "phase-map", "--grid", "0:2:41,0.3:0.3:1", "-N", "20")
    _, _, rows = csvio.read_csv(out / "chi_map.csv")
    kept = [float(r[2]) for r in rows if abs(float(r[0]) - 1.06) >= 0.15]
    assert len(kept) == 35 and max(kept) < 0.1


def test_ep_scan_prints_window(tmp_path, capsys):
    code, out = run(tmp_path, "ep-scan", "--grid", "0.5:0.5:1,0.3:1.5:49", "-N", "12")
    text = capsys.readouterr().out
    assert code == 0
    assert "(0.70200, 1.27059)" in text and "12 OBC EP crossing(s)" in text
    _, header, rows = csvio.read_csv(out / "ep3.csv")
    assert header == ["gamma1", "gamma2", "re_beta", "im_beta", "order"]
    assert rows and all(r[4] == "3" for r in rows)


def test_transform_reports_match(tmp_path, capsys):
    code, _ = run(tmp_path, "transform", "-N", "12", "--gamma1", "0.9")
    text = capsys.readouterr().out
    assert code == 0
    mismatch = float(text.split("=")[1].split()[0])
    assert mismatch < 1e-10


def test_scaling_slope_positive(tmp_path, capsys):
    code, _ = run(tmp_path, "scaling", "--gamma1", "0.9", "--sizes", "8:16:2")
    assert code == 0
    slope = float(capsys.readouterr().out.split("slope = ")[1].split()[0])
    assert slope > 0.1


@pytest.mark.parametrize("cmd", ["gbz", "modes", "multiplicity", "emit-model"])
def test_other_commands_succeed(tmp_path, cmd):
    assert run(tmp_path, cmd)[0] == 0


def test_qdist(tmp_path):
    code, out = run(tmp_path, "qdist", "--gamma2", "1.0", "--delta-beta", "1e-3,1e-4", "--dtheta-count", "8")
    assert code == 0
    _, _, rows = csvio.read_csv(out / "qdist.csv")
    assert len(rows) == 2 * 2 * 8


def test_jordan_exact(tmp_path, capsys):
    code, out = run(tmp_path, "jordan", "--t1", "1", "--t2", "1", "--gamma1", "1", "--gamma2", "1", "-N", "4")
    assert code == 0 and "structure as expected: True" in capsys.readouterr().out
    _, _, rows = csvio.read_csv(out / "jordan.csv")
    assert rows[0] == ["0", "6", "5", "5 6"]


def test_rational_params_accepted(tmp_path):
    assert run(tmp_path, "multiplicity", "--t1=-53/50", "-N", "6")[0] == 0


@pytest.mark.parametrize("args, code", [
    (["spectrum", "--model", "/no/such/file.json"], 2),
    (["phase-map", "--grid", "0:1"], 2),
    (["spectrum", "--t1", "abc"], 2),
    (["qdist"], 4),
    (["jordan"], 4),
    (["response", "--eta", "0"], 4),
    (["gbz", "-N", "10"], 4),
    (["multiplicity", "--t1", "0.1", "--gamma1", "0.1", "--t2", "0.2", "--gamma2", "0.2", "-N", "3",
      "--method", "flat-band-projector"], 0),
])
def test_exit_codes(tmp_path, args, code):
    assert main([*args, "--out", str(tmp_path / "x")]) == code


def test_bad_model_file_is_parse_error(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text('{"bands": 1, "H0": [["x*y"]], "Tplus": [["0"]], "Tminus": [["0"]]}')
    assert main(["spectrum", "--model", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_user_model_file(tmp_path):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"bands": 1, "params": [{"name": "t", "default": 1.0}],
                             "H0": [["0"]], "Tplus": [["t"]], "Tminus": [["t"]]}))
    code = main(["spectrum", "--model", str(m), "--param", "t=0.5", "--kpoints", "64", "-N", "5",
                 "--out", str(tmp_path / "o")])
    assert code == 0
    _, _, rows = csvio.read_csv(tmp_path / "o" / "spectrum.csv")
    assert max(abs(float(r[2])) for r in rows if r[0] == "pbc") == pytest.approx(1.0)


def test_emit_model_round_trips(tmp_path):
    _, out = run(tmp_path, "emit-model")
    assert main(["spectrum", "--model", str(out / "model.json"), "--kpoints", "64",
                 "--out", str(tmp_path / "p")]) == 0


def test_parsers():
    g1, g2 = parse_grid("0:2:41,0:1:3")
    assert len(g1) == 41 and list(g2) == [0, 0.5, 1]
    assert parse_sizes("8:12:2") == [8, 10, 12] and parse_sizes("5,7") == [5, 7]
    with pytest.raises(ConfigurationError):
        parse_sizes("x")
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"bogus": 1})


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "flatskin", "emit-model", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0 and (tmp_path / "model.json").exists()


def test_csv_formatting(tmp_path):
    p = csvio.write_csv(tmp_path / "t.csv", ["a", "b"], [(float("nan"), 0.1), (1, True)], {"z": 1, "a": 2})
    assert p.read_text() == "# a: 2\n# z: 1\na,b\nnan,0.10000000000000001\n1,1\n"
