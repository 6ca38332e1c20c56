import csv
import io
import json
import math

import pytest

from emdephase import cli
from emdephase.cli import (
    EXIT_CONVERGENCE,
    EXIT_INPUT,
    EXIT_OK,
    InputError,
    available_presets,
    load_preset,
    parse_charge,
    parse_dipole,
    parse_grid,
    parse_quantity,
    run,
)
from emdephase.core import E_CHARGE, E_MICRON
from emdephase.dephasing import ConvergenceError

CHANNEL_ARGS = ["channel", "--type", "cc", "--mass", "1e-15", "--dx", "20 um", "--ta", "0.5", "--te", "1.0",
                "--qint", "1e", "--qext", "1e", "--b", "1e-4", "--v", "1e-5"]


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def invoke(capsys, argv):
    code = run(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize(
    "text, expected",
    [("1e", E_CHARGE), ("2e", 2 * E_CHARGE), ("-3e", -3 * E_CHARGE), ("1.6e-19", 1.6e-19), ("10 e", 10 * E_CHARGE)],
)
def test_parse_charge(text, expected):
    assert parse_charge(text) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("text, expected", [("0.1 e*um", 0.1 * E_MICRON), ("6.17e-30", 6.17e-30), ("1e*um", E_MICRON)])
def test_parse_dipole(text, expected):
    assert parse_dipole(text) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize(
    "text, kind, expected",
    [("100 um", "length", 1e-4), ("1 us", "time", 1e-6), ("90 deg", "angle", math.pi / 2), ("0.5", "time", 0.5), ("3 mm", "length", 3e-3)],
)
def test_parse_quantity(text, kind, expected):
    assert parse_quantity(text, kind) == expected


def test_units_exact():
    assert parse_quantity("100 um", "length") == 1e-4


@pytest.mark.parametrize("text, kind", [("abc", "length"), ("5 parsec", "length"), ("1e*km", "dipole"), ("2 fortnights", "time")])
def test_bad_quantities_rejected(text, kind):
    with pytest.raises(InputError):
        parse_quantity(text, kind)


def test_parse_grid():
    assert parse_grid("log:1e-6:1e-4:3") == pytest.approx([1e-6, 1e-5, 1e-4])
    assert parse_grid("lin:0:1:5") == pytest.approx([0, 0.25, 0.5, 0.75, 1])
    assert parse_grid("1,2, 3") == [1.0, 2.0, 3.0]


@pytest.mark.parametrize("spec", ["", "log:1:10:0", "lin:0:1"])
def test_bad_grids_rejected(spec):
    with pytest.raises(InputError):
        parse_grid(spec)


def test_presets_shipped():
    names = available_presets()
    for n in ("fig3a", "fig3b", "fig3c", "fig3d", "fig4a", "fig4b", "fig4c", "fig4d", "fig5", "fig6"):
        assert n in names


def test_qgem_preset_matches_caption():
    p = load_preset("qgem")
    assert p["gas"]["chamber_size"] == 0.01 and p["gas"]["gas_temperature"] == 1e-4
    assert p["interferometer"]["max_separation"] == 1e-5
    assert 4 * p["interferometer"]["accel_time"] + p["interferometer"]["hold_time"] == pytest.approx(1.0)
    assert p["interferometer"]["dipole"] == pytest.approx(0.1 * E_MICRON)


def test_cnot_preset_matches_caption():
    p = load_preset("cnot")
    assert p["interferometer"]["mass"] == 1e-27 and p["interferometer"]["charge"] == pytest.approx(E_CHARGE)
    assert p["particle"]["charge"] == pytest.approx(10 * E_CHARGE)
    assert p["interferometer"]["max_separation"] == pytest.approx(0.18e-6)
    assert 4 * p["interferometer"]["accel_time"] + p["interferometer"]["hold_time"] == pytest.approx(1e-6)
    assert p["gas"]["b_min"] == pytest.approx(1e-7)


def test_channel_command(capsys):
    code, out, _ = invoke(capsys, CHANNEL_ARGS)
    assert code == EXIT_OK
    (row,) = rows(out)
    assert row["channel"] == "cc"
    assert float(row["gamma_n"]) == pytest.approx(270.61062684981425, rel=1e-9)
    assert float(row["dominant_mode"]) > float(row["gamma_n"])


def test_channel_preset_equals_flags(capsys):
    _, from_flags, _ = invoke(capsys, CHANNEL_ARGS)
    _, from_preset, _ = invoke(capsys, ["channel", "--preset", "fig3a"])
    assert from_flags == from_preset


def test_zero_projection_from_cli(capsys):
    code, out, _ = invoke(capsys, CHANNEL_ARGS + ["--alpha", "90 deg", "--beta", "90 deg"])
    assert code == EXIT_OK and float(rows(out)[0]["gamma_n"]) == 0.0


def test_near_zero_projection_from_cli(capsys):
    _, base, _ = invoke(capsys, CHANNEL_ARGS)
    _, out, _ = invoke(capsys, CHANNEL_ARGS + ["--alpha", "1.5708", "--beta", "1.5708"])
    assert float(rows(out)[0]["gamma_n"]) < 1e-10 * float(rows(base)[0]["gamma_n"])


def test_zero_speed_rejected(capsys):
    code, _, err = invoke(capsys, CHANNEL_ARGS[:-1] + ["0"])
    assert code == EXIT_INPUT and "speed must be positive" in err


@pytest.mark.parametrize(
    "argv, message",
    [
        (["channel", "--preset", "nope"], "preset"),
        (["channel", "--preset", "fig3a", "--type", "xx"], "unknown channel"),
        (["channel", "--preset", "fig3a", "--mass", "abc"], "mass"),
        (["sweep", "--preset", "fig3a", "--grid", ""], "grid"),
        (["channel", "--preset", "fig4a", "--type", "cc"], "charge"),
        (["channel", "--type", "cc"], "mass"),
        (["channel", "--config", "/nonexistent.ini"], "cannot read"),
    ],
)
def test_input_errors(capsys, argv, message):
    code, out, err = invoke(capsys, argv)
    assert code == EXIT_INPUT
    assert message in err and out == ""


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[interferometer]\ncolour = red\n")
    code, _, err = invoke(capsys, ["channel", "--config", str(cfg)])
    assert code == EXIT_INPUT and "colour" in err


def test_config_file_with_override(capsys, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[interferometer]\nmass = 1e-15\nmax_separation = 20 um\naccel_time = 0.5\nhold_time = 1.0\ncharge = 1e\n"
        "[particle]\ncharge = 1e\n[encounter]\nimpact_parameter = 100 um\nspeed = 10 um\n[run]\nchannel = cc\n"
    )
    _, plain, _ = invoke(capsys, ["channel", "--config", str(cfg)])
    _, doubled, _ = invoke(capsys, ["channel", "--config", str(cfg), "--qint", "2e"])
    assert float(rows(doubled)[0]["gamma_n"]) == pytest.approx(4 * float(rows(plain)[0]["gamma_n"]), rel=1e-9)


def test_convergence_exit_code(capsys, monkeypatch):
    def fail(*_args, **_kwargs):
        raise ConvergenceError("did not converge", 1.0, 1.0)

    monkeypatch.setattr(cli, "dephasing", fail)
    code, _, err = invoke(capsys, ["channel", "--preset", "fig3a"])
    assert code == EXIT_CONVERGENCE and "converge" in err


def test_regime_error_exit_code(capsys):
    code, _, err = invoke(capsys, ["cnot", "--bmin", "1e-9", "--densities", "1e4"])
    assert code == EXIT_INPUT and "large-argument" in err


def test_sweep_long_format(capsys):
    code, out, _ = invoke(capsys, ["sweep", "--preset", "fig3d", "--grid", "log:10e-6:100e-6:4"])
    assert code == EXIT_OK
    table = rows(out)
    assert [r["channel"] for r in table] == ["cc"] * 4 + ["cdp"] * 4 + ["cdi"] * 4
    assert out.splitlines()[0] == "variable,value,channel,gamma_n,estimated_error,omega_max"
    cc = [float(r["gamma_n"]) for r in table[:4]]
    assert cc == sorted(cc, reverse=True)


def test_sweep_density(capsys):
    code, out, _ = invoke(capsys, ["sweep", "--preset", "qgem", "--var", "n_v", "--grid", "1e8,2e8"])
    assert code == EXIT_OK
    g = [float(r["gamma_n"]) for r in rows(out)]
    assert g[1] == pytest.approx(2 * g[0], rel=1e-10)


def test_qgem_command(capsys):
    code, out, _ = invoke(capsys, ["qgem", "--densities", "1e8,1e12"])
    assert code == EXIT_OK
    first, second = rows(out)
    assert float(first["gamma_n"]) == pytest.approx(1.2474e-6, rel=1e-4)
    assert float(first["abs_delta_phi"]) == pytest.approx(1.45213e-4, rel=1e-5)
    assert first["detectable"] == "1" and second["detectable"] == "0"


def test_qgem_exact_bessel(capsys):
    _, small, _ = invoke(capsys, ["qgem", "--densities", "1e10"])
    _, exact, _ = invoke(capsys, ["qgem", "--densities", "1e10", "--exact-bessel"])
    ratio = float(rows(small)[0]["gamma_n"]) / float(rows(exact)[0]["gamma_n"])
    assert abs(ratio - 1) <= 0.2


def test_cnot_command(capsys):
    code, out, _ = invoke(capsys, ["cnot", "--densities", "1e4"])
    assert code == EXIT_OK
    (row,) = rows(out)
    assert float(row["gamma_n"]) == pytest.approx(1.8045e-5, rel=1e-4)
    assert float(row["abs_delta_phi"]) == pytest.approx(0.166963, rel=1e-5)


def test_zero_density_detectable(capsys):
    _, out, _ = invoke(capsys, ["qgem", "--densities", "0"])
    (row,) = rows(out)
    assert float(row["gamma_n"]) == 0.0 and row["detectable"] == "1"


@pytest.mark.parametrize(
    "u, check",
    [
        ("10", lambda a, b: min(abs(b), abs(b - math.pi)) < 0.02),
        ("0.1", lambda a, b: min(abs(a), abs(a - math.pi)) < 0.02),
        ("1", lambda a, b: (a, b) in ((0.0, 0.0), (math.pi, math.pi))),
    ],
)
def test_angles_argmax(capsys, u, check):
    code, out, _ = invoke(capsys, ["angles", "--type", "cc", "--u", u, "--argmax-only"])
    assert code == EXIT_OK
    (row,) = rows(out)
    assert check(float(row["alpha"]), float(row["beta"]))


def test_angles_map(capsys):
    code, out, _ = invoke(capsys, ["angles", "--type", "dd", "--u", "1", "--angle-grid", "11"])
    table = rows(out)
    assert code == EXIT_OK and len(table) == 121
    assert max(float(r["value"]) for r in table) == pytest.approx(1.0)


def test_angles_reject_nonpositive(capsys):
    code, _, _ = invoke(capsys, ["angles", "--type", "cc", "--u", "0"])
    assert code == EXIT_INPUT


def test_json_output(capsys):
    code, out, _ = invoke(capsys, ["oracle", "--preset", "fig3a", "--realizations", "200", "--format", "json",
                                    "--alpha", "90 deg", "--beta", "90 deg"])
    assert code == EXIT_OK
    record = json.loads(out)
    assert record["variance"] == 0.0 and record["ratio"] is None


def test_csv_round_trips_floats(capsys):
    _, out, _ = invoke(capsys, CHANNEL_ARGS)
    value = rows(out)[0]["gamma_n"]
    assert float(value) == pytest.approx(270.61062684981425, rel=1e-12)
    assert float(f"{float(value):.17g}") == float(value)
    assert "\r" not in out


@pytest.mark.parametrize(
    "argv",
    [
        CHANNEL_ARGS,
        ["sweep", "--preset", "fig4d", "--grid", "log:1e-6:5e-5:3"],
        ["qgem", "--densities", "1e8,1e10"],
        ["cnot", "--densities", "1e4"],
        ["angles", "--preset", "fig3a", "--u", "0.5", "--angle-grid", "7"],
    ],
)
def test_rerun_byte_identical(tmp_path, argv):
    out = tmp_path / "result.csv"
    assert run(argv + ["--out", str(out)]) == EXIT_OK
    manifest = json.loads((tmp_path / "result.csv.manifest.json").read_text())
    assert manifest["command"] == argv[0] and manifest["outputs"] == [str(out)]
    assert {"parameters", "options", "tool_version", "seed", "created"} <= manifest.keys()
    again = tmp_path / "again.csv"
    assert run(["rerun", str(tmp_path / "result.csv.manifest.json"), "--out", str(again)]) == EXIT_OK
    assert out.read_bytes() == again.read_bytes()


@pytest.mark.parametrize("extra", [[], ["--high-pass", "--shot-noise"]])
def test_oracle_identical_across_threads(tmp_path, extra):
    outputs = []
    for threads in (1, 4, 8):
        path = tmp_path / f"mc{threads}.csv"
        argv = ["oracle", "--preset", "fig3a", "--realizations", "2000", "--seed", "5", "--threads", str(threads), "--out", str(path)]
        assert run(argv + extra) == EXIT_OK
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_bad_thread_count(capsys):
    code, _, _ = invoke(capsys, ["channel", "--preset", "fig3a", "--threads", "0"])
    assert code == EXIT_INPUT
