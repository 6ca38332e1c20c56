"""Command-line interface.

Every command resolves its parameters from a preset and/or an INI file
(sections ``[interferometer]``, ``[particle]``, ``[encounter]``, ``[gas]``,
``[run]``) plus flag overrides, converts them to SI, and writes CSV or JSON
lines. With ``--out`` a ``<out>.manifest.json`` sidecar records the command,
resolved parameters and options so that ``emdephase rerun`` can repeat it.

Values accept unit suffixes: lengths ``nm um mm cm m``, times ``ns us ms s``,
angles ``deg``/``rad``, charges ``e`` (``2e``), dipoles ``e*um`` and speeds
given as a bare length per second (``10 um`` for 10 um/s).

Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import re
import sys
import warnings
from datetime import datetime, timezone
from importlib import resources
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .channels import ChannelParams, angle_map, optimal_angles
from .core import E_CHARGE, E_MICRON, Encounter, EnvironmentParticle, InteractionChannel, InterferometerConfig
from .dephasing import (
    ConvergenceError,
    QuadratureSettings,
    RegimeWarning,
    dephasing,
    dephasing_trend,
    dominant_mode_dephasing,
)
from .ensemble import (
    BesselMode,
    GasEnsemble,
    RegimeError,
    VelocityModel,
    cnot_ensemble_dephasing,
    ensemble_dephasing,
    qgem_ensemble_dephasing,
)
from .oracle import phase_noise_mc
from .witness import detectable, entangling_phases

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONVERGENCE = 3

PRESET_ALIASES = {"qgem": "fig5", "cnot": "fig6"}

# divisors, so that "100 um" parses to exactly 1e-4
_LENGTH = {"nm": 1e9, "um": 1e6, "mm": 1e3, "cm": 1e2, "m": 1.0}
_TIME = {"ns": 1e9, "us": 1e6, "ms": 1e3, "s": 1.0}
_ANGLE = {"deg": 180 / math.pi, "rad": 1.0}

# (section, key) -> unit family used by parse_quantity
_KINDS = {
    ("interferometer", "mass"): "plain",
    ("interferometer", "max_separation"): "length",
    ("interferometer", "accel_time"): "time",
    ("interferometer", "hold_time"): "time",
    ("interferometer", "charge"): "charge",
    ("interferometer", "dipole"): "dipole",
    ("interferometer", "radius"): "length",
    ("interferometer", "relative_permittivity"): "plain",
    ("particle", "charge"): "charge",
    ("particle", "dipole"): "dipole",
    ("particle", "polarizability"): "plain",
    ("particle", "mass"): "plain",
    ("encounter", "impact_parameter"): "length",
    ("encounter", "speed"): "length",
    ("encounter", "alpha"): "angle",
    ("encounter", "beta"): "angle",
    ("encounter", "theta0"): "angle",
    ("encounter", "gamma"): "angle",
    ("encounter", "averaging_time"): "time",
    ("gas", "chamber_size"): "length",
    ("gas", "gas_temperature"): "plain",
    ("gas", "gas_mass"): "plain",
    ("gas", "b_min"): "length",
    ("gas", "b_max"): "length",
    ("gas", "averaging_time"): "time",
    ("gas", "separation"): "length",
    ("gas", "velocity"): "text",
    ("gas", "densities"): "text",
    ("gas", "coupling"): "text",
    ("run", "channel"): "text",
    ("run", "sweep"): "text",
    ("run", "grid"): "text",
    ("run", "u"): "text",
    ("run", "realizations"): "text",
}

# flag name -> (section, key)
_OVERRIDES = {
    "mass": ("interferometer", "mass"),
    "dx": ("interferometer", "max_separation"),
    "ta": ("interferometer", "accel_time"),
    "te": ("interferometer", "hold_time"),
    "qint": ("interferometer", "charge"),
    "dint": ("interferometer", "dipole"),
    "radius": ("interferometer", "radius"),
    "epsr": ("interferometer", "relative_permittivity"),
    "qext": ("particle", "charge"),
    "dext": ("particle", "dipole"),
    "polarizability": ("particle", "polarizability"),
    "b": ("encounter", "impact_parameter"),
    "v": ("encounter", "speed"),
    "alpha": ("encounter", "alpha"),
    "beta": ("encounter", "beta"),
    "theta0": ("encounter", "theta0"),
    "gamma": ("encounter", "gamma"),
    "T": ("encounter", "averaging_time"),
    "type": ("run", "channel"),
    "var": ("run", "sweep"),
    "grid": ("run", "grid"),
    "u": ("run", "u"),
    "densities": ("gas", "densities"),
    "temperature": ("gas", "gas_temperature"),
    "chamber": ("gas", "chamber_size"),
    "bmin": ("gas", "b_min"),
    "separation": ("gas", "separation"),
}

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


class InputError(ValueError):
    """Invalid or incomplete user input."""


def _split(text: str) -> tuple[float, str]:
    m = re.fullmatch(rf"\s*({_NUMBER})?\s*([A-Za-z*]*)\s*", text)
    if m is None or (m.group(1) is None and not m.group(2)):
        raise InputError(f"cannot parse quantity {text!r}")
    number = float(m.group(1)) if m.group(1) is not None else 1.0
    return number, m.group(2)


def parse_charge(text: str) -> float:
    """Charge in C; ``"2e"`` or ``"2 e"`` means two elementary charges."""
    s = text.strip()
    if s.endswith("e") and not re.fullmatch(_NUMBER, s):
        number, unit = _split(s[:-1] + " e")
        if unit != "e":
            raise InputError(f"cannot parse charge {text!r}")
        return number * E_CHARGE
    return _plain(s)


def parse_dipole(text: str) -> float:
    """Dipole in C m; ``"0.1 e*um"`` is in units of e times one micron."""
    s = text.strip()
    if s.endswith("e*um"):
        number, _ = _split(s[: -len("e*um")] or "1")
        return number * E_MICRON
    return _plain(s)


def _plain(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"cannot parse number {text!r}") from None


def _with_units(text: str, table: dict[str, float], name: str) -> float:
    number, unit = _split(text)
    if not unit:
        return number
    if unit not in table:
        raise InputError(f"unknown {name} unit {unit!r} in {text!r}")
    return number / table[unit]


def parse_quantity(text: str, kind: str):
    """Convert one config value to SI according to its unit family."""
    if kind == "text":
        return text.strip()
    if kind == "charge":
        return parse_charge(text)
    if kind == "dipole":
        return parse_dipole(text)
    if kind == "length":
        return _with_units(text, _LENGTH, "length")
    if kind == "time":
        return _with_units(text, _TIME, "time")
    if kind == "angle":
        return _with_units(text, _ANGLE, "angle")
    return _plain(text)


def parse_grid(spec: str) -> list[float]:
    """``log:a:b:n``, ``lin:a:b:n`` or a comma-separated list."""
    spec = spec.strip()
    if not spec:
        raise InputError("sweep grid is empty")
    if spec.startswith(("log:", "lin:")):
        parts = spec.split(":")
        if len(parts) != 4:
            raise InputError(f"grid {spec!r} must look like log:start:stop:count")
        start, stop, count = _plain(parts[1]), _plain(parts[2]), int(_plain(parts[3]))
        if count < 1:
            raise InputError("sweep grid is empty")
        if parts[0] == "log":
            if start <= 0 or stop <= 0:
                raise InputError("log grid needs positive end points")
            return [float(x) for x in np.geomspace(start, stop, count)]
        return [float(x) for x in np.linspace(start, stop, count)]
    values = [_plain(x) for x in spec.split(",") if x.strip()]
    if not values:
        raise InputError("sweep grid is empty")
    return values


def _read_preset(name: str) -> str:
    name = PRESET_ALIASES.get(name, name)
    path = resources.files("emdephase.presets").joinpath(f"{name}.ini")
    if not path.is_file():
        raise InputError(f"unknown preset {name!r}; available: {', '.join(available_presets())}")
    return path.read_text()


def available_presets() -> list[str]:
    names = [p.name[:-4] for p in resources.files("emdephase.presets").iterdir() if p.name.endswith(".ini")]
    return sorted(names) + sorted(PRESET_ALIASES)


def resolve_parameters(args: argparse.Namespace) -> dict[str, dict[str, object]]:
    """Merge preset, config file and flag overrides into SI values."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if getattr(args, "preset", None):
        parser.read_string(_read_preset(args.preset), source=args.preset)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc.strerror}") from None
    for flag, (section, key) in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            if not parser.has_section(section):
                parser.add_section(section)
            parser.set(section, key, str(value))
    resolved: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        out = {}
        for key, raw in parser.items(section):
            kind = _KINDS.get((section, key))
            if kind is None:
                raise InputError(f"unknown key {key!r} in section [{section}]")
            if raw.strip() == "":
                continue
            try:
                out[key] = parse_quantity(raw, kind)
            except InputError as exc:
                raise InputError(f"[{section}] {key}: {exc}") from None
        resolved[section] = out
    return resolved


def load_preset(name: str) -> dict[str, dict[str, object]]:
    """Resolved SI parameters of a shipped preset."""
    return resolve_parameters(argparse.Namespace(preset=PRESET_ALIASES.get(name, name)))


def _need(params: dict, section: str, key: str):
    try:
        return params[section][key]
    except KeyError:
        raise InputError(f"missing parameter [{section}] {key}") from None


def _optional(params: dict, section: str, key: str, default=None):
    return params.get(section, {}).get(key, default)


def _build_interferometer(params: dict) -> InterferometerConfig:
    i = params.get("interferometer", {})
    for key in ("mass", "max_separation", "accel_time", "hold_time"):
        _need(params, "interferometer", key)
    return InterferometerConfig(**i)


def _build_particle(params: dict) -> EnvironmentParticle:
    return EnvironmentParticle(**params.get("particle", {}))


def _build_encounter(params: dict) -> Encounter:
    e = dict(params.get("encounter", {}))
    _need(params, "encounter", "impact_parameter")
    _need(params, "encounter", "speed")
    for name in ("alpha", "beta", "theta0", "gamma"):
        if name in e:
            e[name] = e[name] % (2 * math.pi)
    return Encounter(**e)


def _build_gas(params: dict, count: float) -> GasEnsemble:
    g = params.get("gas", {})
    return GasEnsemble(
        count,
        _need(params, "gas", "chamber_size"),
        _need(params, "gas", "gas_temperature"),
        gas_mass=g.get("gas_mass", 4.8e-26),
        b_min=g.get("b_min", params.get("interferometer", {}).get("radius", 1e-6)),
        b_max=g.get("b_max"),
    )


def _channels(params: dict) -> list[InteractionChannel]:
    tags = str(_need(params, "run", "channel")).split(",")
    try:
        return [InteractionChannel.from_tag(t.strip()) for t in tags if t.strip()]
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _settings(options: dict) -> QuadratureSettings:
    tol = options.get("tolerance")
    return QuadratureSettings() if tol is None else QuadratureSettings(relative_tolerance=tol)


def _velocity_model(params: dict) -> VelocityModel:
    name = str(_optional(params, "gas", "velocity", "dirac")).lower()
    if name in ("dirac", "dirac-delta", "delta"):
        return VelocityModel.DIRAC_DELTA
    if name in ("mb", "maxwell-boltzmann", "maxwell"):
        return VelocityModel.MAXWELL_BOLTZMANN
    raise InputError(f"unknown velocity model {name!r}")


def channel_params(params: dict, channel: InteractionChannel) -> ChannelParams:
    """Build the single-encounter parameters for ``channel`` from resolved SI values."""
    return ChannelParams(channel, _build_interferometer(params), _build_particle(params), _build_encounter(params))


def cmd_channel(params: dict, options: dict) -> tuple[list[str], list[list]]:
    header = ["channel", "gamma_n", "estimated_error", "dominant_mode", "omega_min", "omega_max", "panels"]
    rows = []
    for channel in _channels(params):
        p = channel_params(params, channel)
        r = dephasing(p, _settings(options))
        rows.append([channel.value, r.gamma_n, r.estimated_error, dominant_mode_dephasing(p), r.omega_min, r.omega_max, r.panels])
    return header, rows


def _ensemble_row(params: dict, channel: InteractionChannel, count: float, options: dict):
    gas = _build_gas(params, count)
    return ensemble_dephasing(
        gas, _build_interferometer(params), _build_particle(params), channel=channel,
        velocity=_velocity_model(params), averaging_time=_optional(params, "gas", "averaging_time"),
        settings=_settings(options),
    )


def cmd_sweep(params: dict, options: dict) -> tuple[list[str], list[list]]:
    name = str(_need(params, "run", "sweep"))
    grid = parse_grid(str(_need(params, "run", "grid")))
    header = ["variable", "value", "channel", "gamma_n", "estimated_error", "omega_max"]
    rows = []
    for channel in _channels(params):
        if name == "n_v":
            volume = _need(params, "gas", "chamber_size") ** 3
            for n in grid:
                r = _ensemble_row(params, channel, n * volume, options)
                rows.append([name, n, channel.value, r.gamma_n, r.estimated_error, float("nan")])
            continue
        p = channel_params(params, channel)
        for value, r in dephasing_trend(p, name, grid, _settings(options), workers=options.get("threads", 1)):
            rows.append([name, value, channel.value, r.gamma_n, r.estimated_error, r.omega_max])
    return header, rows


def _entanglement_rows(params: dict, options: dict, compute) -> tuple[list[str], list[list]]:
    cfg = _build_interferometer(params)
    d = _need(params, "gas", "separation")
    coupling = str(_optional(params, "gas", "coupling", "gravity")).lower()
    if coupling in ("gravity", "gravitational"):
        phases = entangling_phases(cfg, d)
    elif coupling == "coulomb":
        phases = entangling_phases(cfg, d, charges=(cfg.charge, cfg.charge))
    else:
        raise InputError(f"unknown coupling {coupling!r}")
    volume = _need(params, "gas", "chamber_size") ** 3
    header = ["n_v", "gamma_n", "abs_delta_phi", "witness", "detectable", "margin"]
    rows = []
    for n in parse_grid(str(_need(params, "gas", "densities"))):
        r = compute(_build_gas(params, n * volume))
        verdict = detectable(phases.delta_phi, r.gamma_n)
        rows.append([n, r.gamma_n, abs(phases.delta_phi), verdict.witness, int(verdict.detectable), verdict.margin])
    return header, rows


def cmd_qgem(params: dict, options: dict) -> tuple[list[str], list[list]]:
    bessel = BesselMode.EXACT if options.get("exact_bessel") else BesselMode.SMALL
    (channel,) = _channels(params)[:1]

    def compute(gas):
        return qgem_ensemble_dephasing(
            gas, _build_interferometer(params), _build_particle(params), channel=channel, bessel=bessel,
            velocity=_velocity_model(params), averaging_time=_optional(params, "gas", "averaging_time"),
        )

    return _entanglement_rows(params, options, compute)


def cmd_cnot(params: dict, options: dict) -> tuple[list[str], list[list]]:
    bessel = BesselMode.EXACT if options.get("exact_bessel") else BesselMode.LARGE
    (channel,) = _channels(params)[:1]

    def compute(gas):
        return cnot_ensemble_dephasing(
            gas, _build_interferometer(params), _build_particle(params), channel=channel, bessel=bessel,
            velocity=_velocity_model(params), averaging_time=_optional(params, "gas", "averaging_time"),
            settings=_settings(options),
        )

    return _entanglement_rows(params, options, compute)


def cmd_angles(params: dict, options: dict) -> tuple[list[str], list[list]]:
    channels = _channels(params)
    us = parse_grid(str(_need(params, "run", "u")))
    if any(u <= 0 for u in us):
        raise InputError("u values must be positive")
    grid = options.get("angle_grid", 181)
    if options.get("argmax_only"):
        header = ["channel", "u", "alpha", "beta", "theta0", "gamma"]
        rows = []
        for c in channels:
            for u in us:
                a = optimal_angles(c, u, grid=grid)
                rows.append([c.value, u, a.alpha, a.beta, a.theta0, a.gamma])
        return header, rows
    header = ["channel", "u", "alpha", "beta", "value"]
    rows = []
    for c in channels:
        for u in us:
            alphas, betas, values = angle_map(c, u, grid=grid)
            for i, a in enumerate(alphas):
                for j, b in enumerate(betas):
                    rows.append([c.value, u, a, b, values[i, j]])
    return header, rows


def cmd_oracle(params: dict, options: dict) -> tuple[list[str], list[list]]:
    (channel,) = _channels(params)[:1]
    p = channel_params(params, channel)
    count = int(_optional(params, "run", "realizations", options.get("realizations", 10000)))
    mc = phase_noise_mc(
        p, count, options.get("seed", 0), high_pass=options.get("high_pass", False),
        shot_noise=options.get("shot_noise", False),
        workers=options.get("threads", 1),
    )
    freq = dephasing(p, _settings(options))
    header = [
        "channel", "realizations", "variance", "standard_error", "mean", "mean_standard_error",
        "gamma_n", "ratio", "dt", "truncation_bound",
    ]
    ratio = mc.variance / freq.gamma_n if freq.gamma_n > 0 else float("nan")
    return header, [[
        channel.value, count, mc.variance, mc.standard_error, mc.mean, mc.mean_standard_error,
        freq.gamma_n, ratio, mc.dt, mc.truncation_bound,
    ]]


COMMANDS = {
    "channel": cmd_channel,
    "sweep": cmd_sweep,
    "qgem": cmd_qgem,
    "cnot": cmd_cnot,
    "angles": cmd_angles,
    "oracle": cmd_oracle,
}

_DEFAULT_PRESETS = {"qgem": "fig5", "cnot": "fig6"}


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def render(header: list[str], rows: list[list], fmt: str) -> str:
    """CSV (LF, 17 significant digits) or one JSON object per line."""
    if fmt == "json":
        lines = []
        for row in rows:
            record = {}
            for k, v in zip(header, row):
                if isinstance(v, (float, np.floating)):
                    v = float(v)
                    v = v if math.isfinite(v) else None
                record[k] = v
            lines.append(json.dumps(record, allow_nan=False))
        return "".join(line + "\n" for line in lines)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(x) for x in row])
    return buf.getvalue()


def _tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def execute(command: str, params: dict, options: dict) -> str:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        header, rows = COMMANDS[command](params, options)
    return render(header, rows, options.get("format", "csv"))


def _write_outputs(command: str, params: dict, options: dict, text: str) -> None:
    out = options.get("out")
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.write_text(text, newline="")
    manifest = {
        "command": command,
        "parameters": params,
        "options": {k: v for k, v in options.items() if k != "out"},
        "tool_version": _tool_version(),
        "seed": options.get("seed"),
        "created": datetime.now(timezone.utc).isoformat(),
        "outputs": [str(path)],
    }
    Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [interferometer], [particle], [encounter], [gas], [run]")
    p.add_argument("--preset", help="bundled preset (fig3a ... fig6, qgem, cnot)")
    p.add_argument("--out", help="output file; a .manifest.json sidecar is written next to it")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--exact-bessel", action="store_true", help="skip the Bessel approximations")
    p.add_argument("--tolerance", type=float, help="relative quadrature tolerance")
    for flag in _OVERRIDES:
        p.add_argument(f"--{flag}", dest=flag, metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emdephase", description="Electromagnetic dephasing of matter-wave interferometers")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "channel": "dephasing of one encounter",
        "sweep": "dephasing over a parameter grid",
        "qgem": "ensemble dephasing and witness for gravitationally entangled masses",
        "cnot": "ensemble dephasing and witness for Coulomb-entangled ions",
        "angles": "normalized |a_x| over projection angles",
        "oracle": "time-domain Monte Carlo cross-check",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name == "angles":
            p.add_argument("--angle-grid", type=int, default=181)
            p.add_argument("--argmax-only", action="store_true", help="emit only the maximizing angles")
        if name == "oracle":
            p.add_argument("--realizations", type=int, default=10000)
            p.add_argument("--high-pass", action="store_true", help="remove frequencies below 2 pi / tau")
            p.add_argument("--shot-noise", action="store_true", help="Poisson arrivals at rate 1/T instead of one per run")
    rerun = sub.add_parser("rerun", help="repeat a run from its manifest")
    rerun.add_argument("manifest")
    rerun.add_argument("--out", help="write here instead of the recorded output path")
    return parser


def _options(args: argparse.Namespace) -> dict:
    keys = ("out", "format", "seed", "threads", "exact_bessel", "tolerance", "angle_grid", "argmax_only", "realizations", "high_pass", "shot_noise")
    opts = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    if opts.get("threads", 1) < 1:
        raise InputError("--threads must be at least 1")
    return opts


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rerun":
            manifest = json.loads(Path(args.manifest).read_text())
            command = manifest["command"]
            params = manifest["parameters"]
            options = dict(manifest["options"])
            options["out"] = args.out or manifest["outputs"][0]
        else:
            command = args.command
            if command in _DEFAULT_PRESETS and not args.preset and not args.config:
                args.preset = _DEFAULT_PRESETS[command]
            params = resolve_parameters(args)
            options = _options(args)
        text = execute(command, params, options)
        _write_outputs(command, params, options, text)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (InputError, RegimeError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def main() -> None:
    sys.exit(run())
