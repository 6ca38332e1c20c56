"""Acceptance criteria, one printed PASS/FAIL line per check.

Run with ``pytest tests/test_acceptance.py -v`` to see the lines. Checks that
cannot hold for the model as implemented are strict xfails: they still print
FAIL with the measured value so the gap stays visible.
"""

import csv
import io
import math
import time
from contextlib import redirect_stdout

import numpy as np
import pytest
from scipy import integrate

from emdephase.channels import ChannelParams
from emdephase.cli import channel_params, load_preset, parse_grid, run
from emdephase.core import E_CHARGE, E_MICRON, Encounter, EnvironmentParticle, InteractionChannel, InterferometerConfig
from emdephase.dephasing import dephasing, dephasing_trend
from emdephase.oracle import periodogram_check, phase_noise_mc
from emdephase.specfun import BesselOrder, bessel_k
from emdephase.trajectory import transfer_function, transfer_function_numeric
from emdephase.witness import (
    detection_threshold_root,
    min_partial_transpose_eigenvalue,
    witness_expectation,
    witness_trace,
)

CHANNELS = ["cc", "cdp", "cdi", "dpc", "dic", "dd"]


@pytest.fixture
def report(capsys):
    def emit(criterion, label, ok, measured, tolerance):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {criterion}: {label}: {measured} (tolerance {tolerance})")
        return ok

    return emit


def cli_rows(argv):
    buffer = io.StringIO()
    with redirect_stdout(buffer):
        assert run(argv) == 0
    return list(csv.DictReader(io.StringIO(buffer.getvalue())))


# 1. special functions


def _cosh_integral(nu, u, derivative=False):
    """K_nu(u), or its u-derivative, from the cosh integral representation."""
    upper = math.acosh(1 + 800 / u) + 1

    def f(t):
        c = math.cosh(t)
        value = 0.5 * (math.exp(nu * t - u * c) + math.exp(-nu * t - u * c))
        return -c * value if derivative else value

    edges = np.linspace(0, upper, 9)
    return sum(integrate.quad(f, a, b, epsabs=0, epsrel=1e-13, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))


def test_criterion_1_special_functions(report):
    start = time.perf_counter()
    u = np.geomspace(0.01, 50, 200)
    recurrence = 0.0
    for nu in (1.0, 1.5):
        lo, mid, hi = bessel_k(nu - 1, u), bessel_k(nu, u), bessel_k(nu + 1, u)
        recurrence = max(recurrence, np.max(np.abs(hi - lo - (2 * nu / u) * mid) / hi))
    neighbours = {0.0: (1.0, 1.0), 0.5: (0.5, 1.5), 1.0: (0.0, 2.0), 1.5: (0.5, 2.5)}
    sample = np.geomspace(0.01, 50, 12)
    derivative = 0.0
    for nu, (lo, hi) in neighbours.items():
        for x in sample:
            identity = -0.5 * (bessel_k(lo, x) + bessel_k(hi, x))
            derivative = max(derivative, abs(identity / _cosh_integral(nu, x, derivative=True) - 1))
    closed = 0.0
    for order in (BesselOrder.HALF, BesselOrder.THREE_HALVES, BesselOrder.FIVE_HALVES):
        for x in sample:
            closed = max(closed, abs(bessel_k(order, x) / _cosh_integral(order.nu, x) - 1))
    seconds = time.perf_counter() - start
    ok = [
        report(1, "recurrence, max relative error", recurrence <= 1e-9, f"{recurrence:.2e}", "1e-9"),
        report(1, "derivative identity, max relative error", derivative <= 1e-9, f"{derivative:.2e}", "1e-9"),
        report(1, "half-integer closed forms vs quadrature", closed <= 1e-8, f"{closed:.2e}", "1e-8"),
        report(1, "runtime", seconds < 5, f"{seconds:.2f} s", "5 s"),
    ]
    assert all(ok)


# 2. transfer function


def test_criterion_2_transfer_function(report):
    start = time.perf_counter()
    cfg = InterferometerConfig(1e-15, 20e-6, 0.5, 1.0)
    grid = np.geomspace(cfg.omega_min, 1e3, 50)
    numeric = np.array([transfer_function_numeric(cfg, w) for w in grid])
    worst = float(np.max(np.abs(numeric / transfer_function(cfg, grid) - 1)))
    seconds = time.perf_counter() - start
    ok = [
        report(2, "closed form vs Fourier quadrature on 50 log points", worst <= 1e-10, f"{worst:.2e}", "1e-10"),
        report(2, "runtime", seconds < 10, f"{seconds:.2f} s", "10 s"),
    ]
    assert all(ok)


# 3. spectrum per channel

SPECTRUM_CONFIG = InterferometerConfig(1.0, 1e-6, 1.0, 0.0, charge=E_CHARGE, dipole=0.1 * E_MICRON, relative_permittivity=5.7)
SPECTRUM_PARTICLE = EnvironmentParticle(charge=E_CHARGE, dipole=6.17e-30, polarizability=1.903e-40)


def test_criterion_3_spectrum_per_channel(report):
    start = time.perf_counter()
    ok = []
    for tag in CHANNELS:
        p = ChannelParams(tag, SPECTRUM_CONFIG, SPECTRUM_PARTICLE, Encounter(1e-4, 1e-5, alpha=0.4, beta=1.1, theta0=0.7, gamma=2.0))
        deviation = periodogram_check(p, 4000.0, 0.05)
        ok.append(report(3, f"{tag} periodogram over a 400 b/v record", deviation <= 1e-3, f"{deviation:.2e}", "1e-3"))
    seconds = time.perf_counter() - start
    ok.append(report(3, "runtime", seconds < 30, f"{seconds:.2f} s", "30 s"))
    assert all(ok)


# 4. oracle equivalence


def _fig3a():
    return channel_params(load_preset("fig3a"), InteractionChannel.CC)


def test_criterion_4_oracle_equivalence(report):
    start = time.perf_counter()
    p = _fig3a()
    gamma = dephasing(p).gamma_n
    mc = phase_noise_mc(p, 10_000, 0, high_pass=True, shot_noise=True)
    seconds = time.perf_counter() - start
    ratio = mc.variance / gamma
    single = phase_noise_mc(p, 4000, 0, high_pass=True).variance / gamma
    report(4, "diagnostic: one arrival per run in [-T/2, T/2], filtered", True, f"ratio {single:.3f}", "informational")
    ok = [
        report(4, "Poisson-arrival MC variance / Gamma at 1e4 realizations", abs(ratio - 1) <= 0.15,
               f"{ratio:.4f} +/- {mc.standard_error / gamma:.4f}", "15%"),
        report(4, "runtime", seconds < 300, f"{seconds:.1f} s", "300 s"),
    ]
    assert all(ok)


# 5. trends and orderings


def _trend(preset, name, tag):
    params = load_preset(preset)
    p = channel_params(params, InteractionChannel.from_tag(tag))
    grid = parse_grid(str(params["run"]["grid"]))
    return np.array([r.gamma_n for _, r in dephasing_trend(p, name, grid)])


def test_criterion_5_trends(report):
    start = time.perf_counter()
    ok = []
    for preset, tag in [("fig3a", "cc"), ("fig3b", "cdp"), ("fig3c", "cdi"), ("fig4a", "dpc"), ("fig4b", "dic"), ("fig4c", "dd")]:
        g = _trend(preset, "v", tag)
        ok.append(report(5, f"{preset} {tag} strictly increasing in v", bool(np.all(np.diff(g) > 0)), f"{len(g)} points", "strict"))
    b = {tag: _trend("fig3d", "b", tag) for tag in ("cc", "cdp", "cdi")}
    for tag, g in b.items():
        ok.append(report(5, f"fig3d {tag} strictly decreasing in b", bool(np.all(np.diff(g) < 0)), f"{len(g)} points", "strict"))
    order = bool(np.all(b["cc"] > b["cdp"]) and np.all(b["cdp"] > b["cdi"]))
    ok.append(report(5, "fig3d ordering cc > cdp > cdi at every b", order, f"min cc/cdp {np.min(b['cc'] / b['cdp']):.3g}, min cdp/cdi {np.min(b['cdp'] / b['cdi']):.3g}", "strict"))
    dx = {tag: _trend("fig4d", "dx", tag) for tag in ("dpc", "dic", "dd")}
    for tag, g in dx.items():
        ok.append(report(5, f"fig4d {tag} strictly increasing in dx", bool(np.all(np.diff(g) > 0)), f"{len(g)} points", "strict"))
    dominant = bool(np.all(dx["dpc"] > dx["dic"]) and np.all(dx["dpc"] > dx["dd"]))
    ok.append(report(5, "fig4d dpc dominant among neutral channels", dominant, f"min dpc/max(dic, dd) {np.min(dx['dpc'] / np.maximum(dx['dic'], dx['dd'])):.3g}", "strict"))
    seconds = time.perf_counter() - start
    ok.append(report(5, "runtime", seconds < 120, f"{seconds:.1f} s", "120 s"))
    assert all(ok)


# 6. ensemble linearity and monotonicity


@pytest.mark.parametrize("command, preset, base", [("qgem", "fig5", 1e10), ("cnot", "fig6", 1e7)])
def test_criterion_6_ensemble_linearity(report, command, preset, base):
    start = time.perf_counter()
    pair = cli_rows([command, "--preset", preset, "--densities", f"{base},{2 * base}"])
    one, two = (float(r["gamma_n"]) for r in pair)
    linear = abs(two / (2 * one) - 1)
    sweep = [float(r["gamma_n"]) for r in cli_rows([command, "--preset", preset])]
    seconds = time.perf_counter() - start
    ok = [
        report(6, f"{command} Gamma(2 n_v) / 2 Gamma(n_v) - 1", linear <= 1e-10, f"{linear:.2e}", "1e-10"),
        report(6, f"{command} monotone over captioned densities", bool(np.all(np.diff(sweep) > 0)), f"{len(sweep)} points", "strict"),
        report(6, "runtime", seconds < 60, f"{seconds:.1f} s", "60 s"),
    ]
    assert all(ok)


# 7. approximation control


@pytest.mark.parametrize("command, preset, density, tolerance", [("qgem", "fig5", 1e11, 0.2), ("cnot", "fig6", 1e7, 0.1)])
def test_criterion_7_approximations(report, command, preset, density, tolerance):
    start = time.perf_counter()
    approx = float(cli_rows([command, "--preset", preset, "--densities", str(density)])[0]["gamma_n"])
    exact = float(cli_rows([command, "--preset", preset, "--densities", str(density), "--exact-bessel"])[0]["gamma_n"])
    seconds = time.perf_counter() - start
    error = abs(approx / exact - 1)
    ok = [
        report(7, f"{command} approximate vs exact Bessel at n_v = {density:g}", error <= tolerance, f"{error:.3f}", f"{tolerance:g}"),
        report(7, "runtime", seconds < 120, f"{seconds:.1f} s", "120 s"),
    ]
    assert all(ok)


# 8. witness algebra

PHASES = np.linspace(-1.5, 1.5, 20)
DEPHASINGS = np.linspace(0.0, 3.0, 20)


def test_criterion_8_closed_form_vs_trace(report):
    start = time.perf_counter()
    worst = max(abs(witness_expectation(p, g) - witness_trace(p, g)) for p in PHASES for g in DEPHASINGS)
    seconds = time.perf_counter() - start
    ok = [
        report(8, "closed form vs Tr(W rho) on 20x20 grid", worst <= 1e-12, f"{worst:.2e}", "1e-12"),
        report(8, "runtime", seconds < 10, f"{seconds:.2f} s", "10 s"),
    ]
    assert all(ok)


@pytest.mark.xfail(strict=True, reason="Tr(W rho) exceeds the partial-transpose minimum eigenvalue whenever dephasing is nonzero")
def test_criterion_8_partial_transpose(report):
    worst = max(abs(witness_expectation(p, g) - min_partial_transpose_eigenvalue(p, g)) for p in PHASES for g in DEPHASINGS)
    clean = max(abs(witness_expectation(p, 0.0) - min_partial_transpose_eigenvalue(p, 0.0)) for p in PHASES)
    report(8, "diagnostic: equality at zero dephasing", clean <= 1e-10, f"{clean:.2e}", "1e-10")
    assert report(8, "<W> vs min eigenvalue of partial transpose on 20x20 grid", worst <= 1e-10, f"{worst:.2e}", "1e-10")


@pytest.mark.xfail(strict=True, reason="the sign change of <W> sits near Gamma = 2 |dphi|, not |dphi| / 4")
def test_criterion_8_sign_change(report):
    phases = np.linspace(0.001, 0.05, 10)
    ratios = np.array([detection_threshold_root(p) / (p / 4) for p in phases])
    worst = float(np.max(np.abs(ratios - 1)))
    conservative = all(witness_expectation(p, p / 4) < 0 for p in phases)
    report(8, "diagnostic: <W> still negative at Gamma = |dphi| / 4", conservative, "all 10 points" if conservative else "violated", "sign")
    assert report(8, "sign-change Gamma / (|dphi| / 4) for dphi <= 0.05", worst <= 0.25,
                  f"ratios {ratios.min():.2f}..{ratios.max():.2f}", "25%")


# 9. determinism

NON_MC = [
    ["channel", "--preset", "fig3a"],
    ["sweep", "--preset", "fig3d", "--grid", "log:10e-6:100e-6:6"],
    ["qgem", "--preset", "fig5"],
    ["cnot", "--preset", "fig6"],
    ["angles", "--preset", "fig4c", "--u", "0.5", "--angle-grid", "31"],
]


def test_criterion_9_determinism(report, tmp_path):
    start = time.perf_counter()
    ok = []
    for k, argv in enumerate(NON_MC):
        first, second = tmp_path / f"run{k}.csv", tmp_path / f"rerun{k}.csv"
        assert run(argv + ["--out", str(first)]) == 0
        assert run(["rerun", f"{first}.manifest.json", "--out", str(second)]) == 0
        ok.append(report(9, f"{argv[0]} rerun from manifest byte-identical", first.read_bytes() == second.read_bytes(), f"{first.stat().st_size} bytes", "identical"))
    outputs = []
    for threads in (1, 4, 8):
        path = tmp_path / f"mc{threads}.csv"
        assert run(["oracle", "--preset", "fig3a", "--realizations", "2000", "--seed", "9", "--high-pass", "--shot-noise",
                    "--threads", str(threads), "--out", str(path)]) == 0
        outputs.append(path.read_bytes())
    ok.append(report(9, "oracle output across 1, 4, 8 workers", outputs[0] == outputs[1] == outputs[2], "seed 9", "identical"))
    seconds = time.perf_counter() - start
    ok.append(report(9, "runtime", seconds < 60, f"{seconds:.1f} s", "60 s"))
    assert all(ok)
