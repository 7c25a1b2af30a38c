"""Acceptance gate. Each criterion records one PASS/FAIL line, printed in the
terminal summary, before asserting."""

import math
import time

import numpy as np
import pytest
from click.testing import CliRunner
from scipy.signal import find_peaks

from antibunch.cli import main
from antibunch.dynamics import amplitude_series, eigendecompose, evolve_ode_oracle, evolve_spectral, time_grid
from antibunch.photostats import laplace_consistency_check, renewal_solve, waiting_time
from antibunch.synthesis import CoupledSystem, fourier_coefficients, matched_gamma, synthesize_levels
from antibunch.trajectory import interruption_estimate, ks_critical, ks_test, simulate

from .conftest import ACCEPTANCE_LINES, GOLDEN_H_UNITS, GOLDEN_T

LEVELS = (2, 4, 8, 16)
GAMMA = 100.0


def record(criterion, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def correlations(figure_tables):
    return {n: renewal_solve(figure_tables[n]) for n in LEVELS}


def test_c1_golden_reproduction(tmp_path):
    start = time.perf_counter()
    result = CliRunner().invoke(main, ["synthesize", "--n", "4", "--out", str(tmp_path / "s.json")])
    elapsed = time.perf_counter() - start
    system = CoupledSystem.load(tmp_path / "s.json")
    err_T = np.abs(system.design.T - GOLDEN_T).max()
    err_H = np.abs(system.H / (2 * np.pi / math.sqrt(20)) - GOLDEN_H_UNITS).max()
    ok = result.exit_code == 0 and err_T < 1e-12 and err_H < 1e-12 and elapsed < 1.0
    record(1, ok, f"golden T err {err_T:.1e}, H err {err_H:.1e} (tol 1e-12), runtime {elapsed:.2f}s (< 1s)")


def test_c2_spectrum(golden_system):
    lam = np.sort(np.linalg.eigvalsh(golden_system.H))
    expected = np.array([-6, -2, 2, 6]) * np.pi
    err = np.abs(lam / expected - 1).max()
    record(2, err < 1e-10, f"spectrum {{±2πΩ, ±6πΩ}} relative err {err:.1e} (tol 1e-10)")


def test_c3_coefficient_ratio(golden_system):
    b = amplitude_series(eigendecompose(golden_system)).amplitudes
    f = fourier_coefficients(2).amplitudes
    ratio = b[0] / b[1]
    err = abs(ratio / (f[0] / f[1]) - 1)
    record(3, err < 1e-10, f"coefficient ratio {ratio:.12f} vs Fourier {f[0] / f[1]:.12f}, rel err {err:.1e}")


def test_c4_oracle_equivalence():
    start = time.perf_counter()
    errs = {}
    for n in LEVELS:
        system = synthesize_levels(n)
        t = time_grid(2, 128)
        spec = evolve_spectral(eigendecompose(system), t)
        ode = evolve_ode_oracle(system, t)
        errs[n] = float(np.abs(spec.amplitudes - ode.amplitudes).max())
    elapsed = time.perf_counter() - start
    worst = max(errs.values())
    ok = worst < 1e-8 and elapsed < 10.0
    record(4, ok, f"spectral vs ODE max err {worst:.1e} (tol 1e-8), runtime {elapsed:.2f}s (< 10s)")


def test_c5_waiting_time(figure_tables):
    w0 = [waiting_time(figure_tables[n].series, GAMMA, 0.0) for n in LEVELS]
    mass_err = max(abs(figure_tables[n].mass - 1) for n in LEVELS)
    stds = [figure_tables[n].std_wait for n in LEVELS]
    ok = all(v == 0 for v in w0) and mass_err < 1e-6 and all(np.diff(stds) < 0)
    record(5, ok, f"w(0)=0, mass err {mass_err:.1e} (tol 1e-6), std "
                  + " > ".join(f"{s:.4f}" for s in stds))


class TestC6Correlation:
    def test_origin(self, correlations):
        vals = [correlations[n].g2[0] for n in LEVELS]
        record("6a", all(v == 0 for v in vals), "g2(0) = 0 for n = 2, 4, 8, 16")

    @pytest.mark.parametrize("n", LEVELS)
    def test_tail(self, correlations, n):
        c = correlations[n]
        dev = abs(c.g2[-1] - 1)
        record(f"6b n={n}", dev < 0.05,
               f"|g2(10/r) - 1| = {dev:.3f} (tol 0.05) at tau_end = {c.tau[-1]:.3f}")

    def test_extrema_trend(self, correlations):
        counts = []
        for n in LEVELS:
            g = correlations[n].g2
            counts.append(len(find_peaks(g, prominence=0.02)[0]) + len(find_peaks(-g, prominence=0.02)[0]))
        record("6c", counts == sorted(counts), f"extrema counts {counts} non-decreasing in n")

    def test_grid_halving(self, figure_tables, correlations):
        worst = 0.0
        for n in LEVELS:
            coarse = correlations[n]
            fine = renewal_solve(figure_tables[n], tau_max=coarse.tau[-1], d_tau=coarse.d_tau / 2)
            worst = max(worst, np.abs(fine.g2[::2] - coarse.g2).max() / np.abs(coarse.g2).max())
        record("6d", worst < 1e-3, f"grid halving max relative change {worst:.1e} (tol 1e-3)")


def test_c7_laplace(figure_tables, correlations):
    gap = laplace_consistency_check(figure_tables[4], correlations[4], (1.0, 10.0, 100.0))
    record(7, gap < 1e-3, f"n=4 Laplace relative gap {gap:.1e} at z = 1, 10, 100 (tol 1e-3)")


@pytest.mark.parametrize("n", LEVELS)
def test_c8_monte_carlo(figure_tables, n):
    start = time.perf_counter()
    system = synthesize_levels(n)
    gamma = matched_gamma(system, fourier_coefficients(n // 2), GAMMA)
    rec = simulate(system, gamma, 100_000, seed=n, mode="exact")
    series = amplitude_series(eigendecompose(system))
    D, _ = ks_test(rec.waits, series, gamma)
    crit = ks_critical(rec.n_jumps, 0.01)
    rate_err = abs(rec.empirical_rate / figure_tables[n].r - 1)
    elapsed = time.perf_counter() - start
    ok = D < crit and rate_err < 0.01 and elapsed < 30.0
    record(f"8 n={n}", ok, f"KS D {D:.5f} < {crit:.5f}, rate err {rate_err:.2%} (< 1%), "
                           f"runtime {elapsed:.2f}s (< 30s)")


def test_c9_interruption():
    est = interruption_estimate(GAMMA / 1e4, omega=1.0)
    ok = est.k == pytest.approx(800.0) and est.interruptions_per_emission < 1 / 500
    record(9, ok, f"k = {est.k:.1f} emissions per interruption (expected 800)")


def test_c10_scale_covariance():
    t = np.linspace(0, 0.5, 2001)
    worst = 0.0
    for n in LEVELS:
        series = fourier_coefficients(n // 2).series()
        base = waiting_time(series, GAMMA, t)
        for s in (0.5, 2.0, 10.0):
            scaled = waiting_time(series.scaled(s), GAMMA / s**2, t)
            worst = max(worst, np.abs(scaled - base).max() / base.max())
    record(10, worst < 1e-10, f"w invariant under (b -> s b, gamma -> gamma/s^2), max rel err {worst:.1e}")
