"""Monte-Carlo emission records for the reset-to-level-n emission model.

Each emission resets the atom to level ``n``, so inter-arrival times are
i.i.d. with survival ``P(t) = exp(-γ ∫|a_1|²)``. Three samplers are offered:

``exact``
    inverse-CDF sampling of ``P`` using the closed-form exponent.
``bernoulli``
    fixed steps ``dt`` with jump probability ``γ |a_1(s)|² dt`` where ``s``
    is the time since the last jump.
``mcwf-full``
    non-Hermitian evolution with ``H - iγ/2 |1><1|``; the norm decay replaces
    ``P``. This includes decay back-action on the coherent dynamics, which the
    factorized model above leaves out, and is provided for comparison only.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.linalg import expm

from .dynamics import SineSeries, amplitude_series, eigendecompose
from .photostats import IntensityIntegral, survival

MODES = ("exact", "bernoulli", "mcwf-full")
_MODE_ALIASES = {"exact-inverse-cdf": "exact", "bernoulli-step": "bernoulli"}
MAX_STEP_PROBABILITY = 0.1
BISECT_WIDTH = 1e-12


class TrajectoryError(ValueError):
    pass


class RootBracketError(TrajectoryError):
    pass


class InsufficientWindowsError(TrajectoryError):
    pass


def _series_of(system) -> SineSeries:
    if isinstance(system, SineSeries):
        return system
    return amplitude_series(eigendecompose(system))


def sample_waiting_times(series: SineSeries, gamma: float, rng, size: int,
                         points_per_period: int = 4096) -> np.ndarray:
    """Draw ``size`` waiting times by inverting ``P(t) = u``.

    A tabulated exponent brackets each root to one grid cell, bisection
    narrows it to ``1e-12`` and a guarded Newton step polishes.
    """
    if not gamma > 0:
        raise TrajectoryError(f"gamma must be positive, got {gamma!r}")
    u = 1.0 - rng.random(size)  # (0, 1]
    return invert_survival(series, gamma, u, points_per_period)


def invert_survival(series: SineSeries, gamma: float, u, points_per_period: int = 4096) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u <= 0) or np.any(u > 1):
        raise RootBracketError("u must lie in (0, 1]; P(t) = 0 is never reached")
    integral = IntensityIntegral.from_series(series)
    if integral.linear <= 0:
        if np.all(u == 1):
            return np.zeros_like(u)
        raise RootBracketError("series is identically zero; survival never drops below 1")
    level = -np.log(u) / gamma
    t_max = integral.upper_time_bound(float(level.max()))
    dt = series.period / points_per_period
    grid = np.arange(int(math.ceil(t_max / dt)) + 2) * dt
    I_grid = np.maximum.accumulate(integral(grid))

    k = np.clip(np.searchsorted(I_grid, level, side="left"), 1, len(grid) - 1)
    lo, hi = grid[k - 1], grid[k]
    lo = np.where(level <= 0, 0.0, lo)
    hi = np.where(level <= 0, 0.0, hi)
    while np.any(hi - lo > BISECT_WIDTH):
        mid = 0.5 * (lo + hi)
        below = integral(mid) < level
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    t = 0.5 * (lo + hi)
    deriv = series.intensity(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        step = (integral(t) - level) / deriv
    polished = t - step
    ok = np.isfinite(polished) & (np.abs(step) < BISECT_WIDTH)
    return np.where(ok, polished, t)


def sample_waiting_time(series: SineSeries, gamma: float, rng) -> float:
    return float(sample_waiting_times(series, gamma, rng, 1)[0])


def _bernoulli_waits(series: SineSeries, gamma: float, rng, size: int, dt: float,
                     block: int = 64) -> np.ndarray:
    peak = series.max_intensity()
    if gamma * peak * dt > MAX_STEP_PROBABILITY:
        raise TrajectoryError(
            f"dt = {dt:g} gives step jump probability {gamma * peak * dt:.3g} > "
            f"{MAX_STEP_PROBABILITY}; first-order stepping is invalid")
    waits = np.empty(size)
    alive = np.arange(size)
    k0 = 0
    while len(alive):
        s = (k0 + np.arange(block)) * dt
        p = gamma * series.intensity(s) * dt
        hits = rng.random((len(alive), block)) < p
        fired = hits.any(axis=1)
        first = hits.argmax(axis=1)
        waits[alive[fired]] = (k0 + first[fired] + 1) * dt
        alive = alive[~fired]
        k0 += block
    return waits


def mcwf_survival_table(H, gamma: float, dt: float, eps: float = 1e-12, max_steps: int = 10_000_000):
    """Norm ``‖exp(-i H_eff t) e_n‖²`` on a uniform grid until it drops below ``eps``."""
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    H_eff = H.astype(complex)
    H_eff[0, 0] -= 0.5j * gamma
    U = expm(-1j * H_eff * dt)
    psi = np.zeros(n, dtype=complex)
    psi[-1] = 1.0
    norms = [1.0]
    while norms[-1] > eps:
        if len(norms) > max_steps:
            raise TrajectoryError("norm did not decay; is level 1 coupled to level n?")
        psi = U @ psi
        norms.append(float(np.vdot(psi, psi).real))
    return np.arange(len(norms)) * dt, np.minimum.accumulate(np.array(norms))


def _mcwf_waits(system, gamma: float, rng, size: int, dt: float) -> np.ndarray:
    H = getattr(system, "H", None)
    if H is None:
        raise TrajectoryError("mcwf-full mode needs a CoupledSystem, not a bare series")
    t, S = mcwf_survival_table(H, gamma, dt)
    u = 1.0 - rng.random(size)
    # -log S is nondecreasing; interpolate the inverse
    return np.interp(-np.log(u), -np.log(S), t)


@dataclass
class JumpRecord:
    seed: int | None
    gamma: float
    omega: float
    n: int | None
    jump_times: np.ndarray
    mode: str = "exact"
    dt: float | None = None

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    @property
    def waits(self) -> np.ndarray:
        """Inter-arrival times; an emission is implied at ``t = 0``."""
        return np.diff(self.jump_times, prepend=0.0)

    @property
    def total_time(self) -> float:
        return float(self.jump_times[-1])

    @property
    def empirical_rate(self) -> float:
        return self.n_jumps / self.total_time

    def summary(self, window: float | None = None) -> dict:
        w = self.waits
        mean = float(w.mean())
        if window is None:
            window = 20.0 * mean
        try:
            fano = fano_estimate(self, window)
        except InsufficientWindowsError:
            fano = None
        return {"seed": self.seed, "n_jumps": self.n_jumps, "mean_wait": mean,
                "std_wait": float(w.std(ddof=1)) if len(w) > 1 else 0.0, "fano": fano}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["jump_time"])
            for x in self.jump_times:
                writer.writerow([repr(float(x))])

    @classmethod
    def from_csv(cls, path, **meta) -> JumpRecord:
        times = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=1)
        meta.setdefault("seed", None)
        meta.setdefault("gamma", float("nan"))
        meta.setdefault("omega", 1.0)
        meta.setdefault("n", None)
        return cls(jump_times=np.atleast_1d(times), **meta)


def simulate(system, gamma: float, n_jumps: int, seed: int | None = None, mode: str = "exact",
             dt: float | None = None, omega: float = 1.0) -> JumpRecord:
    """Generate ``n_jumps`` consecutive emissions.

    ``system`` is a :class:`~antibunch.synthesis.CoupledSystem` or directly a
    :class:`~antibunch.dynamics.SineSeries`. The generator is numpy's PCG64
    seeded with ``seed``; the same seed and mode reproduce the record bitwise.
    """
    mode = _MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise TrajectoryError(f"unknown mode {mode!r}; choose from {MODES}")
    if int(n_jumps) != n_jumps or n_jumps < 1:
        raise TrajectoryError("n_jumps must be a positive integer")
    n_jumps = int(n_jumps)
    omega = float(getattr(system, "omega", omega))
    series = _series_of(system)
    rng = np.random.default_rng(seed)
    if mode == "exact":
        waits = sample_waiting_times(series, gamma, rng, n_jumps)
    elif mode == "bernoulli":
        if dt is None:
            dt = 1e-4 / omega
        waits = _bernoulli_waits(series, gamma, rng, n_jumps, dt)
    else:
        if dt is None:
            dt = series.period / 4096
        waits = _mcwf_waits(system, gamma, rng, n_jumps, dt)
    n_levels = getattr(system, "n", 2 * series.n_terms)
    return JumpRecord(seed, float(gamma), omega, n_levels, np.cumsum(waits), mode, dt)


@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray = field(repr=False)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def mass(self) -> float:
        return float(np.sum(self.density * np.diff(self.edges)))


def empirical_wtd(record: JumpRecord, n_bins: int = 100, range=None) -> Histogram:
    counts, edges = np.histogram(record.waits, bins=n_bins, range=range)
    density = counts / (counts.sum() * np.diff(edges))
    return Histogram(edges, density, counts)


def ks_test(waits, series: SineSeries, gamma: float):
    """One-sample KS test of ``waits`` against ``1 - P(t)``; returns (D, p-value)."""
    res = stats.kstest(np.asarray(waits), lambda t: 1.0 - survival(series, gamma, t))
    return float(res.statistic), float(res.pvalue)


def ks_critical(n: int, alpha: float = 0.01) -> float:
    """Asymptotic KS critical value; ``1.63/√n`` at α = 0.01."""
    c = math.sqrt(-0.5 * math.log(alpha / 2))
    return c / math.sqrt(n)


def chi_square_test(record: JumpRecord, series: SineSeries, gamma: float, n_bins: int = 50,
                    min_expected: float = 5.0):
    """Binned goodness of fit against the analytic ``w``; returns (chi2, p-value).

    Bin probabilities are exact differences of ``P``; bins expecting fewer
    than ``min_expected`` counts are merged into their neighbours.
    """
    waits = record.waits
    N = len(waits)
    edges = np.quantile(waits, np.linspace(0, 1, n_bins + 1))
    edges[0], edges[-1] = 0.0, np.inf
    P = survival(series, gamma, np.where(np.isinf(edges), 0.0, edges))
    P[-1] = 0.0
    expected = N * (P[:-1] - P[1:])
    observed = np.histogram(waits, bins=edges)[0].astype(float)
    obs_m, exp_m = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_m.append(o_acc)
            exp_m.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc:
        obs_m[-1] += o_acc
        exp_m[-1] += e_acc
    obs_m, exp_m = np.array(obs_m), np.array(exp_m)
    exp_m *= obs_m.sum() / exp_m.sum()
    res = stats.chisquare(obs_m, exp_m)
    return float(res.statistic), float(res.pvalue)


def lag1_autocorrelation(x) -> float:
    x = np.asarray(x, dtype=float) - np.mean(x)
    return float((x[1:] @ x[:-1]) / (x @ x))


def fano_estimate(record: JumpRecord, window: float, min_windows: int = 100) -> float:
    """Variance-to-mean ratio of counts in disjoint windows of length ``window``."""
    n_windows = int(record.total_time // window)
    if n_windows < min_windows:
        raise InsufficientWindowsError(
            f"only {n_windows} windows of length {window:g} fit in the record; need {min_windows}")
    counts = np.bincount((record.jump_times // window).astype(np.int64), minlength=n_windows)
    counts = counts[:n_windows]
    return float(counts.var(ddof=1) / counts.mean())


@dataclass(frozen=True)
class InterruptionEstimate:
    gamma_o: float
    k: float
    interruptions_per_emission: float


def interruption_estimate(gamma_o: float, omega: float = 1.0) -> InterruptionEstimate:
    """Over-estimate of how often a weakly decaying level breaks the sequence.

    Emission happens about ``1/(8Ω)`` after each reset; bounding the other
    level's population by one, it decays in that time with probability
    ``γ_o/(8Ω) = 1/k``.
    """
    if not gamma_o > 0:
        raise TrajectoryError(f"gamma_o must be positive, got {gamma_o!r}")
    k = 8.0 * omega / gamma_o
    return InterruptionEstimate(float(gamma_o), k, 1.0 / k)


def append_jsonl(path, summary: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(summary) + "\n")
