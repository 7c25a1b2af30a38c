"""Photon statistics of the emission model driven by a sine-series amplitude.

Level 1 emits at rate ``γ |a_1(t)|²`` with ``a_1`` the decay-free amplitude,
and every emission resets the atom to level ``n``. This gives

* survival ``P(t) = exp(-γ ∫_0^t |a_1|²)``,
* waiting-time density ``w(t) = γ |a_1(t)|² P(t)``,
* mean rate ``r = 1 / ∫ t w(t) dt``,
* the renewal density ``Q(τ) = w(τ) + ∫_0^τ Q(t) w(τ - t) dt`` and
  ``g²(τ) = Q(τ) / r``.

The integral in the exponent is evaluated in closed form.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .dynamics import SineSeries

DEFAULT_EPS = 1e-12
DEFAULT_POINTS_PER_PERIOD = 4096
DEFAULT_TAU_OVER_MEAN = 10.0


class PhotostatsError(ValueError):
    pass


class TruncatedSupportError(PhotostatsError):
    pass


@dataclass(frozen=True)
class IntensityIntegral:
    """``∫_0^t |a_1|² dt' = linear·t + Σ_q sine_amplitudes[q]·sin(sine_frequencies[q]·t)``.

    Built from the product-to-sum identity for every pair of sine terms;
    equal-frequency pairs contribute ``t/2 - sin(2ωt)/(4ω)``.
    """

    linear: float
    sine_amplitudes: np.ndarray
    sine_frequencies: np.ndarray

    @classmethod
    def from_series(cls, series: SineSeries) -> IntensityIntegral:
        b, w = series.amplitudes, series.frequencies
        linear = 0.5 * float(b @ b)
        amps, freqs = [], []
        for j in range(len(b)):
            amps.append(-b[j] ** 2 / (4 * w[j]))
            freqs.append(2 * w[j])
            for k in range(j + 1, len(b)):
                # 2 · b_j b_k · ½[sin((ωj-ωk)t)/(ωj-ωk) - sin((ωj+ωk)t)/(ωj+ωk)]
                d, s = abs(w[j] - w[k]), w[j] + w[k]
                amps += [b[j] * b[k] / d, -b[j] * b[k] / s]
                freqs += [d, s]
        return cls(linear, np.array(amps), np.array(freqs))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        value = self.linear * t + np.sin(np.multiply.outer(t, self.sine_frequencies)) @ self.sine_amplitudes
        # exact value is >= 0; near t = 0 the sum cancels to roundoff
        return np.maximum(value, 0.0)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return self.linear + np.cos(np.multiply.outer(t, self.sine_frequencies)) @ (
            self.sine_amplitudes * self.sine_frequencies)

    @property
    def oscillation_bound(self) -> float:
        return float(np.abs(self.sine_amplitudes).sum())

    def upper_time_bound(self, level: float) -> float:
        """A time by which the integral has certainly reached ``level``."""
        if self.linear <= 0:
            raise PhotostatsError("series is identically zero; the integral never grows")
        return (level + self.oscillation_bound) / self.linear


def cumulative_intensity(series: SineSeries, t):
    return IntensityIntegral.from_series(series)(t)


def survival(series: SineSeries, gamma: float, t):
    return np.exp(-gamma * cumulative_intensity(series, t))


def waiting_time(series: SineSeries, gamma: float, t):
    integral = IntensityIntegral.from_series(series)
    return gamma * series.intensity(t) * np.exp(-gamma * integral(t))


@dataclass
class WaitingTimeTable:
    """Waiting-time density on a uniform grid, with its survival function.

    ``series`` is kept when the table was built from a sine series so that it
    can be re-sampled exactly on other grids.
    """

    gamma: float
    t: np.ndarray
    w: np.ndarray
    P: np.ndarray
    series: SineSeries | None = None
    eps: float = DEFAULT_EPS
    r: float | None = None

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def tail(self) -> float:
        return float(self.P[-1])

    @property
    def mass(self) -> float:
        """Quadrature mass plus the analytic tail ``P(t_end)``."""
        return float(np.trapezoid(self.w, self.t)) + self.tail

    def moment(self, k: int) -> float:
        return float(np.trapezoid(self.t**k * self.w, self.t))

    @property
    def mean_wait(self) -> float:
        return 1.0 / mean_rate(self)

    @property
    def std_wait(self) -> float:
        m = self.mean_wait
        return math.sqrt(max(self.moment(2) - m * m, 0.0))

    def resample(self, t):
        t = np.asarray(t, dtype=float)
        if self.series is not None:
            return waiting_time(self.series, self.gamma, t)
        return np.interp(t, self.t, self.w, right=0.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "w", "P"])
            for row in zip(self.t, self.w, self.P):
                writer.writerow([repr(float(x)) for x in row])

    def summary(self, omega: float = 1.0, n: int | None = None) -> dict:
        return {"gamma": self.gamma, "omega": omega, "n": n, "r": mean_rate(self),
                "mean_wait": self.mean_wait, "std_wait": self.std_wait}


def waiting_time_table(series: SineSeries, gamma: float,
                       points_per_period: int = DEFAULT_POINTS_PER_PERIOD,
                       eps: float = DEFAULT_EPS) -> WaitingTimeTable:
    """Tabulate ``w`` and ``P`` until ``P < eps``.

    The grid step is ``period / points_per_period`` where the period is that
    of the lowest harmonic in ``series``.
    """
    if not gamma > 0:
        raise PhotostatsError(f"gamma must be positive, got {gamma!r}")
    integral = IntensityIntegral.from_series(series)
    level = -math.log(eps) / gamma
    hi = integral.upper_time_bound(level)
    t_end = brentq(lambda x: integral(x) - level, 0.0, hi, xtol=1e-14)
    dt = series.period / points_per_period
    n_points = int(math.ceil(t_end / dt)) + 2
    t = np.arange(n_points) * dt
    P = np.exp(-gamma * np.maximum.accumulate(integral(t)))
    w = gamma * series.intensity(t) * P
    table = WaitingTimeTable(gamma, t, w, P, series, eps)
    table.r = mean_rate(table)
    return table


def mean_rate(table: WaitingTimeTable) -> float:
    """``1 / ∫ t w dt`` with the tail beyond the grid bounded by ``t_end·P(t_end)``."""
    if table.tail > table.eps:
        raise TruncatedSupportError(
            f"survival at grid end is {table.tail:.3e} > eps = {table.eps:.1e}; extend the grid")
    mean = table.moment(1) + table.t[-1] * table.tail
    return 1.0 / mean


@dataclass
class CorrelationTable:
    tau: np.ndarray
    Q: np.ndarray
    g2: np.ndarray
    r: float
    unstable: bool = False

    @property
    def d_tau(self) -> float:
        return float(self.tau[1] - self.tau[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "Q", "g2"])
            for row in zip(self.tau, self.Q, self.g2):
                writer.writerow([repr(float(x)) for x in row])


def solve_renewal(w: np.ndarray, h: float) -> np.ndarray:
    """Trapezoidal forward substitution for ``Q = w + Q * w`` on a uniform grid.

    ``Q_i (1 - h w_0 / 2) = w_i + h (Q_0 w_i / 2 + Σ_{j=1}^{i-1} Q_j w_{i-j})``.
    The convolution is cut where ``w`` has underflowed to nothing.
    """
    w = np.asarray(w, dtype=float)
    N = len(w)
    nz = np.nonzero(np.abs(w) > np.abs(w).max() * 1e-17)[0] if np.any(w) else []
    support = int(nz[-1]) + 1 if len(nz) else 1
    w_rev = w[::-1].copy()  # w_rev[N-1-k] == w[k]
    Q = np.empty(N)
    Q[0] = w[0]
    denom = 1.0 - 0.5 * h * w[0]
    for i in range(1, N):
        lo = max(1, i - support + 1)
        # Σ_{j=lo}^{i-1} Q_j w_{i-j}; w_{i-j} == w_rev[N-1-i+j]
        conv = Q[lo:i] @ w_rev[N - 1 - i + lo:N - 1] if i > lo else 0.0
        Q[i] = (w[i] + h * (0.5 * Q[0] * w[i] + conv)) / denom
    return Q


def renewal_solve(table: WaitingTimeTable, tau_max: float | None = None,
                  d_tau: float | None = None) -> CorrelationTable:
    """Solve the renewal equation on ``[0, tau_max]`` and normalize to ``g²``.

    Defaults: ``d_tau`` is the table step and ``tau_max = 10 / r``. When the
    grids differ, ``w`` is re-sampled from the series (exact) or interpolated.
    """
    r = table.r if table.r is not None else mean_rate(table)
    if tau_max is None:
        tau_max = DEFAULT_TAU_OVER_MEAN / r
    if d_tau is None:
        d_tau = table.dt
    n_points = int(round(tau_max / d_tau)) + 1
    tau = np.arange(n_points) * d_tau
    if math.isclose(d_tau, table.dt, rel_tol=1e-12) and n_points <= len(table.t):
        w = table.w[:n_points]
    else:
        w = table.resample(tau)
    Q = solve_renewal(w, d_tau)
    unstable = bool(Q.min() < -1e-6)
    if unstable:
        warnings.warn("renewal solution went negative; refine d_tau", RuntimeWarning, stacklevel=2)
    return CorrelationTable(tau, Q, Q / r, r, unstable)


def laplace_transform(values, t, z, tail_value: float = 0.0) -> float:
    """Trapezoidal ``∫ e^{-zt} f dt`` plus ``tail_value · e^{-z t_end} / z``
    for a function that is constant beyond the grid."""
    kernel = np.exp(-z * t)
    return float(np.trapezoid(kernel * values, t)) + tail_value * math.exp(-z * t[-1]) / z


def laplace_consistency_check(table: WaitingTimeTable, correlation: CorrelationTable,
                              z_values=(1.0, 10.0, 100.0)) -> float:
    """Largest relative gap between ``Q̃(z)`` and ``w̃/(1 - w̃)`` over ``z_values``.

    ``Q`` is taken as constant (``= r``) beyond the correlation grid.
    """
    tau = correlation.tau
    w = table.resample(tau)
    worst = 0.0
    for z in z_values:
        w_t = laplace_transform(w, tau, z)
        q_t = laplace_transform(correlation.Q, tau, z, tail_value=correlation.r)
        expected = w_t / (1.0 - w_t)
        worst = max(worst, abs(q_t - expected) / abs(expected))
    return worst


def write_summary(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
