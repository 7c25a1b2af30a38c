"""Coherent (decay-free) evolution of the level amplitudes.

The amplitudes obey ``da/dt = -i H a`` with ``a(0) = e_n``. The spectral
solution ``a(t) = Σ c_m exp(-i λ_m t) v_m`` is the production path; a direct
adaptive ODE integration is kept alongside as an independent check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

DEFAULT_POINTS_PER_PERIOD = 512


class DynamicsError(ValueError):
    pass


class NotSineSeriesError(DynamicsError):
    """The spectrum or the coefficients break the (λ, -λ) pairing, so level 1
    does not follow a pure sine series. ``residue`` is the offending size."""

    def __init__(self, message: str, residue: float):
        self.residue = residue
        super().__init__(f"{message} (residue {residue:.3e})")


@dataclass(frozen=True)
class SineSeries:
    """``a_1(t) = -i · Σ_k amplitudes[k] · sin(frequencies[k] · t)``.

    Only ``|a_1|²`` is used downstream, so the global factor ``-i`` is kept
    implicit and calling the series returns the real sum.
    """

    amplitudes: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        w = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        if b.shape != w.shape or b.ndim != 1:
            raise DynamicsError("amplitudes and frequencies must be 1-d and equal length")
        if np.any(w <= 0):
            raise DynamicsError("frequencies must be positive")
        if len(np.unique(w)) != len(w):
            raise DynamicsError("frequencies must be distinct")
        object.__setattr__(self, "amplitudes", b)
        object.__setattr__(self, "frequencies", w)

    @property
    def n_terms(self) -> int:
        return len(self.amplitudes)

    @property
    def period(self) -> float:
        """Period of the fundamental (lowest) frequency."""
        return 2 * np.pi / self.frequencies.min()

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.sin(np.multiply.outer(t, self.frequencies)) @ self.amplitudes

    def amplitude(self, t):
        return -1j * self(t)

    def intensity(self, t):
        return self(t) ** 2

    def scaled(self, s: float) -> SineSeries:
        return SineSeries(s * self.amplitudes, self.frequencies)

    def max_intensity(self, points_per_period: int = 4096) -> float:
        t = np.linspace(0.0, self.period, points_per_period + 1)
        return float(max(self.intensity(t).max(), 0.0))


@dataclass(frozen=True)
class EigenStructure:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    coefficients: np.ndarray

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def eigendecompose(system, degeneracy_tol: float = 1e-9) -> EigenStructure:
    """Orthonormal eigenbasis of ``system.H`` with ``c_m`` set by ``a(0) = e_n``.

    Eigenvalues are returned in descending order. Degenerate spectra are
    rejected: the sine-series construction presumes distinct eigenvalues.
    """
    H = np.asarray(getattr(system, "H", system), dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DynamicsError(f"H must be square, got shape {H.shape}")
    scale = max(1.0, np.abs(H).max())
    if np.abs(H - H.T).max() > 1e-12 * scale:
        raise DynamicsError("H is not symmetric")
    lam, V = np.linalg.eigh(H)
    lam, V = lam[::-1], V[:, ::-1]
    if len(lam) > 1:
        gap = np.min(-np.diff(lam))
        if gap <= degeneracy_tol * max(1.0, np.abs(lam).max()):
            raise DynamicsError(f"degenerate eigenvalues (minimum gap {gap:.3e})")
    # c = V^T a(0) with a(0) = e_n
    c = V[-1].copy()
    return EigenStructure(lam, V, c)


def amplitude_series(eigen: EigenStructure, tol: float = 1e-9) -> SineSeries:
    """Extract the sine series of ``a_1(t)`` from a paired spectrum.

    Term ``k`` has frequency ``λ_k > 0`` and amplitude ``p(λ_k) - p(-λ_k)``
    with ``p = c_m v_1m``; this equals ``2 c_m v_1m`` when the pairing is exact.
    """
    lam = eigen.eigenvalues
    n = len(lam)
    if n % 2:
        raise NotSineSeriesError("odd number of levels", 1.0)
    k = n // 2
    lam_scale = max(np.abs(lam).max(), np.finfo(float).tiny)
    pair_resid = float(np.abs(lam + lam[::-1]).max() / lam_scale)
    if pair_resid > tol:
        raise NotSineSeriesError("eigenvalues are not paired as (λ, -λ)", pair_resid)
    p = eigen.coefficients * eigen.eigenvectors[0]
    pos = p[:k][::-1]
    neg = p[::-1][:k][::-1]
    cosine = float(np.abs(pos + neg).max())
    if cosine > tol:
        raise NotSineSeriesError("paired products do not cancel; cosine terms remain", cosine)
    return SineSeries(pos - neg, lam[:k][::-1])


@dataclass(frozen=True)
class AmplitudeTrajectory:
    t: np.ndarray
    amplitudes: np.ndarray  # shape (len(t), n), complex

    @property
    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1)

    @property
    def a1(self) -> np.ndarray:
        return self.amplitudes[:, 0]

    def to_csv(self, path) -> None:
        n = self.amplitudes.shape[1]
        header = ["t"]
        for j in range(1, n + 1):
            header += [f"re_a{j}", f"im_a{j}"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for ti, row in zip(self.t, self.amplitudes):
                vals = [repr(float(ti))]
                for z in row:
                    vals += [repr(float(z.real)), repr(float(z.imag))]
                writer.writerow(vals)

    @classmethod
    def from_csv(cls, path) -> AmplitudeTrajectory:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1::2] + 1j * data[:, 2::2])


def time_grid(periods: float = 1.0, points_per_period: int = DEFAULT_POINTS_PER_PERIOD,
              omega: float = 1.0) -> np.ndarray:
    n = int(round(periods * points_per_period))
    return np.arange(n + 1) * (1.0 / omega / points_per_period)


def _check_grid(t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0) or np.any(np.diff(t) < 0):
        raise DynamicsError("time grid must be nonnegative and ascending")
    return t


def initial_state(n: int) -> np.ndarray:
    a0 = np.zeros(n, dtype=complex)
    a0[-1] = 1.0
    return a0


def evolve_spectral(eigen: EigenStructure, t_grid) -> AmplitudeTrajectory:
    t = _check_grid(t_grid)
    phases = np.exp(-1j * np.multiply.outer(t, eigen.eigenvalues))
    a = (phases * eigen.coefficients) @ eigen.eigenvectors.T
    a[t == 0] = initial_state(eigen.n)
    return AmplitudeTrajectory(t, a)


def evolve_ode_oracle(system, t_grid, rtol: float = 1e-10, atol: float = 1e-12) -> AmplitudeTrajectory:
    """Integrate ``da/dt = -iHa`` directly with an adaptive 8th-order RK.

    Independent of the eigendecomposition; used to check
    :func:`evolve_spectral`.
    """
    t = _check_grid(t_grid)
    H = np.asarray(getattr(system, "H", system), dtype=float)
    a0 = initial_state(H.shape[0])
    if t[-1] == 0:
        return AmplitudeTrajectory(t, np.tile(a0, (len(t), 1)))
    sol = solve_ivp(lambda _, a: -1j * (H @ a), (0.0, t[-1]), a0, method="DOP853",
                    t_eval=t, rtol=rtol, atol=atol)
    if not sol.success:
        raise DynamicsError(f"ODE integration failed: {sol.message}")
    a = sol.y.T.copy()
    a[t == 0] = a0
    return AmplitudeTrajectory(t, a)
