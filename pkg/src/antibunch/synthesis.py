"""Inverse design of coherently driven n-level couplings.

The coupling matrix is built as ``H = T @ diag(eigenvalues) @ T.T`` where the
eigenvalues are odd harmonics ``±(2m-1)·2πΩ`` and the rows of ``T`` are chosen
so that, starting from level ``n``, the amplitude of level 1 is a pure sine
series whose coefficients reproduce a truncated square-wave Fourier series.

Conventions
-----------
* Eigenvalues (the columns of ``T``) are stored in *descending* order,
  ``+(n-1)·2πΩ, ..., +2πΩ, -2πΩ, ..., -(n-1)·2πΩ``. Column ``j`` and column
  ``n-1-j`` are partners ``(λ, -λ)``.
* Row 1 of ``T`` is uniform; row ``n`` carries the coefficient pattern,
  antisymmetric under the partner swap.
* Rows ``2 .. n-1`` are completed by Gram-Schmidt. The default seeds are the
  swap-symmetric and swap-antisymmetric combinations ``e_j + e_j'`` and
  ``e_j' - e_j`` of standard basis vectors in index order. Every row is then
  either symmetric or antisymmetric under the swap, which forces a zero
  diagonal (no detunings).

With these conventions ``n = 4`` reproduces the reference four-level example
entrywise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .dynamics import SineSeries

ORTHO_TOL = 1e-12
SPECTRUM_RTOL = 1e-10


class DesignError(ValueError):
    """Invalid design input or a design that violates its invariants."""


class GramSchmidtError(DesignError):
    """A free-row seed vector is linearly dependent on the rows already built."""

    def __init__(self, seed_index: int, residual_norm: float):
        self.seed_index = seed_index
        self.residual_norm = residual_norm
        super().__init__(
            f"seed vector {seed_index} collided with the span of earlier rows "
            f"(residual norm {residual_norm:.3e})"
        )


class FreeRowStrategy(str, Enum):
    GRAM_SCHMIDT = "gram_schmidt"
    PAPER4 = "paper4"
    CUSTOM = "custom"


def fourier_sign(m: int) -> int:
    """Sign factor Im[(1+i)·i^m] of the m-th square-wave harmonic."""
    return int(round(((1 + 1j) * 1j**m).imag))


@dataclass(frozen=True)
class FourierTarget:
    """First ``n_terms`` odd harmonics of the delayed square-wave target.

    ``amplitudes[m-1]`` multiplies ``sin((2m-1)·2πΩ t)``; the target has
    period ``1/omega``.
    """

    n_terms: int
    omega: float
    amplitudes: np.ndarray
    frequencies: np.ndarray

    @property
    def n_levels(self) -> int:
        return 2 * self.n_terms

    def scaled(self, s: float) -> FourierTarget:
        return FourierTarget(self.n_terms, self.omega, s * self.amplitudes, self.frequencies)

    def series(self) -> SineSeries:
        return SineSeries(self.amplitudes, self.frequencies)


def fourier_coefficients(n_terms: int, omega: float = 1.0) -> FourierTarget:
    if int(n_terms) != n_terms or n_terms < 1:
        raise DesignError(f"n_terms must be a positive integer, got {n_terms!r}")
    if not omega > 0:
        raise DesignError(f"omega must be positive, got {omega!r}")
    m = np.arange(1, int(n_terms) + 1)
    signs = np.array([fourier_sign(k) for k in m], dtype=float)
    amplitudes = 2 * np.sqrt(2) * signs / ((2 * m - 1) * np.pi)
    frequencies = (2 * m - 1) * 2 * np.pi * omega
    return FourierTarget(int(n_terms), float(omega), amplitudes, frequencies)


def square_target(t, omega: float = 1.0):
    """The ideal evolution the full Fourier series converges to.

    Zero until ``1/(8Ω)``, one until ``3/(8Ω)``, zero again, then the
    mirrored negative lobe; the midpoint value at each jump.
    """
    phase = np.mod(np.asarray(t, dtype=float) * omega, 1.0)
    out = np.zeros_like(phase)
    out[(phase > 1 / 8) & (phase < 3 / 8)] = 1.0
    out[(phase > 5 / 8) & (phase < 7 / 8)] = -1.0
    for edge, value in ((1 / 8, 0.5), (3 / 8, 0.5), (5 / 8, -0.5), (7 / 8, -0.5)):
        out[np.isclose(phase, edge, atol=1e-15)] = value
    return out


def free_parameter_count(n: int) -> int:
    """Entries of a real ``T`` left undetermined once orthonormality and the
    coefficient ratios are imposed: ``n² - n(n+1)/2 - (n-1)``."""
    if int(n) != n or n < 2 or n % 2:
        raise DesignError(f"n must be an even integer >= 2, got {n!r}")
    n = int(n)
    return (n // 2 - 1) * (n - 1)


def design_eigenvalues(target: FourierTarget) -> np.ndarray:
    return np.concatenate([target.frequencies[::-1], -target.frequencies])


def partner_index(j: int, n: int) -> int:
    return n - 1 - j


def gram_schmidt_extend(basis, seeds, *, skip_dependent=False, tol=1e-8):
    """Orthonormalize ``seeds`` against ``basis`` (rows) and each other.

    Uses modified Gram-Schmidt with one full reorthogonalization pass.
    A seed whose residual norm falls below ``tol`` times its original norm
    raises :class:`GramSchmidtError`, or is skipped when ``skip_dependent``.
    Returns only the new rows.
    """
    rows = [np.asarray(b, dtype=float) for b in basis]
    new = []
    for i, seed in enumerate(seeds):
        v = np.array(seed, dtype=float)
        norm0 = np.linalg.norm(v)
        if norm0 == 0:
            if skip_dependent:
                continue
            raise GramSchmidtError(i, 0.0)
        for _ in range(2):
            for q in rows:
                v -= (q @ v) * q
        norm = np.linalg.norm(v)
        if norm < tol * norm0:
            if skip_dependent:
                continue
            raise GramSchmidtError(i, norm / norm0)
        v /= norm
        rows.append(v)
        new.append(v)
    return new


def _symmetric_seeds(n: int):
    sym, anti = [], []
    for j in range(n // 2):
        jp = partner_index(j, n)
        e = np.zeros(n)
        e[j] = e[jp] = 1.0
        sym.append(e)
        e = np.zeros(n)
        e[jp], e[j] = 1.0, -1.0
        anti.append(e)
    return sym, anti


_PAPER4_MIDDLE = np.array([
    [-3.0, -1.0, 1.0, 3.0] / np.sqrt(20.0),
    [0.5, -0.5, -0.5, 0.5],
])


@dataclass(frozen=True)
class EigenDesign:
    eigenvalues: np.ndarray
    T: np.ndarray
    omega: float
    free_row_strategy: FreeRowStrategy = FreeRowStrategy.GRAM_SCHMIDT

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def orthonormality_residual(self) -> float:
        eye = np.eye(self.n)
        return max(np.abs(self.T @ self.T.T - eye).max(), np.abs(self.T.T @ self.T - eye).max())

    def pairing_residual(self) -> float:
        lam = np.sort(self.eigenvalues)
        return float(np.abs(lam + lam[::-1]).max())

    def products(self) -> np.ndarray:
        """``c_m · v_1m = v_nm · v_1m`` for each column."""
        return self.T[-1] * self.T[0]

    def row_overlap(self) -> float:
        return float(self.T[0] @ self.T[-1])


def build_design(target: FourierTarget, free_row_strategy="gram_schmidt", seeds=None) -> EigenDesign:
    """Choose eigenvalues and an orthogonal ``T`` realizing ``target``.

    Parameters
    ----------
    target : FourierTarget
        Sine-series target with ``n/2`` terms.
    free_row_strategy : {"gram_schmidt", "paper4", "custom"}
        How rows ``2 .. n-1`` are completed. ``"paper4"`` hard-codes the
        reference middle rows and requires ``n = 4``; ``"custom"`` orthogonalizes
        the ``n - 2`` caller-supplied ``seeds`` in order.
    seeds : array_like, optional
        Seed vectors for the ``"custom"`` strategy.

    Raises
    ------
    GramSchmidtError
        A custom seed is dependent on earlier rows; ``seed_index`` names it.
    """
    strategy = FreeRowStrategy(free_row_strategy)
    b = np.asarray(target.amplitudes, dtype=float)
    if not np.any(b):
        raise DesignError("target coefficients are all zero")
    n = target.n_levels
    eigenvalues = design_eigenvalues(target)

    top = np.full(n, 1 / np.sqrt(n))
    # positive-eigenvalue columns come first, highest frequency first
    pattern = -b[::-1]
    bottom = np.concatenate([pattern, -pattern[::-1]])
    bottom /= np.linalg.norm(bottom)

    if n == 2:
        middle = []
    elif strategy is FreeRowStrategy.PAPER4:
        if n != 4:
            raise DesignError("the paper4 strategy applies to n = 4 only")
        middle = list(_PAPER4_MIDDLE)
    elif strategy is FreeRowStrategy.CUSTOM:
        if seeds is None or len(seeds) != n - 2:
            raise DesignError(f"custom strategy needs exactly {n - 2} seed vectors")
        middle = gram_schmidt_extend([top, bottom], seeds)
    else:
        sym, anti = _symmetric_seeds(n)
        s_rows = gram_schmidt_extend([top], sym, skip_dependent=True)
        a_rows = gram_schmidt_extend([bottom], anti, skip_dependent=True)
        if len(s_rows) != n // 2 - 1 or len(a_rows) != n // 2 - 1:
            raise DesignError("symmetric seed completion lost rank")
        middle = [r for pair in zip(a_rows, s_rows) for r in pair]

    T = np.vstack([top, *middle, bottom])
    design = EigenDesign(eigenvalues, T, target.omega, strategy)
    resid = design.orthonormality_residual()
    if resid > ORTHO_TOL:
        raise DesignError(f"completed T is not orthonormal (residual {resid:.3e})")
    return design


@dataclass(frozen=True)
class CoupledSystem:
    """A driven n-level system: real symmetric ``H`` in angular-frequency units."""

    H: np.ndarray
    omega: float = 1.0
    design: EigenDesign | None = field(default=None, compare=False)

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise DesignError(f"H must be square, got shape {H.shape}")
        scale = max(1.0, np.abs(H).max())
        if np.abs(H - H.T).max() > ORTHO_TOL * scale:
            raise DesignError("H is not symmetric")
        object.__setattr__(self, "H", H)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def to_dict(self) -> dict:
        d = {"n": self.n, "omega": self.omega, "H": (self.H / self.omega).tolist()}
        if self.design is not None:
            d["eigenvalues"] = (self.design.eigenvalues / self.omega).tolist()
            d["T"] = self.design.T.tolist()
            d["free_row_strategy"] = self.design.free_row_strategy.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> CoupledSystem:
        omega = float(d.get("omega", 1.0))
        H = np.asarray(d["H"], dtype=float) * omega
        if int(d.get("n", len(H))) != len(H):
            raise DesignError("descriptor 'n' does not match H")
        design = None
        if "T" in d and "eigenvalues" in d:
            design = EigenDesign(
                np.asarray(d["eigenvalues"], dtype=float) * omega,
                np.asarray(d["T"], dtype=float),
                omega,
                FreeRowStrategy(d.get("free_row_strategy", "gram_schmidt")),
            )
        return cls(H, omega, design)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> CoupledSystem:
        return cls.from_dict(json.loads(Path(path).read_text()))


def synthesize(design: EigenDesign) -> CoupledSystem:
    resid = design.orthonormality_residual()
    if resid > ORTHO_TOL:
        raise DesignError(f"design T is not orthonormal (residual {resid:.3e})")
    T = design.T
    H = (T * design.eigenvalues) @ T.T
    H = 0.5 * (H + H.T)
    return CoupledSystem(H, design.omega, design)


def synthesize_levels(n: int, omega: float = 1.0, free_row_strategy="gram_schmidt") -> CoupledSystem:
    """Shortcut: target with ``n/2`` terms, design, and synthesis in one call."""
    if int(n) != n or n < 2 or n % 2:
        raise DesignError(f"n must be even and >= 2, got {n!r}")
    return synthesize(build_design(fourier_coefficients(int(n) // 2, omega), free_row_strategy))


@dataclass
class VerificationReport:
    eigenvalues: np.ndarray
    coefficients: np.ndarray
    scale: float
    pairing_residual: float
    spectrum_residual: float
    cosine_residual: float
    ratio_residual: float
    orthogonality_residual: float
    tol: float = SPECTRUM_RTOL

    @property
    def checks(self) -> dict:
        return {
            "eigenvalue_pairing": self.pairing_residual <= self.tol,
            "spectrum": self.spectrum_residual <= self.tol,
            "sine_series": self.cosine_residual <= self.tol,
            "coefficient_ratios": self.ratio_residual <= self.tol,
            "orthogonality": self.orthogonality_residual <= ORTHO_TOL * 100,
        }

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": self.checks,
            "scale": self.scale,
            "pairing_residual": self.pairing_residual,
            "spectrum_residual": self.spectrum_residual,
            "cosine_residual": self.cosine_residual,
            "ratio_residual": self.ratio_residual,
            "orthogonality_residual": self.orthogonality_residual,
            "coefficients": self.coefficients.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }


def verify(system: CoupledSystem, target: FourierTarget, tol: float = SPECTRUM_RTOL) -> VerificationReport:
    """Re-diagonalize ``H`` from scratch and compare with ``target``.

    Coefficients are compared scale-free: both vectors are divided by their
    entry at the target's largest harmonic before differencing. Residuals are
    relative to the largest eigenvalue magnitude where that makes sense.
    """
    lam, V = np.linalg.eigh(system.H)
    order = np.argsort(lam)[::-1]
    lam, V = lam[order], V[:, order]
    n = len(lam)
    k = n // 2
    lam_scale = max(np.abs(lam).max(), np.finfo(float).tiny)

    pairing = float(np.abs(lam + lam[::-1]).max() / lam_scale)
    prod = V[-1] * V[0]
    pos, neg = prod[:k][::-1], prod[::-1][:k][::-1]
    coefficients = pos - neg
    cosine = float(np.abs(pos + neg).max())

    freqs = lam[:k][::-1]
    if len(freqs) == len(target.frequencies):
        spectrum = float(np.abs(freqs - target.frequencies).max() / target.frequencies.max())
        ref = int(np.argmax(np.abs(target.amplitudes)))
        if abs(coefficients[ref]) > 1e-300:
            scale = float(coefficients[ref] / target.amplitudes[ref])
            ratio = float(np.abs(coefficients / coefficients[ref]
                                 - target.amplitudes / target.amplitudes[ref]).max())
        else:
            scale, ratio = 0.0, float("inf")
    else:
        spectrum = ratio = float("inf")
        scale = 0.0
    ortho = float(np.abs(V.T @ V - np.eye(n)).max())
    return VerificationReport(lam, coefficients, scale, pairing, spectrum, cosine, ratio, ortho, tol)


def matched_gamma(system: CoupledSystem, target: FourierTarget, gamma: float) -> float:
    """Decay rate that makes ``system`` emit like the unscaled ``target`` at ``gamma``.

    The synthesized amplitude is ``scale × target``; since ``w`` depends on
    ``γ |a_1|²`` only through that product, ``γ / scale²`` restores it.
    """
    scale = verify(system, target).scale
    if scale == 0:
        raise DesignError("system does not realize the target; no matching rate")
    return gamma / scale**2
