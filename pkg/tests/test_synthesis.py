import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antibunch.synthesis import (
    CoupledSystem,
    DesignError,
    EigenDesign,
    FreeRowStrategy,
    GramSchmidtError,
    build_design,
    fourier_coefficients,
    fourier_sign,
    free_parameter_count,
    gram_schmidt_extend,
    matched_gamma,
    square_target,
    synthesize,
    synthesize_levels,
    verify,
)

from .conftest import GOLDEN_H_UNITS, GOLDEN_T


def _sign_oracle(m):
    z = complex(1, 1)
    for _ in range(m):
        z *= 1j
    return z.imag


class TestFourierCoefficients:
    def test_signs_follow_complex_arithmetic(self):
        assert [fourier_sign(m) for m in range(1, 5)] == [1, -1, -1, 1]
        for m in range(1, 20):
            assert fourier_sign(m) == pytest.approx(_sign_oracle(m))

    def test_first_two_amplitudes(self):
        target = fourier_coefficients(2, omega=1.0)
        assert target.amplitudes[0] == pytest.approx(0.9003163161571061, abs=1e-15)
        assert target.amplitudes[1] == pytest.approx(-0.30010543871903537, abs=1e-15)
        assert target.amplitudes[0] / target.amplitudes[1] == pytest.approx(-3.0, rel=1e-14)

    def test_single_term_is_two_level_sine(self):
        target = fourier_coefficients(1, omega=2.5)
        assert target.n_terms == 1
        np.testing.assert_allclose(target.frequencies, [2 * np.pi * 2.5])

    @pytest.mark.parametrize("n_terms", [1, 3, 8, 16])
    def test_invariants(self, n_terms):
        target = fourier_coefficients(n_terms, omega=0.7)
        assert np.all(np.diff(np.abs(target.amplitudes)) < 0)
        m = np.arange(1, n_terms + 1)
        np.testing.assert_allclose(target.frequencies, (2 * m - 1) * 2 * np.pi * 0.7, rtol=1e-15)

    @pytest.mark.parametrize("n_terms,omega", [(0, 1.0), (2, 0.0), (2, -1.0), (1.5, 1.0)])
    def test_rejects_invalid(self, n_terms, omega):
        with pytest.raises(DesignError):
            fourier_coefficients(n_terms, omega)

    def test_partial_sums_approach_square_target(self):
        t = np.linspace(0, 1, 2001)
        away = np.all(np.abs(np.mod(t, 0.125)[:, None] - [0, 0.125]) > 0.03, axis=1)
        errs = [np.abs(fourier_coefficients(k).series()(t) - square_target(t))[away].max()
                for k in (16, 64, 256)]
        assert errs[0] > errs[1] > errs[2]


class TestFreeParameters:
    @pytest.mark.parametrize("n,expected", [(2, 0), (4, 3), (16, 105)])
    def test_count(self, n, expected):
        assert free_parameter_count(n) == expected

    def test_matches_dof_bookkeeping(self):
        for n in range(2, 34, 2):
            assert free_parameter_count(n) == n * n - n * (n + 1) // 2 - (n - 1)

    @pytest.mark.parametrize("n", [3, 1, 0, 7])
    def test_rejects_odd(self, n):
        with pytest.raises(DesignError):
            free_parameter_count(n)


class TestBuildDesign:
    @pytest.mark.parametrize("strategy", ["gram_schmidt", "paper4"])
    def test_four_level_rows(self, strategy):
        design = build_design(fourier_coefficients(2), strategy)
        np.testing.assert_allclose(design.T, GOLDEN_T, atol=1e-12)
        np.testing.assert_allclose(design.T[-1] * np.sqrt(20), [1, -3, 3, -1], atol=1e-12)

    def test_four_level_eigenvalues(self):
        design = build_design(fourier_coefficients(2))
        np.testing.assert_allclose(np.sort(design.eigenvalues), np.array([-6, -2, 2, 6]) * np.pi, rtol=1e-15)

    def test_two_level(self):
        design = build_design(fourier_coefficients(1))
        T = design.T * np.sqrt(2)
        np.testing.assert_allclose(np.abs(T), np.ones((2, 2)), atol=1e-15)
        assert T[0] @ T[1] == pytest.approx(0, abs=1e-15)
        np.testing.assert_allclose(np.sort(design.eigenvalues), [-2 * np.pi, 2 * np.pi])

    @pytest.mark.parametrize("n", [2, 4, 6, 8, 16, 32])
    def test_invariants(self, n):
        design = build_design(fourier_coefficients(n // 2, omega=1.3))
        assert design.orthonormality_residual() < 1e-12
        assert design.pairing_residual() == 0.0
        assert abs(design.row_overlap()) < 1e-12
        p = design.products()
        np.testing.assert_allclose(p, -p[::-1], atol=1e-15)

    def test_paper4_requires_four_levels(self):
        with pytest.raises(DesignError):
            build_design(fourier_coefficients(3), "paper4")

    def test_custom_seed_collision_named(self):
        target = fourier_coefficients(2)
        top = np.full(4, 0.5)
        seeds = [np.array([1.0, 0, 0, 0]), 2 * top]  # second seed is row 1 itself
        with pytest.raises(GramSchmidtError) as exc:
            build_design(target, "custom", seeds=seeds)
        assert exc.value.seed_index == 1

    def test_custom_seeds_complete_basis(self):
        design = build_design(fourier_coefficients(3), "custom", seeds=np.eye(6)[:4])
        assert design.orthonormality_residual() < 1e-12
        assert design.free_row_strategy is FreeRowStrategy.CUSTOM

    def test_zero_target_rejected(self):
        with pytest.raises(DesignError):
            build_design(fourier_coefficients(2).scaled(0.0))


def test_gram_schmidt_extend_orthonormal():
    rng = np.random.default_rng(3)
    basis = gram_schmidt_extend([], rng.normal(size=(3, 10)))
    more = gram_schmidt_extend(basis, rng.normal(size=(7, 10)))
    Q = np.vstack(basis + more)
    np.testing.assert_allclose(Q @ Q.T, np.eye(10), atol=1e-13)


class TestSynthesize:
    def test_golden_hamiltonian(self, golden_system):
        unit = 2 * np.pi / np.sqrt(20)
        np.testing.assert_allclose(golden_system.H / unit, GOLDEN_H_UNITS, atol=1e-12)

    def test_two_level_by_hand(self):
        # T = [[1, 1], [-1, 1]]/√2, D = diag(2π, -2π) gives H_12 = -π - π
        system = synthesize_levels(2)
        np.testing.assert_allclose(system.H, [[0, -2 * np.pi], [-2 * np.pi, 0]], atol=1e-14)

    def test_zero_spectrum(self):
        design = build_design(fourier_coefficients(3))
        zero = EigenDesign(np.zeros(6), design.T, 1.0)
        np.testing.assert_allclose(synthesize(zero).H, 0.0, atol=0)

    def test_rejects_non_orthonormal(self):
        design = build_design(fourier_coefficients(2))
        bad = EigenDesign(design.eigenvalues, design.T * 1.001, 1.0)
        with pytest.raises(DesignError):
            synthesize(bad)

    @pytest.mark.parametrize("n", [2, 4, 8, 16, 32])
    def test_system_invariants(self, n):
        system = synthesize_levels(n, omega=0.8)
        H = system.H
        assert np.abs(H - H.T).max() == 0.0
        lam = np.linalg.eigvalsh(H)
        expected = np.sort(system.design.eigenvalues)
        np.testing.assert_allclose(lam, expected, rtol=1e-10, atol=1e-10 * np.abs(expected).max())
        assert np.abs(np.diag(H)).max() < 1e-12 * np.abs(H).max()

    def test_non_symmetric_rejected(self):
        with pytest.raises(DesignError):
            CoupledSystem(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestVerify:
    def test_golden_ratio(self, golden_system):
        report = verify(golden_system, fourier_coefficients(2))
        assert report.passed
        assert report.coefficients[0] / report.coefficients[1] == pytest.approx(-3.0, rel=1e-10)
        # products at +2πΩ, +6πΩ are (-3, 1)/(2√20): amplitudes twice that
        np.testing.assert_allclose(report.coefficients, np.array([-3, 1]) / np.sqrt(20), atol=1e-12)

    def test_perturbed_entry_fails_pairing(self, golden_system):
        H = golden_system.H.copy()
        H[0, 0] += 0.01
        report = verify(CoupledSystem(H), fourier_coefficients(2))
        assert report.pairing_residual > report.tol
        assert not report.checks["eigenvalue_pairing"]
        assert not report.passed

    def test_zero_hamiltonian_fails(self):
        report = verify(CoupledSystem(np.zeros((4, 4))), fourier_coefficients(2))
        np.testing.assert_array_equal(report.coefficients, 0.0)
        assert not report.checks["coefficient_ratios"]
        assert not report.passed

    @pytest.mark.parametrize("n", [2, 4, 8, 16, 32])
    def test_all_sizes_pass(self, n):
        assert verify(synthesize_levels(n), fourier_coefficients(n // 2)).passed

    @settings(max_examples=25, deadline=None)
    @given(s=st.floats(min_value=-50, max_value=50).filter(lambda x: abs(x) > 1e-3),
           n_terms=st.integers(min_value=1, max_value=8))
    def test_scale_invariance(self, s, n_terms):
        target = fourier_coefficients(n_terms)
        base = verify(synthesize(build_design(target)), target)
        scaled = verify(synthesize(build_design(target.scaled(s))), target)
        assert scaled.passed
        np.testing.assert_allclose(scaled.coefficients / scaled.coefficients[0],
                                   base.coefficients / base.coefficients[0], atol=1e-10)

    def test_matched_gamma(self, golden_system):
        target = fourier_coefficients(2)
        scale = verify(golden_system, target).scale
        assert matched_gamma(golden_system, target, 100.0) == pytest.approx(100.0 / scale**2)


def test_descriptor_round_trip(tmp_path, golden_system):
    path = tmp_path / "s.json"
    golden_system.save(path)
    data = json.loads(path.read_text())
    assert set(data) >= {"n", "omega", "H", "eigenvalues", "T"}
    loaded = CoupledSystem.load(path)
    np.testing.assert_array_equal(loaded.H, golden_system.H)
    np.testing.assert_array_equal(loaded.design.T, golden_system.design.T)


def test_descriptor_omega_factored_out(tmp_path):
    system = synthesize_levels(4, omega=3.0)
    d = system.to_dict()
    np.testing.assert_allclose(np.array(d["H"]) * 3.0, system.H, rtol=1e-15)
    assert max(abs(x) for x in d["eigenvalues"]) == pytest.approx(6 * np.pi)
