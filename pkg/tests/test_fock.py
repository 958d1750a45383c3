import math

import numpy as np
import pytest
from scipy import integrate

from dmcvqkd import fock


def hermitian_error(m):
    return float(np.max(np.abs(m - m.conj().T)))


class TestAnnihilation:
    def test_nc1_matrix(self):
        a = fock.annihilation(1)
        assert np.allclose(a, [[0, 1], [0, 0]])

    def test_superdiagonal_sqrt(self):
        a = fock.annihilation(2)
        assert a[1, 2] == pytest.approx(math.sqrt(2), abs=1e-15)

    def test_lowers_fock_state(self):
        a = fock.annihilation(3)
        one = np.zeros(4, dtype=complex)
        one[1] = 1.0
        assert np.allclose(a @ one, [1, 0, 0, 0])

    def test_invalid_cutoff(self):
        with pytest.raises(fock.CutoffError):
            fock.annihilation(0)
        with pytest.raises(fock.CutoffError):
            fock.annihilation(fock.MAX_CUTOFF + 1)


class TestObservables:
    def test_number_diagonal(self):
        obs = fock.build_observables(5)
        assert obs["n"][0, 0] == 0
        assert obs["n"][1, 1] == 1

    def test_q_entry(self):
        obs = fock.build_observables(5)
        assert obs["q"][0, 1] == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    @pytest.mark.parametrize("nc", range(1, 21))
    def test_truncated_commutator(self, nc):
        obs = fock.build_observables(nc)
        comm = obs["q"] @ obs["p"] - obs["p"] @ obs["q"]
        expected = 1j * np.eye(nc + 1, dtype=complex)
        expected[nc, nc] = -1j * nc
        assert np.max(np.abs(comm - expected)) < 1e-12

    @pytest.mark.parametrize("name", ["q", "p", "n", "d"])
    def test_hermitian(self, name):
        obs = fock.build_observables(8)
        assert hermitian_error(obs[name]) < 1e-12

    def test_d_from_exact_operator(self):
        # top-corner entries follow the exact ladder formula, no product artifacts
        obs = fock.build_observables(4)
        assert obs["d"][2, 4] == pytest.approx(math.sqrt(3 * 4), abs=1e-15)
        assert obs["d"][3, 3] == 0.0


class TestCoherentState:
    def test_vacuum(self):
        amps = fock.coherent_state(0.0, 5)
        assert np.allclose(amps, [1, 0, 0, 0, 0, 0])

    def test_norm_close_to_one(self):
        # Poisson tail above nc=10 at |alpha|^2 = 0.36 is below 1e-10
        amps = fock.coherent_state(0.6, 10)
        tail = sum(
            math.exp(-0.36) * 0.36 ** n / math.factorial(n) for n in range(11, 60)
        )
        norm2 = float(np.vdot(amps, amps).real)
        assert abs(norm2 - (1.0 - tail)) < 1e-14
        assert abs(norm2 - 1.0) < 1e-10

    def test_opposite_amplitude_overlap(self):
        # truncated inner product reproduces exp(-2 a^2) (series oracle)
        a = 0.7
        plus = fock.coherent_state(a, 30)
        minus = fock.coherent_state(-a, 30)
        series = sum(
            math.exp(-a * a) * (a ** m) * ((-a) ** m) / math.factorial(m)
            for m in range(31)
        )
        got = float(np.vdot(minus, plus).real)
        assert got == pytest.approx(series, abs=1e-14)
        assert got == pytest.approx(math.exp(-2 * a * a), abs=1e-10)

    def test_truncation_warning(self):
        with pytest.warns(fock.TruncationWarning):
            fock.coherent_state(3.0, 4)


class TestCoherentOverlap:
    def test_identical(self):
        assert fock.coherent_overlap(0.3 + 0.1j, 0.3 + 0.1j) == pytest.approx(1.0)

    def test_opposite_real(self):
        a = 0.55
        assert fock.coherent_overlap(a, -a) == pytest.approx(math.exp(-2 * a * a), abs=1e-15)

    def test_imaginary_pair(self):
        a = 0.4
        want = np.exp(-a * a * (1 + 1j))
        assert fock.coherent_overlap(a, 1j * a) == pytest.approx(want, abs=1e-15)

    @pytest.mark.parametrize("nc", [20, 24])
    def test_matches_truncated_inner_product(self, nc):
        rng = np.random.default_rng(3)
        scale = math.sqrt(nc) / (2 * math.sqrt(2))
        for _ in range(6):
            alpha = complex(*rng.uniform(-1, 1, 2)) * scale
            beta = complex(*rng.uniform(-1, 1, 2)) * scale
            assert abs(alpha) ** 2 <= nc / 4 and abs(beta) ** 2 <= nc / 4
            va = fock.coherent_state(alpha, nc)
            vb = fock.coherent_state(beta, nc)
            trunc = complex(np.vdot(vb, va))
            assert abs(trunc - fock.coherent_overlap(alpha, beta)) < 1e-8


class TestRegionOperator:
    def test_completeness_at_zero_threshold(self):
        for nc in (2, 5, 9):
            total = fock.region_operator(0, 0.0, nc) + fock.region_operator(1, 0.0, nc)
            assert np.max(np.abs(total - np.eye(nc + 1))) < 1e-10

    def test_vacuum_half(self):
        i0 = fock.region_operator(0, 0.0, 6)
        assert i0[0, 0].real == pytest.approx(0.5, abs=1e-12)

    def test_first_offdiagonal_quadrature_oracle(self):
        # adaptive-quadrature oracle for <0|I_0|1> at delta_c = 0
        psi0 = lambda q: math.pi ** -0.25 * np.exp(-q * q / 2)
        psi1 = lambda q: math.sqrt(2) * q * psi0(q)
        want, err = integrate.quad(lambda q: psi0(q) * psi1(q), 0, np.inf)
        assert err < 1e-6
        i0 = fock.region_operator(0, 0.0, 6)
        assert i0[0, 1].real == pytest.approx(want, abs=1e-7)
        assert i0[0, 1].real == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-10)

    @pytest.mark.parametrize("delta_c", [0.0, 0.3, 1.1])
    def test_parity_relation(self, delta_c):
        i0 = fock.region_operator(0, delta_c, 7)
        i1 = fock.region_operator(1, delta_c, 7)
        signs = np.array([(-1) ** (m + n) for m in range(8) for n in range(8)]).reshape(8, 8)
        assert np.max(np.abs(i1 - signs * i0)) < 1e-10

    @pytest.mark.parametrize("delta_c", [0.0, 0.5, 2.0])
    def test_eigenvalues_in_unit_interval(self, delta_c):
        for z in (0, 1):
            op = fock.region_operator(z, delta_c, 8)
            assert hermitian_error(op) < 1e-12
            eigs = np.linalg.eigvalsh(op)
            assert eigs[0] > -1e-10
            assert eigs[-1] < 1 + 1e-10

    def test_monotone_in_threshold(self):
        lo = fock.region_operator(0, 0.4, 6)
        hi = fock.region_operator(0, 0.9, 6)
        assert np.linalg.eigvalsh(lo - hi)[0] > -1e-10

    def test_entries_match_scipy_quad(self):
        nc, delta_c = 5, 0.7
        op = fock.region_operator(0, delta_c, nc)
        psi = lambda n, q: fock.hermite_functions(np.array([q]), nc)[n, 0]
        for m, n in [(0, 0), (2, 3), (5, 5), (1, 4)]:
            want, err = integrate.quad(lambda q: psi(m, q) * psi(n, q), delta_c, np.inf)
            assert abs(op[m, n].real - want) < 1e-9

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            fock.region_operator(2, 0.0, 4)
        with pytest.raises(ValueError):
            fock.region_operator(0, -0.1, 4)
