import math

import numpy as np
import pytest
from scipy import integrate

from dmcvqkd import channel, fock
from dmcvqkd.channel import InvalidParameterError, ProtocolParams


def make_params(**kw):
    base = dict(L=10.0, mu=0.4, xi=0.004, nc=4)
    base.update(kw)
    return ProtocolParams(**base)


class TestParams:
    def test_valid(self):
        p = make_params()
        assert p.beta == 0.95 and p.delta_c == 0.0

    @pytest.mark.parametrize("kw", [
        dict(L=-1.0), dict(mu=0.0), dict(xi=-0.001),
        dict(probs=(0.5, 0.5, 0.0, 0.1)), dict(probs=(0.3, 0.3, 0.3, 0.3)),
        dict(beta=0.0), dict(beta=1.2), dict(delta_c=-0.5), dict(nc=0),
    ])
    def test_invalid(self, kw):
        with pytest.raises(InvalidParameterError):
            make_params(**kw)


class TestTransmittance:
    def test_values(self):
        assert channel.transmittance(0) == 1.0
        assert channel.transmittance(50) == pytest.approx(0.1, abs=1e-15)
        assert channel.transmittance(100) == pytest.approx(0.01, abs=1e-15)

    def test_negative_distance(self):
        with pytest.raises(InvalidParameterError):
            channel.transmittance(-2)


class TestAmplitudes:
    def test_values(self):
        amps = channel.state_amplitudes(make_params(mu=0.36))
        assert amps[0] == pytest.approx(0.6)
        assert np.allclose(amps, [0.6, -0.6, 0.6j, -0.6j])

    def test_intensity(self):
        amps = channel.state_amplitudes(make_params(mu=0.5))
        assert abs(amps[0]) ** 2 == pytest.approx(0.5)


class TestMoments:
    def test_reference_point(self):
        m = channel.simulate_moments(make_params(L=0.0, mu=0.36, xi=0.0))
        assert m.mean_q[0] == pytest.approx(0.84853, abs=1e-5)
        assert m.mean_p[0] == 0.0
        assert m.mean_n[0] == pytest.approx(0.36, abs=1e-12)
        assert m.mean_d[0] == pytest.approx(0.72, abs=1e-12)

    def test_imaginary_state(self):
        p = make_params(L=20.0, mu=0.4, xi=0.0)
        eta = channel.transmittance(20.0)
        m = channel.simulate_moments(p)
        assert m.mean_q[2] == pytest.approx(0.0, abs=1e-15)
        assert m.mean_p[2] == pytest.approx(math.sqrt(2 * eta * 0.4), abs=1e-12)

    def test_noise_only_shifts_photon_number(self):
        quiet = channel.simulate_moments(make_params(xi=0.0))
        noisy = channel.simulate_moments(make_params(xi=0.01))
        eta = channel.transmittance(10.0)
        assert np.allclose(noisy.mean_q, quiet.mean_q)
        assert np.allclose(noisy.mean_p, quiet.mean_p)
        assert np.allclose(noisy.mean_d, quiet.mean_d)
        assert np.allclose(noisy.mean_n - quiet.mean_n, eta * 0.01 / 2)

    def test_against_truncated_fock_expectations(self):
        # lossless noiseless channel: moments equal <alpha|O|alpha> at big cutoff
        nc = 24
        p = make_params(L=0.0, mu=0.45, xi=0.0, nc=nc)
        m = channel.simulate_moments(p)
        obs = fock.build_observables(nc)
        for x, alpha in enumerate(channel.state_amplitudes(p)):
            v = fock.coherent_state(alpha, nc)
            for name, got in [("q", m.mean_q[x]), ("p", m.mean_p[x]),
                              ("n", m.mean_n[x]), ("d", m.mean_d[x])]:
                want = float(np.real(np.vdot(v, obs[name] @ v)))
                assert abs(got - want) < 1e-8

    def test_against_monte_carlo_homodyne(self):
        # sample Bob's q outcomes and compare the empirical mean at 4 sigma
        rng = np.random.default_rng(11)
        p = make_params(L=15.0, mu=0.5, xi=0.006)
        eta = channel.transmittance(p.L)
        m = channel.simulate_moments(p)
        n = 10 ** 6
        draws = rng.normal(m.mean_q[0], math.sqrt((1 + eta * p.xi) / 2), size=n)
        se = draws.std() / math.sqrt(n)
        assert abs(draws.mean() - m.mean_q[0]) < 4 * se


class TestGram:
    def test_diagonal_is_probs(self):
        p = make_params(probs=(0.3, 0.3, 0.2, 0.2))
        g = channel.gram_matrix(p)
        assert np.allclose(np.diag(g).real, p.probs)

    def test_uniform_entry(self):
        p = make_params(mu=0.42)
        g = channel.gram_matrix(p)
        assert g[0, 1] == pytest.approx(0.25 * math.exp(-2 * 0.42), abs=1e-15)

    def test_psd_and_phase_invariance(self):
        p = make_params()
        g = channel.gram_matrix(p)
        assert np.linalg.eigvalsh(g)[0] > -1e-12
        # global phase on all amplitudes leaves the matrix unchanged
        amps = channel.state_amplitudes(p)
        phase = np.exp(0.7j)
        g2 = np.zeros((4, 4), dtype=complex)
        for i in range(4):
            for j in range(4):
                g2[i, j] = 0.25 * fock.coherent_overlap(phase * amps[i], phase * amps[j])
        assert np.allclose(g, g2)


class TestFeatures:
    def test_length_and_layout(self):
        p = make_params()
        x = channel.assemble_features(p)
        assert x.shape == (29,)
        assert x[28] == p.xi
        m = channel.simulate_moments(p)
        assert x[0] == p.probs[0] * m.mean_q[0]
        assert x[7] == p.probs[1] * m.mean_d[1]
        g = channel.gram_matrix(p)
        assert x[16] == g[0, 1].real and x[17] == g[0, 1].imag
        assert x[26] == g[2, 3].real and x[27] == g[2, 3].imag

    def test_deterministic(self):
        a = channel.assemble_features(make_params())
        b = channel.assemble_features(make_params())
        assert np.array_equal(a, b)


class TestEcTerms:
    def test_zero_threshold_passes_everything(self):
        p_pass, _ = channel.ec_terms(make_params(delta_c=0.0))
        assert p_pass == pytest.approx(1.0, abs=1e-12)

    def test_beta_one_matches_integration_oracle(self):
        # H(Z|X) from numerically integrating the two outcome Gaussians
        p = make_params(beta=1.0, delta_c=0.0, L=20.0, mu=0.4, xi=0.01)
        eta = channel.transmittance(p.L)
        sig = math.sqrt((1 + eta * p.xi) / 2)
        mean = math.sqrt(2 * eta * p.mu)

        def gauss(y, m):
            return math.exp(-((y - m) ** 2) / (2 * sig * sig)) / (sig * math.sqrt(2 * math.pi))

        err0, _ = integrate.quad(lambda y: gauss(y, mean), -np.inf, 0.0)
        _, delta_ec = channel.ec_terms(p)
        assert delta_ec == pytest.approx(channel.binary_entropy(err0), abs=1e-9)

    def test_perfectly_distinguishable_limit(self):
        p = ProtocolParams(L=0.0, mu=40.0, xi=0.0, beta=1.0, nc=4)
        _, delta_ec = channel.ec_terms(p)
        assert delta_ec == pytest.approx(0.0, abs=1e-12)

    def test_monotone_in_beta(self):
        vals = [channel.ec_terms(make_params(beta=b))[1] for b in (0.5, 0.7, 0.9, 1.0)]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_p_pass_monotone_in_threshold(self):
        vals = [channel.ec_terms(make_params(delta_c=d))[0] for d in (0.0, 0.2, 0.5, 1.0)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
