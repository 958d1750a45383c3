"""Analytic model of the four-state protocol over a lossy, noisy channel.

Alice sends one of {a, -a, ia, -ia} with a = sqrt(mu); the fiber applies
transmittance eta = 10^(-0.02 L) and symmetric excess noise xi referred to
the channel input, so Bob's per-quadrature variance is (1 + eta*xi)/2 in the
convention of :mod:`dmcvqkd.fock`.  Everything here is closed-form: per-state
first and second moments, the source Gram matrix, the 29-entry feature
vector, and the sifting/error-correction terms.

Feature-vector layout (frozen; index math must not change):

* 0..15   p_x * <q>, <p>, <n>, <d> for x = 0..3, x-major;
* 16..27  (Re, Im) of the Gram entries (0,1), (0,2), (0,3), (1,2), (1,3),
  (2,3) in that order;
* 28      the excess noise xi.
"""

import math
from dataclasses import dataclass

import numpy as np

from .fock import coherent_overlap

FEATURE_LENGTH = 29
GRAM_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


class InvalidParameterError(ValueError):
    """Protocol parameter outside its physical domain."""


@dataclass(frozen=True)
class ProtocolParams:
    """The experimental knobs of one protocol instance.

    ``L`` km of fiber, signal intensity ``mu`` (mean photon number), excess
    noise ``xi`` in shot-noise units, the four state probabilities, the
    reconciliation efficiency ``beta``, the postselection threshold
    ``delta_c`` and the photon-number cutoff ``nc``.
    """

    L: float
    mu: float
    xi: float
    probs: tuple = (0.25, 0.25, 0.25, 0.25)
    beta: float = 0.95
    delta_c: float = 0.0
    nc: int = 4

    def __post_init__(self):
        if self.L < 0:
            raise InvalidParameterError(f"distance must be >= 0, got {self.L}")
        if self.mu <= 0:
            raise InvalidParameterError(f"intensity must be > 0, got {self.mu}")
        if self.xi < 0:
            raise InvalidParameterError(f"excess noise must be >= 0, got {self.xi}")
        if len(self.probs) != 4 or any(p < 0 for p in self.probs):
            raise InvalidParameterError(f"need four probabilities >= 0, got {self.probs}")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise InvalidParameterError(f"probabilities must sum to 1, got {sum(self.probs)!r}")
        if not 0 < self.beta <= 1:
            raise InvalidParameterError(f"reconciliation efficiency must be in (0, 1], got {self.beta}")
        if self.delta_c < 0:
            raise InvalidParameterError(f"postselection threshold must be >= 0, got {self.delta_c}")
        if self.nc < 1:
            raise InvalidParameterError(f"cutoff must be >= 1, got {self.nc}")


@dataclass(frozen=True)
class MomentSet:
    """Per-state expectation values of q, p, n, d (arrays of length 4)."""

    mean_q: np.ndarray
    mean_p: np.ndarray
    mean_n: np.ndarray
    mean_d: np.ndarray


def transmittance(L):
    """Fiber transmission efficiency 10^(-0.02 L) for L in km."""
    if L < 0:
        raise InvalidParameterError(f"distance must be >= 0, got {L}")
    return 10.0 ** (-0.02 * L)


def state_amplitudes(params):
    """Alice's four source amplitudes (a, -a, ia, -ia) with a = sqrt(mu)."""
    a = math.sqrt(params.mu)
    return np.array([a, -a, 1j * a, -1j * a], dtype=np.complex128)


def simulate_moments(params):
    """Bob's per-state moments after the channel.

    Output amplitudes are sqrt(eta) * a_x; excess noise adds eta*xi/2 to the
    photon number and nothing to the first moments or to <d>.
    """
    eta = transmittance(params.L)
    out = math.sqrt(eta) * state_amplitudes(params)
    mean_q = math.sqrt(2.0) * out.real
    mean_p = math.sqrt(2.0) * out.imag
    mean_n = np.abs(out) ** 2 + eta * params.xi / 2.0
    mean_d = 2.0 * (out ** 2).real
    return MomentSet(mean_q=mean_q, mean_p=mean_p, mean_n=mean_n, mean_d=mean_d)


def gram_matrix(params):
    """Alice-side Gram matrix sqrt(p_i p_j) <phi_j|phi_i> (4x4 Hermitian PSD)."""
    amps = state_amplitudes(params)
    p = np.asarray(params.probs, dtype=np.float64)
    g = np.zeros((4, 4), dtype=np.complex128)
    for i in range(4):
        for j in range(4):
            g[i, j] = math.sqrt(p[i] * p[j]) * coherent_overlap(amps[i], amps[j])
    return g


def assemble_features(params):
    """Pack the probability-weighted moments, Gram off-diagonals and xi.

    Deterministic: identical params give bitwise-identical vectors.
    """
    m = simulate_moments(params)
    g = gram_matrix(params)
    p = params.probs
    x = np.zeros(FEATURE_LENGTH, dtype=np.float64)
    for s in range(4):
        x[4 * s + 0] = p[s] * m.mean_q[s]
        x[4 * s + 1] = p[s] * m.mean_p[s]
        x[4 * s + 2] = p[s] * m.mean_n[s]
        x[4 * s + 3] = p[s] * m.mean_d[s]
    for k, (i, j) in enumerate(GRAM_PAIRS):
        x[16 + 2 * k] = g[i, j].real
        x[16 + 2 * k + 1] = g[i, j].imag
    x[28] = params.xi
    return x


def _phi(t):
    """Standard normal CDF."""
    return 0.5 * (1.0 + math.erf(t / math.sqrt(2.0)))


def binary_entropy(p):
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def ec_terms(params):
    """Sifting factor and error-correction leakage, (p_pass, delta_ec).

    Bob's q outcome for key state x in {0, 1} is Gaussian with mean
    +-sqrt(2 eta mu) and variance (1 + eta*xi)/2.  The key map assigns z = 0
    on [delta_c, inf), z = 1 on (-inf, -delta_c] and discards the rest;
    delta_ec = (1 - beta) H(Z) + beta H(Z|X), entropies conditioned on
    passing.
    """
    eta = transmittance(params.L)
    sigma = math.sqrt((1.0 + eta * params.xi) / 2.0)
    mean = math.sqrt(2.0 * eta * params.mu)
    p0, p1 = params.probs[0], params.probs[1]
    wsum = p0 + p1
    if wsum <= 0:
        raise InvalidParameterError("key states x in {0, 1} need positive probability")
    weights = (p0 / wsum, p1 / wsum)
    means = (mean, -mean)

    pass_x = []
    z0_x = []
    for mx in means:
        pz0 = 1.0 - _phi((params.delta_c - mx) / sigma)
        pz1 = _phi((-params.delta_c - mx) / sigma)
        pass_x.append(pz0 + pz1)
        z0_x.append(pz0)
    p_pass = weights[0] * pass_x[0] + weights[1] * pass_x[1]
    if p_pass <= 0.0:
        return 0.0, 0.0

    pz0_total = (weights[0] * z0_x[0] + weights[1] * z0_x[1]) / p_pass
    h_z = binary_entropy(pz0_total)
    h_z_given_x = 0.0
    for w, px, z0 in zip(weights, pass_x, z0_x):
        if px > 0.0:
            h_z_given_x += (w * px / p_pass) * binary_entropy(z0 / px)
    delta_ec = (1.0 - params.beta) * h_z + params.beta * h_z_given_x
    return p_pass, delta_ec
