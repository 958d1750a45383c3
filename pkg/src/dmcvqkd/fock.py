"""Truncated Fock-space linear algebra for a single bosonic mode.

Operators act on the number basis |0..nc> (dimension nc+1) and are plain
complex numpy arrays.  The quadrature convention is

    q = (a^dag + a)/sqrt(2),    p = i(a^dag - a)/sqrt(2),

so the vacuum quadrature variance is 1/2 (``VACUUM_QUADRATURE_VARIANCE``).
Every Gaussian integral elsewhere in the package uses this convention.

The number operator and the quadrature-asymmetry operator d = q^2 - p^2 are
built by truncating the exact infinite-dimensional operators, not by
multiplying truncated matrices; this avoids artifacts in the top rows.
"""

import math
import warnings

import numpy as np

VACUUM_QUADRATURE_VARIANCE = 0.5

MAX_CUTOFF = 40  # running-product factorials stay exact in float64 well past this


class CutoffError(ValueError):
    """Photon-number cutoff outside the supported range."""


class QuadratureError(RuntimeError):
    """Region-operator integration failed to reach tolerance.

    Carries the achieved residual in ``residual``.
    """

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class TruncationWarning(UserWarning):
    """State amplitude too large for the cutoff to represent faithfully."""


def _check_cutoff(nc):
    if not isinstance(nc, (int, np.integer)) or nc < 1:
        raise CutoffError(f"cutoff must be an integer >= 1, got {nc!r}")
    if nc > MAX_CUTOFF:
        raise CutoffError(f"cutoffs above {MAX_CUTOFF} are not supported, got {nc}")


def annihilation(nc):
    """Annihilation operator on the truncated space: <m|a|n> = sqrt(n) delta_{m,n-1}."""
    _check_cutoff(nc)
    a = np.zeros((nc + 1, nc + 1), dtype=np.complex128)
    for n in range(1, nc + 1):
        a[n - 1, n] = math.sqrt(n)
    return a


def build_observables(nc):
    """Quadrature, number and quadrature-asymmetry observables at cutoff ``nc``.

    Returns a dict with keys ``q``, ``p``, ``n``, ``d``.  ``n`` and ``d`` are
    truncations of the exact operators a^dag a and a^2 + (a^dag)^2.
    """
    _check_cutoff(nc)
    a = annihilation(nc)
    ad = a.conj().T
    q = (ad + a) / math.sqrt(2.0)
    p = 1j * (ad - a) / math.sqrt(2.0)
    n = np.diag(np.arange(nc + 1, dtype=np.float64)).astype(np.complex128)
    d = np.zeros((nc + 1, nc + 1), dtype=np.complex128)
    for m in range(nc - 1):
        val = math.sqrt((m + 1) * (m + 2))
        d[m, m + 2] = val
        d[m + 2, m] = val
    return {"q": q, "p": p, "n": n, "d": d}


def coherent_state(alpha, nc):
    """Truncated coherent state amplitudes exp(-|a|^2/2) a^n / sqrt(n!).

    Warns (``TruncationWarning``) when |alpha|^2 > nc, where the Poisson tail
    beyond the cutoff is no longer negligible.
    """
    _check_cutoff(nc)
    alpha = complex(alpha)
    if abs(alpha) ** 2 > nc:
        warnings.warn(
            f"|alpha|^2 = {abs(alpha) ** 2:.3g} exceeds cutoff {nc}; "
            "truncated state is a poor approximation",
            TruncationWarning,
            stacklevel=2,
        )
    amps = np.zeros(nc + 1, dtype=np.complex128)
    pref = math.exp(-0.5 * abs(alpha) ** 2)
    term = complex(pref)  # alpha^n / sqrt(n!), built as a running product
    amps[0] = term
    for n in range(1, nc + 1):
        term = term * alpha / math.sqrt(n)
        amps[n] = term
    return amps


def coherent_overlap(alpha, beta):
    """Exact (untruncated) overlap <beta|alpha> of two coherent states."""
    alpha = complex(alpha)
    beta = complex(beta)
    return np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * abs(beta) ** 2 + np.conj(beta) * alpha)


def hermite_functions(x, nmax):
    """Harmonic-oscillator eigenfunctions psi_0..psi_nmax evaluated at ``x``.

    Stable three-term recurrence in the convention with vacuum variance 1/2:
    psi_0(x) = pi^(-1/4) exp(-x^2/2).  Returns an array of shape
    ``(nmax + 1, len(x))``.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros((nmax + 1, x.size), dtype=np.float64)
    out[0] = math.pi ** (-0.25) * np.exp(-0.5 * x * x)
    if nmax >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(2, nmax + 1):
        out[n] = math.sqrt(2.0 / n) * x * out[n - 1] - math.sqrt((n - 1) / n) * out[n - 2]
    return out


def _quad_panel_nodes(lo, hi, npanels, order):
    """Gauss-Legendre nodes/weights for ``npanels`` equal panels of [lo, hi]."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, npanels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def _region_integral(sign, lo, hi, nc, npanels, order=24):
    nodes, weights = _quad_panel_nodes(lo, hi, npanels, order)
    psi = hermite_functions(sign * nodes, nc)
    return (psi * weights) @ psi.T


def region_operator(z, delta_c, nc, tol=1e-10):
    """Quadrature-interval operator for key symbol ``z`` at threshold ``delta_c``.

    Entry (m, n) is the integral of psi_m(q) psi_n(q) over [delta_c, inf) for
    z = 0 and over (-inf, -delta_c] for z = 1.  Adaptive panel-doubling
    Gauss-Legendre quadrature; raises ``QuadratureError`` if the requested
    per-entry tolerance cannot be met.
    """
    if z not in (0, 1):
        raise ValueError(f"key symbol must be 0 or 1, got {z!r}")
    if delta_c < 0:
        raise ValueError(f"postselection threshold must be >= 0, got {delta_c}")
    _check_cutoff(nc)
    sign = 1.0 if z == 0 else -1.0
    # Hermite-Gaussian mass is negligible beyond sqrt(2 nc) + 6
    hi = max(math.sqrt(2.0 * nc) + 6.0, delta_c + 8.0)
    prev = _region_integral(sign, delta_c, hi, nc, 8)
    resid = math.inf
    for npanels in (16, 32, 64, 128, 256):
        cur = _region_integral(sign, delta_c, hi, nc, npanels)
        resid = float(np.max(np.abs(cur - prev)))
        prev = cur
        if resid < tol:
            break
    else:
        raise QuadratureError(
            f"region operator quadrature did not reach {tol:g}", resid
        )
    tail = _region_integral(sign, hi, hi + 6.0, nc, 4)
    tail_size = float(np.max(np.abs(tail)))
    if tail_size > tol:
        raise QuadratureError(
            f"truncated-tail contribution {tail_size:g} exceeds {tol:g}", tail_size
        )
    return (prev + tail).astype(np.complex128)
