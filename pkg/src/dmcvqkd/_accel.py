"""Hot numeric kernels, JIT-compiled with numba when available.

The feasibility phase of every solve runs thousands of projected-gradient
iterations, each built around one small dense eigendecomposition; at matrix
dimensions 12..88 the interpreter overhead between LAPACK calls is
comparable to the LAPACK work itself, so the whole loop is compiled.

Set ``DMCVQKD_DISABLE_NUMBA=1`` to force the pure-numpy fallback; both
paths execute the same statements and agree bitwise.
``benchmarks/bench_kernels.py`` times one against the other.

Conventions:

* Hermitian matrices are complex128 ``(n, n)`` C-contiguous arrays.
* A constraint set enters as a stack ``a2c`` of shape ``(k, n*n)`` holding
  ``conj(vec(A_i))`` row-major, so ``real(a2c @ X.ravel())`` is the vector
  of traces ``Tr[A_i X]`` for Hermitian ``X``.
"""

import os

import numpy as np

DISABLE_ENV = "DMCVQKD_DISABLE_NUMBA"


def _numba_disabled() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    if _numba_disabled():
        raise ImportError("numba disabled via " + DISABLE_ENV)
    from numba import njit

    USING_NUMBA = True
except ImportError:
    USING_NUMBA = False

    def njit(*args, **kwargs):
        """Identity decorator standing in for numba.njit."""
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


@njit(cache=True)
def psd_part(h):
    """Project a Hermitian matrix onto the PSD cone (eigenvalue clamp)."""
    w, v = np.linalg.eigh(h)
    n = h.shape[0]
    vs = v.copy()
    for j in range(n):
        wj = w[j] if w[j] > 0.0 else 0.0
        for i in range(n):
            vs[i, j] = vs[i, j] * wj
    return vs @ np.conj(v.T)


@njit(cache=True)
def trace_one_psd_project(h):
    """Project a Hermitian matrix onto {X >= 0, Tr X = 1} (Frobenius-nearest).

    Eigenvalues are projected onto the probability simplex; eigenvectors are
    kept.
    """
    w, v = np.linalg.eigh(h)
    n = h.shape[0]
    # simplex projection of the eigenvalue vector (descending water-filling)
    ws = np.sort(w)[::-1]
    css = 0.0
    theta = 0.0
    for i in range(n):
        css += ws[i]
        t = (css - 1.0) / (i + 1.0)
        if ws[i] - t > 0.0:
            theta = t
    vs = v.copy()
    for j in range(n):
        wj = w[j] - theta
        if wj < 0.0:
            wj = 0.0
        for i in range(n):
            vs[i, j] = vs[i, j] * wj
    return vs @ np.conj(v.T)


@njit(cache=True)
def constraint_traces(a2c, x):
    """Vector of Tr[A_i X] for Hermitian X (real by Hermiticity)."""
    return np.real(a2c @ np.ascontiguousarray(x).reshape(-1))


@njit(cache=True)
def feasibility_pg(x0, a2c, b, lips, tol, max_iter, stall_window, stall_rtol):
    """Accelerated projected gradient on squared constraint residuals.

    Minimizes sum_i (Tr[A_i X] - b_i)^2 over {X >= 0, Tr X = 1} with FISTA
    momentum and a function-value restart.  Stops once the worst absolute
    violation drops to ``tol``, or when the best violation has not improved
    by a relative ``stall_rtol`` over ``stall_window`` iterations (the
    instance is then unattainable down to that floor).  Returns
    (X, max_violation, iters).
    """
    n = x0.shape[0]
    x = x0.copy()
    yk = x0.copy()
    tk = 1.0
    fprev = 1e300
    best = x0.copy()
    bestviol = 1e300
    mark_viol = 1e300
    mark_it = 0
    it = 0
    step = 1.0 / lips
    while it < max_iter:
        t = np.real(a2c @ np.ascontiguousarray(yk).reshape(-1)) - b
        grad = 2.0 * np.conj(a2c.T @ t.astype(np.complex128)).reshape((n, n))
        xn = trace_one_psd_project(yk - step * grad)
        tx = np.real(a2c @ np.ascontiguousarray(xn).reshape(-1)) - b
        f = np.sum(tx * tx)
        viol = np.max(np.abs(tx))
        if viol < bestviol:
            bestviol = viol
            best = xn.copy()
        it += 1
        if viol <= tol:
            break
        if it - mark_it >= stall_window:
            if bestviol > mark_viol * (1.0 - stall_rtol):
                break
            mark_viol = bestviol
            mark_it = it
        if f > fprev:
            # restart momentum
            tk = 1.0
            yk = xn.copy()
        else:
            tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            yk = xn + ((tk - 1.0) / tn) * (xn - x)
            tk = tn
        x = xn
        fprev = f
    return best, bestviol, it
