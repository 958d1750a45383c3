"""Dense primal-dual interior-point solver for small Hermitian SDPs.

Solves  min Re Tr[C X]  s.t.  Re Tr[A_k X] = b_k,  X >= 0  with the HKM
search direction and Mehrotra predictor-corrector steps.  Problem sizes
here are tiny (matrix dimension <= 88, <= 33 constraints), so everything is
dense and the Schur complement is formed with batched matmuls.

The key-rate feasible sets hug the PSD boundary (their maximal interior
radius is ~1e-5), which defeats first-order splitting schemes; a central
path method is indifferent to that geometry.

Constraint stacks may be rank deficient (the unit-trace row equals the sum
of the Gram-diagonal rows); a deterministic greedy sweep picks a maximal
independent subset once per system and the dropped rows are checked at the
solution.
"""

import math
from dataclasses import dataclass

import numpy as np


class IpmError(RuntimeError):
    """Interior-point iteration failed to reach the requested accuracy."""

    def __init__(self, message, primal_residual=math.nan, dual_residual=math.nan, gap=math.nan):
        super().__init__(message)
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        self.gap = gap


@dataclass
class IpmResult:
    x: np.ndarray
    y: np.ndarray            # multipliers for the *full* constraint list
    objective: float
    primal_residual: float   # max |Tr[A_k X] - b_k| over all rows
    dual_residual: float     # ||C - A*y - S||_F
    gap: float               # |<C,X> - b.y|
    iterations: int
    converged: bool


def independent_rows(a_stack, rtol=1e-10):
    """Indices of a maximal linearly independent subset of constraint rows.

    Greedy Gram-Schmidt sweep in input order; deterministic.
    """
    k = a_stack.shape[0]
    vecs = a_stack.reshape(k, -1)
    kept = []
    basis = []
    norms0 = np.linalg.norm(vecs, axis=1)
    for i in range(k):
        v = vecs[i].copy()
        for u in basis:
            v -= (u.conj() @ v) * u
        if np.linalg.norm(v) > rtol * max(1.0, norms0[i]):
            kept.append(i)
            basis.append(v / np.linalg.norm(v))
    return np.asarray(kept, dtype=np.int64)


def _traces(a_stack, x):
    """Re Tr[A_k X] for a stack of Hermitian A_k and Hermitian X."""
    return np.real(np.einsum("kij,ji->k", a_stack, x, optimize=True))


def _adjoint(a_stack, y):
    return np.einsum("k,kij->ij", y.astype(np.complex128), a_stack, optimize=True)


def _max_step(chol_l, direction):
    """Largest alpha <= 1 with  M + alpha*D >= 0, M = L L^H."""
    w = np.linalg.solve(chol_l, direction)
    w = np.linalg.solve(chol_l, w.conj().T).conj().T
    lam = float(np.linalg.eigvalsh(0.5 * (w + w.conj().T))[0])
    if lam >= 0.0:
        return 1.0
    return min(1.0, -1.0 / lam)


def _chol_or_none(mat):
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None


def solve_sdp(cobj, a_stack, b, tol_gap=1e-9, tol_primal=1e-9, tol_dual=1e-9,
              max_iter=100, keep=None):
    """HKM predictor-corrector solve of the standard-form Hermitian SDP.

    ``keep`` optionally holds precomputed independent row indices.  Returns
    an :class:`IpmResult`; ``converged`` is False when the iteration cap is
    reached first (residuals still reported).
    """
    n = cobj.shape[0]
    if keep is None:
        keep = independent_rows(a_stack)
    a_red = np.ascontiguousarray(a_stack[keep])
    b_red = b[keep]
    m = a_red.shape[0]

    # objective scaling keeps the central path numerics uniform
    cscale = max(1.0, float(np.linalg.norm(cobj)))
    c = cobj / cscale

    x = np.eye(n, dtype=np.complex128) / n
    s = np.eye(n, dtype=np.complex128) * max(1.0, float(np.linalg.norm(c)) / math.sqrt(n))
    y = np.zeros(m)

    bnorm = 1.0 + float(np.max(np.abs(b_red)))
    cnorm = 1.0 + float(np.linalg.norm(c))
    it = 0
    converged = False
    best_err = math.inf
    stall = 0
    for it in range(1, max_iter + 1):
        rp = b_red - _traces(a_red, x)
        rd = c - _adjoint(a_red, y) - s
        mu = float(np.real(np.trace(x @ s))) / n
        pinf = float(np.max(np.abs(rp))) / bnorm
        dinf = float(np.linalg.norm(rd)) / cnorm
        gap_abs = abs(float(np.real(np.vdot(c, x))) - float(b_red @ y))
        relgap = gap_abs / (1.0 + abs(float(b_red @ y)))
        if pinf <= tol_primal and dinf <= tol_dual and relgap <= tol_gap:
            converged = True
            break
        err = max(pinf, dinf, relgap)
        if err < 0.9 * best_err:
            best_err = err
            stall = 0
        else:
            stall += 1
            if stall >= 12:
                break

        lx = _chol_or_none(x)
        ls = _chol_or_none(s)
        if lx is None or ls is None:
            break
        sinv = np.linalg.inv(s)
        sinv = 0.5 * (sinv + sinv.conj().T)

        # Schur complement M_ij = Re Tr[A_i X A_j Sinv]
        t = np.matmul(np.matmul(x[None, :, :], a_red), sinv[None, :, :])
        schur = np.real(np.einsum("imn,jnm->ij", a_red, t, optimize=True))
        schur = 0.5 * (schur + schur.T)
        lschur = _chol_or_none(schur)
        ridge = 1e-13 * (1.0 + float(np.max(np.diag(schur))))
        while lschur is None and ridge < 1.0:
            lschur = _chol_or_none(schur + ridge * np.eye(m))
            ridge *= 10.0
        if lschur is None:
            break

        def schur_solve(rhs):
            u = np.linalg.solve(lschur, rhs)
            return np.linalg.solve(lschur.conj().T, u)

        x_rd_sinv = x @ rd @ sinv

        def direction(sigma_mu, corr):
            rhs = b_red - sigma_mu * _traces(a_red, sinv) + _traces(a_red, x_rd_sinv)
            if corr is not None:
                rhs = rhs + _traces(a_red, corr)
            dy = schur_solve(rhs)
            ds = rd - _adjoint(a_red, dy)
            dx = sigma_mu * sinv - x - x @ ds @ sinv
            if corr is not None:
                dx = dx - corr
            dx = 0.5 * (dx + dx.conj().T)
            return dx, dy, ds

        # predictor
        dx_a, dy_a, ds_a = direction(0.0, None)
        ap = _max_step(lx, dx_a)
        ad = _max_step(ls, ds_a)
        mu_aff = float(np.real(np.trace((x + ap * dx_a) @ (s + ad * ds_a)))) / n
        sigma = min(1.0, max((mu_aff / mu) ** 3, 1e-10)) if mu > 0 else 0.1

        # corrector with the second-order cross term
        corr = dx_a @ ds_a @ sinv
        dx, dy, ds = direction(sigma * mu, corr)
        ap = min(1.0, 0.98 * _max_step(lx, dx))
        ad = min(1.0, 0.98 * _max_step(ls, ds))
        x = x + ap * dx
        s = s + ad * ds
        y = y + ad * dy
        x = 0.5 * (x + x.conj().T)
        s = 0.5 * (s + s.conj().T)

    y_full = np.zeros(b.shape[0])
    y_full[keep] = y * cscale
    tr_all = _traces(a_stack, x)
    primal_res = float(np.max(np.abs(tr_all - b)))
    s_full = cobj - _adjoint(a_stack, y_full)
    dual_res = float(np.linalg.norm(s_full - s * cscale))
    obj = float(np.real(np.vdot(cobj, x)))
    return IpmResult(
        x=x, y=y_full, objective=obj,
        primal_residual=primal_res, dual_residual=dual_res,
        gap=abs(obj - float(b @ y_full)), iterations=it, converged=converged,
    )
