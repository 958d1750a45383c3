"""Secure-key-rate computation by convex optimization.

The asymptotic rate is ``max(0, B - p_pass * delta_ec)`` where ``B`` is a
certified lower bound on the minimum of the relative-entropy objective

    f(rho) = D( G(rho) || Z[G(rho)] )        (bits)

over all bipartite density matrices compatible with the observed moments,
the source Gram matrix and unit trace.  ``G`` embeds Bob's key decision via
square roots of the quadrature region operators; ``Z`` dephases the key
register.

Minimization uses Frank-Wolfe: each step linearizes ``f`` and solves the
resulting SDP with a Douglas-Rachford operator-splitting loop (see
:mod:`dmcvqkd._accel`).  The final bound is certified through the dual of
the linearized subproblem, so reported rates never rely on the inexactness
of the inner solver.

Small photon-number cutoffs cannot reproduce the analytic targets exactly:
below nc ~ 4 the attainable set misses them by up to ~1e-3.  The solve
pipeline therefore projects the targets onto the attainable set first
("target repair", the usual constraint relaxation of cutoff-based methods)
and reports the repair distance; at nc >= 4 for the supported intensity
range the repair is a no-op.  The standalone :func:`feasible_initial_point`
and :func:`linear_sdp` operations stay strict and raise instead.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - always present in the pinned env
    import contextlib

    def threadpool_limits(*args, **kwargs):
        return contextlib.nullcontext()

from . import _accel, _ipm
from .channel import GRAM_PAIRS, ProtocolParams, assemble_features, ec_terms
from .fock import build_observables, coherent_state, region_operator

OBSERVABLE_NAMES = ("q", "p", "n", "d")

EIG_CLAMP = 1e-12


class InfeasibleError(RuntimeError):
    """No density matrix satisfies the constraints to tolerance."""

    def __init__(self, message, residual=math.nan):
        super().__init__(message)
        self.residual = residual


class SubproblemError(RuntimeError):
    """The linearized SDP subproblem did not converge."""

    def __init__(self, message, primal_residual=math.nan, dual_residual=math.nan):
        super().__init__(message)
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual


class NumericalInstabilityError(RuntimeError):
    """Non-finite intermediate in the objective or gradient."""


@dataclass(frozen=True)
class ConstraintSet:
    """Equality constraints of the key-rate minimization.

    ``observables`` holds the 16 moment constraints as (alice index,
    bob-side operator, target); ``gram`` is the 4x4 partial-trace target;
    the trace target is always 1.
    """

    nc: int
    probs: tuple
    observables: tuple
    gram: np.ndarray
    trace_target: float = 1.0

    @property
    def dim(self):
        return 4 * (self.nc + 1)


@dataclass(frozen=True)
class SolveOptions:
    """Numerical knobs; the defaults match the documented contracts."""

    fw_tol: float = 1e-6
    fw_max_iter: int = 300
    eps_pert: float = 1e-9
    sdp_primal_tol: float = 1e-8
    sdp_dual_tol: float = 1e-6
    sdp_max_iter: int = 100
    sdp_tol: float = 1e-9
    feas_tol: float = 1e-8
    feas_max_iter: int = 100_000
    ls_min_t: float = 1e-12


@dataclass
class KeyRateReport:
    """Everything a solve produces, rates in bits per pulse."""

    primal_objective: float
    certified_lower_bound: float
    fw_gap: float
    iterations: int
    p_pass: float
    delta_ec: float
    key_rate: float
    status: str
    constraint_repair: float = 0.0


def build_constraints(source, nc=None, probs=None):
    """Constraint set from protocol parameters or a 29-entry feature vector.

    With a feature vector the probabilities must be supplied separately
    (features store probability-weighted targets and only the Gram
    off-diagonals).  Raises :class:`InfeasibleError` if the reconstructed
    Gram matrix is not PSD with unit trace.
    """
    if isinstance(source, ProtocolParams):
        return build_constraints(assemble_features(source), nc=source.nc, probs=source.probs)
    features = np.asarray(source, dtype=np.float64)
    if features.shape != (29,):
        raise ValueError(f"expected a 29-entry feature vector, got shape {features.shape}")
    if nc is None or probs is None:
        raise ValueError("nc and probs are required when building from features")

    gram = np.zeros((4, 4), dtype=np.complex128)
    for i in range(4):
        gram[i, i] = probs[i]
    for k, (i, j) in enumerate(GRAM_PAIRS):
        gram[i, j] = features[16 + 2 * k] + 1j * features[16 + 2 * k + 1]
        gram[j, i] = np.conj(gram[i, j])
    eigs = np.linalg.eigvalsh(gram)
    if eigs[0] < -1e-10:
        raise InfeasibleError(
            f"reconstructed Gram matrix is not PSD (min eig {eigs[0]:.3e})", float(-eigs[0])
        )
    if abs(np.trace(gram).real - 1.0) > 1e-10:
        raise InfeasibleError(f"Gram trace {np.trace(gram).real!r} != 1")

    obs = build_observables(nc)
    observables = []
    for x in range(4):
        for j, name in enumerate(OBSERVABLE_NAMES):
            observables.append((x, obs[name], float(features[4 * x + j])))
    return ConstraintSet(nc=nc, probs=tuple(probs), observables=tuple(observables), gram=gram)


# ---------------------------------------------------------------------------
# constraint system in the stacked form used by the kernels


@dataclass
class _System:
    n: int
    a_stack: np.ndarray   # (k, n, n) Hermitian constraint operators
    a2c: np.ndarray       # (k, n*n) conj(vec(A_i))
    b: np.ndarray
    lips: float           # Lipschitz constant of the residual gradient
    keep: np.ndarray      # indices of a maximal independent row subset


def _constraint_matrices(constraints):
    nb = constraints.nc + 1
    n = 4 * nb
    eye_b = np.eye(nb, dtype=np.complex128)
    mats = []
    targets = []
    for x, op, target in constraints.observables:
        proj = np.zeros((4, 4), dtype=np.complex128)
        proj[x, x] = 1.0
        mats.append(np.kron(proj, op))
        targets.append(target)
    mats.append(np.eye(n, dtype=np.complex128))
    targets.append(constraints.trace_target)
    for i in range(4):
        proj = np.zeros((4, 4), dtype=np.complex128)
        proj[i, i] = 1.0
        mats.append(np.kron(proj, eye_b))
        targets.append(constraints.gram[i, i].real)
    for i, j in GRAM_PAIRS:
        e_re = np.zeros((4, 4), dtype=np.complex128)
        e_re[i, j] = 1.0
        e_re[j, i] = 1.0
        mats.append(np.kron(e_re, eye_b))
        targets.append(2.0 * constraints.gram[i, j].real)
        e_im = np.zeros((4, 4), dtype=np.complex128)
        e_im[i, j] = 1j
        e_im[j, i] = -1j
        mats.append(np.kron(e_im, eye_b))
        targets.append(2.0 * constraints.gram[i, j].imag)
    return mats, np.asarray(targets, dtype=np.float64)


def _build_system(constraints):
    mats, b = _constraint_matrices(constraints)
    n = mats[0].shape[0]
    a_stack = np.ascontiguousarray(np.stack(mats))
    a2c = np.ascontiguousarray(np.conj(a_stack.reshape(len(mats), -1)))
    w = np.real(a2c @ a2c.conj().T)
    lips = 2.0 * float(np.linalg.eigvalsh(w)[-1])
    keep = _ipm.independent_rows(a_stack)
    return _System(n=n, a_stack=a_stack, a2c=a2c, b=b, lips=lips, keep=keep)


def _apply_adjoint(system, y):
    """sum_i y_i A_i for a real coefficient vector y."""
    v = np.conj(system.a2c.T @ y.astype(np.complex128))
    return v.reshape(system.n, system.n)


def _max_violation(system, rho):
    t = _accel.constraint_traces(system.a2c, np.ascontiguousarray(rho))
    return float(np.max(np.abs(t - system.b)))


def _dual_bound(system, cobj, y):
    """Rigorous lower bound on min Tr[C rho] over the constraint set.

    For any multiplier vector y,  Tr[C rho] = Tr[(C - A*y) rho] + y.b  and
    Tr[(C - A*y) rho] >= lambda_min(C - A*y) because Tr rho = 1; no
    assumption on y's accuracy is needed.
    """
    s = cobj - _apply_adjoint(system, y)
    lam = float(np.linalg.eigvalsh(s)[0])
    return float(system.b @ y) + lam


def _run_feasibility(system, x0, options):
    x, viol, iters = _accel.feasibility_pg(
        np.ascontiguousarray(x0), system.a2c, system.b,
        system.lips, options.feas_tol, options.feas_max_iter,
        1500, 1e-3,
    )
    return 0.5 * (x + x.conj().T), float(viol), iters


def _physical_start(constraints):
    """Truncated image of the classical-noise channel state.

    A lossy channel with Gaussian displacement noise reproduces the analytic
    targets exactly in infinite dimension; averaging displaced coherent
    purifications over a Gauss-Hermite grid and truncating gives a state
    whose residual is only the truncation tail, which makes an excellent
    descent start.  Amplitudes and the noise quantum number are recovered
    from the constraint targets themselves so the feature-vector path works
    identically.
    """
    nb = constraints.nc + 1
    p = np.asarray(constraints.probs, dtype=np.float64)
    gammas = np.zeros(4, dtype=np.complex128)
    nbar = 0.0
    nbar_n = 0
    # observables are ordered q, p, n, d per alice index
    for x in range(4):
        if p[x] <= 0:
            continue
        tq = constraints.observables[4 * x + 0][2] / p[x]
        tp = constraints.observables[4 * x + 1][2] / p[x]
        tn = constraints.observables[4 * x + 2][2] / p[x]
        gammas[x] = (tq + 1j * tp) / math.sqrt(2.0)
        nbar += max(0.0, tn - abs(gammas[x]) ** 2)
        nbar_n += 1
    nbar = nbar / max(1, nbar_n)

    if nbar > 1e-14:
        nodes, weights = np.polynomial.hermite.hermgauss(5)
        scale = math.sqrt(nbar)
    else:
        nodes, weights = np.array([0.0]), np.array([math.sqrt(math.pi)])
        scale = 0.0
    rho = np.zeros((4 * nb, 4 * nb), dtype=np.complex128)
    sqp = np.sqrt(p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, u in enumerate(nodes):
            for j, v in enumerate(nodes):
                delta = scale * (u + 1j * v)
                w = weights[i] * weights[j] / math.pi
                phi = np.zeros(4 * nb, dtype=np.complex128)
                for x in range(4):
                    phi[x * nb:(x + 1) * nb] = sqp[x] * coherent_state(
                        gammas[x] + delta, constraints.nc
                    )
                rho += w * np.outer(phi, phi.conj())
    tr = float(np.trace(rho).real)
    if tr > 0:
        rho /= tr
    return rho


def _prepare(constraints, options):
    """Constraint system plus a feasible start, repairing targets if needed.

    Returns (system, rho0, repair_distance).  When the analytic targets are
    unattainable at this cutoff, the target vector is replaced by the
    traces of the residual-minimizing density matrix (their projection onto
    the attainable set) and the max-norm distance is reported.
    """
    system = _build_system(constraints)
    rho0, viol, _ = _run_feasibility(system, _physical_start(constraints), options)
    repair = 0.0
    if viol > options.feas_tol:
        repair = viol
        system.b = _accel.constraint_traces(system.a2c, np.ascontiguousarray(rho0))
    return system, rho0, repair


def repaired_constraints(constraints, options=None):
    """Project the targets onto what the cutoff can attain.

    Returns ``(constraints, 0.0)`` unchanged when the original targets are
    attainable; otherwise a rebuilt :class:`ConstraintSet` whose targets are
    the traces of the residual-minimizing state, plus the max-norm repair
    distance.  This is the set the solve pipeline actually optimizes over.
    """
    options = options or SolveOptions()
    with threadpool_limits(limits=1):
        system, _, repair = _prepare(constraints, options)
    if repair == 0.0:
        return constraints, 0.0
    t = system.b
    observables = tuple(
        (x, op, float(t[k])) for k, (x, op, _) in enumerate(constraints.observables)
    )
    gram = np.zeros((4, 4), dtype=np.complex128)
    for i in range(4):
        gram[i, i] = t[17 + i]
    for k, (i, j) in enumerate(GRAM_PAIRS):
        gram[i, j] = 0.5 * (t[21 + 2 * k] + 1j * t[21 + 2 * k + 1])
        gram[j, i] = np.conj(gram[i, j])
    rebuilt = ConstraintSet(
        nc=constraints.nc, probs=constraints.probs, observables=observables,
        gram=gram, trace_target=float(t[16]),
    )
    return rebuilt, repair


# ---------------------------------------------------------------------------
# key map and objective


@dataclass(frozen=True)
class KeyMap:
    """Kraus pieces of the key-register embedding.

    ``kraus[z]`` maps the AB space into key-register block z; their sum is
    the isometry actually applied, K = sum_z |z> (x) id_A (x) sqrt(I_z).
    """

    kraus: tuple
    m_ops: tuple
    dim_ab: int

    @property
    def dim_out(self):
        return 2 * self.dim_ab


def _psd_sqrt(mat, what):
    w, v = np.linalg.eigh(mat)
    if w[0] < -1e-10:
        raise NumericalInstabilityError(f"{what} has negative eigenvalue {w[0]:.3e}")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def key_map_isometry(delta_c, nc):
    """Key-map Kraus pieces K_z = |z> (x) id_A (x) sqrt(I_z)."""
    dim_b = nc + 1
    dim_ab = 4 * dim_b
    kraus = []
    m_ops = []
    for z in (0, 1):
        root = _psd_sqrt(region_operator(z, delta_c, nc), f"region operator I_{z}")
        m = np.kron(np.eye(4, dtype=np.complex128), root)
        k = np.zeros((2 * dim_ab, dim_ab), dtype=np.complex128)
        k[z * dim_ab:(z + 1) * dim_ab, :] = m
        kraus.append(k)
        m_ops.append(m)
    return KeyMap(kraus=tuple(kraus), m_ops=tuple(m_ops), dim_ab=dim_ab)


def _g_map(rho, key_map):
    """Apply the key-map isometry: G(rho) = K rho K^dag, 2x2 block structure."""
    m0, m1 = key_map.m_ops
    d = key_map.dim_ab
    r0 = rho @ m0
    r1 = rho @ m1
    g = np.empty((2 * d, 2 * d), dtype=np.complex128)
    g[:d, :d] = m0 @ r0
    g[:d, d:] = m0 @ r1
    g[d:, :d] = g[:d, d:].conj().T
    g[d:, d:] = m1 @ r1
    return g


def _perturb(g, eps):
    dim = g.shape[0]
    out = (1.0 - eps) * g
    out[np.diag_indices(dim)] += eps / dim
    return out


def _objective_from_g(g, eps):
    """f from an (unperturbed) G image; eigenvalues clamped at EIG_CLAMP."""
    d = g.shape[0] // 2
    g_eps = _perturb(g, eps)
    wg = np.clip(np.linalg.eigvalsh(g_eps), EIG_CLAMP, None)
    wa = np.clip(np.linalg.eigvalsh(np.ascontiguousarray(g_eps[:d, :d])), EIG_CLAMP, None)
    wd = np.clip(np.linalg.eigvalsh(np.ascontiguousarray(g_eps[d:, d:])), EIG_CLAMP, None)
    return float(np.sum(wg * np.log2(wg)) - np.sum(wa * np.log2(wa)) - np.sum(wd * np.log2(wd)))


def _log2m(mat):
    w, v = np.linalg.eigh(mat)
    lw = np.log2(np.clip(w, EIG_CLAMP, None))
    return (v * lw) @ v.conj().T


def objective_and_gradient(rho, key_map, eps_pert=1e-9):
    """Relative-entropy objective (bits) and its gradient at ``rho``.

    The second argument of the relative entropy is the key-register pinching
    of the first, so the value equals S(pinching) - S(G(rho)); both
    arguments are mixed with eps_pert * id/dim before the logarithms and
    eigenvalues are clamped at 1e-12.  The gradient is
    K^dag [log2 G - log2 Z(G)] K on the perturbed state.
    """
    d = key_map.dim_ab
    g_eps = _perturb(_g_map(rho, key_map), eps_pert)
    block_a = np.ascontiguousarray(g_eps[:d, :d])
    block_d = np.ascontiguousarray(g_eps[d:, d:])

    wg, vg = np.linalg.eigh(g_eps)
    wa, va = np.linalg.eigh(block_a)
    wd, vd = np.linalg.eigh(block_d)
    wg = np.clip(wg, EIG_CLAMP, None)
    wa = np.clip(wa, EIG_CLAMP, None)
    wd = np.clip(wd, EIG_CLAMP, None)
    f = float(np.sum(wg * np.log2(wg)) - np.sum(wa * np.log2(wa)) - np.sum(wd * np.log2(wd)))

    diff = (vg * np.log2(wg)) @ vg.conj().T
    diff[:d, :d] -= (va * np.log2(wa)) @ va.conj().T
    diff[d:, d:] -= (vd * np.log2(wd)) @ vd.conj().T
    m0, m1 = key_map.m_ops
    grad = (
        m0 @ diff[:d, :d] @ m0
        + m0 @ diff[:d, d:] @ m1
        + m1 @ diff[d:, :d] @ m0
        + m1 @ diff[d:, d:] @ m1
    )
    grad = 0.5 * (grad + grad.conj().T)
    if not (math.isfinite(f) and np.all(np.isfinite(grad))):
        raise NumericalInstabilityError(
            f"non-finite objective ({f}) or gradient at eps_pert={eps_pert:g}"
        )
    if f < 0.0:
        if f < -1e-9:
            raise NumericalInstabilityError(f"relative entropy came out negative: {f}")
        f = 0.0
    return f, grad


# ---------------------------------------------------------------------------
# inner solvers


class _SdpSolver:
    """Interior-point solver for min Tr[C rho] over one constraint set.

    Thin stateful wrapper over :func:`dmcvqkd._ipm.solve_sdp` caching the
    independent-row selection of the constraint stack.
    """

    def __init__(self, system, options):
        self.system = system
        self.options = options

    def solve(self, cobj, max_iter=None):
        opts = self.options
        sys_ = self.system
        res = _ipm.solve_sdp(
            np.ascontiguousarray(cobj), sys_.a_stack, sys_.b,
            tol_gap=opts.sdp_tol, tol_primal=opts.sdp_tol, tol_dual=opts.sdp_tol,
            max_iter=opts.sdp_max_iter if max_iter is None else max_iter,
            keep=sys_.keep,
        )
        return res.x, res.y, res.primal_residual, res.dual_residual, res.iterations


def linear_sdp(cobj, constraints, options=None):
    """Minimize Tr[C rho] over the constraint set (PSD, all equalities).

    Returns the minimizer as a density matrix.  Raises
    :class:`SubproblemError` when the residual targets (1e-8 primal, 1e-6
    dual) are not met within the iteration cap, and
    :class:`InfeasibleError` when the constraints are unattainable.
    """
    options = options or SolveOptions()
    system = _build_system(constraints)
    with threadpool_limits(limits=1):
        solver = _SdpSolver(system, options)
        x, _, primal, dual, iters = solver.solve(np.asarray(cobj, dtype=np.complex128))
    if primal > options.sdp_primal_tol or dual > options.sdp_dual_tol:
        _, viol, _ = _run_feasibility(system, _physical_start(constraints), options)
        if viol > options.feas_tol:
            raise InfeasibleError(
                f"constraints unattainable at nc={constraints.nc} "
                f"(best residual {viol:.3e})",
                residual=viol,
            )
        raise SubproblemError(
            f"linear SDP stopped after {iters} iterations with residuals "
            f"primal={primal:.3e}, dual={dual:.3e}",
            primal_residual=primal,
            dual_residual=dual,
        )
    return x


def feasible_initial_point(constraints, options=None):
    """A density matrix satisfying every equality to 1e-8, eigenvalues >= 0.

    Projected-gradient (FISTA) descent of the squared residual over the
    trace-one PSD set, started from gram (x) id/(nc+1); raises
    :class:`InfeasibleError` with the best residual if the floor is not
    reached within the budget.
    """
    options = options or SolveOptions()
    system = _build_system(constraints)
    with threadpool_limits(limits=1):
        x, viol, _ = _run_feasibility(system, _physical_start(constraints), options)
    if viol > options.feas_tol:
        raise InfeasibleError(
            f"feasibility residual stalled at {viol:.3e} (target {options.feas_tol:g})",
            residual=float(viol),
        )
    return x


# ---------------------------------------------------------------------------
# Frank-Wolfe outer loop


@dataclass
class FrankWolfeResult:
    rho: np.ndarray
    objective: float
    gradient: np.ndarray
    gap: float
    iterations: int
    status: str  # converged | max-iterations | stagnation
    certified_bound: float = -math.inf
    constraint_repair: float = 0.0


def _line_search(g_rho, g_delta, f_cur, eps_pert, min_t):
    """Halving ladder on f along rho + t*(delta - rho); best improving t.

    The G map is linear, so the segment objective only needs the two
    endpoint images.  Returns (t, f) with t = 0 meaning no decrease found.
    """
    best_t = 0.0
    best_f = f_cur
    t = 1.0
    worse_streak = 0
    while t >= min_t:
        f_t = _objective_from_g(g_rho + t * (g_delta - g_rho), eps_pert)
        if f_t < best_f - 1e-15 * max(1.0, abs(best_f)):
            best_f = f_t
            best_t = t
            worse_streak = 0
        else:
            worse_streak += 1
            # convex in t: once past the minimum there is no point going on
            if best_t > 0.0 and worse_streak >= 2:
                break
        t *= 0.5
    return best_t, best_f


def _frank_wolfe_impl(system, key_map, options, rho0):
    sdp = _SdpSolver(system, options)
    rho = rho0
    f, grad = objective_and_gradient(rho, key_map, options.eps_pert)
    best_bound = -math.inf
    status = "max-iterations"
    gap = math.inf
    iters = 0
    for k in range(options.fw_max_iter):
        delta, y, _, _, _ = sdp.solve(grad)
        gap = float(np.real(np.vdot(grad, rho - delta)))
        lin = f - float(np.real(np.vdot(grad, rho))) + _dual_bound(system, grad, y)
        best_bound = max(best_bound, lin)
        iters = k + 1
        if gap < options.fw_tol:
            status = "converged"
            break
        g_rho = _g_map(rho, key_map)
        g_delta = _g_map(delta, key_map)
        t, _ = _line_search(g_rho, g_delta, f, options.eps_pert, options.ls_min_t)
        if t == 0.0:
            status = "stagnation"
            break
        rho = rho + t * (delta - rho)
        f, grad = objective_and_gradient(rho, key_map, options.eps_pert)
    return FrankWolfeResult(
        rho=rho, objective=f, gradient=grad, gap=gap, iterations=iters,
        status=status, certified_bound=best_bound,
    )


def frank_wolfe(constraints, key_map, options=None):
    """Minimize the relative-entropy objective over the constraint set.

    Conditional-gradient iterations with a backtracking (halving) line
    search; stops when the linearization gap drops below ``options.fw_tol``
    or after ``options.fw_max_iter`` iterations.  The objective never
    increases across accepted steps.  Also tracks the best certified lower
    bound seen (each iteration's linearization bound is valid on its own).
    """
    options = options or SolveOptions()
    with threadpool_limits(limits=1):
        system, rho0, repair = _prepare(constraints, options)
        result = _frank_wolfe_impl(system, key_map, options, rho0)
    result.constraint_repair = repair
    return result


def certified_lower_bound(rho_star, grad_star, f_star, constraints, options=None):
    """Linearization lower bound on the true objective minimum.

    f(rho) >= f* + <grad*, rho - rho*> for every feasible rho, so the bound
    is f* - Tr[grad* rho*] + min Tr[grad* rho].  The inner minimum is
    evaluated through the dual of the linear SDP, which keeps the bound
    valid regardless of how accurately the subproblem was solved.
    """
    options = options or SolveOptions()
    with threadpool_limits(limits=1):
        system, _, _ = _prepare(constraints, options)
        solver = _SdpSolver(system, options)
        cobj = np.ascontiguousarray(np.asarray(grad_star, dtype=np.complex128))
        _, y, _, _, _ = solver.solve(cobj)
        inner_min = _dual_bound(system, cobj, y)
    return f_star - float(np.real(np.vdot(grad_star, rho_star))) + inner_min


def key_rate(params, options=None):
    """Full key-rate pipeline for one parameter point.

    Reported rate is ``max(0, certified_lower_bound - p_pass * delta_ec)``;
    the report also carries the primal objective, the final Frank-Wolfe gap
    and the sifting/error-correction terms.  Deterministic: the same params
    always produce the identical report.
    """
    options = options or SolveOptions()
    p_pass, delta_ec = ec_terms(params)
    try:
        constraints = build_constraints(params)
    except InfeasibleError:
        return KeyRateReport(
            primal_objective=math.nan, certified_lower_bound=math.nan,
            fw_gap=math.nan, iterations=0, p_pass=p_pass, delta_ec=delta_ec,
            key_rate=0.0, status="infeasible",
        )
    key_map = key_map_isometry(params.delta_c, params.nc)
    with threadpool_limits(limits=1):
        system, rho0, repair = _prepare(constraints, options)
        fw = _frank_wolfe_impl(system, key_map, options, rho0)
    bound = fw.certified_bound
    status = "converged" if fw.status == "converged" else "max-iterations"
    rate = max(0.0, bound - p_pass * delta_ec)
    return KeyRateReport(
        primal_objective=fw.objective,
        certified_lower_bound=bound,
        fw_gap=fw.gap,
        iterations=fw.iterations,
        p_pass=p_pass,
        delta_ec=delta_ec,
        key_rate=rate,
        status=status,
        constraint_repair=repair,
    )
