"""Per-step velocity problem: a convex friction VI with a slip-dependent bound.

For a frozen bound ``g`` the step problem is the minimization of

    J(w) = 1/2 w.Bw + c.w + sum_i W_i g_i |w_i|

over the free dofs of ``V`` (``W_i`` lumped contact weights). It is solved by
Newton's method on ``|s| ~ sqrt(s^2 + eps^2) - eps`` with ``eps`` driven down
a schedule, followed by a primal-dual active-set (semismooth Newton) polish
on the nonsmooth optimality system. The slip dependence ``g = r(|w|)`` is
handled by an outer Picard iteration.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .friction import ContactSet, FrictionLaw, RegularizedAbs

log = logging.getLogger(__name__)

EPS_SCHEDULE = (1e-2, 1e-4, 1e-8)
ARMIJO_C = 1e-4
ARMIJO_FACTOR = 0.5
SLIP_TOL = 1e-10


class SolverError(RuntimeError):
    pass


class NonEllipticError(SolverError):
    pass


class NewtonConvergenceError(SolverError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class OuterIterationError(SolverError):
    def __init__(self, message, history):
        super().__init__(f"{message}; increment norms: " + ", ".join(f"{h:.3e}" for h in history))
        self.history = list(history)


class GateViolation(SolverError):
    pass


# linear operators ---------------------------------------------------------

class MatrixOperator:
    """Explicit symmetric positive definite matrix."""

    def __init__(self, matrix, iterative_threshold=None):
        self.matrix = sp.csr_matrix(matrix) if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
        self.n = self.matrix.shape[0]
        self.iterative_threshold = iterative_threshold

    def matvec(self, x):
        return self.matrix @ x

    def diagonal(self):
        return np.asarray(self.matrix.diagonal(), dtype=float)

    def solve(self, rhs, diag=None, keep=None):
        """Solve ``(B + diag(diag))[keep, keep] x = rhs[keep]``; ``x`` is zero off ``keep``."""
        n = self.n
        keep = np.arange(n) if keep is None else np.asarray(keep)
        x = np.zeros(n)
        if keep.size == 0:
            return x
        mat = self.matrix
        if diag is not None:
            mat = mat + (sp.diags(diag) if sp.issparse(mat) else np.diag(diag))
        if keep.size != n:
            mat = mat[keep][:, keep]
        if self.iterative_threshold is not None and keep.size > self.iterative_threshold:
            x[keep] = _cg(lambda v: mat @ v, np.asarray(mat.diagonal()), rhs[keep])
        elif sp.issparse(mat):
            x[keep] = spla.spsolve(sp.csc_matrix(mat), rhs[keep])
        else:
            x[keep] = np.linalg.solve(mat, rhs[keep])
        return x

    def dense(self):
        return self.matrix.toarray() if sp.issparse(self.matrix) else np.array(self.matrix)


class SchurOperator:
    """``K + s C^T D^{-1} C`` applied without forming the dense Schur term.

    Used for the potential-eliminated elastic operator: ``C`` maps V to W,
    ``D`` is the permittivity matrix, and a product costs one solve with ``D``.
    Linear systems are solved through the sparse augmented matrix
    ``[[K, s C^T], [s C, -s D]]``.
    """

    def __init__(self, K, C, D, s, D_lu=None, iterative_threshold=None):
        self.K = sp.csr_matrix(K)
        self.C = sp.csr_matrix(C)
        self.D = sp.csr_matrix(D)
        self.s = float(s)
        self.n = self.K.shape[0]
        self._D_lu = D_lu
        self.iterative_threshold = iterative_threshold

    @property
    def D_lu(self):
        if self._D_lu is None:
            self._D_lu = spla.splu(self.D.tocsc())
        return self._D_lu

    def matvec(self, x):
        out = self.K @ x
        if self.s != 0.0:
            out = out + self.s * (self.C.T @ self.D_lu.solve(self.C @ x))
        return out

    def diagonal(self):
        """Diagonal of ``K``: a cheap scaling proxy and a lower bound of the
        true diagonal, since ``s C^T D^{-1} C`` is positive semidefinite."""
        return np.asarray(self.K.diagonal(), dtype=float)

    def solve(self, rhs, diag=None, keep=None):
        n = self.n
        keep = np.arange(n) if keep is None else np.asarray(keep)
        x = np.zeros(n)
        if keep.size == 0:
            return x
        iterative = self.iterative_threshold is not None and keep.size > self.iterative_threshold
        if iterative or self.s == 0.0:
            K = self.K if diag is None else self.K + sp.diags(diag)
            K = K[keep][:, keep]
        if iterative:
            def apply(v):
                full = np.zeros(n)
                full[keep] = v
                y = K @ v
                if self.s != 0.0:
                    y = y + self.s * (self.C.T @ self.D_lu.solve(self.C @ full))[keep]
                return y
            x[keep] = _cg(apply, np.asarray(K.diagonal()), rhs[keep])
            return x
        if self.s == 0.0:
            x[keep] = spla.spsolve(sp.csc_matrix(K), rhs[keep])
            return x
        aug = self._augmented
        if diag is not None:
            aug = aug + sp.diags(np.concatenate([diag, np.zeros(self.D.shape[0])]))
        idx = np.concatenate([keep, self.n + np.arange(self.D.shape[0])])
        if keep.size != n:
            aug = aug[idx][:, idx]
        sol = spla.spsolve(sp.csc_matrix(aug), np.concatenate([rhs[keep], np.zeros(self.D.shape[0])]))
        x[keep] = sol[:keep.size]
        return x

    @cached_property
    def _augmented(self):
        return sp.bmat([[self.K, self.s * self.C.T], [self.s * self.C, -self.s * self.D]], format="csr")

    def dense(self):
        Dinv_C = self.D_lu.solve(self.C.toarray())
        return self.K.toarray() + self.s * (self.C.T @ Dinv_C)


def _cg(apply, diag, rhs):
    n = rhs.size
    op = spla.LinearOperator((n, n), matvec=apply, dtype=float)
    pre = spla.LinearOperator((n, n), matvec=lambda v: v / diag, dtype=float)
    x, info = spla.cg(op, rhs, rtol=1e-12, atol=0.0, M=pre, maxiter=10 * n)
    if info != 0:
        raise SolverError(f"conjugate gradients did not converge (info={info})")
    return x


# configuration ------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and policies of the step solver."""

    tol: float = 1e-10
    newton_tol: float | None = None
    eps_schedule: tuple = EPS_SCHEDULE
    max_newton: int = 100
    max_outer: int = 100
    gate_policy: str = "warn"
    acceleration: str | None = None
    iterative_threshold: int | None = 20000
    velocity_scale: float = 1.0

    def __post_init__(self):
        if not self.tol > 0 or (self.newton_tol is not None and not self.newton_tol > 0):
            raise ValueError("solver tolerances must be positive")
        if any(not e > 0 for e in self.eps_schedule):
            raise ValueError("eps schedule entries must be positive")
        if self.max_newton < 1 or self.max_outer < 1:
            raise ValueError("iteration caps must be at least 1")
        if self.gate_policy not in ("warn", "abort"):
            raise ValueError(f"gate policy must be 'warn' or 'abort', got {self.gate_policy!r}")
        if self.acceleration not in (None, "anderson"):
            raise ValueError(f"unknown acceleration {self.acceleration!r}")

    def solve(self, problem, w_init=None) -> "ViSolution":
        return solve_step(problem, w_init=w_init, tol=self.tol, max_outer=self.max_outer,
                          gate_policy=self.gate_policy, acceleration=self.acceleration,
                          inner_tol=self.newton_tol, eps_schedule=tuple(self.eps_schedule),
                          max_newton=self.max_newton)


# problem / solution -------------------------------------------------------

@dataclass(eq=False)
class StepProblem:
    """One velocity step: ``B_step``, linear term ``c``, contact data, gate constants.

    ``gram`` is the V inner-product matrix used for norms (identity when None).
    """

    operator: object
    linear: np.ndarray
    contact: ContactSet
    law: FrictionLaw
    alpha_star: float
    trace_constant: float
    gram: object = None
    velocity_scale: float = 1.0

    @classmethod
    def from_forms(cls, A, B, F, u_n, dt, contact, law, alpha_star, trace_constant,
                   gram=None, velocity_scale=1.0):
        """Build from ``a`` (matrix ``A``), ``b`` (matrix ``B``), load ``F``, and
        ``u = u_n + dt w``: ``B_step = B + dt A`` and ``c = A u_n - F``."""
        A = None if A is None else (A if sp.issparse(A) else np.asarray(A, dtype=float))
        B = B if sp.issparse(B) else np.asarray(B, dtype=float)
        u_n = np.asarray(u_n, dtype=float)
        mat = B if A is None else B + dt * A
        lin = -np.asarray(F, dtype=float) + (0.0 if A is None else A @ u_n)
        return cls(MatrixOperator(mat), lin, contact, law, alpha_star, trace_constant, gram, velocity_scale)

    @property
    def n(self):
        return self.operator.n

    @cached_property
    def _gram_lu(self):
        return None if self.gram is None else spla.splu(sp.csc_matrix(self.gram))

    def norm(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.gram is None:
            return float(np.linalg.norm(x))
        return float(np.sqrt(max(x @ (self.gram @ x), 0.0)))

    def dual_norm(self, r) -> float:
        r = np.asarray(r, dtype=float)
        if self.gram is None:
            return float(np.linalg.norm(r))
        return float(np.sqrt(max(r @ self._gram_lu.solve(r), 0.0)))

    def objective(self, w, g, eps=None) -> float:
        """``J`` (or its regularized version) at ``w`` for nodal bounds ``g``."""
        w = np.asarray(w, dtype=float)
        wc = w[self.contact.dofs]
        absval = np.abs(wc) if eps is None else RegularizedAbs(eps).value(wc)
        return float(0.5 * w @ self.operator.matvec(w) + self.linear @ w
                     + np.sum(self.contact.weights * g * absval))

    def bounds_at(self, w) -> np.ndarray:
        return self.contact.bounds(self.law, np.abs(np.asarray(w)[self.contact.dofs]))


@dataclass
class ViSolution:
    w: np.ndarray
    traction: np.ndarray
    bounds: np.ndarray
    residual: float
    stick: np.ndarray
    outer_iterations: int = 0
    newton_iterations: list = field(default_factory=list)
    objective_history: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    polished: bool = False

    @property
    def total_newton(self) -> int:
        return int(sum(self.newton_iterations))

    @property
    def contraction_ratios(self) -> list:
        inc = self.increments
        return [inc[k] / inc[k - 1] for k in range(1, len(inc)) if inc[k - 1] > 0]


@dataclass(frozen=True)
class GateReport:
    ok: bool
    Z0: float
    margin: float
    lipschitz: float


def check_gate(alpha_star: float, trace_constant: float, lipschitz: float) -> GateReport:
    """Sufficient condition for a unique step solution: ``L_r < alpha* / c^2``."""
    Z0 = alpha_star / trace_constant ** 2
    return GateReport(lipschitz < Z0, Z0, Z0 - lipschitz, lipschitz)


def check_problem_gate(problem: StepProblem, lipschitz=None) -> GateReport:
    L = problem.law.lipschitz if lipschitz is None else lipschitz
    return check_gate(problem.alpha_star, problem.trace_constant, L)


# residuals ----------------------------------------------------------------

def kkt_residual(problem: StepProblem, g, w, slip_tol=None):
    """Natural residual of ``0 in Bw + c + W g d|w|`` and the contact traction.

    Returns ``(dual_norm, traction, stick_mask)``; the traction is
    ``(Bw + c)`` at the contact dofs, i.e. ``-W g sign(w)`` where slipping.
    """
    slip_tol = SLIP_TOL * problem.velocity_scale if slip_tol is None else slip_tol
    w = np.asarray(w, dtype=float)
    r = problem.operator.matvec(w) + problem.linear
    cd = problem.contact.dofs
    wg = problem.contact.weights * g
    rc = r[cd]
    wc = w[cd]
    stick = np.abs(wc) <= slip_tol
    rho = r.copy()
    rho[cd] = np.where(stick, np.sign(rc) * np.maximum(np.abs(rc) - wg, 0.0), rc + wg * np.sign(wc))
    return problem.dual_norm(rho), rc.copy(), stick


def natural_residual(problem: StepProblem, g, w) -> np.ndarray:
    """``w - prox(w - (Bw + c))``: continuous in ``w`` and zero exactly at the minimizer."""
    w = np.asarray(w, dtype=float)
    z = w - (problem.operator.matvec(w) + problem.linear)
    cd = problem.contact.dofs
    thr = problem.contact.weights * np.asarray(g, dtype=float)
    z[cd] = np.sign(z[cd]) * np.maximum(np.abs(z[cd]) - thr, 0.0)
    return w - z


# frozen-bound solver ------------------------------------------------------

def _phi_diff(a, b, eps):
    """``sqrt(a^2+eps^2) - sqrt(b^2+eps^2)`` without cancellation."""
    return (a - b) * (a + b) / (np.sqrt(a * a + eps * eps) + np.sqrt(b * b + eps * eps))


def _newton_stage(problem, wg, w, eps, tol_abs, max_newton, objective_log):
    cd = problem.contact.dofs
    reg = RegularizedAbs(eps)
    iters = 0
    while True:
        Bw = problem.operator.matvec(w)
        grad = Bw + problem.linear
        grad[cd] += wg * reg.derivative(w[cd])
        res = problem.dual_norm(grad)
        if res <= tol_abs:
            return w, iters, res
        if iters >= max_newton:
            raise NewtonConvergenceError(f"Newton did not converge at eps={eps:.1e} in {max_newton} iterations", res)
        hdiag = np.zeros(problem.n)
        hdiag[cd] = wg * reg.second(w[cd])
        d = problem.operator.solve(-grad, diag=hdiag)
        Bd = problem.operator.matvec(d)
        curv = d @ Bd + np.sum(hdiag * d * d)
        slope = grad @ d
        if not curv > 0 or not slope < 0:
            if np.linalg.norm(d) == 0.0:
                return w, iters, res
            raise NonEllipticError("viscous form is not elliptic on V: Newton system lost positive curvature")
        t = 1.0
        for _ in range(60):
            wt = w + t * d
            # exact change of the regularized objective along the step
            dJ = (t * (d @ (Bw + problem.linear)) + 0.5 * t * t * (d @ Bd)
                  + np.sum(wg * _phi_diff(wt[cd], w[cd], eps)))
            if dJ <= ARMIJO_C * t * slope:
                break
            t *= ARMIJO_FACTOR
        else:
            # no measurable decrease left: the iterate is optimal to rounding
            return w, iters, res
        w = wt
        iters += 1
        objective_log.append(problem.objective(w, wg / np.where(problem.contact.weights > 0, problem.contact.weights, 1.0), eps))


def _active_set_polish(problem, wg, w, xi, max_iter=50):
    """Primal-dual active-set iterations on the nonsmooth optimality system.

    ``xi`` approximates the friction force ``W g sign(w)``. Returns the exact
    solution and the iteration count when the active sets settle, otherwise
    ``(None, max_iter)``.
    """
    cd = problem.contact.dofs
    n = problem.n
    cp = np.maximum(problem.operator.diagonal()[cd], 1e-300)
    prev = None
    for it in range(max_iter):
        z = xi + cp * w[cd]
        slip = np.abs(z) > wg
        sign = np.sign(z)
        state = (slip.tobytes(), sign.tobytes())
        if state == prev:
            return w, it
        prev = state
        keep_mask = np.ones(n, dtype=bool)
        keep_mask[cd[~slip]] = False
        rhs = -problem.linear.copy()
        rhs[cd[slip]] -= wg[slip] * sign[slip]
        w = problem.operator.solve(rhs, keep=np.flatnonzero(keep_mask))
        xi = np.where(slip, wg * sign, -(problem.operator.matvec(w) + problem.linear)[cd])
    return None, max_iter


def solve_frozen_bound(problem: StepProblem, g, w0=None, tol=1e-10, eps_schedule=EPS_SCHEDULE,
                       max_newton=100, xi0=None) -> ViSolution:
    """Minimize ``J`` for fixed nodal bounds ``g``.

    The stopping test is ``residual <= tol * max(1, ||c||_*)`` in the dual
    norm of the Gram matrix. When both ``w0`` and a friction-force guess
    ``xi0`` are given, an active-set pass is tried first and the
    continuation runs only if it fails to reach the tolerance.
    """
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise ValueError("friction bounds must be nonnegative")
    cd = problem.contact.dofs
    wg = problem.contact.weights * g
    scale = problem.velocity_scale
    tol_abs = tol * max(1.0, problem.dual_norm(problem.linear))
    w = np.zeros(problem.n) if w0 is None else np.array(w0, dtype=float)

    if not np.any(wg > 0):
        w = problem.operator.solve(-problem.linear)
        res, traction, stick = kkt_residual(problem, g, w)
        return ViSolution(w, traction, g, res, stick, newton_iterations=[1], polished=True)

    if w0 is not None and xi0 is not None:
        warm, its = _active_set_polish(problem, wg, w, np.clip(xi0, -wg, wg))
        if warm is not None:
            res, traction, stick = kkt_residual(problem, g, warm)
            if res <= tol_abs:
                return ViSolution(warm, traction, g, res, stick, newton_iterations=[its], polished=True)

    newton_counts, objective_log = [], []
    eps = eps_schedule[0] * scale
    failure = None
    for eps_k in eps_schedule:
        eps = eps_k * scale
        log_k = [problem.objective(w, g, eps)]
        try:
            w, its, _ = _newton_stage(problem, wg, w, eps, tol_abs, max_newton, log_k)
        except NewtonConvergenceError as exc:
            failure = exc
            newton_counts.append(max_newton)
            objective_log.append(log_k)
            break
        newton_counts.append(its)
        objective_log.append(log_k)

    xi = wg * RegularizedAbs(eps).derivative(w[cd])
    polished, its = _active_set_polish(problem, wg, w, xi)
    if polished is not None:
        newton_counts.append(its)
        res_p, _, _ = kkt_residual(problem, g, polished)
        res_w, _, _ = kkt_residual(problem, g, w)
        if res_p <= max(res_w, tol_abs):
            w = polished
    res, traction, stick = kkt_residual(problem, g, w)
    if res > tol_abs:
        if failure is not None:
            raise failure
        raise NewtonConvergenceError("frozen-bound solve did not reach the KKT tolerance", res)
    return ViSolution(w, traction, g, res, stick, newton_iterations=newton_counts,
                      objective_history=objective_log, polished=polished is not None and w is polished)


# slip-dependent step ------------------------------------------------------

def solve_step(problem: StepProblem, w_init=None, tol=1e-10, max_outer=100, gate_policy="warn",
               acceleration=None, inner_tol=None, **inner) -> ViSolution:
    """Picard iteration on the friction bound, each pass a frozen-bound solve.

    Stops when ``||w^k - w^(k-1)||_V <= tol * max(1, ||w^k||_V)`` and, once
    two increments are known, also ``inc q / (1 - q)`` (the error estimate
    of a contraction with factor ``q``, the larger of the last two increment
    ratios) is below the same bound. The returned ``outer_iterations`` counts
    corrections after the initial solve. ``acceleration="anderson"`` enables
    depth-3 Anderson mixing.
    """
    gate = check_problem_gate(problem)
    if not gate.ok:
        msg = (f"Lipschitz constant L_r={gate.lipschitz:.6g} is not below the uniqueness "
               f"threshold Z0={gate.Z0:.6g}")
        if gate_policy == "abort":
            raise GateViolation(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    inner_tol = tol if inner_tol is None else inner_tol
    w_prev = np.zeros(problem.n) if w_init is None else np.array(w_init, dtype=float)
    sol = solve_frozen_bound(problem, problem.bounds_at(w_prev), w0=w_prev, tol=inner_tol, **inner)
    newton = list(sol.newton_iterations)
    increments = []
    hist_x, hist_f = [], []
    for k in range(1, max_outer + 1):
        w_in = sol.w
        new = solve_frozen_bound(problem, problem.bounds_at(w_in), w0=w_in, tol=inner_tol,
                                 xi0=-sol.traction, **inner)
        newton += new.newton_iterations
        w_next = new.w
        if acceleration == "anderson":
            w_next = _anderson(hist_x, hist_f, w_in, new.w)
            if w_next is not new.w:
                new = solve_frozen_bound(problem, problem.bounds_at(w_next), w0=w_next, tol=inner_tol, **inner)
                newton += new.newton_iterations
        inc = problem.norm(new.w - sol.w)
        increments.append(inc)
        sol = new
        bound = tol * max(1.0, problem.norm(sol.w))
        if inc <= bound and _error_estimate(increments) <= bound:
            sol.outer_iterations = k
            sol.newton_iterations = newton
            sol.increments = increments
            return sol
    raise OuterIterationError(f"Picard iteration did not converge in {max_outer} corrections", increments)


def _error_estimate(increments) -> float:
    inc = increments[-1]
    if len(increments) < 2 or inc == 0.0:
        return 0.0
    prev = [increments[-1 - j] for j in (1, 2) if len(increments) > j]
    q = max(min(increments[-j] / p, 0.99) if p > 0 else 0.0
            for j, p in zip((1, 2), prev))
    return inc * q / (1.0 - q)


def _anderson(hist_x, hist_f, x, gx, depth=3):
    hist_x.append(x.copy())
    hist_f.append(gx - x)
    if len(hist_x) > depth + 1:
        hist_x.pop(0)
        hist_f.pop(0)
    if len(hist_f) < 2:
        return gx
    dF = np.column_stack([hist_f[i + 1] - hist_f[i] for i in range(len(hist_f) - 1)])
    dX = np.column_stack([hist_x[i + 1] - hist_x[i] for i in range(len(hist_x) - 1)])
    gamma, *_ = np.linalg.lstsq(dF, hist_f[-1], rcond=None)
    return gx - (dX + dF) @ gamma
