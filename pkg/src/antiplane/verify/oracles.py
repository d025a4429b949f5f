"""Independent solvers for the frozen-bound friction problem.

``uzawa_oracle`` iterates on the contact multipliers with projection onto the
admissible interval; ``brute_force_oracle`` scans a grid (with zooming) for
problems of at most three unknowns. Both work on a dense copy of ``B``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ..friction import ContactSet, FrictionLaw
from ..vi_solver import (MatrixOperator, StepProblem, ViSolution, kkt_residual, natural_residual,
                         solve_frozen_bound)


class OracleError(RuntimeError):
    pass


def _dense(problem: StepProblem) -> np.ndarray:
    return problem.operator.dense()


def uzawa_oracle(problem: StepProblem, g, tol: float = 1e-10, rho: float | None = None,
                 max_iter: int = 500_000) -> ViSolution:
    """Projected multiplier ascent.

    With ``tau`` the traction per unit length, ``w = B^{-1}(-c - W tau)`` and
    ``tau <- clip(tau + rho w_c, -g, g)``. The default step is
    ``rho = alpha* / (2 max(1, c^2))``, which lies inside ``(0, 2 alpha*/c^2)``.
    Stops once the natural residual certifies ``||w - w*||_V <= tol / 2``.
    """
    B = _dense(problem)
    g = np.asarray(g, dtype=float)
    cd = problem.contact.dofs
    W = problem.contact.weights
    lam_B = np.linalg.eigvalsh(B)
    mu, L = lam_B[0], lam_B[-1]
    if not mu > 0:
        raise OracleError("B is not positive definite")
    if rho is None:
        rho = problem.alpha_star / (2.0 * max(1.0, problem.trace_constant ** 2))
    gram_scale = 1.0 if problem.gram is None else np.sqrt(np.linalg.eigvalsh(_gram_dense(problem))[-1])
    # ||w - w*|| <= (1 + L)/mu ||R(w)|| for the unit-step prox residual
    stop = 0.5 * tol * mu / ((1.0 + L) * gram_scale)
    chol = sla.cho_factor(B)
    tau = np.zeros(len(cd))
    for it in range(1, max_iter + 1):
        rhs = -problem.linear.copy()
        rhs[cd] -= W * tau
        w = sla.cho_solve(chol, rhs)
        if np.linalg.norm(natural_residual(problem, g, w)) <= stop:
            res, traction, stick = kkt_residual(problem, g, w)
            return ViSolution(w, traction, g, res, stick, newton_iterations=[it])
        tau = np.clip(tau + rho * w[cd], -g, g)
    raise OracleError(f"Uzawa iteration did not converge in {max_iter} iterations")


def _gram_dense(problem):
    G = problem.gram
    return G.toarray() if hasattr(G, "toarray") else np.asarray(G, dtype=float)


@dataclass
class BruteForceResult:
    w: np.ndarray
    resolution: float
    levels: int


def brute_force_oracle(problem: StepProblem, g, resolution: float = 1e-12, points: int = 41,
                       half_width: float | None = None, max_levels: int = 200) -> BruteForceResult:
    """Grid minimization of ``J`` for at most three unknowns.

    The first box is centred at the origin with ``half_width`` (default: the
    a priori bound ``2 ||c|| / lambda_min(B)``, padded). Each level rescans a
    window of four cells around the grid argmin; if the argmin hits the
    window edge the window is moved instead of shrunk. Objective differences
    are taken relative to the current centre to keep them accurate.
    """
    n = problem.n
    if n > 3:
        raise ValueError(f"brute force is limited to 3 unknowns, problem has {n}")
    B = _dense(problem)
    c = problem.linear
    g = np.asarray(g, dtype=float)
    cd = problem.contact.dofs
    wg = np.zeros(n)
    wg[cd] = problem.contact.weights * g
    mu = np.linalg.eigvalsh(B)[0]
    if half_width is None:
        half_width = 1.25 * 2.0 * np.linalg.norm(c) / mu + 1e-3
    center = np.zeros(n)
    R = float(half_width)
    offsets = np.linspace(-1.0, 1.0, points)
    mesh = np.stack(np.meshgrid(*([offsets] * n), indexing="ij"), axis=-1).reshape(-1, n)
    edge = np.any(np.abs(mesh) == 1.0, axis=1)
    for level in range(1, max_levels + 1):
        d = R * mesh
        # |center + d| - |center| = sign(center) d unless the entry crosses zero;
        # folding that into the linear term avoids cancellation near the minimizer
        sgn = np.sign(center)
        moved = center + d
        kink = np.where(np.sign(moved) == sgn, 0.0, np.abs(moved) - np.abs(center) - sgn * d)
        lin = B @ center + c + wg * sgn
        dJ = d @ lin + 0.5 * np.einsum("ki,ij,kj->k", d, B, d) + kink @ wg
        k = int(np.argmin(dJ))
        cell = 2.0 * R / (points - 1)
        if edge[k]:
            if level == 1:
                raise OracleError(f"minimizer on the boundary of the initial box (half width {R:.3e}); "
                                  "enlarge the box")
            center = center + d[k]
            continue
        center = center + d[k]
        if cell <= resolution:
            return BruteForceResult(center, cell, level)
        R = 4.0 * cell
    raise OracleError(f"brute force did not reach resolution {resolution:g} in {max_levels} levels")


# bundled surrogate set ----------------------------------------------------

@dataclass
class Surrogate:
    name: str
    problem: StepProblem
    g: np.ndarray
    expected: np.ndarray | None = None


def dense_problem(B, c, contact_dofs, weights, law: FrictionLaw) -> StepProblem:
    """Euclidean-normed problem with ``alpha* = lambda_min(B)`` and ``c = sqrt(max W)``."""
    B = np.asarray(B, dtype=float)
    contact = ContactSet(np.asarray(contact_dofs, dtype=np.int64), np.asarray(weights, dtype=float),
                         np.zeros(len(contact_dofs)), np.zeros(len(contact_dofs)))
    alpha = float(np.linalg.eigvalsh(B)[0])
    tc = float(np.sqrt(np.max(contact.weights))) if len(contact) else 0.0
    return StepProblem(MatrixOperator(B), np.asarray(c, dtype=float), contact, law, alpha, tc)


def closed_form_surrogates():
    """Hand-solved 1-3 unknown instances (KKT conditions solved on paper)."""
    cases = []

    def add(name, B, c, dofs, weights, r0, expected):
        law = FrictionLaw.tresca(r0)
        prob = dense_problem(B, c, dofs, weights, law)
        cases.append(Surrogate(name, prob, np.full(len(dofs), float(r0)), np.asarray(expected, dtype=float)))

    add("1dof-slip", [[2.0]], [-3.0], [0], [1.0], 1.0, [1.0])
    add("1dof-stick", [[2.0]], [-0.5], [0], [1.0], 1.0, [0.0])
    add("1dof-negative", [[4.0]], [6.0], [0], [0.5], 2.0, [-1.25])
    add("2dof-soft-threshold", [[2.0, 0.0], [0.0, 2.0]], [-3.0, 0.0], [0], [1.0], 1.0, [1.0, 0.0])
    add("2dof-coupled", [[2.0, -1.0], [-1.0, 2.0]], [-3.0, 1.0], [0], [1.0], 0.5, [4.0 / 3.0, 1.0 / 6.0])
    B3 = [[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]]
    add("3dof-frictionless", B3, [1.0, -2.0, 0.5], [0, 2], [1.0, 1.0], 0.0,
        np.linalg.solve(np.array(B3), -np.array([1.0, -2.0, 0.5])))
    w0 = 12.2 / 11.0
    add("3dof-stick-slip", B3, [-5.0, 0.2, 0.1], [0, 2], [1.0, 1.0], 1.0, [w0, -(w0 + 0.2) / 3.0, 0.0])
    return cases


def random_surrogates(count: int = 50, seed: int = 0, max_n: int = 30, n_contact: int = 5):
    """Random SPD problems with ``n_contact`` contact unknowns and a Tresca bound."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(n_contact, max_n + 1))
        Q = rng.standard_normal((n, n))
        B = Q @ Q.T / n + rng.uniform(0.5, 2.0) * np.eye(n)
        c = rng.standard_normal(n) * rng.uniform(0.5, 3.0)
        dofs = np.sort(rng.choice(n, n_contact, replace=False))
        weights = rng.uniform(0.2, 1.0, n_contact)
        r0 = float(rng.uniform(0.0, 2.0))
        law = FrictionLaw.tresca(r0)
        out.append(Surrogate(f"random-{k}", dense_problem(B, c, dofs, weights, law),
                             np.full(n_contact, r0)))
    return out


def bundled_surrogates(random_count: int = 50, seed: int = 0):
    return closed_form_surrogates() + random_surrogates(random_count, seed)


@dataclass
class OracleComparison:
    name: str
    n: int
    ssn_vs_uzawa: float
    ssn_vs_brute: float | None
    ssn_vs_expected: float | None
    tol: float

    @property
    def passed(self) -> bool:
        vals = [v for v in (self.ssn_vs_uzawa, self.ssn_vs_brute, self.ssn_vs_expected) if v is not None]
        return all(v <= 10.0 * self.tol for v in vals)


def compare_oracles(case: Surrogate, tol: float = 1e-10) -> OracleComparison:
    prob = case.problem
    ssn = solve_frozen_bound(prob, case.g, tol=tol)
    uz = uzawa_oracle(prob, case.g, tol=tol)
    d_uz = prob.norm(ssn.w - uz.w)
    d_bf = None
    if prob.n <= 3:
        bf = brute_force_oracle(prob, case.g, resolution=tol / 10.0)
        d_bf = prob.norm(ssn.w - bf.w)
    d_ex = None if case.expected is None else prob.norm(ssn.w - case.expected)
    return OracleComparison(case.name, prob.n, d_uz, d_bf, d_ex, tol)
