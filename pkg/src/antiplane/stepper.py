"""Time stepping of the coupled velocity / potential / temperature system.

Each step solves the friction VI for the velocity with the potential
eliminated exactly (``phi = A_beta^{-1}(A_e u + q)``) and the temperature
lagged, then updates ``u``, ``phi`` and ``theta``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import assembly
from .assembly import AssembledOperators, BoundaryData
from .friction import ContactSet, FrictionLaw
from .spaces import NodalField, estimate_trace_constant
from .vi_solver import SchurOperator, SolverConfig, SolverError, StepProblem, check_gate

log = logging.getLogger(__name__)

THETA_COUPLINGS = ("lagged", "iterate")


class StepError(RuntimeError):
    """A sub-solver failed; carries the step index and time."""

    def __init__(self, step, t, cause):
        super().__init__(f"step {step} (t={t:.6g}): {cause}")
        self.step = step
        self.t = t
        self.cause = cause


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("final time T must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("step count N must be an integer >= 1")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)


@dataclass
class SystemState:
    t: float
    u: NodalField
    phi: NodalField
    theta: NodalField
    w: NodalField
    step: int = 0
    info: dict = field(default_factory=dict)


class CoupledStepper:
    """Holds the assembled operators and factorizations shared by all steps.

    ``thermal_mass`` selects the matrix multiplying the temperature rate:
    ``"l2"`` (the mass matrix, default) or ``"gram"`` (the gradient Gram matrix
    of ``E``).
    """

    def __init__(self, ops: AssembledOperators, data: BoundaryData, law: FrictionLaw,
                 solver: SolverConfig | None = None, trace_constant: float | None = None,
                 theta_coupling: str = "lagged", coupling_tol: float = 1e-10,
                 max_coupling: int = 50, thermal_mass: str = "l2"):
        if theta_coupling not in THETA_COUPLINGS:
            raise ValueError(f"theta_coupling must be one of {THETA_COUPLINGS}")
        if thermal_mass not in ("l2", "gram"):
            raise ValueError("thermal_mass must be 'l2' or 'gram'")
        self.ops = ops
        self.data = data
        self.law = law
        self.solver = SolverConfig() if solver is None else solver
        self.theta_coupling = theta_coupling
        self.coupling_tol = coupling_tol
        self.max_coupling = max_coupling
        self.thermal_mass = thermal_mass
        self.contact = ContactSet.of(ops.V)
        self.trace_constant = (estimate_trace_constant(ops.V, lumped=True)
                               if trace_constant is None else float(trace_constant))
        self.alpha_star = ops.material.alpha_star
        self.gate = check_gate(self.alpha_star, self.trace_constant, law.lipschitz)

    # factorizations
    @cached_property
    def beta_lu(self):
        try:
            return spla.splu(self.ops.A_beta.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"permittivity matrix is singular: {exc}") from exc

    @property
    def G_E(self):
        return self.ops.mass_E if self.thermal_mass == "l2" else self.ops.gram_E

    def _thermal_lu(self, dt):
        cache = self.__dict__.setdefault("_thermal_cache", {})
        if dt not in cache:
            cache[dt] = spla.splu((self.G_E + dt * self.ops.K_tilde).tocsc())
        return cache[dt]

    @property
    def heat(self):
        return self.law.heat_callable

    # single operations
    def q_vec(self, t):
        return assembly.assemble_load_q(self.ops.mesh, self.ops.W, self.data, t)

    def solve_potential(self, u, t) -> NodalField:
        """``A_beta phi = A_e u + q(t)``."""
        uv = u.values if isinstance(u, NodalField) else np.asarray(u, dtype=float)
        phi = self.beta_lu.solve(self.ops.A_e @ uv + self.q_vec(t))
        return NodalField(self.ops.W, phi, "V")

    def potential_residual(self, state: SystemState) -> float:
        ops = self.ops
        r = ops.A_beta @ state.phi.values - ops.A_e @ state.u.values - self.q_vec(state.t)
        return float(np.linalg.norm(r))

    def initialize(self, u0: NodalField, theta0: NodalField, phi0: NodalField | None = None,
                   t0: float = 0.0) -> SystemState:
        """State at ``t0``; the potential is computed from ``u0`` and ``q(t0)``.

        A supplied ``phi0`` is not used, only compared (``info["phi0_mismatch"]``).
        """
        ops = self.ops
        if u0.space is not ops.V or theta0.space is not ops.E:
            raise ValueError("u0 must live on V and theta0 on E")
        phi = self.solve_potential(u0, t0)
        info = {}
        if phi0 is not None:
            info["phi0_mismatch"] = ops.W.norm(phi0.values - phi.values)
            if info["phi0_mismatch"] > 1e-10 * max(1.0, ops.W.norm(phi.values)):
                log.warning("supplied initial potential differs from the computed one by %.3e",
                            info["phi0_mismatch"])
        return SystemState(t0, NodalField(ops.V, u0.values.copy(), u0.unit), phi,
                           NodalField(ops.E, theta0.values.copy(), theta0.unit), ops.V.zeros(), 0, info)

    def build_step_problem(self, state: SystemState, t_next: float, dt: float, theta=None) -> StepProblem:
        """Velocity problem for ``u = u_n + dt w``.

        ``B_step = A_alpha + dt (A_mu + A_e^T A_beta^{-1} A_e)`` and the linear
        term collects ``A_eff u_n``, the charge load, ``A_M theta`` and ``-f``.
        """
        ops = self.ops
        theta = state.theta.values if theta is None else theta
        op = SchurOperator(ops.A_alpha + dt * ops.A_mu, ops.A_e, ops.A_beta, dt, D_lu=self.beta_lu,
                           iterative_threshold=self.solver.iterative_threshold)
        un = state.u.values
        f = assembly.assemble_load_f(ops.mesh, ops.V, self.data, t_next)
        phi_u = self.beta_lu.solve(ops.A_e @ un + self.q_vec(t_next))
        linear = ops.A_mu @ un + ops.A_e.T @ phi_u + ops.A_M @ theta - f
        return StepProblem(op, linear, self.contact, self.law, self.alpha_star, self.trace_constant,
                           ops.gram_V, self.solver.velocity_scale)

    def thermal_rhs(self, w, t):
        """``M~ w + P(t)`` on ``E``."""
        ops = self.ops
        return (assembly.apply_Mtilde(ops, w, self.heat)
                + assembly.assemble_thermal_source(ops.mesh, ops.E, ops.material, self.data, t))

    def step_temperature_be(self, theta_n, w, t_next, dt) -> NodalField:
        """``(G + dt K~) theta_{n+1} = G theta_n + dt (M~ w + P(t_{n+1}))``."""
        th = theta_n.values if isinstance(theta_n, NodalField) else np.asarray(theta_n, dtype=float)
        rhs = self.G_E @ th + dt * self.thermal_rhs(w, t_next)
        return NodalField(self.ops.E, self._thermal_lu(dt).solve(rhs), "K")

    def temperature_expkernel(self, w_history, times, theta0, dense_threshold=500) -> NodalField:
        """Variation-of-constants temperature at ``times[-1]``.

        ``w_history[k]`` is the velocity on the slab ``(times[k], times[k+1]]``.
        On each slab the source ``G^{-1}(M~ w + P)`` is sampled at the left
        endpoint and the kernel ``exp(-(t - s) G^{-1} K~)`` is integrated
        exactly, so the update is ``E theta + Phi g`` with
        ``E = exp(-dt A)`` and ``Phi = int_0^dt exp(-s A) ds``.
        """
        ops = self.ops
        n = ops.E.n
        if n > dense_threshold:
            raise ValueError(f"E has {n} free dofs, above the dense threshold {dense_threshold}")
        G = self.G_E.toarray()
        A = np.linalg.solve(G, ops.K_tilde.toarray())
        th = np.array(theta0.values if isinstance(theta0, NodalField) else theta0, dtype=float)
        cache = {}
        times = np.asarray(times, dtype=float)
        for k in range(len(times) - 1):
            dt = times[k + 1] - times[k]
            key = round(dt, 15)
            if key not in cache:
                # expm of [[-dt A, dt I], [0, 0]] holds E and Phi in its top blocks
                aug = np.zeros((2 * n, 2 * n))
                aug[:n, :n] = -dt * A
                aug[:n, n:] = dt * np.eye(n)
                big = sla.expm(aug)
                cache[key] = (big[:n, :n], big[:n, n:])
            E, Phi = cache[key]
            g = np.linalg.solve(G, self.thermal_rhs(w_history[k], times[k]))
            th = E @ th + Phi @ g
        return NodalField(ops.E, th, "K")

    # stepping
    def _solve_velocity(self, state, t_next, dt, theta):
        problem = self.build_step_problem(state, t_next, dt, theta)
        return problem, self.solver.solve(problem, w_init=state.w.values)

    def advance(self, state: SystemState, dt: float) -> SystemState:
        ops = self.ops
        t_next = state.t + dt
        step = state.step + 1
        try:
            problem, sol = self._solve_velocity(state, t_next, dt, state.theta.values)
            theta = self.step_temperature_be(state.theta, sol.w, t_next, dt)
            coupling_its = 0
            if self.theta_coupling == "iterate":
                for coupling_its in range(1, self.max_coupling + 1):
                    problem, sol = self._solve_velocity(state, t_next, dt, theta.values)
                    new = self.step_temperature_be(state.theta, sol.w, t_next, dt)
                    diff = ops.E.norm(new.values - theta.values)
                    theta = new
                    if diff <= self.coupling_tol * max(1.0, ops.E.norm(theta.values)):
                        break
                else:
                    raise SolverError(f"temperature coupling did not converge in {self.max_coupling} passes")
            u = NodalField(ops.V, state.u.values + dt * sol.w, "m")
            phi = self.solve_potential(u, t_next)
        except (SolverError, np.linalg.LinAlgError, RuntimeError) as exc:
            if isinstance(exc, StepError):
                raise
            raise StepError(step, t_next, exc) from exc
        info = {
            "outer_iterations": sol.outer_iterations,
            "newton_iterations": sol.total_newton,
            "residual": sol.residual,
            "stick": int(np.sum(sol.stick)),
            "slip": int(np.sum(~sol.stick)),
            "max_traction": (float(np.max(np.abs(sol.traction) / self.contact.weights))
                             if sol.traction.size else 0.0),
            "gate_margin": self.gate.margin,
            "coupling_iterations": coupling_its,
        }
        return SystemState(t_next, u, phi, theta, NodalField(ops.V, sol.w, "m/s"), step, info)

    def run(self, state: SystemState, grid: TimeGrid, callback=None):
        """Advance ``grid.N`` steps; ``callback(state)`` sees every new state."""
        states = [state]
        for _ in range(grid.N):
            state = self.advance(state, grid.dt)
            states.append(state)
            if callback is not None:
                callback(state)
        return states


def zero_state(stepper: CoupledStepper) -> SystemState:
    ops = stepper.ops
    return stepper.initialize(ops.V.zeros(), ops.E.zeros())


def decoupling_defect(stepper: CoupledStepper, state: SystemState) -> float:
    """Relative W-norm of ``phi - (e/beta) u - phi_q`` for constant ``e``, ``beta``.

    Requires ``V`` and ``W`` to constrain the same nodes.
    """
    ops = stepper.ops
    if not np.array_equal(ops.V.free_dofs, ops.W.free_dofs):
        raise ValueError("decoupling identity needs matching V and W constraints")
    e, beta = ops.material.e, ops.material.beta
    if np.ptp(e) != 0 or np.ptp(beta) != 0:
        raise ValueError("decoupling identity needs constant e and beta")
    phi_q = stepper.beta_lu.solve(stepper.q_vec(state.t))
    defect = state.phi.values - (e[0] / beta[0]) * state.u.values - phi_q
    return ops.W.norm(defect) / max(ops.W.norm(state.phi.values), 1e-300)
