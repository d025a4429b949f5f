"""Parameter sweeps and measurements on finite element problems."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..assembly import BoundaryData, MaterialField, assemble_forms
from ..friction import FrictionLaw, check_four_term_bound
from ..mesh import generate_rect_mesh
from ..spaces import estimate_trace_constant
from ..stepper import CoupledStepper, TimeGrid
from ..vi_solver import OuterIterationError, SolverConfig, SolverError, check_gate

DEFAULT_TAGGING = "bottom=G3,top=G1:Ga,left=G2:Gb,right=G2:Gb"


def square(nx: int, tagging: str = DEFAULT_TAGGING):
    return generate_rect_mesh(1.0, 1.0, nx, nx, tagging)


def varied_material(mesh, seed: int = 0, **overrides) -> MaterialField:
    """Elementwise random coefficients with a symmetric positive definite ``K``."""
    rng = np.random.default_rng(seed)
    m = mesh.n_triangles
    A = rng.uniform(-0.3, 0.3, (m, 2, 2))
    K = np.einsum("mij,mkj->mik", A, A) + rng.uniform(0.5, 1.5, (m, 1, 1)) * np.eye(2)
    K[:, 1, 0] = K[:, 0, 1]
    n3 = int(mesh.edge_mask("G3").sum())
    kw = dict(alpha=rng.uniform(0.5, 2.0, m), mu=rng.uniform(0.5, 2.0, m), e=rng.uniform(-1.0, 1.0, m),
              beta=rng.uniform(0.5, 2.0, m), Me=rng.uniform(-0.5, 0.5, (m, 2)), K=K,
              Ke=rng.uniform(0.5, 2.0, n3))
    kw.update(overrides)
    return MaterialField(**kw)


# structural invariants ------------------------------------------------------

@dataclass
class InvariantReport:
    symmetric: dict
    ellipticity_min_ratio: dict
    samples: int
    slack: float = 1e-12

    @property
    def passed(self) -> bool:
        return all(self.symmetric.values()) and all(
            r >= 1.0 - self.slack for r in self.ellipticity_min_ratio.values())

    def summary(self) -> str:
        lines = [f"  symmetric {k}: {v}" for k, v in self.symmetric.items()]
        lines += [f"  min ratio {k}: {v:.15f}" for k, v in self.ellipticity_min_ratio.items()]
        return "\n".join(lines)


def _exactly_symmetric(A) -> bool:
    return (A != A.T).nnz == 0


def structural_invariants(nx: int = 16, samples: int = 1000, seed: int = 0) -> InvariantReport:
    """Exact symmetry and the two coercivity bounds over random vectors.

    Ratios are ``x.A_alpha x / (alpha* x.G_V x)`` and ``x.K~ x / (m_K x.G_E x)``.
    """
    mesh = square(nx)
    mat = varied_material(mesh, seed)
    ops = assemble_forms(mesh, mat)
    sym = {name: _exactly_symmetric(getattr(ops, name))
           for name in ("A_alpha", "A_mu", "A_beta", "gram_V", "K_tilde")}
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((samples, ops.V.n))
    Y = rng.standard_normal((samples, ops.E.n))
    ra = np.einsum("ki,ki->k", X, (ops.A_alpha @ X.T).T) / (mat.alpha_star * np.einsum("ki,ki->k", X, (ops.gram_V @ X.T).T))
    rk = np.einsum("ki,ki->k", Y, (ops.K_tilde @ Y.T).T) / (mat.m_K * np.einsum("ki,ki->k", Y, (ops.gram_E @ Y.T).T))
    return InvariantReport(sym, {"A_alpha": float(ra.min()), "K_tilde": float(rk.min())}, samples)


def four_term_study(nx: int = 16, samples: int = 1000, seed: int = 0, lipschitz: float = 0.7):
    """Four-term friction bound with the discrete (lumped) trace constant."""
    mesh = square(nx)
    mat = MaterialField.uniform(mesh)
    ops = assemble_forms(mesh, mat)
    c = estimate_trace_constant(ops.V, lumped=True)
    law = FrictionLaw.affine_saturating(1.0, -lipschitz)
    return check_four_term_bound(ops.V, law, samples, c, rng=seed)


# gate study -------------------------------------------------------------------

@dataclass
class GatePoint:
    family: str
    instance: int
    L_r: float
    Z0: float
    bound: float
    converged: bool
    outer_iterations: int
    max_ratio: float
    uniqueness_gap: float | None
    slip_nodes: int


@dataclass
class GateStudyReport:
    points: list = field(default_factory=list)
    tol: float = 1e-10
    slack: float = 0.1
    guaranteed_fraction: float = 0.9

    def guaranteed(self):
        return [p for p in self.points if p.L_r <= self.guaranteed_fraction * p.Z0 * (1 + 1e-12)]

    @property
    def passed(self) -> bool:
        for p in self.guaranteed():
            if not p.converged or p.max_ratio > p.bound + self.slack:
                return False
            if p.uniqueness_gap is not None and p.uniqueness_gap > 10 * self.tol:
                return False
        return True

    def summary(self) -> str:
        lines = ["family       inst  L_r/Z0  conv  outer  max_ratio  bound   uniq_gap   slip"]
        for p in self.points:
            gap = "-" if p.uniqueness_gap is None else f"{p.uniqueness_gap:.2e}"
            lines.append(f"{p.family:12s} {p.instance:4d}  {p.L_r / p.Z0:6.2f}  {str(p.converged):5s} "
                         f"{p.outer_iterations:5d}  {p.max_ratio:9.4f}  {p.bound:6.3f}  {gap:>9s}  {p.slip_nodes:4d}")
        return "\n".join(lines)


def _law(family, L, r0=1.0):
    if family == "affine":
        return FrictionLaw.affine_saturating(r0, -L)       # slip weakening, clipped at 0
    if family == "exponential":
        r_max = 0.25 * r0
        return FrictionLaw.exponential(r0, r_max, L / abs(r0 - r_max))
    if family == "strengthening":
        return FrictionLaw.affine_saturating(r0, L)
    raise ValueError(f"unknown gate family {family!r}")


def gate_problem(nx: int, L: float, family: str, instance: int, dt: float = 0.1):
    """Step problem on the square with a random load that drives partial slip."""
    rng = np.random.default_rng(1000 + instance)
    mesh = square(nx)
    mat = MaterialField.uniform(mesh, alpha=float(rng.uniform(0.5, 2.0)), mu=1.0,
                                e=float(rng.uniform(0.0, 0.5)), beta=1.0)
    amp, k, shift = rng.uniform(2.0, 6.0), rng.integers(1, 3), rng.uniform(0, 1)
    data = BoundaryData(f0=lambda x, y, t: amp * np.cos(k * np.pi * (x + shift)) * (1 - y),
                        f2=lambda x, y, t: 0.5 * amp * np.ones_like(x))
    ops = assemble_forms(mesh, mat)
    stepper = CoupledStepper(ops, data, _law(family, L), SolverConfig())
    state = stepper.initialize(ops.V.zeros(), ops.E.zeros())
    return stepper, stepper.build_step_problem(state, dt, dt)


def gate_study(fractions=(0.0, 0.25, 0.5, 0.75, 0.9, 1.5, 2.0), families=("affine", "exponential", "strengthening"),
               instances: int = 3, nx: int = 8, tol: float = 1e-10, max_outer: int = 200,
               seed: int = 7) -> GateStudyReport:
    """Sweep ``L_r`` as fractions of ``Z0`` over a family of step problems.

    Inside the guarantee (``L_r <= 0.9 Z0``) the run records convergence, the
    worst contraction ratio among increments above ``1e-9`` relative, and
    the gap between solutions from two different initial guesses.
    """
    report = GateStudyReport(tol=tol)
    rng = np.random.default_rng(seed)
    for family in families:
        for inst in range(instances):
            # Z0 depends on alpha* of the instance; probe it with L = 0
            stepper0, _ = gate_problem(nx, 0.0, family, inst)
            Z0 = stepper0.gate.Z0
            for frac in fractions:
                L = frac * Z0
                stepper, prob = gate_problem(nx, L, family, inst)
                bound = stepper.trace_constant ** 2 * L / stepper.alpha_star
                try:
                    sol = _quiet_solve(prob, None, tol, max_outer)
                except (OuterIterationError, SolverError):
                    report.points.append(GatePoint(family, inst, L, Z0, bound, False, max_outer,
                                                   np.inf, None, 0))
                    continue
                scale = max(1.0, prob.norm(sol.w))
                inc = sol.increments
                ratios = [inc[k] / inc[k - 1] for k in range(1, len(inc)) if inc[k - 1] > 1e-9 * scale]
                gap = None
                if frac <= report.guaranteed_fraction:
                    w_alt = rng.standard_normal(prob.n) * 5.0 * scale
                    try:
                        alt = _quiet_solve(prob, w_alt, tol, max_outer)
                        gap = prob.norm(alt.w - sol.w)
                    except (OuterIterationError, SolverError):
                        gap = np.inf
                report.points.append(GatePoint(family, inst, L, Z0, bound, True, sol.outer_iterations,
                                               max(ratios, default=0.0), gap, int(np.sum(~sol.stick))))
    return report


def _quiet_solve(prob, w_init, tol, max_outer):
    import warnings

    from ..vi_solver import solve_step
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return solve_step(prob, w_init=w_init, tol=tol, max_outer=max_outer)


# constant-bound reduction --------------------------------------------------------

@dataclass
class TrescaCase:
    name: str
    outer_iterations: int
    frictionless_error: float


@dataclass
class TrescaReport:
    cases: list = field(default_factory=list)
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return all(c.outer_iterations == 1 and c.frictionless_error <= self.tol for c in self.cases)

    def summary(self) -> str:
        return "\n".join(f"  {c.name:22s} outer {c.outer_iterations}  frictionless rel. error {c.frictionless_error:.2e}"
                         for c in self.cases)


def tresca_reduction(instances: int = 3, nx: int = 8, tol: float = 1e-10) -> TrescaReport:
    """Constant bounds need one Picard correction; ``r = 0`` is the plain linear solve.

    Runs over the finite element gate problems at ``L_r = 0`` and the oracle
    surrogates (all Tresca). The frictionless reference is a dense solve of
    ``B w = -c``; the error is relative in the problem norm.
    """
    from ..vi_solver import solve_step
    from .oracles import bundled_surrogates

    problems = [(f"fem-{i}", gate_problem(nx, 0.0, "affine", i)[1]) for i in range(instances)]
    problems += [(s.name, s.problem) for s in bundled_surrogates()]
    report = TrescaReport()
    for name, prob in problems:
        prob = replace(prob, law=FrictionLaw.tresca(max(prob.law.r0, 0.5)))
        sol = solve_step(prob, tol=tol)
        free = replace(prob, law=FrictionLaw.tresca(0.0))
        w_free = solve_step(free, tol=tol).w
        w_lin = np.linalg.solve(free.operator.dense(), -free.linear)
        err = free.norm(w_free - w_lin) / max(free.norm(w_lin), 1e-300)
        report.cases.append(TrescaCase(name, sol.outer_iterations, err))
    return report


# temperature integrators --------------------------------------------------------

def _thermal_setup(nx: int = 6):
    mesh = square(nx)
    mat = MaterialField.uniform(mesh, alpha=1.0, mu=1.0, e=0.3, beta=1.0, Me=(0.4, -0.3),
                                K=np.array([[1.0, 0.1], [0.1, 0.7]]), Ke=1.5)
    data = BoundaryData(f0=lambda x, y, t: 2.0 * np.sin(np.pi * t) * np.cos(np.pi * x) * (1 - y),
                        f2=lambda x, y, t: np.full_like(x, np.sin(2.0 * t)),
                        p=lambda x, y, t: np.cos(t) * x * (1 - x),
                        theta_R=lambda x, y, t: np.full_like(x, 0.5 * t))
    ops = assemble_forms(mesh, mat)
    return ops, data


@dataclass
class CrossCheckReport:
    steps: list
    differences: list
    orders: list
    threshold: float = 0.9

    @property
    def passed(self) -> bool:
        return len(self.orders) > 0 and all(o >= self.threshold for o in self.orders)


def temperature_crosscheck(steps=(8, 16, 32, 64), T: float = 1.0, nx: int = 6,
                           law: FrictionLaw | None = None) -> CrossCheckReport:
    """Backward Euler against the exponential-kernel path on the same velocity history.

    Reports the relative E-norm difference at ``T`` and its observed order
    over successive halvings of the step.
    """
    ops, data = _thermal_setup(nx)
    law = FrictionLaw.tresca(0.3, heat="frictional") if law is None else law
    diffs = []
    for N in steps:
        stepper = CoupledStepper(ops, data, law, SolverConfig())
        th0 = ops.E.interpolate(lambda x, y, t: x * (1 - x) * (1 - y))
        state = stepper.initialize(ops.V.zeros(), th0)
        grid = TimeGrid(T, N)
        history = []
        for _ in range(N):
            state = stepper.advance(state, grid.dt)
            history.append(state.w.values)
        th_exp = stepper.temperature_expkernel(history, grid.times, th0)
        diffs.append(ops.E.norm(state.theta.values - th_exp.values) / ops.E.norm(th_exp.values))
    orders = [float(np.log2(diffs[k] / diffs[k + 1])) for k in range(len(diffs) - 1)]
    return CrossCheckReport(list(steps), diffs, orders)


def temporal_self_convergence(steps=(8, 16, 32, 64), T: float = 0.5, nx: int = 6):
    """``||u_N(T) - u_2N(T)||_V`` over halvings and the observed orders."""
    ops, data = _thermal_setup(nx)
    law = FrictionLaw.tresca(0.3)
    finals = []
    for N in steps:
        stepper = CoupledStepper(ops, data, law, SolverConfig())
        state = stepper.initialize(ops.V.zeros(), ops.E.zeros())
        grid = TimeGrid(T, N)
        for _ in range(N):
            state = stepper.advance(state, grid.dt)
        finals.append(state.u.values)
    diffs = [ops.V.norm(finals[k] - finals[k + 1]) for k in range(len(finals) - 1)]
    orders = [float(np.log2(diffs[k] / diffs[k + 1])) for k in range(len(diffs) - 1)]
    return diffs, orders


# Lemma-2 style stability ---------------------------------------------------------

def lemma2_pair(bump: float = 1.0):
    """Two data sets differing by a smooth bump in the volume force."""
    base = dict(f0=lambda x, y, t: np.full_like(x, 1.0 + t),
                f2=lambda x, y, t: np.full_like(x, 0.5 * t),
                p=lambda x, y, t: np.zeros_like(x),
                theta_R=lambda x, y, t: np.zeros_like(x))
    d1 = BoundaryData(**base)

    def f0_b(x, y, t):
        return base["f0"](x, y, t) + bump * t * np.exp(-((x - 0.5) ** 2 + (y - 0.3) ** 2) / 0.02)

    d2 = BoundaryData(**{**base, "f0": f0_b})
    return d1, d2


@dataclass
class Lemma2Report:
    nx: list
    ratios: list
    lhs: list
    rhs: list

    @property
    def variation(self) -> float:
        r = np.asarray(self.ratios, dtype=float)
        if np.all(r == 0.0):
            return 1.0
        return float(r.max() / r.min()) if r.min() > 0 else np.inf

    @property
    def passed(self) -> bool:
        return bool(np.all(np.isfinite(self.ratios)) and self.variation <= 2.0)


def lemma2_ratio(nx: int, pair, T: float = 0.5, N: int = 10, floor: float = 1e-14):
    """``sup_t ||theta1 - theta2||_E / int_0^t ||w1 - w2||_V^2`` for one mesh.

    Returns ``(ratio, lhs_history, rhs_history)``; a zero left side gives 0.
    """
    d1, d2 = pair
    mesh = square(nx)
    mat = MaterialField.uniform(mesh, alpha=1.0, mu=1.0, e=0.2, beta=1.0, Me=(0.5, 0.3), Ke=1.0)
    ops = assemble_forms(mesh, mat)
    law = FrictionLaw.tresca(0.5, heat="frictional")
    s1 = CoupledStepper(ops, d1, law, SolverConfig())
    s2 = CoupledStepper(ops, d2, law, SolverConfig())
    a = s1.initialize(ops.V.zeros(), ops.E.zeros())
    b = s2.initialize(ops.V.zeros(), ops.E.zeros())
    grid = TimeGrid(T, N)
    lhs, rhs = [], []
    acc = 0.0
    ratio = 0.0
    for _ in range(N):
        a = s1.advance(a, grid.dt)
        b = s2.advance(b, grid.dt)
        acc += grid.dt * ops.V.norm(a.w.values - b.w.values) ** 2
        left = ops.E.norm(a.theta.values - b.theta.values)
        lhs.append(left)
        rhs.append(acc)
        if left > 0.0:
            ratio = max(ratio, left / max(acc, floor))
    return ratio, lhs, rhs


def lemma2_stability(levels=(8, 16), pair=None, T: float = 0.5, N: int = 10) -> Lemma2Report:
    """Measured constant on successive meshes with the time grid held fixed."""
    pair = lemma2_pair() if pair is None else pair
    ratios, lhs, rhs = [], [], []
    for nx in levels:
        r, l_, r_ = lemma2_ratio(nx, pair, T, N)
        ratios.append(r)
        lhs.append(l_)
        rhs.append(r_)
    return Lemma2Report(list(levels), ratios, lhs, rhs)


def gate_of(ops, law) -> tuple:
    c = estimate_trace_constant(ops.V, lumped=True)
    return c, check_gate(ops.material.alpha_star, c, law.lipschitz)
