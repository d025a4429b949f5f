"""Manufactured solutions and the spatial convergence study.

Every case lives on the unit square with contact at the bottom, clamping at
the top and traction sides. Friction is replaced by the traction ``f3`` that
the exact fields induce on the contact edge. All derived data are
hand-coded from closed-form derivatives of separable fields.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import fem
from ..assembly import BoundaryData, MaterialField, assemble_forms
from ..friction import FrictionLaw
from ..mesh import Mesh, generate_rect_mesh
from ..spaces import FeSpace
from ..stepper import CoupledStepper, TimeGrid
from ..vi_solver import SolverConfig

MMS_TAGGING = "bottom=G3,top=G1:Ga,left=G2:Gb,right=G2:Gb"
PI = np.pi


@dataclass(frozen=True)
class Separable:
    """``T(t) S(x, y)``; ``space`` returns ``(S, Sx, Sy, Sxx, Sxy, Syy)``."""

    time: Callable
    dtime: Callable
    space: Callable

    def parts(self, x, y, t, rate=False):
        T = self.dtime(t) if rate else self.time(t)
        return tuple(T * np.asarray(s, dtype=float) for s in self.space(x, y))


@dataclass(frozen=True)
class Field:
    """Sum of separable terms with value, gradient, Hessian and time rate."""

    terms: tuple = ()

    def _sum(self, x, y, t, rate):
        out = [np.zeros(np.broadcast(x, y).shape) for _ in range(6)]
        for term in self.terms:
            for k, p in enumerate(term.parts(x, y, t, rate)):
                out[k] = out[k] + p
        return out

    def value(self, x, y, t, rate=False):
        return self._sum(x, y, t, rate)[0]

    def grad(self, x, y, t, rate=False):
        s = self._sum(x, y, t, rate)
        return s[1], s[2]

    def hess(self, x, y, t, rate=False):
        s = self._sum(x, y, t, rate)
        return s[3], s[4], s[5]

    def laplacian(self, x, y, t, rate=False):
        xx, _, yy = self.hess(x, y, t, rate)
        return xx + yy

    def scaled(self, c) -> "Field":
        return Field(tuple(Separable(lambda t, T=s.time: c * T(t), lambda t, D=s.dtime: c * D(t), s.space)
                           for s in self.terms))

    def __add__(self, other: "Field") -> "Field":
        return Field(self.terms + other.terms)


ZERO = Field(())


@dataclass(frozen=True)
class Coefficients:
    alpha: float = 1.0
    mu: float = 1.0
    e: float = 0.0
    beta: float = 1.0
    Me: tuple = (0.0, 0.0)
    K: tuple = ((1.0, 0.0), (0.0, 1.0))
    Ke: float = 1.0

    def material(self, mesh: Mesh) -> MaterialField:
        return MaterialField.uniform(mesh, alpha=self.alpha, mu=self.mu, e=self.e, beta=self.beta,
                                     Me=self.Me, K=np.array(self.K), Ke=self.Ke)


def _normal(x, y):
    """Outward unit normal of the unit square at boundary points."""
    tol = 1e-12
    nx = np.where(np.abs(x - 1.0) < tol, 1.0, np.where(np.abs(x) < tol, -1.0, 0.0))
    ny = np.where(np.abs(y - 1.0) < tol, 1.0, np.where(np.abs(y) < tol, -1.0, 0.0))
    return nx, ny


@dataclass(frozen=True)
class MmsCase:
    """Exact ``u``, ``phi``, ``theta`` with the data they induce."""

    name: str
    u: Field
    phi: Field
    theta: Field
    coef: Coefficients = field(default_factory=Coefficients)

    # mechanical
    def f0(self, x, y, t):
        c = self.coef
        gx, gy = self.theta.grad(x, y, t)
        return -(c.alpha * self.u.laplacian(x, y, t, rate=True) + c.mu * self.u.laplacian(x, y, t)
                 + c.e * self.phi.laplacian(x, y, t)) + c.Me[0] * gx + c.Me[1] * gy

    def traction(self, x, y, t):
        """``alpha d_n u_t + mu d_n u + e d_n phi - theta Me.n``."""
        c = self.coef
        nx, ny = _normal(x, y)
        ux, uy = self.u.grad(x, y, t)
        vx, vy = self.u.grad(x, y, t, rate=True)
        px, py = self.phi.grad(x, y, t)
        dn = lambda gx, gy: gx * nx + gy * ny  # noqa: E731
        return (c.alpha * dn(vx, vy) + c.mu * dn(ux, uy) + c.e * dn(px, py)
                - self.theta.value(x, y, t) * (c.Me[0] * nx + c.Me[1] * ny))

    # electric
    def q0(self, x, y, t):
        c = self.coef
        return c.e * self.u.laplacian(x, y, t) - c.beta * self.phi.laplacian(x, y, t)

    def q2(self, x, y, t):
        """``beta d_n phi - e d_n u``; also the flux that must vanish on the contact edge."""
        c = self.coef
        nx, ny = _normal(x, y)
        ux, uy = self.u.grad(x, y, t)
        px, py = self.phi.grad(x, y, t)
        return c.beta * (px * nx + py * ny) - c.e * (ux * nx + uy * ny)

    # thermal
    def heat_flux_n(self, x, y, t):
        K = self.coef.K
        nx, ny = _normal(x, y)
        gx, gy = self.theta.grad(x, y, t)
        return (K[0][0] * gx + K[0][1] * gy) * nx + (K[1][0] * gx + K[1][1] * gy) * ny

    def p(self, x, y, t):
        K = self.coef.K
        c = self.coef
        xx, xy, yy = self.theta.hess(x, y, t)
        vx, vy = self.u.grad(x, y, t, rate=True)
        div_k = K[0][0] * xx + (K[0][1] + K[1][0]) * xy + K[1][1] * yy
        return self.theta.value(x, y, t, rate=True) - div_k + c.Me[0] * vx + c.Me[1] * vy

    def theta_R(self, x, y, t):
        return self.theta.value(x, y, t) + self.heat_flux_n(x, y, t) / self.coef.Ke

    def data(self) -> BoundaryData:
        return BoundaryData(f0=self.f0, f2=self.traction, q0=self.q0, q2=self.q2, p=self.p,
                            theta_R=self.theta_R, f3=self.traction)


# bundled cases ------------------------------------------------------------

def _lin(t):
    return t


def _one(t):
    return np.ones_like(np.asarray(t, dtype=float))


def _affine(t):
    return 1.0 + t


def _sp_x_1my(x, y):
    z = np.zeros_like(x)
    return x * (1 - y), 1 - y, -x, z, -np.ones_like(x), z


def _sp_x_1my2(x, y):
    z = np.zeros_like(x)
    return x * (1 - y * y), 1 - y * y, -2 * x * y, z, -2 * y, -2 * x


def _sp_bubble_x(x, y):
    # x(1-x)(1-y)
    z = np.zeros_like(x)
    return x * (1 - x) * (1 - y), (1 - 2 * x) * (1 - y), -x * (1 - x), -2 * (1 - y), -(1 - 2 * x), z


def _sp_sinsin(x, y):
    sx, cx, sy, cy = np.sin(PI * x), np.cos(PI * x), np.sin(PI * y), np.cos(PI * y)
    return sx * sy, PI * cx * sy, PI * sx * cy, -PI ** 2 * sx * sy, PI ** 2 * cx * cy, -PI ** 2 * sx * sy


def _sp_coscos_half(x, y):
    # cos(pi x) cos(pi y / 2): zero at y = 1, zero normal derivative at y = 0
    h = PI / 2
    cx, sx, cy, sy = np.cos(PI * x), np.sin(PI * x), np.cos(h * y), np.sin(h * y)
    return (cx * cy, -PI * sx * cy, -h * cx * sy, -PI ** 2 * cx * cy, PI * h * sx * sy, -h * h * cx * cy)


def _sp_trig_theta(x, y):
    # sin(pi x)(1 - y^2), nonzero on the contact edge so the Robin term is exercised
    sx, cx = np.sin(PI * x), np.cos(PI * x)
    w, wy, wyy = 1 - y * y, -2 * y, -2 * np.ones_like(y)
    return sx * w, PI * cx * w, sx * wy, -PI ** 2 * sx * w, PI * cx * wy, sx * wyy


def zero_case() -> MmsCase:
    return MmsCase("zero", ZERO, ZERO, ZERO)


def polynomial_case() -> MmsCase:
    """Fully coupled case with bilinear/quadratic fields and anisotropic ``K``."""
    coef = Coefficients(alpha=1.0, mu=2.0, e=0.5, beta=1.5, Me=(0.3, -0.2),
                        K=((1.0, 0.2), (0.2, 0.8)), Ke=2.0)
    u = Field((Separable(_lin, _one, _sp_x_1my),))
    # phi = (e/beta) u + psi with d_n psi = 0 on the contact edge
    phi = u.scaled(coef.e / coef.beta) + Field((Separable(_lin, _one, _sp_x_1my2),))
    theta = Field((Separable(_affine, _one, _sp_bubble_x),))
    return MmsCase("polynomial", u, phi, theta, coef)


def trigonometric_case() -> MmsCase:
    """``u = t sin(pi x) sin(pi y)`` with ``e = 0`` and ``Me = 0``."""
    coef = Coefficients(alpha=1.0, mu=1.0, e=0.0, beta=1.0, Me=(0.0, 0.0), Ke=1.0)
    u = Field((Separable(_lin, _one, _sp_sinsin),))
    phi = Field((Separable(_lin, _one, _sp_coscos_half),))
    theta = Field((Separable(_affine, _one, _sp_trig_theta),))
    return MmsCase("trigonometric", u, phi, theta, coef)


def bundled_cases():
    return [polynomial_case(), trigonometric_case()]


# convergence study ----------------------------------------------------------

@dataclass
class ConvergenceReport:
    case: str
    h: list
    errors: dict
    rates: dict
    threshold: float = 0.9

    @property
    def passed(self) -> bool:
        return all(r >= self.threshold for r in self.rates.values())

    @property
    def failures(self) -> dict:
        return {k: r for k, r in self.rates.items() if not r >= self.threshold}

    def summary(self) -> str:
        lines = [f"case {self.case}: " + ("PASS" if self.passed else "FAIL")]
        for k in self.errors:
            errs = " ".join(f"{e:.3e}" for e in self.errors[k])
            lines.append(f"  {k:6s} rate {self.rates[k]:.3f}  errors {errs}")
        return "\n".join(lines)


def fitted_rate(h, err) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if np.all(err == 0.0):
        return np.inf
    slope, _ = np.polyfit(np.log(h), np.log(np.maximum(err, 1e-300)), 1)
    return float(slope)


def h1_error(space: FeSpace, values, exact: Field, t) -> float:
    """``||grad(u_h - u)||_{L2}`` with a degree-4 rule."""
    mesh = space.mesh
    pts, w = fem.quadrature_points(mesh)
    gx, gy = exact.grad(pts[..., 0], pts[..., 1], t)
    full = space.to_full(values)[mesh.triangles]
    gh = np.einsum("ma,mad->md", full, mesh.grads)
    ex = gh[:, None, 0] - gx
    ey = gh[:, None, 1] - gy
    return float(np.sqrt(np.sum(w * (ex * ex + ey * ey))))


def run_case(case: MmsCase, nx: int, T: float, N: int, tol: float = 1e-11):
    """Solve one level; returns ``(h, errors)`` at ``t = T``."""
    mesh = generate_rect_mesh(1.0, 1.0, nx, nx, MMS_TAGGING)
    ops = assemble_forms(mesh, case.coef.material(mesh))
    stepper = CoupledStepper(ops, case.data(), FrictionLaw.tresca(0.0), SolverConfig(tol=tol))
    u0 = ops.V.interpolate(lambda x, y, t: case.u.value(x, y, t))
    th0 = ops.E.interpolate(lambda x, y, t: case.theta.value(x, y, t))
    state = stepper.initialize(u0, th0)
    grid = TimeGrid(T, N)
    for _ in range(N):
        state = stepper.advance(state, grid.dt)
    errs = {
        "u": h1_error(ops.V, state.u.values, case.u, T),
        "phi": h1_error(ops.W, state.phi.values, case.phi, T),
        "theta": h1_error(ops.E, state.theta.values, case.theta, T),
    }
    return mesh.h, errs


def run_mms(case: MmsCase, levels=(4, 8, 16, 32), T: float = 0.5, steps_per_cell: float = 1.0,
            threshold: float = 0.9) -> ConvergenceReport:
    """Refinement study with ``dt`` proportional to ``h`` (``N = steps_per_cell * nx``)."""
    if len(levels) < 3:
        raise ValueError("a convergence study needs at least 3 mesh levels")
    hs, errors = [], {"u": [], "phi": [], "theta": []}
    for nx in levels:
        N = max(1, int(round(steps_per_cell * nx)))
        h, errs = run_case(case, nx, T, N)
        hs.append(h)
        for k, v in errs.items():
            errors[k].append(v)
    rates = {k: fitted_rate(hs, v) for k, v in errors.items()}
    return ConvergenceReport(case.name, hs, errors, rates, threshold)
