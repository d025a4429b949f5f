"""Slip-rate-dependent friction bound and the nodal friction functional.

The contact integral is lumped on the nodes of the contact boundary, so the
functional is ``sum_i w_i r(x_i, |eta_i|) |v_i|`` with ``w_i`` half the sum of
the incident contact edge lengths.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spaces import FeSpace, NodalField

FAMILIES = ("tresca", "affine_saturating", "exponential")
HEAT_MODELS = ("zero", "frictional")


@dataclass(frozen=True)
class FrictionLaw:
    """Friction bound ``r(x, s) >= 0`` as a function of the slip rate ``s``.

    Families
    --------
    tresca
        ``r = r0``.
    affine_saturating
        ``r = clip(r0 + a s, 0, r_max)``; Lipschitz constant ``|a|``.
    exponential
        ``r = r_max + (r0 - r_max) exp(-b s)``; Lipschitz constant ``b |r_max - r0|``.

    ``heat`` selects the frictional heat generation ``h(s)``: ``"zero"`` or
    ``"frictional"`` (``r(s) s``, the dissipated power).
    """

    family: str = "tresca"
    r0: float = 0.0
    a: float = 0.0
    b: float = 1.0
    r_max: float = np.inf
    heat: str = "zero"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown friction family {self.family!r}")
        if self.heat not in HEAT_MODELS:
            raise ValueError(f"unknown heat model {self.heat!r}")
        if self.r0 < 0:
            raise ValueError("friction bound must be nonnegative (r0 >= 0)")
        if self.family == "exponential" and (self.b < 0 or not np.isfinite(self.r_max) or self.r_max < 0):
            raise ValueError("exponential law needs b >= 0 and a finite r_max >= 0")
        if self.family == "affine_saturating" and self.r_max < self.r0:
            raise ValueError("affine_saturating law needs r_max >= r0")

    @classmethod
    def tresca(cls, r0, heat="zero"):
        return cls("tresca", r0=r0, heat=heat)

    @classmethod
    def affine_saturating(cls, r0, a, r_max=np.inf, heat="zero"):
        return cls("affine_saturating", r0=r0, a=a, r_max=r_max, heat=heat)

    @classmethod
    def exponential(cls, r0, r_max, b, heat="zero"):
        return cls("exponential", r0=r0, r_max=r_max, b=b, heat=heat)

    @property
    def lipschitz(self) -> float:
        if self.family == "tresca":
            return 0.0
        if self.family == "affine_saturating":
            return abs(self.a)
        return self.b * abs(self.r_max - self.r0)

    def bound(self, x, y, s):
        s = np.abs(np.asarray(s, dtype=float))
        if self.family == "tresca":
            r = np.full_like(s, self.r0)
        elif self.family == "affine_saturating":
            r = np.clip(self.r0 + self.a * s, 0.0, self.r_max)
        else:
            r = self.r_max + (self.r0 - self.r_max) * np.exp(-self.b * s)
        return r

    def heat_source(self, x, y, s):
        if self.heat == "zero":
            return np.zeros(np.shape(s))
        s = np.abs(np.asarray(s, dtype=float))
        return self.bound(x, y, s) * s

    @property
    def heat_callable(self):
        return None if self.heat == "zero" else self.heat_source


@dataclass(frozen=True)
class RegularizedAbs:
    """``sqrt(s^2 + eps^2) - eps``: smooth, zero at zero, below ``|s|`` by at most ``eps``."""

    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("regularization eps must be positive")

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return s * s / (np.sqrt(s * s + self.eps ** 2) + self.eps)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        return s / np.sqrt(s * s + self.eps ** 2)

    def second(self, s):
        s = np.asarray(s, dtype=float)
        return self.eps ** 2 / (s * s + self.eps ** 2) ** 1.5


@dataclass(frozen=True, eq=False)
class ContactSet:
    """Free contact dofs of ``V`` with their lumped weights and coordinates."""

    dofs: np.ndarray
    weights: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @classmethod
    def of(cls, space: FeSpace) -> "ContactSet":
        from . import fem

        mesh = space.mesh
        w_full = fem.lumped_weights(mesh, "G3")
        nodes = mesh.nodes_on("G3")
        idx = space.dof_index[nodes]
        keep = idx >= 0
        nodes = nodes[keep]
        return cls(idx[keep], w_full[nodes], mesh.nodes[nodes, 0], mesh.nodes[nodes, 1])

    def bounds(self, law: FrictionLaw, speed) -> np.ndarray:
        """Frozen nodal bounds ``r(x_i, |speed_i|)`` for contact-node speeds."""
        return law.bound(self.x, self.y, speed)

    def __len__(self):
        return len(self.dofs)


def eval_j(law: FrictionLaw, eta: NodalField, v: NodalField, contact: ContactSet | None = None) -> float:
    """Lumped friction functional ``sum_i w_i r(x_i, |eta_i|) |v_i|``."""
    contact = ContactSet.of(v.space) if contact is None else contact
    e = eta.values[contact.dofs]
    vv = v.values[contact.dofs]
    return float(np.sum(contact.weights * law.bound(contact.x, contact.y, np.abs(e)) * np.abs(vv)))


def eval_j_regularized(law, eta: NodalField, v: NodalField, eps, contact=None) -> float:
    contact = ContactSet.of(v.space) if contact is None else contact
    reg = RegularizedAbs(eps)
    g = law.bound(contact.x, contact.y, np.abs(eta.values[contact.dofs]))
    return float(np.sum(contact.weights * g * reg.value(v.values[contact.dofs])))


def regularized_j_gradient(weights, g, v, eps):
    """Gradient and diagonal Hessian of ``sum w_i g_i (sqrt(v_i^2+eps^2) - eps)``.

    All arrays are indexed by contact node. Returns ``(grad, hess_diag)``.
    """
    reg = RegularizedAbs(eps)
    wg = np.asarray(weights, dtype=float) * np.asarray(g, dtype=float)
    return wg * reg.derivative(v), wg * reg.second(v)


@dataclass(frozen=True)
class FourTermReport:
    samples: int
    max_ratio: float
    trace_constant: float
    lipschitz: float

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0 + 1e-9


def four_term_lhs(law, contact: ContactSet, eta1, eta2, v1, v2) -> float:
    """``j(eta1, v2) - j(eta1, v1) + j(eta2, v1) - j(eta2, v2)`` on nodal arrays (contact entries)."""
    r1 = law.bound(contact.x, contact.y, np.abs(eta1))
    r2 = law.bound(contact.x, contact.y, np.abs(eta2))
    return float(np.sum(contact.weights * (r1 - r2) * (np.abs(v2) - np.abs(v1))))


def check_four_term_bound(space: FeSpace, law: FrictionLaw, samples: int, trace_constant: float,
                          rng=None, scale=1.0, extremal=True) -> FourTermReport:
    """Sample random quadruples and report the largest ratio of the absolute
    four-term combination to ``c^2 L_r ||eta1-eta2||_V ||v1-v2||_V``.

    With ``extremal`` a quarter of the samples are multiples of the maximizer
    of the lumped trace inequality, where the bound is attained when the law
    is linear over the sampled slip range.
    """
    from .spaces import trace_constant_eigenpair

    rng = np.random.default_rng(rng)
    contact = ContactSet.of(space)
    c2l = trace_constant ** 2 * law.lipschitz
    x_ext = trace_constant_eigenpair(space, lumped=True)[1].values if extremal else None
    worst = 0.0
    for _ in range(samples):
        u = rng.random()
        if x_ext is not None and u < 0.25:
            # small same-sign amplitudes keep the slip inside the unclipped range
            a, b, p, q = 1e-3 * scale * rng.random(4)
            eta1, eta2, v1, v2 = a * x_ext, b * x_ext, p * x_ext, q * x_ext
        else:
            eta1, eta2, v1, v2 = (scale * rng.standard_normal(space.n) for _ in range(4))
            if u < 0.6:
                # smooth fields stress the trace inequality more than white noise
                k = rng.integers(1, 4)
                x = space.mesh.nodes[space.free_dofs, 0]
                bump = np.cos(k * np.pi * x)
                eta1, v1 = eta1 * 0.05 + bump, v1 * 0.05 - bump
        lhs = four_term_lhs(law, contact, eta1[contact.dofs], eta2[contact.dofs],
                            v1[contact.dofs], v2[contact.dofs])
        rhs = c2l * space.norm(eta1 - eta2) * space.norm(v1 - v2)
        lhs = abs(lhs)
        if lhs == 0.0:
            continue
        ratio = np.inf if rhs == 0.0 else lhs / rhs
        worst = max(worst, ratio)
    return FourTermReport(samples, float(worst), trace_constant, law.lipschitz)
