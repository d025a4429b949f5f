"""Material data, loads, and the discrete bilinear forms and thermal operators."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import fem
from .mesh import Mesh
from .spaces import FeSpace, NodalField, build_space


class MaterialError(ValueError):
    """A coefficient field violates a positivity or symmetry assumption."""


def _zero(x, y, t):
    return 0.0


@dataclass(frozen=True, eq=False)
class MaterialField:
    """Piecewise-constant coefficients, one value per triangle.

    ``K`` is a symmetric ``(M, 2, 2)`` conductivity tensor; ``Ke`` holds one
    exchange coefficient per contact (``G3``) edge, in mesh order.
    """

    alpha: np.ndarray
    mu: np.ndarray
    e: np.ndarray
    beta: np.ndarray
    Me: np.ndarray
    K: np.ndarray
    Ke: np.ndarray

    @classmethod
    def uniform(cls, mesh: Mesh, alpha=1.0, mu=1.0, e=0.0, beta=1.0, Me=(0.0, 0.0),
                K=1.0, Ke=1.0) -> "MaterialField":
        m = mesh.n_triangles
        K = np.asarray(K, dtype=float)
        if K.ndim == 0:
            K = K * np.eye(2)
        n3 = int(mesh.edge_mask("G3").sum())
        return cls(
            alpha=np.full(m, float(alpha)),
            mu=np.full(m, float(mu)),
            e=np.full(m, float(e)),
            beta=np.full(m, float(beta)),
            Me=np.tile(np.asarray(Me, dtype=float), (m, 1)),
            K=np.tile(K, (m, 1, 1)),
            Ke=np.full(n3, float(Ke)),
        )

    def validate(self, mesh: Mesh) -> None:
        m = mesh.n_triangles
        for name in ("alpha", "mu", "e", "beta"):
            arr = getattr(self, name)
            if arr.shape != (m,) or not np.all(np.isfinite(arr)):
                raise MaterialError(f"{name} must be finite with one value per triangle")
        if self.Me.shape != (m, 2) or self.K.shape != (m, 2, 2):
            raise MaterialError("Me must be (M, 2) and K must be (M, 2, 2)")
        if self.Ke.shape != (int(mesh.edge_mask("G3").sum()),):
            raise MaterialError("Ke needs one value per contact edge")
        if not np.all(self.alpha > 0):
            raise MaterialError("viscosity alpha must be bounded below by alpha* > 0")
        if not np.all(self.beta > 0):
            raise MaterialError("permittivity beta must be bounded below by beta* > 0")
        if not np.all(self.mu > 0):
            raise MaterialError("shear modulus mu must be positive")
        if not np.array_equal(self.K[:, 0, 1], self.K[:, 1, 0]):
            raise MaterialError("conductivity K must be symmetric")
        if not self.m_K > 0:
            raise MaterialError("conductivity K must be uniformly positive definite (m_K > 0)")
        if not np.all(self.Ke >= 0):
            raise MaterialError("exchange coefficient Ke must be nonnegative")

    @property
    def alpha_star(self) -> float:
        return float(self.alpha.min())

    @property
    def alpha_max(self) -> float:
        return float(self.alpha.max())

    @property
    def beta_star(self) -> float:
        return float(self.beta.min())

    @property
    def m_K(self) -> float:
        return float(np.linalg.eigvalsh(self.K).min())

    def scaled(self, **factors) -> "MaterialField":
        kw = {k: getattr(self, k) for k in ("alpha", "mu", "e", "beta", "Me", "K", "Ke")}
        for k, f in factors.items():
            kw[k] = kw[k] * f
        return MaterialField(**kw)


@dataclass(frozen=True)
class BoundaryData:
    """Time-dependent data, each a vectorized callable ``fn(x, y, t)``.

    ``f3`` is an optional traction on the contact part, used only when the
    friction condition is replaced by a prescribed traction (verification).
    """

    f0: Callable = _zero
    f2: Callable = _zero
    q0: Callable = _zero
    q2: Callable = _zero
    p: Callable = _zero
    theta_R: Callable = _zero
    f3: Callable | None = None
    strict_q2_zero: bool = False

    def check_q2(self, mesh: Mesh, times) -> None:
        if not self.strict_q2_zero:
            return
        _, _, xq, yq = fem.edge_points(mesh, "Gb")
        for t in times:
            if np.any(fem._eval(self.q2, xq, yq, t) != 0.0):
                raise MaterialError(f"q2 is nonzero on Γb at t={t} while strict_q2_zero is set")


@dataclass(eq=False)
class AssembledOperators:
    """Sparse matrices on the free dofs of ``V``, ``W``, ``E``.

    ``A_e`` has rows on ``W`` and columns on ``V``; ``A_M`` has rows on ``V``
    and columns on ``E``; ``M_vol`` (rows ``E``, columns ``V``) is the volume
    part of the heat-source operator and equals ``A_M.T``.
    """

    mesh: Mesh
    V: FeSpace
    W: FeSpace
    E: FeSpace
    material: MaterialField
    A_alpha: sp.csr_matrix
    A_mu: sp.csr_matrix
    A_beta: sp.csr_matrix
    A_e: sp.csr_matrix
    A_M: sp.csr_matrix
    M_vol: sp.csr_matrix
    K_tilde: sp.csr_matrix
    gram_V: sp.csr_matrix
    gram_W: sp.csr_matrix
    gram_E: sp.csr_matrix
    mass_E: sp.csr_matrix
    contact_weights: np.ndarray = field(repr=False)

    @cached_property
    def contact_dofs(self) -> np.ndarray:
        """Positions in ``V`` of free contact nodes."""
        nodes = self.mesh.nodes_on("G3")
        idx = self.V.dof_index[nodes]
        return idx[idx >= 0]

    @cached_property
    def contact_nodes(self) -> np.ndarray:
        return self.V.free_dofs[self.contact_dofs]


def assemble_forms(mesh: Mesh, mat: MaterialField, spaces=None) -> AssembledOperators:
    mat.validate(mesh)
    if spaces is None:
        spaces = (build_space(mesh, "V"), build_space(mesh, "W"), build_space(mesh, "E"))
    V, W, E = spaces
    lap = fem.stiffness(mesh, 1.0)
    A_e_full = fem.stiffness(mesh, mat.e)
    M_vol_full = fem.advection(mesh, mat.Me)
    robin = fem.edge_mass(mesh, "G3", weight=mat.Ke)
    K_full = fem.stiffness(mesh, mat.K) + robin
    M_vol = E.slice(M_vol_full, V)
    return AssembledOperators(
        mesh=mesh, V=V, W=W, E=E, material=mat,
        A_alpha=V.slice(fem.stiffness(mesh, mat.alpha)),
        A_mu=V.slice(fem.stiffness(mesh, mat.mu)),
        A_beta=W.slice(fem.stiffness(mesh, mat.beta)),
        A_e=W.slice(A_e_full, V),
        A_M=M_vol.T.tocsr(),
        M_vol=M_vol,
        K_tilde=E.slice(K_full),
        gram_V=V.slice(lap),
        gram_W=W.slice(lap),
        gram_E=E.slice(lap),
        mass_E=E.slice(fem.mass(mesh)),
        contact_weights=fem.lumped_weights(mesh, "G3"),
    )


def assemble_load_f(mesh: Mesh, V: FeSpace, data: BoundaryData, t: float) -> np.ndarray:
    """Mechanical load: volume force plus traction on ``G2`` (and ``f3`` on ``G3`` if set)."""
    full = fem.volume_load(mesh, data.f0, t) + fem.edge_load(mesh, "G2", data.f2, t)
    if data.f3 is not None:
        full += fem.edge_load(mesh, "G3", data.f3, t)
    return V.restrict(full)


def assemble_load_q(mesh: Mesh, W: FeSpace, data: BoundaryData, t: float) -> np.ndarray:
    """Charge load ``int_Γb q2 psi + int q0 psi``, used as written on the right-hand side."""
    full = fem.edge_load(mesh, "Gb", data.q2, t) + fem.volume_load(mesh, data.q0, t)
    return W.restrict(full)


def assemble_thermal_source(mesh: Mesh, E: FeSpace, mat: MaterialField, data: BoundaryData,
                            t: float) -> np.ndarray:
    """Heat supply ``int p mu + int_Γ3 Ke thetaR mu``."""
    full = fem.volume_load(mesh, data.p, t) + fem.edge_load(mesh, "G3", data.theta_R, t, weight=mat.Ke)
    return E.restrict(full)


def apply_Mtilde(ops: AssembledOperators, vdot, heat=None) -> np.ndarray:
    """Heat source from a velocity field, as a vector on ``E``.

    Volume part ``-int (Me . grad vdot) mu`` plus ``int_Γ3 h(|vdot|) mu`` where
    ``heat(x, y, s)`` is the frictional heat generation (skipped when None).
    """
    v = vdot.values if isinstance(vdot, NodalField) else np.asarray(vdot, dtype=float)
    out = ops.M_vol @ v
    if heat is not None:
        mesh = ops.mesh
        full = ops.V.to_full(v)
        _, _, xq, yq = fem.edge_points(mesh, "G3")
        speed = np.abs(fem.edge_interpolate(mesh, "G3", full))
        vals = np.asarray(heat(xq, yq, speed), dtype=float)
        out = out + ops.E.restrict(fem.edge_load(mesh, "G3", None, 0.0, values=vals))
    return out
