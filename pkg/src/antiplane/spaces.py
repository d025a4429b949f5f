"""Scalar P1 spaces with homogeneous Dirichlet constraints, norms, trace constant."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import fem
from .mesh import Mesh

# Dirichlet boundary parts per space kind; "H1" is the unconstrained space.
DIRICHLET = {"V": ("G1",), "W": ("Ga",), "E": ("G1", "G2"), "H1": ()}


class SpaceError(ValueError):
    pass


class TraceConstantError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FeSpace:
    mesh: Mesh
    kind: str
    free_dofs: np.ndarray
    dirichlet_nodes: np.ndarray

    @property
    def n(self) -> int:
        return len(self.free_dofs)

    @cached_property
    def dof_index(self) -> np.ndarray:
        """Node -> free dof position, ``-1`` for constrained nodes."""
        idx = np.full(self.mesh.n_nodes, -1, dtype=np.int64)
        idx[self.free_dofs] = np.arange(self.n)
        return idx

    def to_full(self, values) -> np.ndarray:
        full = np.zeros(self.mesh.n_nodes)
        full[self.free_dofs] = values
        return full

    def restrict(self, full) -> np.ndarray:
        return np.asarray(full, dtype=float)[self.free_dofs]

    def slice(self, matrix, other=None):
        """Rows on this space, columns on ``other`` (default: this space)."""
        other = self if other is None else other
        return matrix[self.free_dofs][:, other.free_dofs].tocsr()

    def interpolate(self, fn, t=0.0, unit=None) -> "NodalField":
        x, y = self.mesh.nodes[self.free_dofs].T
        vals = np.broadcast_to(np.asarray(fn(x, y, t), dtype=float), x.shape).copy()
        return NodalField(self, vals, unit)

    def field(self, values, unit=None) -> "NodalField":
        return NodalField(self, np.asarray(values, dtype=float), unit)

    def zeros(self, unit=None) -> "NodalField":
        return NodalField(self, np.zeros(self.n), unit)

    @cached_property
    def gram(self):
        """Matrix of the gradient inner product on the free dofs."""
        return self.slice(fem.stiffness(self.mesh, 1.0))

    @cached_property
    def gram_lu(self):
        return spla.splu(self.gram.tocsc())

    def norm(self, values) -> float:
        v = np.asarray(values, dtype=float)
        return float(np.sqrt(max(v @ (self.gram @ v), 0.0)))


def build_space(mesh: Mesh, kind: str) -> FeSpace:
    """P1 space on ``mesh`` constrained to zero on the parts listed for ``kind``.

    Interface nodes (e.g. a corner between a clamped and a contact edge) are
    constrained as soon as one incident edge is Dirichlet.
    """
    if kind not in DIRICHLET:
        raise SpaceError(f"unknown space kind {kind!r}")
    tags = DIRICHLET[kind]
    dirichlet = mesh.nodes_on(tags) if tags else np.array([], dtype=np.int64)
    free = np.setdiff1d(np.arange(mesh.n_nodes), dirichlet)
    if free.size == 0:
        raise SpaceError(f"space {kind} has no free degrees of freedom")
    free.setflags(write=False)
    dirichlet = dirichlet.astype(np.int64)
    dirichlet.setflags(write=False)
    return FeSpace(mesh, kind, free, dirichlet)


@dataclass(frozen=True, eq=False)
class NodalField:
    space: FeSpace
    values: np.ndarray
    unit: str | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.space.n,):
            raise SpaceError(f"field has {vals.size} values, space has {self.space.n} free dofs")
        if not np.all(np.isfinite(vals)):
            raise SpaceError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    def full(self) -> np.ndarray:
        return self.space.to_full(self.values)


def h1_seminorm(mesh: Mesh, full_values) -> float:
    """``||grad v||_{L2}`` of a P1 field given at all nodes (exact per element)."""
    v = np.asarray(full_values, dtype=float)[mesh.triangles]   # (M, 3)
    g = np.einsum("ma,mad->md", v, mesh.grads)
    return float(np.sqrt(np.sum(mesh.areas * np.einsum("md,md->m", g, g))))


def boundary_l2(mesh: Mesh, tags, full_values) -> float:
    """``||v||_{L2(tags)}`` of the P1 trace, integrated exactly per edge."""
    mask = mesh.edge_mask(tags)
    v = np.asarray(full_values, dtype=float)
    a = v[mesh.bedges[mask, 0]]
    b = v[mesh.bedges[mask, 1]]
    return float(np.sqrt(np.sum(mesh.edge_lengths[mask] * (a * a + a * b + b * b) / 3.0)))


def seminorm_V(field: NodalField) -> float:
    return h1_seminorm(field.space.mesh, field.full())


def trace_norm_G3(field: NodalField) -> float:
    mesh = field.space.mesh
    if mesh.boundary_measure("G3") <= 0.0:
        raise SpaceError("measure(Γ3) = 0: no contact boundary")
    return boundary_l2(mesh, "G3", field.full())


def boundary_mass(space: FeSpace, tags="G3", lumped=False):
    return space.slice(fem.edge_mass(space.mesh, tags, lumped=lumped))


def trace_constant_eigenpair(space: FeSpace, lumped=False, tol=1e-10, max_iter=2000,
                             dense_threshold=500):
    """Largest ``c`` with ``||v||_{Γ3} <= c ||v||_V`` on ``space`` and its maximizer.

    Solves ``M_Γ3 x = lam Gram x``; dense for small spaces, LOBPCG (with a
    direct Gram preconditioner) otherwise. ``lumped`` replaces the boundary
    mass by its row-sum diagonal, matching the nodal quadrature of the
    friction functional.
    """
    if space.mesh.boundary_measure("G3") <= 0.0:
        raise SpaceError("measure(Γ3) = 0: no contact boundary")
    mb = boundary_mass(space, "G3", lumped)
    gram = space.gram
    if space.n <= dense_threshold:
        lam, vec = sla.eigh(mb.toarray(), gram.toarray())
        lam_max, x = lam[-1], vec[:, -1]
    else:
        rng = np.random.default_rng(0)
        x0 = rng.standard_normal((space.n, 3))
        lu = space.gram_lu
        precond = spla.LinearOperator(gram.shape, matvec=lu.solve, dtype=float)
        lam, vec, hist = spla.lobpcg(mb, x0, B=gram, M=precond, largest=True, tol=tol,
                                     maxiter=max_iter, retResidualNormsHistory=True)
        res = mb @ vec[:, 0] - lam[0] * (gram @ vec[:, 0])
        if np.linalg.norm(res) > 1e3 * tol * max(1.0, np.linalg.norm(mb @ vec[:, 0])):
            raise TraceConstantError(
                f"trace-constant eigensolve did not converge in {max_iter} iterations "
                f"(residual {np.linalg.norm(res):.3e})")
        order = np.argsort(lam)[::-1]
        lam_max, x = lam[order[0]], vec[:, order[0]]
    x = x / space.norm(x)
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    return float(np.sqrt(max(lam_max, 0.0))), NodalField(space, x)


def estimate_trace_constant(space: FeSpace, lumped=False, **kwargs) -> float:
    if space.kind != "V":
        raise SpaceError("the trace constant is defined on the displacement space V")
    return trace_constant_eigenpair(space, lumped=lumped, **kwargs)[0]
