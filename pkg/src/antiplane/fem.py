"""Low-level P1 assembly: element blocks to sparse matrices, quadrature rules.

Matrices are assembled on all mesh nodes and sliced to the free dofs of a
space afterwards. Duplicate entries are reduced with ``np.bincount``, which
sums in input order, so the result does not depend on the worker count.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import kernels

# 2-point Gauss on [0, 1]
GAUSS2_T = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS2_W = np.array([0.5, 0.5])


def reduce_symmetric(n, tris, blocks):
    """Sum element blocks into an exactly symmetric ``n x n`` CSR matrix.

    Only the ``a <= b`` half of every block is used; the strict upper part is
    mirrored, so symmetry holds bit for bit.
    """
    ia, ib = np.triu_indices(3)
    gi = tris[:, ia]
    gj = tris[:, ib]
    lo = np.minimum(gi, gj).ravel()
    hi = np.maximum(gi, gj).ravel()
    vals = blocks[:, ia, ib].ravel()
    keys = lo * n + hi
    uniq, inv = np.unique(keys, return_inverse=True)
    sums = np.bincount(inv.ravel(), weights=vals, minlength=len(uniq))
    rows, cols = np.divmod(uniq, n)
    off = rows != cols
    r = np.concatenate([rows, cols[off]])
    c = np.concatenate([cols, rows[off]])
    v = np.concatenate([sums, sums[off]])
    return sp.csr_matrix((v, (r, c)), shape=(n, n))


def reduce_general(n_rows, n_cols, row_idx, col_idx, blocks):
    """Sum ``blocks[e, a, b]`` into entry ``(row_idx[e, a], col_idx[e, b])``."""
    k = row_idx.shape[1]
    m = col_idx.shape[1]
    r = np.repeat(row_idx, m, axis=1).ravel()
    c = np.tile(col_idx, (1, k)).ravel()
    keys = r * n_cols + c
    uniq, inv = np.unique(keys, return_inverse=True)
    sums = np.bincount(inv.ravel(), weights=blocks.reshape(len(blocks), -1).ravel(), minlength=len(uniq))
    rows, cols = np.divmod(uniq, n_cols)
    return sp.csr_matrix((sums, (rows, cols)), shape=(n_rows, n_cols))


def stiffness(mesh, coef):
    """Full-node matrix of ``int coef grad u . grad v`` for per-element ``coef``.

    ``coef`` may be a scalar, an ``(M,)`` array, or an ``(M, 2, 2)`` tensor.
    """
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim == 3:
        blocks = kernels.tensor_stiffness_values(mesh.grads, mesh.areas, coef)
    else:
        coef = np.broadcast_to(coef, (mesh.n_triangles,))
        blocks = kernels.stiffness_values(mesh.grads, mesh.areas, coef)
    return reduce_symmetric(mesh.n_nodes, mesh.triangles, blocks)


def mass(mesh):
    return reduce_symmetric(mesh.n_nodes, mesh.triangles, kernels.mass_values(mesh.areas))


def advection(mesh, vec):
    """Full-node matrix ``A[i, j] = -int (vec . grad phi_j) phi_i``."""
    vec = np.broadcast_to(np.asarray(vec, dtype=np.float64), (mesh.n_triangles, 2))
    blocks = kernels.advection_values(mesh.grads, mesh.areas, vec)
    n = mesh.n_nodes
    return reduce_general(n, n, mesh.triangles, mesh.triangles, blocks)


def edge_mass(mesh, tags, weight=None, lumped=False):
    """Full-node matrix of ``int_{tags} weight u v ds`` (weight per edge)."""
    mask = mesh.edge_mask(tags)
    edges = mesh.bedges[mask]
    length = mesh.edge_lengths[mask]
    if weight is not None:
        length = length * np.asarray(weight, dtype=float)
    n = mesh.n_nodes
    if lumped:
        diag = np.bincount(edges.ravel(), weights=np.repeat(length / 2.0, 2), minlength=n)
        return sp.diags(diag).tocsr()
    blocks = np.empty((len(edges), 2, 2))
    blocks[:, 0, 0] = blocks[:, 1, 1] = length / 3.0
    blocks[:, 0, 1] = blocks[:, 1, 0] = length / 6.0
    ia, ib = np.triu_indices(2)
    lo = np.minimum(edges[:, ia], edges[:, ib]).ravel()
    hi = np.maximum(edges[:, ia], edges[:, ib]).ravel()
    keys = lo * n + hi
    uniq, inv = np.unique(keys, return_inverse=True)
    sums = np.bincount(inv.ravel(), weights=blocks[:, ia, ib].ravel(), minlength=len(uniq))
    rows, cols = np.divmod(uniq, n)
    off = rows != cols
    r = np.concatenate([rows, cols[off]])
    c = np.concatenate([cols, rows[off]])
    v = np.concatenate([sums, sums[off]])
    return sp.csr_matrix((v, (r, c)), shape=(n, n))


def lumped_weights(mesh, tags):
    """Half-sum of incident tagged edge lengths, one entry per mesh node."""
    mask = mesh.edge_mask(tags)
    return np.bincount(mesh.bedges[mask].ravel(),
                       weights=np.repeat(mesh.edge_lengths[mask] / 2.0, 2),
                       minlength=mesh.n_nodes)


def _eval(fn, x, y, t):
    return np.broadcast_to(np.asarray(fn(x, y, t), dtype=np.float64), np.shape(x))


def volume_load(mesh, fn, t):
    """Full-node vector ``int fn(., t) phi_i`` by the 3-point edge-midpoint rule."""
    p = mesh.nodes[mesh.triangles]                     # (M, 3, 2)
    mids = 0.5 * (p + np.roll(p, -1, axis=1))          # midpoint k joins local nodes k, k+1
    vals = _eval(fn, mids[..., 0], mids[..., 1], t)    # (M, 3)
    # node a touches midpoints a and a-1, each with basis value 1/2
    local = 0.5 * (vals + np.roll(vals, 1, axis=1)) * (mesh.areas / 3.0)[:, None]
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def edge_points(mesh, tags):
    """Gauss points of the tagged edges: ``(edges, lengths, xq, yq)`` with ``xq`` of shape ``(E, 2)``."""
    mask = mesh.edge_mask(tags)
    edges = mesh.bedges[mask]
    length = mesh.edge_lengths[mask]
    a = mesh.nodes[edges[:, 0]]
    b = mesh.nodes[edges[:, 1]]
    t = GAUSS2_T[None, :]
    xq = a[:, 0:1] * (1 - t) + b[:, 0:1] * t
    yq = a[:, 1:2] * (1 - t) + b[:, 1:2] * t
    return edges, length, xq, yq


def edge_load(mesh, tags, fn, t, weight=None, values=None):
    """Full-node vector ``int_{tags} fn phi_i ds`` with 2-point Gauss per edge.

    ``values`` may supply precomputed integrand values at the Gauss points.
    """
    edges, length, xq, yq = edge_points(mesh, tags)
    if values is None:
        values = _eval(fn, xq, yq, t)
    if weight is not None:
        values = values * np.asarray(weight, dtype=float)[:, None]
    wq = GAUSS2_W[None, :] * length[:, None]
    t_ = GAUSS2_T[None, :]
    left = (values * wq * (1 - t_)).sum(axis=1)
    right = (values * wq * t_).sum(axis=1)
    out = np.bincount(edges[:, 0], weights=left, minlength=mesh.n_nodes)
    out += np.bincount(edges[:, 1], weights=right, minlength=mesh.n_nodes)
    return out


def edge_interpolate(mesh, tags, full_values):
    """Values of a P1 field at the Gauss points of the tagged edges, shape ``(E, 2)``."""
    edges, _, _, _ = edge_points(mesh, tags)
    t = GAUSS2_T[None, :]
    return full_values[edges[:, 0], None] * (1 - t) + full_values[edges[:, 1], None] * t


# Symmetric 6-point rule on the reference triangle, exact to degree 4.
_D6_A = (0.445948490915965, 0.091576213509771)
_D6_W = (0.223381589678011, 0.109951743655322)


def _dunavant6():
    bary, w = [], []
    for a, wt in zip(_D6_A, _D6_W):
        b = 1.0 - 2.0 * a
        for lam in ((a, a, b), (a, b, a), (b, a, a)):
            bary.append(lam)
            w.append(wt)
    return np.array(bary), np.array(w) / 2.0


TRI_BARY, TRI_W = _dunavant6()


def quadrature_points(mesh):
    """Physical points ``(M, Q, 2)`` and weights ``(M, Q)`` of the degree-4 rule."""
    p = mesh.nodes[mesh.triangles]
    pts = np.einsum("qa,mad->mqd", TRI_BARY, p)
    w = 2.0 * mesh.areas[:, None] * TRI_W[None, :]
    return pts, w
