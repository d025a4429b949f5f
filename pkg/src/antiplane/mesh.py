"""Conforming triangle meshes of the cross-section with tagged boundary edges.

Each boundary edge carries a mechanical tag (``G1`` clamped, ``G2`` traction,
``G3`` frictional contact) and an electric tag (``Ga`` grounded, ``Gb``
prescribed charge, or ``None`` on the contact part).
"""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np

from . import kernels

MECH_TAGS = ("G1", "G2", "G3")
ELEC_TAGS = ("Ga", "Gb")
SIDES = ("bottom", "right", "top", "left")
_GREEK = {"G1": "Γ1", "G2": "Γ2", "G3": "Γ3", "Ga": "Γa", "Gb": "Γb"}


class MeshError(ValueError):
    """A mesh violates one of its structural invariants."""


class MeshFormatError(MeshError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation with per-edge boundary tags.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (M, 3) int array, counterclockwise
    bedges : (B, 2) int array of boundary node pairs
    mech_tags : tuple of str, one per boundary edge
    elec_tags : tuple of str or None, one per boundary edge
    """

    nodes: np.ndarray
    triangles: np.ndarray
    bedges: np.ndarray
    mech_tags: tuple
    elec_tags: tuple

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=np.float64).reshape(-1, 2)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        bedges = np.array(self.bedges, dtype=np.int64).reshape(-1, 2)
        for arr in (nodes, tris, bedges):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "bedges", bedges)
        object.__setattr__(self, "mech_tags", tuple(self.mech_tags))
        object.__setattr__(self, "elec_tags", tuple(None if t in (None, "-") else t for t in self.elec_tags))
        self._validate()

    def _validate(self):
        n = len(self.nodes)
        if n == 0 or len(self.triangles) == 0:
            raise MeshError("mesh has no nodes or no triangles")
        if not np.all(np.isfinite(self.nodes)):
            raise MeshError("non-finite node coordinate")
        for name, arr in (("triangle", self.triangles), ("boundary edge", self.bedges)):
            bad = np.flatnonzero(np.any((arr < 0) | (arr >= n), axis=1))
            if bad.size:
                raise MeshError(f"node index out of range, {name} {bad[0]}")
        if len(self.mech_tags) != len(self.bedges) or len(self.elec_tags) != len(self.bedges):
            raise MeshError("one mechanical and one electric tag required per boundary edge")
        nonpos = np.flatnonzero(self.areas <= 0.0)
        if nonpos.size:
            raise MeshError(f"nonpositive area, triangle {nonpos[0]}")
        for k, (mech, elec) in enumerate(zip(self.mech_tags, self.elec_tags)):
            if mech not in MECH_TAGS:
                raise MeshError(f"unknown mechanical tag {mech!r} on boundary edge {k}")
            if elec is not None and elec not in ELEC_TAGS:
                raise MeshError(f"unknown electric tag {elec!r} on boundary edge {k}")
            if mech == "G3" and elec is not None:
                raise MeshError(f"elec tag on contact boundary, boundary edge {k}")
            if mech != "G3" and elec is None:
                raise MeshError(f"missing elec tag on {_GREEK[mech]}, boundary edge {k}")

        counts = Counter()
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                counts[(min(a, b), max(a, b))] += 1
        if any(c > 2 for c in counts.values()):
            raise MeshError("non-manifold edge shared by more than two triangles")
        topo = {e for e, c in counts.items() if c == 1}
        given = [(min(a, b), max(a, b)) for a, b in self.bedges]
        if len(set(given)) != len(given):
            raise MeshError("boundary edge listed more than once")
        if set(given) != topo:
            missing = sorted(topo - set(given))
            if missing:
                raise MeshError(f"boundary edges do not cover the boundary, missing {missing[0]}")
            raise MeshError("listed boundary edge is not on the topological boundary")

        for tag in ("G1", "Ga", "Gb"):
            if self.boundary_measure(tag) <= 0.0:
                raise MeshError(f"measure({_GREEK[tag]}) = 0")

    # geometry -------------------------------------------------------------

    @cached_property
    def _geometry(self):
        return kernels.p1_geometry(self.nodes, self.triangles)

    @property
    def areas(self):
        return self._geometry[0]

    @property
    def grads(self):
        """Constant P1 basis gradients per triangle, shape ``(M, 3, 2)``."""
        return self._geometry[1]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def edge_lengths(self):
        d = self.nodes[self.bedges[:, 1]] - self.nodes[self.bedges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def h(self):
        """Largest triangle edge length."""
        p = self.nodes[self.triangles]
        d = p - np.roll(p, 1, axis=1)
        return float(np.hypot(d[..., 0], d[..., 1]).max())

    def edge_mask(self, tags) -> np.ndarray:
        """Boolean mask over boundary edges carrying any of ``tags``."""
        tags = _as_tags(tags)
        mech = np.array([t in tags for t in self.mech_tags], dtype=bool)
        elec = np.array([t in tags for t in self.elec_tags], dtype=bool)
        return mech | elec

    def nodes_on(self, tags) -> np.ndarray:
        """Sorted node indices touched by edges carrying any of ``tags``."""
        return np.unique(self.bedges[self.edge_mask(tags)])

    def boundary_measure(self, tags) -> float:
        return float(self.edge_lengths[self.edge_mask(tags)].sum())

    def sha256(self) -> str:
        h = hashlib.sha256()
        h.update(self.nodes.tobytes())
        h.update(self.triangles.tobytes())
        h.update(self.bedges.tobytes())
        h.update(repr((self.mech_tags, self.elec_tags)).encode())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.bedges, other.bedges)
                and self.mech_tags == other.mech_tags
                and self.elec_tags == other.elec_tags)

    __hash__ = None


def _as_tags(tags) -> frozenset:
    if isinstance(tags, str):
        return frozenset([tags])
    return frozenset(tags)


def boundary_measure(mesh: Mesh, tag) -> float:
    """Total length of boundary edges carrying ``tag`` (a tag or a set of tags)."""
    return mesh.boundary_measure(tag)


def parse_tagging(text: str) -> dict:
    """Parse ``"bottom=G3,top=G1:Ga,left=G2:Gb,right=G2:Gb"`` into a tagging rule."""
    rule = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise MeshError(f"bad tagging entry {item!r}, expected side=MECH[:ELEC]")
        side, value = (s.strip() for s in item.split("=", 1))
        mech, _, elec = value.partition(":")
        rule[side] = (mech, elec or None)
    return rule


def _normalize_rule(tagging: Mapping) -> dict:
    rule = {}
    for side in SIDES:
        if side not in tagging:
            raise MeshError(f"tagging rule has no entry for the {side} side")
        value = tagging[side]
        if isinstance(value, str):
            mech, _, elec = value.partition(":")
            value = (mech, elec or None)
        mech, elec = value
        rule[side] = (mech, None if elec in (None, "", "-") else elec)
    extra = set(tagging) - set(SIDES)
    if extra:
        raise MeshError(f"unknown side(s) in tagging rule: {sorted(extra)}")
    return rule


def generate_rect_mesh(width: float, height: float, nx: int, ny: int, tagging) -> Mesh:
    """Structured rectangle ``[0, width] x [0, height]`` with alternating diagonals.

    ``tagging`` maps each side name (bottom, right, top, left) to a
    ``(mech, elec)`` pair, a ``"MECH:ELEC"`` string, or is itself a string
    accepted by :func:`parse_tagging`.
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be at least 1")
    if not (width > 0 and height > 0):
        raise MeshError("width and height must be positive")
    if isinstance(tagging, str):
        tagging = parse_tagging(tagging)
    rule = _normalize_rule(tagging)

    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            n00, n10, n01, n11 = nid(i, j), nid(i + 1, j), nid(i, j + 1), nid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris += [(n00, n10, n11), (n00, n11, n01)]
            else:
                tris += [(n00, n10, n01), (n10, n11, n01)]

    bedges, mech, elec = [], [], []

    def add(side, a, b):
        bedges.append((a, b))
        mech.append(rule[side][0])
        elec.append(rule[side][1])

    for i in range(nx):
        add("bottom", nid(i, 0), nid(i + 1, 0))
    for j in range(ny):
        add("right", nid(nx, j), nid(nx, j + 1))
    for i in range(nx, 0, -1):
        add("top", nid(i, ny), nid(i - 1, ny))
    for j in range(ny, 0, -1):
        add("left", nid(0, j), nid(0, j - 1))

    return Mesh(nodes, np.array(tris), np.array(bedges), tuple(mech), tuple(elec))


def write_mesh(mesh: Mesh, path) -> None:
    lines = [f"nodes {mesh.n_nodes}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"bedges {len(mesh.bedges)}")
    for (i, j), m, e in zip(mesh.bedges.tolist(), mesh.mech_tags, mesh.elec_tags):
        lines.append(f"{i} {j} {m} {e or '-'}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    """Read the line-oriented ASCII mesh format and validate the result."""
    lines = Path(path).read_text().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines):
            pos += 1
            text = lines[pos - 1].strip()
            if text and not text.startswith("#"):
                return pos, text.split()
        raise MeshFormatError(pos + 1, "unexpected end of file")

    def header(keyword):
        lineno, parts = next_line()
        if len(parts) != 2 or parts[0] != keyword:
            raise MeshFormatError(lineno, f"expected '{keyword} <count>'")
        try:
            count = int(parts[1])
        except ValueError:
            raise MeshFormatError(lineno, f"bad count {parts[1]!r}") from None
        if count < 0:
            raise MeshFormatError(lineno, "negative count")
        return count

    def records(count, width, convert):
        out = []
        for _ in range(count):
            lineno, parts = next_line()
            if len(parts) != width:
                raise MeshFormatError(lineno, f"expected {width} fields, got {len(parts)}")
            try:
                out.append(convert(parts))
            except ValueError as exc:
                raise MeshFormatError(lineno, str(exc)) from None
        return out

    nodes = records(header("nodes"), 2, lambda p: (float(p[0]), float(p[1])))
    tris = records(header("triangles"), 3, lambda p: tuple(int(v) for v in p))

    def edge(p):
        if p[2] not in MECH_TAGS:
            raise ValueError(f"unknown mechanical tag {p[2]!r}")
        if p[3] not in ELEC_TAGS + ("-",):
            raise ValueError(f"unknown electric tag {p[3]!r}")
        return int(p[0]), int(p[1]), p[2], None if p[3] == "-" else p[3]

    edges = records(header("bedges"), 4, edge)
    if not edges:
        raise MeshError("mesh file lists no boundary edges")
    return Mesh(
        np.array(nodes, dtype=float).reshape(-1, 2),
        np.array(tris, dtype=np.int64).reshape(-1, 3),
        np.array([(a, b) for a, b, _, _ in edges], dtype=np.int64),
        tuple(m for _, _, m, _ in edges),
        tuple(e for _, _, _, e in edges),
    )
