"""Per-step CSV records and legacy VTK snapshots."""
from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .mesh import Mesh


@dataclass(frozen=True)
class StepRecord:
    step: int
    t: float
    outer_iterations: int
    newton_iterations: int
    residual: float
    norm_w: float
    norm_u: float
    norm_phi: float
    norm_theta: float
    stick_nodes: int
    slip_nodes: int
    max_traction: float
    gate_margin: float

    @classmethod
    def columns(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_state(cls, state) -> "StepRecord":
        info = state.info
        return cls(
            step=state.step, t=float(state.t),
            outer_iterations=int(info.get("outer_iterations", 0)),
            newton_iterations=int(info.get("newton_iterations", 0)),
            residual=float(info.get("residual", 0.0)),
            norm_w=state.w.space.norm(state.w.values),
            norm_u=state.u.space.norm(state.u.values),
            norm_phi=state.phi.space.norm(state.phi.values),
            norm_theta=state.theta.space.norm(state.theta.values),
            stick_nodes=int(info.get("stick", 0)),
            slip_nodes=int(info.get("slip", 0)),
            max_traction=float(info.get("max_traction", 0.0)),
            gate_margin=float(info.get("gate_margin", 0.0)),
        )


def format_value(v) -> str:
    """Shortest round-trip text, so equal runs give equal bytes."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class CsvWriter:
    """Writes ``# key: value`` provenance lines, a header row, then one row per record.

    Rows are flushed as they are written, so a run that stops early leaves a
    valid partial file behind.
    """

    def __init__(self, path, provenance: dict | None = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="\n")
        for key, value in (provenance or {}).items():
            text = value if isinstance(value, str) else format_value(value)
            self._fh.write(f"# {key}: {text}\n")
        self._fh.write(",".join(StepRecord.columns()) + "\n")
        self._fh.flush()
        self.rows = 0

    def write(self, record: StepRecord) -> None:
        self._fh.write(",".join(format_value(v) for v in astuple(record)) + "\n")
        self._fh.flush()
        self.rows += 1

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.flush()
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_csv(path) -> tuple:
    """Return ``(provenance dict, column names, float array of rows)``."""
    prov, rows, header = {}, [], None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(": ")
            prov[key] = value
        elif header is None:
            header = tuple(line.split(","))
        elif line:
            rows.append([float(v) for v in line.split(",")])
    return prov, header, np.array(rows, dtype=float).reshape(-1, len(header or ()))


def write_vtk(path, mesh: Mesh, point_data: dict, title: str = "antiplane") -> None:
    """Legacy ASCII unstructured grid; ``point_data`` maps names to nodal arrays."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_nodes} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.nodes.tolist()]
    m = mesh.n_triangles
    lines.append(f"CELLS {m} {4 * m}")
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"CELL_TYPES {m}")
    lines += ["5"] * m
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name, values in point_data.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_nodes,):
            raise ValueError(f"point data {name!r} needs one value per node")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(v) for v in values.tolist()]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


def write_state_vtk(path, state) -> None:
    mesh = state.u.space.mesh
    write_vtk(path, mesh, {"u": state.u.full(), "phi": state.phi.full(),
                           "theta": state.theta.full(), "w": state.w.full()},
              title=f"step {state.step} t={state.t!r}")
