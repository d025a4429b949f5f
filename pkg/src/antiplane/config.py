"""TOML run configuration and the objects built from it."""
from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .assembly import BoundaryData, MaterialField, assemble_forms
from .friction import FAMILIES, HEAT_MODELS, FrictionLaw
from .mesh import generate_rect_mesh, load_mesh
from .stepper import THETA_COUPLINGS, CoupledStepper, TimeGrid
from .vi_solver import SolverConfig

SECTIONS = ("mesh", "material", "friction", "time", "solver", "output", "data")
DATA_KEYS = ("f0", "f2", "q0", "q2", "p", "theta_R", "u0", "theta0")
DEFAULT_TAGS = "bottom=G3,top=G1:Ga,left=G2:Gb,right=G2:Gb"


class ConfigError(ValueError):
    pass


def _check_keys(section: str, table: dict, allowed) -> None:
    extra = set(table) - set(allowed)
    if extra:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(sorted(extra))}")


# data families ---------------------------------------------------------------

@dataclass(frozen=True)
class DataFamily:
    """Built-in analytic data ``g(x, y, t)``.

    constant
        ``value``.
    ramp
        ``rate * t``.
    sinusoid
        ``amplitude cos(kx pi x) cos(ky pi y) sin(omega t + phase)``.
    """

    family: str = "constant"
    value: float = 0.0
    rate: float = 0.0
    amplitude: float = 0.0
    kx: float = 0.0
    ky: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    def __call__(self, x, y, t):
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.full_like(x, self.value)
        if self.family == "ramp":
            return np.full_like(x, self.rate * t)
        return (self.amplitude * np.cos(self.kx * np.pi * x) * np.cos(self.ky * np.pi * np.asarray(y))
                * np.sin(self.omega * t + self.phase))

    @property
    def is_zero(self) -> bool:
        return ((self.family == "constant" and self.value == 0.0)
                or (self.family == "ramp" and self.rate == 0.0)
                or (self.family == "sinusoid" and self.amplitude == 0.0))

    @classmethod
    def parse(cls, key: str, spec) -> "DataFamily":
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return cls("constant", value=float(spec))
        if not isinstance(spec, dict):
            raise ConfigError(f"[data] {key}: expected a number or a table")
        spec = dict(spec)
        fam = spec.pop("family", "constant")
        allowed = {"constant": ("value",), "ramp": ("rate",),
                   "sinusoid": ("amplitude", "kx", "ky", "omega", "phase")}
        if fam not in allowed:
            raise ConfigError(f"[data] {key}: unknown family {fam!r} (constant, ramp, sinusoid)")
        _check_keys(f"data.{key}", spec, allowed[fam])
        try:
            return cls(fam, **{k: float(v) for k, v in spec.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[data] {key}: {exc}") from exc


# configuration -----------------------------------------------------------------

@dataclass
class RunConfig:
    mesh: dict = field(default_factory=dict)
    material: dict = field(default_factory=dict)
    friction: dict = field(default_factory=dict)
    time: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    seed: int = 0
    raw: bytes = b""
    base_dir: Path = Path(".")

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.raw).hexdigest()

    # validation happens while building each part
    def build_mesh(self):
        m = dict(self.mesh)
        source = m.pop("source", "rect")
        if source == "rect":
            _check_keys("mesh", m, ("width", "height", "nx", "ny", "tags"))
            try:
                return generate_rect_mesh(float(m.get("width", 1.0)), float(m.get("height", 1.0)),
                                          int(m.get("nx", 8)), int(m.get("ny", 8)), m.get("tags", DEFAULT_TAGS))
            except ValueError as exc:
                raise ConfigError(f"[mesh] {exc}") from exc
        if source == "file":
            _check_keys("mesh", m, ("path",))
            if "path" not in m:
                raise ConfigError("[mesh] source = 'file' needs a path")
            path = Path(m["path"])
            if not path.is_absolute():
                path = self.base_dir / path
            try:
                return load_mesh(path)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"[mesh] {exc}") from exc
        raise ConfigError(f"[mesh] unknown source {source!r} (rect, file)")

    def build_material(self, mesh) -> MaterialField:
        m = dict(self.material)
        regions = m.pop("regions", [])
        keys = ("alpha", "mu", "e", "beta", "Me", "K", "Ke")
        _check_keys("material", m, keys)
        try:
            mat = MaterialField.uniform(mesh, **{k: (np.asarray(v, dtype=float) if k in ("Me", "K") else float(v))
                                                 for k, v in m.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[material] {exc}") from exc
        if regions:
            mat = _apply_regions(mesh, mat, regions)
        try:
            mat.validate(mesh)
        except ValueError as exc:
            raise ConfigError(f"[material] {exc}") from exc
        return mat

    def build_law(self) -> FrictionLaw:
        f = dict(self.friction)
        _check_keys("friction", f, ("family", "r0", "a", "b", "r_max", "L_r", "heat"))
        family = f.get("family", "tresca")
        if family not in FAMILIES:
            raise ConfigError(f"[friction] unknown family {family!r}")
        if f.get("heat", "zero") not in HEAT_MODELS:
            raise ConfigError(f"[friction] heat must be one of {HEAT_MODELS}")
        r0 = float(f.get("r0", 0.0))
        r_max = float(f.get("r_max", np.inf))
        a = float(f.get("a", 0.0))
        b = float(f.get("b", 1.0))
        if "L_r" in f:
            L = float(f["L_r"])
            if L < 0:
                raise ConfigError("[friction] L_r must be nonnegative")
            if family == "tresca" and L != 0.0:
                raise ConfigError("[friction] a Tresca law has L_r = 0")
            if family == "affine_saturating":
                a = np.copysign(L, a) if a != 0.0 else L
            if family == "exponential":
                if r_max == r0:
                    raise ConfigError("[friction] exponential law with r_max = r0 cannot have L_r > 0")
                b = L / abs(r_max - r0)
        try:
            return FrictionLaw(family, r0=r0, a=a, b=b, r_max=r_max, heat=f.get("heat", "zero"))
        except ValueError as exc:
            raise ConfigError(f"[friction] {exc}") from exc

    def build_grid(self) -> TimeGrid:
        _check_keys("time", self.time, ("T", "N"))
        try:
            return TimeGrid(float(self.time.get("T", 1.0)), int(self.time.get("N", 10)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[time] {exc}") from exc

    def build_solver(self) -> tuple:
        s = dict(self.solver)
        theta_coupling = s.pop("theta_coupling", "lagged")
        thermal_mass = s.pop("thermal_mass", "l2")
        coupling_tol = float(s.pop("coupling_tol", 1e-10))
        if theta_coupling not in THETA_COUPLINGS:
            raise ConfigError(f"[solver] theta_coupling must be one of {THETA_COUPLINGS}")
        if not coupling_tol > 0:
            raise ConfigError("[solver] coupling_tol must be positive")
        _check_keys("solver", s, ("tol", "newton_tol", "eps_schedule", "max_newton", "max_outer",
                                  "gate_policy", "acceleration", "iterative_threshold", "velocity_scale"))
        if "eps_schedule" in s:
            s["eps_schedule"] = tuple(float(e) for e in s["eps_schedule"])
        if s.get("acceleration") in ("none", ""):
            s["acceleration"] = None
        try:
            cfg = SolverConfig(**s)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[solver] {exc}") from exc
        return cfg, theta_coupling, thermal_mass, coupling_tol

    def build_data(self) -> tuple:
        _check_keys("data", self.data, DATA_KEYS)
        fams = {k: DataFamily.parse(k, self.data.get(k, 0.0)) for k in DATA_KEYS}
        bd = BoundaryData(**{k: fams[k] for k in ("f0", "f2", "q0", "q2", "p", "theta_R")})
        return bd, fams["u0"], fams["theta0"]

    def output_options(self) -> dict:
        _check_keys("output", self.output, ("csv", "vtk_dir", "stride"))
        stride = int(self.output.get("stride", 1))
        if stride < 1:
            raise ConfigError("[output] stride must be at least 1")
        out = {"csv": self.output.get("csv"), "vtk_dir": self.output.get("vtk_dir"), "stride": stride}
        for k in ("csv", "vtk_dir"):
            if out[k] is not None and not Path(out[k]).is_absolute():
                out[k] = str(self.base_dir / out[k])
        return out


def _apply_regions(mesh, mat: MaterialField, regions) -> MaterialField:
    """Override constants on triangles whose centroid lies in ``box = [x0, x1, y0, y1]``."""
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    arrays = {k: np.array(getattr(mat, k)) for k in ("alpha", "mu", "e", "beta", "Me", "K")}
    for i, reg in enumerate(regions):
        reg = dict(reg)
        box = reg.pop("box", None)
        if box is None or len(box) != 4:
            raise ConfigError(f"[material] region {i}: box = [x0, x1, y0, y1] required")
        _check_keys(f"material.regions[{i}]", reg, arrays.keys())
        x0, x1, y0, y1 = map(float, box)
        inside = (cent[:, 0] >= x0) & (cent[:, 0] <= x1) & (cent[:, 1] >= y0) & (cent[:, 1] <= y1)
        for k, v in reg.items():
            v = np.asarray(v, dtype=float)
            if k == "K" and v.ndim == 0:
                v = v * np.eye(2)
            arrays[k][inside] = v
    return MaterialField(Ke=mat.Ke, **arrays)


def parse_config(text: str, base_dir=".") -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    seed = doc.pop("seed", 0)
    extra = set(doc) - set(SECTIONS)
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return RunConfig(**{s: dict(doc.get(s, {})) for s in SECTIONS}, seed=seed,
                     raw=text.encode(), base_dir=Path(base_dir))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text, path.parent)


@dataclass
class Simulation:
    config: RunConfig
    stepper: CoupledStepper
    grid: TimeGrid
    u0: object
    theta0: object

    @property
    def mesh(self):
        return self.stepper.ops.mesh

    def initial_state(self):
        ops = self.stepper.ops
        return self.stepper.initialize(ops.V.interpolate(self.u0), ops.E.interpolate(self.theta0))


def build_simulation(cfg: RunConfig) -> Simulation:
    mesh = cfg.build_mesh()
    mat = cfg.build_material(mesh)
    law = cfg.build_law()
    grid = cfg.build_grid()
    solver, coupling, thermal_mass, coupling_tol = cfg.build_solver()
    data, u0, th0 = cfg.build_data()
    cfg.output_options()
    ops = assemble_forms(mesh, mat)
    stepper = CoupledStepper(ops, data, law, solver, theta_coupling=coupling, coupling_tol=coupling_tol,
                             thermal_mass=thermal_mass)
    return Simulation(cfg, stepper, grid, u0, th0)
