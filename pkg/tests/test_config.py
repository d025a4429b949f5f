import numpy as np
import pytest

from antiplane.config import ConfigError, DataFamily, RunConfig, build_simulation, load_config, parse_config
from antiplane.mesh import write_mesh

from conftest import square

BASE = """
seed = 3
[mesh]
nx = 4
ny = 4
[time]
T = 1.0
N = 2
"""


def test_defaults_build():
    sim = build_simulation(parse_config(BASE))
    assert sim.grid.N == 2 and sim.mesh.n_nodes == 25
    assert sim.stepper.law.family == "tresca" and sim.config.seed == 3


def test_hash_tracks_text():
    a, b = parse_config(BASE), parse_config(BASE + "\n")
    assert a.sha256 != b.sha256 and a.sha256 == parse_config(BASE).sha256


@pytest.mark.parametrize("extra, msg", [
    ("[bogus]\nx = 1", "unknown section"),
    ("[friction]\nfamily = 'coulomb'", "unknown family"),
    ("[friction]\nr00 = 1.0", "unknown key"),
    ("[solver]\ntol = 0.0", "tolerances must be positive"),
    ("[solver]\ngate_policy = 'maybe'", "gate policy"),
    ("[solver]\ntheta_coupling = 'x'", "theta_coupling"),
    ("[material]\nalpha = -1.0", "alpha"),
    ("[data]\nf0 = { family = 'cubic' }", "unknown family"),
    ("[data]\nf0 = 'x*y'", "expected a number or a table"),
    ("[output]\nstride = 0", "stride"),
    ("[friction]\nfamily = 'tresca'\nL_r = 0.5", "Tresca"),
])
def test_config_errors(extra, msg):
    with pytest.raises(ConfigError, match=msg):
        build_simulation(parse_config(BASE + extra))


@pytest.mark.parametrize("time, msg", [("T = 0.0\nN = 2", "T must be positive"),
                                       ("T = 1.0\nN = 0", "N must be")])
def test_time_validation(time, msg):
    with pytest.raises(ConfigError, match=msg):
        build_simulation(parse_config(f"[mesh]\nnx = 2\nny = 2\n[time]\n{time}"))


def test_invalid_toml():
    with pytest.raises(ConfigError, match="invalid TOML"):
        parse_config("[mesh\nnx = 2")


def test_bad_tagging_is_config_error():
    cfg = RunConfig(mesh={"nx": 2, "ny": 2, "tags": "bottom=G3,top=G2:Ga,left=G2:Gb,right=G2:Gb"})
    with pytest.raises(ConfigError, match="measure"):
        build_simulation(cfg)


def test_lipschitz_parameter():
    law = parse_config(BASE + "[friction]\nfamily = 'affine_saturating'\nr0 = 1.0\na = -0.1\nL_r = 0.4").build_law()
    assert law.a == -0.4 and law.lipschitz == 0.4
    law = parse_config(BASE + "[friction]\nfamily = 'exponential'\nr0 = 1.0\nr_max = 0.5\nL_r = 0.25").build_law()
    assert law.lipschitz == pytest.approx(0.25)


def test_regions_override():
    cfg = parse_config(BASE + "[material]\nalpha = 1.0\nregions = [{ box = [0.0, 1.0, 0.5, 1.0], alpha = 3.0 }]")
    sim = build_simulation(cfg)
    mat = sim.stepper.ops.material
    cent = sim.mesh.nodes[sim.mesh.triangles].mean(axis=1)
    np.testing.assert_array_equal(mat.alpha, np.where(cent[:, 1] >= 0.5, 3.0, 1.0))
    assert sim.stepper.alpha_star == 1.0


def test_data_families():
    x = np.array([0.0, 0.5, 1.0])
    y = np.array([0.0, 0.25, 1.0])
    np.testing.assert_array_equal(DataFamily.parse("f0", 2.5)(x, y, 3.0), 2.5)
    np.testing.assert_array_equal(DataFamily.parse("f0", {"family": "ramp", "rate": 2.0})(x, y, 3.0), 6.0)
    sin = DataFamily.parse("f0", {"family": "sinusoid", "amplitude": 2.0, "kx": 1.0, "ky": 2.0, "omega": 1.0})
    np.testing.assert_allclose(sin(x, y, 0.5), 2.0 * np.cos(np.pi * x) * np.cos(2 * np.pi * y) * np.sin(0.5))
    assert DataFamily.parse("p", 0.0).is_zero and not sin.is_zero


def test_mesh_from_file(tmp_path):
    write_mesh(square(3), tmp_path / "m.txt")
    (tmp_path / "run.toml").write_text("[mesh]\nsource = 'file'\npath = 'm.txt'\n[time]\nT = 1.0\nN = 1\n")
    sim = build_simulation(load_config(tmp_path / "run.toml"))
    assert sim.mesh == square(3)
    (tmp_path / "bad.toml").write_text("[mesh]\nsource = 'file'\npath = 'missing.txt'\n")
    with pytest.raises(ConfigError):
        build_simulation(load_config(tmp_path / "bad.toml"))


def test_output_paths_relative_to_config(tmp_path):
    (tmp_path / "run.toml").write_text(BASE + "[output]\ncsv = 'out/r.csv'\nvtk_dir = 'vtk'\nstride = 2\n")
    out = load_config(tmp_path / "run.toml").output_options()
    assert out == {"csv": str(tmp_path / "out/r.csv"), "vtk_dir": str(tmp_path / "vtk"), "stride": 2}


def test_initial_conditions():
    cfg = parse_config(BASE + "[data]\nu0 = { family = 'sinusoid', amplitude = 1.0, kx = 0.5, ky = 0.5, "
                              "omega = 0.0, phase = 1.5707963267948966 }\ntheta0 = 0.0\n")
    s = build_simulation(cfg).initial_state()
    assert s.u.space.norm(s.u.values) > 0 and np.all(s.theta.values == 0.0)
