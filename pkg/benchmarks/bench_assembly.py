"""Element-kernel timings: compiled backend against the numpy fallback.

Run with ``python3 benchmarks/bench_assembly.py [--sizes 64,128,256] [--repeat 5]``.
Both backends are called through ``antiplane.kernels`` on the same mesh, and
their outputs are compared bitwise before timing.
"""
import argparse
import timeit

import numpy as np

from antiplane import kernels
from antiplane.mesh import generate_rect_mesh

TAGS = "bottom=G3,top=G1:Ga,left=G2:Gb,right=G2:Gb"


def _cases(mesh):
    tris = mesh.triangles
    m = len(tris)
    rng = np.random.default_rng(0)
    coef = rng.uniform(0.5, 2.0, m)
    tensor = np.tile(np.array([[1.0, 0.2], [0.2, 0.8]]), (m, 1, 1))
    vec = rng.standard_normal((m, 2))
    area, grad = kernels.p1_geometry(mesh.nodes, tris, backend="python")
    return {
        "p1_geometry": lambda b: kernels.p1_geometry(mesh.nodes, tris, backend=b),
        "stiffness": lambda b: kernels.stiffness_values(grad, area, coef, backend=b),
        "tensor_stiffness": lambda b: kernels.tensor_stiffness_values(grad, area, tensor, backend=b),
        "mass": lambda b: kernels.mass_values(area, backend=b),
        "advection": lambda b: kernels.advection_values(grad, area, vec, backend=b),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="64,128,256")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if kernels.BACKEND != "cython":
        print("compiled kernels are not available; only the fallback can be timed")
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    print(f"{'kernel':18s} {'nx':>5s} {'elements':>9s} " + " ".join(f"{b + ' [ms]':>14s}" for b in backends)
          + ("  speedup  bitwise" if len(backends) == 2 else ""))
    for nx in (int(s) for s in args.sizes.split(",")):
        mesh = generate_rect_mesh(1.0, 1.0, nx, nx, TAGS)
        for name, fn in _cases(mesh).items():
            times = [min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) * 1e3 for b in backends]
            line = f"{name:18s} {nx:5d} {mesh.n_triangles:9d} " + " ".join(f"{t:14.3f}" for t in times)
            if len(backends) == 2:
                line += f"  {times[0] / times[1]:7.2f}  {_same(fn('python'), fn('cython'))}"
            print(line)


if __name__ == "__main__":
    main()
