"""Command line front end: ``antiplane {mesh,solve,verify,trace-constant}``."""
from __future__ import annotations

import argparse
import logging
import signal
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, build_simulation, load_config
from .mesh import MeshError, generate_rect_mesh, load_mesh, write_mesh
from .output import CsvWriter, StepRecord, write_state_vtk
from .spaces import build_space, estimate_trace_constant
from .stepper import StepError
from .vi_solver import SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4
EXIT_INTERRUPT = 130

SUITES = ("mms", "oracles", "gate", "lemma2", "invariants", "thermal")

log = logging.getLogger("antiplane")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {v}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


# mesh -------------------------------------------------------------------------

def cmd_mesh(args) -> int:
    try:
        mesh = generate_rect_mesh(args.width, args.height, args.nx, args.ny, args.tags)
    except MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles")
    return EXIT_OK


def cmd_trace_constant(args) -> int:
    try:
        mesh = load_mesh(args.mesh)
    except (OSError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    V = build_space(mesh, "V")
    lumped = estimate_trace_constant(V, lumped=True)
    consistent = estimate_trace_constant(V, lumped=False)
    print(f"c_V,h (lumped, used by the solver) = {lumped!r}")
    print(f"c_V,h (consistent boundary mass)   = {consistent!r}")
    return EXIT_OK


# solve ------------------------------------------------------------------------

def _provenance(sim) -> dict:
    st = sim.stepper
    return {
        "antiplane": __version__,
        "config_sha256": sim.config.sha256,
        "mesh_sha256": sim.mesh.sha256(),
        "seed": sim.config.seed,
        "alpha_star": st.alpha_star,
        "trace_constant": st.trace_constant,
        "Z0": st.gate.Z0,
        "L_r": st.gate.lipschitz,
        "T": sim.grid.T,
        "N": sim.grid.N,
    }


class _Interrupted(Exception):
    pass


def _raise_interrupt(signum, frame):
    raise _Interrupted(signal.Signals(signum).name)


def cmd_solve(args) -> int:
    try:
        cfg = load_config(args.config)
        out = cfg.output_options()
        sim = build_simulation(cfg)
    except (ConfigError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error during setup: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    st = sim.stepper
    gate = st.gate
    if not gate.ok:
        msg = f"L_r = {gate.lipschitz!r} is not below Z0 = alpha*/c^2 = {gate.Z0!r}"
        if st.solver.gate_policy == "abort":
            print(f"gate violation, not stepping: {msg}", file=sys.stderr)
            return EXIT_SOLVER
        print(f"warning: {msg}; uniqueness is not guaranteed", file=sys.stderr)

    csv_path = args.csv or out["csv"] or str(Path(args.config).with_suffix(".csv"))
    vtk_dir = args.vtk_dir or out["vtk_dir"]
    stride = out["stride"]

    old = {s: signal.signal(s, _raise_interrupt) for s in (signal.SIGINT, signal.SIGTERM)}
    writer = CsvWriter(csv_path, _provenance(sim))
    try:
        state = sim.initial_state()
        if vtk_dir:
            write_state_vtk(Path(vtk_dir) / "step_00000.vtk", state)
        t0 = time.perf_counter()
        for _ in range(sim.grid.N):
            state = st.advance(state, sim.grid.dt)
            writer.write(StepRecord.from_state(state))
            if vtk_dir and (state.step % stride == 0 or state.step == sim.grid.N):
                write_state_vtk(Path(vtk_dir) / f"step_{state.step:05d}.vtk", state)
            log.info("step %d t=%.6g outer=%d residual=%.3e", state.step, state.t,
                     state.info["outer_iterations"], state.info["residual"])
    except _Interrupted as exc:
        print(f"interrupted ({exc}) after {writer.rows} steps; partial CSV kept at {csv_path}",
              file=sys.stderr)
        return EXIT_INTERRUPT
    except (StepError, SolverError) as exc:
        print(f"solver failure: {exc}; partial CSV ({writer.rows} steps) kept at {csv_path}",
              file=sys.stderr)
        return EXIT_SOLVER
    finally:
        writer.close()
        for s, h in old.items():
            signal.signal(s, h)
    print(f"{sim.grid.N} steps in {time.perf_counter() - t0:.2f} s; wrote {csv_path}")
    return EXIT_OK


# verify -------------------------------------------------------------------------

def _verify_mms(args):
    from .verify.mms import bundled_cases, run_mms

    levels = tuple(int(v) for v in args.levels.split(","))
    ok = True
    for case in bundled_cases():
        rep = run_mms(case, levels=levels)
        print(rep.summary())
        ok &= rep.passed
    return ok


def _verify_oracles(args):
    from .verify.oracles import bundled_surrogates, compare_oracles
    from .verify.studies import tresca_reduction

    ok = True
    worst = 0.0
    for case in bundled_surrogates(seed=args.seed):
        cmp = compare_oracles(case, tol=args.tol)
        vals = [v for v in (cmp.ssn_vs_uzawa, cmp.ssn_vs_brute, cmp.ssn_vs_expected) if v is not None]
        worst = max(worst, *vals)
        if not cmp.passed:
            print(f"  FAIL {cmp.name}: uzawa {cmp.ssn_vs_uzawa:.2e} brute {cmp.ssn_vs_brute} "
                  f"expected {cmp.ssn_vs_expected}")
            ok = False
    print(f"oracle agreement: worst difference {worst:.3e} (limit {10 * args.tol:.1e})")
    tr = tresca_reduction()
    print("constant-bound reduction:")
    print(tr.summary())
    return ok and tr.passed


def _verify_gate(args):
    from .verify.studies import gate_study

    rep = gate_study(seed=args.seed)
    print(rep.summary())
    return rep.passed


def _verify_lemma2(args):
    from .verify.studies import lemma2_stability

    rep = lemma2_stability()
    for nx, r in zip(rep.nx, rep.ratios):
        print(f"  nx={nx:3d}  sup ratio {r:.6e}")
    print(f"  variation {rep.variation:.4f} (limit 2)")
    return rep.passed


def _verify_invariants(args):
    from .verify.studies import four_term_study, structural_invariants

    inv = structural_invariants(seed=args.seed)
    print(inv.summary())
    ft = four_term_study(seed=args.seed)
    print(f"  four-term bound: max ratio {ft.max_ratio!r} over {ft.samples} samples "
          f"(c = {ft.trace_constant:.6f}, L = {ft.lipschitz})")
    return inv.passed and ft.passed


def _verify_thermal(args):
    from .verify.studies import temperature_crosscheck

    rep = temperature_crosscheck()
    for n, d in zip(rep.steps, rep.differences):
        print(f"  N={n:4d}  relative difference {d:.4e}")
    print("  observed orders " + " ".join(f"{o:.3f}" for o in rep.orders))
    return rep.passed


_SUITE_RUNNERS = {"mms": _verify_mms, "oracles": _verify_oracles, "gate": _verify_gate,
                  "lemma2": _verify_lemma2, "invariants": _verify_invariants, "thermal": _verify_thermal}


def cmd_verify(args) -> int:
    np.seterr(all="ignore")
    t0 = time.perf_counter()
    ok = _SUITE_RUNNERS[args.suite](args)
    print(f"verify {args.suite}: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - t0:.1f} s)")
    return EXIT_OK if ok else EXIT_VERIFY


# parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="antiplane", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log every step")
    sub = p.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("mesh", help="generate a mesh")
    msub = pm.add_subparsers(dest="kind", required=True)
    pr = msub.add_parser("rect", help="structured triangulation of a rectangle")
    pr.add_argument("--width", type=_positive_float, default=1.0)
    pr.add_argument("--height", type=_positive_float, default=1.0)
    pr.add_argument("--nx", type=_positive_int, required=True)
    pr.add_argument("--ny", type=_positive_int, required=True)
    pr.add_argument("--tags", required=True,
                    help="side tagging, e.g. bottom=G3,top=G1:Ga,left=G2:Gb,right=G2:Gb")
    pr.add_argument("--out", "-o", default="mesh.txt")
    pr.set_defaults(func=cmd_mesh)

    ps = sub.add_parser("solve", help="run a simulation from a TOML config")
    ps.add_argument("config")
    ps.add_argument("--csv", help="override [output] csv")
    ps.add_argument("--vtk-dir", help="override [output] vtk_dir")
    ps.set_defaults(func=cmd_solve)

    pv = sub.add_parser("verify", help="run a verification suite")
    pv.add_argument("suite", choices=SUITES)
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--tol", type=_positive_float, default=1e-10)
    pv.add_argument("--levels", default="4,8,16,32", help="mesh levels for mms")
    pv.set_defaults(func=cmd_verify)

    pt = sub.add_parser("trace-constant", help="discrete trace constant of a mesh")
    pt.add_argument("mesh")
    pt.set_defaults(func=cmd_trace_constant)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_INTERRUPT


if __name__ == "__main__":
    sys.exit(main())
