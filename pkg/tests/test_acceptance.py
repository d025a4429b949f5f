"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned."""
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from antiplane.assembly import BoundaryData, MaterialField, assemble_forms
from antiplane.cli import main
from antiplane.friction import FrictionLaw
from antiplane.stepper import CoupledStepper, decoupling_defect
from antiplane.verify.mms import bundled_cases, run_mms
from antiplane.verify.oracles import bundled_surrogates, compare_oracles
from antiplane.verify.studies import (four_term_study, gate_study, lemma2_stability, structural_invariants,
                                      temperature_crosscheck, tresca_reduction)

from conftest import square

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SYMMETRY_SLACK = 1e-12
FOUR_TERM_LIMIT = 1.0 + 1e-9
SOLVER_TOL = 1e-10
ORACLE_LIMIT = 10 * SOLVER_TOL
FRICTIONLESS_LIMIT = 1e-12
GATE_FRACTION = 0.9
GATE_RATIO_SLACK = 0.1
DECOUPLING_LIMIT = 1e-10
TEMPORAL_ORDER = 0.9
MMS_RATE = 0.9
LEMMA2_VARIATION = 2.0


@pytest.fixture
def report(capsys):
    """Print a verdict line outside pytest's capture, then assert it."""
    def _report(number, name, ok, detail, elapsed=None, budget=None):
        in_time = budget is None or elapsed <= budget
        verdict = "PASS" if ok and in_time else "FAIL"
        timing = "" if elapsed is None else f" [{elapsed:.1f} s" + ("" if budget is None else f" / {budget:g} s") + "]"
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:2d} {name}: {verdict} {detail}{timing}")
        assert ok, detail
        assert in_time, f"runtime {elapsed:.1f} s over budget {budget} s"
    return _report


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def test_01_structural_invariants(report):
    inv, dt = _timed(structural_invariants, nx=16, samples=1000)
    assert inv.slack == SYMMETRY_SLACK
    detail = (f"symmetric={all(inv.symmetric.values())} "
              + " ".join(f"min_ratio[{k}]={v:.15f}" for k, v in inv.ellipticity_min_ratio.items()))
    report(1, "structural invariants", inv.passed, detail, dt, 10)


def test_02_four_term_bound(report):
    ft, dt = _timed(four_term_study, nx=16, samples=1000)
    report(2, "four-term Lipschitz bound", ft.samples == 1000 and ft.max_ratio <= FOUR_TERM_LIMIT,
           f"max_ratio={ft.max_ratio!r} limit={FOUR_TERM_LIMIT!r}", dt, 30)


def test_03_oracle_equivalence(report):
    t0 = time.perf_counter()
    cases = bundled_surrogates()
    worst, failed = 0.0, []
    for case in cases:
        cmp = compare_oracles(case, tol=SOLVER_TOL)
        vals = [v for v in (cmp.ssn_vs_uzawa, cmp.ssn_vs_brute, cmp.ssn_vs_expected) if v is not None]
        worst = max(worst, *vals)
        if not cmp.passed:
            failed.append(case.name)
    dt = time.perf_counter() - t0
    ok = not failed and worst <= ORACLE_LIMIT and len(cases) >= 50
    report(3, "oracle equivalence", ok,
           f"cases={len(cases)} worst={worst:.3e} limit={ORACLE_LIMIT:.0e} failed={failed}", dt, 60)


def test_04_tresca_reduction(report):
    tr, dt = _timed(tresca_reduction)
    outer = sorted({c.outer_iterations for c in tr.cases})
    err = max(c.frictionless_error for c in tr.cases)
    ok = outer == [1] and err <= FRICTIONLESS_LIMIT
    report(4, "Tresca reduction", ok, f"cases={len(tr.cases)} outer={outer} frictionless_err={err:.2e}", dt)


def test_05_gate_behavior(report):
    fractions = (0.0, 0.25, 0.5, 0.75, GATE_FRACTION)
    rep, dt = _timed(gate_study, fractions=fractions, tol=SOLVER_TOL)
    pts = rep.guaranteed()
    assert len(pts) == len(rep.points) == 3 * 3 * len(fractions)
    conv = all(p.converged for p in pts)
    excess = max(p.max_ratio - p.bound for p in pts)
    gap = max(p.uniqueness_gap for p in pts)
    ok = conv and excess <= GATE_RATIO_SLACK and gap <= 10 * SOLVER_TOL
    report(5, "gate behavior", ok and rep.passed,
           f"points={len(pts)} converged={conv} max(ratio-bound)={excess:.3e} max_gap={gap:.2e}", dt)


def test_06_decoupling_identity(report):
    mesh = square(8)
    mat = MaterialField.uniform(mesh, alpha=1.3, mu=0.8, e=0.45, beta=1.7, Me=(0.2, -0.1), K=1.0, Ke=1.0)
    ops = assemble_forms(mesh, mat)
    data = BoundaryData(f0=lambda x, y, t: 4.0 * np.cos(np.pi * x) * (1 - y) * (1 + t),
                        f2=lambda x, y, t: 2.0 * np.ones_like(x),
                        q0=lambda x, y, t: (1 + t) * np.ones_like(x),
                        q2=lambda x, y, t: x * t,
                        p=lambda x, y, t: np.sin(t) * np.ones_like(x))
    st = CoupledStepper(ops, data, FrictionLaw.affine_saturating(0.5, -0.2, heat="frictional"))
    state = st.initialize(ops.V.interpolate(lambda x, y, t: x * (1 - y)), ops.E.zeros())
    defects = [decoupling_defect(st, state)]
    for _ in range(20):
        state = st.advance(state, 0.05)
        defects.append(decoupling_defect(st, state))
    worst = max(defects)
    report(6, "decoupling identity", worst <= DECOUPLING_LIMIT,
           f"steps={len(defects) - 1} max_defect={worst:.2e} limit={DECOUPLING_LIMIT:.0e}")


def test_07_temperature_crosscheck(report):
    rep, dt = _timed(temperature_crosscheck)
    ok = len(rep.orders) >= 2 and min(rep.orders) >= TEMPORAL_ORDER
    report(7, "temperature integrator cross-check", ok and rep.passed,
           "orders=" + ",".join(f"{o:.3f}" for o in rep.orders), dt, 120)


def test_08_mms_convergence(report):
    t0 = time.perf_counter()
    rates, ok = {}, True
    for case in bundled_cases():
        rep = run_mms(case, levels=(4, 8, 16, 32), threshold=MMS_RATE)
        ok &= rep.passed and len(rep.h) >= 3
        rates.update({f"{case.name}.{k}": v for k, v in rep.rates.items()})
    dt = time.perf_counter() - t0
    report(8, "MMS convergence", ok, " ".join(f"{k}={v:.3f}" for k, v in rates.items()), dt, 300)


def test_09_thermal_stability_constant(report):
    rep, dt = _timed(lemma2_stability)
    ok = all(np.isfinite(rep.ratios)) and max(rep.ratios) > 0 and rep.variation <= LEMMA2_VARIATION
    report(9, "thermal stability constant", ok and rep.passed,
           "ratios=" + ",".join(f"{r:.4e}" for r in rep.ratios) + f" variation={rep.variation:.4f}", dt)


def test_10_determinism(report, tmp_path, monkeypatch):
    monkeypatch.setenv("ANTIPLANE_THREADS", "1")
    cfg = tmp_path / "slip_weakening.toml"
    shutil.copy(CONFIGS / cfg.name, cfg)
    paths = [tmp_path / "run1.csv", tmp_path / "run2.csv"]
    codes = [main(["solve", str(cfg), "--csv", str(p)]) for p in paths]
    a, b = (p.read_bytes() for p in paths)
    report(10, "determinism", codes == [0, 0] and a == b and len(a) > 0,
           f"exit={codes} bytes={len(a)} identical={a == b}")
