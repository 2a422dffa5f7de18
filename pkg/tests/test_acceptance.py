"""Acceptance criteria, one test per criterion at its stated tolerance.

The conftest hook prints one PASS/FAIL line per criterion in the summary.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from vortexforms.cli import parse_config
from vortexforms.dynamics import VortexDynamics, integrate_trajectory
from vortexforms.expr import SpaceSpec, evaluate
from vortexforms.exterior import (Form, compose, decompose, exterior_derivative, interior_product,
                                  wedge)
from vortexforms.invariants import (ExpressionChain, check_liouville, check_relative_invariant,
                                    integrate_over_chain, invariant_power, solution_tube)
from vortexforms.systems import (HamiltonianSpec, NambuSpec, example4_sigma, hamiltonian_sigma,
                                 nambu_sigma)
from vortexforms.wellposed import analyze, check_degree

from oracles import (Polynomial, levi_civita_velocity, max_difference, random_form, random_point,
                     random_vector)

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def fixture(name):
    return parse_config(json.loads((CONFIGS / f"{name}.json").read_text()))


def osc_sigma():
    return hamiltonian_sigma(HamiltonianSpec.build(1, "(p^2 + q^2)/2"))


@pytest.mark.acceptance(1, "exterior algebra identities on random forms")
def test_exterior_identities(record_property):
    rng = np.random.default_rng(12345)
    start = time.perf_counter()
    worst = {"dd": 0.0, "leibniz_d": 0.0, "leibniz_i": 0.0, "split": 0.0, "roundtrip": 0}
    count = 120
    for _ in range(count):
        n = int(rng.integers(1, 6))
        sp = SpaceSpec(tuple(f"x{i}" for i in range(1, n + 1)))
        pts = [random_point(rng, sp) for _ in range(2)]
        p = int(rng.integers(0, n + 1))
        q = int(rng.integers(0, n + 2 - p))
        a, b = random_form(rng, sp, p), random_form(rng, sp, q)
        da = exterior_derivative(a)
        worst["dd"] = max(worst["dd"], max_difference(exterior_derivative(da), Form.zero(sp, p + 2), pts))
        lhs = exterior_derivative(wedge(a, b))
        rhs = wedge(da, b) + wedge(a, exterior_derivative(b)) * (-1) ** p
        worst["leibniz_d"] = max(worst["leibniz_d"], max_difference(lhs, rhs, pts))
        if p >= 1 and q >= 1:
            v = random_vector(rng, sp)
            lhs = interior_product(v, wedge(a, b))
            rhs = wedge(interior_product(v, a), b) + wedge(a, interior_product(v, b)) * (-1) ** p
            worst["leibniz_i"] = max(worst["leibniz_i"], max_difference(lhs, rhs, pts))
        s = random_form(rng, sp, min(p, n), spatial=True)
        split = wedge(Form.differential(sp, "t"), exterior_derivative(s, "time")) + exterior_derivative(s, "spatial")
        worst["split"] = max(worst["split"], max_difference(exterior_derivative(s), split, pts))
        if p >= 1:
            if compose(*decompose(a)) != a:
                worst["roundtrip"] += 1
    elapsed = time.perf_counter() - start
    residual = max(worst["dd"], worst["leibniz_d"], worst["leibniz_i"], worst["split"])
    record_property("forms", count)
    record_property("max_residual", f"{residual:.2e}")
    record_property("runtime_s", f"{elapsed:.2f}")
    assert residual <= 1e-10, worst
    assert worst["roundtrip"] == 0
    assert elapsed < 30.0


@pytest.mark.acceptance(2, "Hamilton equations against polynomial oracle")
def test_hamilton_oracle(record_property):
    rng = np.random.default_rng(2)
    worst = 0.0
    for i in range(20):
        m = 1 + i % 3
        names = HamiltonianSpec.build(m, "0").space.coordinates
        poly = Polynomial.random(rng, names, max_degree=4, count=8)
        dyn = VortexDynamics.from_sigma(hamiltonian_sigma(HamiltonianSpec.build(m, poly.text())))
        X = rng.uniform(-1.5, 1.5, size=(50, 2 * m))
        V = dyn.velocity(float(rng.uniform(0, 1)), X)
        for x, v in zip(X, V):
            g = poly.gradient(x)
            ref = np.concatenate([g[m:], -g[:m]])
            worst = max(worst, np.linalg.norm(v - ref) / np.linalg.norm(ref))
    record_property("max_rel_error", f"{worst:.2e}")
    assert worst <= 1e-10


@pytest.mark.acceptance(3, "Nambu velocity against explicit epsilon sum")
def test_nambu_oracle(record_property):
    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(10):
        n = 3 + i % 3
        names = NambuSpec.build(n, ["0"] * (n - 1)).names
        polys = [Polynomial.random(rng, names, max_degree=3) for _ in range(n - 1)]
        dyn = VortexDynamics.from_sigma(nambu_sigma(NambuSpec.build(n, [p.text() for p in polys])))
        X = rng.uniform(-1, 1, size=(20, n))
        V = dyn.velocity(0.0, X)
        for x, v in zip(X, V):
            ref = levi_civita_velocity([p.gradient(x) for p in polys])
            worst = max(worst, np.linalg.norm(v - ref) / np.linalg.norm(ref))
    record_property("max_rel_error", f"{worst:.2e}")
    assert worst <= 1e-10


@pytest.mark.acceptance(4, "degree test table and odd-dimensional fixture witness")
def test_degree_table_and_example4(record_property):
    accepted = {(n, p) for n in range(2, 9) for p in range(1, n) if check_degree(n, p).passed}
    expected = {(n, 1) for n in range(2, 9) if n % 2 == 0} | {(n, n - 1) for n in range(2, 9)}
    report = analyze(example4_sigma())
    record_property("accepted_pairs", len(accepted))
    record_property("fixture", f"{report.verdict}, witness rank {report.witness.rank}")
    assert accepted == expected
    assert report.verdict == "ill-posed"
    assert report.witness.rank == 2


def _max_drift(values):
    values = np.asarray(values)
    return float(np.max(np.abs(values - values[0])))


@pytest.mark.acceptance(5, "conserved quantities over [0, 10]")
def test_first_integrals(record_property):
    start = time.perf_counter()
    dyn = VortexDynamics.from_sigma(osc_sigma())
    traj = integrate_trajectory(dyn, [1.0, 0.0], 0.0, 10.0)
    osc_drift = _max_drift(0.5 * np.sum(traj.states ** 2, axis=1))
    osc_time = time.perf_counter() - start

    start = time.perf_counter()
    cfg = fixture("nambu3")
    dyn = VortexDynamics.from_sigma(cfg.sigma)
    traj3 = integrate_trajectory(dyn, cfg.initial, 0.0, 10.0)
    names = cfg.space.names
    drifts = [_max_drift([evaluate(H, dict(zip(names, (t,) + tuple(x))))
                          for t, x in zip(traj3.times, traj3.states)])
              for H in cfg.spec.hamiltonians]
    nambu_time = time.perf_counter() - start
    record_property("oscillator_drift", f"{osc_drift:.2e}")
    record_property("nambu_drifts", ", ".join(f"{d:.2e}" for d in drifts))
    record_property("runtime_s", f"{osc_time:.2f}/{nambu_time:.2f}")
    assert traj.ok and traj3.ok
    assert osc_drift <= 1e-6
    assert max(drifts) <= 1e-6
    assert osc_time < 5.0 and nambu_time < 5.0


@pytest.mark.acceptance(6, "relative integral invariants")
def test_relative_invariants(record_property):
    sigma = osc_sigma()
    circle = ExpressionChain.spatial(sigma.space, 1, ["cos(2*pi*u1)", "sin(2*pi*u1)"], cycle=True)
    loop = integrate_over_chain(invariant_power(sigma, 0, spatial=True), circle)
    osc = check_relative_invariant(sigma, circle, 0.0, 1.0)
    cfg = fixture("hamiltonian2")
    task = cfg.chain_tasks[0]
    assert task.kind == "relative" and cfg.spec.m == 2
    m2 = check_relative_invariant(cfg.sigma, task.chain, 0.0, 1.0, task.k, order=task.order)
    record_property("loop_plus_pi", f"{loop + math.pi:.2e}")
    record_property("oscillator_drift", f"{osc.drift_abs:.2e}")
    record_property("m2_drift", f"{m2.drift_abs:.2e}")
    assert abs(loop + math.pi) <= 1e-10
    assert osc.drift_abs <= 1e-6
    assert m2.drift_abs <= 1e-6


@pytest.mark.acceptance(7, "Liouville volume preservation")
def test_liouville(record_property):
    systems = {
        "oscillator": (osc_sigma(), [(-1.0, 1.0)] * 2),
        "m2": (fixture("hamiltonian2").sigma, fixture("hamiltonian2").liouville["box"]),
        "nambu3": (fixture("nambu3").sigma, fixture("nambu3").liouville["box"]),
    }
    worst = {}
    for name, (sigma, box) in systems.items():
        dyn = VortexDynamics.from_sigma(sigma)
        worst[name] = 0.0
        for t1 in (0.25, 0.5, 0.75, 1.0):
            rep = check_liouville(dyn, box, t1, 16)
            assert rep.meta["failures"] == []
            worst[name] = max(worst[name], rep.max_abs_det_minus_one)
    for name, w in worst.items():
        record_property(name, f"{w:.2e}")
    assert max(worst.values()) <= 1e-5


@pytest.mark.acceptance(8, "integral of d sigma over a solution tube")
def test_solution_tube(record_property):
    sigma = osc_sigma()
    dyn = VortexDynamics.from_sigma(sigma)
    circle = ExpressionChain.spatial(sigma.space, 1, ["cos(2*pi*u1)", "sin(2*pi*u1)"], cycle=True)
    tube = solution_tube(circle, dyn, 0.0, 1.0, order=16)
    curves = len({tuple(u[:1]) for u in tube.nodes})
    value = integrate_over_chain(exterior_derivative(sigma), tube, order=16)
    record_property("curves", curves)
    record_property("integral", f"{value:.2e}")
    assert curves == 16
    assert abs(value) <= 1e-8


@pytest.mark.acceptance(9, "invariants output is reproducible")
def test_invariants_reproducible(tmp_path, record_property):
    outputs = []
    for i in range(2):
        out = tmp_path / f"run{i}.json"
        proc = subprocess.run(
            [sys.executable, "-m", "vortexforms", "invariants", str(CONFIGS / "nambu3.json"),
             "--seed", "11", "-o", str(out)],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0, proc.stderr
        outputs.append(out.read_bytes())
    record_property("bytes", len(outputs[0]))
    assert outputs[0] == outputs[1]
