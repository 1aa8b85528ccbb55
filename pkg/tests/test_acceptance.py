"""Acceptance criteria on the bundled four-agent ring.

Each test records a single PASS/FAIL line (shown in the terminal summary and
printed when the file is run as a script) and then asserts it.
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from hybridobs import pipeline
from hybridobs.certification import (
    assemble_error_system,
    below_diagonal_max,
    check_iss_bound,
    compute_certificate,
    error_layout,
    lyapunov_value,
    monodromy,
    monodromy_families,
)
from hybridobs.decomposition import build_decomposition, find_hop_depths
from hybridobs.generators import random_instance
from hybridobs.numerics import eigvals, matrix_exponential, subspace_distance
from hybridobs.scenario import bundled_ring4
from hybridobs.simulator import (
    DisturbanceSpec,
    Scenario,
    generate_disturbances,
    initial_error,
    measure_decay_rate,
    simulate,
    simulate_error_system,
)
from hybridobs.synthesis import synthesize

from conftest import ACCEPTANCE_LINES

ALPHA, T = 1.0, 0.1
DECAY = math.exp(-ALPHA * T)
D_INF, W_INF = 0.04, 0.02


def record(cid, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def ring():
    sf = bundled_ring4()
    d = pipeline.design(sf)
    es, cert = pipeline.certify(sf, d.decomp, d.gains)
    return sf, d, es, cert


def plane(idx):
    return np.eye(4)[:, idx]


def test_criterion_1_decomposition(ring):
    sf = ring[0]
    start = time.perf_counter()
    hops = find_hop_depths(sf.plant, sf.graph, ALPHA)
    decomp = build_decomposition(sf.plant, sf.graph, hops.depths)
    elapsed = time.perf_counter() - start
    own = {0: [0, 1], 1: [0, 1], 2: [2, 3], 3: [2, 3]}
    other = {0: [2, 3], 1: [2, 3], 2: [0, 1], 3: [0, 1]}
    dist0 = max(subspace_distance(decomp.W(i, 0), plane(own[i])) for i in range(4))
    dist1 = max(
        subspace_distance(decomp.W(i, 1), plane(other[i])) if decomp.dim(i, 1) == 2 else np.inf
        for i in range(4))
    ok = hops.depths == (1, 1, 1, 1) and dist0 <= 1e-9 and dist1 <= 1e-9 and elapsed < 1.0
    record(1, ok, f"hop depths {hops.depths} (required (1, 1, 1, 1)); "
                  f"max dist W_i0 {dist0:.2e}, W_i1 {dist1:.2e} (<= 1e-9); {elapsed:.3f} s (< 1 s)")


def test_criterion_2_property1(ring):
    sf = ring[0]
    start = time.perf_counter()
    hops = find_hop_depths(sf.plant, sf.graph, ALPHA)
    decomp = build_decomposition(sf.plant, sf.graph, hops.depths)
    gains = synthesize(decomp, sf.plant, sf.graph, sf.targets)
    elapsed = time.perf_counter() - start
    local = [c.value for c in gains.report.checks if c.kind == "local"]
    cons = [c.value for c in gains.report.checks if c.kind == "consensus"]
    ok = (len(local) == 4 and cons and max(local) <= -5 + 1e-8
          and max(cons) <= DECAY + 1e-8 and elapsed < 1.0)
    record(2, ok, f"max local abscissa {max(local):.4f} (<= -5), max consensus radius "
                  f"{max(cons):.4f} (<= {DECAY:.4f}); {elapsed:.3f} s (< 1 s)")


def test_criterion_3_error_system_oracle(ring):
    sf, d, es, _ = ring
    start = time.perf_counter()
    scn = pipeline.build_scenario(sf, d.decomp, d.gains, t_final=10.0, h=1e-3, noise=True)
    layout = error_layout(d.decomp, sf.plant, sf.graph)
    dist = generate_disturbances(scn.disturbance, scn.t_final, scn.h, scn.T,
                                 layout.d_dim, layout.w_dim)
    obs = simulate(scn, dist)
    direct = simulate_error_system(es, initial_error(scn), dist, scn.t_final, scn.h)
    elapsed = time.perf_counter() - start
    aligned = np.array_equal(obs.t, direct.t) and np.array_equal(obs.k, direct.k)
    dev = float(np.max(np.abs(obs.eps - direct.eps))) if aligned else np.inf
    ok = aligned and dev <= 1e-8 and elapsed < 10.0
    record(3, ok, f"max |eps_observers - eps_direct| {dev:.2e} (<= 1e-8) over 10 s, "
                  f"h = 1e-3, noise on; {elapsed:.2f} s (< 10 s)")


def test_criterion_4_monodromy(ring):
    es = ring[2]
    mono = matrix_exponential(es.A, es.T) @ es.J
    union = np.concatenate([eigvals(F) for F in monodromy_families(es).values()])
    # strict per-eigenvalue matching (optimal assignment, no cluster averaging)
    ev = eigvals(mono)
    cost = np.abs(ev[:, None] - union[None, :])
    r, c = linear_sum_assignment(cost)
    mismatch = float(cost[r, c].max()) if ev.size == union.size else np.inf
    _, eta_raw = monodromy(es)
    ok = mismatch <= 1e-8 and eta_raw <= DECAY
    record(4, ok, f"eigenvalue mismatch {mismatch:.2e} (<= 1e-8); "
                  f"eta_raw {eta_raw:.4f} (<= {DECAY:.4f})")


def test_criterion_5_decay(ring):
    sf, d, es, cert = ring
    start = time.perf_counter()
    x0, _ = sf.initial_conditions()
    rates, worst = [], np.inf
    for seed in range(10):
        rng = np.random.default_rng(seed)
        xhat0 = x0 + rng.standard_normal((4, 4))
        traj = simulate(pipeline.build_scenario(sf, d.decomp, d.gains, noise=False,
                                                xhat0=xhat0))
        est = measure_decay_rate(traj)
        rates.append(est.rate if est.defined else -np.inf)
        eps = traj.eps_norm()
        envelope = cert.kappa * np.exp(-ALPHA * traj.t) * eps[0]
        worst = min(worst, float(np.min(envelope - eps)))
    elapsed = time.perf_counter() - start
    # rounding floor for the envelope comparison once both sides reach ~1e-14
    ok = min(rates) >= ALPHA - 1e-3 and worst >= -1e-12 and elapsed < 30.0
    record(5, ok, f"min measured rate {min(rates):.3f} (>= {ALPHA} - 1e-3) over 10 seeds; "
                  f"min envelope margin {worst:.2e} (>= 0, kappa {cert.kappa:.4g}); "
                  f"{elapsed:.2f} s (< 30 s)")


def test_criterion_6_iss(ring):
    sf, d, es, cert = ring
    steady_cap = cert.gamma_C * D_INF + cert.gamma_D * W_INF
    ok_all, worst_margin, worst_steady = True, np.inf, 0.0
    for seed in range(20):
        traj = simulate(pipeline.build_scenario(sf, d.decomp, d.gains, noise=True, seed=seed))
        rep = check_iss_bound(traj, cert, D_INF, W_INF)
        steady = float(traj.total_error_norm()[traj.t >= 5.0].max())
        ok_all &= rep.ok and math.isfinite(steady) and steady <= steady_cap
        worst_margin = min(worst_margin, rep.worst_margin)
        worst_steady = max(worst_steady, steady)
    record(6, ok_all, f"ISS bound holds on 20 noisy runs (worst margin {worst_margin:.3g}); "
                      f"steady error {worst_steady:.3g} <= gamma_C*0.04 + gamma_D*0.02 "
                      f"= {steady_cap:.3g}")


def test_criterion_7_perturbations(ring):
    sf, d, es, cert = ring
    lines, ok_all = [], True
    for noise in (False, True):
        base = pipeline.build_scenario(sf, d.decomp, d.gains, noise=noise)
        peak = float(simulate(base).total_error_norm().max())
        for variant, kw in (("jitter", {"eps_tau": 1e-2}), ("delay", {"delta": 5e-3})):
            traj = simulate(base.replace(variant=variant, **kw))
            norms = traj.total_error_norm()
            late = float(norms[traj.t >= 2.0].max())
            ok = bool(np.all(np.isfinite(norms))) and late <= 5 * peak
            ok_all &= ok
            lines.append(f"{variant}{'+noise' if noise else ''} {late:.3g}")
    record(7, ok_all, "post-2 s peak error vs 5x nominal peak: " + ", ".join(lines))


def _criterion8_instance(seed):
    inst = random_instance(seed, n_max=8, p_max=5)
    plant, graph = inst.plant, inst.graph
    hops = find_hop_depths(plant, graph, ALPHA)
    decomp = build_decomposition(plant, graph, hops.depths)
    gains = synthesize(decomp, plant, graph, inst.targets)
    es = assemble_error_system(decomp, plant, gains, graph, T)
    cert = compute_certificate(es, ALPHA, grid_points=201)
    return inst, decomp, gains, es, cert


def test_criterion_8_property_suites():
    start = time.perf_counter()
    fails = {k: 0 for k in ("orthogonality", "triangularity", "jump decrease",
                            "flow constancy", "determinism", "norm identity")}
    count = 60
    for seed in range(count):
        inst, decomp, gains, es, cert = _criterion8_instance(seed)
        plant, graph = inst.plant, inst.graph
        n = plant.n
        if any(np.linalg.norm(decomp.stacked(i).T @ decomp.stacked(i) - np.eye(n)) > 1e-9
               for i in range(plant.p)):
            fails["orthogonality"] += 1
        if max(below_diagonal_max(es.A, es), below_diagonal_max(es.J, es)) > 1e-12:
            fails["triangularity"] += 1
        rng = np.random.default_rng(seed)
        mono, _ = monodromy(es)
        e = rng.standard_normal(es.n_eps)
        v = math.sqrt(e @ cert.P @ e)
        if math.sqrt(e @ mono.T @ cert.P @ mono @ e) > cert.eta * v + 1e-9 * max(1.0, v):
            fails["jump decrease"] += 1
        v0 = lyapunov_value(es, cert.P, e, 0.0)
        vt = lyapunov_value(es, cert.P, matrix_exponential(es.A, 0.05) @ e, 0.05)
        if abs(vt - v0) > 1e-8 * max(1.0, v0):
            fails["flow constancy"] += 1
        scn = Scenario(plant, graph, gains, decomp, T, ALPHA, t_final=0.5, h=1e-2,
                       x0=rng.standard_normal(n), xhat0=rng.standard_normal((plant.p, n)),
                       disturbance=DisturbanceSpec(0.04, 0.02, seed, "clipped_gaussian"))
        a, b = simulate(scn), simulate(scn)
        if not (np.array_equal(a.x, b.x) and np.array_equal(a.xhat, b.xhat)):
            fails["determinism"] += 1
        if np.max(np.abs(a.eps_norm() - a.total_error_norm())) > 1e-10 * max(
                1.0, float(a.total_error_norm().max())):
            fails["norm identity"] += 1
    elapsed = time.perf_counter() - start
    ok = not any(fails.values()) and elapsed < 60.0
    summary = ", ".join(f"{k} {count - v}/{count}" for k, v in fails.items())
    record(8, ok, f"{summary} random instances (n <= 8, p <= 5); {elapsed:.1f} s (< 60 s)")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
