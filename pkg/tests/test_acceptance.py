"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import math
import time
import warnings

import numpy as np

from conformal_plateau.asymptotic import ExhaustionSchedule, extend_boundary_data, solve_asymptotic
from conformal_plateau.barriers import (CollarData, barrier_constants, barrier_functions, collar_data,
                                        phi_mean_convexity, verify_barrier)
from conformal_plateau.functional import (AreaDiscretization, area_functional, area_gradient, dual_area,
                                          miranda_rearrange, random_column_set, sample_test_pairs, subgraph,
                                          subgraph_perimeter)
from conformal_plateau.geometry import ChartGrid, ConformalFactor, MetricField
from conformal_plateau.models import (PRESETS, get_preset, h2_geodesic, hyperbolic_cap, hyperbolic_model,
                                      metric_catalog, phi_catalog, psi_from_spec)
from conformal_plateau.solver import check_comparison, solve_dirichlet

import conftest
from conftest import flat_metric, full_domain

GEO = h2_geodesic(2.0, 1.0)
LN3 = math.log(3.0)


def record(n: int, ok: bool, detail: str):
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_slice_minimality():
    models = [p.instantiate() for p in PRESETS.values()]
    worst_res, worst_it, bad = 0.0, 0, []
    t0 = time.perf_counter()
    for m in models:
        for c in (-2.5, 0.0, 1.0, 7.25):
            u, rep = solve_dirichlet(m.dom, np.full(m.grid.shape, c), m.phi, m.g)
            worst_res = max(worst_res, rep.final_residual)
            worst_it = max(worst_it, rep.iterations)
            if not (rep.converged and np.all(u[m.dom.inside] == c)):
                bad.append((m.name, c))
    elapsed = time.perf_counter() - t0
    ok = not bad and worst_res <= 1e-12 and worst_it <= 2 and elapsed < 1.0
    record(1, ok, f"{len(models)} presets x 4 constants, max residual {worst_res:.1e}, "
                  f"max iterations {worst_it}, solve time {elapsed:.2f}s, failures {bad}")


def test_criterion_02_duality():
    rng = np.random.default_rng(2)
    worst, sampled_ok, count = 0.0, True, 0
    for name in ("euclidean-square", "euclidean-disk", "hyperbolic-cap-2d"):
        m = get_preset(name).instantiate()
        disc = AreaDiscretization(m.dom, m.phi, m.g)
        for _ in range(34 if name != "hyperbolic-cap-2d" else 32):
            u = rng.standard_normal(m.grid.shape) * rng.uniform(0.1, 3.0)
            F = area_functional(u, m.phi, m.g, m.dom)
            worst = max(worst, abs(dual_area(u, m.phi, m.g, m.dom).dual_lower_bound - F))
            family = sample_test_pairs(disc, np.where(m.dom.inside, u, 0.0).reshape(-1), 3, rng)
            rep = dual_area(u, m.phi, m.g, m.dom, mode="sampled", family=family)
            sampled_ok &= rep.dual_lower_bound <= F + 1e-10
            count += 1
    record(2, worst <= 1e-12 and sampled_ok and count == 100,
           f"{count} fields over 3 presets, max |dual - primal| {worst:.1e}, sampled <= primal: {sampled_ok}")


def test_criterion_03_subgraph_identity():
    rng = np.random.default_rng(3)
    worst = 0.0
    names = ("euclidean-interval", "euclidean-square", "euclidean-disk", "hyperbolic-cap-2d")
    models = {n: get_preset(n).instantiate() for n in names}
    for k in range(100):
        m = models[names[k % len(names)]]
        u = rng.standard_normal(m.grid.shape) * rng.uniform(0.1, 3.0)
        F = area_functional(u, m.phi, m.g, m.dom)
        worst = max(worst, abs(subgraph_perimeter(subgraph(u, m.dom), m.phi, m.g, m.dom) - F))
    record(3, worst <= 1e-12, f"100 fields, max |P(subgraph u) - F(u)| {worst:.1e}")


def test_criterion_04_miranda():
    rng = np.random.default_rng(4)
    models = [get_preset("euclidean-interval").instantiate(h=0.1),
              get_preset("euclidean-disk").instantiate(h=0.25),
              get_preset("hyperbolic-cap-2d").instantiate(h=0.1)]
    increases = non_strict = multi = 0
    t0 = time.perf_counter()
    for k in range(200):
        m = models[k % 3]
        S = random_column_set(m.dom, rng, max_intervals=4)
        before = subgraph_perimeter(S, m.phi, m.g, m.dom)
        after = subgraph_perimeter(subgraph(miranda_rearrange(S), m.dom, S.window), m.phi, m.g, m.dom)
        increases += after > before + 1e-10
        if S.max_intervals() >= 2:
            multi += 1
            non_strict += not after < before
    elapsed = time.perf_counter() - t0
    record(4, increases == 0 and non_strict == 0 and elapsed < 10.0,
           f"200 column sets ({multi} with >= 2 intervals), increases {increases}, "
           f"non-strict {non_strict}, {elapsed:.2f}s")


def test_criterion_05_geodesic_convergence():
    t0 = time.perf_counter()
    errs = []
    for h in (0.02, 0.01, 0.005):
        m = hyperbolic_cap(1, math.pi / 3, h=h).instantiate()
        psi = GEO.u(m.grid.coords()[0])
        u, rep = solve_dirichlet(m.dom, psi, m.phi, m.g)
        errs.append(float(np.max(np.abs(u - psi))) if rep.converged else math.inf)
    elapsed = time.perf_counter() - t0
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = bool(np.all(np.abs(orders - 2.0) <= 0.3)) and errs[-1] <= 1e-4 and elapsed < 30
    record(5, ok, f"errors {', '.join(f'{e:.3e}' for e in errs)}, orders "
                  f"{', '.join(f'{o:.3f}' for o in orders)}, {elapsed:.2f}s")


def test_criterion_06_asymptotic_plateau():
    t0 = time.perf_counter()
    m = hyperbolic_model(1, h=0.005).instantiate()
    psi = psi_from_spec(f"trace:0,{LN3!r}", m)
    sched = ExhaustionSchedule.default(m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = solve_asymptotic(m, psi, sched)
    elapsed = time.perf_counter() - t0
    err = float(np.max(np.abs(res.u - GEO.u(m.grid.coords()[0]))[sched.core]))
    certified = all(c["certified"] for c in res.certificates)
    margins = [v for row in res.rows for v in row[7:9] if np.isfinite(v)]
    sandwich = bool(margins) and min(margins) >= -1e-6
    last_diff = res.rows[-1][3]
    parts = {"cauchy<=1e-6": res.converged, "oracle<=5e-3": err <= 5e-3, "certified": certified,
             "sandwich": sandwich, "runtime<120s": elapsed < 120}
    record(6, all(parts.values()),
           f"{len(res.rows)} steps down to r={res.rows[-1][0]:.4g}, last K-diff {last_diff:.2e}, "
           f"oracle error on K {err:.2e}, min sandwich margin {min(margins):.2e}, {elapsed:.1f}s; "
           + ", ".join(f"{k}={'ok' if v else 'FAILED'}" for k, v in parts.items()))


def test_criterion_07_max_and_comparison():
    rng = np.random.default_rng(7)
    models = [hyperbolic_cap(1, math.pi / 3, h=0.02).instantiate(), get_preset("euclidean-square").instantiate()]
    bound_bad = order_bad = nonconv = 0
    for m in models:
        b = m.dom.boundary
        for _ in range(100):
            psi1 = np.zeros(m.grid.size)
            psi1[b] = rng.uniform(-2, 2, b.size)
            psi2 = psi1.copy()
            psi2[b] += np.abs(rng.normal(0, 0.7, b.size))
            runs = []
            for p in (psi1, psi2):
                u, rep = solve_dirichlet(m.dom, p.reshape(m.grid.shape), m.phi, m.g)
                nonconv += not rep.converged
                vals = u[m.dom.inside]
                bound_bad += not (vals.min() >= p[b].min() - 1e-8 and vals.max() <= p[b].max() + 1e-8)
                runs.append(u)
            order_bad += not check_comparison(runs[0], runs[1], psi1[b], psi2[b])
    record(7, bound_bad == 0 and order_bad == 0 and nonconv == 0,
           f"2 presets x 100 ordered pairs, max-principle violations {bound_bad}, "
           f"comparison violations {order_bad}, non-converged {nonconv}")


def test_criterion_08_barrier_constants():
    rng = np.random.default_rng(8)
    bad = 0
    for _ in range(200):
        lo, hi = -rng.uniform(0, 2), rng.uniform(0, 2)
        cd = CollarData(r0=rng.uniform(0.1, 1.5), sup_dpsi=rng.uniform(0, 5), sup_d2psi=rng.uniform(0, 5),
                        sup_lap_psi=rng.uniform(0, 5), c_g=1 + rng.uniform(0, 1))
        bc = barrier_constants((lo, hi), cd)
        rn = bc.r1 * bc.nu
        bad += not (rn < 1 and bc.kappa >= bc.nu / (1 - rn) and bc.kappa >= math.exp(bc.mu1 * bc.nu) / bc.r1)
    fracs = []
    for h in (0.01, 0.005):
        m = hyperbolic_model(1, h=h).instantiate()
        dist = m.dist_to_dN()
        for spec in ("const:0", f"trace:0,{LN3!r}"):
            ext, _ = extend_boundary_data(psi_from_spec(spec, m), m.dom, dist)
            b = ext.reshape(-1)[m.dom.boundary]
            bc = barrier_constants((b.min(), b.max()), collar_data(ext, m.dom, m.g, dist, math.pi / 4, m.phi),
                                   r1_min=2 * h)
            up, um = barrier_functions(ext, bc, dist)
            rep = verify_barrier(up, um, m.phi, m.g, m.dom, dist, bc.r1)
            fracs += [rep.frac_plus, rep.frac_minus]
    record(8, bad == 0 and min(fracs) >= 0.99,
           f"200 random configurations, inequality violations {bad}; min sign fraction {min(fracs):.4f} "
           f"(h in 0.01, 0.005; psi const and trace)")


def test_criterion_09_convexity_formula():
    worst = 0.0
    for k in range(1, 6):
        phi0 = k * math.pi / 12
        for n in (1, 2):
            m = hyperbolic_cap(n, phi0, h=0.005).instantiate()
            rep = phi_mean_convexity(m.dom, m.phi, m.g)
            exact = (n - 1) / math.tan(phi0) + n * math.tan(phi0)
            worst = max(worst, float(np.nanmax(np.abs(rep.values - exact))) / exact)
    record(9, worst <= 1e-2, f"caps k*pi/12, k=1..5, n=1,2 at h=0.005, max relative error {worst:.2e}")


def _five_by_five(kind):
    if kind == "flat":
        grid = ChartGrid(((0.0, 1.0), (0.0, 1.0)), (5, 5))
        g = flat_metric(grid)
        phi = ConformalFactor.from_values(grid, np.exp(0.3 * grid.coords()[0]))
    else:
        grid = ChartGrid(((0.0, 2 * math.pi), (0.3, 1.2)), (5, 5), periodic=(True, False))
        g = MetricField.from_sigma(metric_catalog("round-sphere-polar", grid.coords(), {}))
        phi = ConformalFactor(*phi_catalog("sec", grid.coords(), {"axis": 1}))
    return grid, g, full_domain(grid, g), phi


def test_criterion_10_gradient_consistency():
    rng = np.random.default_rng(10)
    worst = 0.0
    for kind in ("flat", "sphere"):
        grid, g, dom, phi = _five_by_five(kind)
        for _ in range(10):
            u = rng.standard_normal(grid.shape)
            G = area_gradient(u, phi, g, dom)
            for idx in zip(*np.nonzero(dom.interior)):
                up, um = u.copy(), u.copy()
                up[idx] += 1e-6
                um[idx] -= 1e-6
                fd = (area_functional(up, phi, g, dom) - area_functional(um, phi, g, dom)) / 2e-6
                worst = max(worst, abs(fd - G[idx]))
    # invariances: r-translation and φ → cφ
    m = hyperbolic_cap(1, math.pi / 3, h=0.02).instantiate()
    psi = GEO.u(m.grid.coords()[0])
    u, _ = solve_dirichlet(m.dom, psi, m.phi, m.g)
    ut, _ = solve_dirichlet(m.dom, psi + 3.7, m.phi, m.g)
    shift = float(np.max(np.abs(ut - u - 3.7)))
    u2, _ = solve_dirichlet(m.dom, psi, m.phi.scaled(2.0), m.g)
    u3, _ = solve_dirichlet(m.dom, psi, m.phi.scaled(3.0), m.g)
    bitwise = bool(np.array_equal(u, u2))
    drift3 = float(np.max(np.abs(u3 - u)))
    m2 = get_preset("hyperbolic-cap-2d").instantiate(h=0.1)
    w = rng.standard_normal(m2.grid.shape)
    F = area_functional(w, m2.phi, m2.g, m2.dom)
    scale_exact = area_functional(w, m2.phi.scaled(2.0), m2.g, m2.dom) == 4.0 * F
    translate = abs(area_functional(w + 3.7, m2.phi, m2.g, m2.dom) - F) <= 1e-12 * F
    ok = worst <= 1e-6 and shift <= 1e-10 and bitwise and drift3 <= 1e-12 and scale_exact and translate
    record(10, ok, f"max |FD - gradient| {worst:.1e} on 20 random 5x5 fields; translation {shift:.1e}; "
                   f"phi->2phi bitwise {bitwise}, phi->3phi {drift3:.1e}; F(2phi)=4F exact {scale_exact}")
