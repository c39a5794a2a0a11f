import math
import warnings

import numpy as np
import pytest

from conformal_plateau.asymptotic import (ExhaustionError, ExhaustionSchedule, extend_boundary_data,
                                          solve_asymptotic)
from conformal_plateau.geometry import gradient
from conformal_plateau.models import get_preset, h2_geodesic, hyperbolic_model, psi_from_spec

TRACE = "trace:0,1.0986122886681098"  # (ln 1, ln 3) at α = (−π/2, +π/2)


@pytest.fixture(scope="module")
def hyp():
    return hyperbolic_model(1, h=0.01).instantiate()


def test_constant_data_converges_first_step(hyp):
    sched = ExhaustionSchedule.default(hyp)
    res = solve_asymptotic(hyp, np.full(hyp.grid.shape, 0.7), sched)
    assert res.converged and len(res.rows) == 1
    assert np.all(res.u[np.isfinite(res.u)] == 0.7)


def test_extension_constant(hyp):
    ext, flagged = extend_boundary_data(np.full(hyp.grid.shape, -2.0), hyp.dom, hyp.dist_to_dN())
    assert np.all(ext[hyp.dom.inside] == -2.0)


def test_extension_interval_halves(hyp):
    psi = psi_from_spec(TRACE, hyp)
    ext, flagged = extend_boundary_data(psi, hyp.dom, hyp.dist_to_dN())
    a = hyp.grid.coords()[0]
    assert np.all(ext[a < -1e-12] == 0.0)
    assert np.all(ext[a > 1e-12] == math.log(3))
    assert flagged.sum() <= 1


def test_extension_normal_derivative_first_order():
    # exact distance 1 - r: the staircase-seeded FMM distance carries O(1)
    # kinks at O(h) from the boundary nodes and masks the rate
    res = []
    for h in (0.04, 0.02, 0.01):
        m = get_preset("euclidean-disk").instantiate(h=h)
        x, y = m.grid.coords()
        r = np.hypot(x, y)
        psi = np.where(r > 0, x / np.maximum(r, 1e-300), 0.0)
        dist = np.where(m.dom.inside, 1.0 - r, np.nan)
        ext, _ = extend_boundary_data(psi, m.dom, dist)
        band = m.dom.interior & (dist >= 3 * h) & (dist <= 0.4)
        Dp = gradient(np.where(m.dom.inside, ext, 0.0), m.grid)
        Dd = gradient(np.where(m.dom.inside, dist, 0.0), m.grid)
        res.append(float(np.mean(np.abs(np.einsum("i...,i...->...", Dp, Dd))[band])))
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert res[2] < res[1] < res[0]
    assert np.all(np.abs(orders - 1) < 0.2), orders


def test_schedule_invariants(hyp):
    sched = ExhaustionSchedule.default(hyp)
    r = np.array(sched.r_values)
    h = max(hyp.grid.spacing)
    assert r[0] == pytest.approx(math.pi / 8)
    assert r[-1] == pytest.approx(4 * h)
    assert np.all(np.diff(r) < 0) and np.all(r >= 2 * h) and np.all(r < sched.r0)
    assert sched.core.any() and sched.cauchy_tol == 1e-6


def test_schedule_floor_below_two_h_warns(hyp):
    with pytest.warns(UserWarning, match="below 2h"):
        sched = ExhaustionSchedule.default(hyp, r_min=0.001)
    assert min(sched.r_values) >= 2 * max(hyp.grid.spacing) - 1e-15


def test_schedule_validation(hyp):
    core = np.ones(hyp.grid.shape, dtype=bool)
    with pytest.raises(ValueError):
        ExhaustionSchedule((0.2, 0.3), core, r0=0.5)
    with pytest.raises(ValueError):
        ExhaustionSchedule((0.6,), core, r0=0.5)
    with pytest.raises(ValueError):
        ExhaustionSchedule((0.2,), np.zeros_like(core), r0=0.5)
    with pytest.raises(ValueError):
        ExhaustionSchedule.default(hyp, ratio=1.0)


@pytest.fixture(scope="module")
def geodesic_run(hyp):
    psi = psi_from_spec(TRACE, hyp)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return psi, solve_asymptotic(hyp, psi, ExhaustionSchedule.default(hyp))


def test_geodesic_recovered_on_core(hyp, geodesic_run):
    _, res = geodesic_run
    sched = ExhaustionSchedule.default(hyp)
    a = hyp.grid.coords()[0]
    err = np.max(np.abs(res.u - h2_geodesic(2.0, 1.0).u(a))[sched.core])
    assert err < 5e-3


def test_uniform_bound_and_barrier_sandwich(geodesic_run):
    _, res = geodesic_run
    assert res.bound_ok
    assert res.barrier is not None and res.barrier.satisfied()
    # rows with r > r1 have no collar band and report NaN
    lower = np.array([row[7] for row in res.rows])
    upper = np.array([row[8] for row in res.rows])
    ok = np.isfinite(lower)
    assert ok.sum() >= 2
    assert np.all(lower[ok] >= -1e-6) and np.all(upper[ok] >= -1e-6)


def test_every_schedule_domain_certified(geodesic_run):
    _, res = geodesic_run
    assert res.certificates and all(c["certified"] for c in res.certificates)


def test_cauchy_differences_contract(geodesic_run):
    _, res = geodesic_run
    diffs = [row[3] for row in res.rows]
    assert all(b <= a for a, b in zip(diffs[1:], diffs[2:]))
    assert res.contraction_ok


def test_history_csv_columns(geodesic_run):
    _, res = geodesic_run
    lines = res.history_csv().splitlines()
    assert lines[0].split(",")[:6] == ["r", "iterations", "residual", "linf_diff_K", "min_u", "max_u"]
    assert len(lines) == len(res.rows) + 1


def test_translation_equivariance(hyp, geodesic_run):
    psi, res = geodesic_run
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res_t = solve_asymptotic(hyp, psi + 0.4, ExhaustionSchedule.default(hyp))
    ok = np.isfinite(res.u)
    assert np.max(np.abs(res_t.u[ok] - res.u[ok] - 0.4)) < 1e-9


def test_schedule_ratio_independence(hyp, geodesic_run):
    psi, res = geodesic_run
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res3 = solve_asymptotic(hyp, psi, ExhaustionSchedule.default(hyp, ratio=1 / 3))
    K = ExhaustionSchedule.default(hyp).core
    # both runs end at r = 4h; the final solves share the domain and data
    assert np.max(np.abs(res3.u[K] - res.u[K])) <= 2e-6


def test_non_convex_schedule_domain_aborts():
    m = hyperbolic_model(1, h=0.02).instantiate(phi_id="exp-linear", phi_params={"b": -20.0, "axis": 0})
    with pytest.raises(ExhaustionError) as exc:
        solve_asymptotic(m, np.zeros(m.grid.shape), ExhaustionSchedule.default(m))
    assert exc.value.r == pytest.approx(math.pi / 8)
    assert "r = " in str(exc.value)
