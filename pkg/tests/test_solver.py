import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_plateau.functional import area_functional
from conformal_plateau.models import get_preset, h2_geodesic, hyperbolic_cap, psi_from_spec
from conformal_plateau.solver import (SolveConfig, angle_function, check_comparison, el_operator,
                                      interior_gradient_diagnostic, omega, solve_dirichlet)

from conftest import const_phi

GEO = h2_geodesic(2.0, 1.0)


def cap1d(h=0.02):
    return hyperbolic_cap(1, math.pi / 3, h=h).instantiate()


# ---------------------------------------------------------------- operator

def test_el_operator_constant(unit_square):
    grid, g, dom = unit_square
    assert np.all(el_operator(np.full(grid.shape, -1.25), const_phi(grid), g, dom) == 0.0)


def test_el_operator_tilted_plane(unit_square):
    grid, g, dom = unit_square
    x1, _ = grid.coords()
    assert np.max(np.abs(el_operator(x1, const_phi(grid), g, dom))) < 1e-12


def test_el_operator_matches_continuum_on_smooth_field():
    # L(u) = -(u'/ω)' - tan(α) u'/ω for u = sin α on the 1-D cap
    m = hyperbolic_cap(1, math.pi / 4, h=0.0025).instantiate()
    a = m.grid.coords()[0]
    u = np.sin(a)
    up, upp = np.cos(a), -np.sin(a)
    w = np.sqrt(1 + up**2)
    exact = -upp / w**3 - np.tan(a) * up / w
    L = el_operator(u, m.phi, m.g, m.dom)
    assert np.max(np.abs(L - exact)[m.dom.interior]) < 1e-4


# ---------------------------------------------------------------- Dirichlet solves

@pytest.mark.parametrize("preset", ["euclidean-square", "euclidean-disk", "hyperbolic-cap-1d", "hyperbolic-cap-2d"])
def test_constant_data_single_iteration(preset):
    m = get_preset(preset).instantiate()
    u, rep = solve_dirichlet(m.dom, np.full(m.grid.shape, 5.0), m.phi, m.g)
    assert rep.converged and rep.iterations == 1
    assert np.all(u[m.dom.inside] == 5.0)


def test_geodesic_dirichlet_second_order():
    errs = []
    for h in (0.02, 0.01):
        m = cap1d(h)
        psi = GEO.u(m.grid.coords()[0])
        u, rep = solve_dirichlet(m.dom, psi, m.phi, m.g)
        assert rep.converged and rep.max_principle_ok
        errs.append(np.max(np.abs(u - psi)))
    assert abs(math.log2(errs[0] / errs[1]) - 2) < 0.3


def test_boundary_data_imposed_exactly():
    m = cap1d()
    psi = GEO.u(m.grid.coords()[0])
    u, _ = solve_dirichlet(m.dom, psi, m.phi, m.g)
    b = m.dom.boundary
    assert np.array_equal(u.reshape(-1)[b], psi.reshape(-1)[b])


def test_translation_equivariance():
    m = cap1d()
    psi = GEO.u(m.grid.coords()[0])
    u, _ = solve_dirichlet(m.dom, psi, m.phi, m.g)
    ut, _ = solve_dirichlet(m.dom, psi + 3.7, m.phi, m.g)
    assert np.max(np.abs(ut - u - 3.7)) < 1e-10


def test_square_affine_and_zero_data():
    m = get_preset("euclidean-square").instantiate(h=0.1)
    x1 = m.grid.coords()[0]
    u, rep = solve_dirichlet(m.dom, 0.5 - 2.0 * x1, m.phi, m.g)
    assert rep.converged and np.max(np.abs(u - (0.5 - 2.0 * x1))) < 1e-10
    u0, _ = solve_dirichlet(m.dom, np.zeros(m.grid.shape), m.phi, m.g)
    assert np.all(u0 == 0)


def test_disk_product_data_converges_with_max_principle():
    m = get_preset("euclidean-disk").instantiate()
    psi = psi_from_spec("product", m)
    u, rep = solve_dirichlet(m.dom, psi, m.phi, m.g)
    assert rep.converged and rep.max_principle_ok


def test_hemisphere_solve():
    m = get_preset("hyperbolic-2d").instantiate(h=0.04)
    theta = m.grid.coords()[0]
    u, rep = solve_dirichlet(m.dom, 0.5 * np.cos(theta), m.phi, m.g)
    assert rep.converged and rep.max_principle_ok


def test_residual_monotone_along_accepted_steps():
    m = get_preset("euclidean-disk").instantiate()
    psi = 2.0 * psi_from_spec("product", m)
    _, rep = solve_dirichlet(m.dom, psi, m.phi, m.g, SolveConfig(initial="zero"))
    res = [row[1] for row in rep.history]
    assert all(b <= a for a, b in zip(res, res[1:]))


def test_initial_guess_independence():
    m = cap1d()
    psi = GEO.u(m.grid.coords()[0])
    ua, _ = solve_dirichlet(m.dom, psi, m.phi, m.g, SolveConfig(initial="harmonic"))
    ub, _ = solve_dirichlet(m.dom, psi, m.phi, m.g, SolveConfig(initial="zero"))
    assert np.max(np.abs(ua - ub)) <= 1e-8


def test_discrete_local_minimality():
    m = get_preset("euclidean-disk").instantiate()
    psi = psi_from_spec("product", m)
    u, _ = solve_dirichlet(m.dom, psi, m.phi, m.g)
    F = area_functional(u, m.phi, m.g, m.dom)
    rng = np.random.default_rng(9)
    for _ in range(20):
        eta = np.where(m.dom.interior, rng.standard_normal(m.grid.shape), 0.0)
        assert area_functional(np.where(m.dom.inside, u + 1e-3 * eta, 0), m.phi, m.g, m.dom) >= F - 1e-8


def test_drift_invariance_bitwise_for_power_of_two():
    m = cap1d()
    psi = GEO.u(m.grid.coords()[0])
    u1, r1 = solve_dirichlet(m.dom, psi, m.phi, m.g)
    u2, r2 = solve_dirichlet(m.dom, psi, m.phi.scaled(4.0), m.g)
    assert np.array_equal(u1, u2) and r1.iterations == r2.iterations


def test_drift_invariance_general_factor():
    m = cap1d()
    psi = GEO.u(m.grid.coords()[0])
    u1, _ = solve_dirichlet(m.dom, psi, m.phi, m.g)
    u2, _ = solve_dirichlet(m.dom, psi, m.phi.scaled(3.3), m.g)
    assert np.nanmax(np.abs(u1 - u2)) < 1e-12


def test_non_convergence_is_reported():
    m = get_preset("euclidean-disk").instantiate()
    psi = 3.0 * psi_from_spec("product", m)
    u, rep = solve_dirichlet(m.dom, psi, m.phi, m.g, SolveConfig(max_newton=1, initial="zero"))
    assert not rep.converged
    assert np.all(np.isfinite(u[m.dom.inside]))
    assert rep.history and rep.final_residual > 0


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(tol_residual=0)
    with pytest.raises(ValueError):
        SolveConfig(max_newton=0)


def test_non_finite_boundary_data_rejected():
    m = cap1d()
    psi = np.zeros(m.grid.shape)
    psi[0] = np.inf
    with pytest.raises(ValueError, match="node"):
        solve_dirichlet(m.dom, psi, m.phi, m.g)


def test_report_roundtrip():
    m = cap1d()
    _, rep = solve_dirichlet(m.dom, GEO.u(m.grid.coords()[0]), m.phi, m.g)
    d = rep.to_json()
    assert d["converged"] and d["history"][0]["iteration"] == 0
    assert rep.history_csv().splitlines()[0] == "iteration,residual,functional_value,damping"


# ---------------------------------------------------------------- comparison

def test_comparison_ordered_constants():
    m = cap1d()
    u1, _ = solve_dirichlet(m.dom, np.zeros(m.grid.shape), m.phi, m.g)
    u2, _ = solve_dirichlet(m.dom, np.ones(m.grid.shape), m.phi, m.g)
    b = m.dom.boundary
    assert check_comparison(u1, u2, np.zeros(b.size), np.ones(b.size))
    assert np.allclose((u2 - u1)[m.dom.inside], 1.0, atol=1e-14)
    assert check_comparison(u1, u1, np.zeros(b.size), np.zeros(b.size))


@settings(max_examples=100)
@given(seed=st.integers(0, 2**31 - 1))
def test_comparison_random_data(seed):
    m = _CAP
    rng = np.random.default_rng(seed)
    b = m.dom.boundary
    psi1 = np.zeros(m.grid.size)
    psi1[b] = rng.uniform(-1, 1, b.size)
    psi2 = psi1.copy()
    psi2[b] += np.abs(rng.normal(0, 0.5, b.size))
    u1, r1 = solve_dirichlet(m.dom, psi1.reshape(m.grid.shape), m.phi, m.g)
    u2, r2 = solve_dirichlet(m.dom, psi2.reshape(m.grid.shape), m.phi, m.g)
    assert r1.converged and r2.converged
    assert check_comparison(u1, u2, psi1[b], psi2[b])


_CAP = cap1d(0.05)


def test_comparison_detects_violation():
    assert not check_comparison(np.array([1.0]), np.array([0.0]), np.array([0.0]), np.array([1.0]))


# ---------------------------------------------------------------- diagnostics

def test_gradient_diagnostic_trivial_cases(unit_square):
    grid, g, dom = unit_square
    assert interior_gradient_diagnostic(np.full(grid.shape, 2.0), dom, 0.3, (0.5, 0.5), g) == 0.0
    x1, _ = grid.coords()
    assert interior_gradient_diagnostic(x1, dom, 0.3, (0.5, 0.5), g) == pytest.approx(1.0, abs=1e-13)
    with pytest.raises(ValueError):
        interior_gradient_diagnostic(x1, dom, 0.6, (0.5, 0.5), g)


def test_gradient_diagnostic_stabilises():
    vals = []
    for h in (0.01, 0.005):
        m = cap1d(h)
        psi = GEO.u(m.grid.coords()[0])
        u, _ = solve_dirichlet(m.dom, psi, m.phi, m.g)
        vals.append(interior_gradient_diagnostic(u, m.dom, 0.4, (0.0,), m.g))
    assert 0.95 <= vals[1] / vals[0] <= 1.05


def test_angle_function(unit_square):
    grid, g, dom = unit_square
    assert np.all(angle_function(np.full(grid.shape, 3.0), grid, g) == 1.0)
    x1, _ = grid.coords()
    assert np.allclose(angle_function(x1, grid, g), 1 / math.sqrt(2), atol=1e-14)
    u = np.random.default_rng(0).standard_normal(grid.shape)
    theta = angle_function(u, grid, g)
    assert np.all(theta > 0) and np.all(theta <= 1)
    assert np.max(np.abs(theta * omega(u, grid, g) - 1)) < 1e-14
