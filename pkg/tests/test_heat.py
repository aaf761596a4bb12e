import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import heat_refinement_ratios, heat_series_error, heat_symmetry_error
from homotopy_bayes.errors import ContractError, LocationError, RefinementError
from homotopy_bayes.heat import (
    HeatForwardModel,
    HeatGeometry,
    HeatSolver,
    Inclusion,
    StandardizedHeatModel,
    build_mesh,
    element_stiffness,
    load_geometry,
    lognormal_hyperparams,
    observe,
    solve_heat,
    xi_to_kappa,
)


@pytest.fixture(scope="module")
def heat2_32():
    geom, sensors = load_geometry("heat2")
    return geom, sensors, build_mesh(geom, 32)


def test_mesh_without_inclusions():
    mesh = build_mesh(HeatGeometry(), 16)
    assert np.all(mesh.labels == 0)
    assert len(mesh.triangles) == 2 * 16 * math.ceil(0.6 * 16)


def test_mesh_partitions_domain(heat2_32):
    _, _, mesh = heat2_32
    areas = mesh.areas()
    assert np.all(areas > 0)
    assert areas.sum() == pytest.approx(0.6, abs=1e-12)


def test_inclusion_area():
    geom = HeatGeometry(inclusions=(Inclusion((0.5, 0.3), 0.1, 1),))
    mesh = build_mesh(geom, 64)
    area = mesh.areas()[mesh.labels == 1].sum()
    assert area == pytest.approx(np.pi * 0.01, rel=0.02)


def test_refinement_error():
    geom = HeatGeometry(inclusions=(Inclusion((0.5, 0.3), 0.02, 1),))
    with pytest.raises(RefinementError):
        build_mesh(geom, 16)
    with pytest.raises(ContractError):
        build_mesh(HeatGeometry(), 4)


def test_geometry_validation():
    with pytest.raises(ContractError):
        HeatGeometry(inclusions=(Inclusion((0.05, 0.3), 0.1, 1),))
    with pytest.raises(ContractError):
        HeatGeometry(inclusions=(Inclusion((0.4, 0.3), 0.1, 1), Inclusion((0.5, 0.3), 0.1, 2)))
    with pytest.raises(ContractError):
        HeatGeometry(inclusions=(Inclusion((0.4, 0.3), 0.1, 2),))


def test_presets():
    g2, s2 = load_geometry("heat2")
    g6, s6 = load_geometry("heat6")
    assert g2.n_inclusions == 2 and len(s2) == 12
    assert g6.n_inclusions == 6 and len(s6) == 20
    assert g2.top_temperature == 200 and g2.bottom_flux == 2000
    with pytest.raises(ContractError):
        load_geometry("heat3")


def test_series_oracle():
    assert heat_series_error(64) < 0.005


def test_mirror_symmetry():
    assert heat_symmetry_error() < 1e-10


@pytest.mark.slow
def test_refinement_self_convergence():
    diffs, ratios = heat_refinement_ratios()
    assert all(r >= 3 for r in ratios)


def test_galerkin_energy(heat2_32):
    geom, _, mesh = heat2_32
    kappa = [12.0, 40.0]
    solver = HeatSolver(mesh, geom)
    u = solver.solve(kappa)
    kr = solver.region_conductivities(kappa)[mesh.labels]
    ue = u[mesh.triangles]
    per_triangle = kr * np.einsum("ti,tij,tj->t", ue, element_stiffness(mesh), ue)
    assert solver.energy(u, kappa) == pytest.approx(per_triangle.sum(), rel=1e-10)


def test_flux_conservation():
    geom, _ = load_geometry("heat2")
    mesh = build_mesh(geom, 64)
    solver = HeatSolver(mesh, geom)
    u = solver.solve([20.0, 35.0])
    inflow, outflow = solver.boundary_fluxes(u, [20.0, 35.0])
    assert inflow == pytest.approx(2000 * 1.0)
    assert outflow == pytest.approx(inflow, rel=0.01)


def test_observe_contract(heat2_32):
    geom, sensors, mesh = heat2_32
    u = solve_heat(mesh, geom, [20.0, 35.0])
    i = 57
    assert observe(mesh, u, [mesh.vertices[i]])[0] == pytest.approx(u[i], abs=1e-12)
    lin = mesh.vertices[:, 0].copy()
    tri = mesh.triangles[100]
    centroid = mesh.vertices[tri].mean(axis=0)
    assert observe(mesh, lin, [centroid])[0] == pytest.approx(lin[tri].mean(), abs=1e-12)
    y = observe(mesh, u, sensors)
    assert y.shape == (12,)
    assert np.all((y >= 0) & (y <= 200 + 2000 * 0.6 / geom.background_conductivity))
    with pytest.raises(LocationError):
        observe(mesh, u, [[1.5, 0.3]])


def test_condensed_model_matches_full_solve(heat2_32):
    geom, sensors, mesh = heat2_32
    model = HeatForwardModel(geom, sensors, 32)
    for kappa in ([20.0, 35.0], [5.0, 80.0]):
        full = observe(mesh, solve_heat(mesh, geom, kappa), sensors)
        np.testing.assert_allclose(model(kappa), full, rtol=1e-10)
    K = np.array([[20.0, 35.0], [30.0, 30.0]])
    np.testing.assert_allclose(model.batch(K)[1], model(K[1]), rtol=1e-12)


def test_conductivity_monotonicity(heat2_32):
    geom, sensors, _ = heat2_32
    model = HeatForwardModel(geom, sensors, 32)
    sweep = np.array([model([k1, 30.0]) for k1 in np.linspace(10, 60, 5)])
    steps = np.diff(sweep, axis=0)
    assert np.all((np.all(steps > 0, axis=0)) | (np.all(steps < 0, axis=0)))


def test_conductivities_validated(heat2_32):
    geom, _, mesh = heat2_32
    with pytest.raises(ContractError):
        solve_heat(mesh, geom, [20.0])
    with pytest.raises(ContractError):
        solve_heat(mesh, geom, [20.0, -1.0])


def test_lognormal_hyperparameters():
    lam, zeta = lognormal_hyperparams(30, 6)
    assert lam == pytest.approx(3.38152, abs=1e-4)
    assert zeta == pytest.approx(0.19804, abs=1e-5)
    assert lognormal_hyperparams(1, 0) == (0.0, 0.0)


@given(st.floats(0.1, 1e3), st.floats(0.01, 3.0))
def test_lognormal_round_trip(mean, ratio):
    sd = mean * ratio
    lam, zeta = lognormal_hyperparams(mean, sd)
    assert math.exp(lam + zeta**2 / 2) == pytest.approx(mean, rel=1e-12)
    var = (math.exp(zeta**2) - 1) * math.exp(2 * lam + zeta**2)
    assert math.sqrt(var) == pytest.approx(sd, rel=1e-12)


def test_xi_to_kappa():
    lam, zeta = lognormal_hyperparams(30, 6)
    assert xi_to_kappa([0.0], lam, zeta)[0] == pytest.approx(29.415, rel=1e-4)
    assert xi_to_kappa([1.0], lam, zeta)[0] == pytest.approx(35.86, rel=1e-3)
    with pytest.raises(OverflowError):
        xi_to_kappa([1e4], lam, zeta)


@given(st.lists(st.floats(-20, 20), min_size=1, max_size=6))
def test_xi_to_kappa_monotone(xi):
    lam, zeta = lognormal_hyperparams(30, 6)
    a = xi_to_kappa(xi, lam, zeta)
    b = xi_to_kappa(np.asarray(xi) + 0.1, lam, zeta)
    assert np.all(a > 0) and np.all(b > a)


def test_standardized_model(heat2_32):
    geom, sensors, _ = heat2_32
    base = HeatForwardModel(geom, sensors, 32)
    lam, zeta = lognormal_hyperparams(30, 6)
    m = StandardizedHeatModel(base, lam, zeta)
    np.testing.assert_allclose(m([0.5, -1.0]), base(np.exp(lam + zeta * np.array([0.5, -1.0]))))
