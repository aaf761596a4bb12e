import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import scatter_circle_error, scatter_reciprocity_error
from homotopy_bayes.errors import ContractError, DegenerateCurveError
from homotopy_bayes.scatter import (
    CATALOG_NAMES,
    BoundaryCurve,
    ScatterConfig,
    ScatterForwardModel,
    add_far_field_noise,
    assemble_cfie,
    circle_far_field_series,
    curve_geometry,
    far_field,
    far_field_data,
    fourier_curve,
    hausdorff_distance,
    radius,
    read_far_field_csv,
    scatter_forward,
    shape_catalog,
    solve_density,
    stack_real,
    write_far_field_csv,
)

DATA = Path(__file__).parent / "data"
s_grid = np.linspace(0, 2 * np.pi, 7)


def test_radius_examples():
    np.testing.assert_allclose(radius(fourier_curve(np.zeros(11)), s_grid), 1.0)
    c = np.zeros(11)
    c[0] = np.sqrt(2 * np.pi)
    np.testing.assert_allclose(radius(fourier_curve(c), s_grid), np.e)
    assert radius(shape_catalog("pear"), 0.0) == pytest.approx(5 / 6)
    assert radius(shape_catalog("acorn"), 0.0) == pytest.approx(1.5)
    assert radius(shape_catalog("roundedtriangle"), 0.0) == pytest.approx(2.5)
    assert radius(shape_catalog("roundrect"), 0.0) == pytest.approx(1.0)
    assert radius(shape_catalog("pear"), 2 * np.pi + 0.4) == pytest.approx(radius(shape_catalog("pear"), 0.4))


def test_fourier_radius_formula():
    c = np.array([0.3, 0.5, -0.2, 1.1, 0.4])
    s = 0.77
    q = 0.3 / np.sqrt(2 * np.pi) + (0.5 * np.cos(s) - 0.2 * np.sin(s)) / np.sqrt(np.pi)
    q += 2**-2.2 * (1.1 * np.cos(2 * s) + 0.4 * np.sin(2 * s)) / np.sqrt(np.pi)
    assert radius(fourier_curve(c, 2.2), s) == pytest.approx(np.exp(q), rel=1e-14)


def test_curve_geometry_examples():
    g = curve_geometry(fourier_curve([0.0]), 32)
    np.testing.assert_allclose(np.hypot(*g.points.T), 1.0)
    np.testing.assert_allclose(g.speed, 1.0)
    np.testing.assert_allclose(g.normals, g.points, atol=1e-14)
    np.testing.assert_allclose(curve_geometry(shape_catalog("kite"), 16).points[0], [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(curve_geometry(shape_catalog("peanut"), 16).points[0], [0.8, 0.0])
    with pytest.raises(ContractError):
        curve_geometry(fourier_curve([0.0]), 15)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_catalog_derivatives_match_finite_differences(name):
    curve = shape_catalog(name)
    s = np.linspace(0, 2 * np.pi, 37)
    h = 1e-5
    x, dx, ddx = curve.parametrize(s)
    xp, xm = curve.parametrize(s + h)[0], curve.parametrize(s - h)[0]
    np.testing.assert_allclose(dx, (xp - xm) / (2 * h), atol=1e-7)
    dp, dm = curve.parametrize(s + h)[1], curve.parametrize(s - h)[1]
    np.testing.assert_allclose(ddx, (dp - dm) / (2 * h), atol=1e-6)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_catalog_radius_bounded(name):
    r = radius(shape_catalog(name), np.linspace(0, 2 * np.pi, 2001))
    assert np.all(r > 0) and np.all(r < 5)


def test_outward_positive_orientation():
    for name in CATALOG_NAMES:
        g = curve_geometry(shape_catalog(name), 64)
        # positively oriented: signed area > 0; outward normals: x . n integrates to 2 * area
        area = 0.5 * np.sum(g.points[:, 0] * g.d1[:, 1] - g.points[:, 1] * g.d1[:, 0]) * 2 * np.pi / 64
        flux = np.sum(np.sum(g.points * g.normals, axis=1) * g.speed) * 2 * np.pi / 64
        assert area > 0
        assert flux == pytest.approx(2 * area, rel=1e-8)


def test_degenerate_curve():
    c = BoundaryCurve("catalog", name="pear")
    with pytest.raises(ContractError):
        BoundaryCurve("catalog", name="banana")
    with pytest.raises(ContractError):
        fourier_curve([0.0, 1.0])
    bad = np.zeros(3)
    bad[0] = 1e5  # exp overflows
    with pytest.raises(DegenerateCurveError):
        curve_geometry(fourier_curve(bad), 32)
    assert c.name == "pear"


def test_bessel_sub_oracle():
    from homotopy_bayes.bessel import j0

    assert j0(1.0) == pytest.approx(0.7651976866, abs=1e-8)


def test_cfie_self_convergence_and_residual():
    curve = fourier_curve([0.0])
    g64, g128 = curve_geometry(curve, 64), curve_geometry(curve, 128)
    A, rhs = assemble_cfie(g64, 1.0, 1.0, [0.0])
    assert np.all(np.isfinite(A))
    phi = np.linalg.solve(A, rhs)
    assert np.linalg.norm(A @ phi - rhs) / np.linalg.norm(rhs) < 1e-12
    phi2 = solve_density(g128, 1.0, 1.0, [0.0])
    assert np.max(np.abs(phi2[::2] - phi)) < 1e-6


def test_far_field_linearity():
    g = curve_geometry(shape_catalog("bean"), 64)
    phi = solve_density(g, 1.0, 1.0, [0.0])
    dirs = np.linspace(0, 6, 5)
    assert np.array_equal(far_field(g, 2 * phi, 1.0, 1.0, dirs), 2 * far_field(g, phi, 1.0, 1.0, dirs))


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_circle_oracle_agreement(a):
    assert scatter_circle_error(n=64, radius=a) < 1e-6


def test_kite_reciprocity():
    assert scatter_reciprocity_error("kite") < 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_reciprocity_all_shapes(name):
    assert scatter_reciprocity_error(name) < 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_spectral_self_convergence(name):
    cfg128, cfg256 = ScatterConfig(n=128, n_observations=16), ScatterConfig(n=256, n_observations=16)
    F1 = far_field_data(shape_catalog(name), cfg128)
    F2 = far_field_data(shape_catalog(name), cfg256)
    assert np.max(np.abs(F1 - F2)) < 1e-6


@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_circle_series_rotation_invariance(theta_d, theta_x, rot):
    d = [np.cos(theta_d), np.sin(theta_d)]
    x = [np.cos(theta_x), np.sin(theta_x)]
    d2 = [np.cos(theta_d + rot), np.sin(theta_d + rot)]
    x2 = [np.cos(theta_x + rot), np.sin(theta_x + rot)]
    assert abs(circle_far_field_series(1.3, 1.0, d, x) - circle_far_field_series(1.3, 1.0, d2, x2)) < 1e-12


def test_circle_series_truncation_tail():
    d, x = [1.0, 0.0], [np.cos(1.0), np.sin(1.0)]
    v = circle_far_field_series(2.0, 1.0, d, x)
    # doubling the number of retained orders changes nothing at 1e-12
    from scipy.special import hankel1, jv

    angle = 1.0
    total = -jv(0, 2.0) / hankel1(0, 2.0)
    for m in range(1, 80):
        total += -2 * jv(m, 2.0) / hankel1(m, 2.0) * np.cos(m * angle)
    ref = np.exp(-0.25j * np.pi) * np.sqrt(2 / np.pi) * total
    assert abs(v - ref) < 1e-12
    with pytest.raises(ContractError):
        circle_far_field_series(0.0, 1.0, d, x)


def test_circle_series_regression():
    pinned = json.loads((DATA / "circle_far_field.json").read_text())
    v = circle_far_field_series(1.0, 1.0, [1.0, 0.0], [1.0, 0.0])
    assert abs(v - complex(pinned["re"], pinned["im"])) < 1e-12
    # the solver reproduces it too, for every quadrature size tried
    for n in (32, 64, 128):
        g = curve_geometry(fourier_curve([0.0]), n)
        u = far_field(g, solve_density(g, 1.0, 1.0, [0.0]), 1.0, 1.0, [0.0])[0, 0]
        assert abs(u - v) < 1e-10


def test_kite_benchmark_value():
    # classical sound-soft kite value at k=1, forward direction
    g = curve_geometry(shape_catalog("kite"), 64)
    u = far_field(g, solve_density(g, 1.0, 1.0, [0.0]), 1.0, 1.0, [0.0])[0, 0]
    assert abs(u - (-1.62745750 + 0.60222591j)) < 1e-7


def test_scatter_forward_circle_composition():
    cfg = ScatterConfig(incident_angles=(0.0,), n_observations=8, n=64)
    y = scatter_forward(np.zeros(11), cfg)
    angles = cfg.observation_angles
    ref = np.array([[circle_far_field_series(1.0, 1.0, [1, 0], [np.cos(a), np.sin(a)])] for a in angles])
    np.testing.assert_allclose(y, stack_real(ref), atol=1e-6)
    assert y.size == 2 * 8 * 1


def test_output_layout():
    cfg = ScatterConfig(incident_angles=(0.0, 1.0, 2.0), n_observations=5, n=32)
    F = far_field_data(shape_catalog("pear"), cfg)
    assert F.shape == (5, 3)
    y = scatter_forward(np.zeros(11), cfg)
    assert y.size == 2 * 5 * 3
    # direction-major: entry (i, j) sits at position i * L + j of each block
    F0 = far_field_data(fourier_curve(np.zeros(11)), cfg)
    assert y[1 * 3 + 2] == F0[1, 2].real and y[15 + 1 * 3 + 2] == F0[1, 2].imag


def test_noisy_generator_deterministic():
    cfg = ScatterConfig(n_observations=8, n=32)
    F = far_field_data(shape_catalog("pear"), cfg)
    a, b = add_far_field_noise(F, 0.01, 3), add_far_field_noise(F, 0.01, 3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, add_far_field_noise(F, 0.01, 4))
    rel = np.linalg.norm(a - F) / (0.01 * np.linalg.norm(F))
    assert 0.5 < rel / np.sqrt(2 * F.size) < 1.5


def test_forward_model_validation():
    model = ScatterForwardModel(ScatterConfig(n=32, n_observations=4), n_modes=5)
    assert model.input_dim == 11
    with pytest.raises(ContractError):
        model(np.zeros(5))
    with pytest.raises(ContractError):
        ScatterConfig(n=30 + 1)
    with pytest.raises(ContractError):
        ScatterConfig(n_observations=0)
    assert ScatterConfig(k=2.0).tau == 2.0


def test_prior_regularity_envelope():
    rng = np.random.default_rng(0)
    s = np.linspace(0, 2 * np.pi, 256)
    for _ in range(1000):
        r = radius(fourier_curve(rng.standard_normal(11), 2.2), s)
        assert np.all((r > 0.05) & (r < 20))


def test_hausdorff():
    unit = fourier_curve([0.0])
    bigger = fourier_curve([np.log(1.2) * np.sqrt(2 * np.pi)])
    assert hausdorff_distance(unit, bigger) == pytest.approx(0.2, abs=1e-9)
    assert hausdorff_distance(unit, unit) == 0.0


def test_far_field_csv_round_trip(tmp_path):
    cfg = ScatterConfig(n_observations=6, n=32)
    F = far_field_data(shape_catalog("bean"), cfg)
    path = tmp_path / "ff.csv"
    write_far_field_csv(path, F, cfg.observation_angles, cfg.incident_angles)
    G, obs, inc = read_far_field_csv(path)
    assert np.array_equal(F, G)
    np.testing.assert_array_equal(obs, cfg.observation_angles)
