import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfns.cut import build_cut_surface
from surfns.fespace import node_coordinates, node_count
from surfns.levelset import (
    PAPER_SPHERE,
    DegenerateGradientError,
    GeometricFields,
    MovingSphere,
    Plane,
    SurfaceLeftDomainError,
    UnsupportedConfigurationError,
    classify_elements,
    cut_elements,
    exact_levelset,
    interpolate_levelset,
    normal_speed,
    oswald_average,
)
from surfns.mesh import BoxDomain, build_uniform_mesh, refine
from surfns.metrics import estimated_order


def test_exact_levelset_values():
    assert exact_levelset(0.0, [2.0, 0.0, 0.0]) == pytest.approx(3.0)
    assert exact_levelset(0.0, [1.0, 0.0, 0.0]) == pytest.approx(0.0)
    assert exact_levelset(5.0, [1.0, 0.0, 0.0]) == pytest.approx(-1.0)


def test_normal_speed_values():
    assert normal_speed(0.0, np.array([1.0, 0.0, 0.0])) == pytest.approx(0.2)
    assert normal_speed(0.0, np.array([0.0, 1.0, 0.0])) == pytest.approx(0.0)
    with pytest.raises(DegenerateGradientError):
        normal_speed(0.0, np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2), st.floats(-np.pi, np.pi), st.floats(0.01, np.pi - 0.01))
def test_normal_speed_bounded_on_surface(t, a, b):
    x = PAPER_SPHERE.center(t) + np.array([np.sin(b) * np.cos(a), np.sin(b) * np.sin(a), np.cos(b)])
    assert abs(normal_speed(t, x)) <= 0.2 + 1e-14


def test_nodal_interpolation(mesh_05):
    ls = interpolate_levelset(mesh_05, 0.7)
    np.testing.assert_allclose(ls.vertex_values, PAPER_SPHERE.phi(0.7, mesh_05.vertices), atol=1e-15)
    fine = node_coordinates(mesh_05, 2, np.arange(node_count(mesh_05, 2)))
    np.testing.assert_allclose(ls.fine_values, PAPER_SPHERE.phi(0.7, fine), atol=1e-15)


def test_q2_unsupported(mesh_05):
    with pytest.raises(UnsupportedConfigurationError):
        interpolate_levelset(mesh_05, 0.0, q=2)


def _interp_errors(mesh, rng):
    ls = interpolate_levelset(mesh, 0.0)
    band = classify_elements(ls, 0.3).band_elements
    tets = rng.choice(band, size=min(400, len(band)), replace=False)
    bary = rng.dirichlet(np.ones(4), size=(len(tets), 8))
    pts = np.einsum("tqi,tix->tqx", bary, mesh.vertices[mesh.tets[tets]])
    val = np.abs(ls.values_at(tets[:, None], pts) - PAPER_SPHERE.phi(0.0, pts)).max()
    grad = np.linalg.norm(ls.gradients[tets][:, None] - PAPER_SPHERE.grad(0.0, pts), axis=-1).max()
    return val, grad


def test_interpolation_orders(mesh_05, mesh_025, rng):
    # [DERIVED] P1 interpolation: O(h^2) values, O(h) gradients on the band
    v0, g0 = _interp_errors(mesh_05, rng)
    v1, g1 = _interp_errors(mesh_025, rng)
    assert estimated_order(v0, v1) > 1.7
    assert estimated_order(g0, g1) > 0.8


def test_oswald_continuous_input_is_reproduced(mesh_05):
    values = mesh_05.vertices @ np.array([1.0, -2.0, 0.5])
    per_element = values[mesh_05.tets]
    np.testing.assert_allclose(oswald_average(mesh_05, per_element, 1), values, atol=1e-14)


def test_oswald_two_tets_mean(unit_cube_mesh):
    m = unit_cube_mesh
    shared = np.intersect1d(m.tets[0], m.tets[1])
    out = oswald_average(m, np.array([1.0, 3.0]), 1, elements=np.array([0, 1]))
    np.testing.assert_allclose(out[shared], 2.0)
    untouched = np.setdiff1d(np.arange(m.n_vertices), np.union1d(m.tets[0], m.tets[1]))
    assert np.all(np.isnan(out[untouched]))


def test_plane_geometry_is_exact():
    mesh = build_uniform_mesh(BoxDomain((-1, -1, -1), (1, 1, 1)), 0.5)
    ls = interpolate_levelset(mesh, 0.0, geometry=Plane(offset=0.1))
    geo = GeometricFields(ls)
    cut = cut_elements(ls)
    np.testing.assert_allclose(geo.normals[cut], np.tile([0, 0, 1.0], (len(cut), 1)), atol=1e-14)
    np.testing.assert_allclose(geo.weingarten[cut], 0.0, atol=1e-13)


def _cut_geometry(mesh):
    ls = interpolate_levelset(mesh, 0.0)
    geo = GeometricFields(ls)
    cut = build_cut_surface(ls, cut_elements(ls))
    s = geo.sample(cut.parents[:, None], cut.points)
    return geo, cut, s


def test_projector_and_weingarten_invariants(mesh_05):
    _, _, s = _cut_geometry(mesh_05)
    P, H = s.P, s.H
    np.testing.assert_allclose(P @ P, P, atol=1e-12)
    np.testing.assert_allclose(P, np.swapaxes(P, -1, -2), atol=1e-15)
    np.testing.assert_allclose(P @ H @ P, H, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(s.n_tilde, axis=-1), 1.0, atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(s.n_h, axis=-1), 1.0, atol=1e-14)


def test_normal_order(mesh_05, mesh_025):
    def err(mesh):
        _, cut, s = _cut_geometry(mesh)
        return np.linalg.norm(s.n_h - PAPER_SPHERE.normal(0.0, cut.points), axis=-1).max()

    assert 0.7 <= estimated_order(err(mesh_05), err(mesh_025)) <= 1.3


def test_weingarten_near_identity_at_h0125(mesh_025):
    # [DERIVED] exact H = P / r; tangential eigenvalues of H_h approach 1 with error O(h)
    mesh = refine(mesh_025)
    geo, cut, s = _cut_geometry(mesh)
    H = s.H[:, 0]
    exact = PAPER_SPHERE.weingarten(0.0, cut.points.mean(axis=1))
    eig = np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, 1, 2)))
    assert np.abs(eig[:, 1:] - 1.0).mean() < 0.15
    assert np.linalg.norm(H - exact, axis=(1, 2)).max() <= 3.0 * mesh.h


def test_band_zero_width_equals_cut(mesh_05):
    ls = interpolate_levelset(mesh_05, 0.0)
    b = classify_elements(ls, 0.0)
    np.testing.assert_array_equal(b.band_elements, b.cut_elements)


def test_band_distance_check(mesh_05):
    # [DERIVED] every band tet holds a point within 0.25 + slack of the exact sphere
    ls = interpolate_levelset(mesh_05, 0.0)
    b = classify_elements(ls, 0.25)
    v = mesh_05.vertices[mesh_05.tets[b.band_elements]]
    dist = np.abs(np.linalg.norm(v, axis=-1) - 1.0).min(axis=1)
    assert np.all(dist <= 0.25 + np.sqrt(3) * mesh_05.h)
    assert np.all(np.isin(b.cut_elements, b.band_elements))


def test_cut_count_scales_like_h_minus_two(mesh_05, mesh_025):
    n0 = len(cut_elements(interpolate_levelset(mesh_05, 0.0)))
    n1 = len(cut_elements(interpolate_levelset(mesh_025, 0.0)))
    assert 3.0 <= n1 / n0 <= 5.0


def test_cut_elements_change_sign(mesh_05):
    ls = interpolate_levelset(mesh_05, 0.3)
    s = ls.signs[mesh_05.tets[cut_elements(ls)]]
    assert np.all((s.min(axis=1) < 0) & (s.max(axis=1) > 0))


def test_surface_left_domain(mesh_05):
    far = MovingSphere(velocity=(0, 0, 0), origin=(50, 0, 0))
    with pytest.raises(SurfaceLeftDomainError):
        classify_elements(interpolate_levelset(mesh_05, 0.0, geometry=far), 0.1)


def test_negative_band_rejected(mesh_05):
    with pytest.raises(ValueError):
        classify_elements(interpolate_levelset(mesh_05, 0.0), -1.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 0.6), st.floats(0, 0.6), st.floats(0, 2))
def test_band_monotone_in_delta(d1, d2, t):
    mesh = _MESH
    ls = interpolate_levelset(mesh, t)
    lo, hi = sorted((d1, d2))
    a = classify_elements(ls, lo).band_elements
    b = classify_elements(ls, hi).band_elements
    assert np.all(np.isin(a, b))


_MESH = build_uniform_mesh(BoxDomain((-4 / 3, -4 / 3, -4 / 3), (10 / 3, 4 / 3, 4 / 3)), 0.5)
