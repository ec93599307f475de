import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfns.cut import build_cut_surface
from surfns.exact import ManufacturedProblem
from surfns.fespace import (
    FEField,
    InactiveElementError,
    build_spaces,
    element_nodes,
    interpolate_analytic,
    lagrange_basis,
    scalar_dofmap,
)
from surfns.levelset import BandClassification, classify_elements, cut_elements, interpolate_levelset
from surfns.mesh import refine


def _band(cut, band):
    return BandClassification(np.asarray(cut), np.asarray(band), 0.0)


def test_single_tet_counts(mesh_05):
    dm = build_spaces(mesh_05, _band([7], [7]), m=1)
    assert dm.velocity.size == 10 and dm.n_velocity == 30
    assert dm.n_pressure == 4
    assert dm.velocity_element_dofs([7]).shape == (1, 30)


def test_shared_face_nodes(mesh_05):
    nbr = mesh_05.face_neighbors[0]
    other = int(nbr[nbr >= 0][0])
    dm = scalar_dofmap(mesh_05, 2, [0, other])
    assert dm.size == 2 * 10 - 6


def test_velocity_dof_growth(mesh_05, mesh_025):
    def count(mesh):
        ls = interpolate_levelset(mesh, 0.0)
        band = classify_elements(ls, 0.0)
        return build_spaces(mesh, band).n_velocity

    assert 3.0 <= count(mesh_025) / count(mesh_05) <= 5.0


def test_dofmap_deterministic(mesh_05):
    ls = interpolate_levelset(mesh_05, 0.5)
    band = classify_elements(ls, 0.2)
    a, b = build_spaces(mesh_05, band), build_spaces(mesh_05, band)
    np.testing.assert_array_equal(a.velocity.local, b.velocity.local)
    np.testing.assert_array_equal(a.pressure.nodes, b.pressure.nodes)
    assert np.all(np.diff(a.velocity.nodes) > 0)


def test_empty_band_rejected(mesh_05):
    with pytest.raises(ValueError):
        build_spaces(mesh_05, _band([], []))


def _random_points(mesh, tets, rng, k=5):
    bary = rng.dirichlet(np.ones(4), size=(len(tets), k))
    return np.einsum("tqi,tix->tqx", bary, mesh.vertices[mesh.tets[tets]])


@pytest.mark.parametrize("degree", [1, 2])
def test_linear_reproduction(mesh_05, rng, degree):
    tets = np.arange(0, mesh_05.n_tets, 37)
    dm = scalar_dofmap(mesh_05, degree, tets)
    a, b = np.array([0.3, -1.2, 2.0]), 0.7
    f = interpolate_analytic(lambda x: x @ a + b, dm)
    pts = _random_points(mesh_05, tets, rng)
    v, g = f.evaluate(tets[:, None], pts)
    np.testing.assert_allclose(v, pts @ a + b, atol=1e-13)
    np.testing.assert_allclose(g, np.broadcast_to(a, g.shape), atol=1e-12)


def test_quadratic_gradient_on_p2(mesh_05, rng):
    tets = np.arange(0, mesh_05.n_tets, 53)
    dm = scalar_dofmap(mesh_05, 2, tets)
    f = interpolate_analytic(lambda x: x[:, 0] * x[:, 1] - x[:, 2] ** 2, dm)
    pts = _random_points(mesh_05, tets, rng)
    _, g = f.evaluate(tets[:, None], pts)
    exact = np.stack([pts[..., 1], pts[..., 0], -2 * pts[..., 2]], axis=-1)
    np.testing.assert_allclose(g, exact, atol=1e-12)


def test_partition_of_unity(rng):
    for k in (1, 2, 3):
        xi = rng.dirichlet(np.ones(4), size=20)[:, 1:]
        b = lagrange_basis(k)
        np.testing.assert_allclose(b.values(xi).sum(axis=1), 1.0, atol=1e-13)
        np.testing.assert_allclose(b.reference_gradients(xi).sum(axis=1), 0.0, atol=1e-12)


def test_constant_and_pointwise_interpolation(mesh_05):
    dm = scalar_dofmap(mesh_05, 2, [0, 1, 2])
    f = interpolate_analytic(lambda x: np.full(len(x), 4.5), dm)
    assert np.all(f.values == 4.5)
    pb = ManufacturedProblem()
    np.testing.assert_allclose(pb.velocity(0.0, [[0, 0, 1.0]]), 0.0, atol=1e-15)
    assert pb.pressure(0.0, [[0, 0, 1.0]])[0] == pytest.approx(1.0)


def test_inactive_element_raises(mesh_05):
    dm = scalar_dofmap(mesh_05, 2, [0, 1])
    f = FEField(dm, np.ones(dm.size))
    far = np.array([mesh_05.n_tets - 1])
    with pytest.raises(InactiveElementError):
        f.evaluate(far[:, None], mesh_05.vertices[mesh_05.tets[far]].mean(axis=1)[:, None])
    with pytest.raises(InactiveElementError):
        dm.element_rows(far)


def _velocity_interp_error(mesh):
    pb = ManufacturedProblem()
    ls = interpolate_levelset(mesh, 0.0)
    band = classify_elements(ls, 0.0)
    dm = build_spaces(mesh, band)
    u = FEField(dm.velocity, pb.velocity_ext(0.0, dm.velocity.coordinates()))
    cut = build_cut_surface(ls, band.cut_elements)
    v, _ = u.evaluate(cut.parents[:, None], cut.points)
    e = v - pb.velocity_ext(0.0, cut.points.reshape(-1, 3)).reshape(v.shape)
    return np.sqrt(cut.integrate(np.sum(e * e, axis=-1)))


def test_velocity_interpolation_order(mesh_025):
    # [DERIVED] P2 interpolation of the smooth extension: O(h^3) in L2(Gamma_h)
    e1 = _velocity_interp_error(mesh_025)
    e2 = _velocity_interp_error(refine(mesh_025))
    assert np.log2(e1 / e2) > 2.6


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_restriction_consistency(d1, d2):
    """A bulk field restricted to two bands agrees on their intersection."""
    mesh = _MESH
    ls = interpolate_levelset(mesh, 0.0)
    bulk = np.cos(np.arange(element_nodes(mesh, 2).max() + 1) * 0.37)
    fields, bands = [], []
    for d in (d1, d2):
        band = classify_elements(ls, d).band_elements
        dm = scalar_dofmap(mesh, 2, band)
        fields.append(FEField(dm, bulk[dm.nodes]))
        bands.append(band)
    common = np.intersect1d(*bands)
    pts = mesh.vertices[mesh.tets[common]].mean(axis=1)[:, None]
    v1, _ = fields[0].evaluate(common[:, None], pts)
    v2, _ = fields[1].evaluate(common[:, None], pts)
    np.testing.assert_allclose(v1, v2, atol=1e-14)


_MESH = None


@pytest.fixture(autouse=True, scope="module")
def _module_mesh(mesh_05):
    global _MESH
    _MESH = mesh_05
