import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfns.cut import build_cut_surface
from surfns.exact import (
    CenterSingularityError,
    ManufacturedProblem,
    StripViolationError,
    exact_pressure,
    exact_velocity,
    forcing_fd,
)
from surfns.levelset import PAPER_SPHERE, Plane, cut_elements, interpolate_levelset


def sphere_points(rng, n, t, radius=1.0):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return PAPER_SPHERE.center(t) + radius * d


def test_velocity_examples():
    np.testing.assert_allclose(exact_velocity(0.0, [0, 0, 1]), [[0, 0, 0]], atol=1e-15)
    t = 1.3
    x = PAPER_SPHERE.center(t) + np.array([0, 0, 1.0])
    np.testing.assert_allclose(exact_velocity(t, x), [[-0.2 * t, 0, 0]], atol=1e-15)


def test_pressure_examples():
    assert exact_pressure(0.0, [0, 0, 1])[0] == pytest.approx(1.0)
    assert exact_pressure(0.0, np.array([1, 1, 0]) / math.sqrt(2))[0] == pytest.approx(0.5)


def test_pressure_mean_zero_on_surface(mesh_025):
    for t in (0.0, 1.0, 2.0):
        ls = interpolate_levelset(mesh_025, t)
        cut = build_cut_surface(ls, cut_elements(ls))
        pb = ManufacturedProblem()
        p = pb.pressure_ext(t, cut.points.reshape(-1, 3)).reshape(cut.weights.shape)
        assert abs(cut.integrate(p)) <= 1e-10 * cut.total_area


def test_tangential(rng):
    for t in np.linspace(0, 2, 5):
        x = sphere_points(rng, 1000, t)
        u = exact_velocity(t, x)
        n = PAPER_SPHERE.normal(t, x)
        assert np.abs(np.sum(u * n, axis=1)).max() <= 1e-13


def test_center_and_strip_errors():
    pb = ManufacturedProblem()
    with pytest.raises(CenterSingularityError):
        pb.velocity(0.0, [[0.0, 0.0, 0.0]])
    with pytest.raises(StripViolationError):
        pb.momentum_forcing(0.0, [[2.0, 0.0, 0.0]])


@pytest.mark.parametrize("t", [0.0, 1.0, 2.0])
def test_forcing_matches_fd_oracle(rng, t):
    pb = ManufacturedProblem()
    x = sphere_points(rng, 100, t)
    ad = pb.momentum_forcing(t, x)
    fd = forcing_fd(pb, t, x)
    np.testing.assert_allclose(ad.f_vec, fd.f_vec, atol=1e-6)
    assert np.abs(ad.f_scalar).max() <= 1e-10


def test_forcing_tangential_and_normally_constant(rng):
    pb = ManufacturedProblem()
    t = 0.6
    x = sphere_points(rng, 50, t)
    f = pb.momentum_forcing(t, x).f_vec
    n = PAPER_SPHERE.normal(t, x)
    assert np.abs(np.sum(f * n, axis=1)).max() < 1e-12
    shifted = PAPER_SPHERE.center(t) + 1.3 * (x - PAPER_SPHERE.center(t))
    np.testing.assert_allclose(pb.momentum_forcing(t, shifted).f_vec, f, atol=1e-13)


def test_term_isolation_inviscid(rng):
    pb = ManufacturedProblem(mu=0.0)
    t = 0.9
    x = sphere_points(rng, 20, t)
    terms = pb.forcing_terms(t, x)
    np.testing.assert_allclose(terms["viscous"], 0.0)
    np.testing.assert_allclose(pb.momentum_forcing(t, x).f_vec - terms["pressure"], terms["inertia"], atol=1e-14)


def test_viscosity_scales_viscous_term(rng):
    x = sphere_points(rng, 20, 0.4)
    v1 = ManufacturedProblem(mu=1.0).forcing_terms(0.4, x)["viscous"]
    v3 = ManufacturedProblem(mu=3.0).forcing_terms(0.4, x)["viscous"]
    np.testing.assert_allclose(v3, 3 * v1, atol=1e-13)


def test_divergence_of_identity_field(rng):
    # [DERIVED] div_Gamma x = tr(P) = 2; checked against the FD oracle as well
    pb = ManufacturedProblem(velocity_expr=lambda t, X: [X[0], X[1], X[2]])
    x = sphere_points(rng, 30, 0.0)
    np.testing.assert_allclose(pb.divergence_data(0.0, x), 2.0, atol=1e-13)
    np.testing.assert_allclose(forcing_fd(pb, 0.0, x).f_scalar, 2.0, atol=1e-8)


def test_divergence_on_plane(rng):
    pb = ManufacturedProblem(geometry=Plane(), velocity_expr=lambda t, X: [X[1], 0.0 * X[0], 0.0 * X[0]])
    x = rng.uniform(-1, 1, size=(10, 3))
    np.testing.assert_allclose(pb.divergence_data(0.0, x), 0.0, atol=1e-15)


def test_extension_gradient_annihilates_normal(rng):
    pb = ManufacturedProblem()
    t = 1.1
    x = PAPER_SPHERE.center(t) + 1.2 * (sphere_points(rng, 10, t) - PAPER_SPHERE.center(t))
    G = pb.velocity_ext_gradient(t, x)
    n = PAPER_SPHERE.normal(t, x)
    np.testing.assert_allclose(np.einsum("nij,nj->ni", G, n), 0.0, atol=1e-14)
    gp = pb.pressure_ext_gradient(t, x)
    np.testing.assert_allclose(np.sum(gp * n, axis=1), 0.0, atol=1e-14)


def test_jacobian_matches_fd(rng):
    pb = ManufacturedProblem()
    x = sphere_points(rng, 10, 0.3, radius=1.1)
    J = pb.velocity_jacobian(0.3, x)
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (pb.velocity(0.3, x + e) - pb.velocity(0.3, x - e)) / (2 * h)
        np.testing.assert_allclose(J[:, :, j], fd, rtol=1e-7, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2), st.floats(0.6, 1.4), st.integers(0, 2**31 - 1))
def test_forcing_fd_property(t, radius, seed):
    rng = np.random.default_rng(seed)
    pb = ManufacturedProblem()
    x = sphere_points(rng, 5, t, radius)
    np.testing.assert_allclose(pb.momentum_forcing(t, x).f_vec, forcing_fd(pb, t, x).f_vec, atol=1e-6)
