"""Manufactured solution on the moving unit sphere and its consistent forcing.

Velocity ``u = n x grad(psi)`` with ``psi = xy - 2t`` and pressure
``p = (x - 0.2t) y + z``.  The forcing of the tangential Navier-Stokes
system is obtained by forward-mode AD (nested for the viscous term) of the
closed-form expressions, evaluated at the closest point on Gamma(t) so that it
is constant along normals.  :func:`forcing_fd` repeats the computation with
central differences in extended precision and serves as an independent oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual
from .levelset import PAPER_SPHERE, MovingSphere, normal_speed

STRIP = (0.5, 1.5)


class StripViolationError(ValueError):
    """A forcing evaluation point is too far from Gamma(t)."""


class CenterSingularityError(ZeroDivisionError):
    """The normal field is undefined at the sphere center."""


@dataclass(frozen=True)
class ForcingSample:
    f_vec: np.ndarray  # (N, 3)
    f_scalar: np.ndarray  # (N,)


def _cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def _stack(comps, n, dtype=float):
    return np.stack([np.broadcast_to(np.asarray(c, dtype=dtype), (n,)) for c in comps], axis=-1)


def _points(x):
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(float)
    return np.atleast_2d(x)


class ManufacturedProblem:
    """Closed-form exact fields; all evaluators accept point arrays of shape (N, 3)."""

    def __init__(self, geometry=PAPER_SPHERE, mu: float = 1.0, rho: float = 1.0, velocity_expr=None):
        self.geometry = geometry
        self.mu = float(mu)
        self.rho = float(rho)
        self._custom_velocity = velocity_expr

    # -- closed forms, generic in the arithmetic type ----------------------
    def velocity_expr(self, t, X):
        if self._custom_velocity is not None:
            return self._custom_velocity(t, X)
        n = self.geometry.normal_expr(t, X)
        return _cross(n, [X[1], X[0], 0.0 * X[0]])

    def pressure_expr(self, t, X):
        geo = self.geometry
        gx = geo.origin[0] + t * geo.velocity[0] if isinstance(geo, MovingSphere) else 0.0
        return (X[0] - gx) * X[1] + X[2]

    # -- global evaluators -------------------------------------------------
    def _check_center(self, t, x):
        if isinstance(self.geometry, MovingSphere):
            r = np.linalg.norm(np.asarray(x, float) - self.geometry.center(t), axis=-1)
            if np.any(r < 1e-12):
                raise CenterSingularityError("normal undefined at the sphere center")

    def velocity(self, t, x):
        """Global smooth extension n(x) x grad psi(x), shape (N, 3)."""
        x = _points(x)
        self._check_center(t, x)
        return _stack(self.velocity_expr(t, [x[:, 0], x[:, 1], x[:, 2]]), len(x), x.dtype)

    def velocity_jacobian(self, t, x):
        """d u_i / d x_j of the global extension, shape (N, 3, 3)."""
        x = _points(x)
        self._check_center(t, x)
        _, d = dual.partials(lambda a, b, c: self.velocity_expr(t, [a, b, c]), x[:, 0], x[:, 1], x[:, 2])
        return np.stack([_stack(d[j], len(x)) for j in range(3)], axis=-1)

    def pressure(self, t, x):
        x = _points(x)
        return np.broadcast_to(self.pressure_expr(t, [x[:, 0], x[:, 1], x[:, 2]]), (len(x),)).astype(x.dtype)

    def pressure_gradient(self, t, x):
        x = _points(x)
        _, d = dual.partials(lambda a, b, c: self.pressure_expr(t, [a, b, c]), x[:, 0], x[:, 1], x[:, 2])
        return _stack(d, len(x))

    # -- normal (closest-point) extensions ---------------------------------
    def velocity_ext(self, t, x):
        return self.velocity(t, self.geometry.closest_point(t, _points(x)))

    def velocity_ext_gradient(self, t, x):
        x = _points(x)
        J = self.velocity_jacobian(t, self.geometry.closest_point(t, x))
        return J @ self.geometry.closest_point_jacobian(t, x)

    def pressure_ext(self, t, x):
        return self.pressure(t, self.geometry.closest_point(t, _points(x)))

    def pressure_ext_gradient(self, t, x):
        x = _points(x)
        g = self.pressure_gradient(t, self.geometry.closest_point(t, x))
        return np.einsum("ni,nij->nj", g, self.geometry.closest_point_jacobian(t, x))

    # -- forcing -----------------------------------------------------------
    def _surface_points(self, t, x, pullback: bool):
        x = _points(x)
        if isinstance(self.geometry, MovingSphere):
            r = np.linalg.norm(x - self.geometry.center(t), axis=-1)
            lo, hi = STRIP[0] * self.geometry.radius, STRIP[1] * self.geometry.radius
            if np.any((r < lo) | (r > hi)):
                raise StripViolationError(f"points outside the strip |x - g| in [{lo}, {hi}]")
        return self.geometry.closest_point(t, x) if pullback else x

    def _strain_divergence(self, t, Y):
        """P div_Gamma E_s(u) with E_s = sym(P J P), by nested AD."""
        geo = self.geometry

        def strain(a, b, c):
            X = [a, b, c]
            _, d = dual.partials(lambda p, q, s: self.velocity_expr(t, [p, q, s]), a, b, c)
            J = [[d[j][i] for j in range(3)] for i in range(3)]
            n = geo.normal_expr(t, X)
            P = [[(1.0 if i == j else 0.0) - n[i] * n[j] for j in range(3)] for i in range(3)]
            PJ = [[sum(P[i][k] * J[k][j] for k in range(3)) for j in range(3)] for i in range(3)]
            G = [[sum(PJ[i][k] * P[k][j] for k in range(3)) for j in range(3)] for i in range(3)]
            return [[0.5 * (G[i][j] + G[j][i]) for j in range(3)] for i in range(3)]

        _, dE = dual.partials(strain, Y[:, 0], Y[:, 1], Y[:, 2])
        N = len(Y)
        # dE[b][i][a] = d_b E_ia
        grad = np.empty((N, 3, 3, 3))
        for b in range(3):
            for i in range(3):
                for a in range(3):
                    grad[:, i, a, b] = np.broadcast_to(dE[b][i][a], (N,))
        return grad

    def forcing_terms(self, t, x, pullback: bool = True) -> dict:
        """Individual forcing contributions at the closest points of ``x``.

        Keys: ``inertia`` (rho-weighted), ``viscous`` (-2 mu P div E_s),
        ``pressure`` (surface gradient of p), ``divergence``.
        """
        Y = self._surface_points(t, x, pullback)
        N = len(Y)
        geo = self.geometry
        T = np.full(N, float(t))
        u, d = dual.partials(lambda tt, a, b, c: self.velocity_expr(tt, [a, b, c]), T, Y[:, 0], Y[:, 1], Y[:, 2])
        u = _stack(u, N)
        du_dt = _stack(d[0], N)
        J = np.stack([_stack(d[1 + j], N) for j in range(3)], axis=-1)
        n = geo.normal(t, Y)
        P = np.eye(3) - n[:, :, None] * n[:, None, :]
        H = geo.weingarten(t, Y)
        wN = normal_speed(t, Y, geo)
        normal_dt = du_dt + wN[:, None] * np.einsum("nij,nj->ni", J, n)
        grad_s = P @ J @ P
        inertia = (
            np.einsum("nij,nj->ni", P, normal_dt)
            + wN[:, None] * np.einsum("nij,nj->ni", H, u)
            + np.einsum("nij,nj->ni", grad_s, u)
        )
        dE = self._strain_divergence(t, Y)
        div_E = np.einsum("nab,niab->ni", P, dE)
        viscous = -2.0 * self.mu * np.einsum("nij,nj->ni", P, div_E)
        pressure = np.einsum("nij,nj->ni", P, self.pressure_gradient(t, Y))
        divergence = np.einsum("nii->n", grad_s)
        return {"inertia": self.rho * inertia, "viscous": viscous, "pressure": pressure, "divergence": divergence}

    def momentum_forcing(self, t, x, pullback: bool = True) -> ForcingSample:
        terms = self.forcing_terms(t, x, pullback)
        return ForcingSample(terms["inertia"] + terms["viscous"] + terms["pressure"], terms["divergence"])

    def divergence_data(self, t, x, pullback: bool = True):
        """div_Gamma u = tr(P J P) at the closest points of ``x``."""
        Y = self._surface_points(t, x, pullback)
        J = self.velocity_jacobian(t, Y)
        n = self.geometry.normal(t, Y)
        P = np.eye(3) - n[:, :, None] * n[:, None, :]
        return np.einsum("nii->n", P @ J @ P)


def exact_velocity(t, x, problem: ManufacturedProblem | None = None):
    return (problem or ManufacturedProblem()).velocity(t, x)


def exact_pressure(t, x, problem: ManufacturedProblem | None = None):
    return (problem or ManufacturedProblem()).pressure(t, x)


def forcing_fd(problem: ManufacturedProblem, t, x, step: float = 1e-5, pullback: bool = True) -> ForcingSample:
    """Central-difference oracle for :meth:`ManufacturedProblem.momentum_forcing`.

    Every derivative is replaced by a central difference with ``step``.  The
    arithmetic runs in ``np.longdouble`` so that the nested differences of the
    viscous term are not dominated by roundoff.
    """
    ld = np.longdouble
    geo = problem.geometry
    Y = problem._surface_points(t, x, pullback).astype(ld)
    h = ld(step)
    E3 = np.eye(3, dtype=ld)

    def vel(tt, P):
        return _stack(problem.velocity_expr(tt, [P[:, 0], P[:, 1], P[:, 2]]), len(P), ld)

    def jac(P):
        return np.stack([(vel(ld(t), P + h * E3[j]) - vel(ld(t), P - h * E3[j])) / (2 * h) for j in range(3)], axis=-1)

    def proj(P):
        n = _stack(geo.normal_expr(ld(t), [P[:, 0], P[:, 1], P[:, 2]]), len(P), ld)
        return E3 - n[:, :, None] * n[:, None, :], n

    def strain(P):
        Pr, _ = proj(P)
        G = Pr @ jac(P) @ Pr
        return 0.5 * (G + np.swapaxes(G, 1, 2))

    tt = ld(t)
    u = vel(tt, Y)
    du_dt = (vel(tt + h, Y) - vel(tt - h, Y)) / (2 * h)
    J = jac(Y)
    Pr, n = proj(Y)
    # w_N and H from central differences of the level set
    phi_t = (_phi_ld(geo, tt + h, Y) - _phi_ld(geo, tt - h, Y)) / (2 * h)
    grad_phi = np.stack([(_phi_ld(geo, tt, Y + h * E3[j]) - _phi_ld(geo, tt, Y - h * E3[j])) / (2 * h) for j in range(3)], axis=-1)
    wN = -phi_t / np.sqrt(np.sum(grad_phi * grad_phi, axis=-1))
    Hn = np.stack([(proj(Y + h * E3[j])[1] - proj(Y - h * E3[j])[1]) / (2 * h) for j in range(3)], axis=-1)
    H = Pr @ Hn @ Pr
    grad_s = Pr @ J @ Pr
    inertia = (
        np.einsum("nij,nj->ni", Pr, du_dt + wN[:, None] * np.einsum("nij,nj->ni", J, n))
        + wN[:, None] * np.einsum("nij,nj->ni", H, u)
        + np.einsum("nij,nj->ni", grad_s, u)
    )
    dE = np.stack([(strain(Y + h * E3[b]) - strain(Y - h * E3[b])) / (2 * h) for b in range(3)], axis=-1)
    div_E = np.einsum("nab,niab->ni", Pr, dE)
    viscous = -2.0 * problem.mu * np.einsum("nij,nj->ni", Pr, div_E)

    def pres(P):
        return np.broadcast_to(problem.pressure_expr(tt, [P[:, 0], P[:, 1], P[:, 2]]), (len(P),))

    gp = np.stack([(pres(Y + h * E3[j]) - pres(Y - h * E3[j])) / (2 * h) for j in range(3)], axis=-1)
    pressure = np.einsum("nij,nj->ni", Pr, gp)
    f = problem.rho * inertia + viscous + pressure
    return ForcingSample(f.astype(float), np.einsum("nii->n", grad_s).astype(float))


def _phi_ld(geo, t, P):
    """Level set in extended precision (generic in the arithmetic type)."""
    if isinstance(geo, MovingSphere):
        d = [P[:, i] - (geo.origin[i] + t * geo.velocity[i]) for i in range(3)]
        return d[0] * d[0] + d[1] * d[1] + d[2] * d[2] - geo.radius**2
    return P @ geo.n.astype(P.dtype) - geo.offset
