"""Bilinear forms and right-hand sides of the one-step TraceFEM system.

Surface forms are integrated over the cut triangles with a mapped triangle
rule; local matrices are built per triangle (vector dof ``3*i + c``) and
scattered once.  The system is the time-step-scaled saddle point form::

    [ a0*M + dt*A   dt*B^T   0 ] [u]   [dt*(f, P v) - sum_k a_k (u^{n-k}, P v)]
    [ -B            C        m ] [p] = [(f_scalar, q)                         ]
    [ 0             m^T      0 ] [l]   [0                                     ]

where ``m`` is the surface integral of the pressure basis (zero-mean
constraint) and ``A`` collects curvature, convection, viscous, penalty and
normal-derivative stabilization terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import kernels
from .cut import CutSurface
from .fespace import BandDofMap, barycentric, lagrange_basis, physical_gradients
from .levelset import GeometricFields
from .quadrature import tetrahedron_rule

CHUNK = 1024


@dataclass(frozen=True)
class FormParams:
    tau: float
    rho_u: float
    rho_p: float
    mu: float = 1.0
    advective_correction: bool = True
    include_f_term: bool = True

    def __post_init__(self):
        if min(self.tau, self.rho_u, self.rho_p) <= 0:
            raise ValueError("tau, rho_u and rho_p must be positive")
        if self.mu < 0:
            raise ValueError("viscosity must be non-negative")

    @classmethod
    def for_mesh(cls, h: float, **kw) -> "FormParams":
        """tau = h^-2, rho_u = 1/h, rho_p = h."""
        return cls(tau=h**-2, rho_u=1.0 / h, rho_p=h, **kw)


@dataclass(frozen=True, eq=False)
class SurfaceContext:
    """Basis functions and geometry at the surface quadrature points of one time level."""

    dofmap: BandDofMap
    cut: CutSurface
    geo: GeometricFields
    phi: np.ndarray = field(repr=False)  # (E, Q, nb) velocity basis values
    dphi: np.ndarray = field(repr=False)  # (E, Q, nb, 3) velocity basis gradients
    psi: np.ndarray = field(repr=False)  # (E, Q, nbp) pressure basis values
    dpsi: np.ndarray = field(repr=False)  # (E, Q, nbp, 3)
    n: np.ndarray = field(repr=False)  # (E, 3) n_h
    P: np.ndarray = field(repr=False)  # (E, 3, 3)
    H: np.ndarray = field(repr=False)  # (E, 3, 3)
    n_tilde: np.ndarray = field(repr=False)  # (E, Q, 3)

    @property
    def parents(self) -> np.ndarray:
        return self.cut.parents

    @property
    def weights(self) -> np.ndarray:
        return self.cut.weights

    @property
    def points(self) -> np.ndarray:
        return self.cut.points

    @property
    def n_triangles(self) -> int:
        return len(self.cut.parents)


def _basis_at(mesh, degree, tets, points):
    basis = lagrange_basis(degree)
    xi = barycentric(mesh, tets[:, None], points)
    flat = xi.reshape(-1, 3)
    vals = basis.values(flat).reshape(*xi.shape[:2], basis.size)
    rg = basis.reference_gradients(flat).reshape(*xi.shape[:2], basis.size, 3)
    return vals, physical_gradients(rg, mesh.inverse_jacobians[tets][:, None])


def surface_context(dofmap: BandDofMap, cut: CutSurface, geo: GeometricFields) -> SurfaceContext:
    mesh = geo.mesh
    tets = cut.parents
    phi, dphi = _basis_at(mesh, dofmap.velocity.degree, tets, cut.points)
    psi, dpsi = _basis_at(mesh, dofmap.pressure.degree, tets, cut.points)
    return SurfaceContext(
        dofmap,
        cut,
        geo,
        phi,
        dphi,
        psi,
        dpsi,
        geo.normals[tets],
        geo.projectors[tets],
        geo.weingarten[tets],
        geo.improved_normal(tets[:, None], cut.points),
    )


# -- local quantities --------------------------------------------------------
def _vector_basis(phi):
    """(E, Q, 3*nb, 3) values of phi_i e_c at row 3*i + c."""
    E, Q, nb = phi.shape
    out = np.zeros((E, Q, nb, 3, 3))
    for c in range(3):
        out[:, :, :, c, c] = phi
    return out.reshape(E, Q, 3 * nb, 3)


def _surface_gradients(phi, dphi, P, n, H):
    """G_I = P (grad v_I) P - (n . v_I) H for v_I = phi_i e_c, shape (E, Q, 3*nb, 3, 3)."""
    E, Q, nb = phi.shape
    Pg = np.einsum("eqib,eab->eqia", dphi, P)  # P grad phi_i
    # P e_c (P grad phi_i)^T
    G = P[:, None, None, :, :, None] * Pg[:, :, :, None, None, :]  # (E,Q,nb,a,c,b)
    G = np.swapaxes(G, 3, 4)  # (E,Q,nb,c,a,b)
    G = G - phi[:, :, :, None, None, None] * n[:, None, None, :, None, None] * H[:, None, None, None, :, :]
    return G.reshape(E, Q, 3 * nb, 3, 3)


def _normal_derivative_basis(dphi, n):
    """(E, Q, 3*nb, 3) values of (grad phi_i . n) e_c."""
    dn = np.einsum("eqix,ex->eqi", dphi, n)
    return _vector_basis(dn)


def _gram(left, right, w):
    return kernels.weighted_gram(np.ascontiguousarray(left), np.ascontiguousarray(right), np.ascontiguousarray(w))


def _chunks(n):
    for s in range(0, n, CHUNK):
        yield slice(s, min(s + CHUNK, n))


def _scatter(rows, cols, local, shape) -> sp.csr_matrix:
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    mat = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return mat


def _at_points(values, shape):
    if values is None:
        return None
    return np.broadcast_to(np.asarray(values, float), shape)


def momentum_locals(ctx: SurfaceContext, *, mass=0.0, viscous=0.0, penalty=0.0, curvature=0.0,
                    advection=0.0, convection=0.0, f_term=0.0, w_n=None, z=None, f_scalar=None) -> np.ndarray:
    """Weighted sum of per-triangle velocity-velocity matrices, shape (E, 3nb, 3nb).

    Each keyword is the coefficient of the corresponding surface form;
    ``w_n`` (E, Q), ``z`` (E, Q, 3) and ``f_scalar`` (E, Q) are the data the
    curvature/advection, convection and f-term forms need.
    """
    E, Q, nb = ctx.phi.shape
    out = np.zeros((E, 3 * nb, 3 * nb))
    w = ctx.weights
    for s in _chunks(E):
        phi, dphi, P, n, H = ctx.phi[s], ctx.dphi[s], ctx.P[s], ctx.n[s], ctx.H[s]
        V = _vector_basis(phi)
        PV = np.einsum("eab,eqib->eqia", P, V)
        loc = out[s]
        if mass:
            loc += mass * _gram(PV, PV, w[s])
        if f_term and f_scalar is not None:
            loc += f_term * -0.5 * _gram(PV, PV, w[s] * f_scalar[s])
        if curvature and w_n is not None:
            HV = np.einsum("eab,eqib->eqia", H, V)
            loc += curvature * _gram(V, HV, w[s] * w_n[s])
        if advection and w_n is not None:
            DV = _normal_derivative_basis(dphi, n)
            loc += advection * _gram(PV, DV, w[s] * w_n[s])
        if penalty:
            NV = np.einsum("eqa,eqia->eqi", ctx.n_tilde[s], V)[..., None]
            loc += penalty * _gram(NV, NV, w[s])
        if viscous or (convection and z is not None):
            G = _surface_gradients(phi, dphi, P, n, H)
            if viscous:
                Es = 0.5 * (G + np.swapaxes(G, -1, -2))
                Es = Es.reshape(*Es.shape[:3], 9)
                loc += viscous * _gram(Es, Es, w[s])
            if convection and z is not None:
                Gz = np.einsum("eqiab,eqb->eqia", G, z[s])
                A = _gram(V, Gz, w[s])
                loc += convection * 0.5 * (A - np.swapaxes(A, 1, 2))
    return out


def _velocity_scatter(ctx: SurfaceContext, local) -> sp.csr_matrix:
    dofs = ctx.dofmap.velocity_element_dofs(ctx.parents)
    n = ctx.dofmap.n_velocity
    return _scatter(dofs, dofs, local, (n, n))


# -- public blocks -------------------------------------------------------------
def assemble_mass(ctx: SurfaceContext) -> sp.csr_matrix:
    """int u . P_h v over Gamma_h."""
    return _velocity_scatter(ctx, momentum_locals(ctx, mass=1.0))


def assemble_viscous(ctx: SurfaceContext, mu: float = 1.0) -> sp.csr_matrix:
    """2 mu int E_s(P_h u) : E_s(P_h v) with grad P_h v -> grad_Gamma v - (n_h . v) H_h."""
    return _velocity_scatter(ctx, momentum_locals(ctx, viscous=2.0 * mu))


def assemble_convection(ctx: SurfaceContext, z, f_scalar=None) -> sp.csr_matrix:
    """Skew-symmetric convection with frozen velocity ``z`` plus the -1/2 f mass term."""
    E, Q, _ = ctx.phi.shape
    z = _at_points(z, (E, Q, 3))
    f_scalar = _at_points(f_scalar, (E, Q))
    return _velocity_scatter(ctx, momentum_locals(ctx, convection=1.0, f_term=1.0, z=z, f_scalar=f_scalar))


def assemble_curvature_and_advection(ctx: SurfaceContext, w_n, advective_correction: bool = True) -> sp.csr_matrix:
    """int w_N H_h u . P_h v, plus int w_N (P_h grad u n_h) . P_h v when enabled."""
    E, Q, _ = ctx.phi.shape
    w_n = _at_points(w_n, (E, Q))
    local = momentum_locals(ctx, curvature=1.0, advection=float(advective_correction), w_n=w_n)
    return _velocity_scatter(ctx, local)


def assemble_penalty(ctx: SurfaceContext, tau: float) -> sp.csr_matrix:
    """tau int (n~ . u)(n~ . v) over Gamma_h."""
    return _velocity_scatter(ctx, momentum_locals(ctx, penalty=tau))


def _volume_normal_gram(geo: GeometricFields, degree: int, tets) -> np.ndarray:
    """Local matrices of int_T (n_h . grad phi_i)(n_h . grad phi_j) dx, shape (nT, nb, nb)."""
    mesh = geo.mesh
    tets = np.asarray(tets, dtype=np.int64)
    basis = lagrange_basis(degree)
    rule = tetrahedron_rule(max(2 * degree - 2, 1))
    rg = basis.reference_gradients(rule.points[:, 1:])  # (Q, nb, 3)
    grads = np.einsum("qbr,trx->tqbx", rg, mesh.inverse_jacobians[tets])
    dn = np.einsum("tqbx,tx->tqb", grads, geo.normals[tets])[..., None]
    w = 6.0 * mesh.volumes[tets][:, None] * rule.weights[None, :]
    return _gram(dn, dn, w)


def assemble_velocity_stabilization(dofmap: BandDofMap, geo: GeometricFields, rho_u: float) -> sp.csr_matrix:
    """rho_u int_{band} (n_h . grad u)(n_h . grad v) dx, componentwise."""
    tets = dofmap.velocity.elements
    local = rho_u * _volume_normal_gram(geo, dofmap.velocity.degree, tets)
    local = np.einsum("tij,cd->ticjd", local, np.eye(3)).reshape(len(tets), 3 * local.shape[1], -1)
    dofs = dofmap.velocity_element_dofs(tets)
    n = dofmap.n_velocity
    return _scatter(dofs, dofs, local, (n, n))


def assemble_pressure_stabilization(dofmap: BandDofMap, geo: GeometricFields, rho_p: float) -> sp.csr_matrix:
    """rho_p int_{cut elements} (n_h . grad p)(n_h . grad q) dx."""
    tets = dofmap.pressure.elements
    local = rho_p * _volume_normal_gram(geo, dofmap.pressure.degree, tets)
    dofs = dofmap.pressure_element_dofs(tets)
    n = dofmap.n_pressure
    return _scatter(dofs, dofs, local, (n, n))


def assemble_pressure_coupling(ctx: SurfaceContext) -> sp.csr_matrix:
    """B[k, J] = int (P_h grad psi_k) . v_J over Gamma_h."""
    E = ctx.n_triangles
    nbp = ctx.psi.shape[2]
    local = np.zeros((E, nbp, ctx.phi.shape[2] * 3))
    for s in _chunks(E):
        V = _vector_basis(ctx.phi[s])
        Pg = np.einsum("eqkb,eab->eqka", ctx.dpsi[s], ctx.P[s])
        local[s] = _gram(Pg, V, ctx.weights[s])
    rows = ctx.dofmap.pressure_element_dofs(ctx.parents)
    cols = ctx.dofmap.velocity_element_dofs(ctx.parents)
    return _scatter(rows, cols, local, (ctx.dofmap.n_pressure, ctx.dofmap.n_velocity))


def pressure_mean_vector(ctx: SurfaceContext) -> np.ndarray:
    """m_k = int psi_k ds_h."""
    local = np.einsum("eq,eqk->ek", ctx.weights, ctx.psi)
    rows = ctx.dofmap.pressure_element_dofs(ctx.parents)
    return np.bincount(rows.ravel(), weights=local.ravel(), minlength=ctx.dofmap.n_pressure)


def project_load(ctx: SurfaceContext, values) -> np.ndarray:
    """Load vector int g . P_h v over Gamma_h for values g (E, Q, 3) at the quadrature points."""
    values = np.asarray(values, float)
    Pg = np.einsum("eab,eqb->eqa", ctx.P, values)  # P g, so g . P v = (P g) . v
    local = np.einsum("eq,eqi,eqc->eic", ctx.weights, ctx.phi, Pg).reshape(ctx.n_triangles, -1)
    dofs = ctx.dofmap.velocity_element_dofs(ctx.parents)
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=ctx.dofmap.n_velocity)


def scalar_load(ctx: SurfaceContext, values) -> np.ndarray:
    """int g q ds_h over the pressure basis."""
    values = np.broadcast_to(np.asarray(values, float), ctx.weights.shape)
    local = np.einsum("eq,eq,eqk->ek", ctx.weights, values, ctx.psi)
    rows = ctx.dofmap.pressure_element_dofs(ctx.parents)
    return np.bincount(rows.ravel(), weights=local.ravel(), minlength=ctx.dofmap.n_pressure)


def assemble_rhs(ctx: SurfaceContext, forcing, f_scalar, history, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Momentum and continuity right-hand sides.

    ``history`` is sum_k a_k u^{n-k} at the quadrature points (BDF
    combination of previous solutions, without the leading coefficient) and
    enters with a minus sign.
    """
    mom = dt * project_load(ctx, forcing)
    if history is not None:
        mom -= project_load(ctx, history)
    cont = scalar_load(ctx, 0.0 if f_scalar is None else f_scalar)
    return mom, cont


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_velocity: int
    n_pressure: int
    blocks: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def split(self, x: np.ndarray):
        nu, npr = self.n_velocity, self.n_pressure
        return x[:nu], x[nu : nu + npr], x[nu + npr :]

    def dump(self, prefix) -> None:
        """Matrix Market files ``<prefix>_matrix.mtx`` and ``<prefix>_rhs.mtx``."""
        scipy.io.mmwrite(f"{prefix}_matrix.mtx", self.matrix)
        scipy.io.mmwrite(f"{prefix}_rhs.mtx", self.rhs[:, None])


def assemble_system(ctx: SurfaceContext, params: FormParams, dt: float, alpha0: float,
                    z=None, w_n=None, f_scalar=None, rhs=None) -> SparseSystem:
    """Full one-step matrix in the dt-scaled form; ``rhs`` = (momentum, continuity) vectors."""
    E, Q, _ = ctx.phi.shape
    z = _at_points(z, (E, Q, 3))
    w_n = _at_points(w_n, (E, Q))
    f_scalar = _at_points(f_scalar, (E, Q)) if params.include_f_term else None
    local = momentum_locals(
        ctx,
        mass=alpha0,
        viscous=dt * 2.0 * params.mu,
        penalty=dt * params.tau,
        curvature=dt,
        advection=dt * float(params.advective_correction),
        convection=dt,
        f_term=dt,
        w_n=w_n,
        z=z,
        f_scalar=f_scalar,
    )
    A = _velocity_scatter(ctx, local) + dt * assemble_velocity_stabilization(ctx.dofmap, ctx.geo, params.rho_u)
    B = assemble_pressure_coupling(ctx)
    C = assemble_pressure_stabilization(ctx.dofmap, ctx.geo, params.rho_p)
    m = pressure_mean_vector(ctx)[:, None]
    nu = ctx.dofmap.n_velocity
    mat = sp.bmat(
        [[A, dt * B.T, None], [-B, C, sp.csr_matrix(m)], [None, sp.csr_matrix(m.T), None]],
        format="csr",
    )
    mat.eliminate_zeros()
    if rhs is None:
        b = np.zeros(mat.shape[0])
    else:
        b = np.concatenate([rhs[0], rhs[1], [0.0]])
    return SparseSystem(mat, b, nu, ctx.dofmap.n_pressure, {"A": A, "B": B, "C": C, "m": m.ravel()})
