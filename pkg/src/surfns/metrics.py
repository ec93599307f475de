"""Energy and pressure norms, accumulated space-time errors and observed orders."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import FormParams, SurfaceContext
from .cut import band_volume_quadrature, build_cut_surface
from .levelset import PAPER_SPHERE, GeometricFields, cut_elements, interpolate_levelset
from .mesh import PAPER_DOMAIN, BoxDomain, build_uniform_mesh

CSV_COLUMNS = ("MeshSize", "L2Energyu", "L2L2u", "L1Energyp", "L2L2p")
VOLUME_ERROR_DEGREE = 5
GEOMETRY_COLUMNS = ("distance", "normal", "averaged_normal", "improved_normal", "area")
EXACT_TOL = 1e-12


def surface_l2_sq(ctx: SurfaceContext, values) -> float:
    """||v||^2 over Gamma_h for values (E, Q, ...) at the quadrature points."""
    v = np.asarray(values, float)
    sq = v * v if v.ndim == 2 else np.sum(v * v, axis=-1)
    return float(np.sum(ctx.weights * sq))


def strain_sq(ctx: SurfaceContext, values, grads) -> float:
    """||E_s,h(P_h v)||^2 with grad P_h v -> P (grad v) P - (n_h . v) H_h."""
    P, n, H = ctx.P[:, None], ctx.n[:, None], ctx.H[:, None]
    G = P @ grads @ P - np.einsum("eqa,eqa->eq", np.broadcast_to(n, values.shape), values)[..., None, None] * H
    E = 0.5 * (G + np.swapaxes(G, -1, -2))
    return float(np.sum(ctx.weights * np.einsum("eqab,eqab->eq", E, E)))


def normal_derivative_sq(geo: GeometricFields, tets, gradient_fn, degree: int = VOLUME_ERROR_DEGREE) -> float:
    """||n_h . grad v||^2 over the given elements; ``gradient_fn(tets, points)`` returns (n, Q, 3, 3)."""
    tets = np.asarray(tets, dtype=np.int64)
    pts, wts, _ = band_volume_quadrature(geo.mesh, tets, degree)
    g = gradient_fn(tets[:, None], pts)
    dn = np.einsum("tqab,tb->tqa", g, geo.normals[tets])
    return float(np.sum(wts * np.sum(dn * dn, axis=-1)))


def energy_norm(ctx: SurfaceContext, params: FormParams, field_fn, band_tets=None) -> float:
    """Energy norm of a velocity field given by ``field_fn(tets, points) -> (values, grads)``.

    (1/2 ||v||^2 + 2 mu ||E_s,h(P_h v)||^2 + tau/2 ||n~ . v||^2 + rho_u ||n_h . grad v||^2_band)^(1/2)
    """
    vals, grads = field_fn(ctx.parents[:, None], ctx.points)
    if band_tets is None:
        band_tets = ctx.dofmap.velocity.elements
    nt = np.einsum("eqa,eqa->eq", ctx.n_tilde, vals)
    total = (
        0.5 * surface_l2_sq(ctx, vals)
        + 2.0 * params.mu * strain_sq(ctx, vals, grads)
        + 0.5 * params.tau * surface_l2_sq(ctx, nt)
        + params.rho_u * normal_derivative_sq(ctx.geo, band_tets, lambda t, x: field_fn(t, x)[1])
    )
    return math.sqrt(max(total, 0.0))


def pressure_norm_1h(geo: GeometricFields, tets, gradient_fn, h: float, degree: int = VOLUME_ERROR_DEGREE) -> float:
    """h^(1/2) ||grad q||_{omega}; ``gradient_fn(tets, points)`` returns (n, Q, 3)."""
    tets = np.asarray(tets, dtype=np.int64)
    pts, wts, _ = band_volume_quadrature(geo.mesh, tets, degree)
    g = gradient_fn(tets[:, None], pts)
    return math.sqrt(h * float(np.sum(wts * np.sum(g * g, axis=-1))))


@dataclass
class StepErrors:
    """Per-step error contributions (squared where the total is a root of a sum of squares)."""

    t: float
    u_l2_sq: float
    u_energy_sq: float
    p_l2_sq: float
    p_h1: float


@dataclass
class ErrorReport:
    h: float
    dt: float
    scheme: dict = field(default_factory=dict)
    steps: list = field(default_factory=list)

    def add(self, step: StepErrors) -> None:
        self.steps.append(step)

    def _sum(self, attr):
        return self.dt * sum(getattr(s, attr) for s in self.steps)

    @property
    def E_u_L2L2(self) -> float:
        return math.sqrt(self._sum("u_l2_sq"))

    @property
    def E_u_L2U(self) -> float:
        return math.sqrt(self._sum("u_energy_sq"))

    @property
    def E_p_L2L2(self) -> float:
        return math.sqrt(self._sum("p_l2_sq"))

    @property
    def E_p_L1H1(self) -> float:
        return self._sum("p_h1")

    def totals(self) -> dict:
        return {
            "E_u_L2L2": self.E_u_L2L2,
            "E_u_L2U": self.E_u_L2U,
            "E_p_L2L2": self.E_p_L2L2,
            "E_p_L1H1": self.E_p_L1H1,
        }

    def to_dict(self) -> dict:
        return {"h": self.h, "dt": self.dt, "scheme": self.scheme, "n_steps": len(self.steps),
                **self.totals(), "steps": [asdict(s) for s in self.steps]}

    def csv_row(self) -> dict:
        return {
            "MeshSize": self.h,
            "L2Energyu": self.E_u_L2U,
            "L2L2u": self.E_u_L2L2,
            "L1Energyp": self.E_p_L1H1,
            "L2L2p": self.E_p_L2L2,
        }


def estimated_order(coarse: float, fine: float, ratio: float = 2.0) -> float:
    """log_ratio(coarse / fine)."""
    if coarse <= 0 or fine <= 0:
        raise ValueError("errors must be positive")
    return math.log(coarse / fine) / math.log(ratio)


def write_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for rep in reports:
            writer.writerow({k: f"{v:.10e}" for k, v in rep.csv_row().items()})


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def geometry_errors(mesh, t: float = 0.0, geometry=PAPER_SPHERE, exact_area: float | None = None) -> dict:
    """Surface approximation errors of the P1 level set at time ``t``.

    ``distance`` is max |phi| over the cut-surface quadrature points, the
    normal columns are max deviations from the exact unit normal there and
    ``area`` is |area(Gamma_h) - exact_area| (NaN when no reference is given).
    """
    ls = interpolate_levelset(mesh, t, 1, geometry)
    geo = GeometricFields(ls)
    cut = build_cut_surface(ls, cut_elements(ls))
    tets = cut.parents[:, None]
    pts = cut.points
    n = geometry.normal(t, pts)

    def dev(v):
        return float(np.linalg.norm(v - n, axis=-1).max())

    if exact_area is None:
        exact_area = 4.0 * math.pi * geometry.radius**2 if hasattr(geometry, "radius") else math.nan
    return {
        "h": mesh.h,
        "distance": float(np.abs(geometry.phi(t, pts)).max()),
        "normal": dev(np.broadcast_to(geo.normals[cut.parents][:, None], pts.shape)),
        "averaged_normal": dev(geo.averaged_normal_at(tets, pts)),
        "improved_normal": dev(geo.improved_normal(tets, pts)),
        "area": abs(cut.total_area - exact_area),
    }


def observed_orders(rows, columns=GEOMETRY_COLUMNS) -> list[dict]:
    """Orders between consecutive rows; ``"exact"`` where both errors vanish."""
    out = []
    for a, b in zip(rows[:-1], rows[1:]):
        ratio = a["h"] / b["h"]
        entry = {}
        for c in columns:
            ea, eb = a[c], b[c]
            if math.isnan(ea) or math.isnan(eb):
                entry[c] = math.nan
            elif ea <= EXACT_TOL and eb <= EXACT_TOL:
                entry[c] = "exact"
            else:
                entry[c] = estimated_order(max(ea, 1e-300), max(eb, 1e-300), ratio)
        out.append(entry)
    return out


def geometry_study(levels: int = 3, h0: float = 0.5, t: float = 0.0, geometry=PAPER_SPHERE,
                   domain: BoxDomain = PAPER_DOMAIN, exact_area: float | None = None) -> tuple[list, list]:
    """Refinement study of the surface approximation; returns (rows, orders)."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    rows = [geometry_errors(build_uniform_mesh(domain, h0 / 2**k), t, geometry, exact_area) for k in range(levels)]
    return rows, observed_orders(rows)
