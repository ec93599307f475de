"""BDF time stepping on the moving surface with per-step geometry and band rebuilds."""
from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import FormParams, SparseSystem, SurfaceContext, assemble_rhs, assemble_system, surface_context
from .cut import CutSurface, build_cut_surface
from .exact import ManufacturedProblem
from .fespace import BandDofMap, FEField, build_spaces, evaluate_global
from .levelset import (
    PAPER_SPHERE,
    BandClassification,
    GeometricFields,
    classify_elements,
    cut_elements,
    interpolate_levelset,
    normal_speed,
)
from .mesh import PAPER_DOMAIN, BackgroundMesh, BoxDomain, build_uniform_mesh
from .metrics import ErrorReport, StepErrors, energy_norm, pressure_norm_1h, surface_l2_sq
from .solver import solve

log = logging.getLogger(__name__)

BDF_WEIGHTS = {
    1: (1.0, -1.0),
    2: (1.5, -2.0, 0.5),
    3: (11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0),
}
EXTRAPOLATION = {
    1: (1.0,),
    2: (2.0, -1.0),
    3: (3.0, -3.0, 1.0),
}
W_N_SAFETY = 1.1
DELTA_RETRY = 1.5


class StepAbort(RuntimeError):
    def __init__(self, step: int, reason: str):
        super().__init__(f"step {step}: {reason}")
        self.step = step
        self.reason = reason


class CondCWarning(UserWarning):
    """dt < 2 / tau: the time step is below the analysis assumption."""


@dataclass(frozen=True)
class RunConfig:
    h: float = 0.5
    T: float = 2.0
    dt: float = 0.2
    bdf: int = 1
    m: int = 1
    q: int = 1
    c_delta: float = 2.5
    mu: float = 1.0
    advective_correction: bool = True
    renormalize_improved: bool = True
    solver: str = "auto"
    tol: float = 1e-10
    bootstrap: str = "exact"  # or "bdf1"
    log_path: str | None = None

    def __post_init__(self):
        for name in ("h", "T", "dt", "c_delta", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if self.bdf not in BDF_WEIGHTS:
            raise ValueError("bdf must be 1, 2 or 3")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.bootstrap not in ("exact", "bdf1"):
            raise ValueError("bootstrap must be 'exact' or 'bdf1'")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("T / dt must be an integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def params(self) -> FormParams:
        return FormParams.for_mesh(self.h, mu=self.mu, advective_correction=self.advective_correction)


@dataclass(eq=False)
class TimeLevel:
    """Geometry, spaces and discrete solution at one time t_n."""

    index: int
    t: float
    geo: GeometricFields
    band: BandClassification
    dofmap: BandDofMap
    cut: CutSurface
    ctx: SurfaceContext
    u: FEField | None = None
    p: FEField | None = None
    delta_retried: bool = False


@dataclass
class RunResult:
    config: RunConfig
    report: ErrorReport
    diagnostics: list = field(default_factory=list)
    max_u_norm: float = 0.0
    max_exact_norm: float = 0.0
    containment_violations: int = 0

    @property
    def n_steps(self) -> int:
        return len(self.diagnostics) - 1

    @property
    def stability_ratio(self) -> float:
        return self.max_u_norm / self.max_exact_norm if self.max_exact_norm > 0 else math.inf


def band_width(dt: float, order: int, w_n_sup: float, c_delta: float = 2.5) -> float:
    """delta = c * R * dt * sup|w_N| (the caller applies the sampling safety factor)."""
    if dt <= 0 or order < 1 or w_n_sup < 0 or c_delta <= 0:
        raise ValueError("invalid band width inputs")
    return c_delta * order * dt * w_n_sup


def sample_w_n_sup(cut: CutSurface, t: float, geometry=PAPER_SPHERE) -> float:
    """max |w_N| over the cut-surface quadrature points."""
    return float(np.abs(normal_speed(t, cut.points.reshape(-1, 3), geometry)).max())


def check_containment(cut_set, band_sets) -> tuple[bool, list]:
    """``cut_set`` must be a subset of every band in ``band_sets``; returns (ok, missing counts)."""
    cut_set = np.asarray(cut_set)
    missing = [int(np.setdiff1d(cut_set, np.asarray(b), assume_unique=True).size) for b in band_sets]
    return all(c == 0 for c in missing), missing


class Integrator:
    """Drives the time loop; exposed for tests that need single steps."""

    def __init__(self, config: RunConfig, problem: ManufacturedProblem | None = None,
                 mesh: BackgroundMesh | None = None, domain: BoxDomain = PAPER_DOMAIN, geometry=PAPER_SPHERE,
                 zero_data: bool = False):
        self.config = config
        self.geometry = geometry
        self.problem = problem or ManufacturedProblem(geometry=geometry, mu=config.mu)
        self.mesh = mesh or build_uniform_mesh(domain, config.h)
        self.params = config.params()
        self.zero_data = zero_data
        self.history: list[TimeLevel] = []
        if config.dt < 2.0 / self.params.tau:
            warnings.warn(
                f"dt={config.dt:g} < 2/tau={2.0 / self.params.tau:g}; time step below the analysis assumption",
                CondCWarning,
                stacklevel=2,
            )

    # -- geometry -------------------------------------------------------------
    def time(self, n: int) -> float:
        return n * self.config.dt

    def _future_cuts(self, n: int):
        out = []
        for i in range(1, self.config.bdf + 1):
            if n + i > self.config.n_steps:
                break
            ls = interpolate_levelset(self.mesh, self.time(n + i), self.config.q, self.geometry)
            out.append(cut_elements(ls))
        return out

    def build_level(self, n: int) -> TimeLevel:
        cfg = self.config
        t = self.time(n)
        ls = interpolate_levelset(self.mesh, t, cfg.q, self.geometry)
        geo = GeometricFields(ls, cfg.renormalize_improved)
        cut_set = cut_elements(ls)
        cut = build_cut_surface(ls, cut_set)
        sup = sample_w_n_sup(cut, t, self.geometry) * W_N_SAFETY
        delta = band_width(cfg.dt, cfg.bdf, sup, cfg.c_delta)
        band = classify_elements(ls, delta, cut_set)
        retried = False
        future = self._future_cuts(n)
        if not check_containment_all(future, band.band_elements):
            band = classify_elements(ls, delta * DELTA_RETRY, cut_set)
            retried = True
            log.info("step %d: band widened to %.4g for containment", n, band.delta)
        dofmap = build_spaces(self.mesh, band, cfg.m)
        ctx = surface_context(dofmap, cut, geo)
        return TimeLevel(n, t, geo, band, dofmap, cut, ctx, delta_retried=retried)

    # -- fields ---------------------------------------------------------------
    def exact_level_fields(self, level: TimeLevel) -> tuple[FEField, FEField]:
        """Nodal interpolants of the normally extended exact velocity and pressure."""
        t = level.t
        vel = level.dofmap.velocity
        u = self.problem.velocity_ext(t, vel.coordinates())
        pr = level.dofmap.pressure
        p = self.problem.pressure_ext(t, pr.coordinates())
        if self.zero_data:
            u = np.zeros_like(u)
            p = np.zeros_like(p)
        p_field = FEField(pr, p)
        p_field = FEField(pr, p - _surface_mean(level.ctx, p_field))
        return FEField(vel, u), p_field

    def _combination(self, coeffs, level: TimeLevel) -> np.ndarray:
        """sum_k coeffs[k] u^{n-1-k} evaluated at the surface quadrature points of ``level``."""
        g = None
        for c, old in zip(coeffs, reversed(self.history[-len(coeffs):])):
            term = c * old.u.global_values
            g = term if g is None else g + term
        vals, _ = evaluate_global(self.mesh, level.dofmap.velocity.degree, g, level.ctx.parents[:, None], level.ctx.points)
        return vals

    # -- stepping -------------------------------------------------------------
    def step_order(self, n: int) -> int:
        if self.config.bootstrap == "bdf1":
            return min(n, self.config.bdf)
        return self.config.bdf

    def assemble_step(self, n: int) -> tuple[TimeLevel, SparseSystem, int, list]:
        """Geometry, spaces and the linear system at t_n from the stored history."""
        cfg = self.config
        level = self.build_level(n)
        order = self.step_order(n)
        ok, missing = check_containment(level.band.cut_elements, [old.band.band_elements for old in self.history[-order:]])
        if not ok:
            raise StepAbort(n, f"containment violated: cut elements missing from earlier bands {missing}")
        weights = BDF_WEIGHTS[order]
        try:
            z = self._combination(EXTRAPOLATION[order], level)
            hist = self._combination(weights[1:], level)
        except KeyError as exc:  # InactiveElementError
            raise StepAbort(n, f"history field not defined on the current surface ({exc})") from exc
        ctx = level.ctx
        if self.zero_data:
            f_vec = np.zeros_like(ctx.points)
            f_scalar = np.zeros(ctx.weights.shape)
        else:
            sample = self.problem.momentum_forcing(level.t, ctx.points.reshape(-1, 3))
            f_vec = sample.f_vec.reshape(ctx.points.shape)
            f_scalar = sample.f_scalar.reshape(ctx.weights.shape)
        w_n = normal_speed(level.t, ctx.points, self.geometry)
        rhs = assemble_rhs(ctx, f_vec, f_scalar, hist, cfg.dt)
        system = assemble_system(ctx, self.params, cfg.dt, weights[0], z=z, w_n=w_n, f_scalar=f_scalar, rhs=rhs)
        return level, system, order, missing

    def step(self, n: int) -> tuple[TimeLevel, dict]:
        """Advance from the stored history to t_n."""
        level, system, order, missing = self.assemble_step(n)
        u, p, report = solve(system, tol=self.config.tol, method=self.config.solver)
        level.u = FEField(level.dofmap.velocity, u.reshape(-1, 3))
        level.p = FEField(level.dofmap.pressure, p)
        info = {
            "order": order,
            "residual": report.residual,
            "solve_time": report.wall_time,
            "solver": report.method,
            "missing": missing,
        }
        return level, info

    def bootstrap_level(self, n: int) -> tuple[TimeLevel, dict]:
        """Level n filled with the interpolated exact fields."""
        level = self.build_level(n)
        level.u, level.p = self.exact_level_fields(level)
        info = {"order": 0, "residual": 0.0, "solve_time": 0.0, "solver": "interpolant", "missing": []}
        if self.history:
            ok, missing = check_containment(level.band.cut_elements, [o.band.band_elements for o in self.history])
            info["missing"] = missing
            if not ok:
                raise StepAbort(n, f"containment violated: {missing}")
        return level, info

    @property
    def n_bootstrap(self) -> int:
        return self.config.bdf if self.config.bootstrap == "exact" else 1

    def advance_to(self, n: int) -> None:
        """Fill the history with levels 0..n-1 (bootstrap and solved steps)."""
        for k in range(len(self.history) and self.history[-1].index + 1, n):
            level, _ = self.bootstrap_level(k) if k < self.n_bootstrap else self.step(k)
            self._push(level)

    def _push(self, level: TimeLevel) -> None:
        self.history.append(level)
        keep = self.config.bdf
        if len(self.history) > keep:
            self.history = self.history[-keep:]

    # -- errors ---------------------------------------------------------------
    def level_errors(self, level: TimeLevel) -> tuple[StepErrors, float, float]:
        """Error contributions at one level plus ||u_h|| and ||u|| on Gamma_h."""
        t = level.t
        ctx = level.ctx
        pb = self.problem
        mesh = self.mesh
        vdeg = level.dofmap.velocity.degree
        pdeg = level.dofmap.pressure.degree
        ug = level.u.global_values
        pg = level.p.global_values

        def err_u(tets, pts):
            vh, gh = evaluate_global(mesh, vdeg, ug, tets, pts)
            flat = pts.reshape(-1, 3)
            ue = pb.velocity_ext(t, flat).reshape(pts.shape)
            ge = pb.velocity_ext_gradient(t, flat).reshape(pts.shape + (3,))
            return vh - ue, gh - ge

        def err_p_grad(tets, pts):
            _, gh = evaluate_global(mesh, pdeg, pg, tets, pts)
            return gh - pb.pressure_ext_gradient(t, pts.reshape(-1, 3)).reshape(pts.shape)

        ev, _ = err_u(ctx.parents[:, None], ctx.points)
        uh, _ = evaluate_global(mesh, vdeg, ug, ctx.parents[:, None], ctx.points)
        ue = pb.velocity_ext(t, ctx.points.reshape(-1, 3)).reshape(ctx.points.shape)
        ph, _ = evaluate_global(mesh, pdeg, pg, ctx.parents[:, None], ctx.points)
        pe = pb.pressure_ext(t, ctx.points.reshape(-1, 3)).reshape(ctx.weights.shape)
        if self.zero_data:
            ue = np.zeros_like(ue)
            pe = np.zeros_like(pe)
        errors = StepErrors(
            t=t,
            u_l2_sq=surface_l2_sq(ctx, ev),
            u_energy_sq=energy_norm(ctx, self.params, err_u) ** 2,
            p_l2_sq=surface_l2_sq(ctx, ph - pe),
            p_h1=pressure_norm_1h(level.geo, level.band.cut_elements, err_p_grad, self.config.h),
        )
        return errors, math.sqrt(surface_l2_sq(ctx, uh)), math.sqrt(surface_l2_sq(ctx, ue))

    # -- driver ---------------------------------------------------------------
    def run(self) -> RunResult:
        cfg = self.config
        report = ErrorReport(cfg.h, cfg.dt, scheme={"bdf": cfg.bdf, "m": cfg.m, "q": cfg.q, "mu": cfg.mu,
                                                   "c_delta": cfg.c_delta, "T": cfg.T})
        result = RunResult(cfg, report)
        sink = open(cfg.log_path, "w") if cfg.log_path else None
        try:
            for n in range(cfg.n_steps + 1):
                start = time.perf_counter()
                if n < self.n_bootstrap:
                    level, info = self.bootstrap_level(n)
                else:
                    level, info = self.step(n)
                record = {
                    "step": n,
                    "t": level.t,
                    "n_velocity": level.dofmap.n_velocity,
                    "n_pressure": level.dofmap.n_pressure,
                    "n_band": int(len(level.band.band_elements)),
                    "n_cut": int(len(level.band.cut_elements)),
                    "n_triangles": int(len(level.cut.parents)),
                    "delta": level.band.delta,
                    "delta_retried": level.delta_retried,
                    **info,
                }
                if n > 0:
                    errs, un, ue = self.level_errors(level)
                    report.add(errs)
                    result.max_u_norm = max(result.max_u_norm, un)
                    result.max_exact_norm = max(result.max_exact_norm, ue)
                    record.update(asdict(errs))
                    record.update({"u_norm": un, "u_exact_norm": ue})
                record["wall_time"] = time.perf_counter() - start
                result.diagnostics.append(record)
                log.info("step %d t=%.4f dofs=%d/%d %.2fs", n, level.t, record["n_velocity"], record["n_pressure"],
                         record["wall_time"])
                if sink:
                    sink.write(json.dumps(record) + "\n")
                    sink.flush()
                self._push(level)
        finally:
            if sink:
                sink.close()
        return result


def check_containment_all(cut_sets, band) -> bool:
    return all(check_containment(c, [band])[0] for c in cut_sets)


def _surface_mean(ctx: SurfaceContext, p: FEField) -> float:
    vals, _ = p.evaluate(ctx.parents[:, None], ctx.points)
    return float(np.sum(ctx.weights * vals) / np.sum(ctx.weights))


def run(config: RunConfig, **kwargs) -> RunResult:
    return Integrator(config, **kwargs).run()


def convergence_ladder(bdf: int, levels: int, h0: float = 0.5, dt0: float = 0.2) -> list[tuple[float, float]]:
    """(h, dt) pairs: h halves; dt is divided by 4 for BDF1 and halved otherwise."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    factor = 4.0 if bdf == 1 else 2.0
    return [(h0 / 2**k, dt0 / factor**k) for k in range(levels)]
