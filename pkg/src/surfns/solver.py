"""Direct and Krylov solution of the mean-constrained saddle point system.

The default direct backend is MKL PARDISO (through the optional ``pypardiso``
package) when importable, otherwise SuperLU from scipy.  On the thin-shell
band matrices PARDISO's nested-dissection ordering is one to two orders of
magnitude faster than SuperLU's column orderings.
"""
from __future__ import annotations

import glob
import os
import sys
import time
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SparseSystem


class SingularSystemError(np.linalg.LinAlgError):
    pass


class KrylovConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveReport:
    residual: float
    iterations: int
    reused_factorization: bool
    wall_time: float
    method: str


def _relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - A @ x)
    return float(r / nb) if nb > 0 else float(r)


def _load_pardiso():
    """Import pypardiso, pointing it at a versioned ``libmkl_rt`` if needed."""
    if "PYPARDISO_MKL_RT" not in os.environ:
        for root in {sys.prefix, sys.base_prefix, "/usr/local", "/usr"}:
            hits = sorted(glob.glob(os.path.join(root, "lib", "libmkl_rt.so*")))
            if hits:
                os.environ["PYPARDISO_MKL_RT"] = hits[0]
                break
    try:
        import pypardiso
    except (ImportError, OSError):
        return None
    return pypardiso


_PARDISO = _load_pardiso()
DIRECT_BACKENDS = ("pardiso", "splu") if _PARDISO is not None else ("splu",)


def _pardiso_solve(A, b):
    solver = _PARDISO.PyPardisoSolver(mtype=11)
    try:
        return solver.solve(sp.csr_matrix(A), np.asarray(b, float))
    finally:
        solver.free_memory(everything=True)


def _factorize(A):
    try:
        return spla.splu(sp.csc_matrix(A), permc_spec="COLAMD")
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise SingularSystemError(f"sparse LU failed: {exc}") from exc


def _block_preconditioner(system: SparseSystem):
    """Upper block-triangular preconditioner with an exact velocity block and a diagonal Schur approximation."""
    nu = system.n_velocity
    K = system.matrix
    A = K[:nu, :nu]
    Bt = K[:nu, nu:]
    lu_a = _factorize(A)
    lower = K[nu:, nu:].tocsc()
    # Schur complement surrogate: C + diag(B diag(A)^-1 B^T) on the pressure rows, identity on the multiplier
    d = 1.0 / np.abs(A.diagonal())
    Bl = K[nu:, :nu]
    schur = np.abs(lower.diagonal()) + np.abs((Bl.multiply(Bl)) @ d)
    schur[schur == 0] = 1.0
    schur_inv = 1.0 / schur

    def apply(r):
        rp = r[nu:] * schur_inv
        xu = lu_a.solve(r[:nu] - Bt @ rp)
        return np.concatenate([xu, rp])

    return spla.LinearOperator(K.shape, matvec=apply)


def solve(system: SparseSystem, tol: float = 1e-10, method: str = "auto", mean_weights=None,
          maxiter: int = 500, restart: int = 100):
    """Solve the system; returns ``(u, p, report)``.

    ``method`` is ``"auto"`` (best direct backend), ``"pardiso"``, ``"splu"``
    or ``"gmres"`` (block-triangular preconditioned, restarted).

    The pressure is shifted to zero discrete surface mean using
    ``mean_weights`` (defaults to the constraint vector stored in the system).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    start = time.perf_counter()
    A, b = system.matrix, system.rhs
    iterations = 0
    if method in ("auto", "direct"):
        method = DIRECT_BACKENDS[0]
    if method == "pardiso":
        if _PARDISO is None:
            raise ValueError("pypardiso is not installed")
        x = _pardiso_solve(A, b)
    elif method == "splu":
        x = _factorize(A).solve(b)
    elif method == "gmres":
        M = _block_preconditioner(system)
        counter = {"n": 0}

        def cb(_):
            counter["n"] += 1

        x, info = spla.gmres(A, b, rtol=tol * 0.1, atol=0.0, restart=restart, maxiter=maxiter, M=M,
                             callback=cb, callback_type="pr_norm")
        iterations = counter["n"]
        if info != 0:
            raise KrylovConvergenceError(f"GMRES did not converge after {iterations} iterations")
    else:
        raise ValueError(f"unknown solver method {method!r}")
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("non-finite solution")
    res = _relative_residual(A, x, b)
    if res > tol:
        raise SingularSystemError(f"relative residual {res:.3e} exceeds tolerance {tol:.1e}")
    u, p, _ = system.split(x)
    weights = system.blocks.get("m") if mean_weights is None else mean_weights
    if weights is not None and weights.sum() > 0:
        p = p - (weights @ p) / weights.sum()
    report = SolveReport(res, iterations, False, time.perf_counter() - start, method)
    return u.copy(), p.copy(), report


def condition_probe(matrix, max_size: int = 20000, iterations: int = 200, seed: int = 0) -> float:
    """Estimate cond_2 by power iteration on A^T A and on its inverse via LU."""
    A = sp.csc_matrix(matrix)
    n = A.shape[0]
    if n > max_size:
        raise ValueError(f"system of size {n} exceeds the probe cap {max_size}")
    lu = _factorize(A)
    rng = np.random.default_rng(seed)

    def power(apply):
        v = rng.normal(size=n)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iterations):
            w = apply(v)
            new = np.linalg.norm(w)
            if new == 0:
                return 0.0
            v = w / new
            if abs(new - lam) <= 1e-10 * new:
                lam = new
                break
            lam = new
        return lam

    big = power(lambda v: A.T @ (A @ v))
    small_inv = power(lambda v: lu.solve(lu.solve(v, trans="T")))
    return float(np.sqrt(big * small_inv))


def read_matrix(path) -> sp.csr_matrix:
    return sp.csr_matrix(scipy.io.mmread(str(path)))


def write_matrix(path, matrix) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix))
