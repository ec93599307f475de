"""Compiled vs numpy kernels on inputs of the size met at h = 0.125.

Usage: python benchmarks/bench_kernels.py [--h 0.125] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from surfns.assembly import _vector_basis, surface_context
from surfns.cut import build_cut_surface
from surfns.fespace import build_spaces
from surfns.kernels import backend_module
from surfns.levelset import GeometricFields, classify_elements, cut_elements, interpolate_levelset
from surfns.mesh import PAPER_DOMAIN, build_uniform_mesh


def inputs(h):
    mesh = build_uniform_mesh(PAPER_DOMAIN, h)
    ls = interpolate_levelset(mesh, 0.3)
    tets = cut_elements(ls)
    # pass all tets so the kernel also pays for the classification
    all_tets = np.arange(mesh.n_tets)
    cut_args = (
        mesh.vertices[mesh.tets[all_tets]],
        ls.vertex_values[mesh.tets[all_tets]],
        ls.signs[mesh.tets[all_tets]].astype(np.int_),
        ls.gradients[all_tets],
        1e-14 * h**2,
    )
    band = classify_elements(ls, 0.0, tets)
    dm = build_spaces(mesh, band)
    cut = build_cut_surface(ls, tets)
    ctx = surface_context(dm, cut, GeometricFields(ls))
    V = np.ascontiguousarray(_vector_basis(ctx.phi))
    return cut_args, (V, V, np.ascontiguousarray(ctx.weights)), len(tets)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--h", type=float, default=0.125)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    cut_args, gram_args, n_cut = inputs(args.h)
    print(f"h={args.h}: {cut_args[0].shape[0]} tets, {n_cut} cut, gram input {gram_args[0].shape}")
    try:
        backends = ["python", "cython"]
        backend_module("cython")
    except ImportError:
        backends = ["python"]
        print("compiled extension not built; timing the numpy fallback only")
    times = {}
    for name in backends:
        mod = backend_module(name)
        for kernel, a in (("cut_tetrahedra", cut_args), ("weighted_gram", gram_args)):
            fn = getattr(mod, kernel)
            t = min(timeit.repeat(lambda: fn(*a), number=1, repeat=args.repeat))
            times[name, kernel] = t
            print(f"{name:7s} {kernel:15s} {t * 1e3:9.2f} ms")
    if len(backends) == 2:
        for kernel in ("cut_tetrahedra", "weighted_gram"):
            print(f"speedup {kernel}: {times['python', kernel] / times['cython', kernel]:.1f}x")
        # results agree
        p = backend_module("python").weighted_gram(*gram_args)
        c = backend_module("cython").weighted_gram(*gram_args)
        print(f"max |gram difference| = {np.abs(p - c).max():.2e}")


if __name__ == "__main__":
    main()
