"""Eulerian trace finite elements for the tangential Navier-Stokes equations on an evolving surface."""
import importlib

__version__ = "0.1.0"

# Lazy exports keep ``surfns.cli`` importable before numpy / MKL are loaded,
# so that its --threads flag can still set the thread environment.
_EXPORTS = {
    "RunConfig": "integrator",
    "RunResult": "integrator",
    "run": "integrator",
    "BACKEND": "kernels",
    "PAPER_DOMAIN": "mesh",
    "BoxDomain": "mesh",
    "build_uniform_mesh": "mesh",
    "refine": "mesh",
}
__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
