"""Named data profiles sampled by cell averages.

Initial data are represented by their averages over the lumped-mass cell
of each interior node, with analytic cell integrals wherever the profile
admits one; this keeps discrete L1 norms of the unbounded-but-integrable
profiles consistent with their continuous majorants.  The singular
profiles (inverse square root, logarithmic) exist to stress the
rough-data truncation machinery.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .space import SpatialProblem

__all__ = ["initial_field", "forcing_function", "INITIAL_PROFILES",
           "FORCING_PROFILES"]


def _cell_edges(problem: SpatialProblem, axis: int = 0):
    h = problem.spacings[axis]
    centers = np.unique(problem.interior_coords[:, axis])
    return centers - 0.5 * h, centers + 0.5 * h


def _avg_sine(problem, axis, length):
    lo, hi = _cell_edges(problem, axis)
    w = np.pi / length
    return (np.cos(w * lo) - np.cos(w * hi)) / (w * (hi - lo))


def _avg_inverse_sqrt(problem, axis, scale):
    # c / sqrt(x): integral 2 c sqrt(x)
    lo, hi = _cell_edges(problem, axis)
    return 2.0 * scale * (np.sqrt(hi) - np.sqrt(lo)) / (hi - lo)


def _avg_log(problem, axis, length, scale):
    # c log(L/x): integral c (x - x log(x/L))
    lo, hi = _cell_edges(problem, axis)
    prim = lambda x: x - x * np.log(x / length)
    return scale * (prim(hi) - prim(lo)) / (hi - lo)


def _avg_bump(problem, axis, length):
    # exp(-1/(1 - s^2)) with s = 2x/L - 1, zero outside; 16-point per cell
    lo, hi = _cell_edges(problem, axis)
    nodes, wts = np.polynomial.legendre.leggauss(16)

    def bump(x):
        s = 2.0 * x / length - 1.0
        out = np.zeros_like(x)
        inside = np.abs(s) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out

    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    vals = bump(mid[:, None] + half[:, None] * nodes[None, :])
    return 0.5 * (vals @ wts)


def _axis_average(problem, axis, name, params):
    L = problem.lengths[axis]
    if name == "sine":
        return _avg_sine(problem, axis, L)
    if name == "bump":
        return _avg_bump(problem, axis, L)
    if name == "inverse_sqrt":
        return _avg_inverse_sqrt(problem, axis, params.get("scale", 1.0))
    if name == "log_singular":
        return _avg_log(problem, axis, L, params.get("scale", 1.0))
    raise ConfigurationError(f"unknown profile {name!r}")


INITIAL_PROFILES = ("zero", "constant", "sine", "bump", "inverse_sqrt",
                    "log_singular")


def initial_field(problem: SpatialProblem, name: str, **params) -> np.ndarray:
    """Cell-averaged nodal samples of a named initial profile.

    2d uses the tensor product of the 1d factor in x with the sine factor
    in y for the shaped profiles.
    """
    if name == "zero":
        return np.zeros(problem.n_interior)
    if name == "constant":
        return np.full(problem.n_interior, params.get("value", 1.0))
    if name not in INITIAL_PROFILES:
        raise ConfigurationError(f"unknown initial profile {name!r}; "
                                 f"choose from {INITIAL_PROFILES}")
    ax0 = _axis_average(problem, 0, name, params)
    amp = params.get("amplitude", 1.0)
    if problem.dim == 1:
        return amp * ax0
    ax1 = _axis_average(problem, 1, "sine", params)
    nx = len(ax0)
    ny = len(ax1)
    return amp * (ax0[:, None] * ax1[None, :]).reshape(nx * ny)


FORCING_PROFILES = ("zero", "constant", "bump_steady", "sine_decay",
                    "bump_modulated")


def forcing_function(problem: SpatialProblem, name: str, **params):
    """Named forcing as a callable (t, points) -> nodal values.

    Spatial shapes reuse the cell-averaged initial profiles so forcing
    norms stay exact under the discrete quadrature.
    """
    if name == "zero":
        return None
    amp = params.get("amplitude", 1.0)
    if name == "constant":
        ni = problem.n_interior
        return lambda t, pts: np.full(ni, amp)
    if name == "bump_steady":
        shape = initial_field(problem, "bump")
        return lambda t, pts: amp * shape
    if name == "sine_decay":
        shape = initial_field(problem, "sine")
        rate = params.get("rate", 1.0)
        return lambda t, pts: amp * np.exp(-rate * t) * shape
    if name == "bump_modulated":
        shape = initial_field(problem, "bump")
        rate = params.get("rate", 1.0)
        return lambda t, pts: amp * (1.0 + 0.5 * np.sin(rate * t)) * shape
    raise ConfigurationError(f"unknown forcing profile {name!r}; "
                             f"choose from {FORCING_PROFILES}")
