"""Spatial discretization: tensor meshes, stiffness assembly, discrete norms.

Piecewise-linear elements on a uniform interval (1d) or on a uniformly
right-triangulated rectangle (2d).  Dirichlet boundary nodes are
eliminated: every nodal field in the package is interior-only, so the
boundary condition u = 0 holds exactly by construction.  The mass matrix
is lumped (interior hat integrals), which keeps the discrete comparison
structure of the scheme intact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigurationError, HypothesisError, InputError

__all__ = [
    "SpatialProblem",
    "Coefficient",
    "build_mesh",
    "assemble_stiffness",
    "unit_stiffness",
    "coercivity_probe",
    "l1_norm",
    "positive_part_l1",
    "negative_part_l1",
    "l1_norm_spacetime",
    "gradient_energy",
    "as_field",
]


class Coefficient:
    """Diffusion coefficient A(t, x), normalized to (n, d, d) arrays.

    ``func`` maps (t, points) with points of shape (n, d) to one of: a
    scalar, an (n,) array (isotropic), a (d, d) matrix, or an (n, d, d)
    array.  ``time_dependent=False`` lets the solver cache the assembled
    operator.
    """

    def __init__(self, func=None, time_dependent: bool = True):
        self.func = func
        self.time_dependent = bool(time_dependent) and func is not None

    def matrices(self, t: float, points: np.ndarray) -> np.ndarray:
        n, d = points.shape
        if self.func is None:
            return np.broadcast_to(np.eye(d), (n, d, d))
        raw = np.asarray(self.func(t, points), dtype=float)
        if raw.ndim == 0:
            return raw * np.broadcast_to(np.eye(d), (n, d, d))
        if raw.shape == (n,):
            return raw[:, None, None] * np.eye(d)
        if raw.shape == (d, d):
            return np.broadcast_to(raw, (n, d, d))
        if raw.shape == (n, d, d):
            return raw
        raise InputError(f"coefficient returned shape {raw.shape}, expected "
                         f"scalar, ({n},), ({d},{d}) or ({n},{d},{d})")


@dataclass
class SpatialProblem:
    """Mesh over an interval or rectangle with coefficient and coercivity bound."""

    dim: int
    cells: tuple
    lengths: tuple
    coefficient: Coefficient
    nu: float
    spacings: tuple = field(init=False)
    interior_coords: np.ndarray = field(init=False)
    lumped_mass: np.ndarray = field(init=False)
    _tri: dict = field(init=False, default_factory=dict, repr=False)
    _unit_stiffness: sparse.csr_matrix = field(init=False, default=None, repr=False)

    def __post_init__(self):
        self.spacings = tuple(L / n for L, n in zip(self.lengths, self.cells))
        if self.dim == 1:
            nx = self.cells[0]
            h = self.spacings[0]
            self.interior_coords = (h * np.arange(1, nx)).reshape(-1, 1)
            self.lumped_mass = np.full(nx - 1, h)
        else:
            nx, ny = self.cells
            hx, hy = self.spacings
            xs = hx * np.arange(1, nx)
            ys = hy * np.arange(1, ny)
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            self.interior_coords = np.column_stack([X.ravel(), Y.ravel()])
            self.lumped_mass = np.full((nx - 1) * (ny - 1), hx * hy)
            self._tri = _triangulate(nx, ny, hx, hy)

    @property
    def n_interior(self) -> int:
        return len(self.lumped_mass)

    @property
    def domain_measure(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def time_dependent_coefficient(self) -> bool:
        return self.coefficient.time_dependent

    def quadrature_points(self) -> np.ndarray:
        """Coefficient sampling points: cell midpoints (1d) / centroids (2d)."""
        if self.dim == 1:
            h = self.spacings[0]
            return (h * (np.arange(self.cells[0]) + 0.5)).reshape(-1, 1)
        return self._tri["centroids"]


def build_mesh(dim: int = 1, cells=(4,), lengths=(1.0,), coefficient=None,
               nu: float = 1.0) -> SpatialProblem:
    """Uniform tensor mesh with homogeneous Dirichlet boundary.

    ``coefficient`` may be a Coefficient, a callable (wrapped as
    time-dependent), a constant, or None for the identity.
    """
    if dim not in (1, 2):
        raise ConfigurationError(f"dimension must be 1 or 2, got {dim}")
    cells = tuple(int(c) for c in np.atleast_1d(cells))
    lengths = tuple(float(L) for L in np.atleast_1d(lengths))
    if len(cells) != dim or len(lengths) != dim:
        raise ConfigurationError(f"need {dim} cell counts and lengths, got "
                                 f"{cells} and {lengths}")
    if any(c < 2 for c in cells):
        raise ConfigurationError(f"each direction needs >= 2 cells, got {cells}")
    if any(L <= 0 for L in lengths):
        raise ConfigurationError(f"domain lengths must be positive, got {lengths}")
    if nu <= 0:
        raise ConfigurationError(f"coercivity constant must be positive, got {nu}")
    if coefficient is None or isinstance(coefficient, Coefficient):
        coeff = coefficient or Coefficient(None)
    elif callable(coefficient):
        coeff = Coefficient(coefficient, time_dependent=True)
    else:
        const = np.asarray(coefficient, dtype=float)
        coeff = Coefficient(lambda t, pts, c=const: c, time_dependent=False)
    return SpatialProblem(dim=dim, cells=cells, lengths=lengths,
                          coefficient=coeff, nu=nu)


def _triangulate(nx, ny, hx, hy):
    """Split each rectangle into two right triangles; precompute geometry.

    Vertices are indexed on the full (nx+1) x (ny+1) grid; interior nodes
    get a compressed index, boundary nodes -1.
    """
    def gid(i, j):
        return i * (ny + 1) + j

    interior = -np.ones((nx + 1) * (ny + 1), dtype=int)
    count = 0
    for i in range(1, nx):
        for j in range(1, ny):
            interior[gid(i, j)] = count
            count += 1

    coords = np.array([[i * hx, j * hy] for i in range(nx + 1)
                       for j in range(ny + 1)])
    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = gid(i, j), gid(i + 1, j)
            v01, v11 = gid(i, j + 1), gid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    tris = np.array(tris)
    p0, p1, p2 = (coords[tris[:, k]] for k in range(3))
    det = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) \
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    area = 0.5 * np.abs(det)
    grads = np.empty((len(tris), 3, 2))
    grads[:, 0, 0] = (p1[:, 1] - p2[:, 1]) / det
    grads[:, 0, 1] = (p2[:, 0] - p1[:, 0]) / det
    grads[:, 1, 0] = (p2[:, 1] - p0[:, 1]) / det
    grads[:, 1, 1] = (p0[:, 0] - p2[:, 0]) / det
    grads[:, 2, 0] = (p0[:, 1] - p1[:, 1]) / det
    grads[:, 2, 1] = (p1[:, 0] - p0[:, 0]) / det
    centroids = (p0 + p1 + p2) / 3.0
    return {"tris": tris, "area": area, "grads": grads,
            "centroids": centroids, "interior": interior}


def _coercivity_check(mats: np.ndarray, points: np.ndarray, nu: float, t: float):
    sym = 0.5 * (mats + np.swapaxes(mats, 1, 2))
    eigmin = np.linalg.eigvalsh(sym)[:, 0]
    bad = eigmin < nu - 1e-12
    if np.any(bad):
        i = int(np.argmax(bad))
        raise HypothesisError(
            f"coercivity violated: min eigenvalue {eigmin[i]:.6g} < nu={nu} "
            f"at t={t}, x={points[i]}")


def assemble_stiffness(problem: SpatialProblem, t: float = 0.0,
                       check_coercivity: bool = True) -> sparse.csr_matrix:
    """Stiffness matrix of -div(A grad .) at time t, Dirichlet rows eliminated."""
    pts = problem.quadrature_points()
    mats = problem.coefficient.matrices(t, pts)
    if check_coercivity:
        _coercivity_check(mats, pts, problem.nu, t)
    if problem.dim == 1:
        a = mats[:, 0, 0]
        h = problem.spacings[0]
        ni = problem.n_interior
        # a[i] lives on cell (x_i, x_{i+1}); interior node i+1 couples cells i, i+1
        diag = (a[:-1] + a[1:]) / h
        off = -a[1:-1] / h
        return sparse.diags([off, diag, off], [-1, 0, 1], format="csr")

    tri = problem._tri
    tris, area, grads, interior = (tri["tris"], tri["area"], tri["grads"],
                                   tri["interior"])
    a_g = np.einsum("tij,tnj->tni", mats, grads)
    local = np.einsum("tmi,tni,t->tmn", grads, a_g, area)
    rows, cols, vals = [], [], []
    idx = interior[tris]
    for m in range(3):
        for n in range(3):
            mask = (idx[:, m] >= 0) & (idx[:, n] >= 0)
            rows.append(idx[mask, m])
            cols.append(idx[mask, n])
            vals.append(local[mask, m, n])
    ni = problem.n_interior
    K = sparse.coo_matrix((np.concatenate(vals),
                           (np.concatenate(rows), np.concatenate(cols))),
                          shape=(ni, ni))
    return K.tocsr()


def unit_stiffness(problem: SpatialProblem) -> sparse.csr_matrix:
    """Stiffness with A = I (cached); used for gradient seminorms."""
    if problem._unit_stiffness is None:
        saved = problem.coefficient
        problem.coefficient = Coefficient(None)
        problem._unit_stiffness = assemble_stiffness(problem, 0.0,
                                                     check_coercivity=False)
        problem.coefficient = saved
    return problem._unit_stiffness


def coercivity_probe(problem: SpatialProblem, times) -> float:
    """Check min eig(sym A) >= nu at every quadrature point and time.

    Returns the smallest eigenvalue found; raises HypothesisError naming
    the offending (t, x) otherwise.
    """
    pts = problem.quadrature_points()
    smallest = np.inf
    for t in np.atleast_1d(times):
        mats = problem.coefficient.matrices(float(t), pts)
        _coercivity_check(mats, pts, problem.nu, float(t))
        sym = 0.5 * (mats + np.swapaxes(mats, 1, 2))
        smallest = min(smallest, float(np.linalg.eigvalsh(sym)[:, 0].min()))
    return smallest


def as_field(problem: SpatialProblem, values) -> np.ndarray:
    """Validate an interior nodal field: right length, finite entries."""
    arr = np.asarray(values, dtype=float)
    if arr.shape != (problem.n_interior,):
        raise InputError(f"field has shape {arr.shape}, mesh has "
                         f"{problem.n_interior} interior nodes")
    if not np.all(np.isfinite(arr)):
        raise InputError("field contains non-finite values")
    return arr


def _check_same_length(problem, values):
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != problem.n_interior:
        raise InputError(f"field length {values.shape[-1]} does not match mesh "
                         f"({problem.n_interior} interior nodes)")
    return values


def l1_norm(problem: SpatialProblem, values) -> float:
    """Mass-weighted discrete L1(Omega) norm."""
    values = _check_same_length(problem, values)
    return float(problem.lumped_mass @ np.abs(values))


def positive_part_l1(problem: SpatialProblem, values) -> float:
    values = _check_same_length(problem, values)
    return float(problem.lumped_mass @ np.maximum(values, 0.0))


def negative_part_l1(problem: SpatialProblem, values) -> float:
    values = _check_same_length(problem, values)
    return float(problem.lumped_mass @ np.maximum(-values, 0.0))


def l1_norm_spacetime(problem: SpatialProblem, dt: np.ndarray,
                      fields: np.ndarray, part: str = "abs") -> float:
    """Discrete L1(Q_T) norm of a space-time field.

    ``fields`` holds rows 0..N; the time quadrature is the right-rectangle
    rule matching the piecewise-constant-in-time reading of the scheme, so
    row 0 carries no weight.
    """
    fields = _check_same_length(problem, fields)
    if fields.shape[0] != len(dt) + 1:
        raise InputError(f"{fields.shape[0]} time rows for {len(dt)} steps")
    if part == "abs":
        g = np.abs(fields[1:])
    elif part == "pos":
        g = np.maximum(fields[1:], 0.0)
    elif part == "neg":
        g = np.maximum(-fields[1:], 0.0)
    else:
        raise InputError(f"part must be abs/pos/neg, got {part!r}")
    return float(dt @ (g @ problem.lumped_mass))


def gradient_energy(problem: SpatialProblem, values) -> float:
    """Discrete H1_0 seminorm squared: v^T K_unit v."""
    values = _check_same_length(problem, values)
    K = unit_stiffness(problem)
    return float(values @ (K @ values))
