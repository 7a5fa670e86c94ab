"""Polar finite-difference grids on a truncated Poincare disk.

Nodes are arranged as an ``(n_rho, n_theta)`` array: ring ``j`` sits at radius
``rho[j]`` with ``rho[0] = 0`` and ``rho[-1] = R`` (the Dirichlet ring), and
angle ``theta[k] = 2 pi k / n_theta``.  Row 0 is the single centre node, so
the solver works on *packed* vectors holding one centre value followed by
rings 1..n_rho-1 in row-major order.  ``n_theta == 1`` gives the radial grid,
on which the same stencils act on rotationally symmetric fields.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DomainError
from .geometry import RDifferential

__all__ = [
    "DiskGrid",
    "LinearOperator",
    "ScalarField",
    "build_grid",
    "laplace_beltrami",
    "euclidean_laplacian",
    "discrete_curvature",
    "relative_curvature",
    "dzdzbar",
    "DifferenceStencil",
    "radial_reduce",
    "write_field_csv",
    "read_field_csv",
]

CLUSTER_WEIGHT = 0.5


@dataclass(frozen=True, eq=False)
class DiskGrid:
    R: float
    n_rho: int
    n_theta: int
    cluster: bool = False

    def __post_init__(self):
        if not (0.0 < self.R < 1.0):
            raise ConfigurationError(f"truncation radius must lie in (0, 1), got {self.R}")
        if int(self.n_rho) != self.n_rho or self.n_rho < 16:
            raise ConfigurationError(f"n_rho must be an integer >= 16, got {self.n_rho}")
        if int(self.n_theta) != self.n_theta or not (self.n_theta == 1 or self.n_theta >= 8):
            raise ConfigurationError(f"n_theta must be 1 or an integer >= 8, got {self.n_theta}")
        object.__setattr__(self, "n_rho", int(self.n_rho))
        object.__setattr__(self, "n_theta", int(self.n_theta))
        object.__setattr__(self, "R", float(self.R))

    # layout -----------------------------------------------------------------

    @property
    def radial(self):
        return self.n_theta == 1

    @property
    def shape(self):
        return (self.n_rho, self.n_theta)

    @property
    def size(self):
        return self.n_rho * self.n_theta

    @property
    def n_unknowns(self):
        return 1 + (self.n_rho - 1) * self.n_theta

    @cached_property
    def rho(self):
        s = np.linspace(0.0, 1.0, self.n_rho)
        if self.cluster:
            s = (1.0 - CLUSTER_WEIGHT) * s + CLUSTER_WEIGHT * np.sin(0.5 * np.pi * s)
        r = self.R * s
        r[-1] = self.R
        return r

    @cached_property
    def theta(self):
        return 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta

    @cached_property
    def z(self):
        """Complex coordinates of all nodes, shape (n_rho, n_theta)."""
        return self.rho[:, None] * np.exp(1j * self.theta[None, :])

    @property
    def h(self):
        """Mesh size used for the O(h^2) tolerances."""
        dr = float(np.max(np.diff(self.rho)))
        if self.radial:
            return dr
        return max(dr, self.R * 2.0 * np.pi / self.n_theta)

    @cached_property
    def ring_index(self):
        """Ring number of every packed unknown."""
        return np.concatenate([[0], np.repeat(np.arange(1, self.n_rho), self.n_theta)])

    @cached_property
    def rho_p(self):
        return self.rho[self.ring_index]

    @cached_property
    def z_p(self):
        return self.pack(self.z)

    @cached_property
    def boundary_mask(self):
        return self.ring_index == self.n_rho - 1

    @cached_property
    def interior_mask(self):
        return ~self.boundary_mask

    @cached_property
    def density(self):
        """Poincare density at packed nodes."""
        return 4.0 / (1.0 - self.rho_p**2) ** 2

    def pack(self, values):
        """Map an (n_rho, n_theta) array to the packed unknown vector."""
        a = np.asarray(values)
        if a.shape == (self.n_unknowns,):
            return a
        if a.shape != self.shape:
            raise ConfigurationError(f"field shape {a.shape} does not match grid {self.shape}")
        return np.concatenate([a[0, :1], a[1:].ravel()])

    def unpack(self, vec):
        """Map a packed vector back to the (n_rho, n_theta) array."""
        v = np.asarray(vec)
        if v.shape == self.shape:
            return v
        if v.shape != (self.n_unknowns,):
            raise ConfigurationError(f"vector length {v.shape} does not match grid")
        out = np.empty(self.shape, dtype=v.dtype)
        out[0, :] = v[0]
        out[1:] = v[1:].reshape(self.n_rho - 1, self.n_theta)
        return out

    def disk_mask(self, radius):
        """Packed mask of nodes with |z| <= radius."""
        return self.rho_p <= radius + 1e-14

    def refined(self):
        """Grid with halved spacing whose nodes contain this grid's nodes."""
        nt = self.n_theta if self.radial else 2 * self.n_theta
        return DiskGrid(self.R, 2 * (self.n_rho - 1) + 1, nt, self.cluster)

    def restrict_from_fine(self, fine, vec):
        """Sample a packed field on the nested finer grid at this grid's nodes."""
        full = fine.unpack(vec)
        step_t = 1 if self.radial else fine.n_theta // self.n_theta
        step_r = (fine.n_rho - 1) // (self.n_rho - 1)
        return self.pack(full[::step_r, ::step_t])

    def params(self):
        return {"R": self.R, "n_rho": self.n_rho, "n_theta": self.n_theta, "cluster": self.cluster}

    def __eq__(self, other):
        return isinstance(other, DiskGrid) and self.params() == other.params()

    def __hash__(self):
        return hash(tuple(self.params().values()))

    def __repr__(self):
        return f"DiskGrid(R={self.R}, n_rho={self.n_rho}, n_theta={self.n_theta}, cluster={self.cluster})"


def build_grid(R, n_rho, n_theta, cluster=False):
    """Construct a polar grid; raises ConfigurationError on bad parameters."""
    return DiskGrid(R, n_rho, n_theta, cluster)


@dataclass(frozen=True)
class ScalarField:
    """A real value per node, stored packed."""

    values: np.ndarray
    grid: DiskGrid = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.grid.pack(np.asarray(self.values, dtype=float)), dtype=float)
        if v.shape != (self.grid.n_unknowns,):
            raise ConfigurationError("value count does not match the grid")
        object.__setattr__(self, "values", v)

    def as_array(self):
        return self.grid.unpack(self.values)


@dataclass(frozen=True)
class LinearOperator:
    """Sparse second-order stencil acting on packed fields."""

    matrix: sp.csr_matrix
    grid: DiskGrid = field(repr=False)
    stencil_order: int = 2

    def __call__(self, values):
        v = np.asarray(values)
        full = v.shape == self.grid.shape
        out = self.matrix @ self.grid.pack(v)
        return self.grid.unpack(out) if full else out

    apply = __call__


class DifferenceStencil:
    """Apply a constant-annihilating stencil as sum_k a_jk (w_k - w_j).

    Mathematically equal to ``M @ w``; evaluating differences avoids the
    cancellation of large stencil weights near the polar centre, which would
    otherwise put a rounding floor of about 1e-10 under the residual.
    """

    def __init__(self, M):
        M = sp.coo_matrix(M)
        off = M.row != M.col
        self.rows, self.cols, self.vals = M.row[off], M.col[off], M.data[off]
        self.size = M.shape[0]

    def __call__(self, x):
        return np.bincount(self.rows, weights=self.vals * (x[self.cols] - x[self.rows]), minlength=self.size)


def _radial_coefficients(rho):
    """Three-point coefficients of u'' + u'/rho on rings 1..n-2 (nonuniform)."""
    hm = rho[1:-1] - rho[:-2]
    hp = rho[2:] - rho[1:-1]
    r = rho[1:-1]
    s = hm + hp
    cm = 2.0 / (hm * s) - hp / (hm * s) / r
    c0 = -2.0 / (hm * hp) + (hp - hm) / (hm * hp) / r
    cp = 2.0 / (hp * s) + hm / (hp * s) / r
    return cm, c0, cp


def euclidean_laplacian(grid: DiskGrid):
    """d_xx + d_yy in polar form on packed fields; boundary rows are zero."""
    nr, nt = grid.n_rho, grid.n_theta
    rho = grid.rho
    rows, cols, vals = [], [], []

    def idx(j, k):
        # packed index of ring j >= 1, angle k
        return 1 + (j - 1) * nt + (k % nt)

    # centre: average-of-neighbours closure, 4 (mean(ring 1) - u0) / rho1^2
    c = 4.0 / rho[1] ** 2
    rows += [0] * (nt + 1)
    cols += [0] + [idx(1, k) for k in range(nt)]
    vals += [-c] + [c / nt] * nt

    cm, c0, cp = _radial_coefficients(rho)
    j = np.repeat(np.arange(1, nr - 1), nt)
    k = np.tile(np.arange(nt), nr - 2)
    me = 1 + (j - 1) * nt + k
    inner = np.where(j == 1, 0, 1 + (j - 2) * nt + k)
    outer = 1 + j * nt + k
    cm_, c0_, cp_ = cm[j - 1], c0[j - 1], cp[j - 1]
    rows_a = [me, me, me]
    cols_a = [inner, me, outer]
    vals_a = [cm_, c0_.copy(), cp_]
    if nt > 1:
        dth = 2.0 * np.pi / nt
        a = 1.0 / (rho[j] * dth) ** 2
        vals_a[1] = vals_a[1] - 2.0 * a
        left = 1 + (j - 1) * nt + (k - 1) % nt
        right = 1 + (j - 1) * nt + (k + 1) % nt
        rows_a += [me, me]
        cols_a += [left, right]
        vals_a += [a, a]
    rows = np.concatenate([np.asarray(rows)] + rows_a)
    cols = np.concatenate([np.asarray(cols)] + cols_a)
    vals = np.concatenate([np.asarray(vals, dtype=float)] + vals_a)
    n = grid.n_unknowns
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def laplace_beltrami(grid: DiskGrid) -> LinearOperator:
    """Discrete Delta_g = (1/(4 lambda)) (d_xx + d_yy) with identity Dirichlet rows."""
    D = euclidean_laplacian(grid)
    scale = np.where(grid.interior_mask, 1.0 / (4.0 * grid.density), 0.0)
    L = sp.diags(scale) @ D + sp.diags(grid.boundary_mask.astype(float))
    return LinearOperator(sp.csr_matrix(L), grid)


def dzdzbar(grid: DiskGrid) -> LinearOperator:
    """Discrete d_z d_zbar = (1/4)(d_xx + d_yy); meaningful at interior nodes only."""
    return LinearOperator(sp.csr_matrix(0.25 * euclidean_laplacian(grid)), grid)


def discrete_curvature(conformal_factor, grid: DiskGrid):
    """Gaussian curvature of F |dz|^2, K = -(2/F) d_z d_zbar log F.

    Input may be packed or an (n_rho, n_theta) array and the output matches.
    Boundary nodes have no stencil and are returned as NaN.
    """
    F = np.asarray(conformal_factor, dtype=float)
    full = F.shape == grid.shape
    Fp = grid.pack(F)
    if np.any(~(Fp > 0)):
        raise DomainError("conformal factor must be strictly positive")
    K = -2.0 / Fp * (dzdzbar(grid).matrix @ np.log(Fp))
    K[grid.boundary_mask] = np.nan
    return grid.unpack(K) if full else K


def relative_curvature(factor, grid: DiskGrid):
    """Curvature of F * lambda |dz|^2 with the background handled exactly.

    K = (K_lambda - 2 Delta_g log F) / F with K_lambda = -1; only log F is
    differentiated numerically, so constant F gives -1/F to rounding.
    Boundary nodes are NaN.
    """
    F = np.asarray(factor, dtype=float)
    full = F.shape == grid.shape
    Fp = grid.pack(F)
    if np.any(~(Fp > 0)):
        raise DomainError("conformal factor must be strictly positive")
    L = laplace_beltrami(grid).matrix
    lap = DifferenceStencil(L)(np.log(Fp))
    K = (-1.0 - 2.0 * lap) / Fp
    K[grid.boundary_mask] = np.nan
    return grid.unpack(K) if full else K


def radial_reduce(q: RDifferential) -> bool:
    """True iff q = c z^m dz^r, so |q|^2_g and the solution are rotationally symmetric."""
    return q.monomial_form() is not None


# CSV field dumps --------------------------------------------------------------

CSV_COLUMNS = ("rho", "theta", "x", "y", "value")


def _fmt(x):
    return format(float(x), ".17g")


def write_field_csv(path, grid: DiskGrid, values):
    """Write one field, one row per node, with 17 significant digits."""
    from .io import atomic_write_text

    arr = grid.unpack(grid.pack(np.asarray(values, dtype=float)))
    lines = [",".join(CSV_COLUMNS)]
    for j in range(grid.n_rho):
        for k in range(grid.n_theta):
            z = grid.z[j, k]
            lines.append(",".join(_fmt(v) for v in (grid.rho[j], grid.theta[k], z.real, z.imag, arr[j, k])))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_field_csv(path, grid: DiskGrid):
    """Read a field written by write_field_csv back into packed form."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ConfigurationError(f"{path}: unexpected CSV header {reader.fieldnames}")
        vals = np.array([float(row["value"]) for row in reader])
    if vals.size != grid.size:
        raise ConfigurationError(f"{path}: {vals.size} rows for a grid of {grid.size} nodes")
    return grid.pack(vals.reshape(grid.shape))
