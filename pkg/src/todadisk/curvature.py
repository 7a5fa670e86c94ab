"""Derived geometry of converged solutions.

Everything here is a pure function of a :class:`~todadisk.solver.Solution`.
Metric factors are relative to the Poincare density, so a factor F stands for
the metric ``F * lambda |dz|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError
from .grid import DifferenceStencil, DiskGrid, discrete_curvature, laplace_beltrami, relative_curvature
from .systems import CyclicToda, SubcyclicToda

__all__ = [
    "DerivedGeometry",
    "compute_f_fields",
    "curvature_closed_form",
    "curvature_discrete",
    "curvature_cross_check",
    "sectional_curvature",
    "energy_density",
    "bochner_constants",
    "bochner_table",
    "bochner_residual",
    "epsilon_h",
    "ratio_chain",
    "lemma41_margin",
    "conformal_upper_bound_check",
    "wan_quantities",
    "blaschke_curvature",
    "gauss_identity_check",
    "maximal_bochner",
    "g2_quantities",
]


def _laplacian(grid):
    """Interior Laplace-Beltrami in difference form (zero on the boundary ring)."""
    return DifferenceStencil(laplace_beltrami(grid).matrix)


# safety factor applied to the calibrated truncation error of the q = 0 background
EPS_SAFETY = 1.0


@dataclass
class DerivedGeometry:
    """f-fields f_0..f_r (extended by f_i = f_{r-i}) on a grid."""

    system: str  # "cyclic" or "subcyclic"
    rank: int
    grid: DiskGrid
    f: np.ndarray  # shape (r + 1, n_unknowns)
    weights: np.ndarray

    @property
    def n(self):
        return self.rank // 2

    def factor(self, i):
        """Conformal factor of g(h)_i relative to the Poincare density."""
        return self.f[i]

    @cached_property
    def laplacian(self):
        return _laplacian(self.grid)


def compute_f_fields(solution) -> DerivedGeometry:
    """f_0 = |q|^2-weighted exponential, f_i = exp(-w_i + w_{i+1}), extended to i <= r."""
    problem = solution.problem
    kind = problem.kind
    if kind == "cyclic":
        fam, W = CyclicToda(problem.rank), solution.fields
    elif kind == "subcyclic":
        fam, W = SubcyclicToda(problem.rank), solution.fields
    elif kind == "g2":
        fam, W = SubcyclicToda(7), problem.family.weights(solution.fields)
    else:
        raise ConfigurationError(f"f-fields are defined for Toda systems, not {kind}")
    d = fam.data(problem.q, problem.grid.z_p)
    f = fam.f_fields(W, d)
    r = fam.r
    full = np.empty((r + 1, W.shape[1]))
    for i in range(fam.n + 1):
        full[i] = f[i]
    for i in range(fam.n + 1, r + 1):
        full[i] = full[r - i]
    return DerivedGeometry(fam.name, r, problem.grid, full, np.asarray(W))


def _check_index(geom, i):
    if not 1 <= i <= geom.n:
        raise ConfigurationError(f"curvature index must be in 1..{geom.n}, got {i}")


def curvature_closed_form(geom: DerivedGeometry, i: int):
    """K_{g(h)_i} written in the f-fields (no derivatives)."""
    _check_index(geom, i)
    f, r = geom.f, geom.rank
    if geom.system == "cyclic":
        # r = 2, 3 and i = 1 are the same expression once f is extended
        return 2.0 * ((f[i - 1] + f[i + 1]) / f[i] - 2.0)
    if i == 1:
        if r == 3:
            return 2.0 * (f[0] / f[1] - 1.0)
        return 2.0 * (f[2] / f[1] - 2.0)
    if i == 2:
        if r == 4:
            return 4.0 * ((f[0] + f[1]) / f[2] - 1.0)
        return 2.0 * ((f[0] + f[1] + f[3]) / f[2] - 2.0)
    return 2.0 * ((f[i - 1] + f[i + 1]) / f[i] - 2.0)


def curvature_discrete(geom: DerivedGeometry, i: int):
    """Discrete curvature of the metric f_i * lambda; NaN on the boundary ring."""
    _check_index(geom, i)
    return relative_curvature(geom.f[i], geom.grid)


def curvature_cross_check(geom: DerivedGeometry, i: int):
    """|closed form - discrete curvature| at interior nodes (NaN on the boundary)."""
    return np.abs(curvature_closed_form(geom, i) - curvature_discrete(geom, i))


def sectional_curvature(geom: DerivedGeometry):
    """Sectional curvature of the tangent plane of the associated immersion."""
    f, r = geom.f, geom.rank
    if geom.system == "cyclic":
        if r < 3:
            raise ConfigurationError("sectional curvature needs cyclic rank >= 3")
        num = sum((f[i - 1] - f[i]) ** 2 for i in range(1, r + 1))
        den = sum(f[i] for i in range(1, r + 1)) ** 2
    else:
        if r < 4:
            raise ConfigurationError("sectional curvature needs subcyclic rank >= 4")
        num = 2.0 * (f[0] - f[1]) ** 2 + 2.0 * (f[0] + f[1] - f[2]) ** 2
        num = num + sum((f[i - 1] - f[i]) ** 2 for i in range(3, r - 1))
        den = sum(f[i] for i in range(r)) ** 2
    return -num / (2.0 * r * den)


def energy_density(geom: DerivedGeometry):
    """Conformal factor of the energy density metric, 2r * sum_{i<r} f_i."""
    return 2.0 * geom.rank * geom.f[: geom.rank].sum(axis=0)


# Bochner inequalities ---------------------------------------------------------------

_U, _C = "unconditional", "conditional"

# (system, r, i) -> (c1, c2, status); "conditional" cases are proved for the
# complete solution only
_BOCHNER = {
    ("cyclic", 2, 1): (1.0, 4.0, _U),
    ("cyclic", 3, 1): (1.5, 2.0, _U),
    ("cyclic", 4, 1): (1.0, 4.0, _U),
    ("cyclic", 4, 2): (0.75, 4.0, _C),
    ("cyclic", 5, 2): (0.75, 4.0, _C),
    ("cyclic", 6, 2): (0.75, 4.0, _C),
    ("cyclic", 6, 3): (0.75, 4.0, _C),
    ("cyclic", 7, 2): (0.75, 4.0, _C),
    ("cyclic", 7, 3): (0.75, 4.0, _C),
    ("subcyclic", 3, 1): (1.0, 2.0, _U),
    ("subcyclic", 4, 1): (0.5, 4.0, _C),
    ("subcyclic", 4, 2): (0.75, 4.0, _U),
    ("subcyclic", 5, 1): (0.5, 4.0, _C),
    ("subcyclic", 5, 2): (1.0, 2.0, _U),
    ("subcyclic", 6, 2): (0.75, 4.0, _C),
    ("subcyclic", 6, 3): (0.75, 4.0, _C),
    ("subcyclic", 7, 2): (0.75, 4.0, _U),
    ("subcyclic", 7, 3): (0.75, 4.0, _C),
}

NO_CLAIM = "no inequality claimed"


def bochner_constants(system, r, i):
    """(c1, c2, status) for Delta K >= c1 K (K + c2), or None if nothing is claimed."""
    return _BOCHNER.get((system, int(r), int(i)))


def bochner_table():
    """The constants table as a JSON-ready list."""
    return [
        {"system": s, "rank": r, "index": i, "c1": c1, "c2": c2, "status": st}
        for (s, r, i), (c1, c2, st) in sorted(_BOCHNER.items())
    ]


@dataclass
class BochnerResult:
    index: int
    minimum: float | None
    c1: float | None
    c2: float | None
    status: str
    field: np.ndarray | None = None

    @property
    def violation(self):
        return 0.0 if self.minimum is None else max(0.0, -self.minimum)

    def to_json(self):
        return {
            "index": self.index,
            "minimum": self.minimum,
            "c1": self.c1,
            "c2": self.c2,
            "status": self.status,
            "violation": self.violation,
        }


def bochner_residual(geom: DerivedGeometry, i: int) -> BochnerResult:
    """min over interior nodes of Delta_{g(h)_i} K - c1 K (K + c2)."""
    _check_index(geom, i)
    consts = bochner_constants(geom.system, geom.rank, i)
    if consts is None:
        return BochnerResult(i, None, None, None, NO_CLAIM)
    c1, c2, status = consts
    K = curvature_closed_form(geom, i)
    lapK = geom.laplacian(K) / geom.f[i]
    res = lapK - c1 * K * (K + c2)
    res[geom.grid.boundary_mask] = np.nan
    return BochnerResult(i, float(np.nanmin(res)), c1, c2, status, res)


def epsilon_h(grid: DiskGrid, safety=EPS_SAFETY):
    """Tolerance C h^2 for one-sided inequalities on ``grid``.

    C is calibrated on the q = 0 case: the only discretisation error there is
    the curvature defect of the background density, so
    C = safety * sup|K_h(lambda) + 1| / h^2.  Returns (eps, C).
    """
    err = np.nanmax(np.abs(discrete_curvature(grid.density, grid) + 1.0))
    C = safety * float(err) / grid.h**2
    return C * grid.h**2, C


def ratio_chain(geom: DerivedGeometry):
    """Pointwise ratio checks on the f-chain.

    Cyclic: (i-1)(r-i+1)/(i(r-i)) <= f_{i-1}/f_i < 1 for i = 1..n.
    Subcyclic: f_0/f_1 < 1 and, for r >= 4, (f_0 + f_1)/f_2 < 1 followed by
    f_{i-1}/f_i < 1 for i = 3..n.
    Each entry records the sup of the ratio and the worst lower-bound margin.
    """
    f, r, n = geom.f, geom.rank, geom.n
    out = []
    if geom.system == "cyclic":
        for i in range(1, n + 1):
            ratio = f[i - 1] / f[i]
            lower = (i - 1) * (r - i + 1) / (i * (r - i))
            out.append(
                {
                    "index": i,
                    "ratio": f"f{i - 1}/f{i}",
                    "sup": float(ratio.max()),
                    "lower_bound": lower,
                    "min_margin_lower": float((ratio - lower).min()),
                }
            )
        return out
    out.append({"index": 1, "ratio": "f0/f1", "sup": float((f[0] / f[1]).max())})
    if r >= 4:
        out.append({"index": 2, "ratio": "(f0+f1)/f2", "sup": float(((f[0] + f[1]) / f[2]).max())})
        for i in range(3, n + 1):
            out.append({"index": i, "ratio": f"f{i - 1}/f{i}", "sup": float((f[i - 1] / f[i]).max())})
    return out


def lemma41_margin(solution):
    """1 - sup of the quantity kept below 1: |q|^2 e^{(a+b)w} or f_0/f_1."""
    problem = solution.problem
    if problem.kind == "vortex":
        fam = problem.family
        Q = problem.q.norm_sq(problem.grid.z_p)
        s = float(np.max(Q * np.exp((fam.a + fam.b) * solution.fields[0])))
        return {"quantity": "|q|^2 exp((a+b)w)", "sup": s, "margin": 1.0 - s}
    geom = compute_f_fields(solution)
    s = float(np.max(geom.f[0] / geom.f[1]))
    return {"quantity": "f0/f1", "sup": s, "margin": 1.0 - s}


def conformal_upper_bound_check(geom: DerivedGeometry, i: int, b: float, eps: float = 0.0):
    """If K_{g(h)_i} <= -b and K_{g_D} = -1, then f_i <= 1/b; returns the worst excess."""
    if not b > 0:
        raise ConfigurationError("curvature bound b must be positive")
    excess = float(np.max(geom.f[i] - 1.0 / b))
    return {"index": i, "b": b, "sup_f": float(geom.f[i].max()), "excess": excess, "holds": excess <= eps}


# quantities of the scalar equations --------------------------------------------------


def _expect_vortex_r2(problem):
    if problem.kind != "vortex":
        raise ConfigurationError("Wan quantities need a vortex solution")
    fam = problem.family
    if (fam.a, fam.b, fam.c, fam.kappa) != (2.0, 2.0, 0.25, -1.0):
        raise ConfigurationError("Wan quantities need (a, b, c, kappa) = (2, 2, 1/4, -1)")


def wan_quantities(solution):
    """Energy densities of the harmonic map for the quadratic-differential case."""
    problem = solution.problem
    _expect_vortex_r2(problem)
    w = solution.fields[0]
    Q = problem.q.norm_sq(problem.grid.z_p)
    H = np.exp(-2.0 * w)
    L = Q * np.exp(2.0 * w)
    dil = Q * np.exp(4.0 * w)
    return {
        "H": H,
        "L": L,
        "dilatation": dil,
        "jacobian": H - L,
        # curvature of exp(-2w) g_D in closed form
        "K": 4.0 * (dil - 1.0),
    }


def blaschke_curvature(w, q3, grid: DiskGrid):
    """k_h = -1 + 2|q|^2 e^{-3w}, curvature of the Blaschke metric e^w g_D."""
    if q3.order != 3:
        raise ConfigurationError("the Pick differential has order 3")
    Q = q3.norm_sq(grid.z_p)
    return -1.0 + 2.0 * Q * np.exp(-3.0 * np.asarray(w))


def _maximal_fields(solution):
    problem = solution.problem
    if problem.kind != "maximal":
        raise ConfigurationError("expected a maximal surface solution")
    u, v = solution.fields
    S = np.sqrt(problem.q.norm_sq(problem.grid.z_p))
    beta = 0.25 * S * np.exp(4.0 * u + v)
    return u, v, beta


def gauss_identity_check(solution):
    """Compare the curvature of the induced metric with -1 + |beta|^2_h."""
    u, v, beta = _maximal_fields(solution)
    grid = solution.grid
    k = -1.0 + beta
    K = relative_curvature(4.0 * np.exp(-2.0 * u), grid)
    disc = np.abs(K - k)
    return {
        "sup_discrepancy": float(np.nanmax(disc)),
        "min_k": float(k.min()),
        "k": k,
        "discrete_k": K,
        "beta_sq": beta,
    }


def maximal_bochner(solution):
    """Delta_g k - k(1 + k) for the induced metric g = 4 e^{-2u} g_D."""
    u, v, beta = _maximal_fields(solution)
    grid = solution.grid
    k = -1.0 + beta
    lap = np.exp(2.0 * u) / 4.0 * _laplacian(grid)(k)
    res = lap - k * (1.0 + k)
    res[grid.boundary_mask] = np.nan
    return {"minimum": float(np.nanmin(res)), "field": res}


def g2_quantities(solution):
    """Curvature k of the associated almost-complex curve and its Bochner residual.

    In the weights of the subcyclic system the induced metric is 2 f_3 g_D and
    k = f_2/f_3 - 1.
    """
    problem = solution.problem
    if problem.kind != "g2":
        raise ConfigurationError("expected a constrained g2 solution")
    fam = problem.family
    grid = problem.grid
    f0, f1, f2, f3 = fam.f_fields(solution.fields, fam.data(problem.q, grid.z_p))
    k = f2 / f3 - 1.0
    lap = _laplacian(grid)(k) / (2.0 * f3)
    res = lap - 3.0 * k * (k + 1.0)
    res[grid.boundary_mask] = np.nan
    return {"k": k, "min_k": float(k.min()), "bochner": res, "bochner_min": float(np.nanmin(res))}
