"""Damped Newton with amplitude continuation for the discretised systems.

The stacked unknown is ``W`` with shape ``(n_fields, n_unknowns)`` (packed
grid vectors).  Interior rows are ``scale_i * Delta_g w_i - F_i(w)``; rows on
the ring rho = R are Dirichlet rows ``w_i - b_i`` whose data ``b`` solve the
frozen-coefficient algebraic system ``F(b; data(z)) = 0`` node by node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ConfigurationError, SolverError
from .geometry import RDifferential
from .grid import DifferenceStencil, DiskGrid, laplace_beltrami, radial_reduce
from .systems import LN2, make_family

__all__ = [
    "TodaProblem",
    "Solution",
    "newton_solve",
    "solve_radial",
    "solve_g2",
    "frozen_boundary",
    "residual",
    "jacobian",
    "residual_cyclic",
    "residual_subcyclic",
    "residual_vortex",
    "residual_wang",
    "residual_maximal_rank1",
]

KINDS = ("cyclic", "subcyclic", "vortex", "wang", "maximal", "g2")
MIN_STEP = 2.0**-20
ARMIJO = 1e-4
MAX_DOUBLINGS = 6


@dataclass(frozen=True)
class TodaProblem:
    """Equation family, differential, grid and Newton parameters."""

    kind: str
    q: RDifferential
    grid: DiskGrid
    rank: int | None = None
    vortex: tuple | None = None
    tol: float = 1e-10
    max_iter: int = 50
    steps: int = 8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        rank = self.rank
        if self.kind == "vortex":
            rank = self.q.order if rank is None else rank
        elif self.kind in ("wang", "maximal"):
            fixed = {"wang": 3, "maximal": 4}[self.kind]
            if rank not in (None, fixed):
                raise ConfigurationError(f"{self.kind} has rank {fixed}")
            rank = fixed
        elif self.kind == "g2":
            if rank not in (None, 7):
                raise ConfigurationError("g2 has rank 7")
            rank = 7
        elif rank is None:
            raise ConfigurationError(f"{self.kind} needs a rank")
        object.__setattr__(self, "rank", int(rank))
        if self.vortex is not None:
            object.__setattr__(self, "vortex", tuple(float(x) for x in self.vortex))
        fam = self.family  # validates parameters
        expected = fam.q_order
        if expected is not None and self.q.order != expected:
            msg = {
                "cyclic": "order must equal rank for cyclic",
                "subcyclic": "order must equal rank - 1 for subcyclic",
            }.get(self.kind, f"{self.kind} needs a differential of order {expected}")
            raise ConfigurationError(f"{msg} (rank {self.rank}, order {self.q.order})")
        if not self.tol > 0 or self.max_iter < 1 or self.steps < 1:
            raise ConfigurationError("solver parameters must be positive")

    @cached_property
    def family(self):
        return make_family(self.kind, self.rank, self.vortex)

    def with_grid(self, grid):
        return replace(self, grid=grid)

    def with_q(self, q):
        return replace(self, q=q)

    def describe(self):
        out = {"kind": self.kind, "rank": self.rank, "q": self.q.to_json(), "grid": self.grid.params()}
        if self.vortex is not None:
            out["vortex"] = dict(zip(("a", "b", "c", "kappa"), self.vortex))
        out["solver"] = {"tol": self.tol, "max_iter": self.max_iter, "steps": self.steps}
        return out


@dataclass
class Solution:
    """Converged fields with residual and continuation metadata."""

    problem: TodaProblem
    fields: np.ndarray
    residual_sup: float
    newton_iterations: int
    continuation_trace: list = field(default_factory=list)
    converged: bool = True

    @property
    def grid(self):
        return self.problem.grid

    @property
    def n_fields(self):
        return self.fields.shape[0]

    def field(self, i):
        """Packed values of the i-th unknown (1-based, as w_1..w_n)."""
        return self.fields[i - 1]

    def metadata(self):
        return {
            "problem": self.problem.describe(),
            "residual_sup": self.residual_sup,
            "newton_iterations": self.newton_iterations,
            "converged": self.converged,
            "continuation_trace": [
                {"amplitude": t, "residual": res, "iterations": it, "accepted": ok}
                for t, res, it, ok in self.continuation_trace
            ],
        }


# assembly ---------------------------------------------------------------------------


class _Assembly:
    """Operators and coefficient data for one problem."""

    def __init__(self, problem: TodaProblem):
        self.problem = problem
        self.family = problem.family
        grid = problem.grid
        self.grid = grid
        self.interior = grid.interior_mask
        self.boundary = grid.boundary_mask
        L = laplace_beltrami(grid).matrix
        self.L = sp.csr_matrix(sp.diags(self.interior.astype(float)) @ L)
        self.apply_L = DifferenceStencil(self.L)
        n = self.family.n_fields
        scales = self.family.scales
        eye_b = sp.diags(self.boundary.astype(float))
        self.base = sp.block_diag([scales[i] * self.L + eye_b for i in range(n)], format="csr")
        self._data_cache = {}
        # largest absolute row sum of the scaled stencils: one ulp of w times
        # this is the smallest residual that rounding lets Newton resolve
        self.row_scale = float(np.max(np.abs(self.base).sum(axis=1)))

    def rounding_floor(self, W):
        return float(np.finfo(float).eps * self.row_scale * max(1.0, np.max(np.abs(W))))

    def data(self, t):
        if t not in self._data_cache:
            q = self.problem.q if t == 1.0 else self.problem.q.scaled(t)
            self._data_cache[t] = self.family.data(q, self.grid.z_p)
        return self._data_cache[t]

    def boundary_data(self, t):
        d = self.data(t)
        return {k: v[self.boundary] for k, v in d.items()}

    def residual(self, W, B, t):
        fam = self.family
        F = fam.rhs(W, self.data(t))
        R = np.empty_like(W)
        for i in range(fam.n_fields):
            R[i] = fam.scales[i] * self.apply_L(W[i]) - F[i]
        R[:, self.boundary] = W[:, self.boundary] - B
        return R

    def jacobian(self, W, t):
        fam = self.family
        dF = fam.jac(W, self.data(t))
        n = fam.n_fields
        mask = self.interior.astype(float)
        blocks = [[sp.diags(mask * dF[i, j]) for j in range(n)] for i in range(n)]
        return sp.csc_matrix(self.base - sp.bmat(blocks, format="csr"))


def frozen_boundary(family, data, W0, tol=1e-14, max_iter=200):
    """Solve F(w; data) = 0 independently at every point (zero-Laplacian ansatz).

    ``data`` maps names to arrays of length m and ``W0`` has shape
    (n_fields, m).  Damped Newton with per-point backtracking.
    """
    W = np.array(W0, dtype=float, copy=True)
    n = family.n_fields
    for _ in range(max_iter):
        F = family.rhs(W, data)
        fnorm = np.max(np.abs(F), axis=0)
        J = np.moveaxis(family.jac(W, data), -1, 0)
        # zero Laplacian: 0 = F(w), so J dw = -F with J = dF/dw
        try:
            dW = np.linalg.solve(J, -F.T[:, :, None])[:, :, 0].T
        except np.linalg.LinAlgError:
            # degenerate rows (e.g. the normal-bundle equation where q vanishes)
            # leave that component free; take the minimum-norm step
            dW = (np.linalg.pinv(J) @ -F.T[:, :, None])[:, :, 0].T
        alpha = np.ones(W.shape[1])
        active = np.ones(W.shape[1], dtype=bool)
        for _ in range(60):
            trial = W + alpha * dW
            with np.errstate(all="ignore"):
                tn = np.max(np.abs(family.rhs(trial, data)), axis=0)
            bad = active & ~(np.isfinite(tn) & (tn <= (1 - ARMIJO * alpha) * fnorm + 1e-300))
            if not bad.any():
                break
            alpha = np.where(bad, alpha / 2, alpha)
            active = bad
        W = W + alpha * dW
        if np.max(np.abs(alpha * dW)) <= tol * (1.0 + np.max(np.abs(W))):
            break
    F = family.rhs(W, data)
    if not np.all(np.isfinite(W)):
        raise SolverError("frozen-coefficient boundary solve produced non-finite values")
    scale = 1.0 + sum(np.abs(x) for x in family.jac(W, data).reshape(n * n, -1))
    if np.max(np.abs(F) / scale) > 1e-10:
        raise SolverError("frozen-coefficient boundary solve did not converge")
    return W


def residual(W, problem: TodaProblem):
    """PDE residual on packed fields.

    Interior entries are ``scale_i Delta_g w_i - F_i``.  On the Dirichlet ring
    the Laplacian is dropped, so boundary entries are ``-F_i``: the residual
    of the frozen-coefficient algebraic system.
    """
    asm = _Assembly(problem)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    F = asm.family.rhs(W, asm.data(1.0))
    R = np.empty_like(W)
    for i in range(asm.family.n_fields):
        R[i] = asm.family.scales[i] * asm.apply_L(W[i]) - F[i]
    return R


def jacobian(W, problem: TodaProblem):
    """Analytic Jacobian of :func:`residual` (boundary rows are -dF)."""
    asm = _Assembly(problem)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    dF = asm.family.jac(W, asm.data(1.0))
    n = asm.family.n_fields
    scales = asm.family.scales
    blocks = [
        [(scales[i] * asm.L if i == j else None) for j in range(n)] for i in range(n)
    ]
    lin = sp.bmat(blocks, format="csr")
    nonlin = sp.bmat([[sp.diags(dF[i, j]) for j in range(n)] for i in range(n)], format="csr")
    return sp.csr_matrix(lin - nonlin)


def _check_kind(problem, kind):
    if problem.kind != kind:
        raise ConfigurationError(f"expected a {kind} problem, got {problem.kind}")


def residual_cyclic(W, problem: TodaProblem):
    """Residual of the cyclic Toda system (rows w_1..w_n)."""
    _check_kind(problem, "cyclic")
    return residual(W, problem)


def residual_subcyclic(W, problem: TodaProblem):
    """Residual of the reduced subcyclic system."""
    _check_kind(problem, "subcyclic")
    return residual(W, problem)


def residual_vortex(w, problem: TodaProblem):
    _check_kind(problem, "vortex")
    return residual(w, problem)[0]


def residual_wang(w, q3: RDifferential, grid: DiskGrid):
    """Residual of the affine sphere equation for the Blaschke factor exp(w)."""
    return residual(w, TodaProblem("wang", q3, grid))[0]


def residual_maximal_rank1(u, v, q4: RDifferential, grid: DiskGrid):
    """Residuals of the two scalar equations of the rank-one maximal reduction."""
    return residual(np.array([u, v]), TodaProblem("maximal", q4, grid))


def _newton(asm, W, B, t, tol, max_iter):
    """Run damped Newton at fixed amplitude; returns (W, residual, iterations, ok).

    If Newton stalls with the residual already below the rounding floor of
    the stencil (fine grids put very large weights on the first ring), the
    iterate is accepted: no double-precision vector does measurably better.
    """
    R = asm.residual(W, B, t)
    norm = float(np.max(np.abs(R)))
    it = 0
    while norm > tol:
        if it >= max_iter:
            return W, norm, it, norm <= asm.rounding_floor(W)
        J = asm.jacobian(W, t)
        with np.errstate(all="ignore"):
            dW = spsolve(J, -R.ravel()).reshape(W.shape)
        if not np.all(np.isfinite(dW)):
            return W, norm, it, False
        alpha = 1.0
        while True:
            trial = W + alpha * dW
            with np.errstate(all="ignore"):
                Rt = asm.residual(trial, B, t)
                tn = float(np.max(np.abs(Rt)))
            if np.isfinite(tn) and tn <= (1.0 - ARMIJO * alpha) * norm:
                break
            alpha *= 0.5
            if alpha < MIN_STEP:
                return W, norm, it + 1, norm <= asm.rounding_floor(W)
        W, R, norm = trial, Rt, tn
        it += 1
    return W, norm, it, True


def newton_solve(problem: TodaProblem, initial=None) -> Solution:
    """Solve the discrete system by damped Newton with amplitude continuation.

    The iteration starts from the q = 0 constants (or ``initial``, a packed
    array of shape (n_fields, n_unknowns)) and walks the amplitude of q
    through k/steps, k = 1..steps; a failed step is retried from the last
    converged amplitude with the increment halved, at most six times.
    """
    asm = _Assembly(problem)
    fam = asm.family
    grid = problem.grid
    n = fam.n_fields
    m = grid.n_unknowns
    if initial is None:
        W = np.repeat(fam.constants()[:, None], m, axis=1)
        t_prev = 0.0
    else:
        W = np.array(initial, dtype=float).reshape(n, m)
        t_prev = None
    B = W[:, asm.boundary]
    trace = []
    total = 0
    if problem.q.is_zero or t_prev is None:
        targets = [1.0]
        t_prev = 0.0 if t_prev is not None else 1.0
    else:
        targets = [k / problem.steps for k in range(1, problem.steps + 1)]
    min_dt = 1.0 / (problem.steps * 2**MAX_DOUBLINGS)
    norm = math.inf
    while targets:
        t = targets[0]
        try:
            Bt = frozen_boundary(fam, asm.boundary_data(t), B)
        except SolverError:
            Bt = None
        if Bt is not None:
            Wt = W.copy()
            Wt[:, asm.boundary] = Bt
            Wt, norm, its, ok = _newton(asm, Wt, Bt, t, problem.tol, problem.max_iter)
        else:
            norm, its, ok = math.inf, 0, False
        total += its
        trace.append((float(t), float(norm), int(its), bool(ok)))
        if ok:
            W, B, t_prev = Wt, Bt, t
            targets.pop(0)
            continue
        if t - t_prev <= min_dt * (1 + 1e-12):
            raise SolverError(
                f"Newton failed at amplitude {t:.6g} (residual {norm:.3e}) after {MAX_DOUBLINGS} step halvings",
                trace=trace,
                iterations=total,
            )
        targets.insert(0, 0.5 * (t_prev + t))
    return Solution(problem, W, float(norm), total, trace, True)


def solve_radial(problem: TodaProblem, factor: int = 4) -> Solution:
    """Radial oracle: same scheme on the rotationally reduced grid.

    The radial grid has ``factor * (n_rho - 1) + 1`` nodes, so its nodes
    contain the companion 2D grid's radii.
    """
    if not radial_reduce(problem.q):
        raise ConfigurationError("radial reduction needs a monomial differential c z^m dz^r")
    g = problem.grid
    radial = DiskGrid(g.R, factor * (g.n_rho - 1) + 1, 1, g.cluster)
    return newton_solve(problem.with_grid(radial))


def radial_profile_on(grid: DiskGrid, radial_solution: Solution):
    """Sample a nested radial solution at the rings of ``grid``; shape (n_fields, n_rho)."""
    rg = radial_solution.grid
    step = (rg.n_rho - 1) // (grid.n_rho - 1)
    if step * (grid.n_rho - 1) != rg.n_rho - 1 or not np.allclose(rg.rho[::step], grid.rho, atol=1e-15):
        raise ConfigurationError("radial grid is not nested in the 2D grid")
    return radial_solution.fields[:, ::step]


def solve_g2(q6: RDifferential, grid: DiskGrid, mode="constrained", **solver):
    """Rank-7 subcyclic solve with or without the constraint h_1 = 2 h_2 h_3.

    Returns ``(solution, report)``.  In constrained mode the solution's
    fields are (w_2, w_3) and ``report["weights"]`` holds (w_1, w_2, w_3);
    the report records the residual of the full three-row system on those
    weights.  In unconstrained mode the full system is solved and the
    report records sup |w_1 - w_2 - w_3 - ln 2|, with no pass/fail attached.
    """
    if q6.order != 6:
        raise ConfigurationError("g2 needs a differential of order 6")
    full = TodaProblem("subcyclic", q6, grid, rank=7, **solver)
    if mode == "constrained":
        sol = newton_solve(TodaProblem("g2", q6, grid, **solver))
        weights = sol.problem.family.weights(sol.fields)
        full_res = residual(weights, full)
        report = {
            "mode": mode,
            "weights": weights,
            "full_system_residual_interior": float(np.max(np.abs(full_res[:, grid.interior_mask]))),
            "eliminated_row_residual": float(np.max(np.abs(full_res[0, grid.interior_mask]))),
        }
        return sol, report
    if mode == "unconstrained":
        sol = newton_solve(full)
        w1, w2, w3 = sol.fields
        gap = np.abs(w1 - w2 - w3 - LN2)
        report = {"mode": mode, "weights": sol.fields, "constraint_gap": float(np.max(gap))}
        return sol, report
    raise ConfigurationError(f"unknown g2 mode {mode!r}")


def g2_fuchsian_comparison():
    """Compare the constrained q = 0 root with the rank-7 subcyclic constants.

    Both are reported: the constants of the full system, the constrained root
    and the constraint ratio f_3 / (2 f_1) at the constants (1 means the
    constants already satisfy h_1 = 2 h_2 h_3).
    """
    from .systems import G2Constrained, fuchsian_constants

    fc = fuchsian_constants(7, "subcyclic")
    fam = G2Constrained()
    root = frozen_boundary(fam, {"Q": np.zeros(1)}, fam.constants()[:, None] + 0.3)[:, 0]
    w = fam.weights(root[:, None])[:, 0]
    return {
        "fuchsian_w": fc["w"],
        "fuchsian_f": fc["f"],
        "constrained_w": w,
        "constraint_ratio_at_constants": fc["f"][3] / (2.0 * fc["f"][1]),
        "max_difference": float(np.max(np.abs(w - fc["w"]))),
    }


__all__ += ["radial_profile_on", "g2_fuchsian_comparison"]
