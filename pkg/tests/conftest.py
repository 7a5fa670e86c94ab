"""Shared fixtures.

Every converged solve made anywhere in the suite passes through
``checked_solve``, which asserts the pointwise inequalities that must hold on
all converged solutions: the |q|^2-weighted bound below 1, the ratio chains
within eps_h, and the quasiconformality of the quadratic-differential case.
"""

import numpy as np
import pytest

import todadisk.cli
import todadisk.solver
import todadisk.verify
from todadisk.curvature import compute_f_fields, epsilon_h, lemma41_margin, ratio_chain, wan_quantities

_original = todadisk.solver.newton_solve
SOLVE_LOG = []


def check_solution(sol):
    problem = sol.problem
    kind = problem.kind
    eps, _ = epsilon_h(problem.grid)
    entry = {"kind": kind, "rank": problem.rank, "R": problem.grid.R}
    if kind in ("cyclic", "subcyclic", "vortex"):
        m = lemma41_margin(sol)
        assert m["sup"] < 1.0, f"bound violated: {m}"
        entry["lemma41_sup"] = m["sup"]
    if kind in ("cyclic", "subcyclic", "g2"):
        geom = compute_f_fields(sol)
        for c in ratio_chain(geom):
            assert c["sup"] < 1.0, f"ratio chain upper bound violated: {c}"
            if "min_margin_lower" in c:
                assert c["min_margin_lower"] >= -eps, f"ratio chain lower bound violated: {c}"
        if geom.system == "subcyclic" and geom.rank >= 4:
            f = geom.f
            assert np.all(f[0] + f[1] < f[2])
    if kind == "vortex":
        fam = problem.family
        if (fam.a, fam.b, fam.c, fam.kappa) == (2.0, 2.0, 0.25, -1.0):
            wq = wan_quantities(sol)
            assert wq["dilatation"].max() < 1.0
            assert wq["jacobian"].min() > 0.0
            entry["wan"] = True
    SOLVE_LOG.append(entry)


def checked_solve(problem, initial=None):
    sol = _original(problem, initial)
    check_solution(sol)
    return sol


# patched at import, before test modules bind the name
unchecked_solve = _original
for _mod in (todadisk.solver, todadisk.verify, todadisk.cli):
    _mod.newton_solve = checked_solve


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
