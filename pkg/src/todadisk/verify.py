"""Numerical verdicts on the equivalence theorems.

A report lists every condition of a theorem with a numeric witness.  Two
kinds of witness exist: *bounds* (a constant C that must stay finite, larger
is worse) and *gaps* (a delta that must stay positive, smaller is worse).
On a truncated disk every bound is finite, so "bounded" versus "unbounded"
is decided only from the trend of a sweep over R (:func:`sweep_report`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curvature import (
    bochner_residual,
    blaschke_curvature,
    compute_f_fields,
    curvature_closed_form,
    curvature_cross_check,
    energy_density,
    epsilon_h,
    gauss_identity_check,
    g2_quantities,
    lemma41_margin,
    ratio_chain,
    sectional_curvature,
)
from .errors import ConfigurationError, SolverError
from .grid import relative_curvature
from .solver import newton_solve

__all__ = [
    "Condition",
    "EquivalenceReport",
    "theorem49_report",
    "prop42_report",
    "wang_report",
    "sweep_report",
    "refinement_study",
    "refinement_consistency",
    "TRUNCATION_NOTE",
    "solution_checks",
    "solution_report",
]

TRUNCATION_NOTE = (
    "Witnesses describe the truncated disk |z| <= R only; boundedness on the "
    "whole disk is judged from the trend across the R-sweep."
)

# sweep classification thresholds
STABLE_RTOL = 0.05  # relative spread allowed for a witness to count as stable
GROWTH_FACTOR = 2.0  # sup |q|^2 must grow at least this much to count as unbounded


@dataclass
class Condition:
    """One condition of an equivalence theorem with its witness."""

    key: str
    label: str
    witness: str  # name of the witnessed quantity
    value: float | None
    kind: str  # "bound" or "gap"
    witnessed: bool | None  # None: not applicable to this rank
    raw: float | None = None  # worst node value before the eps_h deduction

    def to_json(self):
        return {
            "key": self.key,
            "label": self.label,
            "witness": self.witness,
            "value": self.value,
            "kind": self.kind,
            "witnessed": self.witnessed,
            "raw": self.raw,
            "status": _status(self.witnessed),
        }


def _status(w):
    return "not applicable" if w is None else ("witnessed" if w else "not witnessed")


def _bound(key, label, name, value):
    value = float(value)
    return Condition(key, label, name, value, "bound", bool(np.isfinite(value)), value)


def _gap(key, label, name, raw, eps=0.0):
    raw = float(raw)
    value = raw - eps
    return Condition(key, label, name, value, "gap", bool(value > 0), raw)


def _na(key, label, kind="gap"):
    return Condition(key, label, "", None, kind, None)


@dataclass
class EquivalenceReport:
    theorem: str
    R: float
    grid: dict
    conditions: list
    details: dict = field(default_factory=dict)
    eps_h: float = 0.0
    eps_constant: float = 0.0
    hypothesis: str = ""
    note: str = TRUNCATION_NOTE

    def applicable(self):
        return [c for c in self.conditions if c.witnessed is not None]

    @property
    def verdict(self):
        """Consistency verdict on |z| <= R: all witnessed, all failed, or mixed."""
        flags = [c.witnessed for c in self.applicable()]
        if all(flags):
            return "all-witnessed"
        if not any(flags):
            return "all-failed"
        return "inconclusive"

    def condition(self, key):
        for c in self.conditions:
            if c.key == key:
                return c
        raise KeyError(key)

    def to_json(self):
        return {
            "theorem": self.theorem,
            "R": self.R,
            "grid": self.grid,
            "hypothesis": self.hypothesis,
            "eps_h": self.eps_h,
            "eps_constant": self.eps_constant,
            "conditions": [c.to_json() for c in self.conditions],
            "details": self.details,
            "verdict": self.verdict,
            "note": self.note,
        }

    def render_text(self):
        lines = [f"{self.theorem} on R = {self.R:g} ({self.grid['n_rho']} x {self.grid['n_theta']})"]
        if self.hypothesis:
            lines.append(f"  hypothesis: {self.hypothesis}")
        lines.append(f"  eps_h = {self.eps_h:.3e}")
        for c in self.conditions:
            val = "-" if c.value is None else f"{c.value:.6g}"
            lines.append(f"  ({c.key}) {c.label}: {c.witness} = {val} [{_status(c.witnessed)}]")
        lines.append(f"  verdict: {self.verdict}")
        lines.append(f"  note: {self.note}")
        return "\n".join(lines) + "\n"


def _require_converged(solution):
    if not getattr(solution, "converged", False):
        raise SolverError("refusing to report on an unconverged solution", trace=solution.continuation_trace)


def theorem49_report(solution, geom=None, hypothesis="complete solution (frozen-coefficient boundary data)"):
    """Witnesses for the nine conditions relating bounded q to curvature bounds.

    Applies to cyclic rank >= 3 and subcyclic rank >= 4.  The same report
    serves the single-complete-metric variants; ``hypothesis`` records which
    completeness assumption the boundary data stands for.
    """
    _require_converged(solution)
    problem = solution.problem
    geom = geom or compute_f_fields(solution)
    system, r, n = geom.system, geom.rank, geom.n
    if (system == "cyclic" and r < 3) or (system == "subcyclic" and r < 4):
        raise ConfigurationError(f"the equivalence report needs cyclic r >= 3 or subcyclic r >= 4, got {system} {r}")
    grid = problem.grid
    eps, C = epsilon_h(grid)
    f = geom.f
    W = geom.weights

    conds = []
    sup_q = float(np.max(problem.q.norm_sq(grid.z_p)))
    conds.append(_bound("1", "q bounded", "sup |q|^2_g", sup_q))
    conds.append(_bound("2", "weights bounded", "sup |w_i|", np.max(np.abs(W))))
    Cs = [max(f[i].max(), 1.0 / f[i].min()) for i in range(1, n + 1)]
    conds.append(_bound("3", "all g(h)_i mutually bounded with g_D", "C", max(Cs)))
    conds.append(_bound("3'", "some g(h)_i mutually bounded with g_D", "C", min(Cs)))
    ef = energy_density(geom)
    conds.append(_bound("4", "g_f mutually bounded with g_D", "C", max(ef.max(), 1.0 / ef.min())))
    K_gf = relative_curvature(ef, grid)
    sup_kgf = float(np.nanmax(K_gf))
    # curvature of F * lambda scales like 1/F, and so does its truncation error
    eps_f = eps / float(ef.min())
    conds.append(_gap("5", "K_{g_f} bounded above by a negative constant", "-sup K_{g_f} - eps_h/inf e_f", -sup_kgf, eps_f))
    K_sigma = sectional_curvature(geom)
    conds.append(_gap("6", "K_sigma bounded above by a negative constant", "-sup K_sigma", -K_sigma.max()))

    chain = ratio_chain(geom)
    gaps = [1.0 - c["sup"] for c in chain]
    conds.append(_gap("7", "chain g(h)_{i-1} <= (1 - delta) g(h)_i", "delta", min(gaps)))
    later = gaps[1:]
    if later:
        conds.append(_gap("7'", "chain gap for some i_0 >= 2", "delta", max(later)))
    else:
        conds.append(_na("7'", "chain gap for some i_0 >= 2"))

    K = {i: curvature_closed_form(geom, i) for i in range(1, n + 1)}
    has8 = (system == "cyclic" and r >= 4 and r != 5) or (system == "subcyclic" and r >= 6)
    if has8:
        conds.append(_gap("8", "K_{g(h)_{n-1}} bounded above by a negative constant", "-sup K", -K[n - 1].max()))
    else:
        conds.append(_na("8", "K_{g(h)_{n-1}} bounded above by a negative constant"))
    conds.append(_gap("9", "K_{g(h)_n} bounded above by a negative constant", "-sup K", -K[n].max()))

    bochner = [bochner_residual(geom, i).to_json() for i in range(1, n + 1)]
    details = {
        "system": system,
        "rank": r,
        "sup_f": [float(f[i].max()) for i in range(n + 1)],
        "inf_f": [float(f[i].min()) for i in range(n + 1)],
        "sup_K": {str(i): float(K[i].max()) for i in K},
        "sup_K_sigma": float(K_sigma.max()),
        "sup_K_gf": sup_kgf,
        "e_f": {"sup": float(ef.max()), "inf": float(ef.min())},
        "ratio_chain": chain,
        "lemma41": lemma41_margin(solution),
        "bochner": bochner,
        "curvature_cross_check": {
            str(i): float(np.nanmax(curvature_cross_check(geom, i))) for i in range(1, n + 1)
        },
        "eps_energy": eps_f,
        "gauss_coherence": float(np.nanmin(K_sigma - K_gf)) + eps_f,
        "residual_sup": solution.residual_sup,
    }
    return EquivalenceReport(
        "equivalence of bounded q and negative curvature",
        grid.R,
        grid.params(),
        conds,
        details,
        eps,
        C,
        hypothesis,
    )


def prop42_report(solution):
    """Five equivalent conditions for the vortex equation with bc = 1/2."""
    _require_converged(solution)
    problem = solution.problem
    if problem.kind != "vortex":
        raise ConfigurationError("prop42_report needs a vortex solution")
    fam = problem.family
    if abs(fam.b * fam.c - 0.5) > 1e-12:
        raise ConfigurationError("the closed curvature form needs b c = 1/2")
    grid = problem.grid
    eps, C = epsilon_h(grid)
    w = solution.fields[0]
    Q = problem.q.norm_sq(grid.z_p)
    kq = Q * np.exp((fam.a + fam.b) * w)
    K = -2.0 * fam.b * fam.kappa * (kq - 1.0)
    K_disc = relative_curvature(np.exp(-fam.b * w), grid)
    conds = [
        _bound("1", "q bounded", "sup |q|_g", np.sqrt(Q.max())),
        _bound("2", "w bounded", "sup |w|", np.abs(w).max()),
        _bound("3", "energy bounded", "sup(|q|^2 e^{aw} + e^{-bw})", np.max(Q * np.exp(fam.a * w) + np.exp(-fam.b * w))),
        _gap("4", "K of exp(-bw) g_D bounded above by a negative constant", "-sup K", -K.max()),
        _gap("5", "|q|^2 e^{(a+b)w} bounded away from 1", "1 - sup", 1.0 - kq.max()),
    ]
    details = {
        "sup_K": float(K.max()),
        "curvature_cross_check": float(np.nanmax(np.abs(K - K_disc))),
        "sup_product": float(kq.max()),
        "residual_sup": solution.residual_sup,
    }
    return EquivalenceReport("vortex equation equivalences", grid.R, grid.params(), conds, details, eps, C)


def wang_report(solution):
    """Pick differential bounded, Blaschke curvature negative, e^w conformally bounded."""
    _require_converged(solution)
    problem = solution.problem
    if problem.kind != "wang":
        raise ConfigurationError("wang_report needs a Wang solution")
    grid = problem.grid
    eps, C = epsilon_h(grid)
    w = solution.fields[0]
    k = blaschke_curvature(w, problem.q, grid)
    k_disc = relative_curvature(np.exp(w), grid)
    ew = np.exp(w)
    conds = [
        _bound("a", "Pick differential bounded", "sup |q|_g", np.sqrt(problem.q.norm_sq(grid.z_p).max())),
        _gap("b", "Blaschke curvature bounded above by a negative constant", "-sup k_h", -k.max()),
        _bound("c", "Blaschke metric mutually bounded with g_D", "C", max(ew.max(), 1.0 / ew.min())),
    ]
    details = {
        "sup_k": float(k.max()),
        "inf_k": float(k.min()),
        "calabi_margin": float(-k.max()),
        "curvature_cross_check": float(np.nanmax(np.abs(k - k_disc))),
        "residual_sup": solution.residual_sup,
    }
    return EquivalenceReport("affine sphere equivalences", grid.R, grid.params(), conds, details, eps, C)


def _spread(values):
    v = np.asarray(values, dtype=float)
    scale = max(np.max(np.abs(v)), 1e-300)
    return float((v.max() - v.min()) / scale)


def sweep_report(reports):
    """Classify an R-sweep of reports of the same theorem.

    ``equivalent-TRUE``: every member has all applicable conditions
    witnessed and every witness is stable (relative spread <= 5%).
    ``equivalent-FALSE``: the first (q-boundedness) witness grows by at least
    a factor 2, monotonically in R, and every other witness either moves
    monotonically toward failure (bounds nondecreasing, gaps nonincreasing)
    or is already not witnessed at the largest R.
    Anything else is ``inconclusive``.
    """
    reports = sorted(reports, key=lambda rep: rep.R)
    if len(reports) < 2:
        raise ConfigurationError("a sweep needs at least two radii")
    keys = [c.key for c in reports[0].conditions]
    trends = {}
    for key in keys:
        cs = [rep.condition(key) for rep in reports]
        if any(c.witnessed is None for c in cs):
            trends[key] = {"applicable": False}
            continue
        # trends use the raw worst value; eps_h itself changes with R
        vals = [c.raw for c in cs]
        diffs = np.diff(vals)
        if cs[0].kind == "bound":
            toward_failure = bool(np.all(diffs >= 0))
        else:
            toward_failure = bool(np.all(diffs <= 0))
        trends[key] = {
            "applicable": True,
            "kind": cs[0].kind,
            "values": vals,
            "relative_spread": _spread(vals),
            "monotone_toward_failure": toward_failure,
            "failed_at_largest_R": not cs[-1].witnessed,
        }
    active = [k for k in keys if trends[k]["applicable"]]
    first = trends[keys[0]]
    all_witnessed = all(rep.verdict == "all-witnessed" for rep in reports)
    stable = all(trends[k]["relative_spread"] <= STABLE_RTOL for k in active)
    growth = first["values"][-1] / max(first["values"][0], 1e-300)
    unbounded = growth >= GROWTH_FACTOR and bool(np.all(np.diff(first["values"]) > 0))
    degrading = all(
        trends[k]["monotone_toward_failure"] or trends[k]["failed_at_largest_R"] for k in active
    )
    if all_witnessed and stable:
        verdict = "equivalent-TRUE"
    elif unbounded and degrading:
        verdict = "equivalent-FALSE"
    else:
        verdict = "inconclusive"
    return {
        "theorem": reports[0].theorem,
        "radii": [rep.R for rep in reports],
        "trends": trends,
        "growth_of_first_witness": growth,
        "thresholds": {"stable_rtol": STABLE_RTOL, "growth_factor": GROWTH_FACTOR},
        "members": [rep.to_json() for rep in reports],
        "verdict": verdict,
        "note": TRUNCATION_NOTE,
    }


def refinement_consistency(coarse: EquivalenceReport, fine: EquivalenceReport):
    """A condition witnessed at h must stay witnessed at h/2; else inconclusive."""
    lost = [
        c.key
        for c in coarse.conditions
        if c.witnessed and fine.condition(c.key).witnessed is False
    ]
    return {"lost": lost, "consistent": not lost}


def _metrics(solution):
    """Per-level quantities tracked by the refinement study."""
    problem = solution.problem
    kind = problem.kind
    out = {"residual_sup": solution.residual_sup}
    if kind in ("cyclic", "subcyclic", "g2"):
        geom = compute_f_fields(solution)
        out["cross_check"] = max(float(np.nanmax(curvature_cross_check(geom, i))) for i in range(1, geom.n + 1))
        out["lemma41_margin"] = lemma41_margin(solution)["margin"]
        chain = ratio_chain(geom)
        out["chain_gap"] = min(1.0 - c["sup"] for c in chain)
        if kind == "g2":
            g2 = g2_quantities(solution)
            out["min_k"] = g2["min_k"]
            out["bochner_min"] = g2["bochner_min"]
    elif kind == "vortex":
        out["lemma41_margin"] = lemma41_margin(solution)["margin"]
    elif kind == "maximal":
        gi = gauss_identity_check(solution)
        out["cross_check"] = gi["sup_discrepancy"]
        out["min_k"] = gi["min_k"]
    elif kind == "wang":
        w = solution.fields[0]
        k = blaschke_curvature(w, problem.q, problem.grid)
        out["cross_check"] = float(np.nanmax(np.abs(k - relative_curvature(np.exp(w), problem.grid))))
        out["sup_k"] = float(k.max())
    return out


def refinement_study(problem, levels: int = 3):
    """Re-solve on nested grids h, h/2, ... and tabulate changes and orders.

    The solution change at level k is the sup over the coarse nodes of the
    difference between levels k-1 and k; the empirical order is
    log2(change_k / change_{k+1}).  A solver failure propagates with the
    partial table attached to the exception.
    """
    if levels < 2:
        raise ConfigurationError("refinement study needs at least two levels")
    rows, sols = [], []
    grid = problem.grid
    for level in range(levels):
        try:
            sol = newton_solve(problem.with_grid(grid))
        except SolverError as exc:
            exc.partial_table = rows
            raise
        row = {"level": level, "n_rho": grid.n_rho, "n_theta": grid.n_theta, "h": grid.h}
        row.update(_metrics(sol))
        if sols:
            prev = sols[-1]
            fine_on_coarse = np.array([prev.grid.restrict_from_fine(grid, x) for x in sol.fields])
            row["change"] = float(np.max(np.abs(fine_on_coarse - prev.fields)))
        rows.append(row)
        sols.append(sol)
        grid = grid.refined()
    changes = [row.get("change") for row in rows]
    for k in range(2, len(rows)):
        a, b = changes[k - 1], changes[k]
        rows[k]["order"] = float(np.log2(a / b)) if a and b else None
    return {"problem": problem.describe(), "levels": rows}


# per-solution summaries used by the command line ----------------------------------------


def _check(name, value, holds):
    return {"name": name, "value": value, "holds": bool(holds)}


def solution_checks(solution):
    """Inequality checks that apply to the solution's family, with their margins."""
    problem = solution.problem
    grid = problem.grid
    eps, _ = epsilon_h(grid)
    kind = problem.kind
    checks = []
    if kind in ("cyclic", "subcyclic", "g2"):
        geom = compute_f_fields(solution)
        lm = lemma41_margin(solution)
        checks.append(_check("sup f0/f1 < 1", lm["sup"], lm["sup"] < 1.0))
        for c in ratio_chain(geom):
            name = f"sup {c['ratio']} < 1"
            if name != checks[0]["name"]:
                checks.append(_check(name, c["sup"], c["sup"] < 1.0))
            if "min_margin_lower" in c:
                m = c["min_margin_lower"]
                checks.append(_check(f"{c['ratio']} >= {c['lower_bound']:.6g} - eps_h", m, m >= -eps))
        for i in range(1, geom.n + 1):
            b = bochner_residual(geom, i)
            if b.minimum is not None:
                checks.append(_check(f"Bochner i={i} ({b.status}) min >= -eps_h", b.minimum, b.minimum >= -eps))
        if kind == "g2":
            g2 = g2_quantities(solution)
            checks.append(_check("k >= -1 - eps_h", g2["min_k"], g2["min_k"] >= -1.0 - eps))
            checks.append(_check("Delta k - 3k(k+1) >= -eps_h", g2["bochner_min"], g2["bochner_min"] >= -eps))
    elif kind == "vortex":
        lm = lemma41_margin(solution)
        checks.append(_check("sup |q|^2 e^{(a+b)w} < 1", lm["sup"], lm["sup"] < 1.0))
        fam = problem.family
        if (fam.a, fam.b, fam.c, fam.kappa) == (2.0, 2.0, 0.25, -1.0):
            from .curvature import wan_quantities

            wq = wan_quantities(solution)
            checks.append(_check("sup dilatation < 1", float(wq["dilatation"].max()), wq["dilatation"].max() < 1.0))
            checks.append(_check("inf jacobian > 0", float(wq["jacobian"].min()), wq["jacobian"].min() > 0.0))
    elif kind == "wang":
        k = blaschke_curvature(solution.fields[0], problem.q, grid)
        checks.append(_check("sup k_h <= eps_h", float(k.max()), k.max() <= eps))
    elif kind == "maximal":
        from .curvature import maximal_bochner

        gi = gauss_identity_check(solution)
        mb = maximal_bochner(solution)
        checks.append(_check("Gauss identity discrepancy <= 1e-4", gi["sup_discrepancy"], gi["sup_discrepancy"] <= 1e-4))
        checks.append(_check("k >= -1 - eps_h", gi["min_k"], gi["min_k"] >= -1.0 - eps))
        checks.append(_check("Delta k - k(1+k) >= -eps_h", mb["minimum"], mb["minimum"] >= -eps))
    return {"eps_h": eps, "checks": checks}


def solution_report(solution):
    """JSON document, text rendering and verdict for one converged solution."""
    problem = solution.problem
    kind, r = problem.kind, problem.rank
    rep = None
    if (kind == "cyclic" and r >= 3) or (kind == "subcyclic" and r >= 4):
        rep = theorem49_report(solution)
    elif kind == "vortex" and abs(problem.family.b * problem.family.c - 0.5) <= 1e-12:
        rep = prop42_report(solution)
    elif kind == "wang":
        rep = wang_report(solution)
    summary = solution_checks(solution)
    doc = {
        "problem": problem.describe(),
        "residual_sup": solution.residual_sup,
        "newton_iterations": solution.newton_iterations,
        "checks": summary["checks"],
        "eps_h": summary["eps_h"],
        "equivalence": rep.to_json() if rep is not None else None,
        "note": TRUNCATION_NOTE,
    }
    failed = [c["name"] for c in summary["checks"] if not c["holds"]]
    if rep is not None and rep.verdict == "inconclusive":
        verdict = "inconclusive"
    elif failed:
        verdict = "checks-failed"
    else:
        verdict = "ok"
    doc["verdict"] = verdict
    lines = [f"{kind} rank {r}: residual {solution.residual_sup:.3e}, {solution.newton_iterations} Newton iterations"]
    for c in summary["checks"]:
        lines.append(f"  [{'ok' if c['holds'] else 'FAIL'}] {c['name']}: {c['value']:.6g}")
    text = "\n".join(lines) + "\n"
    if rep is not None:
        text += rep.render_text()
    text += f"verdict: {verdict}\n"
    return doc, text, verdict
