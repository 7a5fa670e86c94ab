import json

import numpy as np
import pytest

from todadisk.errors import ConfigurationError, SolverError
from todadisk.geometry import RDifferential
from todadisk.grid import DiskGrid
from todadisk.solver import Solution, TodaProblem, newton_solve
from todadisk.verify import (
    TRUNCATION_NOTE,
    Condition,
    EquivalenceReport,
    prop42_report,
    refinement_consistency,
    refinement_study,
    solution_report,
    sweep_report,
    theorem49_report,
    wang_report,
)

GRID = DiskGrid(0.95, 33, 16)
WAN = (2.0, 2.0, 0.25, -1.0)


def solve(kind, q, rank=None, grid=GRID, **kw):
    return newton_solve(TodaProblem(kind, q, grid, rank=rank, **kw))


@pytest.mark.parametrize("kind,r", [("cyclic", 3), ("cyclic", 4), ("cyclic", 6), ("subcyclic", 4), ("subcyclic", 7)])
def test_zero_q_witnesses_every_condition(kind, r):
    order = r if kind == "cyclic" else r - 1
    rep = theorem49_report(solve(kind, RDifferential.zero(order), r))
    assert rep.verdict == "all-witnessed"
    for c in rep.applicable():
        assert c.value is not None and np.isfinite(c.value)
    if kind == "cyclic":
        n = r // 2
        assert rep.condition("9").value == pytest.approx(4 / (n * (r - n)), abs=1e-10)


def test_report_on_smooth_bounded_q_is_consistent():
    rep = theorem49_report(solve("cyclic", RDifferential(4, [0.7, 0.2, 0.1j]), 4))
    assert rep.verdict == "all-witnessed"
    assert rep.details["gauss_coherence"] >= 0
    doc = rep.to_json()
    assert doc["note"] == TRUNCATION_NOTE
    assert json.loads(json.dumps(doc)) == doc
    assert "verdict: all-witnessed" in rep.render_text()


def test_not_applicable_conditions_for_rank_three():
    rep = theorem49_report(solve("cyclic", RDifferential.monomial(3, 1.0), 3))
    assert rep.condition("7'").witnessed is None
    assert rep.condition("8").witnessed is None
    assert rep.condition("7'").to_json()["status"] == "not applicable"


def test_theorem_report_preconditions():
    with pytest.raises(ConfigurationError):
        theorem49_report(solve("cyclic", RDifferential.zero(2), 2))
    sol = solve("cyclic", RDifferential.zero(3), 3)
    stale = Solution(sol.problem, sol.fields, 1.0, 0, [], converged=False)
    with pytest.raises(SolverError):
        theorem49_report(stale)
    with pytest.raises(SolverError):
        wang_report(Solution(TodaProblem("wang", RDifferential.zero(3), GRID), np.zeros((1, GRID.n_unknowns)), 1.0, 0, [], False))


def test_prop42_at_zero_q():
    rep = prop42_report(solve("vortex", RDifferential.zero(2), vortex=WAN))
    assert rep.condition("5").value == pytest.approx(1.0)
    assert rep.details["sup_K"] == pytest.approx(-4.0)
    assert rep.condition("4").value == pytest.approx(4.0)
    assert rep.verdict == "all-witnessed"
    with pytest.raises(ConfigurationError):
        prop42_report(solve("vortex", RDifferential.zero(2), vortex=(1, 1, 1, -1)))


def test_prop42_bounded_q():
    rep = prop42_report(solve("vortex", RDifferential(2, [0.8, 0.3]), vortex=WAN))
    assert rep.verdict == "all-witnessed"
    assert rep.details["curvature_cross_check"] < 1e-8


def test_wang_report():
    rep = wang_report(solve("wang", RDifferential.zero(3)))
    assert rep.details["sup_k"] == -1.0
    assert rep.condition("c").value == 1.0
    rep = wang_report(solve("wang", RDifferential.monomial(3, 0.5)))
    assert rep.verdict == "all-witnessed"
    assert rep.details["calabi_margin"] > 0


def _report(R, sup_q, gap, bound=2.0, witnessed=None):
    conds = [
        Condition("1", "q bounded", "sup", sup_q, "bound", True, sup_q),
        Condition("2", "w bounded", "sup", bound, "bound", True, bound),
        Condition("9", "curvature", "-sup K", gap, "gap", gap > 0 if witnessed is None else witnessed, gap),
        Condition("8", "n/a", "", None, "gap", None),
    ]
    return EquivalenceReport("synthetic", R, {"n_rho": 17, "n_theta": 8}, conds)


def test_sweep_classification():
    stable = [_report(R, 0.06, 0.5) for R in (0.9, 0.95, 0.99)]
    assert sweep_report(stable)["verdict"] == "equivalent-TRUE"
    growing = [_report(R, s, g, b) for R, s, g, b in ((0.9, 1, 0.3, 1), (0.95, 5, 0.2, 2), (0.99, 90, 0.05, 4))]
    out = sweep_report(growing)
    assert out["verdict"] == "equivalent-FALSE"
    assert out["trends"]["8"] == {"applicable": False}
    # order of members does not matter
    assert sweep_report(growing[::-1])["verdict"] == "equivalent-FALSE"
    # a gap that recovers while q grows is not a clean failure trend
    mixed = [_report(R, s, g) for R, s, g in ((0.9, 1, 0.3), (0.95, 5, 0.1), (0.99, 90, 0.2))]
    assert sweep_report(mixed)["verdict"] == "inconclusive"
    drifting = [_report(R, 0.06, g) for R, g in ((0.9, 0.5), (0.95, 0.45), (0.99, 0.4))]
    assert sweep_report(drifting)["verdict"] == "inconclusive"
    with pytest.raises(ConfigurationError):
        sweep_report(stable[:1])


def test_sweep_accepts_failure_already_reached():
    # a gap that fails at the largest R counts toward the unbounded verdict
    reps = [
        _report(0.9, 1, 0.3, 1),
        _report(0.95, 5, 0.35, 2),
        _report(0.99, 90, -0.1, 4),
    ]
    assert sweep_report(reps)["verdict"] == "equivalent-FALSE"


def test_refinement_consistency_flags_lost_witness():
    a = _report(0.9, 0.06, 0.5)
    b = _report(0.9, 0.06, -0.01)
    assert refinement_consistency(a, a) == {"lost": [], "consistent": True}
    assert refinement_consistency(a, b) == {"lost": ["9"], "consistent": False}


def test_refinement_study_zero_q_has_no_change():
    p = TodaProblem("cyclic", RDifferential.zero(4), DiskGrid(0.95, 17, 8), rank=4)
    table = refinement_study(p, 3)
    changes = [row.get("change") for row in table["levels"]]
    assert changes[0] is None and max(changes[1:]) <= 1e-12
    with pytest.raises(ConfigurationError):
        refinement_study(p, 1)


def test_refinement_study_orders_and_margin_stability():
    p = TodaProblem("cyclic", RDifferential(3, [0.8, 0.4j]), DiskGrid(0.9, 17, 16), rank=3)
    rows = refinement_study(p, 4)["levels"]
    assert rows[-1]["order"] == pytest.approx(2.0, abs=0.3)
    m1, m2 = rows[-2]["lemma41_margin"], rows[-1]["lemma41_margin"]
    assert f"{m1:.3g}" == f"{m2:.3g}"


def test_refinement_failure_attaches_partial_table():
    p = TodaProblem("cyclic", RDifferential.monomial(3, 50.0), DiskGrid(0.95, 17, 8), rank=3, max_iter=1, steps=1)
    with pytest.raises(SolverError) as info:
        refinement_study(p, 2)
    assert info.value.partial_table == []


def test_solution_report_verdicts():
    doc, text, verdict = solution_report(solve("cyclic", RDifferential.monomial(4, 1.0), 4))
    assert verdict == "ok" and doc["verdict"] == "ok"
    assert all(isinstance(c["value"], float) for c in doc["checks"])
    assert "verdict: ok" in text
    doc, _, verdict = solution_report(solve("maximal", RDifferential.monomial(4, 0.5)))
    assert verdict == "ok" and doc["equivalence"] is None
