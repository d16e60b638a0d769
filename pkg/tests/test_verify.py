import io
from fractions import Fraction

from ldgap.verify import (
    FAST_DEPTH,
    FULL_DEPTH,
    VerifyResult,
    iter_alphas,
    law_of_total_cumulance_check,
    model_combos,
    render_report,
    run_verify,
)


def test_fast_suite_passes_with_enough_identities():
    results = run_verify("fast")
    failures = [r for r in results if not r.ok]
    assert not failures
    assert len(results) >= 200  # spec floor; measured ~40k on this build


def test_render_report_exit_codes():
    buf = io.StringIO()
    assert render_report([VerifyResult("a", True, "")], buf) == 0
    buf2 = io.StringIO()
    assert render_report([VerifyResult("a", False, "boom")], buf2) == 1
    out = buf2.getvalue()
    assert "FAIL a" in out and "serialized" in out


def test_full_level_is_superset_by_construction():
    """fast and full share the check functions; full only deepens the alpha
    enumeration, so fast's identity set is contained in full's."""
    assert FAST_DEPTH < FULL_DEPTH
    fast_alphas = set(a.cells for a in iter_alphas(FAST_DEPTH))
    full_alphas = set(a.cells for a in iter_alphas(FULL_DEPTH))
    assert fast_alphas < full_alphas


def test_model_combo_coverage():
    combos = model_combos()
    kinds = {(s.model_kind, s.K, s.L, s.rho) for s in combos}
    assert len(kinds) == 10
    assert {s.model_kind for s in combos} == {"clustering", "sparse", "biclustering"}
    for s in combos:
        if s.model_kind == "sparse":
            assert s.rho in (Fraction(1, 2), Fraction(1, 3))


def test_law_of_total_cumulance_self_test():
    assert law_of_total_cumulance_check(2) == Fraction(1, 8)
    # K=3 value must equal the unconditional triangle cumulant as well
    from ldgap.cumulants import indicator_cumulant
    assert law_of_total_cumulance_check(3) == \
        indicator_cumulant(3, [(0, 1), (1, 2), (2, 0)])
