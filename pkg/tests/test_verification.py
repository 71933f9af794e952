import pytest

from hqcsim.verification import SUITES, run_verify


@pytest.mark.parametrize("suite", SUITES)
def test_suite_passes(suite):
    report = run_verify(suite)
    failures = [c for c in report["suites"][suite] if c["verdict"] != "pass"]
    assert report["passed"], f"failed checks: {[c['name'] for c in failures]}"


def test_named_checks_present_with_expected_bounds():
    report = run_verify("identities")
    checks = {c["name"]: c for c in report["suites"]["identities"]}
    assert checks["bracket_commutator_identity"]["bound"] == 1e-9

    report = run_verify("dynamics")
    checks = {c["name"]: c for c in report["suites"]["dynamics"]}
    assert checks["schrodinger_equivalence_fidelity_error"]["measured"] < 1e-8

    report = run_verify("operators")
    checks = {c["name"]: c for c in report["suites"]["operators"]}
    assert checks["histogram_vs_global_identity"]["measured"] <= 1e-12


def test_unknown_suite_rejected():
    with pytest.raises(ValueError):
        run_verify("nonsense")
