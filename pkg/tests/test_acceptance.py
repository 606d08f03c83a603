"""Acceptance criteria, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -s`` or
``python tests/test_acceptance.py``; the checks themselves live in
:mod:`wonhamsplit.checks` so ``wonhamsplit selftest --suite acceptance``
prints the same lines.  The whole file takes roughly a quarter of an hour on
one core.  Criterion 5 tallies filter steps from every marginal run made
before it, so it is kept last.
"""

import pytest

from wonhamsplit import checks

pytestmark = pytest.mark.acceptance


def report(capsys, check):
    with capsys.disabled():
        print("\n" + check.line())
    assert check.passed, check.line()


def test_criterion_1_brownian_oracle(capsys):
    report(capsys, checks.check_brownian_oracle())


def test_criterion_1_scheme_consistency(capsys):
    report(capsys, checks.check_scheme_consistency())


def test_criterion_2_unbiasedness(capsys):
    report(capsys, checks.check_unbiasedness())


def test_criterion_3_variance_ordering(capsys):
    report(capsys, checks.check_variance_ordering())


def test_criterion_4a_degenerate_filter(capsys):
    report(capsys, checks.check_degenerate_filter())


def test_criterion_4b_degenerate_variance(capsys):
    report(capsys, checks.check_degenerate_variance())


def test_criterion_6_duality(capsys):
    report(capsys, checks.check_duality())


def test_criterion_7_indicator_identity(capsys):
    report(capsys, checks.check_indicator_identity())


def test_criterion_8_determinism(capsys):
    report(capsys, checks.check_determinism())


def test_criterion_5_filter_conservation(capsys):
    report(capsys, checks.check_filter_conservation())


if __name__ == "__main__":
    import sys

    sys.exit(0 if checks.run_suite("acceptance") else 1)
