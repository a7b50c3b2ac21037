"""Acceptance criteria 1-11 at their stated tolerances.

Each test runs one criterion from :mod:`photonbell.acceptance`, prints its
pass/fail line and asserts the verdict. The lines are also collected and
repeated in the terminal summary (see ``conftest.py``). Criteria that the
implementation cannot meet are left failing; the decisions ledger explains
why.
"""

import pytest

from photonbell.acceptance import CRITERIA, format_line

LINES = []


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda n: f"criterion{n:02d}")
def test_criterion(number):
    check = CRITERIA[number]()
    line = format_line(check)
    LINES.append(line)
    print(line)
    assert check.passed, line
