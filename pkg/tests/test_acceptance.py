"""Numbered acceptance criteria, one test per criterion, at the required tolerances.

Each test prints a PASS/FAIL line; the lines are collected into the terminal summary.
"""
import pytest

from conftest import ACCEPTANCE_LINES
from nlscatter.suites import CRITERIA


@pytest.mark.slow
@pytest.mark.parametrize("cid", sorted(CRITERIA), ids=[f"C{c:02d}" for c in sorted(CRITERIA)])
def test_criterion(cid):
    result = CRITERIA[cid]()
    line = result.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert result.passed, line
