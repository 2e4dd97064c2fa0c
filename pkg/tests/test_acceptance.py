"""The ten acceptance criteria at their stated tolerances and full sample budgets.

Each result line is also printed in the terminal summary (see conftest.py).
"""

import pytest

from sapcr.validation import CRITERIA

RESULTS = []


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    res = CRITERIA[number](seed=0)
    RESULTS.append(res)
    print(res.line())
    assert res.passed, res.line()
