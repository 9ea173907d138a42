"""The ten acceptance criteria, one test each; every run prints its pass/fail line."""
import pytest

from tcfou.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"{c[0]:02d}-{c[1]}" for c in CRITERIA])
def test_acceptance_criterion(number, capsys):
    r = run_criterion(number)
    with capsys.disabled():
        print("\n" + r.line())
    assert r.passed, r.line()
