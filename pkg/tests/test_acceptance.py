"""Acceptance criteria A1-A11; each prints one PASS/FAIL line."""
import pytest

from rfsps import acceptance


@pytest.mark.parametrize("name", [f"A{i}" for i in range(1, 11)])
def test_criterion(name, report):
    res = acceptance.CHECKS[name]()
    report(res.line())
    assert res.passed, res.line()


@pytest.mark.slow
def test_criterion_A11_monte_carlo(report):
    res = acceptance.check_A11()
    report(res.line())
    assert res.passed, res.line()


def test_monte_carlo_tolerances_are_pinned():
    s = acceptance.MonteCarloSettings()
    assert s.sigmas == 3.0
    assert s.ks_alpha == 1e-3
    assert s.clicks_coherent >= 100_000
    assert min(s.clicks_plain, s.clicks_compensated) >= 100_000
