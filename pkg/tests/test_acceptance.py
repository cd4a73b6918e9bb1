"""The thirteen acceptance criteria, one test each, at full budgets.

Each test records a one-line PASS/FAIL summary that is printed at the end of
the run (see conftest.pytest_terminal_summary).
"""

import time

import pytest
from conftest import ACCEPTANCE_LINES

from gwtail import analytic, cli, new_distribution, verify

CFG = analytic.DEFAULT_CONFIG
PROFILE = verify.FULL
SEED = 1


@pytest.fixture(scope="session")
def star():
    return new_distribution(verify.STAR)


@pytest.fixture(scope="session")
def run_03(star):
    t0 = time.perf_counter()
    exp = verify.conditional_run(star, 0.3, PROFILE.mc_depth, PROFILE.mc_trials, SEED, CFG)
    return exp, time.perf_counter() - t0


def _record(num, res):
    ACCEPTANCE_LINES[num] = f"criterion {num:2d}: {res.line()}"
    print(ACCEPTANCE_LINES[num])
    assert res.passed, res.line()


def test_c01_functional_equation(star):
    _record(1, verify.check_poincare(star, CFG))


def test_c02_psi_identity(star):
    _record(2, verify.check_psi_identity(star, CFG))


def test_c03_psi_ratio(star):
    _record(3, verify.check_psi_ratio(star, CFG))


def test_c04_acceptance_rate(star, run_03):
    exp, elapsed = run_03
    _record(4, verify.check_acceptance_rate(star, CFG, exp, elapsed))


def test_c05_exact_joint(star, run_03):
    exp, _ = run_03
    _record(5, verify.check_joint(star, CFG, exp))


def test_c06_asymptotic_gap(star):
    _record(6, verify.check_asymptotic_gap(star, CFG))


def test_c07_two_point_mass(star):
    _record(7, verify.check_two_point_mass(star, CFG))


def test_c08_regimes(star):
    _record(8, verify.check_regimes(star, CFG, PROFILE))


def test_c09_split_identity(star):
    _record(9, verify.check_split_identity(star, CFG))


def test_c10_excess(star):
    _record(10, verify.check_excess(star, CFG, PROFILE, SEED))


def test_c11_mu1():
    _record(11, verify.check_mu1(PROFILE, SEED, CFG))


def test_c12_periodicity(star):
    _record(12, verify.check_periodicity(star, CFG))


def test_c13_determinism():
    cfg = cli.load_config(None, {"profile": "light", "seed": SEED})
    a, _ = cli.cmd_verify(cfg)
    b, _ = cli.cmd_verify(cfg)
    res = verify.CheckResult(
        "C13 cmd_verify report determinism",
        f"identical={a == b} ({len(a.encode())} bytes)",
        "identical",
        a == b,
    )
    _record(13, res)
