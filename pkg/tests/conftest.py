import mpmath as mp
import pytest
from hypothesis import HealthCheck, settings

from gwtail import analytic, new_distribution

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def star():
    return new_distribution({2: 0.5, 3: 0.5})


@pytest.fixture(scope="session")
def mu1():
    return new_distribution({1: 0.5, 2: 0.5})


@pytest.fixture(scope="session")
def cfg():
    return analytic.DEFAULT_CONFIG


# ---------------------------------------------------------------- oracles
def mp_law(dist):
    """(j, p_j) with the p_j renormalized in working precision, so f(1) = 1 exactly."""
    ps = [(j, mp.mpf(p)) for j, p in dist.probs]
    tot = mp.fsum(p for _, p in ps)
    return [(j, p / tot) for j, p in ps]


def mp_pgf(law, z):
    return mp.fsum(p * z**j for j, p in law)


def mp_phi(dist, w, m=60, dps=60):
    """phi(w) = lim f_m(phi(w / a**m)), started from the two-term Taylor expansion."""
    with mp.workdps(max(dps, mp.mp.dps)):
        law = mp_law(dist)
        a = mp.fsum(j * p for j, p in law)
        var = mp.fsum(p * (j - a) ** 2 for j, p in law)
        ew2 = 1 + var / (a * a - a)
        v = mp.mpmathify(w) / a**m
        z = 1 - v + ew2 * v * v / 2
        for _ in range(m):
            z = mp_pgf(law, z)
        return z


def mp_log_iterate(dist, m, s, dps=40):
    """log f_m(s) via log f_{j+1} = log p_mu + mu log f_j + log1p(R(f_j)).

    Stays in log-space so f_m(s) never underflows, and follows the branch of
    the logarithm continuously for complex s.
    """
    mu = dist.mu
    with mp.workdps(max(dps, mp.mp.dps)):
        pmu = mp.mpf(dist.p_mu)
        L = mp.log(mp.mpmathify(s))
        for _ in range(m):
            R = mp.fsum(mp.mpf(p) / pmu * mp.exp((k - mu) * L) for k, p in dist.probs if k > mu)
            L = mp.log(pmu) + mu * L + mp.log1p(R)
        return L


def mp_psi(dist, m, s, terms=12, dps=40):
    """psi_m(s) = sum_{j >= m} mu**(-j-1) log(1 + R(f_j(s))) with f_j(s) = p_mu f_{j-1}**mu (1 + R)."""
    mu = dist.mu
    with mp.workdps(max(dps, mp.mp.dps)):
        pmu = mp.mpf(dist.p_mu)
        total = mp.mpf(0)
        for j in range(m, m + terms):
            L = mp_log_iterate(dist, j, s, dps)
            R = mp.fsum(mp.mpf(p) / pmu * mp.exp((k - mu) * L) for k, p in dist.probs if k > mu)
            total += mp.mpf(mu) ** (-j - 1) * mp.log1p(R)
        return total


# ------------------------------------------------- acceptance summary lines
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
