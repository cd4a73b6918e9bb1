import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gwtail import new_distribution, pgf_eval, pgf_iterate, pgf_prime
from gwtail.errors import DomainError, NotNormalized, Subcritical, ZeroOffspringMass


@st.composite
def laws(draw, min_mu=1):
    mu = draw(st.integers(min_mu, 3))
    others = draw(st.lists(st.integers(mu + 1, 7), min_size=1, max_size=3, unique=True))
    w = draw(st.lists(st.floats(0.05, 1.0), min_size=len(others) + 1, max_size=len(others) + 1))
    tot = sum(w)
    return new_distribution({j: x / tot for j, x in zip([mu] + others, w)})


def test_star_constants(star):
    assert star.mean == 2.5
    assert star.var == 0.25
    assert (star.mu, star.lam) == (2, 3)
    assert star.beta == pytest.approx(math.log(2) / math.log(2.5), rel=1e-15)
    assert star.alpha == pytest.approx(star.beta / (1 - star.beta), rel=1e-15)


def test_validation():
    with pytest.raises(ZeroOffspringMass):
        new_distribution({0: 0.1, 2: 0.9})
    with pytest.raises(NotNormalized):
        new_distribution({2: 0.5, 3: 0.4})
    with pytest.raises(Subcritical):
        new_distribution({1: 1.0})
    with pytest.raises(ValueError):
        new_distribution({})


def test_renormalizes_within_tolerance():
    d = new_distribution({2: 0.5 + 5e-13, 3: 0.5})
    assert math.fsum(d.weights) == pytest.approx(1.0, abs=1e-15)


def test_mu1_has_no_alpha(mu1):
    assert mu1.mu == 1 and mu1.beta is None and mu1.alpha is None


def test_pgf_values(star):
    assert pgf_eval(star, 1.0) == 1.0
    assert pgf_eval(star, 0.0) == 0.0
    assert pgf_eval(star, 0.5) == pytest.approx(0.5 * 0.25 + 0.5 * 0.125)
    assert pgf_prime(star, 1.0) == pytest.approx(2.5)
    assert isinstance(pgf_eval(star, 0.5), float)
    assert isinstance(pgf_eval(star, 0.5j), complex)
    assert np.asarray(pgf_eval(star, [0.1, 0.2])).shape == (2,)


def test_domain(star):
    with pytest.raises(DomainError):
        pgf_eval(star, 1.1)
    assert pgf_eval(star, np.exp(0.3j)) is not None  # unit circle is allowed


@given(laws(), st.floats(0.0, 1.0))
def test_pgf_monotone_and_bounded(d, s):
    v = pgf_eval(d, s)
    assert 0.0 <= v <= s + 1e-15  # p_0 = 0 gives f(s) <= s
    assert pgf_eval(d, min(s + 1e-3, 1.0)) >= v


@given(laws(), st.integers(0, 5), st.integers(0, 5), st.floats(0.0, 1.0))
def test_iterate_composes(d, m, n, s):
    lhs = pgf_iterate(d, m + n, s)
    rhs = pgf_iterate(d, m, pgf_iterate(d, n, s))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


@given(laws(), st.floats(0.01, 0.99))
def test_iterates_decrease(d, s):
    seq = [pgf_iterate(d, m, s) for m in range(6)]
    assert all(b <= a for a, b in zip(seq, seq[1:]))


@given(laws(), st.floats(0.05, 0.95))
def test_prime_matches_difference(d, s):
    h = 1e-6
    fd = (pgf_eval(d, s + h) - pgf_eval(d, s - h)) / (2 * h)
    assert pgf_prime(d, s) == pytest.approx(fd, rel=1e-7)


def test_hash_by_probs():
    a = new_distribution({2: 0.5, 3: 0.5})
    b = new_distribution({3: 0.5, 2: 0.5})
    assert a == b and hash(a) == hash(b)
