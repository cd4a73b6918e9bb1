import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gwtail import analytic, new_distribution, scales, simulate, tail
from gwtail.errors import CancellationLoss, DegenerateLaw, NonIntegralCopies, NotMu1

STAR = new_distribution({2: 0.5, 3: 0.5})
CFG = analytic.DEFAULT_CONFIG


@pytest.fixture(scope="module")
def w_sample():
    """W_hat = Z_20 / a**20 for 400k trees, plus the K of each tree."""
    rng = np.random.default_rng(11)
    b = simulate.simulate_batch(STAR, 20, 400000, rng)
    return b.Z_final / STAR.mean**20, b.K


def _binom_z(hits, n, p):
    return abs(hits / n - p) / math.sqrt(p * (1 - p) / n)


@pytest.mark.parametrize("x", [0.5, 0.7, 1.0, 1.5])
def test_inversion_against_monte_carlo(w_sample, x):
    w, _ = w_sample
    p = tail.tail_sum_numeric(STAR, CFG, x, 1).value
    assert _binom_z(int((w < x).sum()), w.size, p) < 4


@pytest.mark.parametrize("x", [1.4, 2.0])
def test_two_copies_against_monte_carlo(w_sample, x):
    w, _ = w_sample
    s = w[0::2] + w[1::2]
    p = tail.tail_sum_numeric(STAR, CFG, x, 2).value
    assert _binom_z(int((s < x).sum()), s.size, p) < 4


@pytest.mark.parametrize("x,Q", [(0.3, 1), (0.05, 1), (40.0, 64), (2.0, 4)])
def test_inversion_independent_of_contour(x, Q):
    auto = tail.auto_plan(STAR, CFG, x, Q)
    ref = tail.tail_sum_numeric(STAR, CFG, x, Q)
    sd0 = auto.step * 8
    for shift in (-2.0, 2.0):
        p = auto.contour_p + shift * sd0
        curv = Q * float(analytic.log_phi_jet(STAR, CFG, p)[2][0]) + 1 / p**2
        sd = 1 / math.sqrt(curv)
        plan = tail.InversionPlan(p, 12 * sd, sd / 8, math.log(Q))
        other = tail.tail_sum_numeric(STAR, CFG, x, Q, plan=plan)
        tol = 10 * (ref.abs_err_log + other.abs_err_log) + 1e-12 * abs(ref.log_value)
        assert abs(other.log_value - ref.log_value) <= tol


def test_upper_chernoff_branch():
    # far above the mean: log P(W < x) is -P(W >= x) to double precision
    fast = tail.tail_sum_numeric(STAR, CFG, 3.0, 1)
    assert "upper_bound_log" in fast.meta and -1e-30 < fast.log_value <= 0
    mid = tail.tail_sum_numeric(STAR, CFG, 1.5, 1)
    w = tail.tail_sum_numeric(STAR, CFG, 1.5, 1, plan="auto")
    assert mid.log_value == pytest.approx(w.log_value, abs=1e-12)


@given(st.floats(0.05, 2.0), st.floats(1.01, 2.0))
def test_inversion_monotone_in_x(x, r):
    lo = tail.tail_sum_numeric(STAR, CFG, x, 1)
    hi = tail.tail_sum_numeric(STAR, CFG, x * r, 1)
    assert lo.log_value <= 0 and hi.log_value <= 0
    assert hi.log_value >= lo.log_value - lo.abs_err_log - hi.abs_err_log


def test_inversion_small_x_against_asymptotic():
    inv = tail.tail_sum_numeric(STAR, CFG, 0.01, 1)
    asy = tail.tail_W_asymptotic(STAR, CFG, 0.01)
    assert abs(asy.log_value - inv.log_value) / abs(inv.log_value) < 1e-10
    assert inv.abs_err_log < 1e-3


def test_mu1_inversion_against_monte_carlo():
    d = new_distribution({1: 0.5, 2: 0.5})
    rng = np.random.default_rng(5)
    b = simulate.simulate_batch(d, 30, 200000, rng)
    w = b.Z_final / d.mean**30
    for x in (0.3, 0.6):
        p = tail.tail_sum_numeric(d, CFG, x, 1).value
        # Z_30 can be small here, so W_hat carries extra noise; allow a wider band
        assert abs((w < x).mean() - p) < 0.01 * p + 4 * math.sqrt(p / w.size)


# ------------------------------------------------------------ joint identity
@pytest.mark.parametrize("k", [1, 2, 3])
def test_exact_joint_against_monte_carlo(w_sample, k):
    w, K = w_sample
    eps = 0.8
    hits = int(((w < eps) & ((K > k) | (K == 0))).sum())
    p = math.exp(tail.exact_joint(STAR, CFG, eps, k).log_value)
    assert _binom_z(hits, w.size, p) < 4


def test_exact_joint_k0_is_inversion():
    assert tail.exact_joint(STAR, CFG, 0.2, 0).log_value == tail.tail_sum_numeric(STAR, CFG, 0.2, 1).log_value


@given(st.floats(0.005, 0.5))
def test_joint_nonincreasing_in_k(eps):
    js = [tail.exact_joint(STAR, CFG, eps, k) for k in range(0, 8)]
    for a, b in zip(js, js[1:]):
        assert b.log_value <= a.log_value + a.abs_err_log + b.abs_err_log


# -------------------------------------------------------- conditional law of K
def test_conditional_pmf_against_monte_carlo(w_sample):
    w, K = w_sample
    eps = 0.8
    acc = K[w < eps]
    kd = tail.conditional_K_pmf(STAR, CFG, eps, range(1, 12))
    n = acc.size
    for k in range(1, 8):
        p = kd.pmf[k]
        if p * n < 20:
            continue
        assert _binom_z(int((acc == k).sum()), n, p) < 4


@pytest.mark.parametrize("eps", [1e-2, 1e-3])
def test_saddle_agrees_with_joint(eps):
    a = tail.conditional_K_pmf(STAR, CFG, eps, method="joint")
    b = tail.conditional_K_pmf(STAR, CFG, eps, method="saddle")
    for k in a.pmf:
        assert a.pmf[k] == pytest.approx(b.pmf[k], abs=2e-3)


def test_pmf_sums_to_one():
    kd = tail.conditional_K_pmf(STAR, CFG, 0.01, range(1, 30))
    assert sum(kd.pmf.values()) == pytest.approx(1.0, abs=1e-6)
    assert all(v >= 0 for v in kd.pmf.values())


def test_auto_method_switch():
    assert tail.conditional_K_pmf(STAR, CFG, 1e-3).method == "joint"
    assert tail.conditional_K_pmf(STAR, CFG, 1e-14).method == "saddle"


def test_strict_raises_on_cancellation():
    # at eps = 1e-4 the bins below ceil(gamma) cancel inside the inversion noise
    kd = tail.conditional_K_pmf(STAR, CFG, 1e-4)
    assert "unreliable" in kd.flags.values()
    with pytest.raises(CancellationLoss):
        tail.conditional_K_pmf(STAR, CFG, 1e-4, strict=True)


def test_predicted_tail_matches_joint():
    sc = scales.compute_scales(STAR, CFG, 1e-3)
    pred = tail.predicted_K_tail(STAR, CFG, sc)
    kd = tail.conditional_K_pmf(STAR, CFG, 1e-3)
    k = sc.kappa - sc.n
    assert -kd.log_tail[k] == pytest.approx(pred.load, rel=1e-4)
    assert pred.load_over_omega == pytest.approx(pred.load / sc.omega)


def test_sum_asymptotic_against_inversion():
    sc = scales.compute_scales(STAR, CFG, 1e-3)
    Q = 2 ** (sc.kappa - sc.n)
    a = tail.tail_sum_asymptotic(STAR, CFG, sc, 1.0)
    inv = tail.tail_sum_numeric(STAR, CFG, 1e-3 * 2.5 ** (sc.kappa - sc.n), Q)
    assert abs(a.log_value - inv.log_value) / abs(inv.log_value) < 1e-9
    with pytest.raises(NonIntegralCopies):
        tail.tail_sum_asymptotic(STAR, CFG, sc, 1.3)


# --------------------------------------------------------------- constants
def test_extra_offspring_constant():
    assert tail.extra_offspring_constant(STAR) == pytest.approx(1.0)
    d = new_distribution({2: 0.6, 4: 0.4})
    assert tail.extra_offspring_constant(d) == pytest.approx((4 / 2 - 1) * 0.4 * 0.6**-3)
    with pytest.raises(DegenerateLaw):
        tail.extra_offspring_constant(new_distribution({2: 1.0}))


def test_mu1_bound():
    d = new_distribution({1: 0.5, 2: 0.5})
    b = tail.mu1_conditional_bound(d, 0.05)
    assert b.rate == pytest.approx(math.log(0.5)) and b.gamma > 0
    with pytest.raises(NotMu1):
        tail.mu1_conditional_bound(STAR, 0.05)


def test_logprob_and_plan_validation():
    with pytest.raises(ValueError):
        tail.LogProb(0.1, 0.0, tail.Method.INVERSION)
    with pytest.raises(ValueError):
        tail.LogProb(-1.0, math.inf, tail.Method.INVERSION)
    with pytest.raises(ValueError):
        tail.InversionPlan(1.0, 1.0, 0.1, 0.0)
