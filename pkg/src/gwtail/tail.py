"""Lower-tail probabilities of W and of sums of independent copies of W.

Three routes to the same numbers:

* closed-form saddle asymptotics,
* numerical inversion of the Laplace transform along Re w = p,
* the exact decomposition of {K > k} by ancestry, which turns joint
  probabilities of (K, W) into tails of sums of mu**k copies of W.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import analytic
from ._orbit import clog1p
from .errors import (
    CancellationLoss,
    DegenerateLaw,
    DepthExceeded,
    NonIntegralCopies,
    NotMu1,
    QuadratureDiverged,
)
from .scales import EpsilonScales, compute_scales

EPS_MACH = np.finfo(float).eps


class Method(str, enum.Enum):
    ASYMPTOTIC = "ASYMPTOTIC"
    INVERSION = "INVERSION"
    MONTE_CARLO = "MONTE_CARLO"
    EXACT_IDENTITY = "EXACT_IDENTITY"
    SADDLE_RATIO = "SADDLE_RATIO"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class LogProb:
    """A probability stored as its logarithm, with an error bar on the log."""

    log_value: float
    abs_err_log: float
    method: Method
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.abs_err_log) or self.abs_err_log < 0:
            raise ValueError("abs_err_log must be finite and nonnegative")
        if self.log_value > 0:
            raise ValueError("log-probability above 0")

    @property
    def value(self):
        return math.exp(self.log_value)


@dataclass(frozen=True)
class InversionPlan:
    contour_p: float
    window_halfwidth: float
    step: float
    copies_log: float

    def __post_init__(self):
        if not (self.contour_p > 0 and self.window_halfwidth > 0 and self.step > 0):
            raise ValueError("plan fields must be positive")
        if not self.step < self.window_halfwidth / 50:
            raise ValueError("step must be below window_halfwidth / 50")


def _clip_log(v, err):
    # rounding can push a probability of 1 slightly above; never report > 0
    if v > 0:
        if v > err + 1e-12:
            raise QuadratureDiverged(f"log-probability {v:.3g} above 0 beyond its error {err:.3g}")
        return 0.0
    return v


# ------------------------------------------------------------------ asymptotic
def tail_W_asymptotic(dist, cfg, eps) -> LogProb:
    """Saddle asymptotic of log P(W < eps)."""
    sc = compute_scales(dist, cfg, eps, 0, require_n=False)
    mu = dist.mu
    lv = (
        -math.log(dist.p_mu) / (mu - 1)
        - math.log(math.sqrt(sc.sigma1_sq) * sc.u1 * math.sqrt(2 * math.pi))
        - 0.5 * sc.kappa * math.log(mu)
        + float(mu) ** sc.kappa * (sc.b_u1 + sc.y * sc.u1)
    )
    return LogProb(min(lv, 0.0), 0.0, Method.ASYMPTOTIC, {"eps": eps, "kappa": sc.kappa})


def tail_sum_asymptotic(dist, cfg, scales: EpsilonScales, q=1.0) -> LogProb:
    """Asymptotic of log P(W_1 + ... + W_Q < eps a**(kappa-n)), Q = q mu**(kappa-n).

    The I_q factor is set to 1; ``meta['I_q_valid']`` records whether
    mu**kappa psi_n(phi(u1)) is of order one, the regime where that is justified.
    """
    if scales.n is None:
        raise ValueError("scales need n (use require_n=True)")
    mu, kappa, n, y = dist.mu, scales.kappa, scales.n, scales.y
    Q = q * float(mu) ** (kappa - n)
    if abs(Q - round(Q)) > max(1e-6, 4 * EPS_MACH * Q):
        raise NonIntegralCopies(f"q mu**(kappa-n) = {Q} is not an integer")
    sol = analytic.solve_u(dist, cfg, y, q)
    bq = analytic.b_phi(dist, cfg, sol.u_q, order=0)[0]
    log_psi_q = analytic.log_psi_phi(dist, cfg, n, sol.u_q)[0]
    mk = float(mu) ** kappa
    lv = (
        -Q / (mu - 1) * math.log(dist.p_mu)
        - math.log(math.sqrt(sol.sigma_sq) * sol.u_q * math.sqrt(2 * math.pi * q))
        - 0.5 * kappa * math.log(mu)
        + mk * (q * bq - q * math.exp(log_psi_q) + y * sol.u_q)
    )
    load = math.exp(kappa * math.log(mu) + analytic.log_psi_phi(dist, cfg, n, scales.u1)[0])
    return LogProb(
        min(lv, 0.0),
        0.0,
        Method.ASYMPTOTIC,
        {"copies": int(round(Q)), "q": q, "u_q": sol.u_q, "I_q_valid": bool(load <= 10.0)},
    )


# ------------------------------------------------------------------- inversion
def _cexpm1(z):
    out = np.exp(z) - 1.0
    small = np.abs(z) < 1e-2
    if np.any(small):
        zs = z[small]
        out[small] = zs * (1 + zs * (1 / 2 + zs * (1 / 6 + zs * (1 / 24 + zs / 120))))
    return out


def _log_expm1(z):
    """log(e**z - 1) for complex z with Re z > 0."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    far = z.real > 0.5
    out[far] = z[far] + clog1p(-np.exp(-z[far]))
    near = ~far
    if np.any(near):
        out[near] = np.log(_cexpm1(z[near]))
    return out


def _auto_saddle(dist, cfg, x, Q):
    """Minimizer of p x + Q log phi(p) - log p over p > 0."""

    def gprime(t):
        p = math.exp(t)
        _, d1, _ = analytic.log_phi_jet(dist, cfg, p, order=1)
        return x + Q * float(d1[0]) - 1.0 / p

    # d/dp (log phi) lies in (-1, 0), so the root sits between these bounds
    lo = math.log(0.5 / (x + Q))
    hi = math.log(2.0 / x + 1.0)
    k = 0
    while gprime(hi) < 0:
        hi += math.log(4.0)
        k += 1
        if k > 60:
            raise QuadratureDiverged("no saddle for the inversion contour")
    while gprime(lo) > 0:
        lo -= math.log(4.0)
        k += 1
        if k > 120:
            raise QuadratureDiverged("no saddle for the inversion contour")
    t = brentq(gprime, lo, hi, xtol=1e-12, rtol=1e-12)
    return math.exp(t)


def auto_plan(dist, cfg, x, copies) -> InversionPlan:
    Q = float(copies)
    p = _auto_saddle(dist, cfg, x, Q)
    _, _, d2 = analytic.log_phi_jet(dist, cfg, p, order=2)
    curv = Q * float(d2[0]) + 1.0 / p**2
    sd = 1.0 / math.sqrt(curv)
    return InversionPlan(contour_p=p, window_halfwidth=12 * sd, step=sd / 8, copies_log=math.log(Q))


UPPER_BOUND_LOG = -30.0


def _log_upper_chernoff(dist, cfg, x, Q):
    """min over t > 0 of -t x + Q log phi(-t), a bound on log P(W_1 + ... + W_Q >= x)."""

    def parts(t):
        L, d1, _ = analytic.log_phi_jet(dist, cfg, np.array([-t + 0j]), order=1)
        return float(L[0].real), float(d1[0].real)

    def gprime(t):
        return -x - Q * parts(t)[1]

    hi = 1.0
    k = 0
    while gprime(hi) < 0:
        hi *= 4.0
        k += 1
        if k > 30:
            return 0.0
    t = brentq(gprime, 0.0, hi, xtol=1e-14, rtol=1e-12)
    return min(-t * x + Q * parts(t)[0], 0.0)


def _log_integrand(dist, cfg, x, Q, p, tau):
    w = p - 1j * np.asarray(tau, dtype=float)
    L = analytic.log_phi_jet(dist, cfg, w, order=0)[0]
    return _log_expm1(x * w) - np.log(w) + Q * L, L


def tail_sum_numeric(
    dist, cfg, x, copies=1, plan=None, rtol=1e-10, max_points=1 << 18
) -> LogProb:
    """log P(W_1 + ... + W_Q < x) by inverting the Laplace transform.

    Integrates (1/2 pi) int (e^{x w} - 1)/w phi(w)**Q dtau along w = p - i tau.
    The value at tau = 0 is factored out, so only an O(1) remainder is summed
    (trapezoid rule on a uniform grid, which is spectrally accurate here).
    ``copies`` may be a large integer such as mu**k.
    """
    if not x > 0:
        raise ValueError("x must be positive")
    Q = float(copies)
    if Q < 1:
        raise ValueError("copies must be >= 1")
    if plan is None and x > Q:
        # far above the mean of the sum the inversion integrand is dominated by
        # the pole at 0; a Chernoff bound on the upper tail is then sharper
        c = _log_upper_chernoff(dist, cfg, x, Q)
        if c < UPPER_BOUND_LOG:
            e = math.exp(c)
            return LogProb(-0.5 * e, 0.5 * e + 1e-300, Method.INVERSION, {"x": x, "copies": Q, "upper_bound_log": c})
    if plan is None or plan == "auto":
        plan = auto_plan(dist, cfg, x, Q)
    p, h, T = plan.contour_p, plan.step, plan.window_halfwidth

    ell0_c, L0 = _log_integrand(dist, cfg, x, Q, p, [0.0])
    ell0 = float(ell0_c[0].real)
    noise_rel = 16 * EPS_MACH * (Q * abs(float(L0[0].real)) + abs(x * p) + 1.0)

    def values(taus):
        ell, _ = _log_integrand(dist, cfg, x, Q, p, taus)
        return np.exp(ell - ell0)

    n = int(math.ceil(T / h))
    grid = np.arange(n + 1) * h
    vals = values(grid)

    # widen the window until the integrand is negligible at its edge
    while True:
        total = h * (vals.sum() - 0.5 * vals[0]).real
        edge = np.abs(vals[-max(1, n // 20) :]).max()
        if edge * T <= rtol * abs(total) * 1e-2 or edge == 0:
            break
        if 2 * vals.size > max_points // 4:
            # leave room for step refinement; the edge bound enters the error
            break
        extra = np.arange(n + 1, 2 * n + 1) * h
        try:
            more = values(extra)
        except DepthExceeded:
            # slowly decaying transform (minimal offspring 1): keep the
            # window and carry the edge bound in the error instead
            break
        vals = np.concatenate([vals, more])
        n *= 2
        T = n * h

    # halve the step until two successive trapezoid sums agree
    while True:
        coarse = h * (vals.sum() - 0.5 * vals[0]).real
        mids = values((np.arange(n) + 0.5) * h)
        fine_vals = np.empty(2 * n + 1, dtype=complex)
        fine_vals[0::2] = vals
        fine_vals[1::2] = mids
        h2 = h / 2
        fine = h2 * (fine_vals.sum() - 0.5 * fine_vals[0]).real
        absmass = h2 * np.abs(fine_vals).sum()
        trap_err = abs(fine - coarse)
        floor = noise_rel * absmass
        vals, h, n = fine_vals, h2, 2 * n
        if trap_err <= max(rtol * abs(fine), 4 * floor):
            break
        if vals.size * 2 > max_points:
            # out of budget: the last step change is carried as the error
            break

    if not fine > 0:
        raise QuadratureDiverged("quadrature returned a non-positive probability")
    edge = float(np.abs(vals[-1]))
    tail_bound = edge * max(T, 1.0)
    err_abs = trap_err + tail_bound + floor
    log_val = ell0 + math.log(fine / math.pi)
    if err_abs > 0.5 * fine:
        raise QuadratureDiverged(f"error bound {err_abs / fine:.2g} (relative) too large")
    err_log = err_abs / fine
    used = InversionPlan(p, T, h, math.log(Q))
    return LogProb(
        _clip_log(log_val, err_log),
        err_log,
        Method.INVERSION,
        {"plan": used, "points": int(vals.size), "x": x, "copies": Q},
    )


# ----------------------------------------------------------- joint identity
def _minimal_log_mass(dist, k):
    """log p_mu * (mu**k - 1)/(mu - 1): probability that the first k generations are mu-ary."""
    mu = dist.mu
    if mu == 1:
        return k * math.log(dist.p_mu)
    return (float(mu) ** k - 1.0) / (mu - 1) * math.log(dist.p_mu)


def exact_joint(dist, cfg, eps, k) -> LogProb:
    """log P(K > k, W < eps) = log P(first k generations mu-ary) + log P(sum of mu**k W's < eps a**k)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    inv = tail_sum_numeric(dist, cfg, eps * dist.mean**k, dist.mu**k)
    return LogProb(
        _minimal_log_mass(dist, k) + inv.log_value,
        inv.abs_err_log,
        Method.EXACT_IDENTITY,
        {"k": k, "inversion": inv},
    )


# -------------------------------------------------------- conditional law of K
@dataclass(frozen=True)
class KDistribution:
    """P(K = k | W < eps) on a range of k, with per-bin reliability flags."""

    eps: float
    pmf: dict
    flags: dict
    log_tail: dict  # k -> log P(K > k | W < eps)
    tail_err: dict
    method: str

    def __getitem__(self, k):
        return self.pmf[k]

    def mass(self, ks):
        return sum(self.pmf.get(k, 0.0) for k in ks)


SADDLE_SWITCH = 1e13  # mu**kappa above which inversion noise is too large


def _saddle_log_tail(dist, cfg, sc, k):
    """log P(K > k | W < eps) from the Gaussian approximation around u1.

    Both P(K > k, W < eps) and P(W < eps) are integrals of the same
    saddle-point integrand; the former carries an extra factor
    exp{-mu**kappa psi_n(phi(u))}, n = kappa - k.  Expanding psi_n to second
    order around u1 gives the ratio in closed form.
    """
    n = sc.kappa - k
    if n < 0:
        raise ValueError("k beyond kappa is outside the saddle approximation")
    logPsi, r1, r2 = analytic.log_psi_phi(dist, cfg, n, sc.u1)
    log_mk = sc.kappa * math.log(dist.mu)
    A = math.exp(log_mk + logPsi)  # mu**kappa Psi
    s2 = sc.sigma1_sq
    Psi = math.exp(logPsi)
    Psi1, Psi2 = Psi * r1, Psi * r2
    denom = s2 - Psi2
    lv = -A + 0.5 * math.log(s2 / denom) - math.exp(log_mk) * Psi1**2 / (2 * denom)
    sd = math.exp(-0.5 * log_mk) / math.sqrt(s2)
    err = A * abs(r1) * sd * (1 + abs(r1) * sd) + 16 * EPS_MACH * (1 + A)
    return min(lv, 0.0), err


def conditional_K_pmf(dist, cfg, eps, k_range=None, method="auto", strict=False) -> KDistribution:
    """Conditional law of K given W < eps.

    ``method='joint'`` differences the exact joint identity (one inversion per
    k); ``'saddle'`` uses the closed-form Gaussian ratio, which stays accurate
    where inversion runs out of double precision; ``'auto'`` picks by mu**kappa.
    """
    sc = compute_scales(dist, cfg, eps, 0, require_n=False)
    if k_range is None:
        k_range = range(max(1, sc.ceil_gamma - 2), sc.ceil_gamma + 3)
    ks = sorted(set(int(k) for k in k_range))
    if ks[0] < 1:
        raise ValueError("K >= 1 always")
    if method == "auto":
        method = "joint" if float(dist.mu) ** sc.kappa <= SADDLE_SWITCH else "saddle"
    need = sorted(set([k - 1 for k in ks] + ks))

    log_tail, tail_err = {}, {}
    if method == "joint":
        J0 = exact_joint(dist, cfg, eps, 0)
        for j in need:
            Jj = J0 if j == 0 else exact_joint(dist, cfg, eps, j)
            log_tail[j] = min(Jj.log_value - J0.log_value, 0.0)
            tail_err[j] = 0.0 if j == 0 else Jj.abs_err_log + J0.abs_err_log
    elif method == "saddle":
        for j in need:
            if j == 0:
                log_tail[j], tail_err[j] = 0.0, 0.0
            else:
                log_tail[j], tail_err[j] = _saddle_log_tail(dist, cfg, sc, j)
    else:
        raise ValueError(f"unknown method {method!r}")

    pmf, flags = {}, {}
    for k in ks:
        a, b = log_tail[k - 1], log_tail[k]
        prob = math.exp(a) * -math.expm1(min(b - a, 0.0))
        comb = tail_err[k - 1] + tail_err[k]
        flag = "ok"
        if abs(a - b) < 10 * comb and math.exp(a) > 1e-12:
            flag = "unreliable"
            if strict:
                raise CancellationLoss(f"bin k={k}: adjacent tails agree within their errors")
        pmf[k] = prob if prob > 0 else 0.0
        flags[k] = flag
    return KDistribution(eps, pmf, flags, log_tail, tail_err, method)


# ------------------------------------------------------------ predictions
@dataclass(frozen=True)
class TailPrediction:
    prob: float  # predicted P(K > kappa - n | W < eps)
    load: float  # mu**kappa psi_n(phi(u1))
    load_over_omega: float


def predicted_K_tail(dist, cfg, scales: EpsilonScales) -> TailPrediction:
    """exp{-mu**kappa psi_n(phi(u1))}, the leading-order P(K > kappa - n | W < eps)."""
    if scales.n is None:
        raise ValueError("scales need n")
    logPsi = analytic.log_psi_phi(dist, cfg, scales.n, scales.u1)[0]
    log_load = scales.kappa * math.log(dist.mu) + logPsi
    load = math.exp(log_load) if log_load < 700 else math.inf
    ratio = math.exp(log_load - scales.log_omega) if log_load - scales.log_omega < 700 else math.inf
    return TailPrediction(prob=math.exp(-load), load=load, load_over_omega=ratio)


@dataclass(frozen=True)
class ExtraOffspring:
    C: float
    normalizer: float


def extra_offspring_constant(dist) -> float:
    if dist.mu < 2 or dist.lam is None:
        raise DegenerateLaw("needs minimal offspring >= 2 and p_mu < 1")
    mu, lam = dist.mu, dist.lam
    return (lam / mu - 1) * dist.p(lam) * dist.p_mu ** (-(lam - 1) / (mu - 1))


def excess_normalizer(dist, eps, gamma, k):
    """mu**k eps**(alpha mu**(gamma - k))."""
    return math.exp(k * math.log(dist.mu) + dist.alpha * dist.mu ** (gamma - k) * math.log(eps))


def extra_offspring_prediction(dist, scales: EpsilonScales) -> ExtraOffspring:
    C = extra_offspring_constant(dist)
    if scales.n is None:
        raise ValueError("scales need n")
    k = scales.kappa - scales.n
    return ExtraOffspring(C=C, normalizer=excess_normalizer(dist, scales.eps, scales.gamma, k))


@dataclass(frozen=True)
class Mu1Bound:
    gamma: float
    tau: float
    rate: float
    decay_note: str


def mu1_conditional_bound(dist, eps, x=1.0) -> Mu1Bound:
    if dist.mu != 1:
        raise NotMu1("law has minimal offspring >= 2")
    from .scales import mu1_scales

    s = mu1_scales(dist, eps)
    rate = math.log(dist.p_mu)
    note = f"P(K <= gamma - x | W < eps) <= C1 exp({rate:.6g} x); constants not computed"
    return Mu1Bound(gamma=s.gamma, tau=s.tau, rate=rate, decay_note=note)
