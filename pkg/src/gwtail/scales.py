"""Scale quantities indexed by the threshold eps, and the omega regimes."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from . import analytic
from .errors import DegenerateLaw, EpsilonTooLarge, Mu1NotSupported, NotMu1

INTEGER_TIE_TOL = 1e-12
OMEGA_LARGE_THRESHOLD = 100.0
OMEGA_SMALL_THRESHOLD = 0.01


class Regime(str, enum.Enum):
    OMEGA_LARGE = "OMEGA_LARGE"
    OMEGA_ORDER_ONE = "OMEGA_ORDER_ONE"
    OMEGA_SMALL = "OMEGA_SMALL"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class EpsilonScales:
    eps: float
    kappa: int
    y: float
    u1: float
    sigma1_sq: float
    b_u1: float  # b(phi(u1))
    H: float
    gamma: float
    ceil_gamma: int
    frac_gamma: float
    omega: float
    log_omega: float
    d: int
    n: int | None
    N: float | None
    Phi: dict = field(default_factory=dict)


def _check_bottcher(dist):
    if dist.mu == 1:
        raise Mu1NotSupported("minimal offspring 1: use mu1_scales")
    if dist.lam is None:
        raise DegenerateLaw("p_mu = 1: the tree is deterministic")


def kappa_and_y(dist, eps):
    """kappa = floor(log(1/eps)/log(a/mu)) and y = eps (a/mu)**kappa in (mu/a, 1]."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    r = math.log(dist.mean / dist.mu)
    kappa = math.floor(-math.log(eps) / r)
    y = math.exp(math.log(eps) + kappa * r)
    # the floor can be off by one when log(1/eps)/log(a/mu) is nearly integral
    if y > 1.0 + 1e-15:
        kappa -= 1
        y = math.exp(math.log(eps) + kappa * r)
    elif y <= dist.mu / dist.mean:
        kappa += 1
        y = math.exp(math.log(eps) + kappa * r)
    return kappa, min(y, 1.0)


def ceil_with_ties(gamma):
    """(ceil(gamma), ceil(gamma) - gamma), snapping near-integers to {gamma} = 0."""
    r = round(gamma)
    if abs(gamma - r) <= INTEGER_TIE_TOL:
        return int(r), 0.0
    c = math.ceil(gamma)
    return int(c), c - gamma


def compute_scales(dist, cfg, eps, d=0, require_n=True) -> EpsilonScales:
    """All eps-indexed scales.

    ``d`` shifts the generation split: n = kappa - ceil(gamma) - d.  With
    ``require_n=False`` the n-dependent fields are left as None instead of
    raising EpsilonTooLarge (useful at moderate eps, where only gamma is needed).
    """
    _check_bottcher(dist)
    if d not in (-1, 0, 1):
        raise ValueError("d must be -1, 0 or 1")
    mu, a = dist.mu, dist.mean
    alpha = dist.alpha
    lam = dist.lam
    kappa, y = kappa_and_y(dist, eps)
    sol = analytic.solve_u(dist, cfg, y, 1.0)
    b1 = analytic.b_phi(dist, cfg, sol.u_q, order=0)[0]
    log_mu = math.log(mu)
    H = math.log(-b1 * y**alpha * (lam - mu) / alpha) / log_mu
    L = -math.log(eps)
    gamma = L / math.log(a / mu) - math.log(L) / log_mu + H
    cg, frac = ceil_with_ties(gamma)
    log_omega = alpha * (mu ** (-frac) - 1.0) * math.log(eps) - math.log(L)
    omega = math.exp(log_omega) if log_omega < 700 else math.inf

    n = kappa - cg - d
    N = None
    Phi = {}
    if n >= 1 and kappa - n - 1 >= 1:
        N = float(mu) ** (kappa - n - 1)
        log_pmu = math.log(dist.p_mu)
        for j, pj in dist.probs:
            if j <= mu:
                continue
            logv = (
                math.log(pj)
                - (j - 1) / (mu - 1) * log_pmu
                + math.log(N)
                + (j - mu) * float(mu) ** n * b1
            )
            Phi[j] = math.exp(logv)
    elif require_n:
        raise EpsilonTooLarge(f"eps = {eps} gives n = {n}, N = mu**{kappa - n - 1}; need n >= 1, N >= 2")
    else:
        n = n if n >= 0 else None

    return EpsilonScales(
        eps=eps,
        kappa=kappa,
        y=y,
        u1=sol.u_q,
        sigma1_sq=sol.sigma_sq,
        b_u1=b1,
        H=H,
        gamma=gamma,
        ceil_gamma=cg,
        frac_gamma=frac,
        omega=omega,
        log_omega=log_omega,
        d=d,
        n=n,
        N=N,
        Phi=Phi,
    )


def classify_regime(scales) -> Regime:
    omega = scales if isinstance(scales, (int, float)) else scales.omega
    if omega > OMEGA_LARGE_THRESHOLD:
        return Regime.OMEGA_LARGE
    if omega < OMEGA_SMALL_THRESHOLD:
        return Regime.OMEGA_SMALL
    return Regime.OMEGA_ORDER_ONE


def split_identity_error(dist, scales) -> float:
    """Relative gap between exp{(lam-mu) mu**n b(phi(u1))} and eps**(alpha mu**(-{gamma}-d)).

    Evaluated in logs, so it stays meaningful when both sides underflow.
    """
    if scales.n is None:
        raise EpsilonTooLarge("identity needs n")
    lhs = (dist.lam - dist.mu) * float(dist.mu) ** scales.n * scales.b_u1
    rhs = dist.alpha * float(dist.mu) ** (-scales.frac_gamma - scales.d) * math.log(scales.eps)
    return abs(math.expm1(lhs - rhs))


@dataclass(frozen=True)
class Mu1Scales:
    gamma: float
    tau: float


def mu1_scales(dist, eps) -> Mu1Scales:
    if dist.mu != 1:
        raise NotMu1("law has minimal offspring >= 2")
    p1 = dist.p_mu
    if not 0 < p1 < 1:
        raise DegenerateLaw("need p_1 in (0, 1)")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    la = math.log(dist.mean)
    return Mu1Scales(gamma=math.log(1 / eps) / la, tau=-math.log(p1) / la)
