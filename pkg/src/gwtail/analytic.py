"""Laplace transform of W, the logarithmic Böttcher function and the saddle.

phi is built from its Taylor series at 0 and the functional equation
phi(a u) = f(phi(u)).  The Böttcher function is

    b(z) = log z + log(p_mu)/(mu-1) + sum_j mu**-(j+1) log1p(R(f_j(z))),

with R(s) = sum_l (p_{mu+l}/p_mu) s**l, and psi_m is the tail of that sum
starting at j = m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from ._orbit import Engine
from .errors import BracketFailure, ConstantUndefined, DomainError, Mu1NotSupported
from .offspring import OffspringDistribution

__all__ = [
    "AnalyticConfig",
    "SaddleSolution",
    "phi",
    "log_phi",
    "phi_deriv",
    "bottcher_b",
    "psi",
    "log_psi",
    "psi_asymptotic",
    "log_psi_asymptotic",
    "psi_ratio",
    "b_phi",
    "log_psi_phi",
    "solve_u",
]


@dataclass(frozen=True)
class AnalyticConfig:
    u_small: float = 1e-6
    scaling_depth_max: int = 64
    series_truncation: int = 40
    residual_tol: float = 1e-10
    bracket_lo: float = 1e-4
    bracket_hi: float = 1e4
    # order of the Taylor polynomial of phi used below u_small
    base_order: int = 4
    # |1 - z| above which iterates are tracked as log z
    h_switch: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.u_small < 1.0:
            raise ValueError("u_small must lie in (0, 1)")
        if self.series_truncation < 10:
            raise ValueError("series_truncation must be >= 10")
        if not self.bracket_lo < self.bracket_hi:
            raise ValueError("bracket_lo must be below bracket_hi")
        if self.base_order < 2:
            raise ValueError("base_order must be >= 2")
        if self.scaling_depth_max < 1:
            raise ValueError("scaling_depth_max must be >= 1")


DEFAULT_CONFIG = AnalyticConfig()


@dataclass(frozen=True)
class SaddleSolution:
    q: float
    u_q: float
    sigma_sq: float
    y: float
    residual: float


@lru_cache(maxsize=32)
def _engine(dist: OffspringDistribution, cfg: AnalyticConfig) -> Engine:
    return Engine(dist, cfg)


def _need_bottcher(dist):
    if dist.mu < 2:
        raise Mu1NotSupported("the Böttcher function needs minimal offspring >= 2")


def _out(x_in, arr):
    if np.ndim(x_in) == 0:
        v = arr[0]
        if np.iscomplexobj(arr):
            return complex(v)
        return float(v)
    return arr.reshape(np.shape(x_in))


# ------------------------------------------------------------------- phi
def phi(dist, cfg, u):
    """phi(u) = E exp(-u W) for Re u >= 0."""
    ua = np.atleast_1d(np.asarray(u))
    if np.any(np.real(ua) < 0):
        raise DomainError("phi needs Re u >= 0")
    val = _engine(dist, cfg).phi_jet(ua.ravel(), 0)[0]
    return _out(u, val)


def log_phi(dist, cfg, w):
    """log phi(w).  Also defined for Re w < 0 (finite support makes phi entire).

    For complex w the imaginary part is only meaningful modulo 2*pi.
    """
    wa = np.atleast_1d(np.asarray(w))
    val = _engine(dist, cfg).log_phi_jet(wa.ravel(), 0)[0]
    return _out(w, val)


def log_phi_jet(dist, cfg, w, order=2):
    """(log phi, d/dw, d2/dw2) as arrays."""
    wa = np.atleast_1d(np.asarray(w)).ravel()
    return _engine(dist, cfg).log_phi_jet(wa, order)


def phi_deriv(dist, cfg, u, order=1):
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    ua = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(ua <= 0):
        raise DomainError("phi_deriv needs u > 0")
    jet = _engine(dist, cfg).phi_jet(ua.ravel(), order)
    return _out(u, jet[order])


# ------------------------------------------------------- Böttcher series
def _series_from_state(eng, state, start, order, nmax=None):
    """sum_{j>=start} mu**-(j+1) T_j as a jet, plus the log-jet of the start point.

    Runs at least ``series_truncation`` terms past ``start`` and keeps going
    (up to four times as many) until the last term is below double precision.
    """
    J = eng.cfg.series_truncation
    limit = start + (nmax or 4 * J)
    acc = [0.0, 0.0, 0.0]
    L0 = None
    mu = eng.mu
    for j, Lj in enumerate(eng.orbit(state, limit, order)):
        if j == 0:
            L0 = Lj
        if j < start:
            continue
        T = eng.T_jet(Lj, order)
        w = float(mu) ** (-j - 1)
        for k in range(order + 1):
            acc[k] = acc[k] + w * T[k]
        if j >= start + J - 1:
            last = np.abs(w * T[0])
            if np.all(last <= 1e-17 * np.maximum(np.abs(acc[0]), 1e-300)) or np.all(last == 0):
                break
    return tuple(acc[k] if k <= order else None for k in range(3)), L0


def bottcher_b(dist, cfg, z, with_prime=False):
    """Logarithmic Böttcher function b(z) (and b'(z) if requested)."""
    _need_bottcher(dist)
    eng = _engine(dist, cfg)
    za = np.atleast_1d(np.asarray(z)).ravel()
    order = 1 if with_prime else 0
    st = eng.start_from_point(za, order)
    S, L0 = _series_from_state(eng, st, 0, order)
    b = L0[0] + eng.log_pmu / (eng.mu - 1) + S[0]
    if np.isrealobj(np.asarray(z)):
        b = b.real
    if not with_prime:
        return _out(z, b)
    db = L0[1] + S[1]
    if np.isrealobj(np.asarray(z)):
        db = db.real
    return _out(z, b), _out(z, db)


def psi(dist, cfg, m, z):
    """psi_m(z) = sum_{j>=m} mu**-(j+1) log(f_{j+1}(z) / (p_mu f_j(z)**mu)).

    For real arguments this is exp(log_psi) and so may underflow to 0.0.
    """
    _need_bottcher(dist)
    if m < 0:
        raise ValueError("m must be >= 0")
    za = np.atleast_1d(np.asarray(z))
    if not np.iscomplexobj(za) and np.all((za > 0) & (za < 1)):
        return _out(z, np.exp(_log_psi_real(dist, cfg, m, za.ravel())))
    eng = _engine(dist, cfg)
    st = eng.start_from_point(za.ravel(), 0)
    S, _ = _series_from_state(eng, st, m, 0)
    return _out(z, S[0])


def _log_terms_real(eng, Ls, m):
    """log of mu**-(j+1) T_j for j >= m from real log-iterates Ls[j]."""
    logT = np.array([eng.log_T_real(L)[0] for L in Ls[m:]])
    j = np.arange(m, len(Ls))[:, None]
    return logT - (j + 1) * eng.log_mu


def _real_orbit(eng, state, nsteps, order):
    return [L for L in eng.orbit(state, nsteps, order)]


def _log_psi_real(dist, cfg, m, s):
    eng = _engine(dist, cfg)
    st = eng.start_from_point(np.asarray(s, dtype=float), 0)
    Ls = [L[0] for L in _real_orbit(eng, st, m + cfg.series_truncation, 0)]
    return logsumexp(_log_terms_real(eng, Ls, m), axis=0)


def log_psi(dist, cfg, m, s):
    """log psi_m(s) for real s in (0, 1); finite even when psi_m underflows."""
    _need_bottcher(dist)
    sa = np.atleast_1d(np.asarray(s, dtype=float)).ravel()
    if np.any((sa <= 0) | (sa >= 1)):
        raise DomainError("log_psi needs s in (0, 1)")
    return _out(s, _log_psi_real(dist, cfg, m, sa))


def _asym_constant(dist):
    if dist.lam is None:
        raise ConstantUndefined("p_mu = 1: there is no second support point")
    lam, mu = dist.lam, dist.mu
    return math.log(dist.p(lam)) - (lam - 1) / (mu - 1) * math.log(dist.p_mu)


def log_psi_asymptotic(dist, cfg, m, z):
    """log of p_lam p_mu**(-(lam-1)/(mu-1)) mu**(-m-1) exp{(lam-mu) mu**m b(z)}."""
    _need_bottcher(dist)
    c = _asym_constant(dist)
    return c - (m + 1) * math.log(dist.mu) + (dist.lam - dist.mu) * dist.mu**m * np.asarray(
        bottcher_b(dist, cfg, z)
    )


def psi_asymptotic(dist, cfg, m, z):
    _need_bottcher(dist)
    val = np.exp(log_psi_asymptotic(dist, cfg, m, z))
    return val[()] if np.ndim(val) == 0 else val


def _signed_logsumexp(parts):
    """Sum of terms given as (sign, log|term|); returns (sign, log|sum|)."""
    parts = [(s, l) for s, l in parts if s != 0 and np.isfinite(l)]
    if not parts:
        return 0, -np.inf
    signs = np.array([s for s, _ in parts], dtype=float)
    logs = np.array([l for _, l in parts])
    val, sgn = logsumexp(logs, b=signs, return_sign=True)
    return int(sgn), float(val)


def _log1p_parts(logx):
    """log1p(x) for x = exp(logx) > 0 as signed log terms."""
    if logx < math.log(1e-5):
        return [(1, logx), (-1, 2 * logx - math.log(2.0)), (1, 3 * logx - math.log(3.0))]
    v = math.log1p(math.exp(logx))
    return [(1, math.log(v))]


def psi_ratio(dist, cfg, m, s):
    """psi_m(s) / psi_asymptotic(m, s) together with log|ratio - 1|.

    The ratio approaches 1 faster than double precision can show directly,
    so the deviation is assembled from its exactly-known pieces in log-space:

        log ratio = log(log1p(R)/R) + log1p(higher powers in R)
                    + log1p(sum_{j>m} T_j / (mu**(j-m) T_m))
                    - (lam - mu) mu**m psi_m

    with R = R(f_m(s)), all evaluated without forming tiny numbers.
    """
    _need_bottcher(dist)
    _asym_constant(dist)
    if not 0 < s < 1:
        raise DomainError("psi_ratio needs s in (0, 1)")
    eng = _engine(dist, cfg)
    l0 = dist.lam - dist.mu
    st = eng.start_from_point(np.array([float(s)]), 0)
    Ls = [L[0] for L in _real_orbit(eng, st, m + cfg.series_truncation, 0)]
    Lm = Ls[m]
    parts = []

    logR = logsumexp(eng.log_rho + eng.l_idx * Lm[0])
    R = math.exp(logR)
    if R < 1e-5:
        parts += [(-1, logR - math.log(2.0)), (1, 2 * logR + math.log(5.0 / 24.0))]
    else:
        v = math.log(math.log1p(R) / R)
        parts.append((int(np.sign(v)), math.log(abs(v))))

    higher = eng.l_idx > l0
    if np.any(higher):
        lr0 = math.log(eng.rho[l0])
        logS1 = logsumexp(eng.log_rho[higher] - lr0 + (eng.l_idx[higher] - l0) * Lm[0])
        parts += _log1p_parts(logS1)

    lw = _log_terms_real(eng, Ls, m)[:, 0]
    if lw.size > 1:
        parts += _log1p_parts(logsumexp(lw[1:] - lw[0]))

    log_psi_m = logsumexp(lw)
    parts.append((-1, math.log(l0) + m * eng.log_mu + log_psi_m))

    sgn, logdev = _signed_logsumexp(parts)
    lr = sgn * math.exp(logdev) if np.isfinite(logdev) else 0.0
    ratio = math.exp(lr)
    if logdev < -30:
        log_gap = logdev
    else:
        em = math.expm1(lr)
        log_gap = math.log(abs(em)) if em != 0 else -math.inf
    return ratio, log_gap


# ------------------------------------------------------------ b o phi
def b_phi(dist, cfg, u, order=2):
    """(b(phi(u)), d/du, d2/du2) for real u > 0."""
    _need_bottcher(dist)
    eng = _engine(dist, cfg)
    ua = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    if np.any(ua <= 0):
        raise DomainError("b_phi needs u > 0")
    st = eng.phi_state(ua, order)
    S, L0 = _series_from_state(eng, st, 0, order)
    out = [L0[0] + eng.log_pmu / (eng.mu - 1) + S[0]]
    for k in range(1, order + 1):
        out.append(L0[k] + S[k])
    return tuple(_out(u, np.real(v)) for v in out)


def log_psi_phi(dist, cfg, n, u):
    """For real u: log Psi, Psi'/Psi and Psi''/Psi where Psi = psi_n o phi.

    Derivatives are with respect to u.  Nothing here underflows.
    """
    _need_bottcher(dist)
    eng = _engine(dist, cfg)
    ua = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    st = eng.phi_state(ua, 2)
    lw, r1s, r2s = [], [], []
    for j, Lj in enumerate(eng.orbit(st, n + cfg.series_truncation, 2)):
        if j < n:
            continue
        L, L1, L2 = (np.real(c) for c in Lj)
        logT, r1, r2 = eng.log_T_real(L)
        lw.append(logT - (j + 1) * eng.log_mu)
        r1s.append(r1 * L1)
        r2s.append(r2 * L1**2 + r1 * L2)
    lw = np.array(lw)
    logPsi = logsumexp(lw, axis=0)
    wts = np.exp(lw - logPsi)
    d1 = (wts * np.array(r1s)).sum(axis=0)
    d2 = (wts * np.array(r2s)).sum(axis=0)
    return _out(u, logPsi), _out(u, d1), _out(u, d2)


# --------------------------------------------------------------- saddle
def _saddle_g(dist, cfg, u, target):
    return b_phi(dist, cfg, u, order=1)[1] + target


@lru_cache(maxsize=4096)
def _solve_u_cached(dist, cfg, y, q):
    target = y / q
    lo, hi = cfg.bracket_lo, cfg.bracket_hi
    g_lo = _saddle_g(dist, cfg, lo, target)
    g_hi = _saddle_g(dist, cfg, hi, target)
    expansions = 0
    while g_lo > 0 or g_hi < 0:
        if expansions >= 20:
            raise BracketFailure(f"no sign change for y={y}, q={q}")
        expansions += 1
        if g_lo > 0:
            hi, g_hi = lo, g_lo
            lo /= 4.0
            g_lo = _saddle_g(dist, cfg, lo, target)
        else:
            lo, g_lo = hi, g_hi
            hi *= 4.0
            g_hi = _saddle_g(dist, cfg, hi, target)

    def g_log(t):
        return _saddle_g(dist, cfg, math.exp(t), target)

    t = brentq(g_log, math.log(lo), math.log(hi), xtol=1e-15, rtol=4 * np.finfo(float).eps)
    u = math.exp(t)
    _, g1, g2 = b_phi(dist, cfg, u, order=2)
    res = g1 + target
    # one Newton polish; the bracket solve already sits at the rounding floor
    if abs(res) > cfg.residual_tol and g2 > 0:
        u2 = u - res / g2
        if u2 > 0:
            _, g1b, g2b = b_phi(dist, cfg, u2, order=2)
            if abs(g1b + target) < abs(res):
                u, g1, g2, res = u2, g1b, g2b, g1b + target
    if abs(res) > cfg.residual_tol:
        raise BracketFailure(f"saddle residual {res:.3g} above tolerance")
    if not g2 > 0:
        raise BracketFailure("non-positive curvature at the saddle")
    return SaddleSolution(q=q, u_q=u, sigma_sq=g2, y=y, residual=abs(res))


def solve_u(dist, cfg, y, q=1.0) -> SaddleSolution:
    """Unique u > 0 with (b o phi)'(u) = -y/q, and sigma_q**2 = (b o phi)''(u)."""
    _need_bottcher(dist)
    ratio = dist.mu / dist.mean
    if not (ratio < y <= 1.0 + 1e-12):
        raise ValueError(f"y = {y} outside ({ratio}, 1]")
    if not 1.0 <= q <= 2.0:
        raise ValueError("q must lie in [1, 2]")
    return _solve_u_cached(dist, cfg, float(y), float(q))
