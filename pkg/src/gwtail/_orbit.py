"""Vectorized iteration engine behind the analytic functions.

Points are carried in one of two representations:

* near 1 as ``h = 1 - z``, iterated with the exact polynomial H(h) = 1 - f(1 - h)
  (no cancellation when z is close to 1);
* otherwise as ``L = log z``, iterated with
  log f(e^L) = log p_mu + mu*L + log1p(R(e^L)),
  R(s) = sum_l (p_{mu+l}/p_mu) s**l, which never underflows.

Every quantity is a jet ``(value, d1, d2)`` of derivatives with respect to
the caller's variable; ``order`` says how many derivatives are live.
"""

from __future__ import annotations

import math
from math import comb

import numpy as np

from .errors import DepthExceeded, DomainError

_SMALL = 1e-4


def clog1p(x):
    """log(1 + x), accurate for tiny complex x as well."""
    x = np.asarray(x)
    if x.dtype.kind != "c":
        return np.log1p(x)
    out = np.log(1.0 + x)
    small = np.abs(x) < _SMALL
    if np.any(small):
        xs = x[small]
        out[small] = xs * (1 - xs * (1 / 2 - xs * (1 / 3 - xs * (1 / 4 - xs / 5))))
    return out


def _poly3(coef, x):
    """P(x), P'(x), P''(x) by Horner; coef[i] multiplies x**i."""
    p = np.zeros_like(x) + coef[-1]
    dp = np.zeros_like(x)
    ddp = np.zeros_like(x)
    for c in coef[-2::-1]:
        ddp = ddp * x + 2 * dp
        dp = dp * x + p
        p = p * x + c
    return p, dp, ddp


def _chain(f0, f1, f2, jet, order):
    """Compose a scalar function (given its derivatives) with a jet."""
    _, d1, d2 = jet
    if order == 0:
        return (f0, None, None)
    g1 = f1 * d1
    if order == 1:
        return (f0, g1, None)
    return (f0, g1, f2 * d1 * d1 + f1 * d2)


def _take(jet, idx):
    return tuple(None if c is None else c[idx] for c in jet)


def _put(jet, idx, val):
    for c, v in zip(jet, val):
        if c is not None:
            c[idx] = v


def phi_series(coef, a, order):
    """Taylor coefficients of phi at 0 from phi(a s) = f(phi(s)), phi'(0) = -1."""
    phi = np.zeros(order + 1)
    phi[0] = 1.0
    if order >= 1:
        phi[1] = -1.0
    for k in range(2, order + 1):
        acc = np.zeros(k + 1)
        power = np.zeros(k + 1)
        power[0] = 1.0
        for j in range(1, len(coef)):
            power = np.convolve(power, phi[: k + 1])[: k + 1]
            acc += coef[j] * power
        phi[k] = acc[k] / (a**k - a)
    return phi


class Engine:
    """Precomputed polynomial data for one (law, config) pair."""

    def __init__(self, dist, cfg):
        self.dist = dist
        self.cfg = cfg
        self.a = dist.mean
        self.log_a = math.log(self.a)
        self.mu = dist.mu
        self.log_mu = math.log(self.mu)
        self.log_pmu = math.log(dist.p_mu)
        coef = dist.coefficients()
        self.coef = coef
        d = dist.max_support
        self.deg = d

        # H(h) = 1 - f(1 - h) = sum_i e_i h**i
        e = np.zeros(d + 1)
        for i in range(1, d + 1):
            e[i] = (-1) ** (i + 1) * math.fsum(p * comb(j, i) for j, p in dist.probs)
        self.e = e

        # R(s) = sum_{l>=1} rho_l s**l, bottom-factored form of f(s)/(p_mu s**mu)
        rho = coef[self.mu :] / dist.p_mu
        rho[0] = 0.0
        self.rho = rho
        self.l_idx = np.nonzero(rho)[0]
        self.log_rho = np.log(rho[self.l_idx])
        # top-factored form, used when |z| > 1
        p_d = coef[d]
        self.log_pd = math.log(p_d)
        self.top = coef[::-1][: d - self.mu + 1] / p_d
        self.top[0] = 0.0

        ser = phi_series(coef, self.a, cfg.base_order)
        self.hser = -ser  # h(s) = sum_{k>=1} hser[k] s**k
        self.hser[0] = 0.0

    # ------------------------------------------------------------------ steps
    def _step_h(self, jet, order):
        v0, v1, v2 = _poly3(self.e, jet[0])
        return _chain(v0, v1, v2, jet, order)

    def _log1p_poly(self, coef, L, sign):
        """log1p(P(e^{sign L})) and its first two L-derivatives."""
        t = np.exp(sign * L)
        p, dp, ddp = _poly3(coef, t)
        onep = 1.0 + p
        tp = t * dp
        v0 = clog1p(p)
        v1 = sign * tp / onep
        v2 = t * (dp + t * ddp) / onep - (tp / onep) ** 2
        return v0, v1, v2, onep

    def _step_L(self, jet, order):
        L = jet[0]
        up = L.real > 0
        if not np.any(up):
            v0, v1, v2, _ = self._log1p_poly(self.rho, L, 1.0)
            return _chain(self.log_pmu + self.mu * L + v0, self.mu + v1, v2, jet, order)
        out = [np.empty_like(L), np.empty_like(L), np.empty_like(L)]
        for mask, coef, sign, base, deg in (
            (~up, self.rho, 1.0, self.log_pmu, self.mu),
            (up, self.top, -1.0, self.log_pd, self.deg),
        ):
            idx = np.nonzero(mask)[0]
            if idx.size == 0:
                continue
            sub = _take(jet, idx)
            v0, v1, v2, _ = self._log1p_poly(coef, sub[0], sign)
            r = _chain(base + deg * sub[0] + v0, deg + v1, v2, sub, order)
            for o, c in zip(out, r):
                if c is not None:
                    o[idx] = c
        return tuple(out[k] if k <= order else None for k in range(3))

    def _h_to_L(self, jet, order):
        h = jet[0]
        one = 1.0 - h
        return _chain(clog1p(-h), -1.0 / one, -1.0 / one**2, jet, order)

    def T_jet(self, Ljet, order, check=True):
        """T = log1p(R(e^L)) with derivatives; optionally checks the domain."""
        v0, v1, v2, onep = self._log1p_poly(self.rho, Ljet[0], 1.0)
        if check:
            if np.any(np.abs(onep) < 1e-12) or np.any(
                (onep.real <= 0) & (np.abs(onep.imag) < 1e-300 + 1e-14 * np.abs(onep))
            ):
                raise DomainError("iterate left the region where log f_j is analytic")
        return _chain(v0, v1, v2, Ljet, order)

    # -------------------------------------------------------- phi via scaling
    def depth_for(self, w):
        aw = np.abs(w)
        m = np.zeros(aw.shape, dtype=np.int64)
        big = aw >= self.cfg.u_small
        if np.any(big):
            m[big] = np.floor(np.log(aw[big] / self.cfg.u_small) / self.log_a).astype(np.int64) + 1
            # guard against rounding in the log
            while True:
                bad = big & (aw / self.a ** m.astype(float) >= self.cfg.u_small)
                if not np.any(bad):
                    break
                m[bad] += 1
        if np.any(m > self.cfg.scaling_depth_max):
            raise DepthExceeded(
                f"|u| = {aw.max():.3g} needs more than {self.cfg.scaling_depth_max} halvings"
            )
        return m

    def phi_state(self, w, order):
        """State (in_h, hjet, Ljet) representing phi(w), jets w.r.t. w."""
        w = np.atleast_1d(np.asarray(w))
        cplx = w.dtype.kind == "c"
        w = w.astype(complex if cplx else float)
        m = self.depth_for(w)
        scale = self.a ** (-m.astype(float))
        s = w * scale
        h0, h1, h2 = _poly3(self.hser, s)
        hjet = (h0, h1 * scale if order >= 1 else None, h2 * scale**2 if order >= 2 else None)
        Ljet = tuple(None if c is None else np.zeros_like(c) for c in hjet)
        in_h = np.ones(w.shape, dtype=bool)
        hs = self.cfg.h_switch
        mmax = int(m.max()) if m.size else 0
        for it in range(mmax):
            act = m > it
            ih = np.nonzero(act & in_h)[0]
            il = np.nonzero(act & ~in_h)[0]
            if il.size:
                _put(Ljet, il, self._step_L(_take(Ljet, il), order))
            if ih.size:
                new = self._step_h(_take(hjet, ih), order)
                _put(hjet, ih, new)
                far = np.abs(new[0]) > hs
                if np.any(far):
                    jdx = ih[far]
                    _put(Ljet, jdx, self._h_to_L(_take(hjet, jdx), order))
                    in_h[jdx] = False
        return in_h, hjet, Ljet

    def log_state(self, in_h, hjet, Ljet, order):
        """Convert a mixed state to a pure log-representation jet."""
        out = tuple(None if c is None else c.copy() for c in Ljet)
        idx = np.nonzero(in_h)[0]
        if idx.size:
            _put(out, idx, self._h_to_L(_take(hjet, idx), order))
        return out

    def phi_jet(self, w, order):
        in_h, hjet, Ljet = self.phi_state(w, order)
        L0 = Ljet[0]
        e = np.exp(L0)
        res = [np.where(in_h, 1.0 - hjet[0], e)]
        if order >= 1:
            res.append(np.where(in_h, -hjet[1], e * Ljet[1]))
        if order >= 2:
            res.append(np.where(in_h, -hjet[2], e * (Ljet[2] + Ljet[1] ** 2)))
        while len(res) < 3:
            res.append(None)
        return tuple(res)

    def log_phi_jet(self, w, order):
        st = self.phi_state(w, order)
        return self.log_state(*st, order)

    # ------------------------------------------------------------- orbits
    def start_from_point(self, z, order):
        """State for the orbit of z itself, jets w.r.t. z."""
        z = np.atleast_1d(np.asarray(z))
        z = z.astype(complex if z.dtype.kind == "c" else float)
        if np.any(z == 0):
            raise DomainError("z = 0 is outside the domain")
        if np.any(np.abs(z) > 1.0 + 1e-12):
            raise DomainError("|z| > 1")
        if z.dtype.kind != "c" and np.any(z < 0):
            z = z.astype(complex)
        h = 1.0 - z
        ones = np.ones_like(z)
        hjet = (h, -ones if order >= 1 else None, np.zeros_like(z) if order >= 2 else None)
        in_h = np.abs(h) <= self.cfg.h_switch
        Ljet = (
            np.log(np.where(in_h, 1.0, z)),
            1.0 / z if order >= 1 else None,
            -1.0 / z**2 if order >= 2 else None,
        )
        return in_h, hjet, Ljet

    def orbit(self, state, nsteps, order):
        """Yield the log-jet of f_j for j = 0..nsteps-1 starting from state."""
        in_h, hjet, Ljet = state
        in_h = in_h.copy()
        hjet = tuple(None if c is None else c.copy() for c in hjet)
        Ljet = tuple(None if c is None else c.copy() for c in Ljet)
        hs = self.cfg.h_switch
        for j in range(nsteps):
            cur = self.log_state(in_h, hjet, Ljet, order)
            yield cur
            if j == nsteps - 1:
                break
            ih = np.nonzero(in_h)[0]
            il = np.nonzero(~in_h)[0]
            if il.size:
                sub = (cur[0][il],) + tuple(None if c is None else c[il] for c in cur[1:])
                _put(Ljet, il, self._step_L(sub, order))
            if ih.size:
                new = self._step_h(_take(hjet, ih), order)
                _put(hjet, ih, new)
                far = np.abs(new[0]) > hs
                if np.any(far):
                    jdx = ih[far]
                    _put(Ljet, jdx, self._h_to_L(_take(hjet, jdx), order))
                    in_h[jdx] = False

    # ------------------------------------------------ real log-space helpers
    def log_T_real(self, L):
        """For real L: log T, T'/T and T''/T as functions of L (d/dL).

        Safe when e^L underflows; T = log1p(R(e^L)) is never formed directly.
        """
        lw = self.log_rho[None, :] + L[:, None] * self.l_idx[None, :]
        top = lw.max(axis=1)
        wts = np.exp(lw - top[:, None])
        sw = wts.sum(axis=1)
        logR = top + np.log(sw)
        El = (wts * self.l_idx).sum(axis=1) / sw
        El2 = (wts * self.l_idx**2).sum(axis=1) / sw
        R = np.exp(logR)
        small = R < 1e-5
        lratio = np.where(small, -R / 2 + 5 * R**2 / 24, 0.0)
        big = ~small
        if np.any(big):
            lratio[big] = np.log(np.log1p(R[big]) / R[big])
        q = np.exp(-lratio)  # R / log1p(R)
        r1 = El / (1 + R) * q
        r2 = (El2 / (1 + R) - El**2 * R / (1 + R) ** 2) * q
        return logR + lratio, r1, r2
