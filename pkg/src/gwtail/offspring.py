"""Offspring laws with finite support and no mass at zero."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DomainError, NotNormalized, Subcritical, ZeroOffspringMass

NORM_TOL = 1e-12
# slack on |z| <= 1 so that points on the unit circle survive rounding
_DISK_SLACK = 1e-12


@dataclass(frozen=True)
class OffspringDistribution:
    """Validated offspring law.

    ``probs`` is a sorted tuple of ``(j, p_j)`` pairs.  Build instances with
    :func:`new_distribution`, which validates and renormalizes.
    """

    probs: tuple
    mean: float = field(compare=False)
    var: float = field(compare=False)
    mu: int = field(compare=False)
    lam: int | None = field(compare=False)
    beta: float | None = field(compare=False)
    alpha: float | None = field(compare=False)

    @property
    def support(self) -> np.ndarray:
        return np.array([j for j, _ in self.probs], dtype=np.int64)

    @property
    def weights(self) -> np.ndarray:
        return np.array([p for _, p in self.probs], dtype=float)

    @property
    def max_support(self) -> int:
        return self.probs[-1][0]

    def p(self, j: int) -> float:
        for k, pk in self.probs:
            if k == j:
                return pk
        return 0.0

    @property
    def p_mu(self) -> float:
        return self.probs[0][1]

    def as_dict(self) -> dict:
        return {j: p for j, p in self.probs}

    def coefficients(self) -> np.ndarray:
        """Dense coefficient vector c with f(z) = sum_i c[i] z**i."""
        c = np.zeros(self.max_support + 1)
        for j, p in self.probs:
            c[j] = p
        return c

    def __repr__(self):
        body = ", ".join(f"{j}: {p!r}" for j, p in self.probs)
        return f"OffspringDistribution({{{body}}})"


def new_distribution(probs: Mapping[int, float]) -> OffspringDistribution:
    if not probs:
        raise ValueError("offspring law is empty")
    items = []
    for k, v in probs.items():
        j = int(k)
        if j != k:
            raise ValueError(f"offspring count {k!r} is not an integer")
        if j == 0:
            raise ZeroOffspringMass("p_0 > 0 is not allowed (the tree could die out)")
        if j < 0:
            raise ValueError(f"negative offspring count {j}")
        p = float(v)
        if not (p > 0.0 and math.isfinite(p)):
            raise ValueError(f"p_{j} = {v!r} must be a positive finite number")
        items.append((j, p))
    items.sort()
    if len({j for j, _ in items}) != len(items):
        raise ValueError("duplicate offspring counts")

    total = math.fsum(p for _, p in items)
    if abs(total - 1.0) > NORM_TOL:
        raise NotNormalized(f"probabilities sum to {total!r}")
    items = [(j, p / total) for j, p in items]
    if any(p > 1.0 for _, p in items):
        raise ValueError("probability above 1")

    mean = math.fsum(j * p for j, p in items)
    if mean <= 1.0:
        raise Subcritical(f"mean offspring {mean!r} <= 1")
    var = math.fsum(p * (j - mean) ** 2 for j, p in items)
    mu = items[0][0]
    lam = items[1][0] if len(items) > 1 else None
    beta = alpha = None
    if mu >= 2:
        beta = math.log(mu) / math.log(mean)
        # a one-point law has beta = 1 and no finite alpha
        alpha = beta / (1.0 - beta) if lam is not None else None
    return OffspringDistribution(
        probs=tuple(items), mean=mean, var=var, mu=mu, lam=lam, beta=beta, alpha=alpha
    )


def _check_disk(z):
    if np.any(np.abs(z) > 1.0 + _DISK_SLACK):
        raise DomainError("pgf evaluated outside the closed unit disk")


def _horner(coef, z):
    out = np.zeros_like(z) + coef[-1]
    for c in coef[-2::-1]:
        out = out * z + c
    return out


def _scalarize(z_in, out):
    if np.ndim(z_in) == 0:
        out = out[()]
        if isinstance(z_in, (int, float, np.floating, np.integer)):
            return float(out.real)
        return complex(out)
    return out


def _as_array(z):
    z = np.asarray(z)
    if z.dtype.kind not in "fc":
        z = z.astype(float)
    return z


def pgf_eval(dist: OffspringDistribution, z):
    """f(z) = sum_j p_j z**j on the closed unit disk."""
    za = _as_array(z)
    _check_disk(za)
    return _scalarize(z, _horner(dist.coefficients(), za))


def pgf_iterate(dist: OffspringDistribution, m: int, z):
    """m-fold iterate f_m(z), with f_0 the identity."""
    if m < 0:
        raise ValueError("m must be >= 0")
    za = _as_array(z)
    _check_disk(za)
    coef = dist.coefficients()
    out = za.copy()
    for _ in range(m):
        out = _horner(coef, out)
    return _scalarize(z, out)


def pgf_prime(dist: OffspringDistribution, z, order: int = 1):
    """Exact first or second derivative of f."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    za = _as_array(z)
    _check_disk(za)
    coef = np.polynomial.polynomial.polyder(dist.coefficients(), order)
    return _scalarize(z, _horner(coef, za))
