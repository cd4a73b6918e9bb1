"""Generation-size simulation of the branching process.

Each generation is advanced by one multinomial draw per tree: Z_k individuals
split over the offspring support.  That is equal in law to sampling every
individual, at a cost independent of Z_k.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhausted, DepthOverflow
from .tail import LogProb, Method

INT_LIMIT = np.iinfo(np.int64).max // 4
DEFAULT_CHUNK = 1 << 17


@dataclass
class TreeRecord:
    gen_sizes: list
    K: int | None
    M: dict  # j -> count, over offspring sizes j > mu
    M_total: int
    M_excess: int
    W_hat: float
    depth: int
    mean: float = field(repr=False, default=1.0)
    var_w: float = field(repr=False, default=0.0)


@dataclass(frozen=True)
class WEstimate:
    w_hat: float
    se: float


def var_w(dist):
    """Var W = Var N / (a**2 - a)."""
    return dist.var / (dist.mean**2 - dist.mean)


def _check_size(Z, d):
    if Z.size and int(Z.max()) > INT_LIMIT // max(d, 1):
        raise DepthOverflow("generation size leaves the int64 range")


def sample_tree(dist, depth, rng) -> TreeRecord:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    rng = np.random.default_rng(rng)
    support = dist.support
    pvals = dist.weights
    mu = dist.mu
    extra = support > mu
    sizes = [1]
    K = None
    M = {}
    z = 1
    for k in range(depth):
        _check_size(np.array([z]), dist.max_support)
        counts = rng.multinomial(z, pvals)
        z = int(counts @ support)
        sizes.append(z)
        if K is None and z > mu ** (k + 1):
            K = k + 1
            M = {int(j): int(c) for j, c in zip(support[extra], counts[extra])}
    M_total = sum(M.values())
    M_excess = sum((j - mu) * c for j, c in M.items())
    return TreeRecord(
        gen_sizes=sizes,
        K=K,
        M=M,
        M_total=M_total,
        M_excess=M_excess,
        W_hat=z / dist.mean**depth,
        depth=depth,
        mean=dist.mean,
        var_w=var_w(dist),
    )


def estimate_W(record: TreeRecord) -> WEstimate:
    """Z_depth / a**depth, with the conditional standard error given Z_depth."""
    z = record.gen_sizes[-1]
    scale = record.mean**record.depth
    return WEstimate(w_hat=z / scale, se=math.sqrt(z * record.var_w) / scale)


@dataclass
class Batch:
    """Per-tree summaries for a batch of simulated trees."""

    K: np.ndarray  # 0 where K did not occur within depth
    M: np.ndarray  # (n, #support above mu) counts at generation K-1
    Z_final: np.ndarray  # Z_depth (only meaningful where alive)
    alive: np.ndarray  # not rejected early
    sizes: np.ndarray | None = None


def simulate_batch(dist, depth, n, rng, reject_above=None, keep_sizes=False) -> Batch:
    """Simulate ``n`` trees to ``depth``.

    With ``reject_above`` set, a tree is dropped as soon as
    Z_k mu**(depth-k) >= reject_above, since Z_depth can then no longer fall below it.
    """
    support = dist.support
    pvals = dist.weights
    mu = dist.mu
    extra = support > mu
    Z = np.ones(n, dtype=np.int64)
    K = np.zeros(n, dtype=np.int64)
    M = np.zeros((n, int(extra.sum())), dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    idx = np.arange(n)
    sizes = np.zeros((n, depth + 1), dtype=np.int64) if keep_sizes else None
    if keep_sizes:
        sizes[:, 0] = 1
    for k in range(depth):
        if idx.size == 0:
            break
        zk = Z[idx]
        _check_size(zk, dist.max_support)
        counts = rng.multinomial(zk, pvals)
        znew = counts @ support
        first = (K[idx] == 0) & (znew > mu ** (k + 1))
        if np.any(first):
            K[idx[first]] = k + 1
            M[idx[first]] = counts[first][:, extra]
        Z[idx] = znew
        if keep_sizes:
            sizes[idx, k + 1] = znew
        if reject_above is not None:
            floor_final = znew.astype(float) * float(mu) ** (depth - k - 1)
            drop = floor_final >= reject_above
            if np.any(drop):
                alive[idx[drop]] = False
                idx = idx[~drop]
    return Batch(K=K, M=M, Z_final=Z, alive=alive, sizes=sizes)


def chunk_rngs(seed, trials, chunk=DEFAULT_CHUNK):
    """Independent generators per chunk, fixed by (seed, chunk index) alone."""
    nchunks = -(-trials // chunk)
    for i in range(nchunks):
        size = min(chunk, trials - i * chunk)
        yield size, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))


@dataclass
class ConditionalExperiment:
    eps: float
    depth: int
    trials: int
    accepted: int
    k_histogram: dict  # K -> count among accepted trees (None: K beyond depth)
    excess_samples: list
    acceptance_logprob: LogProb | None
    seed: int
    preflight_expected: float | None = None

    def k_tail_count(self, k):
        """Accepted trees with K > k (including K beyond depth)."""
        return sum(c for kk, c in self.k_histogram.items() if kk is None or kk > k)

    def to_dict(self):
        lp = self.acceptance_logprob
        return {
            "eps": self.eps,
            "depth": self.depth,
            "trials": self.trials,
            "accepted": self.accepted,
            "seed": self.seed,
            "k_histogram": {
                ("absent" if k is None else str(k)): v
                for k, v in sorted(self.k_histogram.items(), key=lambda kv: (kv[0] is None, kv[0] or 0))
            },
            "acceptance_logprob": None
            if lp is None
            else {"log_value": lp.log_value, "abs_err_log": lp.abs_err_log, "method": str(lp.method)},
            "preflight_expected": self.preflight_expected,
            "excess_count": len(self.excess_samples),
        }


def _conditional_chunk(args):
    dist, eps, depth, size, rng = args
    thr = eps * dist.mean**depth
    b = simulate_batch(dist, depth, size, rng, reject_above=thr)
    acc = b.alive & (b.Z_final.astype(float) < thr)
    return b.K[acc], b.M[acc]


def run_conditional(
    dist,
    eps,
    depth,
    trials,
    rng_seed,
    cfg=None,
    threads=1,
    chunk=DEFAULT_CHUNK,
    preflight=True,
    allow_empty=False,
) -> ConditionalExperiment:
    """Rejection sampling of trees with W_hat = Z_depth / a**depth < eps.

    Results depend only on (dist, eps, depth, trials, rng_seed, chunk), never
    on ``threads``.
    """
    from . import analytic, scales, tail

    if cfg is None:
        cfg = analytic.DEFAULT_CONFIG
    expected = None
    if preflight:
        lp = tail.tail_sum_numeric(dist, cfg, eps, 1)
        expected = trials * math.exp(lp.log_value)
        if expected < 100:
            warnings.warn(
                f"expected about {expected:.3g} acceptances at eps={eps}, trials={trials}",
                RuntimeWarning,
                stacklevel=2,
            )

    jobs = [(dist, eps, depth, size, rng) for size, rng in chunk_rngs(rng_seed, trials, chunk)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(_conditional_chunk, jobs))
    else:
        parts = [_conditional_chunk(j) for j in jobs]
    K = np.concatenate([p[0] for p in parts])
    M = np.concatenate([p[1] for p in parts])
    accepted = int(K.size)

    hist = {}
    ks, cnt = np.unique(K, return_counts=True)
    for k, c in zip(ks, cnt):
        hist[None if k == 0 else int(k)] = int(c)

    excess = []
    if dist.mu >= 2 and dist.lam is not None and accepted:
        sc = scales.compute_scales(dist, cfg, eps, 0, require_n=False)
        extra = dist.support[dist.support > dist.mu] - dist.mu
        has_k = K > 0
        exc = M[has_k] @ extra
        norm = np.array([tail.excess_normalizer(dist, eps, sc.gamma, int(k)) for k in K[has_k]])
        excess = (exc / norm).tolist()

    if accepted == 0:
        if not allow_empty:
            raise BudgetExhausted(f"no acceptances in {trials} trials at eps={eps}")
        lp_mc = None
    else:
        phat = accepted / trials
        se = math.sqrt((1 - phat) / accepted)
        lp_mc = LogProb(math.log(phat), se, Method.MONTE_CARLO, {"trials": trials})
    return ConditionalExperiment(
        eps=eps,
        depth=depth,
        trials=trials,
        accepted=accepted,
        k_histogram=hist,
        excess_samples=excess,
        acceptance_logprob=lp_mc,
        seed=rng_seed,
        preflight_expected=expected,
    )


def unconditioned_K_pmf(dist, k_max) -> dict:
    """Exact law of K: P(K > k) = p_mu**((mu**k - 1)/(mu - 1)), or p_1**k when mu = 1."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    mu = dist.mu
    lp = math.log(dist.p_mu)

    def log_tail(k):
        if mu == 1:
            return k * lp
        return (mu**k - 1) / (mu - 1) * lp

    out = {}
    for k in range(1, k_max + 1):
        a, b = log_tail(k - 1), log_tail(k)
        out[k] = math.exp(a) * -math.expm1(b - a)
    return out
