"""Revenue estimation: vectorized Monte Carlo, a stratified rare-event estimator
for the adaptive attack, and a deterministic quadrature oracle for it.

Two engines are provided and kept in exact agreement:

  * "simulate" runs the full message-level auction per sampled value profile.
    It is the reference semantics and is used directly by the structural and
    game-theoretic tests.
  * "vector" evaluates the same outcome arithmetic over numpy arrays for the
    strategy families whose resolution is closed-form (honest, shill with the
    stock reveal policies, their lifts, and the adaptive deviation). The test
    suite asserts per-profile equality of the two engines, so the fast path
    carries the simulator's semantics, not a reimplementation of its own.

Sampling is chunked over counter-based streams (see seeding), so an estimate
is a pure function of (config, strategy, samples, seed) regardless of how
chunks are scheduled, and different strategies under one seed share identical
value profiles (paired comparisons by construction).

The adaptive attack needs tail resolution: profitable thresholds sit where
P[v_A >= T] is small. The estimator stratifies on v_A: the below-threshold
stratum coincides with honest play and contributes exactly zero, and the tail
stratum is sampled by conditional inverse-survival draws, weighted by the
closed-form tail probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .distributions import (
    InfiniteReserveError,
    ValueDistribution,
    collateral as collateral_level,
    optimal_revenue,
    reserve_price,
    virtual_value,
)
from .estimate import ChunkAccumulator, Estimate
from .protocol import AuctionConfig, run_auction
from .seeding import chunk_bounds, chunk_uniforms, derive_seed
from .strategies import (
    ALWAYS_REVEAL,
    WITHHOLD_IF_WINNING,
    AdaptiveReserve,
    AlwaysReveal,
    Honest,
    Lifted,
    ShillBroadcast,
    Truthful,
    WithholdIf,
)

__all__ = [
    "estimate_revenue",
    "estimate_paired_difference",
    "estimate_myerson_gap",
    "estimate_adaptive_gain",
    "adaptive_gain_quadrature",
    "adaptive_net_delta",
    "credibility_suite",
    "CredibilityRow",
    "CredibilityReport",
    "attack_sweep",
    "AttackRow",
    "simulate_profile_net",
]

MIN_SAMPLES = 1_000
QUAD_ABS_TOL = 1e-8


# ---------------------------------------------------------------------------
# Vectorized outcome arithmetic (verified against the simulator)
# ---------------------------------------------------------------------------

def _shill_net(values: np.ndarray, reserve: float, collateral: float,
               false_bids: Sequence[float], withhold_winning: bool) -> np.ndarray:
    """Auctioneer net per profile for truthful buyers and a shill strategy."""
    n = values.shape[1]
    top = values.max(axis=1)
    if n >= 2:
        second = np.partition(values, n - 2, axis=1)[:, n - 2]
    else:
        second = np.zeros_like(top)
    if not false_bids:
        price = np.maximum(reserve, second)
        return np.where(top > reserve, price, 0.0)
    fb = np.asarray(false_bids, dtype=float)
    if not withhold_winning:
        fmax = fb.max()
        price = np.maximum(reserve, np.maximum(second, fmax))
        real_wins = top >= fmax  # ties break to the lower (real) index
        return np.where(real_wins & (top > reserve), price, 0.0)
    withheld = fb[None, :] > top[:, None]
    withheld_count = withheld.sum(axis=1)
    revealed_false_max = np.max(np.where(withheld, -np.inf, fb[None, :]), axis=1)
    price = np.maximum(reserve, np.maximum(second, revealed_false_max))
    net = np.where(top > reserve, price, 0.0)
    return net - collateral * withheld_count


def adaptive_net_delta(values: np.ndarray, reserve: float, threshold: float,
                       collateral: float) -> np.ndarray:
    """Adaptive-minus-honest auctioneer net per (v_A, v_B) profile.

    Zero off the stratum {v_A >= T}. On it: +collateral when B outbids the
    false bid v_A + f (first-price extraction), -collateral when B lands in
    (v_A, v_A + f] (the false deposit is forfeited to B), zero otherwise.
    """
    a = values[:, 0]
    b = values[:, 1]
    active = a >= threshold
    plus = active & (b > a + collateral)
    minus = active & (b > a) & (b <= a + collateral) & (b > reserve)
    return collateral * plus.astype(float) - collateral * minus.astype(float)


def _vector_net(values: np.ndarray, config: AuctionConfig, strategy) -> np.ndarray:
    if isinstance(strategy, Lifted):
        strategy = strategy.inner
    if isinstance(strategy, Honest):
        return _shill_net(values, config.reserve, config.collateral, (), False)
    if isinstance(strategy, ShillBroadcast):
        policy = strategy.reveal_policy
        if isinstance(policy, AlwaysReveal):
            withhold = False
        elif isinstance(policy, WithholdIf) and policy is WITHHOLD_IF_WINNING:
            withhold = True
        else:
            raise ValueError(f"no vector path for reveal policy {policy!r}; use engine='simulate'")
        return _shill_net(values, config.reserve, config.collateral,
                          strategy.false_bids, withhold)
    if isinstance(strategy, AdaptiveReserve):
        honest = _shill_net(values, config.reserve, config.collateral, (), False)
        return honest + adaptive_net_delta(values, config.reserve, strategy.threshold,
                                           config.collateral)
    raise ValueError(f"no vector path for {type(strategy).__name__}; use engine='simulate'")


def simulate_profile_net(config: AuctionConfig, strategy, values_row: Sequence[float],
                         run_seed: int) -> float:
    """Reference path: one full message-level run for one value profile."""
    buyers = [Truthful(float(v)) for v in values_row]
    run_config = replace(config, seed=run_seed)
    outcome, _ = run_auction(run_config, buyers, strategy)
    return outcome.auctioneer_net


def _value_stream_seed(seed: int) -> int:
    return derive_seed(seed, "values")


def _iter_profile_chunks(dist: ValueDistribution, n: int, samples: int, seed: int):
    stream = _value_stream_seed(seed)
    for chunk, start, stop in chunk_bounds(samples):
        u = chunk_uniforms(stream, chunk, stop - start, n)
        yield start, np.asarray(dist.quantile(u), dtype=float)


# ---------------------------------------------------------------------------
# Revenue estimation
# ---------------------------------------------------------------------------

def estimate_revenue(config: AuctionConfig, strategy, samples: int, seed: int,
                     engine: str = "vector") -> Estimate:
    """Mean auctioneer net over i.i.d. truthful value profiles.

    Per-sample value draws depend only on (seed, sample index); estimates for
    different strategies under one seed are paired on identical profiles.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"samples must be >= {MIN_SAMPLES}, got {samples}")
    if engine not in ("vector", "simulate"):
        raise ValueError(f"unknown engine {engine!r}")
    acc = ChunkAccumulator()
    if engine == "vector":
        for _, values in _iter_profile_chunks(config.dist, config.n, samples, seed):
            acc.add(_vector_net(values, config, strategy))
    else:
        for start, values in _iter_profile_chunks(config.dist, config.n, samples, seed):
            nets = [simulate_profile_net(config, strategy, row,
                                         derive_seed(seed, "run", start + k))
                    for k, row in enumerate(values)]
            acc.add(np.asarray(nets))
    return acc.result()


def estimate_paired_difference(config: AuctionConfig, strategy_a, strategy_b,
                               samples: int, seed: int) -> Estimate:
    """Mean of (net_a - net_b) over shared value profiles (common random numbers)."""
    acc = ChunkAccumulator()
    for _, values in _iter_profile_chunks(config.dist, config.n, samples, seed):
        acc.add(_vector_net(values, config, strategy_a) - _vector_net(values, config, strategy_b))
    return acc.result()


def estimate_myerson_gap(config: AuctionConfig, samples: int, seed: int) -> Estimate:
    """Paired per-profile gap (payments minus allocated virtual value) under honesty.

    Myerson's identity makes the expectation zero for the truthful auction;
    the returned estimate carries the paired standard error for a 3-sigma test.
    """
    acc = ChunkAccumulator()
    for _, values in _iter_profile_chunks(config.dist, config.n, samples, seed):
        top = values.max(axis=1)
        n = values.shape[1]
        if n >= 2:
            second = np.partition(values, n - 2, axis=1)[:, n - 2]
        else:
            second = np.zeros_like(top)
        sale = top > config.reserve
        payments = np.where(sale, np.maximum(config.reserve, second), 0.0)
        welfare = np.where(sale, virtual_value(config.dist, top), 0.0)
        acc.add(payments - welfare)
    return acc.result()


# ---------------------------------------------------------------------------
# The adaptive attack: stratified estimator and quadrature oracle
# ---------------------------------------------------------------------------

def estimate_adaptive_gain(dist: ValueDistribution, threshold: float, collateral: float,
                           samples: int, seed: int, engine: str = "vector",
                           stratified: bool = True) -> Estimate:
    """E[adaptive net - honest net] for the two-buyer centralized deviation.

    Stratified on v_A: below the threshold the deviation coincides with honest
    play and contributes exactly zero (not sampled); the tail stratum draws
    v_A by conditional inverse-survival sampling and is weighted by the
    closed-form P[v_A >= T]. engine="simulate" runs paired full auctions per
    profile instead of the vectorized case arithmetic.
    """
    reserve = reserve_price(dist)
    if math.isinf(reserve):
        raise InfiniteReserveError(f"{dist.kind} has an infinite reserve")
    if threshold < reserve - 1e-9:
        raise ValueError(f"threshold {threshold} below reserve {reserve}")
    if engine not in ("vector", "simulate"):
        raise ValueError(f"unknown engine {engine!r}")
    weight = float(dist.sf(threshold)) if stratified else 1.0
    if stratified and weight == 0.0:
        return Estimate(mean=0.0, std_error=0.0, samples=int(samples))

    adaptive = AdaptiveReserve(threshold=threshold)
    config = None
    if engine == "simulate":
        config = AuctionConfig(n=2, dist=dist, reserve=reserve, collateral=collateral,
                               mode="centralized", seed=0)
    acc = ChunkAccumulator()
    stream = _value_stream_seed(seed)
    for chunk, start, stop in chunk_bounds(samples):
        u = chunk_uniforms(stream, chunk, stop - start, 2)
        if stratified:
            v_a = np.asarray(dist.sample_tail(threshold, u[:, 0]), dtype=float)
        else:
            v_a = np.asarray(dist.quantile(u[:, 0]), dtype=float)
        v_b = np.asarray(dist.quantile(u[:, 1]), dtype=float)
        values = np.column_stack([v_a, v_b])
        if engine == "vector":
            acc.add(adaptive_net_delta(values, reserve, threshold, collateral))
        else:
            deltas = []
            for k, row in enumerate(values):
                run_seed = derive_seed(seed, "attack", start + k)
                net_dev = simulate_profile_net(config, adaptive, row, run_seed)
                net_honest = simulate_profile_net(config, Honest(), row, run_seed)
                deltas.append(net_dev - net_honest)
            acc.add(np.asarray(deltas))
    cond = acc.result()
    return Estimate(mean=weight * cond.mean, std_error=weight * cond.std_error,
                    samples=cond.samples)


def adaptive_gain_quadrature(dist: ValueDistribution, threshold: float,
                             collateral: float) -> float:
    """Deterministic oracle for the adaptive gain.

    The double integral of the net difference over (v_A, v_B) on the stratum
    {v_A >= T} is taken in quantile space; for each v_A the inner v_B integral
    splits at the two analytic case boundaries (v_A and v_A + f), where the
    integrand is piecewise constant, leaving a smooth one-dimensional outer
    integral over the tail of v_A.
    """
    reserve = reserve_price(dist)
    if math.isinf(reserve):
        raise InfiniteReserveError(f"{dist.kind} has an infinite reserve")
    if threshold < reserve - 1e-9:
        raise ValueError(f"threshold {threshold} below reserve {reserve}")
    weight = float(dist.sf(threshold))
    if weight == 0.0:
        return 0.0

    def inner(s: float) -> float:
        a = float(dist.isf(s))
        lo = max(a, reserve)
        p_plus = float(dist.sf(a + collateral))
        p_minus = max(0.0, float(dist.sf(lo)) - p_plus)
        return collateral * (p_plus - p_minus)

    val, err = integrate.quad(inner, 0.0, weight, epsabs=QUAD_ABS_TOL * 0.1,
                              epsrel=1e-10, limit=400)
    if err > QUAD_ABS_TOL:
        raise RuntimeError(f"quadrature tolerance not reached: error estimate {err}")
    return float(val)


# ---------------------------------------------------------------------------
# Credibility experiment: a deviation grid against the optimal benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CredibilityRow:
    strategy: str
    estimate: Estimate
    bound: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class CredibilityReport:
    """Per-deviation revenue estimates against Rev(D^n) + 3 SE."""

    collateral: float
    optimal_revenue: float
    rows: tuple
    worst_margin: float
    all_pass: bool
    violations: tuple

    def flagged(self) -> bool:
        return len(self.violations) > 0


def credibility_suite(dist: ValueDistribution, alpha: float, n: int,
                      deviation_quantiles: Sequence[float], samples: int, seed: int,
                      collateral_override: Optional[float] = None,
                      engine: str = "vector") -> CredibilityReport:
    """Estimate revenue for honest play and a grid of shill deviations.

    The grid crosses false-bid levels (quantiles of D) with the two stock
    reveal policies. Each estimate is compared against the quadrature optimal
    revenue plus 3 standard errors; with the collateral formula in force all
    rows must pass, and with a deliberately reduced deposit the report flags
    the deviations that beat the benchmark (informational).
    """
    f_amount = collateral_override if collateral_override is not None \
        else collateral_level(dist, n, alpha)
    reserve = reserve_price(dist)
    config = AuctionConfig(n=n, dist=dist, reserve=reserve, collateral=f_amount,
                           mode="broadcast", seed=0)
    rev = optimal_revenue(dist, n).mean
    strategies = [Honest()]
    for u in deviation_quantiles:
        bid = float(dist.quantile(u))
        for policy in (ALWAYS_REVEAL, WITHHOLD_IF_WINNING):
            strategies.append(ShillBroadcast(false_bids=(bid,), reveal_policy=policy))
    rows = []
    for strategy in strategies:
        est = estimate_revenue(config, strategy, samples, seed, engine=engine)
        bound = rev + 3.0 * est.std_error
        margin = bound - est.mean
        rows.append(CredibilityRow(strategy=strategy.describe(), estimate=est,
                                   bound=bound, margin=margin, passed=margin >= 0.0))
    worst = min(row.margin for row in rows)
    violations = tuple(row.strategy for row in rows if not row.passed)
    return CredibilityReport(collateral=f_amount, optimal_revenue=rev, rows=tuple(rows),
                             worst_margin=worst, all_pass=not violations,
                             violations=violations)


# ---------------------------------------------------------------------------
# Attack sweep over thresholds (estimator next to its oracle)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackRow:
    threshold: float
    estimate: Estimate
    quadrature: float
    significant: bool       # estimate > 0 at 3 SE
    oracle_rel_err: Optional[float]


def attack_sweep(dist: ValueDistribution, collateral: float,
                 thresholds: Sequence[float], samples: int, seed: int,
                 engine: str = "vector") -> list:
    """Stratified gain estimates and quadrature values over a threshold sweep."""
    rows = []
    for i, threshold in enumerate(thresholds):
        est = estimate_adaptive_gain(dist, threshold, collateral, samples,
                                     derive_seed(seed, "T", i), engine=engine)
        quad = adaptive_gain_quadrature(dist, threshold, collateral)
        rel = abs(est.mean - quad) / abs(quad) if quad != 0.0 else None
        rows.append(AttackRow(threshold=float(threshold), estimate=est, quadrature=quad,
                              significant=est.mean > 3.0 * est.std_error,
                              oracle_rel_err=rel))
    return rows
