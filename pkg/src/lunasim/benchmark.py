"""Clairvoyant benchmark, dynamic regret accounting, and variation tracking.

The per-round benchmark is the supremum over admissible prices of
(w - c) * q(w; F-hat_t), where F-hat_t is the retailer's perceived
distribution for the round.  For discrete perceived distributions the
supremum is generally attained only in the limit approaching a breakpoint
price from below, so the benchmark reports the (epsilon-optimal) supremum
value; regret is therefore conservative for the supplier.
"""

from __future__ import annotations

import math

import numpy as np

from lunasim.market import (
    MarketParams,
    ParametricCdf,
    StepCdf,
    best_response_order,
)

__all__ = [
    "BenchmarkError",
    "clairvoyant_profit",
    "clairvoyant_profit_finite",
    "best_response_orders",
    "RegretLedger",
    "VariationTrace",
]

_REGRET_TOL = 1e-9
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class BenchmarkError(RuntimeError):
    """Benchmark/ledger precondition violated (an oracle bug, not noise)."""


def _discrete_clairvoyant(cdf: StepCdf, mp: MarketParams) -> tuple[float, float]:
    """Closed form over breakpoint candidates: pricing just below
    s*(1 - F(y_m)) sells y_{m+1}, so the supremum profit is
    max_m (s*(1 - p_{m-1}) - c) * y_m with p_{-1} = 0."""
    prev = np.concatenate(([0.0], cdf.cum[:-1]))
    profits = (mp.s * (1.0 - prev) - mp.c) * cdf.support
    k = int(np.argmax(profits))
    if profits[k] <= 0.0:
        return 0.0, mp.s  # no positive margin: the zero-order price is best
    return float(profits[k]), float(mp.s * (1.0 - prev[k]))


def _continuous_clairvoyant(cdf, mp: MarketParams) -> tuple[float, float]:
    """Coarse grid over [c, s] plus golden-section refinement of the best
    brackets; tolerance 1e-6 * s * xi_bar."""

    def profit(w: float) -> float:
        return (w - mp.c) * best_response_order(cdf, w, mp)

    grid = np.linspace(mp.c, mp.s, 512)
    vals = np.array([profit(w) for w in grid])
    order = np.argsort(vals)[::-1][:3]
    best_v = float(vals.max())
    best_w = float(grid[int(np.argmax(vals))])
    tol = 1e-7 * mp.s
    for k in order:
        a = grid[max(k - 1, 0)]
        b = grid[min(k + 1, grid.size - 1)]
        x1 = b - _GOLDEN * (b - a)
        x2 = a + _GOLDEN * (b - a)
        f1, f2 = profit(x1), profit(x2)
        while b - a > tol:
            if f1 < f2:
                a, x1, f1 = x1, x2, f2
                x2 = a + _GOLDEN * (b - a)
                f2 = profit(x2)
            else:
                b, x2, f2 = x2, x1, f1
                x1 = b - _GOLDEN * (b - a)
                f1 = profit(x1)
        w_loc = x1 if f1 >= f2 else x2
        v_loc = max(f1, f2)
        if v_loc > best_v:
            best_v, best_w = v_loc, float(w_loc)
    return max(best_v, 0.0), best_w


def clairvoyant_profit(cdf, mp: MarketParams) -> tuple[float, float]:
    """Supremum per-round profit against the round's perceived distribution,
    and an (epsilon-)optimal price attaining it."""
    if isinstance(cdf, StepCdf):
        return _discrete_clairvoyant(cdf, mp)
    return _continuous_clairvoyant(cdf, mp)


def best_response_orders(cdf, prices: np.ndarray, mp: MarketParams) -> np.ndarray:
    """Vectorized best response across a price array."""
    targets = 1.0 - prices / mp.s
    if isinstance(cdf, StepCdf):
        idx = np.searchsorted(cdf.cum, targets, side="left")
        orders = cdf.support[np.minimum(idx, cdf.support.size - 1)]
        return np.where(targets <= 0.0, 0.0, orders)
    return np.array([best_response_order(cdf, float(w), mp) for w in prices])


def clairvoyant_profit_finite(cdf, prices: np.ndarray, mp: MarketParams,
                              ) -> tuple[float, float]:
    """Benchmark restricted to a finite admissible price set (attained max)."""
    orders = best_response_orders(cdf, prices, mp)
    profits = (prices - mp.c) * orders
    k = int(np.argmax(profits))
    return float(profits[k]), float(prices[k])


class RegretLedger:
    """Per-round benchmark/realized profits and cumulative dynamic regret."""

    __slots__ = ("benchmark", "realized", "cumulative", "_cum")

    def __init__(self) -> None:
        self.benchmark: list[float] = []
        self.realized: list[float] = []
        self.cumulative: list[float] = []
        self._cum = 0.0

    def update(self, benchmark: float, realized: float) -> float:
        if benchmark < realized - _REGRET_TOL:
            raise BenchmarkError(
                f"benchmark {benchmark} below realized profit {realized}: "
                "clairvoyant oracle bug")
        inst = benchmark - realized
        self.benchmark.append(benchmark)
        self.realized.append(realized)
        self._cum += inst
        self.cumulative.append(self._cum)
        return inst

    @property
    def total(self) -> float:
        return self._cum

    def instantaneous(self) -> np.ndarray:
        return np.asarray(self.benchmark) - np.asarray(self.realized)


class VariationTrace:
    """Consecutive Kolmogorov distances of the perceived sequence, with
    partial sums keyed by the supplier's epoch annotations."""

    __slots__ = ("entries", "epochs", "_total")

    def __init__(self) -> None:
        self.entries: list[float] = []
        self.epochs: list[int] = []
        self._total = 0.0

    def update(self, d: float, epoch: int = 0) -> None:
        if d < 0.0:
            raise BenchmarkError(f"negative distance {d}")
        self.entries.append(d)
        self.epochs.append(epoch)
        self._total += d

    @property
    def total(self) -> float:
        return self._total

    def running(self) -> np.ndarray:
        return np.cumsum(self.entries) if self.entries else np.empty(0)

    def epoch_sum(self, epoch: int) -> float:
        return sum(d for d, e in zip(self.entries, self.epochs) if e == epoch)
