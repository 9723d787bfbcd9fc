"""Retailer inventory policies.

Each policy consumes the wholesale price offered in the current round plus
its own demand history, and emits a perceived demand distribution together
with the best-response order to that distribution.  The emitted pair is the
policy's whole observable behaviour: the simulation engine re-checks every
round that order == best response to the perceived CDF.

Policies: sample average approximation (empirical CDF), distributionally
robust optimization over a phi-divergence ball, maximum likelihood for
exponential-family demand, operational statistics, and a gamma-prior Bayesian
rule.  A scripted retailer (exogenous perceived sequence) and a stationary
full-knowledge retailer support benchmarking.
"""

from __future__ import annotations

import math
from bisect import bisect_left, insort
from dataclasses import dataclass

import numpy as np

from lunasim.dro import DIVERGENCES, dro_worst_case
from lunasim.market import (
    MarketError,
    MarketParams,
    ParametricCdf,
    StepCdf,
    best_response_order,
)

__all__ = [
    "PerceivedState",
    "saa_perceive",
    "chi2_quantile_1dof",
    "dro_epsilon",
    "mle_perceive",
    "opstats_shape",
    "opstats_order",
    "bayes_order",
    "uniform_fallback",
    "SaaRetailer",
    "DroRetailer",
    "MleRetailer",
    "OpStatsRetailer",
    "BayesRetailer",
    "ScriptedRetailer",
    "StationaryRetailer",
]


@dataclass(frozen=True)
class PerceivedState:
    """One round of retailer output: perceived CDF and the implied order."""
    cdf: object
    order: float


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def saa_perceive(samples) -> StepCdf:
    """Empirical CDF of the observed demand samples."""
    return StepCdf.from_samples(samples)


def chi2_quantile_1dof(beta: float) -> float:
    """beta-quantile of the chi-squared distribution with one degree of
    freedom, by bisection on the regularized incomplete gamma CDF
    P(1/2, x/2) = erf(sqrt(x/2)); |error| < 1e-10."""
    if not 0.0 < beta < 1.0:
        raise MarketError(f"quantile level must be in (0,1), got {beta}")
    lo, hi = 0.0, 1.0
    while math.erf(math.sqrt(hi / 2.0)) < beta:
        hi *= 2.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if math.erf(math.sqrt(mid / 2.0)) < beta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dro_epsilon(alpha: float, t: int) -> float:
    """Confidence radius schedule: chi2_{1,1-2a}/(t-1) for t >= 2, and 1 in
    the first round."""
    if not 0.0 < alpha < 0.5:
        raise MarketError(f"alpha must be in (0, 0.5), got {alpha}")
    if t < 1:
        raise MarketError(f"round index must be >= 1, got {t}")
    if t == 1:
        return 1.0
    return chi2_quantile_1dof(1.0 - 2.0 * alpha) / (t - 1)


def mle_perceive(family: str, samples, q_cap: float | None,
                 sigma: float | None = None, support=None) -> ParametricCdf:
    """Fitted exponential-family distribution, truncated at the order cap.

    poisson: rate = sample mean; categorical: empirical frequencies on the
    common support; exponential: rate = n / sum(samples); normal: mean fitted,
    sigma known.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise MarketError("MLE needs at least one sample")
    if family == "poisson":
        return ParametricCdf("poisson", lam=float(x.mean()), q_cap=q_cap)
    if family == "exponential":
        total = float(x.sum())
        if total <= 0.0:
            raise MarketError("exponential MLE undefined for zero-sum samples")
        return ParametricCdf("exponential", lam=x.size / total, q_cap=q_cap)
    if family == "normal":
        if sigma is None:
            raise MarketError("normal MLE needs the known sigma")
        return ParametricCdf("normal", mu=float(x.mean()), sigma=sigma, q_cap=q_cap)
    if family == "categorical":
        if support is None:
            raise MarketError("categorical MLE needs the common support")
        sup = np.asarray(support, dtype=np.float64)
        counts = np.array([(x == y).sum() for y in sup], dtype=np.float64)
        if counts.sum() != x.size:
            raise MarketError("categorical samples fall outside the support")
        return ParametricCdf("categorical", support=sup, probs=counts / x.size,
                             q_cap=q_cap)
    raise MarketError(f"unknown MLE family {family!r}")


def opstats_shape(t: int, w: float, s: float) -> float:
    """f_t(w) = (t-1)((s/w)^{1/t} - 1) / ln(s/w), in [(t-1)/t, 1) on (0, s)."""
    if not 0.0 < w < s:
        raise MarketError(f"need 0 < w < s, got w={w}, s={s}")
    if t < 2:
        raise MarketError(f"need t >= 2, got {t}")
    r = s / w
    return (t - 1) * (r ** (1.0 / t) - 1.0) / math.log(r)


def opstats_order(samples, w: float, s: float, t: int, q_cap: float,
                  ) -> tuple[float, float]:
    """Out-of-sample profit-maximizing order for exponential demand, plus the
    implied exponential rate of the matching perceived distribution."""
    if not 0.0 < w < s:
        raise MarketError(f"need 0 < w < s, got w={w}, s={s}")
    if t < 2:
        raise MarketError(f"need t >= 2, got {t}")
    x = np.asarray(samples, dtype=np.float64)
    total = float(x.sum())
    if x.size == 0 or total <= 0.0:
        raise MarketError("operational statistics needs samples with positive sum")
    mean = total / x.size
    raw = (t - 1) * ((s / w) ** (1.0 / t) - 1.0) * mean
    rate = 1.0 / (opstats_shape(t, w, s) * mean)
    return min(raw, q_cap), rate


def bayes_order(samples, w: float, s: float, a_prior: float, b_prior: float,
                q_cap: float) -> tuple[float, float]:
    """Posterior-optimal order under a gamma prior on the exponential rate.

    With n observed samples the effective round is t = n + 1; at t = 1 the
    prior alone drives the order.
    """
    if not 0.0 < w < s:
        raise MarketError(f"need 0 < w < s, got w={w}, s={s}")
    if a_prior <= 0.0 or b_prior <= 0.0:
        raise MarketError("gamma prior parameters must be positive")
    x = np.asarray(samples, dtype=np.float64)
    t = x.size + 1
    scale = b_prior + float(x.sum())
    raw = scale * ((s / w) ** (1.0 / (a_prior + t - 1)) - 1.0)
    rate = math.log(s / w) / raw if raw > 0.0 else math.inf
    return min(raw, q_cap), rate


def uniform_fallback(mp: MarketParams, points: int = 64) -> StepCdf:
    """First-round perceived distribution: uniform on the known support
    (the discrete grid when present, else [0, xi_bar] at 64 points)."""
    if mp.y_grid is not None:
        n = len(mp.y_grid)
        return StepCdf(mp.y_grid, np.arange(1, n + 1) / n)
    z = mp.xi_bar * np.arange(1, points + 1) / points
    return StepCdf(z, np.arange(1, points + 1) / points)


# ---------------------------------------------------------------------------
# Policy objects (single-owner mutable state, advanced round by round)
# ---------------------------------------------------------------------------

class _RetailerBase:
    """Common bookkeeping: internal round clock and demand sample store."""

    order_cap: float | None = None

    def __init__(self, mp: MarketParams):
        self.mp = mp
        self.t = 0  # rounds responded so far

    def respond(self, w: float) -> PerceivedState:
        self.t += 1
        return self._respond(w)

    def observe(self, w: float, q: float, xi: float) -> None:
        pass

    def step_variation(self) -> float | None:
        """Exact Kolmogorov distance between the two most recent perceived
        CDFs when the policy can compute it cheaply; None defers to the
        generic distance."""
        return None


class StationaryRetailer(_RetailerBase):
    """Full knowledge of a stationary demand distribution."""

    def __init__(self, mp: MarketParams, true_cdf):
        super().__init__(mp)
        self.true_cdf = true_cdf

    def _respond(self, w: float) -> PerceivedState:
        return PerceivedState(self.true_cdf, best_response_order(self.true_cdf, w, self.mp))


class ScriptedRetailer(_RetailerBase):
    """Exogenous perceived sequence F-hat_t = script(t); mechanically
    best-responds.  Used to reproduce the direct-construction experiments."""

    def __init__(self, mp: MarketParams, script):
        super().__init__(mp)
        self.script = script

    def _respond(self, w: float) -> PerceivedState:
        cdf = self.script(self.t)
        return PerceivedState(cdf, best_response_order(cdf, w, self.mp))


class SaaRetailer(_RetailerBase):
    """Sample average approximation: perceived CDF is the empirical CDF of
    past demand; the first round falls back to the uniform distribution on
    the known support."""

    def __init__(self, mp: MarketParams):
        super().__init__(mp)
        self._atoms: list[float] = []
        self._counts: list[int] = []
        self._n = 0
        self._pending_var: float | None = None
        self._emit_var: float | None = None

    def _empirical(self) -> StepCdf:
        cum = np.cumsum(np.asarray(self._counts, dtype=np.float64))
        return StepCdf(np.asarray(self._atoms), cum / self._n)

    def _respond(self, w: float) -> PerceivedState:
        self._emit_var = self._pending_var
        self._pending_var = None
        cdf = uniform_fallback(self.mp) if self._n == 0 else self._empirical()
        return PerceivedState(cdf, best_response_order(cdf, w, self.mp))

    def observe(self, w: float, q: float, xi: float) -> None:
        n = self._n
        if n >= 1:
            # exact d_K between consecutive empiricals from integer counts:
            # the new sample moves every cum value by at most 1/(n+1)
            i = bisect_left(self._atoms, xi)
            below = sum(self._counts[:i])
            at = below + (self._counts[i] if i < len(self._atoms)
                          and self._atoms[i] == xi else 0)
            num = max(n - at, below)
            self._pending_var = num / (n * (n + 1))
        i = bisect_left(self._atoms, xi)
        if i < len(self._atoms) and self._atoms[i] == xi:
            self._counts[i] += 1
        else:
            self._atoms.insert(i, xi)
            self._counts.insert(i, 1)
        self._n += 1

    def step_variation(self) -> float | None:
        return self._emit_var


class DroRetailer(_RetailerBase):
    """Distributionally robust retailer: worst-case order over a
    phi-divergence ball around the empirical CDF, radius shrinking as 1/t.
    The perceived CDF is the worst-case distribution at the played price."""

    def __init__(self, mp: MarketParams, divergence: str = "kl",
                 alpha: float = 0.05, q_cap: float | None = None):
        super().__init__(mp)
        if divergence not in DIVERGENCES:
            raise MarketError(f"divergence must be one of {DIVERGENCES}")
        if not 0.0 < alpha < 0.5:
            raise MarketError(f"alpha must be in (0, 0.5), got {alpha}")
        self.divergence = divergence
        self.alpha = alpha
        self.order_cap = q_cap
        self._samples: list[float] = []

    def _respond(self, w: float) -> PerceivedState:
        if not self._samples:
            cdf = uniform_fallback(self.mp)
            order = best_response_order(cdf, w, self.mp)
            if self.order_cap is not None:
                order = min(order, self.order_cap)
            return PerceivedState(cdf, order)
        eps = dro_epsilon(self.alpha, self.t)
        emp = saa_perceive(self._samples)
        order, worst = dro_worst_case(emp, self.divergence, eps, w, self.mp,
                                      q_cap=self.order_cap)
        return PerceivedState(worst, order)

    def observe(self, w: float, q: float, xi: float) -> None:
        self._samples.append(xi)


class MleRetailer(_RetailerBase):
    """Maximum-likelihood retailer for one exponential-family model."""

    def __init__(self, mp: MarketParams, family: str, q_cap: float | None,
                 sigma: float | None = None):
        super().__init__(mp)
        self.family = family
        self.sigma = sigma
        if family != "categorical" and q_cap is None:
            raise MarketError(f"{family} MLE needs an order cap")
        self.order_cap = q_cap
        self._samples: list[float] = []
        self._last_fit = None

    def _respond(self, w: float) -> PerceivedState:
        cdf = None
        if self._samples:
            try:
                cdf = mle_perceive(self.family, self._samples, self.order_cap,
                                   sigma=self.sigma, support=self.mp.y_grid)
            except MarketError:
                cdf = self._last_fit  # degenerate sample sum: reuse prior fit
        if cdf is None:
            cdf = self._last_fit if self._last_fit is not None \
                else uniform_fallback(self.mp)
        self._last_fit = cdf
        order = best_response_order(cdf, w, self.mp)
        if self.order_cap is not None:
            order = min(order, self.order_cap)
        return PerceivedState(cdf, order)

    def observe(self, w: float, q: float, xi: float) -> None:
        self._samples.append(xi)


class _ExponentialRateRetailer(_RetailerBase):
    """Shared plumbing for the operational-statistics and Bayesian rules:
    both emit a capped exponential perceived distribution whose quantile at
    1 - w/s reproduces the closed-form order."""

    def __init__(self, mp: MarketParams, q_cap: float):
        super().__init__(mp)
        if q_cap is None or not q_cap > 0.0:
            raise MarketError("rate-based retailers need a positive order cap")
        self.order_cap = float(q_cap)
        self._sum = 0.0
        self._n = 0
        self._last_rate: float | None = None

    def _rate_order(self, w: float) -> tuple[float, float] | None:
        raise NotImplementedError

    def _respond(self, w: float) -> PerceivedState:
        if 0.0 < w < self.mp.s:
            out = self._rate_order(w)
            if out is not None:
                order, rate = out
                self._last_rate = rate
                cdf = ParametricCdf("exponential", lam=rate, q_cap=self.order_cap)
                return PerceivedState(cdf, min(order, self.order_cap))
        # price outside (0, s) or no usable samples: best-respond with the
        # carried fit (or the uniform fallback before any fit exists)
        if self._last_rate is not None:
            cdf = ParametricCdf("exponential", lam=self._last_rate,
                                q_cap=self.order_cap)
        else:
            cdf = uniform_fallback(self.mp)
        order = min(best_response_order(cdf, w, self.mp), self.order_cap)
        return PerceivedState(cdf, order)

    def observe(self, w: float, q: float, xi: float) -> None:
        self._sum += xi
        self._n += 1


class OpStatsRetailer(_ExponentialRateRetailer):
    def _rate_order(self, w):
        if self._n == 0 or self._sum <= 0.0:
            return None
        samples_mean = self._sum / self._n
        t = self.t
        raw = (t - 1) * ((self.mp.s / w) ** (1.0 / t) - 1.0) * samples_mean
        rate = 1.0 / (opstats_shape(t, w, self.mp.s) * samples_mean)
        return raw, rate


class BayesRetailer(_ExponentialRateRetailer):
    def __init__(self, mp: MarketParams, q_cap: float,
                 a_prior: float = 1.0, b_prior: float = 1.0):
        super().__init__(mp, q_cap)
        if a_prior <= 0.0 or b_prior <= 0.0:
            raise MarketError("gamma prior parameters must be positive")
        self.a_prior = a_prior
        self.b_prior = b_prior

    def _rate_order(self, w):
        t = self.t
        scale = self.b_prior + self._sum
        raw = scale * ((self.mp.s / w) ** (1.0 / (self.a_prior + t - 1)) - 1.0)
        rate = math.log(self.mp.s / w) / raw
        return raw, rate
