"""Core market vocabulary: demand distributions, the retailer's best-response
order rule, supplier profit, and the Kolmogorov distance.

All distribution objects are immutable after construction and every operation
here is a pure function, so values can be shared freely across threads.

Conventions
-----------
- CDFs are right-continuous step functions (``StepCdf``) or tagged parametric
  families (``ParametricCdf``), optionally truncated by an order cap ``q_cap``
  at which the evaluated CDF jumps to 1.
- Threshold comparisons use exact ``>=`` on IEEE doubles; CDF values are never
  perturbed after construction, so repeated evaluations are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MarketParams",
    "StepCdf",
    "ParametricCdf",
    "cdf_eval",
    "best_response_order",
    "supplier_profit",
    "kolmogorov_distance",
    "normal_quantile",
]

_CUM_TOL = 1e-12


class MarketError(ValueError):
    """Invalid market primitive (bad distribution, price, or parameter)."""


@dataclass(frozen=True)
class MarketParams:
    """Contract constants: selling price ``s``, production cost ``c``, demand
    bound ``xi_bar`` and (for discrete markets) the common support ``y_grid``.
    """

    s: float
    c: float = 0.0
    xi_bar: float = 1.0
    y_grid: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.c < self.s):
            raise MarketError(f"need 0 <= c < s, got c={self.c}, s={self.s}")
        if not self.xi_bar > 0.0:
            raise MarketError(f"demand bound must be positive, got {self.xi_bar}")
        if self.y_grid is not None:
            g = tuple(float(y) for y in self.y_grid)
            if len(g) == 0 or any(b <= a for a, b in zip(g, g[1:])):
                raise MarketError("y_grid must be non-empty and strictly increasing")
            if g[-1] != self.xi_bar:
                raise MarketError(
                    f"max of y_grid ({g[-1]}) must equal xi_bar ({self.xi_bar})"
                )
            object.__setattr__(self, "y_grid", g)


class StepCdf:
    """Right-continuous step CDF: ``F(x) = cum[last support point <= x]`` and
    0 below the first support point.

    The final cumulative value must equal 1 within 1e-12; it is snapped to
    exactly 1.0 so that quantile lookups at probability 1 are well defined.
    """

    __slots__ = ("support", "cum")

    def __init__(self, support, cum):
        sup = np.asarray(support, dtype=np.float64)
        c = np.array(cum, dtype=np.float64)
        if sup.ndim != 1 or c.shape != sup.shape or sup.size == 0:
            raise MarketError("support and cum must be equal-length 1-d sequences")
        if sup.size > 1 and not np.all(np.diff(sup) > 0):
            raise MarketError("support must be strictly increasing")
        if np.any(np.diff(c) < 0) or c[0] < -_CUM_TOL:
            raise MarketError("cum must be non-decreasing and non-negative")
        if abs(c[-1] - 1.0) > _CUM_TOL:
            raise MarketError(f"final cum must be 1 within {_CUM_TOL}, got {c[-1]!r}")
        c[-1] = 1.0
        self.support = sup
        self.cum = c

    @classmethod
    def from_samples(cls, samples) -> "StepCdf":
        """Empirical CDF: equal weight 1/n on each sample (ties merged)."""
        x = np.asarray(samples, dtype=np.float64)
        if x.size == 0:
            raise MarketError("empirical CDF needs at least one sample")
        atoms, counts = np.unique(x, return_counts=True)
        return cls(atoms, np.cumsum(counts) / x.size)

    @classmethod
    def point_mass(cls, x: float) -> "StepCdf":
        return cls([x], [1.0])

    def eval(self, x: float) -> float:
        i = np.searchsorted(self.support, x, side="right") - 1
        return float(self.cum[i]) if i >= 0 else 0.0

    __call__ = eval

    def eval_left(self, x: float) -> float:
        """Left limit F(x-)."""
        i = np.searchsorted(self.support, x, side="left") - 1
        return float(self.cum[i]) if i >= 0 else 0.0

    def quantile(self, p: float) -> float:
        """Generalized inverse min{q in support : F(q) >= p} for p in (0, 1]."""
        i = np.searchsorted(self.cum, p, side="left")
        i = min(int(i), self.support.size - 1)
        return float(self.support[i])

    def jump_points(self) -> np.ndarray:
        return self.support

    def pmf(self) -> np.ndarray:
        return np.diff(self.cum, prepend=0.0)

    def __repr__(self) -> str:  # pragma: no cover
        return f"StepCdf({self.support.tolist()}, {self.cum.tolist()})"


_FAMILIES = ("poisson", "categorical", "exponential", "normal")


class ParametricCdf:
    """Tagged parametric family with an optional order cap ``q_cap``.

    Families: ``poisson`` (rate lam), ``categorical`` (support + probs),
    ``exponential`` (rate lam), ``normal`` (mu, sigma).  When a cap is set the
    evaluated CDF jumps to 1 at ``q_cap``.
    """

    __slots__ = ("family", "lam", "mu", "sigma", "_step", "q_cap")

    def __init__(self, family, *, lam=None, mu=None, sigma=None,
                 support=None, probs=None, q_cap=None):
        if family not in _FAMILIES:
            raise MarketError(f"unknown family {family!r}, expected one of {_FAMILIES}")
        self.family = family
        self.lam = self.mu = self.sigma = None
        self._step = None
        if family in ("poisson", "exponential"):
            if lam is None or not lam > 0.0:
                raise MarketError(f"{family} needs rate lam > 0, got {lam}")
            self.lam = float(lam)
        elif family == "normal":
            if mu is None or sigma is None or not sigma > 0.0:
                raise MarketError(f"normal needs mu and sigma > 0, got {mu}, {sigma}")
            self.mu, self.sigma = float(mu), float(sigma)
        else:  # categorical
            p = np.asarray(probs, dtype=np.float64)
            if abs(p.sum() - 1.0) > _CUM_TOL:
                raise MarketError(f"categorical probs must sum to 1, got {p.sum()!r}")
            self._step = StepCdf(support, np.cumsum(p))
        if q_cap is not None and not q_cap > 0.0:
            raise MarketError(f"cap must be positive, got {q_cap}")
        self.q_cap = None if q_cap is None else float(q_cap)

    def _base_eval(self, x: float) -> float:
        if x < 0.0:
            return 0.0
        if self.family == "poisson":
            k = math.floor(x)
            term = math.exp(-self.lam)
            total = term
            for j in range(1, k + 1):
                term *= self.lam / j
                total += term
            return min(total, 1.0)
        if self.family == "exponential":
            return -math.expm1(-self.lam * x)
        if self.family == "normal":
            return 0.5 * (1.0 + math.erf((x - self.mu) / (self.sigma * math.sqrt(2.0))))
        return self._step.eval(x)

    def eval(self, x: float) -> float:
        if self.q_cap is not None and x >= self.q_cap:
            return 1.0
        return self._base_eval(x)

    __call__ = eval

    def eval_left(self, x: float) -> float:
        if self.q_cap is not None and x > self.q_cap:
            return 1.0
        if self.family == "categorical":
            v = self._step.eval_left(x)
        elif self.family == "poisson":
            v = self._base_eval(math.ceil(x) - 1)
        else:
            v = self._base_eval(x)
        return v

    def _base_quantile(self, p: float) -> float:
        if p <= 0.0:
            return 0.0
        if self.family == "exponential":
            return math.inf if p >= 1.0 else -math.log1p(-p) / self.lam
        if self.family == "normal":
            if p >= 1.0:
                return math.inf
            return max(0.0, self.mu + self.sigma * normal_quantile(p))
        if self.family == "categorical":
            return self._step.quantile(min(p, 1.0))
        # poisson: ascending scan of the integer support
        k = 0
        term = math.exp(-self.lam)
        total = term
        while total < p:
            k += 1
            term *= self.lam / k
            total += term
            if term == 0.0 and total < p:  # p ~ 1, tail exhausted in doubles
                return math.inf
        return float(k)

    def quantile(self, p: float) -> float:
        """min{q >= 0 : F(q) >= p}; respects the cap clause."""
        q = self._base_quantile(p)
        return q if self.q_cap is None else min(q, self.q_cap)

    def jump_points(self) -> np.ndarray:
        pts = []
        if self.family == "categorical":
            pts.extend(self._step.support.tolist())
        elif self.family == "poisson":
            hi = int(self._base_quantile(1.0 - 1e-13)) if self.q_cap is None \
                else int(math.floor(self.q_cap))
            pts.extend(range(0, hi + 1))
        if self.q_cap is not None:
            pts.append(self.q_cap)
        return np.asarray(sorted(set(float(p) for p in pts)), dtype=np.float64)

    def __repr__(self) -> str:  # pragma: no cover
        par = {"poisson": f"lam={self.lam}", "exponential": f"lam={self.lam}",
               "normal": f"mu={self.mu}, sigma={self.sigma}",
               "categorical": "..."}[self.family]
        return f"ParametricCdf({self.family}, {par}, q_cap={self.q_cap})"


Cdf = StepCdf | ParametricCdf


def cdf_eval(dist: Cdf, x: float) -> float:
    """Right-continuous CDF value F(x) for x >= 0."""
    if x < 0.0:
        raise MarketError(f"cdf_eval needs x >= 0, got {x}")
    return dist.eval(x)


def best_response_order(dist: Cdf, w: float, mp: MarketParams) -> float:
    """Newsvendor best response: min{q >= 0 : F(q) >= 1 - w/s}.

    Follows the literal quantile rule: at w >= s the target is <= 0, which any
    q >= 0 meets, so the order is 0 even when the support starts above 0.
    Parametric caps are honoured through the capped quantile.
    """
    if w < 0.0:
        raise MarketError(f"invalid price {w} < 0")
    target = 1.0 - w / mp.s
    if target <= 0.0:
        return 0.0
    return dist.quantile(target)


def supplier_profit(w: float, q: float, mp: MarketParams) -> float:
    """Per-round supplier profit (w - c) * q; negative when pricing below cost."""
    if q < 0.0:
        raise MarketError(f"order quantity must be >= 0, got {q}")
    return (w - mp.c) * q


# ---------------------------------------------------------------------------
# Kolmogorov distance
# ---------------------------------------------------------------------------

_GRID_POINTS = 10_000
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _step_step_distance(f: StepCdf, g: StepCdf) -> float:
    """Exact sup|F-G|: both CDFs are constant between the union of jumps."""
    fi = np.searchsorted(f.support, g.support, side="right") - 1
    f_at_g = np.where(fi >= 0, f.cum[np.maximum(fi, 0)], 0.0)
    d1 = np.max(np.abs(f_at_g - g.cum))
    gi = np.searchsorted(g.support, f.support, side="right") - 1
    g_at_f = np.where(gi >= 0, g.cum[np.maximum(gi, 0)], 0.0)
    d2 = np.max(np.abs(g_at_f - f.cum))
    return float(max(d1, d2))


def _refine_bracket(diff, lo: float, hi: float, tol: float) -> float:
    """Golden-section maximization of ``diff`` on [lo, hi]."""
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = diff(x1), diff(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = diff(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = diff(x1)
    return max(f1, f2)


def kolmogorov_distance(f: Cdf, g: Cdf, mp: MarketParams | None = None) -> float:
    """sup_x |F(x) - G(x)| over x >= 0.

    Exact for two step CDFs (evaluated at the union of their jumps).  With a
    parametric operand, the sup is taken over all jump points (and their left
    limits) plus a uniform grid refined by local golden-section search;
    absolute error <= 1e-6.
    """
    if isinstance(f, StepCdf) and isinstance(g, StepCdf):
        return _step_step_distance(f, g)

    hi = 0.0
    if mp is not None:
        hi = max(mp.xi_bar, hi)
    for d in (f, g):
        jp = d.jump_points()
        if jp.size:
            hi = max(hi, float(jp[-1]))
        if isinstance(d, ParametricCdf) and d.q_cap is not None:
            hi = max(hi, d.q_cap)
        elif isinstance(d, ParametricCdf):
            hi = max(hi, d._base_quantile(1.0 - 1e-9))
    hi = max(hi, 1.0)

    best = 0.0
    # jumps and their left limits carry the discontinuities
    for x in np.unique(np.concatenate([f.jump_points(), g.jump_points()])):
        best = max(best, abs(f.eval(x) - g.eval(x)),
                   abs(f.eval_left(x) - g.eval_left(x)))

    diff = lambda x: abs(f.eval(x) - g.eval(x))
    grid = np.linspace(0.0, hi, _GRID_POINTS)
    vals = np.array([diff(x) for x in grid])
    k = int(np.argmax(vals))
    best = max(best, float(vals[k]))
    lo_b = grid[max(k - 1, 0)]
    hi_b = grid[min(k + 1, grid.size - 1)]
    best = max(best, _refine_bracket(diff, lo_b, hi_b, tol=1e-9 * hi))
    return best


# ---------------------------------------------------------------------------
# Inverse standard normal
# ---------------------------------------------------------------------------

# Rational approximation (Acklam 2003 coefficients) refined with one Halley
# step; absolute error well below 1e-9 across (0, 1).
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, |error| < 1e-9 on (0, 1)."""
    if not 0.0 < p < 1.0:
        raise MarketError(f"normal quantile needs p in (0,1), got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # Halley refinement against the exact CDF (via erf)
    e = 0.5 * (1.0 + math.erf(x / math.sqrt(2.0))) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)
