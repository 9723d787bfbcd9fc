"""Round protocol loop, demand generation, seeding, and replication
management.

Per round: the supplier posts a price from (price, order) history alone; the
retailer forms a perceived distribution and best-responds; the clairvoyant
benchmark and regret are computed from the perceived distribution; demand is
realized and appended to the retailer's history.  Randomness comes from
counter-based streams keyed (seed, replication, role), with demand drawn by a
single inverse-transform uniform per round so the demand path is invariant to
the policies in play.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from lunasim.benchmark import (
    RegretLedger,
    VariationTrace,
    clairvoyant_profit,
    clairvoyant_profit_finite,
)
from lunasim.market import (
    MarketError,
    MarketParams,
    ParametricCdf,
    StepCdf,
    best_response_order,
    kolmogorov_distance,
    normal_quantile,
)
from lunasim.retailers import (
    BayesRetailer,
    DroRetailer,
    MleRetailer,
    OpStatsRetailer,
    SaaRetailer,
    ScriptedRetailer,
    StationaryRetailer,
)
from lunasim.suppliers import (
    Exp3SPolicy,
    LunacnPolicy,
    LunacPolicy,
    LunafPolicy,
    LunaPolicy,
    RestartBanditPolicy,
    StatPolicy,
    luna_obl_k,
    luna_opt_k,
    lunac_obl_n,
    lunac_opt_n,
)

__all__ = [
    "EngineError",
    "sinusoidal_p",
    "SinusoidalBernoulliScript",
    "ExponentialDriftScript",
    "DemandSpec",
    "RetailerSpec",
    "SupplierSpec",
    "EpisodeConfig",
    "RestartRecord",
    "Trajectory",
    "Aggregate",
    "run_episode",
    "run_replications",
]

_ROLE_DEMAND = 0
_ROLE_SUPPLIER = 1
_CONSISTENCY_TOL = 1e-9

# non-leap cumulative day counts, used to map a day index to a month
_MONTH_STARTS = (0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334, 365)


class EngineError(RuntimeError):
    """Protocol violation detected during a run (a bug, not randomness)."""


def sinusoidal_p(t: int, T: int, V: float) -> float:
    """Mass at zero demand for the drifting Bernoulli scenario:
    1/2 + (3/10) sin(5 V pi t / (3 T))."""
    if not 1 <= t <= T:
        raise EngineError(f"round {t} outside 1..{T}")
    if not V > 0.0:
        raise EngineError(f"variation parameter must be positive, got {V}")
    return 0.5 + 0.3 * math.sin(5.0 * V * math.pi * t / (3.0 * T))


_BERN_SUPPORT = np.array([0.0, 1.0])


def _bernoulli_cdf(p0: float) -> StepCdf:
    obj = StepCdf.__new__(StepCdf)
    obj.support = _BERN_SUPPORT
    obj.cum = np.array([p0, 1.0])
    return obj


@dataclass(frozen=True)
class SinusoidalBernoulliScript:
    """Exogenous perceived sequence: Bernoulli on {0, 1} with drifting mass
    at zero; reproduces the direct-construction experiments."""
    T: int
    V: float

    def __call__(self, t: int) -> StepCdf:
        return _bernoulli_cdf(sinusoidal_p(t, self.T, self.V))

    def step_variation(self, t: int) -> float | None:
        if t < 2:
            return None
        return abs(sinusoidal_p(t, self.T, self.V)
                   - sinusoidal_p(t - 1, self.T, self.V))

    def total_variation(self) -> float:
        p = np.array([sinusoidal_p(t, self.T, self.V)
                      for t in range(1, self.T + 1)])
        return float(np.abs(np.diff(p)).sum())


@dataclass(frozen=True)
class ExponentialDriftScript:
    """Exogenous capped-exponential perceived sequence with a slowly drifting
    rate; exercises the continuous-order code paths."""
    T: int
    xi_bar: float
    lam_lo: float = 1.0
    lam_hi: float = 3.0

    def _rate(self, t: int) -> float:
        mid = 0.5 * (self.lam_lo + self.lam_hi)
        amp = 0.5 * (self.lam_hi - self.lam_lo)
        return mid + amp * math.sin(2.0 * math.pi * t / self.T)

    def __call__(self, t: int) -> ParametricCdf:
        return ParametricCdf("exponential", lam=self._rate(t), q_cap=self.xi_bar)


@dataclass(frozen=True)
class DemandSpec:
    """True demand model.  Kinds: ``bernoulli`` (stationary on {0,1} with
    P(xi=0) = p0), ``sinusoidal`` (drifting Bernoulli), ``exponential`` /
    ``normal`` / ``poisson`` (parametric, truncated to [0, xi_bar]), and
    ``bootstrap`` (monthly sample pools)."""
    kind: str
    p0: float = 0.5
    V: float = 1.0
    lam: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0
    pools: tuple[tuple[float, ...], ...] | None = None

    def draw(self, t: int, u: float, T: int, mp: MarketParams) -> float:
        if self.kind == "bernoulli":
            return 0.0 if u < self.p0 else 1.0
        if self.kind == "sinusoidal":
            return 0.0 if u < sinusoidal_p(t, T, self.V) else 1.0
        if self.kind == "exponential":
            return min(-math.log1p(-u) / self.lam, mp.xi_bar)
        if self.kind == "normal":
            x = self.mu + self.sigma * normal_quantile(min(max(u, 1e-15), 1 - 1e-15))
            return min(max(x, 0.0), mp.xi_bar)
        if self.kind == "poisson":
            cdf = ParametricCdf("poisson", lam=self.lam)
            return min(cdf.quantile(u), mp.xi_bar)
        if self.kind == "bootstrap":
            pool = self.pools[_month_of_day(t)]
            return float(pool[min(int(u * len(pool)), len(pool) - 1)])
        raise EngineError(f"unknown demand kind {self.kind!r}")

    def true_cdf(self, mp: MarketParams):
        """Stationary true distribution, for the full-knowledge retailer."""
        if self.kind == "bernoulli":
            return _bernoulli_cdf(self.p0)
        if self.kind == "exponential":
            return ParametricCdf("exponential", lam=self.lam, q_cap=mp.xi_bar)
        if self.kind == "normal":
            return ParametricCdf("normal", mu=self.mu, sigma=self.sigma,
                                 q_cap=mp.xi_bar)
        if self.kind == "poisson":
            return ParametricCdf("poisson", lam=self.lam, q_cap=mp.xi_bar)
        raise EngineError(f"demand kind {self.kind!r} has no stationary CDF")


def _month_of_day(t: int) -> int:
    d = (t - 1) % 365
    for m in range(12):
        if d < _MONTH_STARTS[m + 1]:
            return m
    return 11


@dataclass(frozen=True)
class RetailerSpec:
    """Retailer policy configuration.  Kinds: ``stationary``, ``scripted``
    (with a script object), ``saa``, ``dro``, ``mle``, ``opstats``,
    ``bayes``."""
    kind: str
    script: object | None = None
    divergence: str = "kl"
    alpha: float = 0.05
    family: str = "exponential"
    sigma: float = 1.0
    prior_a: float = 1.0
    prior_b: float = 1.0
    q_cap: float | None = None


@dataclass(frozen=True)
class SupplierSpec:
    """Supplier policy configuration.  Kinds: ``stat``, ``luna``, ``lunac``,
    ``lunacn``, ``lunaf``, ``exp3s``, ``restart``.  ``K``/``N`` default to
    the oblivious tuning; passing ``V_hint`` switches to the optimal tuning.
    ``budget`` is the variation budget handed to the Exp3.S baseline."""
    kind: str
    label: str = ""
    K: int | None = None
    N: int | None = None
    V_hint: float | None = None
    budget: float = 1.0

    @property
    def name(self) -> str:
        return self.label or self.kind


@dataclass(frozen=True)
class EpisodeConfig:
    T: int
    mp: MarketParams
    supplier: SupplierSpec
    retailer: RetailerSpec
    demand: DemandSpec | None = None
    seed: int = 0
    replications: int = 20
    price_count: int | None = None

    def __post_init__(self) -> None:
        if self.T < 1:
            raise EngineError(f"horizon must be >= 1, got {self.T}")
        if self.replications < 1:
            raise EngineError(f"replication count must be >= 1")
        if self.retailer.kind == "scripted" and self.retailer.script is None:
            raise EngineError("scripted retailer needs a script")
        if self.retailer.kind != "scripted" and self.demand is None:
            raise EngineError(f"retailer {self.retailer.kind!r} needs a demand model")

    def price_set(self) -> np.ndarray | None:
        if self.price_count is None:
            return None
        return np.linspace(0.0, self.mp.s, self.price_count)


def _rng(seed: int, rep: int, role: int) -> np.random.Generator:
    # Philox keys are 128-bit; pack (rep, role) into the second word so each
    # (seed, rep, role) triple owns an independent counter-based stream.
    return np.random.Generator(
        np.random.Philox(key=(np.uint64(seed), np.uint64(rep) * 16 + role)))


def _build_supplier(cfg: EpisodeConfig, rng: np.random.Generator):
    spec, mp, T = cfg.supplier, cfg.mp, cfg.T
    kind = spec.kind
    if kind == "stat":
        return StatPolicy(mp, T)
    if kind == "luna":
        if mp.y_grid is None:
            raise EngineError("luna needs a discrete support on the market")
        K = spec.K or (luna_opt_k(T, spec.V_hint, mp.xi_bar)
                       if spec.V_hint else luna_obl_k(T, mp.xi_bar))
        return LunaPolicy(mp, mp.y_grid, K, rng)
    if kind == "lunac":
        N = spec.N or (lunac_opt_n(T, spec.V_hint, mp.xi_bar)
                       if spec.V_hint else lunac_obl_n(T, mp.xi_bar))
        K = spec.K or luna_obl_k(T, mp.xi_bar)
        return LunacPolicy(mp, N, K, rng)
    if kind == "lunacn":
        K = spec.K or luna_obl_k(T, mp.xi_bar)
        return LunacnPolicy(mp, T, K, rng)
    prices = cfg.price_set()
    if prices is None:
        raise EngineError(f"supplier {kind!r} needs a finite price set")
    if kind == "lunaf":
        if mp.y_grid is None:
            raise EngineError("lunaf needs a discrete support on the market")
        return LunafPolicy(mp, mp.y_grid, prices, rng)
    if kind == "exp3s":
        return Exp3SPolicy(mp, prices, T, spec.budget, rng)
    if kind == "restart":
        return RestartBanditPolicy(mp, prices, rng)
    raise EngineError(f"unknown supplier kind {kind!r}")


def _build_retailer(cfg: EpisodeConfig):
    spec, mp = cfg.retailer, cfg.mp
    kind = spec.kind
    if kind == "scripted":
        return ScriptedRetailer(mp, spec.script)
    if kind == "stationary":
        return StationaryRetailer(mp, cfg.demand.true_cdf(mp))
    if kind == "saa":
        return SaaRetailer(mp)
    if kind == "dro":
        return DroRetailer(mp, spec.divergence, spec.alpha, spec.q_cap)
    if kind == "mle":
        return MleRetailer(mp, spec.family, spec.q_cap, sigma=spec.sigma)
    if kind == "opstats":
        return OpStatsRetailer(mp, spec.q_cap)
    if kind == "bayes":
        return BayesRetailer(mp, spec.q_cap, spec.prior_a, spec.prior_b)
    raise EngineError(f"unknown retailer kind {kind!r}")


@dataclass(frozen=True)
class RestartRecord:
    """Diagnostics captured when an epoch restart fires."""
    t: int
    epoch: int
    delta: float
    epoch_variation: float


_PHASES = {"": 0, "explore": 1, "exploit": 2}


@dataclass
class Trajectory:
    """One replication: per-round arrays plus regret/variation diagnostics."""
    t: np.ndarray
    w: np.ndarray
    q: np.ndarray
    xi: np.ndarray
    profit: np.ndarray
    benchmark: np.ndarray
    cum_regret: np.ndarray
    epoch: np.ndarray
    phase: np.ndarray
    ledger: RegretLedger
    trace: VariationTrace
    restarts: list[RestartRecord]
    epochs_total: int
    variation_total: float

    def running_variation(self) -> np.ndarray:
        """Measured variation by round (0 at round 1)."""
        out = np.zeros(self.t.size)
        out[1:] = self.trace.running()
        return out


def _check_consistency(cdf, order: float, w: float, mp: MarketParams,
                       cap: float | None) -> None:
    br = best_response_order(cdf, w, mp)
    if cap is not None:
        br = min(br, cap)
    if isinstance(cdf, StepCdf):
        ok = br == order
    else:
        ok = abs(br - order) <= _CONSISTENCY_TOL * max(1.0, abs(br))
    if not ok:
        raise EngineError(
            f"retailer order {order} is not the best response {br} to its "
            f"perceived distribution at price {w}")


def run_episode(cfg: EpisodeConfig, rep: int = 0) -> Trajectory:
    """Deterministic function of (config, replication index)."""
    T, mp = cfg.T, cfg.mp
    supplier = _build_supplier(cfg, _rng(cfg.seed, rep, _ROLE_SUPPLIER))
    retailer = _build_retailer(cfg)
    demand = cfg.demand
    demand_rng = _rng(cfg.seed, rep, _ROLE_DEMAND) if demand is not None else None
    prices = cfg.price_set()
    cap = getattr(retailer, "order_cap", None)

    w_a = np.empty(T)
    q_a = np.empty(T)
    xi_a = np.full(T, math.nan)
    profit_a = np.empty(T)
    bench_a = np.empty(T)
    cum_a = np.empty(T)
    epoch_a = np.empty(T, dtype=np.int32)
    phase_a = np.empty(T, dtype=np.int8)

    ledger = RegretLedger()
    trace = VariationTrace()
    restarts: list[RestartRecord] = []
    prev_cdf = None
    epoch_start = 1
    epoch_var = 0.0

    for t in range(1, T + 1):
        decision = supplier.decide()
        w = decision.price
        epoch_before = supplier.epoch_index
        phase_a[t - 1] = _PHASES.get(supplier.phase_tag, 0)
        epoch_a[t - 1] = epoch_before

        state = retailer.respond(w)
        q, cdf = state.order, state.cdf
        _check_consistency(cdf, q, w, mp, cap)

        if cdf is prev_cdf:
            bench = bench_a[t - 2]  # unchanged perceived distribution
        elif prices is not None:
            bench, _ = clairvoyant_profit_finite(cdf, prices, mp)
        else:
            bench, _ = clairvoyant_profit(cdf, mp)
        realized = (w - mp.c) * q
        ledger.update(bench, realized)

        if t >= 2:
            if cdf is prev_cdf:
                d = 0.0
            else:
                d = retailer.step_variation()
                if d is None:
                    d = kolmogorov_distance(prev_cdf, cdf, mp)
            trace.update(d, epoch_before)
            if t >= epoch_start + 1:
                epoch_var += d

        if demand is not None:
            xi = demand.draw(t, demand_rng.random(), T, mp)
            xi_a[t - 1] = xi
        else:
            xi = math.nan
        retailer.observe(w, q, xi)
        supplier.learn(w, q)

        if supplier.epoch_index != epoch_before:
            ev = supplier.restart_events[-1]
            restarts.append(RestartRecord(t, epoch_before, ev.delta, epoch_var))
            epoch_start = t + 1
            epoch_var = 0.0

        w_a[t - 1] = w
        q_a[t - 1] = q
        profit_a[t - 1] = realized
        bench_a[t - 1] = bench
        cum_a[t - 1] = ledger.total
        prev_cdf = cdf

    return Trajectory(
        t=np.arange(1, T + 1), w=w_a, q=q_a, xi=xi_a, profit=profit_a,
        benchmark=bench_a, cum_regret=cum_a, epoch=epoch_a, phase=phase_a,
        ledger=ledger, trace=trace, restarts=restarts,
        epochs_total=int(supplier.epoch_index) if supplier.epoch_index else 1,
        variation_total=trace.total,
    )


@dataclass
class Aggregate:
    """Pointwise mean/std across replications plus per-replication scalars."""
    t: np.ndarray
    mean_cum_regret: np.ndarray
    std_cum_regret: np.ndarray
    mean_variation: np.ndarray
    mean_epoch: np.ndarray
    final_regret: np.ndarray
    final_variation: np.ndarray
    epochs: np.ndarray
    detail: Trajectory | None = None


def _one(args) -> Trajectory:
    cfg, rep = args
    return run_episode(cfg, rep)


def run_replications(cfg: EpisodeConfig, workers: int = 1,
                     keep_detail: bool = True) -> Aggregate:
    """Mean and standard deviation of cumulative regret across independent
    replications; identical aggregates regardless of worker count because
    the reduction runs in replication order."""
    reps = range(cfg.replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(_one, [(cfg, r) for r in reps]))
    else:
        trajectories = [run_episode(cfg, r) for r in reps]

    T = cfg.T
    s1 = np.zeros(T)
    s2 = np.zeros(T)
    var_sum = np.zeros(T)
    epoch_sum = np.zeros(T)
    finals, final_vars, epochs = [], [], []
    for tr in trajectories:
        s1 += tr.cum_regret
        s2 += tr.cum_regret ** 2
        var_sum += tr.running_variation()
        epoch_sum += tr.epoch
        finals.append(tr.cum_regret[-1])
        final_vars.append(tr.variation_total)
        epochs.append(tr.epochs_total)
    n = cfg.replications
    mean = s1 / n
    std = np.sqrt(np.maximum(s2 / n - mean ** 2, 0.0))
    return Aggregate(
        t=np.arange(1, T + 1),
        mean_cum_regret=mean,
        std_cum_regret=std,
        mean_variation=var_sum / n,
        mean_epoch=epoch_sum / n,
        final_regret=np.asarray(finals),
        final_variation=np.asarray(final_vars),
        epochs=np.asarray(epochs, dtype=np.int64),
        detail=trajectories[0] if keep_detail else None,
    )
