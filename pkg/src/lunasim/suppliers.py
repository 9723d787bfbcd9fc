"""Supplier pricing policies.

Every policy here sees only (price, order) feedback: the interfaces expose
neither demand realizations nor the retailer's perceived distributions.
Policies keep an internal round clock; the engine calls ``decide()`` for the
next price and then ``learn(price, order)`` with the observed order.

Implemented policies:

- ``StatPolicy``      sqrt(T)-grid explore-then-commit for stationary markets.
- ``LunaPolicy``      epoch-based explore/exploit with restart detection for
                      discrete demand support.
- ``LunacPolicy``     LUNA on a uniform quantity grid, coupling the continuous
                      case to the discrete one through rounded feedback.
- ``LunacnPolicy``    exponential-weights meta layer choosing the grid size
                      per block (bandit-over-bandit).
- ``LunafPolicy``     LUNA restricted to a finite admissible price set via
                      ceil/floor projections.
- ``Exp3SPolicy``     adversarial-bandit baseline with weight sharing.
- ``RestartBanditPolicy``  deterministic restart bandit baseline without the
                      newsvendor structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lunasim.market import MarketError, MarketParams

__all__ = [
    "PriceDecision",
    "EpochState",
    "RestartEvent",
    "luna_exploration_price",
    "luna_delta",
    "luna_exploit_prices",
    "luna_probe_indices",
    "luna_sample_probe",
    "luna_restart_check",
    "lunac_feedback_map",
    "lunac_grid",
    "luna_opt_k",
    "luna_obl_k",
    "lunac_opt_n",
    "lunac_obl_n",
    "bob_schedule",
    "exp3_gamma",
    "StatPolicy",
    "LunaPolicy",
    "LunacPolicy",
    "LunacnPolicy",
    "LunafPolicy",
    "Exp3SPolicy",
    "RestartBanditPolicy",
]


@dataclass(frozen=True)
class PriceDecision:
    """Price to post this round plus the policy's internal tag: the probe
    index m_t for the LUNA family (0 = surrogate price) or an arm id for the
    bandit baselines; exploration rounds are tagged by grid position."""
    price: float
    tag: int


@dataclass(frozen=True)
class RestartEvent:
    """Epoch restart fired at internal round ``t`` with margin ``delta``."""
    t: int
    epoch: int
    delta: float


@dataclass
class EpochState:
    """Per-epoch memory filled by the exploration phase."""
    epoch: int
    tau0: int                     # last round of the previous epoch
    phase: str = "explore"        # 'explore' | 'exploit'
    profits: list = field(default_factory=list)
    orders: list = field(default_factory=list)
    k_star: int = 0               # 1-based best exploratory index
    w_star: float = 0.0
    y_star: float = 0.0           # order observed at the best price
    phi_star: float = 0.0


# ---------------------------------------------------------------------------
# LUNA building blocks
# ---------------------------------------------------------------------------

def luna_exploration_price(k: int, K: int, mp: MarketParams) -> float:
    """k-th exploratory price (k-1)(s-c)/K + c for k in 1..K."""
    if not 1 <= k <= K:
        raise MarketError(f"exploration index {k} outside 1..{K}")
    return (k - 1) * (mp.s - mp.c) / K + mp.c


def luna_delta(t: int, tau0: int, M: int) -> float:
    """Sub-optimality margin sqrt(M / (t - tau0))."""
    if t <= tau0:
        raise MarketError(f"need t > tau0, got t={t}, tau0={tau0}")
    return math.sqrt(M / (t - tau0))


def luna_probe_indices(y_grid) -> list[int]:
    """1-based indices of probe-able support points (y_m > 0)."""
    idx = [m + 1 for m, y in enumerate(y_grid) if y > 0.0]
    if not idx:
        raise MarketError("support has no positive point to probe")
    return idx


def luna_exploit_prices(state: EpochState, delta: float, y_grid, K: int,
                        mp: MarketParams) -> tuple[float, dict[int, float]]:
    """Surrogate price w0 and probe prices {m: w_m} for the current round.

    Probe prices are built only for y_m > 0 and clamped into [0, s].  A
    degenerate exploration (y_star == 0) pins the surrogate at the best
    exploratory price itself.
    """
    probes: dict[int, float] = {}
    for m in luna_probe_indices(y_grid):
        y = y_grid[m - 1]
        w = (state.phi_star + delta + y * mp.s / K) / y + mp.c
        probes[m] = min(max(w, 0.0), mp.s)
    if state.y_star > 0.0:
        w0 = max(state.w_star - delta / state.y_star, 0.0)
    else:
        w0 = state.w_star
    return w0, probes


def luna_sample_probe(t: int, tau0: int, M: int, probe_idx, rng) -> int:
    """Draw m_t: 0 w.p. 1 - sqrt(M/(t-tau0)) (capped at 1), else uniform over
    the probe-able indices."""
    p = min(1.0, math.sqrt(M / (t - tau0)))
    if rng.random() < 1.0 - p:
        return 0
    return probe_idx[rng.integers(len(probe_idx))]


def luna_restart_check(m_t: int, q_observed: float, state: EpochState,
                       y_grid) -> bool:
    """Epoch ends when a probe order reaches its calibrated level, or the
    surrogate order falls below the exploration-phase order."""
    if m_t >= 1:
        return q_observed >= y_grid[m_t - 1]
    return q_observed < state.y_star


def lunac_feedback_map(q: float, z_grid) -> float:
    """Round an order up to the quantity grid: z_n with q in (z_{n-1}, z_n];
    0 maps to 0."""
    if q == 0.0:
        return 0.0
    if q < 0.0 or q > z_grid[-1] + 1e-9:
        raise MarketError(f"order {q} outside the grid range [0, {z_grid[-1]}]")
    i = int(np.searchsorted(z_grid, min(q, z_grid[-1]), side="left"))
    return float(z_grid[i])


def lunac_grid(N: int, xi_bar: float) -> np.ndarray:
    """Equally spaced quantity grid {(n-1) xi_bar / (N-1)}; N = 1 degenerates
    to the single point {xi_bar}."""
    if N < 1:
        raise MarketError(f"grid size must be >= 1, got {N}")
    if N == 1:
        return np.asarray([xi_bar])
    return np.arange(N) * (xi_bar / (N - 1))


# Tuned parameter choices (ceil of the rate-optimal expressions).

def luna_opt_k(T: int, V: float, xi_bar: float) -> int:
    return max(1, math.ceil(T ** (1 / 3) * V ** (-1 / 3) * xi_bar ** (-1 / 3)))


def luna_obl_k(T: int, xi_bar: float) -> int:
    return max(1, math.ceil(xi_bar ** (-1 / 3) * T ** (1 / 3)))


def lunac_opt_n(T: int, V: float, xi_bar: float) -> int:
    return max(2, math.ceil(xi_bar ** (-1 / 4) * V ** (-1 / 4) * T ** (1 / 4)))


def lunac_obl_n(T: int, xi_bar: float) -> int:
    return max(2, math.ceil(xi_bar ** (-1 / 4) * T ** (1 / 4)))


def bob_schedule(T: int, xi_bar: float) -> tuple[int, int, list[int]]:
    """Block length H, ladder exponent z, and grid-size arms J for the
    bandit-over-bandit meta layer."""
    H = max(2, math.floor(xi_bar ** (-1 / 4) * T ** (1 / 4)))
    z = max(1, math.ceil(math.log(H)))
    arms = [math.floor(H ** (j / z)) for j in range(z + 1)]
    return H, z, arms


def exp3_gamma(z: int, n_blocks: int) -> float:
    """Exploration rate min{1, sqrt((z+1) ln(z+1) / ((e-1) blocks))}."""
    return min(1.0, math.sqrt((z + 1) * math.log(z + 1)
                              / ((math.e - 1.0) * n_blocks)))


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

class _SupplierBase:
    """Internal clock plus the attributes the engine reads for annotations."""

    def __init__(self, mp: MarketParams):
        self.mp = mp
        self.t = 0
        self.restart_events: list[RestartEvent] = []
        self._pending: PriceDecision | None = None

    @property
    def epoch_index(self) -> int:
        return 0

    @property
    def phase_tag(self) -> str:
        return ""

    def decide(self) -> PriceDecision:
        d = self._decide()
        if not -1e-12 <= d.price <= self.mp.s + 1e-12:
            raise MarketError(f"emitted price {d.price} outside [0, s]")
        self._pending = d
        return d

    def learn(self, price: float, order: float) -> None:
        self.t += 1
        self._learn(price, order)
        self._pending = None


class StatPolicy(_SupplierBase):
    """Explore each of ceil(sqrt(T)) grid prices once, then commit to the
    empirically best one."""

    def __init__(self, mp: MarketParams, T: int):
        super().__init__(mp)
        if T < 1:
            raise MarketError(f"horizon must be >= 1, got {T}")
        self.m = math.ceil(math.sqrt(T))
        self.grid = [(k + 1) * mp.s / self.m for k in range(self.m)]
        self.profits: list[float] = []
        self.best = 0

    @property
    def phase_tag(self) -> str:
        return "explore" if self.t < self.m else "exploit"

    def _decide(self) -> PriceDecision:
        nxt = self.t + 1
        if nxt <= self.m:
            return PriceDecision(self.grid[nxt - 1], nxt)
        return PriceDecision(self.grid[self.best], self.best + 1)

    def _learn(self, price: float, order: float) -> None:
        if self.t <= self.m:
            self.profits.append((price - self.mp.c) * order)
            if self.t == self.m:
                self.best = int(np.argmax(self.profits))


class LunaPolicy(_SupplierBase):
    """Epoch-based pricing for discrete demand support.

    Each epoch explores a K-point price grid once, locks in the best observed
    (price, order, profit) triple, then exploits: most rounds price at a
    slightly discounted surrogate of the best price, occasionally probing
    prices calibrated so that a large order certifies the incumbent is at
    least delta_t sub-optimal.  Either certificate restarts the epoch.
    """

    def __init__(self, mp: MarketParams, y_grid, K: int, rng):
        super().__init__(mp)
        if K < 1:
            raise MarketError(f"grid size K must be >= 1, got {K}")
        self.y_grid = [float(y) for y in y_grid]
        if any(b <= a for a, b in zip(self.y_grid, self.y_grid[1:])):
            raise MarketError("support must be strictly increasing")
        self.M = len(self.y_grid)
        self.K = K
        self.rng = rng
        self.probe_idx = luna_probe_indices(self.y_grid)
        self.state = EpochState(epoch=1, tau0=0)

    @property
    def epoch_index(self) -> int:
        return self.state.epoch

    @property
    def phase_tag(self) -> str:
        return self.state.phase

    def _decide(self) -> PriceDecision:
        st = self.state
        nxt = self.t + 1
        k = nxt - st.tau0
        if st.phase == "explore":
            return PriceDecision(luna_exploration_price(k, self.K, self.mp), k)
        delta = luna_delta(nxt, st.tau0, self.M)
        m_t = luna_sample_probe(nxt, st.tau0, self.M, self.probe_idx, self.rng)
        w0, probes = luna_exploit_prices(st, delta, self.y_grid, self.K, self.mp)
        return PriceDecision(probes[m_t] if m_t >= 1 else w0, m_t)

    def _learn(self, price: float, order: float) -> None:
        st = self.state
        if st.phase == "explore":
            st.profits.append((price - self.mp.c) * order)
            st.orders.append(order)
            if self.t - st.tau0 == self.K:
                k_star = int(np.argmax(st.profits))  # first max on ties
                st.k_star = k_star + 1
                st.w_star = luna_exploration_price(st.k_star, self.K, self.mp)
                st.y_star = st.orders[k_star]
                st.phi_star = st.profits[k_star]
                st.phase = "exploit"
            return
        m_t = self._pending.tag
        if luna_restart_check(m_t, order, st, self.y_grid):
            delta = luna_delta(self.t, st.tau0, self.M)
            self.restart_events.append(RestartEvent(self.t, st.epoch, delta))
            self.state = EpochState(epoch=st.epoch + 1, tau0=self.t)


class LunacPolicy(_SupplierBase):
    """Continuous-demand wrapper: runs LUNA on a uniform quantity grid and
    feeds it orders rounded up to the grid."""

    def __init__(self, mp: MarketParams, N: int, K: int, rng):
        super().__init__(mp)
        self.z_grid = lunac_grid(N, mp.xi_bar)
        self.inner = LunaPolicy(mp, self.z_grid.tolist(), K, rng)

    @property
    def epoch_index(self) -> int:
        return self.inner.epoch_index

    @property
    def phase_tag(self) -> str:
        return self.inner.phase_tag

    @property
    def restart_events(self) -> list[RestartEvent]:  # type: ignore[override]
        return self.inner.restart_events

    @restart_events.setter
    def restart_events(self, value) -> None:
        pass  # the inner policy owns the event log

    def _decide(self) -> PriceDecision:
        return self.inner.decide()

    def _learn(self, price: float, order: float) -> None:
        self.inner.learn(price, lunac_feedback_map(order, self.z_grid))


class LunacnPolicy(_SupplierBase):
    """Bandit-over-bandit meta layer: the horizon is cut into blocks of
    length H; inside each block a fresh grid size N_i = floor(H^{j_i/z}) is
    drawn by exponential weights over j in 0..z and a fresh LUNAC runs with
    it; block profit (affinely mapped into [0, 1]) updates the weights."""

    def __init__(self, mp: MarketParams, T: int, K: int, rng):
        super().__init__(mp)
        self.T = T
        self.K = K
        self.rng = rng
        self.H, self.z, self.arms = bob_schedule(T, mp.xi_bar)
        self.n_blocks = math.ceil(T / self.H)
        self.gamma = exp3_gamma(self.z, self.n_blocks)
        self.weights = np.ones(self.z + 1)
        self.block = 0
        self.block_round = 0
        self.block_profit = 0.0
        self.current_j = 0
        self.sub: LunacPolicy | None = None

    @property
    def epoch_index(self) -> int:
        return self.sub.epoch_index if self.sub is not None else 0

    @property
    def phase_tag(self) -> str:
        return self.sub.phase_tag if self.sub is not None else ""

    def arm_probabilities(self) -> np.ndarray:
        p = (1.0 - self.gamma) * self.weights / self.weights.sum() \
            + self.gamma / (self.z + 1)
        return p

    def _start_block(self) -> None:
        p = self.arm_probabilities()
        u = self.rng.random()
        self.current_j = int(np.searchsorted(np.cumsum(p), u))
        n_i = max(1, self.arms[self.current_j])
        self.sub = LunacPolicy(self.mp, n_i, self.K, self.rng)
        self.block += 1
        self.block_round = 0
        self.block_profit = 0.0

    def _finish_block(self) -> None:
        length = self.block_round
        cap = length * (self.mp.s - self.mp.c) * self.mp.xi_bar
        if not -cap - 1e-9 <= self.block_profit <= cap + 1e-9:
            raise MarketError(
                f"block profit {self.block_profit} outside [-{cap}, {cap}]: "
                "reward accounting bug")
        reward = 0.5 + 0.5 * self.block_profit / cap
        p = self.arm_probabilities()
        self.weights[self.current_j] *= math.exp(
            self.gamma / ((self.z + 1) * p[self.current_j]) * reward)
        self.weights /= self.weights.max()
        self.sub = None

    def _decide(self) -> PriceDecision:
        if self.sub is None:
            self._start_block()
        return self.sub.decide()

    def _learn(self, price: float, order: float) -> None:
        self.sub.learn(price, order)
        self.block_round += 1
        self.block_profit += (price - self.mp.c) * order
        if self.block_round == self.H or self.t == self.T:
            self._finish_block()


def _ceil_to(prices: np.ndarray, x: float) -> float:
    """Smallest admissible price >= x (clamped to the top of the set)."""
    i = int(np.searchsorted(prices, x, side="left"))
    return float(prices[min(i, prices.size - 1)])


def _floor_to(prices: np.ndarray, x: float) -> float:
    """Largest admissible price <= x (clamped to the bottom of the set)."""
    i = int(np.searchsorted(prices, x, side="right")) - 1
    return float(prices[max(i, 0)])


class LunafPolicy(_SupplierBase):
    """LUNA over a finite admissible price set: exploration tries every
    admissible price once; exploitation projects the probe prices up and the
    surrogate price down onto the set."""

    def __init__(self, mp: MarketParams, y_grid, prices, rng):
        super().__init__(mp)
        self.prices = np.sort(np.asarray(prices, dtype=np.float64))
        if self.prices.size < 1 or self.prices[0] < 0.0 or self.prices[-1] > mp.s:
            raise MarketError("price set must be non-empty within [0, s]")
        self.d = self.prices.size
        self.y_grid = [float(y) for y in y_grid]
        self.M = len(self.y_grid)
        self.rng = rng
        self.probe_idx = luna_probe_indices(self.y_grid)
        self.state = EpochState(epoch=1, tau0=0)
        self.gap_term = 0.0

    @property
    def epoch_index(self) -> int:
        return self.state.epoch

    @property
    def phase_tag(self) -> str:
        return self.state.phase

    def _exploit_prices(self, delta: float) -> tuple[float, dict[int, float]]:
        st = self.state
        probes = {}
        for m in self.probe_idx:
            y = self.y_grid[m - 1]
            w = (st.phi_star + self.gap_term + delta) / y + self.mp.c
            probes[m] = _ceil_to(self.prices, min(max(w, 0.0), self.mp.s))
        if st.y_star > 0.0:
            w0 = max(st.w_star - delta / st.y_star, 0.0)
        else:
            w0 = st.w_star
        return _floor_to(self.prices, w0), probes

    def _decide(self) -> PriceDecision:
        st = self.state
        nxt = self.t + 1
        k = nxt - st.tau0
        if st.phase == "explore":
            return PriceDecision(float(self.prices[k - 1]), k)
        delta = luna_delta(nxt, st.tau0, self.M)
        m_t = luna_sample_probe(nxt, st.tau0, self.M, self.probe_idx, self.rng)
        w0, probes = self._exploit_prices(delta)
        return PriceDecision(probes[m_t] if m_t >= 1 else w0, m_t)

    def _learn(self, price: float, order: float) -> None:
        st = self.state
        if st.phase == "explore":
            st.profits.append((price - self.mp.c) * order)
            st.orders.append(order)
            if self.t - st.tau0 == self.d:
                j_star = int(np.argmax(st.profits))
                st.k_star = j_star + 1
                st.w_star = float(self.prices[j_star])
                st.y_star = st.orders[j_star]
                st.phi_star = st.profits[j_star]
                # discretization-error surrogate; no right neighbour at the top
                gap = (self.prices[j_star + 1] - self.prices[j_star]) \
                    if j_star + 1 < self.d else 0.0
                self.gap_term = float(gap) * st.y_star
                st.phase = "exploit"
            return
        m_t = self._pending.tag
        if luna_restart_check(m_t, order, st, self.y_grid):
            delta = luna_delta(self.t, st.tau0, self.M)
            self.restart_events.append(RestartEvent(self.t, st.epoch, delta))
            self.state = EpochState(epoch=st.epoch + 1, tau0=self.t)
            self.gap_term = 0.0


class Exp3SPolicy(_SupplierBase):
    """Exponential weights over a finite price set with uniform smoothing and
    per-round weight sharing, tuned from (d, T, budget); rewards are profits
    normalized by (s - c) xi_bar and clipped into [0, 1]."""

    def __init__(self, mp: MarketParams, prices, T: int, budget: float, rng):
        super().__init__(mp)
        self.prices = np.asarray(prices, dtype=np.float64)
        self.d = self.prices.size
        self.rng = rng
        self.T = T
        d, e = self.d, math.e
        self.gamma = min(1.0, math.sqrt(
            d * (budget * math.log(d * T) + e) / ((e - 1.0) * T)))
        self.alpha = 1.0 / T
        self.weights = np.ones(self.d)
        self.scale = (mp.s - mp.c) * mp.xi_bar
        self._arm = 0
        self._p = None

    def arm_probabilities(self) -> np.ndarray:
        return (1.0 - self.gamma) * self.weights / self.weights.sum() \
            + self.gamma / self.d

    def _decide(self) -> PriceDecision:
        self._p = self.arm_probabilities()
        u = self.rng.random()
        self._arm = int(np.searchsorted(np.cumsum(self._p), u))
        return PriceDecision(float(self.prices[self._arm]), self._arm)

    def _learn(self, price: float, order: float) -> None:
        reward = (price - self.mp.c) * order / self.scale
        x_hat = min(max(reward, 0.0), 1.0) / self._p[self._arm]
        total = self.weights.sum()
        self.weights[self._arm] *= math.exp(self.gamma * x_hat / self.d)
        self.weights += math.e * self.alpha / self.d * total
        if self.weights.max() > 1e100:
            self.weights /= self.weights.max()


class RestartBanditPolicy(_SupplierBase):
    """Deterministic restart bandit: explore every arm once, exploit the best
    recorded arm while probing uniformly with probability sqrt(d/(t-tau0));
    restart when a probed arm's normalized reward drifts from its recorded
    value by more than the working threshold sqrt(d/(t-tau0))."""

    def __init__(self, mp: MarketParams, prices, rng):
        super().__init__(mp)
        self.prices = np.asarray(prices, dtype=np.float64)
        self.d = self.prices.size
        self.rng = rng
        self.scale = (mp.s - mp.c) * mp.xi_bar
        self.tau0 = 0
        self.epoch = 1
        self.recorded = np.zeros(self.d)
        self.best = 0
        self.exploring = True
        self._probed = False

    @property
    def epoch_index(self) -> int:
        return self.epoch

    @property
    def phase_tag(self) -> str:
        return "explore" if self.exploring else "exploit"

    def _decide(self) -> PriceDecision:
        nxt = self.t + 1
        k = nxt - self.tau0
        if self.exploring:
            return PriceDecision(float(self.prices[k - 1]), k - 1)
        p = min(1.0, math.sqrt(self.d / (nxt - self.tau0)))
        self._probed = self.rng.random() < p
        arm = int(self.rng.integers(self.d)) if self._probed else self.best
        return PriceDecision(float(self.prices[arm]), arm)

    def _learn(self, price: float, order: float) -> None:
        reward = (price - self.mp.c) * order / self.scale
        k = self.t - self.tau0
        if self.exploring:
            self.recorded[k - 1] = reward
            if k == self.d:
                self.best = int(np.argmax(self.recorded))
                self.exploring = False
            return
        arm = self._pending.tag
        threshold = math.sqrt(self.d / (self.t - self.tau0))
        if self._probed and abs(reward - self.recorded[arm]) > threshold:
            self.restart_events.append(
                RestartEvent(self.t, self.epoch, threshold))
            self.tau0 = self.t
            self.epoch += 1
            self.exploring = True
