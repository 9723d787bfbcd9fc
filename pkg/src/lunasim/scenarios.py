"""Scenario catalog: named experiment presets resolved from a parsed config.

Presets mirror the four headline experiments: LUNA tunings on the scripted
drifting-Bernoulli market, policy comparisons on the scripted and SAA
markets over a finite sqrt(T)-point price set, and the semi-synthetic
monthly-bootstrap market built from ingested weekly sales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from lunasim.config import ConfigError
from lunasim.dataset import ingest_weekly_sales
from lunasim.engine import (
    DemandSpec,
    EpisodeConfig,
    RetailerSpec,
    SinusoidalBernoulliScript,
    SupplierSpec,
)
from lunasim.market import MarketParams

__all__ = ["ExperimentSpec", "SCENARIOS", "scenario_catalog", "resolve"]


@dataclass
class ExperimentSpec:
    """Fully resolved experiment: one episode config per policy under test."""
    scenario: str
    T: int
    seed: int
    replications: int
    workers: int
    episodes: list[tuple[str, EpisodeConfig]]
    out_dir: Path
    emit_csv: bool
    emit_svg: bool
    window: tuple[int, int]
    values: dict = field(default_factory=dict)  # resolved config echo


def _bernoulli_market(values: dict) -> MarketParams:
    return MarketParams(s=values["market.s"], c=values["market.c"],
                        xi_bar=1.0, y_grid=(0.0, 1.0))


def _luna_discrete(values: dict) -> list[tuple[str, EpisodeConfig]]:
    T, V = values["run.T"], values["run.V"]
    mp = _bernoulli_market(values)
    retailer = RetailerSpec("scripted", script=SinusoidalBernoulliScript(T, V))
    common = dict(T=T, mp=mp, retailer=retailer, seed=values["run.seed"],
                  replications=values["run.replications"])
    k_over = values["supplier.k"] or None
    return [
        ("luna-opt-k", EpisodeConfig(
            supplier=SupplierSpec("luna", label="luna-opt-k", K=k_over, V_hint=V),
            **common)),
        ("luna-obl-k", EpisodeConfig(
            supplier=SupplierSpec("luna", label="luna-obl-k", K=k_over),
            **common)),
    ]


def _comparison(values: dict, retailer: RetailerSpec,
                demand: DemandSpec | None, mp: MarketParams,
                exp3_budget: float) -> list[tuple[str, EpisodeConfig]]:
    T = values["run.T"]
    d = math.ceil(math.sqrt(T))
    common = dict(T=T, mp=mp, retailer=retailer, demand=demand,
                  seed=values["run.seed"],
                  replications=values["run.replications"], price_count=d)
    return [
        ("lunaf", EpisodeConfig(supplier=SupplierSpec("lunaf"), **common)),
        ("exp3s", EpisodeConfig(
            supplier=SupplierSpec("exp3s", budget=exp3_budget), **common)),
        ("restart-bandit", EpisodeConfig(
            supplier=SupplierSpec("restart"), **common)),
    ]


def _compare_scripted(values: dict) -> list[tuple[str, EpisodeConfig]]:
    T, V = values["run.T"], values["run.V"]
    script = SinusoidalBernoulliScript(T, V)
    retailer = RetailerSpec("scripted", script=script)
    return _comparison(values, retailer, None, _bernoulli_market(values),
                       exp3_budget=script.total_variation())


def _compare_saa(values: dict) -> list[tuple[str, EpisodeConfig]]:
    T, V = values["run.T"], values["run.V"]
    demand = DemandSpec("sinusoidal", V=V)
    return _comparison(values, RetailerSpec("saa"), demand,
                       _bernoulli_market(values),
                       exp3_budget=math.log(T) + 1.0)


def _avocado(values: dict) -> list[tuple[str, EpisodeConfig]]:
    path = values.get("dataset.path")
    if not path:
        raise ConfigError("avocado scenario requires dataset.path")
    data = ingest_weekly_sales(path)
    xi_bar = float(data.max_demand())
    if xi_bar <= 0.0:
        raise ConfigError("dataset demand is identically zero")
    grid = tuple(float(k) for k in range(int(xi_bar) + 1))
    mp = MarketParams(s=values["market.s"], c=values["market.c"],
                      xi_bar=xi_bar, y_grid=grid)
    demand = DemandSpec("bootstrap", pools=data.pools)
    T = values["run.T"]
    return _comparison(values, RetailerSpec("saa"), demand, mp,
                       exp3_budget=math.log(T) + 1.0)


SCENARIOS = {
    "luna-discrete": (_luna_discrete, 100_000,
                      "LUNA opt-K vs obl-K on the scripted drifting-Bernoulli market"),
    "compare-scripted": (_compare_scripted, 100_000,
                         "LUNAF vs Exp3.S vs restart bandit, scripted retailer"),
    "compare-saa": (_compare_saa, 100_000,
                    "LUNAF vs Exp3.S vs restart bandit, SAA retailer, drifting demand"),
    "avocado": (_avocado, 3_650,
                "policy comparison on monthly-bootstrapped weekly sales data"),
}


def scenario_catalog() -> list[tuple[str, str]]:
    return [(name, desc) for name, (_, _, desc) in sorted(SCENARIOS.items())]


def resolve(values: dict, out_root: Path | None = None) -> ExperimentSpec:
    """Turn parsed config values into a runnable experiment."""
    name = values["scenario"]
    if name not in SCENARIOS:
        known = ", ".join(sorted(SCENARIOS))
        raise ConfigError(f"unknown scenario {name!r}; catalog: {known}")
    builder, default_T, _ = SCENARIOS[name]
    values = dict(values)
    values.setdefault("run.T", default_T)
    T = values["run.T"]

    lo = values["analysis.window_lo"] or max(1, T // 10)
    hi = values["analysis.window_hi"] or T
    if not 1 <= lo <= hi <= T:
        raise ConfigError(f"analysis window [{lo}, {hi}] outside 1..{T}")

    out_dir = Path(values["output.dir"])
    if out_root is not None and not out_dir.is_absolute():
        out_dir = out_root / out_dir

    return ExperimentSpec(
        scenario=name,
        T=T,
        seed=values["run.seed"],
        replications=values["run.replications"],
        workers=values["run.workers"],
        episodes=builder(values),
        out_dir=out_dir,
        emit_csv=values["output.csv"],
        emit_svg=values["output.svg"],
        window=(lo, hi),
        values=values,
    )
