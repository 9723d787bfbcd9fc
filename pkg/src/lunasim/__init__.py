"""Wholesale-price contract simulator: a supplier prices against a learning
retailer, and dynamic regret is measured against a clairvoyant benchmark.
"""

from lunasim.market import (
    MarketParams,
    ParametricCdf,
    StepCdf,
    best_response_order,
    cdf_eval,
    kolmogorov_distance,
    supplier_profit,
)

__version__ = "0.1.0"

__all__ = [
    "MarketParams",
    "ParametricCdf",
    "StepCdf",
    "best_response_order",
    "cdf_eval",
    "kolmogorov_distance",
    "supplier_profit",
]
