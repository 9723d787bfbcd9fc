"""Log-log slope analysis of regret curves."""

from __future__ import annotations

import numpy as np

__all__ = ["AnalysisError", "slope_estimate", "horizon_slope"]


class AnalysisError(ValueError):
    pass


def slope_estimate(cum_regret, window: tuple[int, int] | None = None) -> float:
    """Least-squares slope of log10(cumulative regret) against log10(t).

    ``window`` is an inclusive round range; the default is [T/10, T].
    Non-positive values inside the window are excluded; fewer than 10 usable
    points is an error.
    """
    y = np.asarray(cum_regret, dtype=np.float64)
    T = y.size
    if window is None:
        window = (max(1, T // 10), T)
    lo, hi = window
    if not 1 <= lo <= hi <= T:
        raise AnalysisError(f"window {window} outside 1..{T}")
    t = np.arange(lo, hi + 1)
    seg = y[lo - 1:hi]
    keep = seg > 0.0
    if keep.sum() < 10:
        raise AnalysisError(
            f"only {int(keep.sum())} positive points in window; need >= 10")
    return float(np.polyfit(np.log10(t[keep]), np.log10(seg[keep]), 1)[0])


def horizon_slope(horizons, final_regrets) -> float:
    """Least-squares slope of log10(final regret) against log10(T) across a
    ladder of horizons: the empirical growth exponent of Reg(T)."""
    T = np.asarray(horizons, dtype=np.float64)
    y = np.asarray(final_regrets, dtype=np.float64)
    if T.size != y.size or T.size < 2:
        raise AnalysisError("need two or more (horizon, regret) pairs")
    if np.any(y <= 0.0):
        raise AnalysisError("final regrets must be positive for a log-log fit")
    return float(np.polyfit(np.log10(T), np.log10(y), 1)[0])
