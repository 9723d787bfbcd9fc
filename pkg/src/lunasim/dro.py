"""Worst-case expectation over a phi-divergence ball around a discrete
empirical distribution, via the Lagrangian dual.

The primal problem, for losses ``l`` and empirical weights ``p_hat`` on the
sample atoms, is

    minimize   sum_i p_i * l_i
    over       p in the simplex on the atoms of p_hat
    subject to sum_i p_hat_i * phi(p_i / p_hat_i) <= eps.

Dualizing both constraints gives

    g(lam, eta) = -lam*eps + eta - lam * sum_i p_hat_i * conj((eta - l_i)/lam)

where ``conj`` is the convex conjugate of phi restricted to z >= 0.  For each
lam the optimal eta solves sum_i p_hat_i * conj'((eta - l_i)/lam) = 1 (KL has
a closed form); the outer maximization over lam is a golden-section search on
a log-spaced bracket.  The worst-case weights are recovered from the dual
optimum as p_i = p_hat_i * conj'((eta* - l_i)/lam*).

Supported divergences and conjugates (phi normalized so phi(1) = 0):

    kl         phi(z) = z ln z - z + 1      conj(y) = e^y - 1
    chi2       phi(z) = (z - 1)^2           conj(y) = y + y^2/4  (y >= -2, else -1)
    hellinger  phi(z) = (sqrt(z) - 1)^2     conj(y) = y / (1 - y)  (y < 1)
"""

from __future__ import annotations

import math

import numpy as np

from lunasim.market import MarketParams, StepCdf, best_response_order

__all__ = ["DIVERGENCES", "DroSolverError", "phi_divergence",
           "worst_case_expectation", "dro_worst_case"]

DIVERGENCES = ("kl", "chi2", "hellinger")

_LAMBDA_LO = 1e-9
_LAMBDA_HI = 1e6
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_ITERS = 72
_BISECT_ITERS = 60
_MAX_ITERS = 10_000


class DroSolverError(RuntimeError):
    """Dual solve failed to converge or produced an inconsistent optimum."""


def phi_divergence(p, p_hat, divergence: str) -> float:
    """d_phi(p || p_hat) for distributions on the same atoms (p << p_hat)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(p_hat, dtype=np.float64)
    mask = q > 0.0
    z = p[mask] / q[mask]
    if divergence == "kl":
        terms = np.where(z > 0.0, z * np.log(np.maximum(z, 1e-300)) - z + 1.0, 1.0)
    elif divergence == "chi2":
        terms = (z - 1.0) ** 2
    elif divergence == "hellinger":
        terms = (np.sqrt(z) - 1.0) ** 2
    else:
        raise DroSolverError(f"unknown divergence {divergence!r}")
    return float(np.dot(q[mask], terms))


def _conj_chi2(y: float) -> float:
    return y + 0.25 * y * y if y >= -2.0 else -1.0


def _conj_prime_chi2(y: float) -> float:
    return 1.0 + 0.5 * y if y >= -2.0 else 0.0


def _g_kl(lam: float, losses, weights, eps: float) -> float:
    l_min = losses.min()
    acc = float(np.dot(weights, np.exp(-(losses - l_min) / lam)))
    return -lam * eps + l_min - lam * math.log(acc)


def _eta_root(lam: float, losses, weights, divergence: str) -> float:
    """Solve sum_i w_i * conj'((eta - l_i)/lam) = 1 for eta by bisection."""
    l_min, l_max = float(losses.min()), float(losses.max())
    if divergence == "chi2":
        lo, hi = l_min - 2.0 * lam, l_max + 2.0 * lam

        def total(eta):
            return sum(w * _conj_prime_chi2((eta - l) / lam)
                       for w, l in zip(weights, losses))
    else:  # hellinger, conj'(y) = 1/(1-y)^2 on y < 1
        hi = lam + l_min
        lo = l_min - 4.0 * lam - (l_max - l_min)
        tries = 0

        def total(eta):
            acc = 0.0
            for w, l in zip(weights, losses):
                y = (eta - l) / lam
                if y >= 1.0:
                    return math.inf
                acc += w / ((1.0 - y) ** 2)
            return acc

        while total(lo) >= 1.0:
            lo -= 2.0 * (hi - lo)
            tries += 1
            if tries > _MAX_ITERS:
                raise DroSolverError("no bracket for hellinger eta search")
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if total(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _g_general(lam: float, losses, weights, eps: float, divergence: str) -> tuple[float, float]:
    eta = _eta_root(lam, losses, weights, divergence)
    acc = 0.0
    for w, l in zip(weights, losses):
        y = (eta - l) / lam
        if divergence == "chi2":
            acc += w * _conj_chi2(y)
        else:
            acc += w * (y / (1.0 - y)) if y < 1.0 else math.inf
    return -lam * eps + eta - lam * acc, eta


def _recover_weights(lam: float, eta: float, losses, weights, divergence: str) -> np.ndarray:
    y = (eta - losses) / lam
    if divergence == "kl":
        z = np.exp(y)
    elif divergence == "chi2":
        z = np.maximum(0.0, 1.0 + 0.5 * y)
    else:
        z = 1.0 / (1.0 - np.minimum(y, 1.0 - 1e-12)) ** 2
    p = weights * z
    total = p.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DroSolverError("primal recovery produced a degenerate distribution")
    return p / total


def worst_case_expectation(losses, weights, eps: float, divergence: str,
                           ) -> tuple[float, np.ndarray]:
    """min E_p[l] over the eps-ball; returns (value, worst-case weights)."""
    if divergence not in DIVERGENCES:
        raise DroSolverError(f"unknown divergence {divergence!r}")
    if eps < 0.0:
        raise DroSolverError(f"radius must be >= 0, got {eps}")
    losses = np.asarray(losses, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    base = float(np.dot(weights, losses))
    if eps == 0.0 or float(losses.max() - losses.min()) == 0.0:
        return base, weights.copy()

    def g(lam: float) -> float:
        if divergence == "kl":
            return _g_kl(lam, losses, weights, eps)
        return _g_general(lam, losses, weights, eps, divergence)[0]

    a, b = math.log(_LAMBDA_LO), math.log(_LAMBDA_HI)
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = g(math.exp(x1)), g(math.exp(x2))
    for _ in range(_GOLDEN_ITERS):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = g(math.exp(x2))
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = g(math.exp(x1))
    lam = math.exp(0.5 * (a + b))
    if divergence == "kl":
        value = _g_kl(lam, losses, weights, eps)
        l_min = losses.min()
        acc = float(np.dot(weights, np.exp(-(losses - l_min) / lam)))
        eta = l_min - lam * math.log(acc)
    else:
        value, eta = _g_general(lam, losses, weights, eps, divergence)
    worst = _recover_weights(lam, eta, losses, weights, divergence)
    # duality gap: the recovered primal should certify the dual bound
    primal = float(np.dot(worst, losses))
    scale = max(1.0, float(np.abs(losses).max()))
    if primal < value - 1e-7 * scale:
        raise DroSolverError(
            f"duality gap {primal - value:.3e} below tolerance; solver failure"
        )
    return value, worst


# ---------------------------------------------------------------------------
# Robust newsvendor order: outer maximization over q
# ---------------------------------------------------------------------------

def _candidate_orders(atoms: np.ndarray, q_cap: float | None) -> np.ndarray:
    cand = [0.0] + [float(a) for a in atoms]
    if q_cap is not None:
        cand = [c for c in cand if c <= q_cap] + [float(q_cap)]
    return np.unique(np.asarray(cand, dtype=np.float64))


def _repair_consistency(atoms, worst, q_star, target):
    """Nudge dual-recovered weights off a quantile tie so the best response to
    the worst case reproduces q_star exactly.  Shifts at most ~1e-6 mass."""
    worst = worst.copy()
    cum = np.cumsum(worst)
    k = int(np.searchsorted(atoms, q_star, side="right")) - 1
    bump = 1e-9
    if k >= 0 and q_star > 0.0 and cum[k] < target:
        delta = target - cum[k] + bump
        src = len(atoms) - 1
        if src <= k or worst[src] < delta:
            raise DroSolverError("cannot restore order consistency (mass above)")
        worst[src] -= delta
        worst[k] += delta
        cum = np.cumsum(worst)
    if k >= 1:
        over = float(np.max(cum[:k])) - target
        if over >= 0.0:
            delta = over + bump
            j = int(np.argmax(cum[:k] >= target))
            if worst[j] < delta:
                raise DroSolverError("cannot restore order consistency (mass below)")
            worst[j] -= delta
            worst[k] += delta
    return worst / worst.sum()


def dro_worst_case(empirical: StepCdf, divergence: str, eps: float, w: float,
                   mp: MarketParams, q_cap: float | None = None,
                   ) -> tuple[float, StepCdf]:
    """Distributionally robust order and its worst-case distribution.

    The order solves max_q min_{F in ball} E_F[s*min(q, xi) - w*q]; the inner
    minimum runs over distributions on the empirical atoms.  The objective is
    concave piecewise-linear in q for each F, so the outer max is attained on
    {0} | atoms | {q_cap} and a candidate scan suffices.  Ties break toward
    the smallest order, which matches the minimal-quantile best response.
    """
    if eps < 0.0:
        raise DroSolverError(f"radius must be >= 0, got {eps}")
    atoms = empirical.support
    weights = empirical.pmf()
    if eps == 0.0:
        order = best_response_order(empirical, w, mp)
        if q_cap is not None:
            order = min(order, q_cap)
        return order, empirical

    cands = _candidate_orders(atoms, q_cap)
    values = np.empty(cands.size)
    worsts: list[np.ndarray | None] = []
    for j, q in enumerate(cands):
        if q == 0.0:
            values[j] = 0.0
            worsts.append(None)
            continue
        losses = mp.s * np.minimum(q, atoms)
        inner, wc = worst_case_expectation(losses, weights, eps, divergence)
        values[j] = inner - w * q
        worsts.append(wc)

    scale = max(1.0, mp.s * float(atoms.max()))
    best = float(values.max())
    j_star = int(np.argmax(values >= best - 1e-12 * scale))
    q_star = float(cands[j_star])

    wc = worsts[j_star]
    if wc is None:
        # order 0: expose the distribution that devalues the first unit
        positive = cands[cands > 0.0]
        if positive.size:
            losses = mp.s * np.minimum(float(positive[0]), atoms)
            _, wc = worst_case_expectation(losses, weights, eps, divergence)
        else:
            wc = weights
    worst_cdf = StepCdf(atoms, np.cumsum(wc) / np.sum(wc))

    target = 1.0 - w / mp.s
    order_check = best_response_order(worst_cdf, w, mp)
    if q_cap is not None:
        order_check = min(order_check, q_cap)
    if order_check != q_star and 0.0 < target <= 1.0 and q_star in atoms:
        wc = _repair_consistency(atoms, worst_cdf.pmf(), q_star, target)
        worst_cdf = StepCdf(atoms, np.cumsum(wc))
        order_check = best_response_order(worst_cdf, w, mp)
        if q_cap is not None:
            order_check = min(order_check, q_cap)
        if order_check != q_star:
            raise DroSolverError(
                f"worst-case distribution inconsistent with order {q_star}"
            )
    return q_star, worst_cdf
