"""Shared model primitives for the test suite."""

import warnings

import numpy as np

from procurement_entry import AuctionEnvironment, CopulaModel, ValueDistribution

THETA0 = 5.54

# recovery design: Frank(5.54), ScaledBeta(2, 2) on [0.5, 1.5]
DESIGN_P = {5: 0.45, 8: 0.30, 12: 0.18}
DESIGN_KAPPA = {5: 0.02463628577217729, 8: 0.026344554272024735, 12: 0.030886786269925727}

# TxDoT-like grid CDF: support [0.47, 1.56], F(1.0) = 0.29, median 1.202
TXDOT_V = [0.47, 1.0, 1.202, 1.56]
TXDOT_F = [0.0, 0.29, 0.5, 1.0]


def design_values() -> ValueDistribution:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ValueDistribution.scaled_beta(2.0, 2.0, 0.5, 1.5)


def txdot_values() -> ValueDistribution:
    return ValueDistribution.from_grid(TXDOT_V, TXDOT_F)


def design_env(n: int, fmt: str = "hard", theta: float = THETA0, reserve=None) -> AuctionEnvironment:
    return AuctionEnvironment(n, DESIGN_KAPPA[n], fmt, design_values(), CopulaModel.frank(theta), reserve)


def txdot_env(n: int = 10, fmt: str = "hard", theta: float = THETA0, kappa: float = 0.052, reserve=None):
    if fmt == "reserve" and reserve is None:
        reserve = 1.0
    return AuctionEnvironment(n, kappa, fmt, txdot_values(), CopulaModel.frank(theta), reserve)


def brute_force_isotonic(q: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float]:
    """Box-constrained weighted isotonic least squares by enumerating block partitions.

    ``q`` has shape (rows, J) and ``w`` has shape (rows, J). The objective is
    ``sum w (q - y_j)^2`` over nondecreasing ``y`` in [0, 1]. The optimum is
    constant on consecutive blocks, each block taking its clipped weighted mean,
    so enumerating the 2^(J-1) partitions and keeping the feasible ones is exact.
    """
    J = q.shape[1]
    wq = (w * q).sum(axis=0)
    ws = w.sum(axis=0)
    best, best_y = np.inf, None
    for mask in range(1 << (J - 1)):
        cuts = [0] + [j + 1 for j in range(J - 1) if mask >> j & 1] + [J]
        y = np.empty(J)
        for a, b in zip(cuts[:-1], cuts[1:]):
            y[a:b] = np.clip(wq[a:b].sum() / ws[a:b].sum(), 0.0, 1.0)
        if np.any(np.diff(y) < 0):
            continue
        obj = float((w * (q - y) ** 2).sum())
        if obj < best:
            best, best_y = obj, y
    return best_y, best


def exact_bid_objects(env, p: float, v):
    """Model-implied bid, bid CDF and bid density at costs ``v``.

    ``G(beta(v)) = C(F(v), p) / p``; the density follows from
    ``g(beta(v)) = f*(v) / beta'(v)`` with ``beta' = (beta - v)(-H'/H)``.
    """
    from procurement_entry import BidFunction, win_prob

    v = np.asarray(v, dtype=float)
    c, vals, n = env.copula, env.values, env.n
    x = vals.cdf(v)
    part = c.partials(x, p)
    f = vals.pdf(v)
    lam = 1.0 - c.cdf(x, p)
    dh = -(n - 1) * lam ** (n - 2) * part.C1 * f
    if env.format.value == "soft":
        dh = dh - (1.0 - p) ** (n - 1) * part.C1 * f / p
    h = win_prob(env, p, v)
    beta = BidFunction(env, p)(v)
    slope = (beta - v) * (-dh / h)
    G = c.cdf(x, p) / p
    g = part.C1 * f / p / slope
    return beta, G, g
