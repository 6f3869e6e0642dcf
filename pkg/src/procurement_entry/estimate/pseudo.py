"""Pseudo private costs from bids via the inverse of the equilibrium bidding strategy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..equilibrium import Format
from ..errors import DensityUnderflowError, ParameterError
from .density import BidDensity, bid_ecdf

DENSITY_FLOOR = 1e-8


def eta_hard(p, y, n: int):
    """Markdown factor when a sole bid is rejected: ``(1/p)(1 - p y - (1-p)^(n-1) / (1 - p y)^(n-2))``."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    one = 1.0 - p * y
    return (one - (1.0 - p) ** (n - 1) / one ** (n - 2)) / p


def eta_soft(p, y, n: int):
    """Markdown factor when a sole bid competes with a government draw.

    Derived from the win probability ``(1 - p y)^(n-1) - (1-p)^(n-1) y`` of a bid at
    bid-CDF level ``y``.
    """
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    one = 1.0 - p * y
    q = (1.0 - p) ** (n - 1)
    return (one ** (n - 1) - q * y) / (p * one ** (n - 2) + q / (n - 1))


def eta(fmt, p, y, n: int):
    fmt = Format(fmt)
    if fmt is Format.HARD:
        return eta_hard(p, y, n)
    if fmt is Format.SOFT:
        return eta_soft(p, y, n)
    raise ParameterError("inverse bidding is available for the hard and soft formats only")


def inverse_bid(fmt, b, p, n: int, G, g):
    """Cost implied by bid ``b`` given the bid CDF value ``G`` and density ``g`` at ``b``."""
    return np.asarray(b, dtype=float) - eta(fmt, p, G, n) / ((n - 1) * np.asarray(g, dtype=float))


@dataclass(frozen=True)
class PseudoCosts:
    """Pseudo costs for one cell of bids, aligned with the input order."""

    costs: np.ndarray
    bandwidth: float
    inversion_fraction: float
    underflow: int


def _inversions(bids, costs) -> float:
    order = np.argsort(bids, kind="stable")
    steps = np.diff(costs[order])
    return float(np.mean(steps < 0)) if steps.size else 0.0


def pseudo_costs_cell(
    bids, n: int, p_hat: float, fmt="hard", bandwidth_mode: str = "rot", on_underflow: str = "raise"
) -> PseudoCosts:
    """Invert the first-order condition bid by bid.

    ``on_underflow`` decides what happens when the density estimate at a bid
    falls below ``DENSITY_FLOOR``: ``"raise"`` or ``"clip"`` (use the floor).
    """
    bids = np.asarray(bids, dtype=float)
    dens = BidDensity(bids, mode=bandwidth_mode)
    g = dens(bids)
    low = g < DENSITY_FLOOR
    if np.any(low):
        if on_underflow == "raise":
            raise DensityUnderflowError(
                f"bid density below {DENSITY_FLOOR:g} at {int(low.sum())} bids (n={n})"
            )
        if on_underflow != "clip":
            raise ParameterError(f"unknown underflow policy {on_underflow!r}")
        g = np.where(low, DENSITY_FLOOR, g)
    G = bid_ecdf(bids, bids)
    costs = inverse_bid(fmt, bids, p_hat, n, G, g)
    return PseudoCosts(costs, dens.h, _inversions(bids, costs), int(low.sum()))


def pseudo_costs(dataset, p_hat: dict, fmt="hard", bandwidth_mode: str = "rot", on_underflow: str = "raise") -> dict:
    """Pseudo costs for every cell ``n`` in ``p_hat``, each aligned with ``dataset.bids(n)``."""
    return {
        n: pseudo_costs_cell(dataset.bids(n), n, p, fmt, bandwidth_mode, on_underflow)
        for n, p in sorted(p_hat.items())
    }
