"""Entry probabilities recovered from the observed share of active bidders."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, InsufficientDataError, UnidentifiedError

_TOL = 1e-12


def observed_entry_share(p, n: int):
    """Expected share of active bidders among auctions that receive at least two bids.

    At ``p = 0`` the value is the limit ``2 / n``.
    """
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(invalid="ignore", divide="ignore"):
        num = p * (1.0 - q ** (n - 1))
        den = 1.0 - q**n - n * p * q ** (n - 1)
        out = num / den
    return np.where(p > 0, out, 2.0 / n)


def invert_entry_share(share: float, n: int, tol: float = _TOL) -> float:
    """Entry probability whose observed active-bidder share equals ``share``."""
    if n == 2:
        raise UnidentifiedError("entry is not identified with two potential bidders")
    if n < 2:
        raise DomainError("n must be at least 2")
    if share >= 1.0:
        if share > 1.0 + 1e-12:
            raise DomainError("active-bidder share cannot exceed one")
        return 1.0
    if share <= 2.0 / n:
        raise DomainError(f"active-bidder share {share:.4f} is at or below its infimum 2/{n}")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if observed_entry_share(mid, n) < share:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def estimate_entry_probability(dataset, n: int) -> float:
    """Entry probability for auctions with ``n`` potential bidders."""
    cell = dataset.cell(n)
    if not cell:
        raise InsufficientDataError(f"no auctions with n={n}")
    share = float(np.mean([r.n_active / r.n for r in cell]))
    return invert_entry_share(share, n)
