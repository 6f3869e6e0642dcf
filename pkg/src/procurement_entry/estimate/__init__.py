"""Estimation of entry probabilities, the copula parameter, the cost CDF and entry costs from bids."""

from .density import BidDensity, bandwidth, bid_density, bid_ecdf, triweight
from .entry import estimate_entry_probability, invert_entry_share, observed_entry_share
from .gmm import (
    EstimationResult,
    bootstrap_weights,
    entry_cost,
    fhat_star,
    gmm_estimate,
    isotonic_inner,
    q_matrix,
    search_theta,
)
from .pseudo import eta_hard, eta_soft, inverse_bid, pseudo_costs, pseudo_costs_cell

__all__ = [
    "BidDensity",
    "EstimationResult",
    "bandwidth",
    "bid_density",
    "bid_ecdf",
    "bootstrap_weights",
    "entry_cost",
    "estimate_entry_probability",
    "eta_hard",
    "eta_soft",
    "fhat_star",
    "gmm_estimate",
    "invert_entry_share",
    "inverse_bid",
    "isotonic_inner",
    "observed_entry_share",
    "pseudo_costs",
    "pseudo_costs_cell",
    "q_matrix",
    "search_theta",
    "triweight",
]
