"""Entry equilibria, outcomes, simulation and estimation for first-price procurement auctions
with selective entry under hard or soft bid requirements and reserve prices."""

import os as _os

# cap BLAS threads before numpy loads when the package-level knob is set
_threads = _os.environ.get("PROCUREMENT_ENTRY_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .copula import CopulaModel, Family, spearman_rho, theta_from_rho  # noqa: E402
from .equilibrium import (  # noqa: E402
    AuctionEnvironment,
    BidFunction,
    EquilibriumSolution,
    Format,
    big_lambda,
    bid,
    check_quasiconcavity,
    entrant_profit,
    marginal_profit,
    solve_entry,
    win_prob,
)
from .marginal import ValueDistribution  # noqa: E402
from .outcomes import (  # noqa: E402
    OutcomeReport,
    decompose_theta_effect,
    expected_winning_bid,
    failure_probability,
    outcome_report,
    unconditional_cost,
)
from .simulate import AuctionDataset, AuctionRecord, conditional_cost_draw, simulate_dataset  # noqa: E402

__all__ = [
    "AuctionDataset",
    "AuctionEnvironment",
    "AuctionRecord",
    "BidFunction",
    "CopulaModel",
    "EquilibriumSolution",
    "Family",
    "Format",
    "OutcomeReport",
    "ValueDistribution",
    "big_lambda",
    "bid",
    "check_quasiconcavity",
    "conditional_cost_draw",
    "decompose_theta_effect",
    "entrant_profit",
    "expected_winning_bid",
    "failure_probability",
    "marginal_profit",
    "outcome_report",
    "simulate_dataset",
    "solve_entry",
    "spearman_rho",
    "theta_from_rho",
    "unconditional_cost",
    "win_prob",
]
