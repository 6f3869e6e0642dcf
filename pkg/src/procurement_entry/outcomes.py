"""Failure probabilities, expected winning bids and the effect of signal informativeness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import quadrature
from .copula import Family
from .equilibrium import AuctionEnvironment, Format, _breakpoints, _cdf, _check_p, solve_entry
from .errors import EquilibriumVanishedError, ParameterError, UndefinedOutcomeError

THETA_STEP = 1e-3
P_STEP = 1e-4
_RTOL = 1e-11


@dataclass(frozen=True)
class OutcomeReport:
    """Auction outcomes at entry probability ``p``; ``expected_winning_bid`` is None when undefined."""

    p: float
    prob_bidding: float
    prob_failure: float
    expected_winning_bid: Optional[float]

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "prob_bidding": self.prob_bidding,
            "prob_failure": self.prob_failure,
            "expected_winning_bid": self.expected_winning_bid,
        }


def prob_at_least_two(p: float, n: int) -> float:
    """Probability that at least two of ``n`` potential bidders enter."""
    return 1.0 - (1.0 - p) ** n - n * p * (1.0 - p) ** (n - 1)


def soft_success_probability(p: float, n: int) -> float:
    """Success probability when a sole entrant must beat an equally distributed government draw."""
    return 1.0 - (1.0 - p) ** n - 0.5 * n * p * (1.0 - p) ** (n - 1)


def prob_bidding(env: AuctionEnvironment, p: float) -> float:
    """Probability that a given potential bidder submits a bid."""
    p = float(_check_p(p))
    if env.format is Format.RESERVE:
        return float(_cdf(env, env.values._cdf(np.asarray(env.reserve)), p))
    return p


def failure_probability(env: AuctionEnvironment, p: float) -> float:
    """Probability that the format's award condition is not met."""
    p = float(_check_p(p))
    n = env.n
    if env.format is Format.HARD:
        return (1.0 - p) ** n + n * p * (1.0 - p) ** (n - 1)
    if env.format is Format.SOFT:
        return 1.0 - soft_success_probability(p, n)
    return (1.0 - prob_bidding(env, p)) ** n


def _min_cost_integral(env, p, upper, rtol=_RTOL):
    """``n * int Lambda^{n-1} (1 - (n-1)/n Lambda) dv`` from the lower support point to ``upper``."""
    n = env.n
    x_of = env.values._cdf

    def integrand(v):
        lam = 1.0 - _cdf(env, x_of(v), p)
        return n * lam ** (n - 1) - (n - 1) * lam**n

    return quadrature.integrate(
        integrand, env.values.lower, upper, rtol=rtol, atol=1e-15, points=_breakpoints(env, p)
    )


def expected_winning_bid(env: AuctionEnvironment, p: float, rtol: float = _RTOL) -> float:
    """Expected winning bid conditional on the auction succeeding.

    Raises:
        UndefinedOutcomeError: the auction fails with probability one.
    """
    p = float(_check_p(p))
    n = env.n
    lo, hi = env.values.lower, env.values.upper
    if env.format is Format.HARD:
        success = prob_at_least_two(p, n)
        if success <= 0.0:
            raise UndefinedOutcomeError("no auction receives two bids at this entry probability")
        fail = 1.0 - success
        return (_min_cost_integral(env, p, hi, rtol) + lo - hi * fail) / success
    if env.format is Format.SOFT:
        success = soft_success_probability(p, n)
        if success <= 0.0:
            raise UndefinedOutcomeError("the auction never succeeds at this entry probability")
        q = (1.0 - p) ** (n - 1)
        sole = q * hi * (1.0 + (0.5 * n - 1.0) * p)
        # sole entrants pay their bid only when beating the government draw
        x_of = env.values._cdf
        sq = quadrature.integrate(
            lambda v: _cdf(env, x_of(v), p) ** 2, lo, hi, rtol=rtol, atol=1e-15, points=_breakpoints(env, p)
        )
        sole_bids = 0.5 * n * q * sq / p
        return (lo - sole - sole_bids + _min_cost_integral(env, p, hi, rtol)) / success
    fail = failure_probability(env, p)
    if fail >= 1.0:
        raise UndefinedOutcomeError("no bid falls below the reserve price at this entry probability")
    r = env.reserve
    return (_min_cost_integral(env, p, r, rtol) + lo - r * fail) / (1.0 - fail)


def unconditional_cost(env: AuctionEnvironment, p: float) -> float:
    """Expected procurement cost when a failed auction is completed at the top cost."""
    if env.format is not Format.HARD:
        raise ParameterError("unconditional cost is defined for the hard format")
    p = float(_check_p(p))
    return _min_cost_integral(env, p, env.values.upper) + env.values.lower


def outcome_report(env: AuctionEnvironment, p: Optional[float] = None) -> OutcomeReport:
    """Outcomes at ``p``, or at the selected equilibrium when ``p`` is omitted."""
    if p is None:
        p = solve_entry(env).selected_p
    p = float(p)
    try:
        ewb = expected_winning_bid(env, p)
    except UndefinedOutcomeError:
        ewb = None
    return OutcomeReport(p, prob_bidding(env, p), failure_probability(env, p), ewb)


# --------------------------------------------------------------------------- theta effects


@dataclass(frozen=True)
class ThetaEffect:
    information: float
    cutoff: float
    total: float
    p: float

    @property
    def chain_gap(self) -> float:
        """Relative gap between the full derivative and the sum of its two parts."""
        parts = self.information + self.cutoff
        return abs(self.total - parts) / max(abs(self.total), 1e-300)


def _equilibrium_p(env: AuctionEnvironment) -> float:
    sol = solve_entry(env)
    if sol.selected_p <= 0.0:
        raise EquilibriumVanishedError(f"entry collapses at theta={env.copula.theta}")
    return sol.selected_p


def decompose_theta_effect(env: AuctionEnvironment, h: float = THETA_STEP, h_p: float = P_STEP) -> ThetaEffect:
    """Split the derivative of the expected winning bid in theta into information and cutoff effects.

    The information effect differentiates at fixed entry; the cutoff effect is the
    derivative in ``p`` times the response of equilibrium entry to theta. The
    ``total`` field is the central difference of the equilibrium outcome map and
    serves as a consistency check on the sum.
    """
    fam = env.copula.family
    if fam not in (Family.FRANK, Family.JOE):
        # these families carry no dependence parameter
        p = _equilibrium_p(env)
        return ThetaEffect(0.0, 0.0, 0.0, p)
    theta = env.copula.theta
    floor = 0.0 if fam is Family.FRANK else 1.0
    if theta - h < floor:
        raise ParameterError("theta is too close to the family boundary for central differences")
    env_lo = env.replace(copula=env.copula.with_theta(theta - h))
    env_hi = env.replace(copula=env.copula.with_theta(theta + h))

    p = _equilibrium_p(env)
    p_lo = _equilibrium_p(env_lo)
    p_hi = _equilibrium_p(env_hi)

    information = (expected_winning_bid(env_hi, p) - expected_winning_bid(env_lo, p)) / (2 * h)
    a, b = max(p - h_p, 0.0), min(p + h_p, 1.0)
    dk_dp = (expected_winning_bid(env, b) - expected_winning_bid(env, a)) / (b - a)
    cutoff = dk_dp * (p_hi - p_lo) / (2 * h)
    total = (expected_winning_bid(env_hi, p_hi) - expected_winning_bid(env_lo, p_lo)) / (2 * h)
    return ThetaEffect(float(information), float(cutoff), float(total), float(p))
